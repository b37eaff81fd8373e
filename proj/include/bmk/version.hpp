#pragma once

namespace bmk {

/// `git describe` of the source tree at configure time.
const char* code_version();

}  // namespace bmk
