#include "bmk/version.hpp"

namespace bmk {

const char* code_version() { return BMK_GIT_DESCRIBE; }

}  // namespace bmk
