#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "bmk/data/dataset.hpp"

namespace bmk::harness {

inline constexpr std::uint32_t kTableVersion = 1;

/// Invalid invocation: unknown preset, bad flag value, missing input file.
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Columns prefixed to every table row.
struct Provenance {
  std::string preset;
  std::string model;
  std::uint64_t seed = 0;
};

/// Shortest round-trip representation; "nan" / "inf" for non-finite values.
std::string format_number(double v);

/// CSV with a header row. Each row starts with format_version, code_version,
/// preset, model, seed.
class CsvTable {
 public:
  CsvTable(const std::string& path, std::vector<std::string> columns);
  void row(const Provenance& p, const std::vector<std::string>& cells);
  std::size_t rows() const { return rows_; }

 private:
  std::ofstream out_;
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string path_;
};

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

nlohmann::json norm_to_json(const data::NormStats& s);
data::NormStats norm_from_json(const nlohmann::json& j);

/// Layers `file` and then the explicitly given flags over `defaults`. Keys of
/// `file` must exist in `defaults`.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& file, const nlohmann::json& flags,
                            const std::vector<std::string>& explicit_keys);

/// Mean and standard deviation across episodes at every step; episodes that
/// ended earlier drop out of later steps.
struct StepBands {
  std::vector<double> step, mean, stddev, half_width;
  std::vector<int> count;
};
StepBands step_bands(const std::vector<std::vector<double>>& runs, double width = 0.3);

/// Population mean and standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& v);

/// Keeps at most n windows per split (0 keeps all), evenly spaced in window order.
data::Dataset limit_windows(const data::Dataset& ds, std::size_t n_train, std::size_t n_val, std::size_t n_test);

void require_file(const std::string& path, const std::string& what);
void ensure_directory(const std::string& path);

}  // namespace bmk::harness
