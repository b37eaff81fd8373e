#include "bmk/harness/report.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>

#include "bmk/version.hpp"

namespace bmk::harness {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvTable::CsvTable(const std::string& path, std::vector<std::string> columns)
    : out_(path, std::ios::binary), columns_(columns.size()), path_(path) {
  if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
  out_ << "format_version,code_version,preset,model,seed";
  for (const auto& c : columns) out_ << ',' << c;
  out_ << '\n';
}

void CsvTable::row(const Provenance& p, const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::logic_error("csv " + path_ + ": row width does not match the header");
  out_ << kTableVersion << ',' << code_version() << ',' << p.preset << ',' << p.model << ',' << p.seed;
  for (const auto& c : cells) out_ << ',' << c;
  out_ << '\n';
  ++rows_;
  if (!out_) throw std::runtime_error("write failed: " + path_);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

namespace {

std::vector<double> to_vec(const Vector& v) { return {v.data(), v.data() + v.size()}; }
Vector from_vec(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

nlohmann::json norm_to_json(const data::NormStats& s) {
  return {{"state_mean", to_vec(s.state_mean)},
          {"state_std", to_vec(s.state_std)},
          {"control_mean", to_vec(s.control_mean)},
          {"control_std", to_vec(s.control_std)}};
}

data::NormStats norm_from_json(const nlohmann::json& j) {
  data::NormStats s;
  s.state_mean = from_vec(j.at("state_mean").get<std::vector<double>>());
  s.state_std = from_vec(j.at("state_std").get<std::vector<double>>());
  s.control_mean = from_vec(j.at("control_mean").get<std::vector<double>>());
  s.control_std = from_vec(j.at("control_std").get<std::vector<double>>());
  return s;
}

nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& file, const nlohmann::json& flags,
                            const std::vector<std::string>& explicit_keys) {
  nlohmann::json out = defaults;
  if (!file.is_null()) {
    if (!file.is_object()) throw UsageError("config file must hold a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (!defaults.contains(key)) throw UsageError("unknown config key '" + key + "'");
      out[key] = value;
    }
  }
  for (const auto& key : explicit_keys) {
    if (flags.contains(key)) out[key] = flags[key];
  }
  return out;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

StepBands step_bands(const std::vector<std::vector<double>>& runs, double width) {
  StepBands b;
  std::size_t longest = 0;
  for (const auto& r : runs) longest = std::max(longest, r.size());
  for (std::size_t k = 0; k < longest; ++k) {
    std::vector<double> col;
    for (const auto& r : runs) {
      if (k < r.size()) col.push_back(r[k]);
    }
    const auto [m, s] = mean_std(col);
    b.step.push_back(static_cast<double>(k));
    b.mean.push_back(m);
    b.stddev.push_back(s);
    b.half_width.push_back(width * s);
    b.count.push_back(static_cast<int>(col.size()));
  }
  return b;
}

data::Dataset limit_windows(const data::Dataset& ds, std::size_t n_train, std::size_t n_val, std::size_t n_test) {
  data::Dataset out = ds;
  out.windows.clear();
  const std::pair<data::Split, std::size_t> limits[] = {
      {data::Split::Train, n_train}, {data::Split::Val, n_val}, {data::Split::Test, n_test}};
  std::vector<bool> keep(ds.windows.size(), false);
  for (const auto& [split, n] : limits) {
    const auto idx = ds.indices(split);
    if (n == 0 || n >= idx.size()) {
      for (auto i : idx) keep[i] = true;
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) keep[idx[j * idx.size() / n]] = true;
  }
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    if (keep[i]) out.windows.push_back(ds.windows[i]);
  }
  return out;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw UsageError(what + " path is required");
  if (!std::filesystem::is_regular_file(path)) throw UsageError(what + " not found: " + path);
}

void ensure_directory(const std::string& path) {
  if (path.empty()) throw UsageError("output directory is required");
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw std::runtime_error("cannot create " + path + ": " + ec.message());
}

}  // namespace bmk::harness
