#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <sstream>

#include "bmk/data/dataset.hpp"

namespace bmk::data {

static_assert(std::endian::native == std::endian::little, "dataset container assumes little-endian host");

namespace {

constexpr char kMagic[4] = {'B', 'K', 'D', 'S'};

std::uint64_t fnv1a(const char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(p[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    buf_.append(b, sizeof(T));
  }
  void put_string(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void put_matrix(const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(m(r, c));
    }
  }
  void put_vector(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) put<double>(v(i));
  }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  Reader(const char* p, std::size_t n) : p_(p), n_(n) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, p_ + off_, sizeof(T));
    off_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s(p_ + off_, len);
    off_ += len;
    return s;
  }
  Matrix get_matrix(Eigen::Index rows, Eigen::Index cols) {
    need(static_cast<std::size_t>(rows * cols) * sizeof(double));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get<double>();
    }
    return m;
  }
  Vector get_vector(Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = get<double>();
    return v;
  }
  std::size_t remaining() const { return n_ - off_; }

 private:
  void need(std::size_t k) const {
    if (k > n_ - off_) throw IntegrityError("dataset file truncated");
  }
  const char* p_;
  std::size_t n_;
  std::size_t off_ = 0;
};

}  // namespace

void write_dataset(const Dataset& ds, const std::string& path) {
  Writer w;
  w.buffer().append(kMagic, 4);
  w.put<std::uint32_t>(kDatasetVersion);
  w.put_string(ds.preset);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.state_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.control_dim));
  w.put<std::uint32_t>(kWindowLength);
  w.put<std::uint64_t>(ds.seed);
  w.put<std::uint64_t>(ds.split_seed);
  w.put<double>(ds.dt);
  w.put<std::uint64_t>(ds.count(Split::Train));
  w.put<std::uint64_t>(ds.count(Split::Val));
  w.put<std::uint64_t>(ds.count(Split::Test));
  w.put<std::uint64_t>(ds.episodes.size());
  w.put<std::uint64_t>(ds.windows.size());
  for (const auto& ep : ds.episodes) {
    w.put<std::uint64_t>(static_cast<std::uint64_t>(ep.rows()));
    w.put<std::uint8_t>(ep.test ? 1 : 0);
    w.put_matrix(ep.states);
    w.put_matrix(ep.controls);
  }
  for (const auto& win : ds.windows) {
    w.put<std::uint32_t>(win.episode);
    w.put<std::uint32_t>(win.start);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(win.split));
  }
  w.put_vector(ds.norm.state_mean);
  w.put_vector(ds.norm.state_std);
  w.put_vector(ds.norm.control_mean);
  w.put_vector(ds.norm.control_std);
  const std::uint64_t sum = fnv1a(w.buffer().data(), w.buffer().size());
  w.put<std::uint64_t>(sum);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError(path + ": not a BKDS dataset");
  }
  std::uint32_t version;
  std::memcpy(&version, bytes.data() + 4, 4);
  if (version != kDatasetVersion) {
    throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
  }
  if (bytes.size() < 16) throw IntegrityError(path + ": dataset file truncated");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (stored != fnv1a(bytes.data(), body)) {
    throw IntegrityError(path + ": checksum mismatch (truncated or corrupted)");
  }

  Reader r(bytes.data() + 8, body - 8);
  Dataset ds;
  ds.preset = r.get_string();
  ds.state_dim = static_cast<int>(r.get<std::uint32_t>());
  ds.control_dim = static_cast<int>(r.get<std::uint32_t>());
  if (r.get<std::uint32_t>() != kWindowLength) throw FormatError(path + ": unexpected window length");
  ds.seed = r.get<std::uint64_t>();
  ds.split_seed = r.get<std::uint64_t>();
  ds.dt = r.get<double>();
  const auto n_train = r.get<std::uint64_t>();
  const auto n_val = r.get<std::uint64_t>();
  const auto n_test = r.get<std::uint64_t>();
  const auto n_episodes = r.get<std::uint64_t>();
  const auto n_windows = r.get<std::uint64_t>();
  if (n_train + n_val + n_test != n_windows) throw IntegrityError(path + ": inconsistent window counts");
  for (std::uint64_t e = 0; e < n_episodes; ++e) {
    Episode ep;
    const auto rows = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    ep.test = r.get<std::uint8_t>() != 0;
    ep.states = r.get_matrix(rows, ds.state_dim);
    ep.controls = r.get_matrix(rows, ds.control_dim);
    ds.episodes.push_back(std::move(ep));
  }
  ds.windows.reserve(n_windows);
  for (std::uint64_t i = 0; i < n_windows; ++i) {
    WindowRef w;
    w.episode = r.get<std::uint32_t>();
    w.start = r.get<std::uint32_t>();
    const auto s = r.get<std::uint8_t>();
    if (s > 2) throw IntegrityError(path + ": bad split label");
    w.split = static_cast<Split>(s);
    if (w.episode >= ds.episodes.size() ||
        w.start + kWindowLength > static_cast<std::uint64_t>(ds.episodes[w.episode].rows())) {
      throw IntegrityError(path + ": window outside its episode");
    }
    ds.windows.push_back(w);
  }
  ds.norm.state_mean = r.get_vector(ds.state_dim);
  ds.norm.state_std = r.get_vector(ds.state_dim);
  ds.norm.control_mean = r.get_vector(ds.control_dim);
  ds.norm.control_std = r.get_vector(ds.control_dim);
  if (r.remaining() != 0) throw IntegrityError(path + ": trailing bytes");
  return ds;
}

std::size_t export_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "format_version,window,split,row,t";
  for (int i = 0; i < ds.state_dim; ++i) out << ",x" << i;
  for (int j = 0; j < ds.control_dim; ++j) out << ",u" << j;
  out << '\n' << std::setprecision(17);
  std::size_t lines = 0;
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    const auto& w = ds.windows[i];
    const auto& ep = ds.episodes[w.episode];
    for (int k = 0; k < kWindowLength; ++k) {
      const Eigen::Index row = w.start + k;
      out << kDatasetVersion << ',' << i << ',' << to_string(w.split) << ',' << k << ','
          << row * ds.dt;
      for (int c = 0; c < ds.state_dim; ++c) out << ',' << ep.states(row, c);
      for (int c = 0; c < ds.control_dim; ++c) out << ',' << ep.controls(row, c);
      out << '\n';
      ++lines;
    }
  }
  return lines;
}

}  // namespace bmk::data
