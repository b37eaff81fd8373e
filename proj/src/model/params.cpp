#include "bmk/model/params.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bmk/data/rng.hpp"

namespace bmk::model {

std::string to_string(ModelKind k) { return k == ModelKind::Linear ? "linear" : "bilinear"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "linear") return ModelKind::Linear;
  if (s == "bilinear") return ModelKind::Bilinear;
  throw std::invalid_argument("unknown model kind '" + s + "' (expected linear or bilinear)");
}

Hyper default_hyper(const std::string& preset, ModelKind kind) {
  Hyper h;
  h.kind = kind;
  const bool rscp = preset.rfind("rscp", 0) == 0;
  h.state_dim = rscp ? 9 : 4;
  h.control_dim = rscp ? 3 : 1;
  h.latent_dim = rscp ? 15 : 8;
  h.rank = h.latent_dim;
  h.conv_kernel = rscp ? 5 : 15;
  h.lambda_s = kind == ModelKind::Bilinear ? 0.01 : 0.0;
  return h;
}

std::size_t ModelParams::tensor_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix&) { ++n; });
  return n;
}

std::size_t ModelParams::scalar_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const Matrix& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

ParamVector flatten(const ModelParams& p) {
  ParamVector out;
  p.visit([&](const std::string&, const Matrix& m) { out.push_back(m); });
  return out;
}

void assign(ModelParams& p, const ParamVector& values) {
  std::size_t i = 0;
  p.visit([&](const std::string& name, Matrix& m) {
    if (i >= values.size() || values[i].rows() != m.rows() || values[i].cols() != m.cols()) {
      throw DimensionError("assign: tensor " + name + " shape mismatch");
    }
    m = values[i++];
  });
  if (i != values.size()) throw DimensionError("assign: tensor count mismatch");
}

ParamVector zeros_like(const ModelParams& p) {
  ParamVector out;
  p.visit([&](const std::string&, const Matrix& m) { out.push_back(Matrix::Zero(m.rows(), m.cols())); });
  return out;
}

namespace {

Matrix uniform(data::CounterRng& rng, Eigen::Index r, Eigen::Index c, double bound) {
  Matrix m(r, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = rng.uniform(-bound, bound);
  }
  return m;
}

void linear_layer(data::CounterRng& rng, Matrix& w, Matrix& b, int in, int out) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  w = uniform(rng, out, in, bound);
  b = uniform(rng, out, 1, bound);
}

Head make_head(data::CounterRng& rng, int in, int hidden, int out) {
  Head h;
  linear_layer(rng, h.w1, h.b1, in, hidden);
  linear_layer(rng, h.w2, h.b2, hidden, out);
  return h;
}

}  // namespace

ModelParams init_params(const Hyper& h, std::uint64_t seed) {
  if (h.conv_length() < 1) throw std::invalid_argument("init_params: conv kernel longer than lookback");
  data::CounterRng rng(seed, 0x6d6f64656cULL);
  ModelParams p;
  p.hyper = h;
  const int n = h.state_dim, m = h.control_dim, dz = h.latent_dim, hid = h.hidden;
  linear_layer(rng, p.enc_w1, p.enc_b1, n, hid);
  linear_layer(rng, p.enc_w2, p.enc_b2, hid, dz);
  p.a_pre.resize(dz, 1);
  for (int i = 0; i < dz; ++i) p.a_pre(i, 0) = -(i + 1.0);
  const double conv_bound = 1.0 / std::sqrt(static_cast<double>(h.conv_kernel));
  p.conv_w = uniform(rng, h.channels(), h.conv_kernel, conv_bound);
  p.conv_b = uniform(rng, h.channels(), 1, conv_bound);
  linear_layer(rng, p.shared_w, p.shared_b, h.channels() * h.conv_length(), hid);
  p.delta = make_head(rng, hid, hid, dz);
  p.bc = make_head(rng, hid, hid, dz * m);
  p.dec = make_head(rng, hid, hid, n * dz);
  if (h.bilinear()) {
    for (int i = 0; i < m; ++i) {
      p.coupling_l.push_back(Matrix::Zero(dz, h.rank));
      p.coupling_r.push_back(uniform(rng, dz, h.rank, 1e-4));
    }
  }
  return p;
}

ModelParams to_linear(const ModelParams& p) {
  ModelParams q = p;
  q.hyper.kind = ModelKind::Linear;
  q.hyper.lambda_s = 0.0;
  q.coupling_l.clear();
  q.coupling_r.clear();
  return q;
}

std::vector<Matrix> coupling_generators(const ModelParams& p) {
  std::vector<Matrix> g;
  for (std::size_t i = 0; i < p.coupling_l.size(); ++i) {
    g.push_back(p.coupling_l[i] * p.coupling_r[i].transpose());
  }
  return g;
}

double g_norm(const ModelParams& p) {
  double s = 0.0;
  for (const auto& g : coupling_generators(p)) s += g.squaredNorm();
  return std::sqrt(s);
}

// ---- checkpoint container ------------------------------------------------

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian host");

namespace {

constexpr char kMagic[4] = {'B', 'K', 'C', 'P'};

std::uint64_t fnv1a(const char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(p[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

template <typename T>
void put(std::string& buf, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.append(b, sizeof(T));
}

struct Cursor {
  const std::string& bytes;
  std::size_t off;
  std::size_t end;
  template <typename T>
  T get() {
    if (off + sizeof(T) > end) throw CheckpointError("checkpoint truncated");
    T v;
    std::memcpy(&v, bytes.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (off + n > end) throw CheckpointError("checkpoint truncated");
    std::string s = bytes.substr(off, n);
    off += n;
    return s;
  }
};

}  // namespace

void write_checkpoint(const ModelParams& p, const std::string& path) {
  std::string buf(kMagic, 4);
  const Hyper& h = p.hyper;
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint32_t>(buf, h.kind == ModelKind::Linear ? 0 : 1);
  for (int v : {h.state_dim, h.control_dim, h.latent_dim, h.rank, h.conv_kernel, h.hidden, h.lookback,
                h.horizon}) {
    put<std::int32_t>(buf, v);
  }
  for (double v : {h.lambda_s, h.margin, h.coupling_period, h.inst_eps}) put<double>(buf, v);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(p.tensor_count()));
  p.visit([&](const std::string& name, const Matrix& m) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) put<double>(buf, m(i, j));
    }
  });
  put<std::uint64_t>(buf, fnv1a(buf.data(), buf.size()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("failed writing " + path);
}

ModelParams read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CheckpointError(path + ": not a BKCP checkpoint");
  }
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 8, 8);
  if (stored != fnv1a(bytes.data(), bytes.size() - 8)) throw CheckpointError(path + ": checksum mismatch");
  Cursor c{bytes, 4, bytes.size() - 8};
  if (c.get<std::uint32_t>() != kCheckpointVersion) throw CheckpointError(path + ": unsupported version");
  Hyper h;
  h.kind = c.get<std::uint32_t>() == 0 ? ModelKind::Linear : ModelKind::Bilinear;
  for (int* v : {&h.state_dim, &h.control_dim, &h.latent_dim, &h.rank, &h.conv_kernel, &h.hidden,
                 &h.lookback, &h.horizon}) {
    *v = c.get<std::int32_t>();
  }
  for (double* v : {&h.lambda_s, &h.margin, &h.coupling_period, &h.inst_eps}) *v = c.get<double>();
  ModelParams p = init_params(h, 0);
  const auto count = c.get<std::uint32_t>();
  if (count != p.tensor_count()) throw CheckpointError(path + ": tensor count mismatch");
  p.visit([&](const std::string& name, Matrix& m) {
    if (c.get_string() != name) throw CheckpointError(path + ": unexpected tensor order at " + name);
    const auto r = c.get<std::uint32_t>(), k = c.get<std::uint32_t>();
    if (r != m.rows() || k != m.cols()) throw CheckpointError(path + ": shape mismatch for " + name);
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = c.get<double>();
    }
  });
  if (c.off != c.end) throw CheckpointError(path + ": trailing bytes");
  return p;
}

}  // namespace bmk::model
