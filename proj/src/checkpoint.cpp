#include "stvnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "stvnn/config.hpp"

namespace stvnn {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'V', 'N', 'N', 'C', 'K', 'P'};

class Writer {
 public:
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    buf.insert(buf.end(), s.begin(), s.end());
  }
  void matrix(const Matrix& m) {
    u32(static_cast<std::uint32_t>(m.rows()));
    u32(static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) f64(m(i, j));
  }
  void vector(const Vector& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size) : p_(data), end_(data + size) {}
  void need(std::size_t n) const {
    if (static_cast<std::size_t>(end_ - p_) < n) throw CorruptionError("checkpoint: truncated data");
  }
  std::uint8_t u8() {
    need(1);
    return *p_++;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(*p_++) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(*p_++) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(p_), n);
    p_ += n;
    return s;
  }
  Matrix matrix() {
    const std::uint32_t r = u32(), c = u32();
    need(static_cast<std::size_t>(r) * c * 8);
    Matrix m(r, c);
    for (std::uint32_t j = 0; j < c; ++j)
      for (std::uint32_t i = 0; i < r; ++i) m(i, j) = f64();
    return m;
  }
  Vector vector() {
    const std::uint32_t n = u32();
    need(static_cast<std::size_t>(n) * 8);
    Vector v(n);
    for (std::uint32_t i = 0; i < n; ++i) v(i) = f64();
    return v;
  }
  bool done() const { return p_ == end_; }

 private:
  const std::uint8_t* p_;
  const std::uint8_t* end_;
};

void section(Writer& out, const char tag[4], const Writer& payload) {
  for (int i = 0; i < 4; ++i) out.u8(static_cast<std::uint8_t>(tag[i]));
  out.u64(payload.buf.size());
  out.buf.insert(out.buf.end(), payload.buf.begin(), payload.buf.end());
}

Writer encode_params(const NetworkParams& p) {
  Writer w;
  w.u32(static_cast<std::uint32_t>(p.layers.size()));
  for (const auto& bank : p.layers) {
    w.u32(bank.order());
    w.u32(bank.memory());
    w.u32(bank.in_width());
    w.u32(bank.out_width());
    for (const auto& tap : bank.taps()) w.matrix(tap);
  }
  w.u8(p.readout ? 1 : 0);
  if (p.readout) {
    w.matrix(p.readout->w1);
    w.matrix(p.readout->b1);
    w.matrix(p.readout->w2);
    w.matrix(p.readout->b2);
  }
  w.u8(p.readout_mode == ReadoutMode::PerNode ? 0 : 1);
  w.u8(p.nonlinear ? 1 : 0);
  w.f64(p.slope);
  return w;
}

NetworkParams decode_params(Reader& r) {
  NetworkParams p;
  const std::uint32_t layers = r.u32();
  if (layers > 1024) throw CorruptionError("checkpoint: implausible layer count");
  for (std::uint32_t l = 0; l < layers; ++l) {
    const int k = static_cast<int>(r.u32()), t = static_cast<int>(r.u32());
    const int fi = static_cast<int>(r.u32()), fo = static_cast<int>(r.u32());
    if (k < 0 || t < 1 || fi < 1 || fo < 1 || k > 64 || t > 4096) throw CorruptionError("checkpoint: bad layer shape");
    FilterBank bank(k, t, fi, fo);
    for (auto& tap : bank.taps()) {
      Matrix m = r.matrix();
      if (m.rows() != tap.rows() || m.cols() != tap.cols()) throw CorruptionError("checkpoint: tap shape mismatch");
      tap = std::move(m);
    }
    p.layers.push_back(std::move(bank));
  }
  if (r.u8()) {
    Mlp m;
    m.w1 = r.matrix();
    m.b1 = r.matrix();
    m.w2 = r.matrix();
    m.b2 = r.matrix();
    p.readout = std::move(m);
  }
  p.readout_mode = r.u8() == 0 ? ReadoutMode::PerNode : ReadoutMode::Flattened;
  p.nonlinear = r.u8() != 0;
  p.slope = r.f64();
  return p;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelCheckpoint& c) {
  Writer out;
  for (char ch : kMagic) out.u8(static_cast<std::uint8_t>(ch));
  out.u32(kCheckpointVersion);
  out.u64(fnv1a(c.config_text));
  out.u32(5);

  Writer conf;
  conf.str(c.config_text);
  conf.f64(c.options.eta);
  conf.u32(static_cast<std::uint32_t>(c.options.horizon));
  conf.u32(static_cast<std::uint32_t>(c.options.lag_features));
  conf.u8(c.options.update_params ? 1 : 0);
  conf.u8(c.options.update_covariance ? 1 : 0);
  conf.u8(c.options.fixed_covariance ? 1 : 0);
  if (c.options.fixed_covariance) conf.matrix(*c.options.fixed_covariance);
  section(out, "CONF", conf);

  section(out, "NETP", encode_params(c.params));

  Writer cov;
  const bool stationary = std::holds_alternative<Stationary>(c.covariance.mode);
  cov.u8(stationary ? 0 : 1);
  cov.f64(stationary ? 0.0 : std::get<Nonstationary>(c.covariance.mode).gamma);
  cov.u64(c.covariance.count);
  cov.vector(c.covariance.mean);
  cov.matrix(c.covariance.cov);
  section(out, "COVS", cov);

  Writer stdz;
  stdz.vector(c.standardizer.mean);
  stdz.vector(c.standardizer.scale);
  section(out, "STDZ", stdz);

  Writer hist;
  hist.u64(c.steps);
  hist.u32(static_cast<std::uint32_t>(c.history.size()));
  for (const auto& v : c.history) hist.vector(v);
  hist.u32(static_cast<std::uint32_t>(c.pending.size()));
  for (const auto& p : c.pending) {
    hist.u64(p.target_step);
    hist.matrix(p.prediction);
  }
  section(out, "HIST", hist);

  out.u64(fnv1a(out.buf.data(), out.buf.size()));
  return out.buf;
}

ModelCheckpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 + 4 + 8 + 4 + 8) throw CorruptionError("checkpoint: file too short");
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw CorruptionError("checkpoint: bad magic");
  const std::size_t body = bytes.size() - 8;
  Reader trailer(bytes.data() + body, 8);
  if (trailer.u64() != fnv1a(bytes.data(), body)) throw CorruptionError("checkpoint: checksum mismatch");

  Reader r(bytes.data() + 8, body - 8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CorruptionError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t config_hash = r.u64();
  const std::uint32_t sections = r.u32();

  ModelCheckpoint c;
  bool seen[5] = {false, false, false, false, false};
  for (std::uint32_t s = 0; s < sections; ++s) {
    char tag[5] = {0, 0, 0, 0, 0};
    for (int i = 0; i < 4; ++i) tag[i] = static_cast<char>(r.u8());
    const std::uint64_t len = r.u64();
    r.need(len);
    std::vector<std::uint8_t> payload(len);
    for (auto& b : payload) b = r.u8();
    Reader p(payload.data(), payload.size());
    const std::string t(tag);
    if (t == "CONF") {
      c.config_text = p.str();
      c.options.eta = p.f64();
      c.options.horizon = static_cast<int>(p.u32());
      c.options.lag_features = static_cast<int>(p.u32());
      c.options.update_params = p.u8() != 0;
      c.options.update_covariance = p.u8() != 0;
      if (p.u8()) c.options.fixed_covariance = p.matrix();
      seen[0] = true;
    } else if (t == "NETP") {
      c.params = decode_params(p);
      seen[1] = true;
    } else if (t == "COVS") {
      const std::uint8_t mode = p.u8();
      const double gamma = p.f64();
      c.covariance.mode = mode == 0 ? UpdateMode(Stationary{}) : UpdateMode(Nonstationary{gamma});
      c.covariance.count = p.u64();
      c.covariance.mean = p.vector();
      c.covariance.cov = p.matrix();
      seen[2] = true;
    } else if (t == "STDZ") {
      c.standardizer.mean = p.vector();
      c.standardizer.scale = p.vector();
      seen[3] = true;
    } else if (t == "HIST") {
      c.steps = p.u64();
      const std::uint32_t nh = p.u32();
      for (std::uint32_t i = 0; i < nh; ++i) c.history.push_back(p.vector());
      const std::uint32_t np = p.u32();
      for (std::uint32_t i = 0; i < np; ++i) {
        PendingForecast f;
        f.target_step = p.u64();
        f.prediction = p.matrix();
        c.pending.push_back(std::move(f));
      }
      seen[4] = true;
    } else {
      throw CorruptionError("checkpoint: unknown section '" + t + "'");
    }
    if (!p.done()) throw CorruptionError("checkpoint: section '" + t + "' has trailing bytes");
  }
  if (!r.done()) throw CorruptionError("checkpoint: trailing bytes");
  for (bool b : seen)
    if (!b) throw CorruptionError("checkpoint: missing section");
  if (fnv1a(c.config_text) != config_hash) throw CorruptionError("checkpoint: config hash mismatch");
  return c;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void save_checkpoint(const std::string& path, const ModelCheckpoint& ckpt) {
  write_file_bytes(path, encode_checkpoint(ckpt));
}

ModelCheckpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

ModelCheckpoint snapshot(const NetworkForecaster& model, const Standardizer& standardizer,
                         const std::string& config_text) {
  ModelCheckpoint c;
  c.config_text = config_text;
  c.params = model.params();
  c.covariance = model.covariance();
  c.standardizer = standardizer;
  c.options = model.options();
  c.history = model.history();
  c.pending = model.pending();
  c.steps = model.steps();
  return c;
}

NetworkForecaster restore_forecaster(const ModelCheckpoint& ckpt) {
  NetworkForecaster f(ckpt.params, ckpt.covariance, ckpt.options);
  f.restore(ckpt.history, ckpt.pending, ckpt.steps);
  return f;
}

}  // namespace stvnn
