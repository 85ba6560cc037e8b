#include "chidek/checkpoint.hpp"

#include "chidek/config_io.hpp"
#include "chidek/errors.hpp"

#include <algorithm>
#include <boost/crc.hpp>

#include <bit>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <sstream>

namespace chidek {

namespace {

constexpr const char* kMagic = "chidek-checkpoint";
using Kind = CheckpointError::Kind;

std::uint32_t crc32(const char* data, std::size_t n) {
  boost::crc_32_type crc;
  crc.process_bytes(data, n);
  return crc.checksum();
}

class Writer {
 public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void values(const double* p, std::size_t n) {
    u64(n);
    for (std::size_t i = 0; i < n; ++i) f64(p[i]);
  }
  void raw(const std::string& s) { buf_ += s; }
  std::string& buffer() { return buf_; }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& buf, std::size_t pos, std::size_t end) : buf_(buf), pos_(pos), end_(end) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void values(double* p, std::size_t n, const std::string& what) {
    const std::uint64_t stored = u64();
    if (stored != n) throw CheckpointError(Kind::Shape, "checkpoint value count mismatch in " + what);
    need(8 * n);
    for (std::size_t i = 0; i < n; ++i) p[i] = f64();
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::uint64_t n) const {
    if (n > end_ - pos_) throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
  }
  std::uint64_t get(int bytes) {
    need(static_cast<std::uint64_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }

  const std::string& buf_;
  std::size_t pos_;
  std::size_t end_;
};

struct StoredTensor {
  std::string name;
  std::uint64_t rows, cols;
  std::vector<double> values;
};

Model decode(const std::string& bytes, const ModelConfig* expected) {
  std::istringstream header(bytes);
  std::string line;
  if (!std::getline(header, line) || line != kMagic) throw CheckpointError(Kind::Format, "not a chidek checkpoint");
  if (!std::getline(header, line)) throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
  if (line.rfind("version=", 0) != 0) throw CheckpointError(Kind::Format, "missing checkpoint version");
  if (line != "version=" + std::to_string(kCheckpointVersion)) {
    throw CheckpointError(Kind::Version, "unsupported checkpoint " + line + " (this build reads version=" +
                                             std::to_string(kCheckpointVersion) + ")");
  }
  RunConfig run;
  bool ended = false;
  while (std::getline(header, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError(Kind::Format, "malformed checkpoint header line '" + line + "'");
    try {
      apply_config_entry(run, line.substr(0, eq), line.substr(eq + 1));
    } catch (const Error& e) {
      throw CheckpointError(Kind::Format, std::string("checkpoint header: ") + e.what());
    }
  }
  if (!ended) throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
  try {
    run.model.validate();
  } catch (const Error& e) {
    throw CheckpointError(Kind::Format, std::string("checkpoint config: ") + e.what());
  }

  const std::size_t body = static_cast<std::size_t>(header.tellg());
  if (bytes.size() < body + 4) throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
  const std::size_t payload_end = bytes.size() - 4;

  // Structural parse first so a short file reports truncation; the shapes
  // are checked before the checksum so a hand-edited header names the
  // offending tensor.
  Reader r(bytes, body, bytes.size());
  const std::uint64_t count = r.u64();
  std::vector<StoredTensor> stored;
  for (std::uint64_t i = 0; i < count && i < 100000; ++i) {
    StoredTensor t;
    t.name = r.str();
    t.rows = r.u64();
    t.cols = r.u64();
    const std::uint64_t n = r.u64();
    if (n != t.rows * t.cols) throw CheckpointError(Kind::Format, "inconsistent size for tensor " + t.name);
    if (n > (bytes.size() - r.pos()) / 8) throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
    t.values.resize(n);
    for (auto& v : t.values) v = r.f64();
    stored.push_back(std::move(t));
  }
  std::vector<std::vector<double>> m(stored.size()), v(stored.size());
  for (std::size_t i = 0; i < stored.size(); ++i) {
    m[i].resize(stored[i].values.size());
    v[i].resize(stored[i].values.size());
    r.values(m[i].data(), m[i].size(), stored[i].name + " (first moment)");
    r.values(v[i].data(), v[i].size(), stored[i].name + " (second moment)");
  }
  const std::uint64_t step = r.u64();
  if (r.pos() + 4 > bytes.size()) throw CheckpointError(Kind::Truncated, "checkpoint is truncated");
  if (r.pos() != payload_end) throw CheckpointError(Kind::Format, "trailing bytes after checkpoint payload");

  const ModelConfig& shape_cfg = expected ? *expected : run.model;
  Model model;
  model.config = run.model;
  model.params = init_params(shape_cfg);
  ParamList params = model.params.tensors();
  const std::size_t common = std::min(params.size(), stored.size());
  for (std::size_t i = 0; i < common; ++i) {
    const auto& p = params[i];
    const auto& s = stored[i];
    if (p.name != s.name) {
      throw CheckpointError(Kind::Shape, "expected tensor " + p.name + " but checkpoint has " + s.name);
    }
    if (static_cast<std::uint64_t>(p.rows) != s.rows || static_cast<std::uint64_t>(p.cols) != s.cols) {
      throw CheckpointError(Kind::Shape, "shape mismatch for tensor " + p.name + ": stored " + std::to_string(s.rows) +
                                             "x" + std::to_string(s.cols) + ", expected " + std::to_string(p.rows) +
                                             "x" + std::to_string(p.cols));
    }
  }
  if (params.size() != stored.size()) {
    const std::string& name = params.size() > common ? params[common].name : stored[common].name;
    throw CheckpointError(Kind::Shape, "checkpoint holds " + std::to_string(stored.size()) + " tensors, expected " +
                                           std::to_string(params.size()) + " (first difference at " + name + ")");
  }

  Reader tail(bytes, payload_end, bytes.size());
  if (tail.u32() != crc32(bytes.data(), payload_end)) {
    throw CheckpointError(Kind::Checksum, "checkpoint checksum mismatch (file is corrupted)");
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(stored[i].values.begin(), stored[i].values.end(), params[i].data);
    model.adam.m.push_back(Eigen::Map<Eigen::VectorXd>(m[i].data(), static_cast<Eigen::Index>(m[i].size())));
    model.adam.v.push_back(Eigen::Map<Eigen::VectorXd>(v[i].data(), static_cast<Eigen::Index>(v[i].size())));
  }
  model.adam.step = static_cast<long>(step);
  model.params.encoder.rank_strategy = model.config.rank_strategy;
  return model;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(Kind::Io, "cannot open checkpoint " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
  ModelParams copy = model.params;
  const ParamList params = copy.tensors();
  if (model.adam.m.size() != params.size() || model.adam.v.size() != params.size()) {
    throw ShapeError("optimizer state does not match the parameter list");
  }
  std::ostringstream header;
  header << kMagic << "\nversion=" << kCheckpointVersion << "\n";
  write_model_config(header, model.config);
  header << "end\n";

  Writer w;
  w.raw(header.str());
  w.u64(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    w.u64(static_cast<std::uint64_t>(p.rows));
    w.u64(static_cast<std::uint64_t>(p.cols));
    w.values(p.data, static_cast<std::size_t>(p.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.values(model.adam.m[i].data(), static_cast<std::size_t>(model.adam.m[i].size()));
    w.values(model.adam.v[i].data(), static_cast<std::size_t>(model.adam.v[i].size()));
  }
  w.u64(static_cast<std::uint64_t>(model.adam.step));
  const std::uint32_t crc = crc32(w.buffer().data(), w.buffer().size());
  w.u32(crc);
  return std::move(w.buffer());
}

Model deserialize_checkpoint(const std::string& bytes) { return decode(bytes, nullptr); }

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(Kind::Io, "cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(Kind::Io, "short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path) { return decode(read_all(path), nullptr); }

Model load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  return decode(read_all(path), &expected);
}

}  // namespace chidek
