#include "sealpose/param_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sealpose/errors.hpp"

namespace sealpose {

namespace {

constexpr char kMagic[8] = {'S', 'E', 'A', 'L', 'P', 'R', 'M', '1'};
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void read_doubles(double* dst, std::size_t n) {
    need(n * sizeof(double));
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError(origin_ + ": truncated checkpoint");
  }
  const std::string& bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace

Matrix& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(Entry{name, Matrix::Zero(rows, cols)});
  return entries_.back().value;
}

Matrix& ParamStore::add_uniform(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                double bound, Rng& rng) {
  Matrix& m = add(name, rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-bound, bound);
  }
  return m;
}

const Matrix& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].value;
}

Matrix& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return entries_[it->second].value;
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const Entry& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

ParamStore ParamStore::subset(const std::string& prefix) const {
  ParamStore out(seed_);
  for (const Entry& e : entries_) {
    if (e.name.starts_with(prefix)) out.add(e.name, e.value.rows(), e.value.cols()) = e.value;
  }
  return out;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (seed_ != other.seed_ || entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Entry& a = entries_[i];
    const Entry& b = other.entries_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) {
      return false;
    }
    if (std::memcmp(a.value.data(), b.value.data(), sizeof(double) * a.value.size()) != 0) {
      return false;
    }
  }
  return true;
}

// Layout: magic[8] | version u32 | seed u64 | count u64 |
//   count x (name_len u32 | name | rows u64 | cols u64 | rows*cols f64)
std::string ParamStore::serialize() const {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  put<std::uint64_t>(out, seed_);
  put<std::uint64_t>(out, entries_.size());
  for (const Entry& e : entries_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out.append(e.name);
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(e.value.cols()));
    out.append(reinterpret_cast<const char*>(e.value.data()), sizeof(double) * e.value.size());
  }
  return out;
}

ParamStore ParamStore::deserialize(const std::string& bytes, const std::string& origin) {
  Reader in(bytes, origin);
  if (in.get_string(sizeof(kMagic)) != std::string(kMagic, sizeof(kMagic))) {
    throw IoError(origin + ": not a parameter checkpoint (bad magic)");
  }
  const auto version = in.get<std::uint32_t>();
  if (version != kFormatVersion) {
    throw IoError(origin + ": unsupported checkpoint version " + std::to_string(version));
  }
  ParamStore store(in.get<std::uint64_t>());
  const auto count = in.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = in.get<std::uint32_t>();
    const std::string name = in.get_string(name_len);
    const auto rows = static_cast<Eigen::Index>(in.get<std::uint64_t>());
    const auto cols = static_cast<Eigen::Index>(in.get<std::uint64_t>());
    Matrix& m = store.add(name, rows, cols);
    in.read_doubles(m.data(), static_cast<std::size_t>(rows * cols));
  }
  if (!in.done()) throw IoError(origin + ": trailing bytes after checkpoint payload");
  return store;
}

void ParamStore::save(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(path.string() + ": write failed");
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot open checkpoint");
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize(ss.str(), path.string());
}

ParamBinding::ParamBinding(ad::Tape& tape, const ParamStore& store, bool trainable) : tape_(&tape) {
  for (const auto& e : store.entries()) {
    vars_.emplace(e.name, trainable ? tape.parameter(e.name, e.value) : tape.constant(e.value));
  }
}

ad::Var ParamBinding::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ContractError("parameter '" + name + "' not bound");
  return it->second;
}

}  // namespace sealpose
