#pragma once

// Shared plumbing: dense column-major matrices, binary (de)serialization
// helpers with checksums, flat key=value config files, and a chunked
// parallel-for used by the batch fan-out paths.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace whai {

inline constexpr const char* kLibraryVersion = "0.1.0";

using Vector = std::vector<double>;

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

// Dense column-major matrix. Topic matrices are stored with one topic per
// column, so column views are contiguous.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // y = A x
  void mul_vec(std::span<const double> x, std::span<double> y) const {
    require(x.size() == cols_ && y.size() == rows_, "matrix-vector size mismatch");
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t j = 0; j < cols_; ++j) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      const double* cj = data_.data() + j * rows_;
      for (std::size_t i = 0; i < rows_; ++i) y[i] += cj[i] * xj;
    }
  }

  // y = A^T x
  void tmul_vec(std::span<const double> x, std::span<double> y) const {
    require(x.size() == rows_ && y.size() == cols_, "matrix^T-vector size mismatch");
    for (std::size_t j = 0; j < cols_; ++j) {
      const double* cj = data_.data() + j * rows_;
      double acc = 0.0;
      for (std::size_t i = 0; i < rows_; ++i) acc += cj[i] * x[i];
      y[j] = acc;
    }
  }

  Vector col_sums() const {
    Vector s(cols_, 0.0);
    for (std::size_t j = 0; j < cols_; ++j) {
      const double* cj = data_.data() + j * rows_;
      double acc = 0.0;
      for (std::size_t i = 0; i < rows_; ++i) acc += cj[i];
      s[j] = acc;
    }
    return s;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Binary stream helpers. Everything on disk is little-endian; float64 tensors
// are written row-major regardless of the in-memory layout.
// ---------------------------------------------------------------------------

class Fnv1a {
 public:
  void update(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= b[i];
      h_ *= 0x100000001b3ull;
    }
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ull;
};

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}

  void bytes(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    sum_.update(p, n);
  }
  void u32(std::uint32_t v) { put_le(v); }
  void u64(std::uint64_t v) { put_le(v); }
  void i64(std::int64_t v) { put_le(static_cast<std::uint64_t>(v)); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_le(bits);
  }
  void str(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void vec(const Vector& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  // Row-major on disk.
  void matrix(const Matrix& m) {
    u64(m.rows());
    u64(m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) f64(m(i, j));
  }
  // Appends the running checksum; call last.
  void finish() {
    std::uint64_t d = sum_.digest();
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((d >> (8 * i)) & 0xff);
    os_.write(reinterpret_cast<const char*>(buf), 8);
    require(os_.good(), "write failure");
  }

 private:
  template <typename T>
  void put_le(T v) {
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
      buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    bytes(buf, sizeof(T));
  }

  std::ostream& os_;
  Fnv1a sum_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}

  void bytes(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n)
      fail(what_ + ": truncated file");
    sum_.update(p, n);
  }
  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(get_le<std::uint64_t>()); }
  double f64() {
    std::uint64_t bits = get_le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
  std::string str() {
    std::uint64_t n = u64();
    if (n > (1ull << 32)) fail(what_ + ": corrupt string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  Vector vec() {
    std::uint64_t n = u64();
    Vector v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  Matrix matrix() {
    std::uint64_t r = u64();
    std::uint64_t c = u64();
    if (r > (1ull << 24) || c > (1ull << 24)) fail(what_ + ": corrupt matrix dims");
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) m(i, j) = f64();
    return m;
  }
  // Verifies the trailing checksum written by BinaryWriter::finish().
  void finish() {
    std::uint64_t expected = sum_.digest();
    unsigned char buf[8];
    is_.read(reinterpret_cast<char*>(buf), 8);
    if (is_.gcount() != 8) fail(what_ + ": truncated file");
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    if (stored != expected) fail(what_ + ": checksum mismatch (corrupt file)");
  }

 private:
  template <typename T>
  T get_le() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
    return v;
  }

  std::istream& is_;
  std::string what_;
  Fnv1a sum_;
};

// ---------------------------------------------------------------------------
// Flat key=value config text. Lines are "key = value"; '#' starts a comment.
// Consumers declare the keys they understand; leftovers are an error.
// ---------------------------------------------------------------------------

class KvConfig {
 public:
  KvConfig() = default;

  static KvConfig parse(std::istream& is) {
    KvConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      std::string trimmed = trim(line);
      if (trimmed.empty()) continue;
      auto eq = trimmed.find('=');
      require(eq != std::string::npos,
              "config line " + std::to_string(lineno) + ": expected key=value");
      std::string key = trim(trimmed.substr(0, eq));
      std::string val = trim(trimmed.substr(eq + 1));
      require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = val;
    }
    return cfg;
  }

  static KvConfig parse_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open config file: " + path);
    return parse(is);
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& val) { values_[key] = val; }

  std::string get_str(const std::string& key, const std::string& fallback) {
    touch(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }
  std::int64_t get_i64(const std::string& key, std::int64_t fallback) {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_int(key, it->second);
  }
  double get_f64(const std::string& key, double fallback) {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second, &pos);
      require(pos == it->second.size(), "trailing junk");
      return v;
    } catch (const std::exception&) {
      fail("config key '" + key + "': not a number: " + it->second);
    }
  }
  bool get_bool(const std::string& key, bool fallback) {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    fail("config key '" + key + "': expected true/false: " + it->second);
  }
  std::vector<std::int64_t> get_i64_list(const std::string& key,
                                         std::vector<std::int64_t> fallback) {
    touch(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::int64_t> out;
    std::stringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      out.push_back(parse_int(key, tok));
    }
    require(!out.empty(), "config key '" + key + "': empty list");
    return out;
  }

  // Errors out if the file had keys nobody asked for.
  void reject_unknown_keys() const {
    for (const auto& [k, v] : values_) {
      (void)v;
      if (touched_.find(k) == touched_.end()) fail("unknown config key: " + k);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
  }

 private:
  static std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }
  static std::int64_t parse_int(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      long long v = std::stoll(s, &pos);
      require(pos == s.size(), "trailing junk");
      return v;
    } catch (const std::exception&) {
      fail("config key '" + key + "': not an integer: " + s);
    }
  }
  void touch(const std::string& key) const { touched_.insert(key); }

  std::map<std::string, std::string> values_;
  mutable std::set<std::string> touched_;
};

// parallel_for(n, threads, fn): fn(begin, end, chunk_index) over contiguous
// chunks. threads == 1 runs inline; chunk boundaries depend only on
// (n, threads) so reductions done in chunk order are reproducible for a
// fixed thread count.
inline void parallel_for(std::size_t n, std::size_t threads,
                         const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (threads <= 1 || n == 1) {
    fn(0, n, 0);
    return;
  }
  std::size_t nchunks = std::min(threads, n);
  std::size_t base = n / nchunks, rem = n % nchunks;
  std::vector<std::thread> pool;
  pool.reserve(nchunks);
  std::size_t begin = 0;
  for (std::size_t c = 0; c < nchunks; ++c) {
    std::size_t len = base + (c < rem ? 1 : 0);
    std::size_t end = begin + len;
    pool.emplace_back([&fn, begin, end, c] { fn(begin, end, c); });
    begin = end;
  }
  for (auto& t : pool) t.join();
}

}  // namespace whai
