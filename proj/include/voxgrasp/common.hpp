#pragma once

#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <mutex>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vg {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts need byte swaps");

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

// I/O failures carry the offending path (and byte offset when known).
class io_error : public std::runtime_error {
 public:
  io_error(const std::string& path, const std::string& what, long offset = -1)
      : std::runtime_error(offset >= 0
                               ? path + ": " + what + " (offset " + std::to_string(offset) + ")"
                               : path + ": " + what) {}
};

class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// CRC-32 (IEEE 802.3 polynomial, reflected)
// ---------------------------------------------------------------------------

inline std::uint32_t crc32_update(std::uint32_t crc, const void* data, std::size_t n) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  const auto* p = static_cast<const unsigned char*>(data);
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline std::uint32_t crc32(const void* data, std::size_t n) { return crc32_update(0, data, n); }

// ---------------------------------------------------------------------------
// Binary file streams with running checksum
// ---------------------------------------------------------------------------

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "wb");
    if (!f_) throw io_error(path, "cannot open for writing");
  }
  ~BinaryWriter() {
    if (f_) std::fclose(f_);
  }
  BinaryWriter(const BinaryWriter&) = delete;
  BinaryWriter& operator=(const BinaryWriter&) = delete;

  void bytes(const void* p, std::size_t n) {
    if (std::fwrite(p, 1, n, f_) != n) throw io_error(path_, "write failed");
    crc_ = crc32_update(crc_, p, n);
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void f32s(const float* p, std::size_t n) { bytes(p, n * 4); }

  // Appends the CRC of everything written so far; call last.
  void finish_crc() {
    std::uint32_t c = crc_;
    if (std::fwrite(&c, 1, 4, f_) != 4) throw io_error(path_, "write failed");
  }
  std::uint32_t crc() const { return crc_; }

 private:
  std::string path_;
  std::FILE* f_ = nullptr;
  std::uint32_t crc_ = 0;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path) {
    f_ = std::fopen(path.c_str(), "rb");
    if (!f_) throw io_error(path, "cannot open for reading");
  }
  ~BinaryReader() {
    if (f_) std::fclose(f_);
  }
  BinaryReader(const BinaryReader&) = delete;
  BinaryReader& operator=(const BinaryReader&) = delete;

  void bytes(void* p, std::size_t n) {
    long at = std::ftell(f_);
    if (std::fread(p, 1, n, f_) != n) throw io_error(path_, "truncated file", at);
    crc_ = crc32_update(crc_, p, n);
  }
  std::uint8_t u8() {
    std::uint8_t v;
    bytes(&v, 1);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    bytes(&v, 8);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  void f32s(float* p, std::size_t n) { bytes(p, n * 4); }

  void expect_magic(const char magic[4]) {
    char m[4];
    bytes(m, 4);
    if (std::memcmp(m, magic, 4) != 0) throw io_error(path_, "bad magic", 0);
  }
  void expect_version(std::uint32_t want) {
    std::uint32_t v = u32();
    if (v != want)
      throw io_error(path_, "version mismatch: found " + std::to_string(v) + ", expected " +
                                std::to_string(want));
  }
  // Compares the stored trailing CRC against the running checksum; call last.
  void verify_crc() {
    std::uint32_t want = crc_;
    std::uint32_t got;
    long at = std::ftell(f_);
    if (std::fread(&got, 1, 4, f_) != 4) throw io_error(path_, "truncated file", at);
    if (got != want) throw io_error(path_, "checksum failure");
  }

 private:
  std::string path_;
  std::FILE* f_ = nullptr;
  std::uint32_t crc_ = 0;
};

// ---------------------------------------------------------------------------
// Deterministic RNG. Thin wrapper over mt19937_64 with fixed mappings so
// streams are identical across standard library implementations.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}
  Rng(std::uint64_t seed, std::uint64_t stream) : eng_(splitmix64(seed ^ splitmix64(stream))) {}

  std::uint64_t next_u64() { return eng_(); }

  // in [0, 1)
  double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // in [0, n)
  std::uint64_t uniform_int(std::uint64_t n) {
    return std::uint64_t((static_cast<unsigned __int128>(eng_()) * n) >> 64);
  }

  // Fisher-Yates over indices [0, n)
  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Bounded worker-thread parallel_for. The grain is a contiguous index range;
// callers must write disjoint outputs. Nested calls run inline so worker
// counts never multiply, keeping results identical for any --threads value.
// ---------------------------------------------------------------------------

namespace detail {
inline std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{0};  // 0 = hardware_concurrency
  return cap;
}
inline thread_local bool in_parallel_region = false;
}  // namespace detail

inline void set_max_threads(int n) { detail::thread_cap().store(n); }
inline int max_threads() {
  int cap = detail::thread_cap().load();
  if (cap > 0) return cap;
  unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

template <typename Fn>  // Fn(std::size_t begin, std::size_t end)
void parallel_for(std::size_t n, Fn&& fn) {
  int workers = max_threads();
  if (n == 0) return;
  if (workers <= 1 || n == 1 || detail::in_parallel_region) {
    detail::in_parallel_region = true;
    fn(std::size_t(0), n);
    detail::in_parallel_region = false;
    return;
  }
  std::size_t chunks = std::min<std::size_t>(std::size_t(workers), n);
  std::vector<std::thread> pool;
  pool.reserve(chunks);
  std::exception_ptr err;
  std::mutex err_mu;
  for (std::size_t c = 0; c < chunks; ++c) {
    std::size_t b = n * c / chunks, e = n * (c + 1) / chunks;
    pool.emplace_back([&, b, e] {
      detail::in_parallel_region = true;
      try {
        fn(b, e);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Pairwise (tree) summation: accuracy plus an execution-order-independent
// result for pooled reductions.
// ---------------------------------------------------------------------------

template <typename T>
T pairwise_sum(const T* p, std::size_t n) {
  if (n <= 8) {
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) s += p[i];
    return s;
  }
  std::size_t h = n / 2;
  return pairwise_sum(p, h) + pairwise_sum(p + h, n - h);
}

template <typename T>
T pairwise_sum(const std::vector<T>& v) {
  return pairwise_sum(v.data(), v.size());
}

}  // namespace vg
