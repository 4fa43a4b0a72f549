// Shared plumbing: shapes, errors, seeded RNG, thread control, CSV output.
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace edgenav {

using Shape = std::vector<int64_t>;

// 64-byte-aligned storage for numeric buffers. Eigen peels loops to the first
// aligned element at runtime; with every buffer identically aligned the SIMD
// split is the same on every run, keeping results bit-reproducible.
template <typename T, size_t Align = 64>
struct AlignedAlloc {
  using value_type = T;
  AlignedAlloc() = default;
  template <class U>
  AlignedAlloc(const AlignedAlloc<U, Align>&) {}
  T* allocate(size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(Align)));
  }
  void deallocate(T* p, size_t) noexcept {
    ::operator delete(p, std::align_val_t(Align));
  }
  // default construction is a no-op: resize() leaves numeric buffers
  // uninitialized, and op kernels overwrite every output element anyway.
  // Explicit fills (assign, resize with a value) still initialize.
  template <class U>
  void construct(U*) noexcept {}
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
  template <class U>
  struct rebind {
    using other = AlignedAlloc<U, Align>;
  };
  bool operator==(const AlignedAlloc&) const { return true; }
  bool operator!=(const AlignedAlloc&) const { return false; }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAlloc<T>>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

// Shape/axis mismatches (conv kernel vs input channels, odd spatial dims, ...).
struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: backward on a non-scalar, stepping a finished episode, ...
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid model/training configuration detected at build time.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// I/O and file-format failures (datasets, checkpoints).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64, used to derive independent sub-seeds from one root seed.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t root, uint64_t stream) {
  uint64_t s = root ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
  return splitmix64(s);
}

// Explicitly threaded RNG. Every randomized component takes one of these; no
// global generator exists anywhere in the library.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }
  int64_t uniform_int(int64_t lo, int64_t hi) {  // inclusive bounds
    return std::uniform_int_distribution<int64_t>(lo, hi)(gen_);
  }
  uint64_t next_u64() { return gen_(); }
  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

inline int& detail_num_threads() {
  static int n = 1;
  return n;
}

inline void set_num_threads(int n) {
  if (n < 1) n = 1;
  detail_num_threads() = n;
#ifdef _OPENMP
  omp_set_num_threads(n);
#endif
}

inline int num_threads() { return detail_num_threads(); }

// Doubles are printed with 17 significant digits so that reparsing (and byte
// comparison between reproducibility runs) is exact.
inline std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string fmt_fixed(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
  return buf;
}

class CsvWriter {
 public:
  CsvWriter() = default;
  CsvWriter(const std::string& path, const std::vector<std::string>& header) {
    open(path, header);
  }
  void open(const std::string& path, const std::vector<std::string>& header) {
    out_.open(path, std::ios::trunc);
    if (!out_) throw IoError("cannot open CSV for writing: " + path);
    write_row(header);
  }
  void write_row(const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    out_.flush();
  }
  bool is_open() const { return out_.is_open(); }

 private:
  std::ofstream out_;
};

}  // namespace edgenav
