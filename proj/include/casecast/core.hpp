#pragma once

// Dense numeric substrate: row-major Matrix, Vector (= std::vector<double>),
// elementwise nonlinearities, small matmul kernels, and a seeded deterministic
// random source. Everything is 64-bit double; sizes here are tiny (hidden
// <= 100, ~30 features), so kernels are plain loops left to the vectorizer.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "casecast/errors.hpp"

namespace casecast {

using Vector = std::vector<double>;

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, data.size() == rows*cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool operator==(const Matrix& o) const = default;
};

inline std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

// result[i] = sum_j m(i,j) * v[j]
inline Vector matvec(const Matrix& m, const Vector& v) {
  if (m.cols != v.size()) {
    throw ShapeError("matvec: matrix " + shape_str(m) + " incompatible with vector of length " +
                     std::to_string(v.size()));
  }
  Vector out(m.rows, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const double* r = m.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < m.cols; ++j) acc += r[j] * v[j];
    out[i] = acc;
  }
  return out;
}

// C += A * B, all row-major. A: m x k, B: k x n, C: m x n.
// The inner dimension is unrolled four-wide so each C row is streamed once
// per four A entries; the vectorizer handles the rest.
inline void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) {
    throw ShapeError("matmul_acc: " + shape_str(a) + " * " + shape_str(b) + " -> " + shape_str(c));
  }
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.row(i);
    double* crow = c.row(i);
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      const double* b0 = b.row(p);
      const double* b1 = b.row(p + 1);
      const double* b2 = b.row(p + 2);
      const double* b3 = b.row(p + 3);
      for (std::size_t j = 0; j < n; ++j)
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
    }
    for (; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b.row(p);
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A^T * B. A: m x k, B: m x n, C: k x n. Same four-wide blocking, over
// rows of A/B here.
inline void matmul_at_b_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) {
    throw ShapeError("matmul_at_b_acc: " + shape_str(a) + "^T * " + shape_str(b) + " -> " +
                     shape_str(c));
  }
  const std::size_t m = a.rows, k = a.cols, n = b.cols;
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* a0 = a.row(i);
    const double* a1 = a.row(i + 1);
    const double* a2 = a.row(i + 2);
    const double* a3 = a.row(i + 3);
    const double* b0 = b.row(i);
    const double* b1 = b.row(i + 1);
    const double* b2 = b.row(i + 2);
    const double* b3 = b.row(i + 3);
    for (std::size_t p = 0; p < k; ++p) {
      double* crow = c.row(p);
      const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
      for (std::size_t j = 0; j < n; ++j)
        crow[j] += v0 * b0[j] + v1 * b1[j] + v2 * b2[j] + v3 * b3[j];
    }
  }
  for (; i < m; ++i) {
    const double* arow = a.row(i);
    const double* brow = b.row(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      double* crow = c.row(p);
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline Matrix transpose(const Matrix& m) {
  Matrix t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vector sigmoid(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid(v[i]);
  return out;
}

inline Vector tanh_v(const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
  return out;
}

// 64-bit FNV-1a; used for data checksums and seed derivation.
inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

// Sub-seed for a named unit of work: FNV-1a over the key, then over the
// master seed's little-endian bytes. Keys are canonical strings, so every
// experiment cell is reproducible in isolation.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
  std::uint64_t h = fnv1a64(key);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(master >> (8 * i));
  return fnv1a64(b, 8, h);
}

// Deterministic uniform source. The engine is std::mt19937_64, whose output
// sequence is pinned by the standard; the mapping to doubles is the usual
// 53-bit trick, so draws are identical across platforms for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return eng_(); }

  // in [0, 1)
  double next_unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    double r = lo + (hi - lo) * next_unit();
    if (r >= hi) r = std::nextafter(hi, lo);  // keep draws inside [lo, hi) after rounding
    return r;
  }

  Rng split(std::string_view key) const { return Rng(derive_seed(seed_, key)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

inline Vector rng_uniform(Rng& rng, double lo, double hi, std::size_t n) {
  if (!(lo < hi)) {
    throw ParameterError("rng_uniform: lo (" + std::to_string(lo) + ") must be < hi (" +
                         std::to_string(hi) + ")");
  }
  Vector out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = rng.uniform(lo, hi);
  return out;
}

inline bool all_finite(const double* p, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

inline bool all_finite(const Vector& v) { return all_finite(v.data(), v.size()); }
inline bool all_finite(const Matrix& m) { return all_finite(m.data.data(), m.data.size()); }

}  // namespace casecast
