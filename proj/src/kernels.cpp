#include "mire/kernels.hpp"

#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mire::kernels {

namespace {

// Row kernels shared by both backends. Keeping the per-row loop in one place
// is what makes the serial and parallel results bit-identical.

inline void matmul_row(const double* a_row, const double* b, double* c_row, std::size_t k,
                       std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) c_row[j] = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

// Row r of A^T B: sum over i of A[i,r] * B[i,:].
inline void matmul_tn_row(const double* a, const double* b, double* c_row, std::size_t r,
                          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double av = a[i * k + r];
    const double* b_row = b + i * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void matmul_nt_row(const double* a_row, const double* b, double* c_row, std::size_t n,
                          std::size_t k) {
  for (std::size_t j = 0; j < k; ++j) {
    const double* b_row = b + j * n;
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p) s += a_row[p] * b_row[p];
    c_row[j] += s;
  }
}

inline void gram_row(const double* a, double* g_row, std::size_t i, std::size_t m, std::size_t n) {
  const double* a_i = a + i * n;
  for (std::size_t j = 0; j < m; ++j) {
    const double* a_j = a + j * n;
    double s = 0.0;
    for (std::size_t p = 0; p < n; ++p) s += a_i[p] * a_j[p];
    g_row[j] = s;
  }
}

inline std::size_t nearest_one(const double* query, const double* means, std::size_t c,
                               std::size_t e) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < c; ++k) {
    const double* mu = means + k * e;
    double d = 0.0;
    for (std::size_t p = 0; p < e; ++p) {
      const double diff = query[p] - mu[p];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t r = 0; r < k; ++r) matmul_tn_row(a.data(), b.data(), c.data() + r * n, r, m, k, n);
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) matmul_nt_row(a.data() + i * n, b.data(), c.data() + i * k, n, k);
}

void gram(std::span<const double> a, std::span<double> g, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) gram_row(a.data(), g.data() + i * m, i, m, n);
}

std::vector<std::size_t> nearest_rows(std::span<const double> queries, std::span<const double> means,
                                      std::size_t q, std::size_t c, std::size_t e) {
  std::vector<std::size_t> out(q);
  for (std::size_t i = 0; i < q; ++i) out[i] = nearest_one(queries.data() + i * e, means.data(), c, e);
  return out;
}

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
  const bool big = m * k * n >= kParallelThreshold;
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    matmul_row(a.data() + i * k, b.data(), c.data() + i * n, k, n);
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n) {
  const bool big = m * k * n >= kParallelThreshold;
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t r = 0; r < rows; ++r)
    matmul_tn_row(a.data(), b.data(), c.data() + r * n, static_cast<std::size_t>(r), m, k, n);
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k) {
  const bool big = m * k * n >= kParallelThreshold;
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    matmul_nt_row(a.data() + i * n, b.data(), c.data() + i * k, n, k);
}

void gram(std::span<const double> a, std::span<double> g, std::size_t m, std::size_t n) {
  const bool big = m * m * n >= kParallelThreshold;
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    gram_row(a.data(), g.data() + i * m, static_cast<std::size_t>(i), m, n);
}

std::vector<std::size_t> nearest_rows(std::span<const double> queries, std::span<const double> means,
                                      std::size_t q, std::size_t c, std::size_t e) {
  std::vector<std::size_t> out(q);
  const bool big = q * c * e >= kParallelThreshold;
  const auto rows = static_cast<std::ptrdiff_t>(q);
#pragma omp parallel for schedule(static) if (big)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    out[i] = nearest_one(queries.data() + i * e, means.data(), c, e);
  return out;
}

}  // namespace parallel

}  // namespace mire::kernels
