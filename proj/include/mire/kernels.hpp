#pragma once

// Dense row-major kernels used by the autodiff engine and the classifier.
//
// Every kernel exists twice: a plain serial reference and an OpenMP version.
// The parallel versions split work over output rows only; each output element
// is still accumulated by one thread in the same order as the reference, so
// the two produce bit-identical results for any thread count.

#include <cstddef>
#include <span>
#include <vector>

namespace mire::kernels {

namespace serial {

/// C[m,n] = A[m,k] * B[k,n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
/// C[k,n] += A[m,k]^T * B[m,n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
/// C[m,k] += A[m,n] * B[k,n]^T
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k);
/// G[m,m] = A A^T for A[m,n]
void gram(std::span<const double> a, std::span<double> g, std::size_t m, std::size_t n);
/// Index of the nearest row of means[c,e] for every row of queries[q,e];
/// ties go to the lowest index.
std::vector<std::size_t> nearest_rows(std::span<const double> queries, std::span<const double> means,
                                      std::size_t q, std::size_t c, std::size_t e);

}  // namespace serial

namespace parallel {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t k, std::size_t n);
void matmul_nt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                   std::size_t m, std::size_t n, std::size_t k);
void gram(std::span<const double> a, std::span<double> g, std::size_t m, std::size_t n);
std::vector<std::size_t> nearest_rows(std::span<const double> queries, std::span<const double> means,
                                      std::size_t q, std::size_t c, std::size_t e);

}  // namespace parallel

/// Work (multiply-adds) below which the parallel kernels stay on one thread.
inline constexpr std::size_t kParallelThreshold = 1 << 15;

}  // namespace mire::kernels
