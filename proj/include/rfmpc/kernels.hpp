#ifndef RFMPC_KERNELS_HPP
#define RFMPC_KERNELS_HPP

#include <cstddef>

// Dense double-precision inner loops used by the matrix layer, the QP solver
// and the forest query path. Every operation has a scalar reference
// implementation and, on x86-64 hosts with AVX2+FMA, a vectorized variant.
// The backend is picked once at startup; set RFMPC_FORCE_SCALAR=1 in the
// environment (or call force_backend) to pin the reference path.
namespace rfmpc::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
const char* backend_name(Backend b);

// Overrides runtime detection. Intended for tests and benchmarks.
void force_backend(Backend b);

double dot(const double* a, const double* b, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// x *= alpha
void scal(double alpha, double* x, std::size_t n);

void vadd(const double* a, const double* b, double* r, std::size_t n);
void vsub(const double* a, const double* b, double* r, std::size_t n);

// r = min(max(x, lo), hi), elementwise
void clamp(const double* x, const double* lo, const double* hi, double* r, std::size_t n);

double max_abs(const double* x, std::size_t n);
double max_abs_diff(const double* a, const double* b, std::size_t n);

// Row-major matrices throughout.
// y = A x, A is m x n
void gemv(const double* a, std::size_t m, std::size_t n, const double* x, double* y);
// y = A^T x, A is m x n (y has n entries)
void gemv_t(const double* a, std::size_t m, std::size_t n, const double* x, double* y);
// C = A B, A is m x k, B is k x n
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// H = W^T diag(d) W, W is r x c; H (c x c) is filled symmetric by mirroring
// the computed upper triangle, so H == H^T holds bit-exactly.
void gram_weighted(const double* w, const double* d, std::size_t r, std::size_t c, double* h);

// Table of function pointers backing the free functions above; exposed so
// equivalence tests can run two backends side by side.
struct KernelTable {
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scal)(double, double*, std::size_t);
  void (*vadd)(const double*, const double*, double*, std::size_t);
  void (*vsub)(const double*, const double*, double*, std::size_t);
  void (*clamp)(const double*, const double*, const double*, double*, std::size_t);
  double (*max_abs)(const double*, std::size_t);
  double (*max_abs_diff)(const double*, const double*, std::size_t);
  void (*gemv)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*gemv_t)(const double*, std::size_t, std::size_t, const double*, double*);
  void (*gemm)(const double*, const double*, double*, std::size_t, std::size_t, std::size_t);
  void (*gram_weighted)(const double*, const double*, std::size_t, std::size_t, double*);
};

const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
// Null when the binary was built without the AVX2 translation unit.
const KernelTable* avx2_table();
#endif

}  // namespace rfmpc::kernels

#endif  // RFMPC_KERNELS_HPP
