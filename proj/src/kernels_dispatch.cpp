#include "rfmpc/kernels.hpp"

#include <atomic>
#include <cstdlib>

namespace rfmpc::kernels {
namespace {

#if (defined(__x86_64__) || defined(_M_X64)) && defined(RFMPC_HAVE_AVX2_TU)
bool cpu_has_avx2_fma() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}
#endif

Backend detect_backend() {
  if (const char* env = std::getenv("RFMPC_FORCE_SCALAR"); env && env[0] == '1')
    return Backend::Scalar;
#if (defined(__x86_64__) || defined(_M_X64)) && defined(RFMPC_HAVE_AVX2_TU)
  if (cpu_has_avx2_fma()) return Backend::Avx2;
#endif
  return Backend::Scalar;
}

struct Dispatch {
  Backend backend;
  const KernelTable* table;
};

Dispatch make_dispatch(Backend b) {
#if (defined(__x86_64__) || defined(_M_X64)) && defined(RFMPC_HAVE_AVX2_TU)
  if (b == Backend::Avx2) return {Backend::Avx2, avx2_table()};
#endif
  return {Backend::Scalar, &scalar_table()};
}

std::atomic<const KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::Scalar};

const KernelTable& table() {
  const KernelTable* t = g_table.load(std::memory_order_acquire);
  if (!t) {
    Dispatch d = make_dispatch(detect_backend());
    g_backend.store(d.backend, std::memory_order_relaxed);
    g_table.store(d.table, std::memory_order_release);
    t = d.table;
  }
  return *t;
}

}  // namespace

Backend active_backend() {
  table();
  return g_backend.load(std::memory_order_relaxed);
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::Avx2: return "avx2";
    case Backend::Scalar: return "scalar";
  }
  return "scalar";
}

void force_backend(Backend b) {
  Dispatch d = make_dispatch(b);
  g_backend.store(d.backend, std::memory_order_relaxed);
  g_table.store(d.table, std::memory_order_release);
}

#if (defined(__x86_64__) || defined(_M_X64)) && !defined(RFMPC_HAVE_AVX2_TU)
const KernelTable* avx2_table() { return nullptr; }
#endif

double dot(const double* a, const double* b, std::size_t n) { return table().dot(a, b, n); }
void axpy(double alpha, const double* x, double* y, std::size_t n) { table().axpy(alpha, x, y, n); }
void scal(double alpha, double* x, std::size_t n) { table().scal(alpha, x, n); }
void vadd(const double* a, const double* b, double* r, std::size_t n) { table().vadd(a, b, r, n); }
void vsub(const double* a, const double* b, double* r, std::size_t n) { table().vsub(a, b, r, n); }
void clamp(const double* x, const double* lo, const double* hi, double* r, std::size_t n) {
  table().clamp(x, lo, hi, r, n);
}
double max_abs(const double* x, std::size_t n) { return table().max_abs(x, n); }
double max_abs_diff(const double* a, const double* b, std::size_t n) {
  return table().max_abs_diff(a, b, n);
}
void gemv(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  table().gemv(a, m, n, x, y);
}
void gemv_t(const double* a, std::size_t m, std::size_t n, const double* x, double* y) {
  table().gemv_t(a, m, n, x, y);
}
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
          std::size_t n) {
  table().gemm(a, b, c, m, k, n);
}
void gram_weighted(const double* w, const double* d, std::size_t r, std::size_t c, double* h) {
  table().gram_weighted(w, d, r, c, h);
}

}  // namespace rfmpc::kernels
