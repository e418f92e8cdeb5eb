#pragma once

#include <cstddef>
#include <cstdint>

namespace sabr::kernels {

// Runtime-selected backend. All SIMD variants preserve the scalar
// accumulation order element-for-element (broadcast-and-stream GEMM,
// lane-parallel elementwise), so for every kernel below the two backends
// are bit-identical. Reductions (dot/sum/max) stay scalar; they are
// memory-bound and keeping them sequential preserves one summation order
// everywhere.
enum class Backend { Scalar, Avx2 };

bool avx2_supported();
Backend active_backend();
// Explicit override; Backend::Avx2 falls back to Scalar when unsupported.
void set_backend(Backend b);
const char* backend_name(Backend b);

// c[m x n] = a[m x k] @ b[k x n]; all row-major. If accumulate, c += a@b.
// Per output element the contraction runs in ascending k order.
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate = false);

// y += alpha * x
template <typename T>
void axpy(T* y, T alpha, const T* x, size_t n);

// out = a + b / a - b / a * b   (elementwise)
template <typename T>
void vadd(T* out, const T* a, const T* b, size_t n);
template <typename T>
void vsub(T* out, const T* a, const T* b, size_t n);
template <typename T>
void vmul(T* out, const T* a, const T* b, size_t n);

// out = |a|
template <typename T>
void vabs(T* out, const T* a, size_t n);

// out = alpha * a + beta
template <typename T>
void vscale(T* out, const T* a, T alpha, T beta, size_t n);

// out = min(max(x, lo), hi), elementwise bounds
template <typename T>
void vclamp(T* out, const T* x, const T* lo, const T* hi, size_t n);

// out = min(max(x, lo), hi), scalar bounds
template <typename T>
void vclamp_const(T* out, const T* x, T lo, T hi, size_t n);

// out = max(x, 0)
template <typename T>
void relu(T* out, const T* x, size_t n);

// gx += gy where x > 0 (subgradient at 0 is 0)
template <typename T>
void relu_backward(T* gx, const T* gy, const T* x, size_t n);

// Interval ReLU transformer with shrinking coefficient cs, applied to a
// (centre, radius) box. Cases per element, recorded in mask:
//   0: c + r <= 0        -> (0, 0)
//   1: c - r <= 0 < c+r  -> (cs*(c+r)/2, cs*(c+r)/2)
//   2: otherwise         -> (c, r)
template <typename T>
void box_relu(T* out_c, T* out_r, uint8_t* mask, const T* c, const T* r, T cs, size_t n);

// Backward of box_relu given saved case masks.
template <typename T>
void box_relu_backward(T* gc, T* gr, const T* goc, const T* gor, const uint8_t* mask, T cs, size_t n);

// y += step * sign(g); sign(0) = 0
template <typename T>
void sign_step(T* y, const T* g, T step, size_t n);

// dw += ga (x) b  with elementwise sign mask:  dw[i*n+j] += sign(w[i*n+j]) * a[i] * b[j]
// (used for the |W| path of interval affine layers)
template <typename T>
void outer_acc_signed(T* dw, const T* w, const T* a, const T* b, int m, int n);

// dw += a (x) b
template <typename T>
void outer_acc(T* dw, const T* a, const T* b, int m, int n);

// --- scalar-only reductions (deterministic single order) ---
template <typename T>
T dot(const T* a, const T* b, size_t n);
template <typename T>
T sum(const T* a, size_t n);
template <typename T>
T sum_abs(const T* a, size_t n);
template <typename T>
T max_val(const T* a, size_t n);

}  // namespace sabr::kernels
