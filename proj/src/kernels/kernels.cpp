#include "sabr/kernels.hpp"

#include <cstdlib>
#include <cstring>
#include <type_traits>

#include "scalar_impl.hpp"
#ifdef SABR_HAVE_AVX2_TU
#include "avx2_impl.hpp"
#endif

namespace sabr::kernels {

namespace {

Backend pick_initial() {
#ifdef SABR_HAVE_AVX2_TU
    if (const char* env = std::getenv("SABR_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2_supported()) return Backend::Avx2;
    }
    if (avx2_supported()) return Backend::Avx2;
#endif
    return Backend::Scalar;
}

Backend g_backend = pick_initial();

inline bool use_avx2() { return g_backend == Backend::Avx2; }

}  // namespace

bool avx2_supported() {
#ifdef SABR_HAVE_AVX2_TU
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

Backend active_backend() { return g_backend; }

void set_backend(Backend b) {
    if (b == Backend::Avx2 && !avx2_supported()) b = Backend::Scalar;
    g_backend = b;
}

const char* backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

#ifdef SABR_HAVE_AVX2_TU
#define SABR_DISPATCH(F32_CALL, F64_CALL, SC_CALL) \
    if constexpr (std::is_same_v<T, float>) {      \
        if (use_avx2()) {                          \
            vx::F32_CALL;                          \
            return;                                \
        }                                          \
    } else {                                       \
        if (use_avx2()) {                          \
            vx::F64_CALL;                          \
            return;                                \
        }                                          \
    }                                              \
    sc::SC_CALL;
#else
#define SABR_DISPATCH(F32_CALL, F64_CALL, SC_CALL) sc::SC_CALL;
#endif

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
    SABR_DISPATCH(gemm_f32(a, b, c, m, k, n, accumulate), gemm_f64(a, b, c, m, k, n, accumulate),
                  gemm(a, b, c, m, k, n, accumulate))
}

template <typename T>
void axpy(T* y, T alpha, const T* x, size_t n) {
    SABR_DISPATCH(axpy_f32(y, alpha, x, n), axpy_f64(y, alpha, x, n), axpy(y, alpha, x, n))
}

template <typename T>
void vadd(T* out, const T* a, const T* b, size_t n) {
    SABR_DISPATCH(vadd_f32(out, a, b, n), vadd_f64(out, a, b, n), vadd(out, a, b, n))
}

template <typename T>
void vsub(T* out, const T* a, const T* b, size_t n) {
    SABR_DISPATCH(vsub_f32(out, a, b, n), vsub_f64(out, a, b, n), vsub(out, a, b, n))
}

template <typename T>
void vmul(T* out, const T* a, const T* b, size_t n) {
    SABR_DISPATCH(vmul_f32(out, a, b, n), vmul_f64(out, a, b, n), vmul(out, a, b, n))
}

template <typename T>
void vabs(T* out, const T* a, size_t n) {
    SABR_DISPATCH(vabs_f32(out, a, n), vabs_f64(out, a, n), vabs(out, a, n))
}

template <typename T>
void vscale(T* out, const T* a, T alpha, T beta, size_t n) {
    SABR_DISPATCH(vscale_f32(out, a, alpha, beta, n), vscale_f64(out, a, alpha, beta, n),
                  vscale(out, a, alpha, beta, n))
}

template <typename T>
void vclamp(T* out, const T* x, const T* lo, const T* hi, size_t n) {
    SABR_DISPATCH(vclamp_f32(out, x, lo, hi, n), vclamp_f64(out, x, lo, hi, n), vclamp(out, x, lo, hi, n))
}

template <typename T>
void vclamp_const(T* out, const T* x, T lo, T hi, size_t n) {
    SABR_DISPATCH(vclamp_const_f32(out, x, lo, hi, n), vclamp_const_f64(out, x, lo, hi, n),
                  vclamp_const(out, x, lo, hi, n))
}

template <typename T>
void relu(T* out, const T* x, size_t n) {
    SABR_DISPATCH(relu_f32(out, x, n), relu_f64(out, x, n), relu(out, x, n))
}

template <typename T>
void relu_backward(T* gx, const T* gy, const T* x, size_t n) {
    SABR_DISPATCH(relu_backward_f32(gx, gy, x, n), relu_backward_f64(gx, gy, x, n), relu_backward(gx, gy, x, n))
}

template <typename T>
void box_relu(T* out_c, T* out_r, uint8_t* mask, const T* c, const T* r, T cs, size_t n) {
    SABR_DISPATCH(box_relu_f32(out_c, out_r, mask, c, r, cs, n), box_relu_f64(out_c, out_r, mask, c, r, cs, n),
                  box_relu(out_c, out_r, mask, c, r, cs, n))
}

template <typename T>
void box_relu_backward(T* gc, T* gr, const T* goc, const T* gor, const uint8_t* mask, T cs, size_t n) {
    SABR_DISPATCH(box_relu_backward_f32(gc, gr, goc, gor, mask, cs, n),
                  box_relu_backward_f64(gc, gr, goc, gor, mask, cs, n),
                  box_relu_backward(gc, gr, goc, gor, mask, cs, n))
}

template <typename T>
void sign_step(T* y, const T* g, T step, size_t n) {
    SABR_DISPATCH(sign_step_f32(y, g, step, n), sign_step_f64(y, g, step, n), sign_step(y, g, step, n))
}

template <typename T>
void outer_acc_signed(T* dw, const T* w, const T* a, const T* b, int m, int n) {
    SABR_DISPATCH(outer_acc_signed_f32(dw, w, a, b, m, n), outer_acc_signed_f64(dw, w, a, b, m, n),
                  outer_acc_signed(dw, w, a, b, m, n))
}

template <typename T>
void outer_acc(T* dw, const T* a, const T* b, int m, int n) {
    SABR_DISPATCH(outer_acc_f32(dw, a, b, m, n), outer_acc_f64(dw, a, b, m, n), outer_acc(dw, a, b, m, n))
}

#undef SABR_DISPATCH

template <typename T>
T dot(const T* a, const T* b, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T sum(const T* a, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

template <typename T>
T sum_abs(const T* a, size_t n) {
    T acc = T(0);
    for (size_t i = 0; i < n; ++i) acc += a[i] < T(0) ? -a[i] : a[i];
    return acc;
}

template <typename T>
T max_val(const T* a, size_t n) {
    T m = a[0];
    for (size_t i = 1; i < n; ++i)
        if (a[i] > m) m = a[i];
    return m;
}

#define SABR_INSTANTIATE(T)                                                                 \
    template void gemm<T>(const T*, const T*, T*, int, int, int, bool);                     \
    template void axpy<T>(T*, T, const T*, size_t);                                         \
    template void vadd<T>(T*, const T*, const T*, size_t);                                  \
    template void vsub<T>(T*, const T*, const T*, size_t);                                  \
    template void vmul<T>(T*, const T*, const T*, size_t);                                  \
    template void vabs<T>(T*, const T*, size_t);                                            \
    template void vscale<T>(T*, const T*, T, T, size_t);                                    \
    template void vclamp<T>(T*, const T*, const T*, const T*, size_t);                      \
    template void vclamp_const<T>(T*, const T*, T, T, size_t);                              \
    template void relu<T>(T*, const T*, size_t);                                            \
    template void relu_backward<T>(T*, const T*, const T*, size_t);                         \
    template void box_relu<T>(T*, T*, uint8_t*, const T*, const T*, T, size_t);             \
    template void box_relu_backward<T>(T*, T*, const T*, const T*, const uint8_t*, T, size_t); \
    template void sign_step<T>(T*, const T*, T, size_t);                                    \
    template void outer_acc_signed<T>(T*, const T*, const T*, const T*, int, int);          \
    template void outer_acc<T>(T*, const T*, const T*, int, int);                           \
    template T dot<T>(const T*, const T*, size_t);                                          \
    template T sum<T>(const T*, size_t);                                                    \
    template T sum_abs<T>(const T*, size_t);                                                \
    template T max_val<T>(const T*, size_t);

SABR_INSTANTIATE(float)
SABR_INSTANTIATE(double)

#undef SABR_INSTANTIATE

}  // namespace sabr::kernels
