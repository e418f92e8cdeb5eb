// AVX2 kernel variants. Each kernel mirrors the scalar reference exactly:
// same per-element operation sequence, no FMA, no min/max intrinsics
// (their NaN/signed-zero semantics differ from the scalar comparisons),
// comparisons + blends instead. Lanes cover independent elements only, so
// outputs are bit-identical to the scalar backend.

#include "avx2_impl.hpp"

#ifdef __AVX2__

#include <immintrin.h>

#include <cstring>

namespace sabr::kernels::vx {

namespace {

inline __m256 blend(__m256 a, __m256 b, __m256 mask) { return _mm256_blendv_ps(a, b, mask); }
inline __m256d blend(__m256d a, __m256d b, __m256d mask) { return _mm256_blendv_pd(a, b, mask); }

}  // namespace

void gemm_f32(const float* a, const float* b, float* c, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i) {
        float* crow = c + static_cast<size_t>(i) * n;
        if (!acc) std::memset(crow, 0, sizeof(float) * static_cast<size_t>(n));
        const float* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const float av = arow[kk];
            const float* brow = b + static_cast<size_t>(kk) * n;
            const __m256 av8 = _mm256_set1_ps(av);
            int j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 cv = _mm256_loadu_ps(crow + j);
                cv = _mm256_add_ps(cv, _mm256_mul_ps(av8, _mm256_loadu_ps(brow + j)));
                _mm256_storeu_ps(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_f64(const double* a, const double* b, double* c, int m, int k, int n, bool acc) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<size_t>(i) * n;
        if (!acc) std::memset(crow, 0, sizeof(double) * static_cast<size_t>(n));
        const double* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + static_cast<size_t>(kk) * n;
            const __m256d av4 = _mm256_set1_pd(av);
            int j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_add_pd(cv, _mm256_mul_pd(av4, _mm256_loadu_pd(brow + j)));
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void axpy_f32(float* y, float alpha, const float* x, size_t n) {
    const __m256 a8 = _mm256_set1_ps(alpha);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_add_ps(yv, _mm256_mul_ps(a8, _mm256_loadu_ps(x + i)));
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpy_f64(double* y, double alpha, const double* x, size_t n) {
    const __m256d a4 = _mm256_set1_pd(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_add_pd(yv, _mm256_mul_pd(a4, _mm256_loadu_pd(x + i)));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

#define SABR_EWISE_F32(NAME, VEXPR, SEXPR)                           \
    void NAME(float* out, const float* a, const float* b, size_t n) { \
        size_t i = 0;                                                 \
        for (; i + 8 <= n; i += 8) {                                  \
            __m256 av = _mm256_loadu_ps(a + i);                       \
            __m256 bv = _mm256_loadu_ps(b + i);                       \
            _mm256_storeu_ps(out + i, VEXPR);                         \
        }                                                             \
        for (; i < n; ++i) out[i] = SEXPR;                            \
    }

#define SABR_EWISE_F64(NAME, VEXPR, SEXPR)                              \
    void NAME(double* out, const double* a, const double* b, size_t n) { \
        size_t i = 0;                                                    \
        for (; i + 4 <= n; i += 4) {                                     \
            __m256d av = _mm256_loadu_pd(a + i);                         \
            __m256d bv = _mm256_loadu_pd(b + i);                         \
            _mm256_storeu_pd(out + i, VEXPR);                            \
        }                                                                \
        for (; i < n; ++i) out[i] = SEXPR;                               \
    }

SABR_EWISE_F32(vadd_f32, _mm256_add_ps(av, bv), a[i] + b[i])
SABR_EWISE_F64(vadd_f64, _mm256_add_pd(av, bv), a[i] + b[i])
SABR_EWISE_F32(vsub_f32, _mm256_sub_ps(av, bv), a[i] - b[i])
SABR_EWISE_F64(vsub_f64, _mm256_sub_pd(av, bv), a[i] - b[i])
SABR_EWISE_F32(vmul_f32, _mm256_mul_ps(av, bv), a[i] * b[i])
SABR_EWISE_F64(vmul_f64, _mm256_mul_pd(av, bv), a[i] * b[i])

#undef SABR_EWISE_F32
#undef SABR_EWISE_F64

void vabs_f32(float* out, const float* a, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 av = _mm256_loadu_ps(a + i);
        const __m256 neg = _mm256_cmp_ps(av, zero, _CMP_LT_OQ);
        _mm256_storeu_ps(out + i, blend(av, _mm256_sub_ps(zero, av), neg));
    }
    for (; i < n; ++i) out[i] = a[i] < 0.0f ? -a[i] : a[i];
}

void vabs_f64(double* out, const double* a, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d av = _mm256_loadu_pd(a + i);
        const __m256d neg = _mm256_cmp_pd(av, zero, _CMP_LT_OQ);
        _mm256_storeu_pd(out + i, blend(av, _mm256_sub_pd(zero, av), neg));
    }
    for (; i < n; ++i) out[i] = a[i] < 0.0 ? -a[i] : a[i];
}

void vscale_f32(float* out, const float* a, float alpha, float beta, size_t n) {
    const __m256 a8 = _mm256_set1_ps(alpha), b8 = _mm256_set1_ps(beta);
    size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_mul_ps(a8, _mm256_loadu_ps(a + i)), b8));
    for (; i < n; ++i) out[i] = alpha * a[i] + beta;
}

void vscale_f64(double* out, const double* a, double alpha, double beta, size_t n) {
    const __m256d a4 = _mm256_set1_pd(alpha), b4 = _mm256_set1_pd(beta);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_mul_pd(a4, _mm256_loadu_pd(a + i)), b4));
    for (; i < n; ++i) out[i] = alpha * a[i] + beta;
}

void vclamp_f32(float* out, const float* x, const float* lo, const float* hi, size_t n) {
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 lv = _mm256_loadu_ps(lo + i);
        const __m256 hv = _mm256_loadu_ps(hi + i);
        __m256 t = blend(xv, lv, _mm256_cmp_ps(xv, lv, _CMP_LT_OQ));
        t = blend(t, hv, _mm256_cmp_ps(t, hv, _CMP_GT_OQ));
        _mm256_storeu_ps(out + i, t);
    }
    for (; i < n; ++i) {
        float t = x[i] < lo[i] ? lo[i] : x[i];
        out[i] = t > hi[i] ? hi[i] : t;
    }
}

void vclamp_f64(double* out, const double* x, const double* lo, const double* hi, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d lv = _mm256_loadu_pd(lo + i);
        const __m256d hv = _mm256_loadu_pd(hi + i);
        __m256d t = blend(xv, lv, _mm256_cmp_pd(xv, lv, _CMP_LT_OQ));
        t = blend(t, hv, _mm256_cmp_pd(t, hv, _CMP_GT_OQ));
        _mm256_storeu_pd(out + i, t);
    }
    for (; i < n; ++i) {
        double t = x[i] < lo[i] ? lo[i] : x[i];
        out[i] = t > hi[i] ? hi[i] : t;
    }
}

void vclamp_const_f32(float* out, const float* x, float lo, float hi, size_t n) {
    const __m256 lv = _mm256_set1_ps(lo), hv = _mm256_set1_ps(hi);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        __m256 t = blend(xv, lv, _mm256_cmp_ps(xv, lv, _CMP_LT_OQ));
        t = blend(t, hv, _mm256_cmp_ps(t, hv, _CMP_GT_OQ));
        _mm256_storeu_ps(out + i, t);
    }
    for (; i < n; ++i) {
        float t = x[i] < lo ? lo : x[i];
        out[i] = t > hi ? hi : t;
    }
}

void vclamp_const_f64(double* out, const double* x, double lo, double hi, size_t n) {
    const __m256d lv = _mm256_set1_pd(lo), hv = _mm256_set1_pd(hi);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        __m256d t = blend(xv, lv, _mm256_cmp_pd(xv, lv, _CMP_LT_OQ));
        t = blend(t, hv, _mm256_cmp_pd(t, hv, _CMP_GT_OQ));
        _mm256_storeu_pd(out + i, t);
    }
    for (; i < n; ++i) {
        double t = x[i] < lo ? lo : x[i];
        out[i] = t > hi ? hi : t;
    }
}

void relu_f32(float* out, const float* x, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 xv = _mm256_loadu_ps(x + i);
        const __m256 pos = _mm256_cmp_ps(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(out + i, blend(zero, xv, pos));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_f64(double* out, const double* x, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d xv = _mm256_loadu_pd(x + i);
        const __m256d pos = _mm256_cmp_pd(xv, zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, blend(zero, xv, pos));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward_f32(float* gx, const float* gy, const float* x, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 pos = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 add = _mm256_and_ps(pos, _mm256_loadu_ps(gy + i));
        _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), add));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0f) gx[i] += gy[i];
}

void relu_backward_f64(double* gx, const double* gy, const double* x, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d pos = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d add = _mm256_and_pd(pos, _mm256_loadu_pd(gy + i));
        _mm256_storeu_pd(gx + i, _mm256_add_pd(_mm256_loadu_pd(gx + i), add));
    }
    for (; i < n; ++i)
        if (x[i] > 0.0) gx[i] += gy[i];
}

// Masked add of gy is only valid because g + 0.0 == g never flips the sign
// of a -0.0 accumulator here: the scalar reference skips the add entirely,
// so lanes with a false predicate must leave gx untouched. _mm256_and_ps
// produces +0.0 in those lanes; gx + +0.0 changes -0.0 to +0.0, which the
// scalar path would not. Gradients are accumulated from zero-initialised
// (+0.0) buffers and adds cannot produce -0.0 from finite inputs unless a
// lane sums to exactly -0.0 via (-a) + a, which the skip-vs-add difference
// maps to the same +0.0. Covered by the backend equivalence suite.

namespace {

template <typename T>
struct VecOps;

template <>
struct VecOps<float> {
    using V = __m256;
    static __m256 load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, __m256 v) { _mm256_storeu_ps(p, v); }
    static __m256 set1(float v) { return _mm256_set1_ps(v); }
    static __m256 zero() { return _mm256_setzero_ps(); }
    static __m256 add(__m256 a, __m256 b) { return _mm256_add_ps(a, b); }
    static __m256 sub(__m256 a, __m256 b) { return _mm256_sub_ps(a, b); }
    static __m256 mul(__m256 a, __m256 b) { return _mm256_mul_ps(a, b); }
    static __m256 cmp_le(__m256 a, __m256 b) { return _mm256_cmp_ps(a, b, _CMP_LE_OQ); }
    static __m256 cmp_gt(__m256 a, __m256 b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
    static __m256 cmp_lt(__m256 a, __m256 b) { return _mm256_cmp_ps(a, b, _CMP_LT_OQ); }
    static __m256 andnot(__m256 a, __m256 b) { return _mm256_andnot_ps(a, b); }
    static __m256 band(__m256 a, __m256 b) { return _mm256_and_ps(a, b); }
    static constexpr int width = 8;
};

template <>
struct VecOps<double> {
    using V = __m256d;
    static __m256d load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, __m256d v) { _mm256_storeu_pd(p, v); }
    static __m256d set1(double v) { return _mm256_set1_pd(v); }
    static __m256d zero() { return _mm256_setzero_pd(); }
    static __m256d add(__m256d a, __m256d b) { return _mm256_add_pd(a, b); }
    static __m256d sub(__m256d a, __m256d b) { return _mm256_sub_pd(a, b); }
    static __m256d mul(__m256d a, __m256d b) { return _mm256_mul_pd(a, b); }
    static __m256d cmp_le(__m256d a, __m256d b) { return _mm256_cmp_pd(a, b, _CMP_LE_OQ); }
    static __m256d cmp_gt(__m256d a, __m256d b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
    static __m256d cmp_lt(__m256d a, __m256d b) { return _mm256_cmp_pd(a, b, _CMP_LT_OQ); }
    static __m256d andnot(__m256d a, __m256d b) { return _mm256_andnot_pd(a, b); }
    static __m256d band(__m256d a, __m256d b) { return _mm256_and_pd(a, b); }
    static constexpr int width = 4;
};

template <typename T>
void box_relu_impl(T* oc, T* orr, uint8_t* mask, const T* c, const T* r, T cs, size_t n) {
    using O = VecOps<T>;
    using V = typename O::V;
    const V zero = O::zero();
    const V half = O::set1(T(0.5));
    const V csv = O::set1(cs);
    size_t i = 0;
    for (; i + O::width <= n; i += O::width) {
        const V cv = O::load(c + i);
        const V rv = O::load(r + i);
        const V u = O::add(cv, rv);
        const V inactive = O::cmp_le(u, zero);                    // u <= 0
        const V lowle = O::cmp_le(O::sub(cv, rv), zero);          // c - r <= 0
        const V unstable = O::andnot(inactive, lowle);            // !inactive && lowle
        const V t = O::mul(csv, O::mul(half, u));
        V out_c = cv;
        V out_r = rv;
        out_c = blend(out_c, t, unstable);
        out_r = blend(out_r, t, unstable);
        out_c = blend(out_c, zero, inactive);
        out_r = blend(out_r, zero, inactive);
        O::store(oc + i, out_c);
        O::store(orr + i, out_r);
        for (int l = 0; l < O::width; ++l) {
            const T uu = c[i + l] + r[i + l];
            mask[i + l] = uu <= T(0) ? 0 : (c[i + l] - r[i + l] <= T(0) ? 1 : 2);
        }
    }
    for (; i < n; ++i) {
        const T u = c[i] + r[i];
        if (u <= T(0)) {
            oc[i] = T(0);
            orr[i] = T(0);
            mask[i] = 0;
        } else if (c[i] - r[i] <= T(0)) {
            const T t = cs * (T(0.5) * u);
            oc[i] = t;
            orr[i] = t;
            mask[i] = 1;
        } else {
            oc[i] = c[i];
            orr[i] = r[i];
            mask[i] = 2;
        }
    }
}

}  // namespace

void box_relu_f32(float* oc, float* orr, uint8_t* mask, const float* c, const float* r, float cs, size_t n) {
    box_relu_impl<float>(oc, orr, mask, c, r, cs, n);
}

void box_relu_f64(double* oc, double* orr, uint8_t* mask, const double* c, const double* r, double cs, size_t n) {
    box_relu_impl<double>(oc, orr, mask, c, r, cs, n);
}

namespace {

template <typename T>
void box_relu_backward_scalar(T* gc, T* gr, const T* goc, const T* gor, const uint8_t* mask, T cs, size_t i,
                              size_t n) {
    for (; i < n; ++i) {
        if (mask[i] == 1) {
            const T g = cs * (T(0.5) * (goc[i] + gor[i]));
            gc[i] += g;
            gr[i] += g;
        } else if (mask[i] == 2) {
            gc[i] += goc[i];
            gr[i] += gor[i];
        }
    }
}

}  // namespace

void box_relu_backward_f32(float* gc, float* gr, const float* goc, const float* gor, const uint8_t* mask, float cs,
                           size_t n) {
    // Case masks are data-dependent bytes; the scalar loop is already
    // cheap relative to the gemms around it.
    box_relu_backward_scalar(gc, gr, goc, gor, mask, cs, 0, n);
}

void box_relu_backward_f64(double* gc, double* gr, const double* goc, const double* gor, const uint8_t* mask,
                           double cs, size_t n) {
    box_relu_backward_scalar(gc, gr, goc, gor, mask, cs, 0, n);
}

void sign_step_f32(float* y, const float* g, float step, size_t n) {
    const __m256 zero = _mm256_setzero_ps();
    const __m256 sv = _mm256_set1_ps(step);
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 gv = _mm256_loadu_ps(g + i);
        const __m256 pos = _mm256_cmp_ps(gv, zero, _CMP_GT_OQ);
        const __m256 neg = _mm256_cmp_ps(gv, zero, _CMP_LT_OQ);
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_add_ps(yv, _mm256_and_ps(pos, sv));
        yv = _mm256_sub_ps(yv, _mm256_and_ps(neg, sv));
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) {
        if (g[i] > 0.0f)
            y[i] += step;
        else if (g[i] < 0.0f)
            y[i] -= step;
    }
}

void sign_step_f64(double* y, const double* g, double step, size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    const __m256d sv = _mm256_set1_pd(step);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        const __m256d pos = _mm256_cmp_pd(gv, zero, _CMP_GT_OQ);
        const __m256d neg = _mm256_cmp_pd(gv, zero, _CMP_LT_OQ);
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_add_pd(yv, _mm256_and_pd(pos, sv));
        yv = _mm256_sub_pd(yv, _mm256_and_pd(neg, sv));
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) {
        if (g[i] > 0.0)
            y[i] += step;
        else if (g[i] < 0.0)
            y[i] -= step;
    }
}

namespace {

template <typename T>
void outer_acc_signed_impl(T* dw, const T* w, const T* a, const T* b, int m, int n) {
    using O = VecOps<T>;
    using V = typename O::V;
    const V zero = O::zero();
    for (int i = 0; i < m; ++i) {
        const V ai = O::set1(a[i]);
        T* drow = dw + static_cast<size_t>(i) * n;
        const T* wrow = w + static_cast<size_t>(i) * n;
        int j = 0;
        for (; j + O::width <= n; j += O::width) {
            const V p = O::mul(ai, O::load(b + j));
            const V wv = O::load(wrow + j);
            const V pos = O::cmp_gt(wv, zero);
            const V neg = O::cmp_lt(wv, zero);
            V d = O::load(drow + j);
            d = O::add(d, O::band(pos, p));
            d = O::sub(d, O::band(neg, p));
            O::store(drow + j, d);
        }
        for (; j < n; ++j) {
            const T p = a[i] * b[j];
            if (wrow[j] > T(0))
                drow[j] += p;
            else if (wrow[j] < T(0))
                drow[j] -= p;
        }
    }
}

template <typename T>
void outer_acc_impl(T* dw, const T* a, const T* b, int m, int n) {
    using O = VecOps<T>;
    using V = typename O::V;
    for (int i = 0; i < m; ++i) {
        const V ai = O::set1(a[i]);
        T* drow = dw + static_cast<size_t>(i) * n;
        int j = 0;
        for (; j + O::width <= n; j += O::width) {
            V d = O::load(drow + j);
            d = O::add(d, O::mul(ai, O::load(b + j)));
            O::store(drow + j, d);
        }
        for (; j < n; ++j) drow[j] += a[i] * b[j];
    }
}

}  // namespace

void outer_acc_signed_f32(float* dw, const float* w, const float* a, const float* b, int m, int n) {
    outer_acc_signed_impl<float>(dw, w, a, b, m, n);
}
void outer_acc_signed_f64(double* dw, const double* w, const double* a, const double* b, int m, int n) {
    outer_acc_signed_impl<double>(dw, w, a, b, m, n);
}
void outer_acc_f32(float* dw, const float* a, const float* b, int m, int n) {
    outer_acc_impl<float>(dw, a, b, m, n);
}
void outer_acc_f64(double* dw, const double* a, const double* b, int m, int n) {
    outer_acc_impl<double>(dw, a, b, m, n);
}

}  // namespace sabr::kernels::vx

#endif  // __AVX2__
