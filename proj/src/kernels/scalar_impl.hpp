#pragma once

#include <cstdint>
#include <cstring>

// Reference kernels. These define the numerical semantics; the AVX2
// variants must reproduce them bit-for-bit, so any change here is a
// change to both backends.

namespace sabr::kernels::sc {

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        if (!accumulate) std::memset(crow, 0, sizeof(T) * static_cast<size_t>(n));
        const T* arow = a + static_cast<size_t>(i) * k;
        for (int kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = b + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void axpy(T* y, T alpha, const T* x, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void vadd(T* out, const T* a, const T* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void vsub(T* out, const T* a, const T* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void vmul(T* out, const T* a, const T* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void vabs(T* out, const T* a, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] < T(0) ? -a[i] : a[i];
}

template <typename T>
void vscale(T* out, const T* a, T alpha, T beta, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = alpha * a[i] + beta;
}

template <typename T>
void vclamp(T* out, const T* x, const T* lo, const T* hi, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        T t = x[i] < lo[i] ? lo[i] : x[i];
        out[i] = t > hi[i] ? hi[i] : t;
    }
}

template <typename T>
void vclamp_const(T* out, const T* x, T lo, T hi, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        T t = x[i] < lo ? lo : x[i];
        out[i] = t > hi ? hi : t;
    }
}

template <typename T>
void relu(T* out, const T* x, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward(T* gx, const T* gy, const T* x, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (x[i] > T(0)) gx[i] += gy[i];
}

template <typename T>
void box_relu(T* out_c, T* out_r, uint8_t* mask, const T* c, const T* r, T cs, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const T u = c[i] + r[i];
        if (u <= T(0)) {
            out_c[i] = T(0);
            out_r[i] = T(0);
            mask[i] = 0;
        } else if (c[i] - r[i] <= T(0)) {
            const T t = cs * (T(0.5) * u);
            out_c[i] = t;
            out_r[i] = t;
            mask[i] = 1;
        } else {
            out_c[i] = c[i];
            out_r[i] = r[i];
            mask[i] = 2;
        }
    }
}

template <typename T>
void box_relu_backward(T* gc, T* gr, const T* goc, const T* gor, const uint8_t* mask, T cs, size_t n) {
    for (size_t i = 0; i < n; ++i) {
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

template <typename T>
void sign_step(T* y, const T* g, T step, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (g[i] > T(0))
            y[i] += step;
        else if (g[i] < T(0))
            y[i] -= step;
    }
}

template <typename T>
void outer_acc_signed(T* dw, const T* w, const T* a, const T* b, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const T ai = a[i];
        T* drow = dw + static_cast<size_t>(i) * n;
        const T* wrow = w + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T p = ai * b[j];
            if (wrow[j] > T(0))
                drow[j] += p;
            else if (wrow[j] < T(0))
                drow[j] -= p;
        }
    }
}

template <typename T>
void outer_acc(T* dw, const T* a, const T* b, int m, int n) {
    for (int i = 0; i < m; ++i) {
        const T ai = a[i];
        T* drow = dw + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) drow[j] += ai * b[j];
    }
}

}  // namespace sabr::kernels::sc
