#include "sabr/ops.hpp"

#include <cmath>

#include "sabr/error.hpp"
#include "sabr/kernels.hpp"

namespace sabr::ops {

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " @ " + shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n});
    kernels::gemm(a.data(), b.data(), c.data(), m, k, n);
    return c;
}

ConvGeom conv_geometry(const Shape& x, const Shape& kernel, int stride, int padding) {
    if (kernel.size() != 4) throw ShapeError("conv2d: kernel must be [O,C,kh,kw], got " + shape_str(kernel));
    Shape xs = x;
    if (xs.size() == 4) xs.erase(xs.begin());
    if (xs.size() != 3) throw ShapeError("conv2d: input must be [C,H,W] or [N,C,H,W], got " + shape_str(x));
    if (stride < 1) throw Error("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (padding < 0) throw Error("conv2d: padding must be >= 0, got " + std::to_string(padding));
    ConvGeom g;
    g.in_c = xs[0];
    g.in_h = xs[1];
    g.in_w = xs[2];
    g.out_c = kernel[0];
    g.kh = kernel[2];
    g.kw = kernel[3];
    g.stride = stride;
    g.padding = padding;
    if (kernel[1] != g.in_c)
        throw ShapeError("conv2d: kernel channels " + std::to_string(kernel[1]) + " vs input channels " +
                         std::to_string(g.in_c));
    if (g.in_h + 2 * padding < g.kh || g.in_w + 2 * padding < g.kw)
        throw ShapeError("conv2d: kernel " + shape_str(kernel) + " larger than padded input " + shape_str(x));
    g.out_h = (g.in_h + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.in_w + 2 * padding - g.kw) / stride + 1;
    return g;
}

template <typename T>
Tensor<T> im2col(const Tensor<T>& x, const ConvGeom& g) {
    Tensor<T> cols({g.patch(), g.spatial()});
    T* out = cols.data();
    const T* in = x.data();
    const int hw = g.in_h * g.in_w;
    int row = 0;
    for (int c = 0; c < g.in_c; ++c) {
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx, ++row) {
                T* orow = out + static_cast<size_t>(row) * g.spatial();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride + ky - g.padding;
                    T* op = orow + static_cast<size_t>(oy) * g.out_w;
                    if (iy < 0 || iy >= g.in_h) {
                        for (int ox = 0; ox < g.out_w; ++ox) op[ox] = T(0);
                        continue;
                    }
                    const T* irow = in + static_cast<size_t>(c) * hw + static_cast<size_t>(iy) * g.in_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride + kx - g.padding;
                        op[ox] = (ix < 0 || ix >= g.in_w) ? T(0) : irow[ix];
                    }
                }
            }
        }
    }
    return cols;
}

template <typename T>
void col2im_acc(Tensor<T>& gx, const Tensor<T>& gcols, const ConvGeom& g) {
    T* out = gx.data();
    const T* in = gcols.data();
    const int hw = g.in_h * g.in_w;
    int row = 0;
    for (int c = 0; c < g.in_c; ++c) {
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx, ++row) {
                const T* irow = in + static_cast<size_t>(row) * g.spatial();
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride + ky - g.padding;
                    if (iy < 0 || iy >= g.in_h) continue;
                    T* orow = out + static_cast<size_t>(c) * hw + static_cast<size_t>(iy) * g.in_w;
                    const T* ip = irow + static_cast<size_t>(oy) * g.out_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        const int ix = ox * g.stride + kx - g.padding;
                        if (ix >= 0 && ix < g.in_w) orow[ix] += ip[ox];
                    }
                }
            }
        }
    }
}

namespace {

template <typename T>
Tensor<T> conv2d_single(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>* bias, const ConvGeom& g) {
    const Tensor<T> cols = im2col(x, g);
    Tensor<T> y({g.out_c, g.out_h, g.out_w});
    kernels::gemm(kernel.data(), cols.data(), y.data(), g.out_c, g.patch(), g.spatial());
    if (bias) {
        if (bias->rank() != 1 || bias->dim(0) != g.out_c)
            throw ShapeError("conv2d: bias " + shape_str(bias->shape()) + " vs out channels " +
                             std::to_string(g.out_c));
        for (int o = 0; o < g.out_c; ++o) {
            T* row = y.data() + static_cast<size_t>(o) * g.spatial();
            const T bv = (*bias)[static_cast<size_t>(o)];
            for (int s = 0; s < g.spatial(); ++s) row[s] += bv;
        }
    }
    return y;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>* bias, int stride, int padding) {
    const ConvGeom g = conv_geometry(x.shape(), kernel.shape(), stride, padding);
    if (x.rank() == 3) return conv2d_single(x, kernel, bias, g);
    const int n = x.dim(0);
    Tensor<T> y({n, g.out_c, g.out_h, g.out_w});
    const size_t in_stride = static_cast<size_t>(g.in_c) * g.in_h * g.in_w;
    const size_t out_stride = static_cast<size_t>(g.out_c) * g.spatial();
    for (int i = 0; i < n; ++i) {
        Tensor<T> xi({g.in_c, g.in_h, g.in_w});
        std::memcpy(xi.data(), x.data() + static_cast<size_t>(i) * in_stride, in_stride * sizeof(T));
        const Tensor<T> yi = conv2d_single(xi, kernel, bias, g);
        std::memcpy(y.data() + static_cast<size_t>(i) * out_stride, yi.data(), out_stride * sizeof(T));
    }
    return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> y(x.shape());
    kernels::relu(y.data(), x.data(), x.size());
    return y;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "add");
    Tensor<T> y(a.shape());
    kernels::vadd(y.data(), a.data(), b.data(), a.size());
    return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "sub");
    Tensor<T> y(a.shape());
    kernels::vsub(y.data(), a.data(), b.data(), a.size());
    return y;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape(a, b, "mul");
    Tensor<T> y(a.shape());
    kernels::vmul(y.data(), a.data(), b.data(), a.size());
    return y;
}

template <typename T>
Tensor<T> abs(const Tensor<T>& a) {
    Tensor<T> y(a.shape());
    kernels::vabs(y.data(), a.data(), a.size());
    return y;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T alpha, T beta) {
    Tensor<T> y(a.shape());
    kernels::vscale(y.data(), a.data(), alpha, beta, a.size());
    return y;
}

template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, int target) {
    const int n = static_cast<int>(logits.size());
    if (target < 0 || target >= n)
        throw Error("softmax_cross_entropy: target " + std::to_string(target) + " out of range [0," +
                    std::to_string(n) + ")");
    const T yt = logits[static_cast<size_t>(target)];
    T m = T(0);  // z_target == 0 participates in the max
    for (int i = 0; i < n; ++i) {
        const T z = logits[static_cast<size_t>(i)] - yt;
        if (z > m) m = z;
    }
    T s = T(0);
    for (int i = 0; i < n; ++i) s += std::exp((logits[static_cast<size_t>(i)] - yt) - m);
    return m + std::log(s);
}

template <typename T>
T margin_loss(const Tensor<T>& logits, int target_true, int target_attack) {
    const int n = static_cast<int>(logits.size());
    if (target_true < 0 || target_true >= n || target_attack < 0 || target_attack >= n)
        throw Error("margin_loss: class index out of range");
    if (target_attack == target_true) throw Error("margin_loss: attack target equals true class");
    return logits[static_cast<size_t>(target_attack)] - logits[static_cast<size_t>(target_true)];
}

template <typename T>
int argmax(const Tensor<T>& v) {
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = static_cast<int>(i);
    return best;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
    if (a.rank() != 2) throw ShapeError("transpose2d: rank-2 required, got " + shape_str(a.shape()));
    const int m = a.dim(0), n = a.dim(1);
    Tensor<T> t({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) t.data()[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
    return t;
}

#define SABR_INSTANTIATE(T)                                                                       \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*, int, int); \
    template Tensor<T> relu<T>(const Tensor<T>&);                                                 \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> abs<T>(const Tensor<T>&);                                                  \
    template Tensor<T> scale<T>(const Tensor<T>&, T, T);                                          \
    template T softmax_cross_entropy<T>(const Tensor<T>&, int);                                   \
    template T margin_loss<T>(const Tensor<T>&, int, int);                                        \
    template int argmax<T>(const Tensor<T>&);                                                     \
    template Tensor<T> im2col<T>(const Tensor<T>&, const ConvGeom&);                              \
    template void col2im_acc<T>(Tensor<T>&, const Tensor<T>&, const ConvGeom&);                   \
    template Tensor<T> transpose2d<T>(const Tensor<T>&);

SABR_INSTANTIATE(float)
SABR_INSTANTIATE(double)

#undef SABR_INSTANTIATE

}  // namespace sabr::ops
