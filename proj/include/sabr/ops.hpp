#pragma once

#include "sabr/tensor.hpp"

namespace sabr::ops {

// Eager tensor math used by verification and evaluation paths (no tape).
// Training goes through Tape, which shares the same kernels, so tape and
// eager forwards are bit-identical.

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

struct ConvGeom {
    int in_c, in_h, in_w;
    int out_c, out_h, out_w;
    int kh, kw, stride, padding;
    int patch() const { return in_c * kh * kw; }
    int spatial() const { return out_h * out_w; }
};

// Validates shapes/hyperparameters; throws on invalid stride/padding or a
// kernel larger than the padded input.
ConvGeom conv_geometry(const Shape& x, const Shape& kernel, int stride, int padding);

// Cross-correlation. x is [C,H,W] or [N,C,H,W]; kernel [O,C,kh,kw]; bias
// optional [O].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>* bias, int stride, int padding);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> abs(const Tensor<T>& a);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T alpha, T beta = T(0));

// ln(1 + sum_{i != t} exp(y_i - y_t)), max-stabilised.
template <typename T>
T softmax_cross_entropy(const Tensor<T>& logits, int target);

// y_attack - y_true
template <typename T>
T margin_loss(const Tensor<T>& logits, int target_true, int target_attack);

template <typename T>
int argmax(const Tensor<T>& v);

// im2col patch matrix [C*kh*kw, out_h*out_w] for a [C,H,W] input.
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, const ConvGeom& g);

// Scatter-add of a patch-matrix gradient back to [C,H,W].
template <typename T>
void col2im_acc(Tensor<T>& gx, const Tensor<T>& gcols, const ConvGeom& g);

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a);

}  // namespace sabr::ops
