#include "sabr/autodiff.hpp"

#include <cmath>
#include <cstring>

#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"

namespace sabr {

namespace {

// dst += sign(w) * src, elementwise
template <typename T>
void sign_mul_acc(T* dst, const T* w, const T* src, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        if (w[i] > T(0))
            dst[i] += src[i];
        else if (w[i] < T(0))
            dst[i] -= src[i];
    }
}

}  // namespace

template <typename T>
Val Tape<T>::push(Tensor<T> value, bool requires_grad) {
    slots_.push_back({std::move(value), Tensor<T>(), requires_grad});
    return Val{static_cast<int>(slots_.size()) - 1};
}

template <typename T>
Val Tape<T>::leaf(const Tensor<T>& v, bool requires_grad) {
    return push(v, requires_grad);
}

template <typename T>
Tensor<T>& Tape<T>::grad(Val v) {
    Slot& s = slots_[static_cast<size_t>(v.i)];
    if (s.grad.empty()) s.grad = Tensor<T>(s.value.shape());
    return s.grad;
}

template <typename T>
Val Tape<T>::matmul(Val a, Val b) {
    const Tensor<T>& av = value(a);
    const Tensor<T>& bv = value(b);
    Tensor<T> y = ops::matmul(av, bv);
    const bool req = requires_grad(a) || requires_grad(b);
    Val out = push(std::move(y), req);
    if (req) {
        record([a, b, out](Tape& t) {
            if (!t.has_grad(out)) return;
            const Tensor<T>& g = t.grad(out);
            const Tensor<T>& av = t.value(a);
            const Tensor<T>& bv = t.value(b);
            const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
            if (t.requires_grad(a)) {
                const Tensor<T> bt = ops::transpose2d(bv);
                kernels::gemm(g.data(), bt.data(), t.grad(a).data(), m, n, k, true);
            }
            if (t.requires_grad(b)) {
                const Tensor<T> at = ops::transpose2d(av);
                kernels::gemm(at.data(), g.data(), t.grad(b).data(), k, m, n, true);
            }
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::relu(Val x) {
    Tensor<T> y(value(x).shape());
    kernels::relu(y.data(), value(x).data(), y.size());
    const bool req = requires_grad(x);
    Val out = push(std::move(y), req);
    if (req) {
        record([x, out](Tape& t) {
            if (!t.has_grad(out)) return;
            kernels::relu_backward(t.grad(x).data(), t.grad(out).data(), t.value(x).data(), t.value(x).size());
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::add(Val a, Val b) {
    require_same_shape(value(a), value(b), "tape add");
    Tensor<T> y(value(a).shape());
    kernels::vadd(y.data(), value(a).data(), value(b).data(), y.size());
    const bool req = requires_grad(a) || requires_grad(b);
    Val out = push(std::move(y), req);
    if (req) {
        record([a, b, out](Tape& t) {
            if (!t.has_grad(out)) return;
            const Tensor<T>& g = t.grad(out);
            if (t.requires_grad(a)) kernels::axpy(t.grad(a).data(), T(1), g.data(), g.size());
            if (t.requires_grad(b)) kernels::axpy(t.grad(b).data(), T(1), g.data(), g.size());
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::sub(Val a, Val b) {
    require_same_shape(value(a), value(b), "tape sub");
    Tensor<T> y(value(a).shape());
    kernels::vsub(y.data(), value(a).data(), value(b).data(), y.size());
    const bool req = requires_grad(a) || requires_grad(b);
    Val out = push(std::move(y), req);
    if (req) {
        record([a, b, out](Tape& t) {
            if (!t.has_grad(out)) return;
            const Tensor<T>& g = t.grad(out);
            if (t.requires_grad(a)) kernels::axpy(t.grad(a).data(), T(1), g.data(), g.size());
            if (t.requires_grad(b)) kernels::axpy(t.grad(b).data(), T(-1), g.data(), g.size());
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::mul(Val a, Val b) {
    require_same_shape(value(a), value(b), "tape mul");
    Tensor<T> y(value(a).shape());
    kernels::vmul(y.data(), value(a).data(), value(b).data(), y.size());
    const bool req = requires_grad(a) || requires_grad(b);
    Val out = push(std::move(y), req);
    if (req) {
        record([a, b, out](Tape& t) {
            if (!t.has_grad(out)) return;
            const Tensor<T>& g = t.grad(out);
            Tensor<T> tmp(g.shape());
            if (t.requires_grad(a)) {
                kernels::vmul(tmp.data(), g.data(), t.value(b).data(), g.size());
                kernels::axpy(t.grad(a).data(), T(1), tmp.data(), g.size());
            }
            if (t.requires_grad(b)) {
                kernels::vmul(tmp.data(), g.data(), t.value(a).data(), g.size());
                kernels::axpy(t.grad(b).data(), T(1), tmp.data(), g.size());
            }
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::scale(Val a, T alpha) {
    Tensor<T> y(value(a).shape());
    kernels::vscale(y.data(), value(a).data(), alpha, T(0), y.size());
    const bool req = requires_grad(a);
    Val out = push(std::move(y), req);
    if (req) {
        record([a, out, alpha](Tape& t) {
            if (!t.has_grad(out)) return;
            kernels::axpy(t.grad(a).data(), alpha, t.grad(out).data(), t.grad(out).size());
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::abs(Val a) {
    Tensor<T> y(value(a).shape());
    kernels::vabs(y.data(), value(a).data(), y.size());
    const bool req = requires_grad(a);
    Val out = push(std::move(y), req);
    if (req) {
        record([a, out](Tape& t) {
            if (!t.has_grad(out)) return;
            sign_mul_acc(t.grad(a).data(), t.value(a).data(), t.grad(out).data(), t.value(a).size());
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::reshape(Val a, Shape s) {
    Tensor<T> y = value(a).reshaped(std::move(s));  // shares the buffer
    const bool req = requires_grad(a);
    Val out = push(std::move(y), req);
    if (req) {
        record([a, out](Tape& t) {
            if (!t.has_grad(out)) return;
            kernels::axpy(t.grad(a).data(), T(1), t.grad(out).data(), t.grad(out).size());
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::sum(Val a) {
    Tensor<T> y({1});
    y[0] = kernels::sum(value(a).data(), value(a).size());
    const bool req = requires_grad(a);
    Val out = push(std::move(y), req);
    if (req) {
        record([a, out](Tape& t) {
            if (!t.has_grad(out)) return;
            const T g = t.grad(out)[0];
            Tensor<T>& ga = t.grad(a);
            for (size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::softmax_cross_entropy(Val logits, int target) {
    const Tensor<T>& lv = value(logits);
    const int n = static_cast<int>(lv.size());
    if (target < 0 || target >= n)
        throw Error("softmax_cross_entropy: target " + std::to_string(target) + " out of range [0," +
                    std::to_string(n) + ")");
    const T yt = lv[static_cast<size_t>(target)];
    T m = T(0);
    for (int i = 0; i < n; ++i) {
        const T z = lv[static_cast<size_t>(i)] - yt;
        if (z > m) m = z;
    }
    T s = T(0);
    Tensor<T> p({n});
    for (int i = 0; i < n; ++i) {
        const T e = std::exp((lv[static_cast<size_t>(i)] - yt) - m);
        p[static_cast<size_t>(i)] = e;
        s += e;
    }
    Tensor<T> y({1});
    y[0] = m + std::log(s);
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] /= s;

    const bool req = requires_grad(logits);
    Val out = push(std::move(y), req);
    if (req) {
        record([logits, out, p, target](Tape& t) {
            if (!t.has_grad(out)) return;
            const T g = t.grad(out)[0];
            Tensor<T>& gl = t.grad(logits);
            for (size_t i = 0; i < p.size(); ++i) gl[i] += g * p[i];
            gl[static_cast<size_t>(target)] -= g;
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::margin(Val logits, int target_true, int target_attack) {
    const Tensor<T>& lv = value(logits);
    const int n = static_cast<int>(lv.size());
    if (target_true < 0 || target_true >= n || target_attack < 0 || target_attack >= n)
        throw Error("margin: class index out of range");
    if (target_attack == target_true) throw Error("margin: attack target equals true class");
    Tensor<T> y({1});
    y[0] = lv[static_cast<size_t>(target_attack)] - lv[static_cast<size_t>(target_true)];
    const bool req = requires_grad(logits);
    Val out = push(std::move(y), req);
    if (req) {
        record([logits, out, target_true, target_attack](Tape& t) {
            if (!t.has_grad(out)) return;
            const T g = t.grad(out)[0];
            Tensor<T>& gl = t.grad(logits);
            gl[static_cast<size_t>(target_attack)] += g;
            gl[static_cast<size_t>(target_true)] -= g;
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::affine(Val x, Val w, Val b, const Tensor<T>& w_fwd, Tensor<T> w_bwd_t, bool use_abs) {
    const Tensor<T>& xv = value(x);
    const int in = w_fwd.dim(0), out_dim = w_fwd.dim(1);
    if (static_cast<int>(xv.size()) != in)
        throw ShapeError("affine: input " + shape_str(xv.shape()) + " vs weight " + shape_str(w_fwd.shape()));
    Tensor<T> y({out_dim});
    kernels::gemm(xv.data(), w_fwd.data(), y.data(), 1, in, out_dim);
    if (b.valid()) kernels::vadd(y.data(), y.data(), value(b).data(), y.size());

    const bool req = requires_grad(x) || requires_grad(w) || (b.valid() && requires_grad(b));
    Val outv = push(std::move(y), req);
    if (req) {
        // w_bwd_t was taken by value (shallow copy) before any slot push
        // could invalidate a reference to tape-owned storage.
        record([x, w, b, outv, w_bwd_t = std::move(w_bwd_t), use_abs, in, out_dim](Tape& t) {
            if (!t.has_grad(outv)) return;
            const Tensor<T>& g = t.grad(outv);
            if (t.requires_grad(x))
                kernels::gemm(g.data(), w_bwd_t.data(), t.grad(x).data(), 1, out_dim, in, true);
            if (t.requires_grad(w)) {
                if (use_abs)
                    kernels::outer_acc_signed(t.grad(w).data(), t.value(w).data(), t.value(x).data(), g.data(), in,
                                              out_dim);
                else
                    kernels::outer_acc(t.grad(w).data(), t.value(x).data(), g.data(), in, out_dim);
            }
            if (b.valid() && t.requires_grad(b)) kernels::axpy(t.grad(b).data(), T(1), g.data(), g.size());
        });
    }
    return outv;
}

template <typename T>
Val Tape<T>::conv2d(Val x, Val k, Val b, int stride, int padding, const Tensor<T>& k_fwd2d, Tensor<T> k_bwd_t,
                    bool use_abs) {
    const Tensor<T>& xv = value(x);
    const Tensor<T>& kv = value(k);
    const ops::ConvGeom g = ops::conv_geometry(xv.shape(), kv.shape(), stride, padding);
    const Tensor<T> cols = ops::im2col(xv, g);
    Tensor<T> y({g.out_c, g.out_h, g.out_w});
    kernels::gemm(k_fwd2d.data(), cols.data(), y.data(), g.out_c, g.patch(), g.spatial());
    if (b.valid()) {
        const Tensor<T>& bv = value(b);
        for (int o = 0; o < g.out_c; ++o) {
            T* row = y.data() + static_cast<size_t>(o) * g.spatial();
            for (int s = 0; s < g.spatial(); ++s) row[s] += bv[static_cast<size_t>(o)];
        }
    }

    const bool req = requires_grad(x) || requires_grad(k) || (b.valid() && requires_grad(b));
    Val outv = push(std::move(y), req);
    if (req) {
        record([x, k, b, outv, k_bwd_t = std::move(k_bwd_t), use_abs, g](Tape& t) {
            if (!t.has_grad(outv)) return;
            const Tensor<T>& gy = t.grad(outv);
            if (b.valid() && t.requires_grad(b)) {
                Tensor<T>& gb = t.grad(b);
                for (int o = 0; o < g.out_c; ++o)
                    gb[static_cast<size_t>(o)] +=
                        kernels::sum(gy.data() + static_cast<size_t>(o) * g.spatial(), static_cast<size_t>(g.spatial()));
            }
            const bool need_k = t.requires_grad(k);
            const bool need_x = t.requires_grad(x);
            if (!need_k && !need_x) return;
            const Tensor<T> cols = ops::im2col(t.value(x), g);
            if (need_k) {
                const Tensor<T> cols_t = ops::transpose2d(cols);
                Tensor<T> gk2d({g.out_c, g.patch()});
                kernels::gemm(gy.data(), cols_t.data(), gk2d.data(), g.out_c, g.spatial(), g.patch());
                Tensor<T>& gk = t.grad(k);
                if (use_abs)
                    sign_mul_acc(gk.data(), t.value(k).data(), gk2d.data(), gk.size());
                else
                    kernels::axpy(gk.data(), T(1), gk2d.data(), gk.size());
            }
            if (need_x) {
                Tensor<T> gcols({g.patch(), g.spatial()});
                kernels::gemm(k_bwd_t.data(), gy.data(), gcols.data(), g.patch(), g.out_c, g.spatial());
                Tensor<T>& gx = t.grad(x);
                ops::col2im_acc(gx, gcols, g);
            }
        });
    }
    return outv;
}

template <typename T>
Val Tape<T>::conv2d(Val x, Val k, Val b, int stride, int padding) {
    const Tensor<T>& kv = value(k);
    const int o = kv.dim(0);
    const int patch = static_cast<int>(kv.size()) / o;
    // Generic path: keep the reshaped kernel and its transpose alive in
    // the closure via slot-stored tensors.
    const Tensor<T> k2d = kv.reshaped({o, patch});
    Val kt = push(ops::transpose2d(k2d), false);
    return conv2d(x, k, b, stride, padding, value(k).reshaped({o, patch}), value(kt), false);
}

template <typename T>
std::pair<Val, Val> Tape<T>::box_relu(Val c, Val r, T cs) {
    require_same_shape(value(c), value(r), "box_relu");
    if (!(cs > T(0) && cs <= T(1))) throw Error("box_relu: shrink coefficient must be in (0,1]");
    const size_t n = value(c).size();
    Tensor<T> oc(value(c).shape());
    Tensor<T> orr(value(c).shape());
    std::vector<uint8_t> mask(n);
    kernels::box_relu(oc.data(), orr.data(), mask.data(), value(c).data(), value(r).data(), cs, n);

    const bool req = requires_grad(c) || requires_grad(r);
    Val out_c = push(std::move(oc), req);
    Val out_r = push(std::move(orr), req);
    if (req) {
        record([c, r, out_c, out_r, mask = std::move(mask), cs](Tape& t) {
            const bool hc = t.has_grad(out_c), hr = t.has_grad(out_r);
            if (!hc && !hr) return;
            Tensor<T> zero;
            if (!hc || !hr) zero = Tensor<T>(t.value(out_c).shape());
            const T* goc = hc ? t.grad(out_c).data() : zero.data();
            const T* gor = hr ? t.grad(out_r).data() : zero.data();
            kernels::box_relu_backward(t.grad(c).data(), t.grad(r).data(), goc, gor, mask.data(), cs, mask.size());
        });
    }
    return {out_c, out_r};
}

template <typename T>
Val Tape<T>::bn_centre(Val x, Val gamma, Val beta, const Tensor<T>& mean, const Tensor<T>& inv_std) {
    const Tensor<T>& xv = value(x);
    const int ch = static_cast<int>(mean.size());
    const int spatial = static_cast<int>(xv.size()) / ch;
    const Tensor<T>& gv = value(gamma);
    const Tensor<T>& bv = value(beta);
    Tensor<T> y(xv.shape());
    for (int c = 0; c < ch; ++c) {
        const T a = gv[static_cast<size_t>(c)] * inv_std[static_cast<size_t>(c)];
        const T b = bv[static_cast<size_t>(c)] - a * mean[static_cast<size_t>(c)];
        kernels::vscale(y.data() + static_cast<size_t>(c) * spatial, xv.data() + static_cast<size_t>(c) * spatial, a,
                        b, static_cast<size_t>(spatial));
    }
    const bool req = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
    Val out = push(std::move(y), req);
    if (req) {
        record([x, gamma, beta, out, mean, inv_std, ch, spatial](Tape& t) {
            if (!t.has_grad(out)) return;
            const Tensor<T>& g = t.grad(out);
            for (int c = 0; c < ch; ++c) {
                const size_t off = static_cast<size_t>(c) * spatial;
                const T a = t.value(gamma)[static_cast<size_t>(c)] * inv_std[static_cast<size_t>(c)];
                if (t.requires_grad(x))
                    kernels::axpy(t.grad(x).data() + off, a, g.data() + off, static_cast<size_t>(spatial));
                if (t.requires_grad(gamma)) {
                    T acc = T(0);
                    const T* xp = t.value(x).data() + off;
                    const T* gp = g.data() + off;
                    for (int s = 0; s < spatial; ++s)
                        acc += (xp[s] - mean[static_cast<size_t>(c)]) * gp[s];
                    t.grad(gamma)[static_cast<size_t>(c)] += inv_std[static_cast<size_t>(c)] * acc;
                }
                if (t.requires_grad(beta))
                    t.grad(beta)[static_cast<size_t>(c)] += kernels::sum(g.data() + off, static_cast<size_t>(spatial));
            }
        });
    }
    return out;
}

template <typename T>
Val Tape<T>::bn_radius(Val r, Val gamma, const Tensor<T>& inv_std) {
    const Tensor<T>& rv = value(r);
    const int ch = static_cast<int>(inv_std.size());
    const int spatial = static_cast<int>(rv.size()) / ch;
    const Tensor<T>& gv = value(gamma);
    Tensor<T> y(rv.shape());
    for (int c = 0; c < ch; ++c) {
        T a = gv[static_cast<size_t>(c)] * inv_std[static_cast<size_t>(c)];
        a = a < T(0) ? -a : a;
        kernels::vscale(y.data() + static_cast<size_t>(c) * spatial, rv.data() + static_cast<size_t>(c) * spatial, a,
                        T(0), static_cast<size_t>(spatial));
    }
    const bool req = requires_grad(r) || requires_grad(gamma);
    Val out = push(std::move(y), req);
    if (req) {
        record([r, gamma, out, inv_std, ch, spatial](Tape& t) {
            if (!t.has_grad(out)) return;
            const Tensor<T>& g = t.grad(out);
            for (int c = 0; c < ch; ++c) {
                const size_t off = static_cast<size_t>(c) * spatial;
                const T gam = t.value(gamma)[static_cast<size_t>(c)];
                T a = gam * inv_std[static_cast<size_t>(c)];
                const T aabs = a < T(0) ? -a : a;
                if (t.requires_grad(r))
                    kernels::axpy(t.grad(r).data() + off, aabs, g.data() + off, static_cast<size_t>(spatial));
                if (t.requires_grad(gamma)) {
                    T acc = T(0);
                    const T* rp = t.value(r).data() + off;
                    const T* gp = g.data() + off;
                    for (int s = 0; s < spatial; ++s) acc += rp[s] * gp[s];
                    const T sgn = gam > T(0) ? T(1) : (gam < T(0) ? T(-1) : T(0));
                    t.grad(gamma)[static_cast<size_t>(c)] += sgn * inv_std[static_cast<size_t>(c)] * acc;
                }
            }
        });
    }
    return out;
}

template <typename T>
void Tape<T>::backward(Val root) {
    if (!root.valid() || value(root).size() != 1) throw Error("backward: root must be a scalar value");
    grad(root)[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->bwd(*this);
    for (auto& s : slots_)
        if (s.requires_grad && s.grad.empty()) s.grad = Tensor<T>(s.value.shape());
}

// --- TapeNet ---

template <typename T>
TapeNet<T>::TapeNet(Tape<T>& t, const Network<T>& n, bool params_require_grad) : tape(&t), net(&n) {
    leaves.resize(n.layers.size());
    for (size_t i = 0; i < n.layers.size(); ++i) {
        const auto& l = n.layers[i];
        if (l.kind == LayerKind::Linear || l.kind == LayerKind::Conv2d || l.kind == LayerKind::BatchNormAffine) {
            leaves[i].w = t.leaf(l.weight, params_require_grad);
            leaves[i].b = t.leaf(l.bias, params_require_grad);
        }
    }
}

template <typename T>
Val TapeNet<T>::forward(Val x) {
    Val cur = x;
    for (size_t i = 0; i < net->layers.size(); ++i) {
        const auto& l = net->layers[i];
        switch (l.kind) {
            case LayerKind::Linear:
                cur = tape->affine(cur, leaves[i].w, leaves[i].b, l.weight, l.w_t, false);
                break;
            case LayerKind::Conv2d: {
                const int o = l.weight.dim(0);
                const int patch = static_cast<int>(l.weight.size()) / o;
                cur = tape->conv2d(cur, leaves[i].w, leaves[i].b, l.stride, l.padding, l.weight.reshaped({o, patch}),
                                   l.w_t, false);
                break;
            }
            case LayerKind::ReLU:
                cur = tape->relu(cur);
                break;
            case LayerKind::Flatten:
                cur = tape->reshape(cur, {static_cast<int>(tape->value(cur).size())});
                break;
            case LayerKind::BatchNormAffine: {
                cur = tape->bn_centre(cur, leaves[i].w, leaves[i].b, l.run_mean, l.bn_inv_std);
                break;
            }
        }
    }
    return cur;
}

template <typename T>
std::pair<Val, Val> TapeNet<T>::forward_box(Val centre, Val radius, T cs_default) {
    Val c = centre, r = radius;
    for (size_t i = 0; i < net->layers.size(); ++i) {
        const auto& l = net->layers[i];
        switch (l.kind) {
            case LayerKind::Linear: {
                c = tape->affine(c, leaves[i].w, leaves[i].b, l.weight, l.w_t, false);
                r = tape->affine(r, leaves[i].w, Val{}, l.w_abs, l.w_abs_t, true);
                break;
            }
            case LayerKind::Conv2d: {
                const int o = l.weight.dim(0);
                const int patch = static_cast<int>(l.weight.size()) / o;
                c = tape->conv2d(c, leaves[i].w, leaves[i].b, l.stride, l.padding, l.weight.reshaped({o, patch}),
                                 l.w_t, false);
                r = tape->conv2d(r, leaves[i].w, Val{}, l.stride, l.padding, l.w_abs.reshaped({o, patch}), l.w_abs_t,
                                 true);
                break;
            }
            case LayerKind::ReLU: {
                const T cs = static_cast<T>(l.cs_override ? *l.cs_override : static_cast<double>(cs_default));
                auto [nc, nr] = tape->box_relu(c, r, cs);
                c = nc;
                r = nr;
                break;
            }
            case LayerKind::Flatten: {
                const Shape flat = {static_cast<int>(tape->value(c).size())};
                c = tape->reshape(c, flat);
                r = tape->reshape(r, flat);
                break;
            }
            case LayerKind::BatchNormAffine: {
                c = tape->bn_centre(c, leaves[i].w, leaves[i].b, l.run_mean, l.bn_inv_std);
                r = tape->bn_radius(r, leaves[i].w, l.bn_inv_std);
                break;
            }
        }
    }
    return {c, r};
}

template <typename T>
void TapeNet<T>::add_param_grads(std::vector<Tensor<T>>& grads) const {
    const auto params = trainable_params(*net);
    if (grads.size() != params.size()) throw Error("add_param_grads: buffer count mismatch");
    for (size_t k = 0; k < params.size(); ++k) {
        const auto& lf = leaves[static_cast<size_t>(params[k].layer)];
        const Val v = params[k].is_weight ? lf.w : lf.b;
        if (v.valid() && tape->has_grad(v)) {
            const Tensor<T>& g = tape->grad(v);
            kernels::axpy(grads[k].data(), T(1), g.data(), g.size());
        }
    }
}

template <typename T>
Val logit_diff_upper(Tape<T>& tape, Val centre, Val radius, int target) {
    const int n = static_cast<int>(tape.value(centre).size());
    if (target < 0 || target >= n) throw Error("logit_diff_upper: target out of range");
    // Difference matrix in [in,out] layout: column j holds e_j - e_t for
    // j != t and zeros for j == t.
    Tensor<T> cmat({n, n});
    Tensor<T> cabs({n, n});
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            T v = T(0);
            if (j != target) {
                if (i == j) v = T(1);
                if (i == target) v = v - T(1);
            }
            cmat.data()[static_cast<size_t>(i) * n + j] = v;
            cabs.data()[static_cast<size_t>(i) * n + j] = v < T(0) ? -v : v;
        }
    }
    Val cm = tape.leaf(cmat, false);
    Val ca = tape.leaf(cabs, false);
    Val dc = tape.matmul(tape.reshape(centre, {1, n}), cm);
    Val dr = tape.matmul(tape.reshape(radius, {1, n}), ca);
    return tape.reshape(tape.add(dc, dr), {n});
}

#define SABR_INSTANTIATE(T)                 \
    template class Tape<T>;                 \
    template struct TapeNet<T>;             \
    template Val logit_diff_upper<T>(Tape<T>&, Val, Val, int);

SABR_INSTANTIATE(float)
SABR_INSTANTIATE(double)

#undef SABR_INSTANTIATE

}  // namespace sabr
