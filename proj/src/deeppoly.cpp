#include "sabr/deeppoly.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"

namespace sabr {

namespace {

// Internal normal form: affine stages y = M x + d with M [n_out, n_in]
// row-major, diagonal stages y = s (.) x + t, and ReLU stages whose
// relaxation coefficients get filled during the forward sweep. Flatten
// disappears (pure reshape).
struct Stage {
    enum class Kind { Affine, Diag, Relu } kind;
    int layer = -1;  // originating network layer
    int n_in = 0, n_out = 0;
    Tensor<double> M, d;
    Tensor<double> s, t;
    Tensor<double> lam_lo, lam_up, mu_up;  // Relu, filled in sweep
    Tensor<double> lo, hi;                 // concrete output bounds (intersected)
};

Tensor<double> conv_dense_matrix(const Layer<double>& l, const Shape& in_shape, const ops::ConvGeom& g) {
    (void)in_shape;
    const int n_in = g.in_c * g.in_h * g.in_w;
    const int n_out = g.out_c * g.spatial();
    Tensor<double> m({n_out, n_in});
    const int hw = g.in_h * g.in_w;
    for (int o = 0; o < g.out_c; ++o) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                const size_t row = (static_cast<size_t>(o) * g.out_h + oy) * g.out_w + ox;
                double* mp = m.data() + row * n_in;
                for (int c = 0; c < g.in_c; ++c) {
                    for (int ky = 0; ky < g.kh; ++ky) {
                        const int iy = oy * g.stride + ky - g.padding;
                        if (iy < 0 || iy >= g.in_h) continue;
                        for (int kx = 0; kx < g.kw; ++kx) {
                            const int ix = ox * g.stride + kx - g.padding;
                            if (ix < 0 || ix >= g.in_w) continue;
                            mp[static_cast<size_t>(c) * hw + static_cast<size_t>(iy) * g.in_w + ix] =
                                l.weight.at({o, c, ky, kx});
                        }
                    }
                }
            }
        }
    }
    return m;
}

struct DpContext {
    std::vector<Stage> stages;
    std::vector<int> layer_to_stage;  // -1 for Flatten
    BoxTensor<double> input;
};

// Backsubstitute an affine query Q x_k + c (Q rows are query neurons,
// paper layout) from after stage `from` down to the input box. Returns
// lower/upper interval per row; want_lo/want_hi control the work done.
void backsubstitute(const DpContext& ctx, int from, Tensor<double> q, Tensor<double> c, bool want_lo, bool want_hi,
                    Tensor<double>* out_lo, Tensor<double>* out_hi) {
    const int rows = q.dim(0);
    Tensor<double> q_lo, c_lo, q_up, c_up;
    bool forked = false;

    auto col_scale = [](Tensor<double>& m, const Tensor<double>& s) {
        const int r = m.dim(0), n = m.dim(1);
        for (int i = 0; i < r; ++i)
            kernels::vmul(m.data() + static_cast<size_t>(i) * n, m.data() + static_cast<size_t>(i) * n, s.data(),
                          static_cast<size_t>(n));
    };
    auto add_const = [](Tensor<double>& c, const Tensor<double>& m, const Tensor<double>& d) {
        kernels::gemm(m.data(), d.data(), c.data(), m.dim(0), m.dim(1), 1, true);
    };

    for (int j = from; j >= 0; --j) {
        const Stage& st = ctx.stages[static_cast<size_t>(j)];
        switch (st.kind) {
            case Stage::Kind::Affine: {
                if (!forked) {
                    add_const(c, q, st.d);
                    Tensor<double> nq({rows, st.n_in});
                    kernels::gemm(q.data(), st.M.data(), nq.data(), rows, st.n_out, st.n_in);
                    q = std::move(nq);
                } else {
                    for (auto* pq : {&q_lo, &q_up}) {
                        Tensor<double>& cc = (pq == &q_lo) ? c_lo : c_up;
                        if ((pq == &q_lo && !want_lo) || (pq == &q_up && !want_hi)) continue;
                        add_const(cc, *pq, st.d);
                        Tensor<double> nq({rows, st.n_in});
                        kernels::gemm(pq->data(), st.M.data(), nq.data(), rows, st.n_out, st.n_in);
                        *pq = std::move(nq);
                    }
                }
                break;
            }
            case Stage::Kind::Diag: {
                if (!forked) {
                    add_const(c, q, st.t);
                    col_scale(q, st.s);
                } else {
                    if (want_lo) {
                        add_const(c_lo, q_lo, st.t);
                        col_scale(q_lo, st.s);
                    }
                    if (want_hi) {
                        add_const(c_up, q_up, st.t);
                        col_scale(q_up, st.s);
                    }
                }
                break;
            }
            case Stage::Kind::Relu: {
                if (!forked) {
                    forked = true;
                    q_lo = want_lo ? q.clone() : Tensor<double>();
                    c_lo = want_lo ? c.clone() : Tensor<double>();
                    q_up = want_hi ? std::move(q) : Tensor<double>();
                    c_up = want_hi ? std::move(c) : Tensor<double>();
                }
                const int n = st.n_out;
                auto substitute = [&](Tensor<double>& qq, Tensor<double>& cc, bool upper) {
                    Tensor<double> pos({rows, n}), neg({rows, n});
                    kernels::relu(pos.data(), qq.data(), qq.size());
                    kernels::vsub(neg.data(), qq.data(), pos.data(), qq.size());
                    // upper bound: positive rows take the upper relaxation,
                    // negative the lower; swapped for the lower bound.
                    const Tensor<double>& lam_p = upper ? st.lam_up : st.lam_lo;
                    const Tensor<double>& lam_n = upper ? st.lam_lo : st.lam_up;
                    // constants: only the upper relaxation has an offset
                    if (upper)
                        add_const(cc, pos, st.mu_up);
                    else
                        add_const(cc, neg, st.mu_up);
                    col_scale(pos, lam_p);
                    col_scale(neg, lam_n);
                    kernels::vadd(qq.data(), pos.data(), neg.data(), qq.size());
                };
                if (want_lo) substitute(q_lo, c_lo, false);
                if (want_hi) substitute(q_up, c_up, true);
                break;
            }
        }
    }

    const Tensor<double>& xb = ctx.input.centre;
    const Tensor<double>& rb = ctx.input.radius;
    const int n_in = static_cast<int>(xb.size());
    auto interval_eval = [&](const Tensor<double>& qq, const Tensor<double>& cc, bool upper, Tensor<double>& out) {
        out = Tensor<double>({rows});
        Tensor<double> qa(qq.shape());
        kernels::vabs(qa.data(), qq.data(), qq.size());
        Tensor<double> mid({rows}), rad({rows});
        kernels::gemm(qq.data(), xb.data(), mid.data(), rows, n_in, 1);
        kernels::gemm(qa.data(), rb.data(), rad.data(), rows, n_in, 1);
        for (int i = 0; i < rows; ++i)
            out[static_cast<size_t>(i)] =
                upper ? mid[static_cast<size_t>(i)] + rad[static_cast<size_t>(i)] + cc[static_cast<size_t>(i)]
                      : mid[static_cast<size_t>(i)] - rad[static_cast<size_t>(i)] + cc[static_cast<size_t>(i)];
    };
    if (!forked) {
        if (want_lo) interval_eval(q, c, false, *out_lo);
        if (want_hi) interval_eval(q, c, true, *out_hi);
    } else {
        if (want_lo) interval_eval(q_lo, c_lo, false, *out_lo);
        if (want_hi) interval_eval(q_up, c_up, true, *out_hi);
    }
}

DpContext build_context(const Network<double>& net, const BoxTensor<double>& in) {
    if (in.centre.shape() != net.input_shape)
        throw ShapeError("deeppoly: input " + shape_str(in.centre.shape()) + " vs network input " +
                         shape_str(net.input_shape));
    DpContext ctx;
    ctx.input = {in.centre.reshaped({static_cast<int>(in.centre.size())}),
                 in.radius.reshaped({static_cast<int>(in.radius.size())})};

    const auto out_shapes = net.layer_output_shapes();
    int cur_n = static_cast<int>(numel(net.input_shape));
    Shape cur_shape = net.input_shape;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const Layer<double>& l = net.layers[i];
        const int next_n = static_cast<int>(numel(out_shapes[i]));
        switch (l.kind) {
            case LayerKind::Linear: {
                Stage st;
                st.kind = Stage::Kind::Affine;
                st.layer = static_cast<int>(i);
                st.n_in = cur_n;
                st.n_out = next_n;
                st.M = l.w_t.clone();  // [out,in]
                st.d = l.bias.clone();
                ctx.layer_to_stage.push_back(static_cast<int>(ctx.stages.size()));
                ctx.stages.push_back(std::move(st));
                break;
            }
            case LayerKind::Conv2d: {
                const ops::ConvGeom g = ops::conv_geometry(cur_shape, l.weight.shape(), l.stride, l.padding);
                Stage st;
                st.kind = Stage::Kind::Affine;
                st.layer = static_cast<int>(i);
                st.n_in = cur_n;
                st.n_out = next_n;
                st.M = conv_dense_matrix(l, cur_shape, g);
                st.d = Tensor<double>({next_n});
                for (int o = 0; o < g.out_c; ++o)
                    for (int s = 0; s < g.spatial(); ++s)
                        st.d[static_cast<size_t>(o) * g.spatial() + s] = l.bias[static_cast<size_t>(o)];
                ctx.layer_to_stage.push_back(static_cast<int>(ctx.stages.size()));
                ctx.stages.push_back(std::move(st));
                break;
            }
            case LayerKind::BatchNormAffine: {
                const int ch = l.weight.dim(0);
                const int spatial = cur_n / ch;
                Stage st;
                st.kind = Stage::Kind::Diag;
                st.layer = static_cast<int>(i);
                st.n_in = cur_n;
                st.n_out = next_n;
                st.s = Tensor<double>({cur_n});
                st.t = Tensor<double>({cur_n});
                for (int c = 0; c < ch; ++c) {
                    const double a = l.bn_scale[static_cast<size_t>(c)];
                    const double b = l.bias[static_cast<size_t>(c)] - a * l.run_mean[static_cast<size_t>(c)];
                    for (int s = 0; s < spatial; ++s) {
                        st.s[static_cast<size_t>(c) * spatial + s] = a;
                        st.t[static_cast<size_t>(c) * spatial + s] = b;
                    }
                }
                ctx.layer_to_stage.push_back(static_cast<int>(ctx.stages.size()));
                ctx.stages.push_back(std::move(st));
                break;
            }
            case LayerKind::ReLU: {
                Stage st;
                st.kind = Stage::Kind::Relu;
                st.layer = static_cast<int>(i);
                st.n_in = cur_n;
                st.n_out = next_n;
                ctx.layer_to_stage.push_back(static_cast<int>(ctx.stages.size()));
                ctx.stages.push_back(std::move(st));
                break;
            }
            case LayerKind::Flatten:
                ctx.layer_to_stage.push_back(-1);
                break;
        }
        cur_n = next_n;
        cur_shape = out_shapes[i];
    }
    return ctx;
}

// Forward sweep: concrete bounds per stage (backsubstituted, intersected
// with Box), ReLU relaxation parameters from the intersected pre-act
// bounds.
void sweep(DpContext& ctx, const BoxTrace<double>& box) {
    const Tensor<double>* in_c = &ctx.input.centre;
    const Tensor<double>* in_r = &ctx.input.radius;
    for (size_t s = 0; s < ctx.stages.size(); ++s) {
        Stage& st = ctx.stages[s];
        // Box bounds for this stage's output
        const BoxTensor<double>& bb = box.boxes[static_cast<size_t>(st.layer)];
        Tensor<double> blo(Shape{st.n_out}), bhi(Shape{st.n_out});
        for (int i = 0; i < st.n_out; ++i) {
            blo[static_cast<size_t>(i)] = bb.centre[static_cast<size_t>(i)] - bb.radius[static_cast<size_t>(i)];
            bhi[static_cast<size_t>(i)] = bb.centre[static_cast<size_t>(i)] + bb.radius[static_cast<size_t>(i)];
        }

        st.lo = Tensor<double>({st.n_out});
        st.hi = Tensor<double>({st.n_out});

        if (st.kind == Stage::Kind::Relu) {
            // pre-activation bounds: previous stage's intersected output,
            // or the input box for a leading ReLU
            Tensor<double> l(Shape{st.n_in}), u(Shape{st.n_in});
            if (s > 0) {
                const Stage& prev = ctx.stages[s - 1];
                l = prev.lo;
                u = prev.hi;
            } else {
                for (int i = 0; i < st.n_in; ++i) {
                    l[static_cast<size_t>(i)] = (*in_c)[static_cast<size_t>(i)] - (*in_r)[static_cast<size_t>(i)];
                    u[static_cast<size_t>(i)] = (*in_c)[static_cast<size_t>(i)] + (*in_r)[static_cast<size_t>(i)];
                }
            }
            st.lam_lo = Tensor<double>({st.n_in});
            st.lam_up = Tensor<double>({st.n_in});
            st.mu_up = Tensor<double>({st.n_in});
            for (int i = 0; i < st.n_in; ++i) {
                const double li = l[static_cast<size_t>(i)], ui = u[static_cast<size_t>(i)];
                double ll, lu, mu;
                if (ui <= 0.0) {
                    ll = lu = mu = 0.0;
                } else if (li >= 0.0) {
                    ll = lu = 1.0;
                    mu = 0.0;
                } else {
                    lu = ui / (ui - li);
                    mu = -lu * li;
                    ll = (ui > -li) ? 1.0 : 0.0;  // minimal area; ties to 0
                }
                st.lam_lo[static_cast<size_t>(i)] = ll;
                st.lam_up[static_cast<size_t>(i)] = lu;
                st.mu_up[static_cast<size_t>(i)] = mu;
                // backsubstituted concrete output of the relaxation; the
                // coefficients are nonnegative, so scaling the pre-act
                // interval is the exact backsubstituted value
                double lo_o = ll * li;
                double hi_o = lu * ui + mu;
                if (lo_o < blo[static_cast<size_t>(i)]) lo_o = blo[static_cast<size_t>(i)];
                if (hi_o > bhi[static_cast<size_t>(i)]) hi_o = bhi[static_cast<size_t>(i)];
                if (lo_o > hi_o) lo_o = hi_o;
                st.lo[static_cast<size_t>(i)] = lo_o;
                st.hi[static_cast<size_t>(i)] = hi_o;
            }
        } else {
            // full backsubstitution from this stage to the input
            Tensor<double> q, c;
            if (st.kind == Stage::Kind::Affine) {
                q = st.M.clone();
                c = st.d.clone();
            } else {
                q = Tensor<double>({st.n_out, st.n_in});
                c = st.t.clone();
                for (int i = 0; i < st.n_out; ++i)
                    q.data()[static_cast<size_t>(i) * st.n_in + i] = st.s[static_cast<size_t>(i)];
            }
            Tensor<double> lo, hi;
            backsubstitute(ctx, static_cast<int>(s) - 1, std::move(q), std::move(c), true, true, &lo, &hi);
            for (int i = 0; i < st.n_out; ++i) {
                double lo_o = lo[static_cast<size_t>(i)], hi_o = hi[static_cast<size_t>(i)];
                if (lo_o < blo[static_cast<size_t>(i)]) lo_o = blo[static_cast<size_t>(i)];
                if (hi_o > bhi[static_cast<size_t>(i)]) hi_o = bhi[static_cast<size_t>(i)];
                if (lo_o > hi_o) lo_o = hi_o;
                st.lo[static_cast<size_t>(i)] = lo_o;
                st.hi[static_cast<size_t>(i)] = hi_o;
            }
        }
    }
}

}  // namespace

DeepPolyResult deeppoly_bounds(const Network<double>& net, const BoxTensor<double>& in) {
    DpContext ctx = build_context(net, in);
    const BoxTrace<double> box = propagate_box(net, in, 1.0);
    sweep(ctx, box);

    DeepPolyResult res;
    res.layers.resize(net.layers.size());
    const auto out_shapes = net.layer_output_shapes();
    const Tensor<double>* prev_lo = nullptr;
    const Tensor<double>* prev_hi = nullptr;
    // input bounds for the first layer
    Tensor<double> in_lo(Shape{static_cast<int>(in.centre.size())});
    Tensor<double> in_hi(Shape{static_cast<int>(in.centre.size())});
    for (size_t i = 0; i < in.centre.size(); ++i) {
        in_lo[i] = in.centre[i] - in.radius[i];
        in_hi[i] = in.centre[i] + in.radius[i];
    }
    prev_lo = &in_lo;
    prev_hi = &in_hi;

    for (size_t i = 0; i < net.layers.size(); ++i) {
        LinearBoundsElement& e = res.layers[i];
        const int sidx = ctx.layer_to_stage[i];
        if (sidx < 0) {  // Flatten: identity
            e.diagonal = true;
            const int n = static_cast<int>(numel(out_shapes[i]));
            e.lower_diag = Tensor<double>::full({n}, 1.0);
            e.upper_diag = Tensor<double>::full({n}, 1.0);
            e.lower_const = Tensor<double>({n});
            e.upper_const = Tensor<double>({n});
            e.concrete_lo = prev_lo->clone();
            e.concrete_hi = prev_hi->clone();
        } else {
            const Stage& st = ctx.stages[static_cast<size_t>(sidx)];
            switch (st.kind) {
                case Stage::Kind::Affine:
                    e.diagonal = false;
                    e.lower_coef = st.M;
                    e.upper_coef = st.M;
                    e.lower_const = st.d;
                    e.upper_const = st.d;
                    break;
                case Stage::Kind::Diag:
                    e.diagonal = true;
                    e.lower_diag = st.s;
                    e.upper_diag = st.s;
                    e.lower_const = st.t;
                    e.upper_const = st.t;
                    break;
                case Stage::Kind::Relu:
                    e.diagonal = true;
                    e.lower_diag = st.lam_lo;
                    e.upper_diag = st.lam_up;
                    e.lower_const = Tensor<double>({st.n_out});
                    e.upper_const = st.mu_up;
                    break;
            }
            e.concrete_lo = st.lo;
            e.concrete_hi = st.hi;
        }
        prev_lo = &e.concrete_lo;
        prev_hi = &e.concrete_hi;
    }
    return res;
}

Tensor<double> deeppoly_logit_diff_upper(const Network<double>& net, const BoxTensor<double>& in, int target) {
    const int n = net.num_classes;
    if (target < 0 || target >= n) throw Error("deeppoly_logit_diff_upper: target out of range");
    DpContext ctx = build_context(net, in);
    const BoxTrace<double> box = propagate_box(net, in, 1.0);
    sweep(ctx, box);

    // Query rows e_i - e_t over the logits, backsubstituted to the input.
    Tensor<double> q({n, n});
    for (int i = 0; i < n; ++i) {
        if (i == target) continue;
        q.data()[static_cast<size_t>(i) * n + i] = 1.0;
        q.data()[static_cast<size_t>(i) * n + target] -= 1.0;
    }
    Tensor<double> c({n});
    Tensor<double> hi;
    backsubstitute(ctx, static_cast<int>(ctx.stages.size()) - 1, std::move(q), std::move(c), false, true, nullptr,
                   &hi);

    // Interval fallback from the intersected per-neuron output bounds;
    // keeps DeepPoly certification at least as strong as Box.
    const Stage& last = ctx.stages.back();
    for (int i = 0; i < n; ++i) {
        if (i == target) {
            hi[static_cast<size_t>(i)] = 0.0;
            continue;
        }
        const double combo = last.hi[static_cast<size_t>(i)] - last.lo[static_cast<size_t>(target)];
        if (combo < hi[static_cast<size_t>(i)]) hi[static_cast<size_t>(i)] = combo;
    }
    return hi;
}

DeepPolyCert certify_deeppoly(const Network<double>& net, const BoxTensor<double>& region, int target) {
    const Tensor<double> u = deeppoly_logit_diff_upper(net, region, target);
    double margin = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < u.size(); ++i)
        if (static_cast<int>(i) != target && u[i] > margin) margin = u[i];
    return {margin < 0.0 ? Verdict::Certified : Verdict::Unknown, margin};
}

DeepPolyCert certify_deeppoly(const Network<double>& net, const Tensor<double>& x, double eps, int target) {
    return certify_deeppoly(net, input_region(x, eps), target);
}

}  // namespace sabr
