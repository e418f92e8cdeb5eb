#include "sabr/network.hpp"

#include <cmath>
#include <cstring>

#include "sabr/error.hpp"
#include "sabr/kernels.hpp"
#include "sabr/ops.hpp"
#include "sabr/rng.hpp"

namespace sabr {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Linear: return "Linear";
        case LayerKind::Conv2d: return "Conv2d";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::Flatten: return "Flatten";
        case LayerKind::BatchNormAffine: return "BatchNormAffine";
    }
    return "?";
}

template <typename T>
Layer<T> Layer<T>::clone() const {
    Layer<T> l = *this;
    if (!l.weight.empty()) l.weight = weight.clone();
    if (!l.bias.empty()) l.bias = bias.clone();
    if (!l.run_mean.empty()) l.run_mean = run_mean.clone();
    if (!l.run_var.empty()) l.run_var = run_var.clone();
    l.w_t = {};
    l.w_abs = {};
    l.w_abs_t = {};
    l.bn_scale = {};
    l.bn_scale_abs = {};
    l.bn_inv_std = {};
    return l;
}

namespace {

template <typename T>
Shape out_shape_of(const Layer<T>& l, const Shape& in) {
    switch (l.kind) {
        case LayerKind::Linear: {
            if (in.size() != 1 || in[0] != l.weight.dim(0))
                throw ShapeError("Linear expects input [" + std::to_string(l.weight.dim(0)) + "], got " +
                                 shape_str(in));
            return {l.weight.dim(1)};
        }
        case LayerKind::Conv2d: {
            const ops::ConvGeom g = ops::conv_geometry(in, l.weight.shape(), l.stride, l.padding);
            return {g.out_c, g.out_h, g.out_w};
        }
        case LayerKind::ReLU:
            return in;
        case LayerKind::Flatten:
            return {static_cast<int>(numel(in))};
        case LayerKind::BatchNormAffine: {
            const int c = in.empty() ? 0 : in[0];
            if (c != l.weight.dim(0))
                throw ShapeError("BatchNormAffine over " + std::to_string(l.weight.dim(0)) + " channels, input " +
                                 shape_str(in));
            return in;
        }
    }
    throw Error("unreachable layer kind");
}

}  // namespace

template <typename T>
std::vector<Shape> Network<T>::layer_output_shapes() const {
    std::vector<Shape> shapes;
    Shape cur = input_shape;
    for (const auto& l : layers) {
        cur = out_shape_of(l, cur);
        shapes.push_back(cur);
    }
    return shapes;
}

template <typename T>
const Shape& Network<T>::output_shape() const {
    static thread_local Shape s;
    s = layer_output_shapes().back();
    return s;
}

template <typename T>
void Network<T>::validate() const {
    if (layers.empty()) throw Error("network has no layers");
    const Shape out = layer_output_shapes().back();
    if (out.size() != 1 || out[0] != num_classes || num_classes < 2)
        throw ShapeError("network head must emit [num_classes>=2] logits, got " + shape_str(out) +
                         " with num_classes=" + std::to_string(num_classes));
    for (const auto& l : layers)
        if (l.kind == LayerKind::BatchNormAffine)
            for (size_t i = 0; i < l.run_var.size(); ++i)
                if (!(l.run_var[i] >= T(0))) throw Error("BatchNormAffine variance must be >= 0");
}

template <typename T>
void Network<T>::refresh_cache() {
    for (auto& l : layers) {
        switch (l.kind) {
            case LayerKind::Linear: {
                l.w_t = ops::transpose2d(l.weight);
                l.w_abs = ops::abs(l.weight);
                l.w_abs_t = ops::transpose2d(l.w_abs);
                break;
            }
            case LayerKind::Conv2d: {
                const int o = l.weight.dim(0);
                const int patch = static_cast<int>(l.weight.size()) / o;
                const Tensor<T> k2d = l.weight.reshaped({o, patch});
                l.w_t = ops::transpose2d(k2d);
                l.w_abs = ops::abs(l.weight);
                l.w_abs_t = ops::transpose2d(l.w_abs.reshaped({o, patch}));
                break;
            }
            case LayerKind::BatchNormAffine: {
                const int c = l.weight.dim(0);
                l.bn_scale = Tensor<T>({c});
                l.bn_inv_std = Tensor<T>({c});
                for (int i = 0; i < c; ++i) {
                    l.bn_inv_std[i] = T(1) / std::sqrt(l.run_var[i] + T(kBnVarFloor));
                    l.bn_scale[i] = l.weight[i] * l.bn_inv_std[i];
                }
                l.bn_scale_abs = ops::abs(l.bn_scale);
                break;
            }
            default:
                break;
        }
    }
}

template <typename T>
Network<T> Network<T>::clone() const {
    Network<T> n;
    n.input_shape = input_shape;
    n.num_classes = num_classes;
    n.layers.reserve(layers.size());
    for (const auto& l : layers) n.layers.push_back(l.clone());
    n.refresh_cache();
    return n;
}

template <typename T>
template <typename U>
Network<U> Network<T>::cast() const {
    Network<U> n;
    n.input_shape = input_shape;
    n.num_classes = num_classes;
    for (const auto& l : layers) {
        Layer<U> o;
        o.kind = l.kind;
        o.stride = l.stride;
        o.padding = l.padding;
        o.cs_override = l.cs_override;
        if (!l.weight.empty()) o.weight = l.weight.template cast<U>();
        if (!l.bias.empty()) o.bias = l.bias.template cast<U>();
        if (!l.run_mean.empty()) o.run_mean = l.run_mean.template cast<U>();
        if (!l.run_var.empty()) o.run_var = l.run_var.template cast<U>();
        n.layers.push_back(std::move(o));
    }
    n.refresh_cache();
    return n;
}

template <typename T>
size_t Network<T>::param_count() const {
    size_t n = 0;
    for (const auto& l : layers) {
        n += l.weight.size() + l.bias.size();
        n += l.run_mean.size() + l.run_var.size();
    }
    return n;
}

template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& x) {
    if (x.shape() != net.input_shape)
        throw ShapeError("forward: input " + shape_str(x.shape()) + " vs network input " +
                         shape_str(net.input_shape));
    Tensor<T> cur = x;
    for (const auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Linear: {
                const int in = l.weight.dim(0), out = l.weight.dim(1);
                Tensor<T> y = ops::matmul(cur.reshaped({1, in}), l.weight).reshaped({out});
                kernels::vadd(y.data(), y.data(), l.bias.data(), y.size());
                cur = y;
                break;
            }
            case LayerKind::Conv2d:
                cur = ops::conv2d(cur, l.weight, &l.bias, l.stride, l.padding);
                break;
            case LayerKind::ReLU:
                cur = ops::relu(cur);
                break;
            case LayerKind::Flatten:
                cur = cur.reshaped({static_cast<int>(cur.size())});
                break;
            case LayerKind::BatchNormAffine: {
                const int c = l.weight.dim(0);
                const int spatial = static_cast<int>(cur.size()) / c;
                Tensor<T> y(cur.shape());
                for (int ch = 0; ch < c; ++ch) {
                    const T a = l.bn_scale[ch];
                    const T b = l.bias[ch] - a * l.run_mean[ch];
                    kernels::vscale(y.data() + static_cast<size_t>(ch) * spatial,
                                    cur.data() + static_cast<size_t>(ch) * spatial, a, b,
                                    static_cast<size_t>(spatial));
                }
                cur = y;
                break;
            }
        }
    }
    return cur;
}

template <typename T>
void init_params(Network<T>& net, uint64_t seed) {
    Rng rng(seed);
    for (auto& l : net.layers) {
        switch (l.kind) {
            case LayerKind::Linear: {
                const double std = std::sqrt(2.0 / l.weight.dim(0));
                for (size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = static_cast<T>(rng.normal(0.0, std));
                std::fill(l.bias.data(), l.bias.data() + l.bias.size(), T(0));
                break;
            }
            case LayerKind::Conv2d: {
                const double fan_in = static_cast<double>(l.weight.size()) / l.weight.dim(0);
                const double std = std::sqrt(2.0 / fan_in);
                for (size_t i = 0; i < l.weight.size(); ++i) l.weight[i] = static_cast<T>(rng.normal(0.0, std));
                std::fill(l.bias.data(), l.bias.data() + l.bias.size(), T(0));
                break;
            }
            case LayerKind::BatchNormAffine: {
                std::fill(l.weight.data(), l.weight.data() + l.weight.size(), T(1));
                std::fill(l.bias.data(), l.bias.data() + l.bias.size(), T(0));
                std::fill(l.run_mean.data(), l.run_mean.data() + l.run_mean.size(), T(0));
                std::fill(l.run_var.data(), l.run_var.data() + l.run_var.size(), T(1));
                break;
            }
            default:
                break;
        }
    }
    net.refresh_cache();
}

template <typename T>
void bn_update_stats(Network<T>& net, const Tensor<T>& batch) {
    if (batch.rank() < 2) throw ShapeError("bn_update_stats: batched input required, got " + shape_str(batch.shape()));
    const int n = batch.dim(0);
    if (n < 2) throw Error("bn_update_stats: batch size " + std::to_string(n) + " < 2, variance undefined");

    // Flow the batch forward; at each BN layer recompute stats from the
    // current activations before applying the refreshed affine map.
    std::vector<Tensor<T>> acts;
    acts.reserve(static_cast<size_t>(n));
    Shape item = batch.shape();
    item.erase(item.begin());
    const size_t stride = numel(item);
    for (int i = 0; i < n; ++i) {
        Tensor<T> xi(item);
        std::memcpy(xi.data(), batch.data() + static_cast<size_t>(i) * stride, stride * sizeof(T));
        acts.push_back(std::move(xi));
    }

    for (auto& l : net.layers) {
        if (l.kind == LayerKind::BatchNormAffine) {
            const int c = l.weight.dim(0);
            const int spatial = static_cast<int>(acts[0].size()) / c;
            const size_t per_ch = static_cast<size_t>(spatial);
            const double denom = static_cast<double>(n) * spatial;
            for (int ch = 0; ch < c; ++ch) {
                double mean = 0.0;
                for (int i = 0; i < n; ++i)
                    mean += kernels::sum(acts[static_cast<size_t>(i)].data() + ch * per_ch, per_ch);
                mean /= denom;
                double var = 0.0;
                for (int i = 0; i < n; ++i) {
                    const T* p = acts[static_cast<size_t>(i)].data() + ch * per_ch;
                    for (int s = 0; s < spatial; ++s) {
                        const double d = static_cast<double>(p[s]) - mean;
                        var += d * d;
                    }
                }
                var /= denom;
                l.run_mean[ch] = static_cast<T>(mean);
                l.run_var[ch] = static_cast<T>(var < 0.0 ? 0.0 : var);
            }
            // refresh just this layer's scale
            l.bn_scale = Tensor<T>({c});
            l.bn_inv_std = Tensor<T>({c});
            for (int ch = 0; ch < c; ++ch) {
                l.bn_inv_std[ch] = T(1) / std::sqrt(l.run_var[ch] + T(kBnVarFloor));
                l.bn_scale[ch] = l.weight[ch] * l.bn_inv_std[ch];
            }
            l.bn_scale_abs = ops::abs(l.bn_scale);
        }
        // apply the layer to every batch item
        for (auto& a : acts) {
            switch (l.kind) {
                case LayerKind::Linear: {
                    const int in = l.weight.dim(0), out = l.weight.dim(1);
                    Tensor<T> y = ops::matmul(a.reshaped({1, in}), l.weight).reshaped({out});
                    kernels::vadd(y.data(), y.data(), l.bias.data(), y.size());
                    a = y;
                    break;
                }
                case LayerKind::Conv2d:
                    a = ops::conv2d(a, l.weight, &l.bias, l.stride, l.padding);
                    break;
                case LayerKind::ReLU:
                    a = ops::relu(a);
                    break;
                case LayerKind::Flatten:
                    a = a.reshaped({static_cast<int>(a.size())});
                    break;
                case LayerKind::BatchNormAffine: {
                    const int c = l.weight.dim(0);
                    const int spatial = static_cast<int>(a.size()) / c;
                    Tensor<T> y(a.shape());
                    for (int ch = 0; ch < c; ++ch) {
                        const T sc = l.bn_scale[ch];
                        const T b = l.bias[ch] - sc * l.run_mean[ch];
                        kernels::vscale(y.data() + static_cast<size_t>(ch) * spatial,
                                        a.data() + static_cast<size_t>(ch) * spatial, sc, b,
                                        static_cast<size_t>(spatial));
                    }
                    a = y;
                    break;
                }
            }
        }
    }
}

// --- builders ---

namespace {

template <typename T>
Layer<T> linear_layer(int in, int out) {
    Layer<T> l;
    l.kind = LayerKind::Linear;
    l.weight = Tensor<T>({in, out});
    l.bias = Tensor<T>({out});
    return l;
}

template <typename T>
Layer<T> conv_layer(int in_c, int out_c, int k, int stride, int padding) {
    Layer<T> l;
    l.kind = LayerKind::Conv2d;
    l.weight = Tensor<T>({out_c, in_c, k, k});
    l.bias = Tensor<T>({out_c});
    l.stride = stride;
    l.padding = padding;
    return l;
}

template <typename T>
Layer<T> relu_layer() {
    Layer<T> l;
    l.kind = LayerKind::ReLU;
    return l;
}

template <typename T>
Layer<T> flatten_layer() {
    Layer<T> l;
    l.kind = LayerKind::Flatten;
    return l;
}

template <typename T>
Layer<T> bn_layer(int c) {
    Layer<T> l;
    l.kind = LayerKind::BatchNormAffine;
    l.weight = Tensor<T>({c});
    l.bias = Tensor<T>({c});
    l.run_mean = Tensor<T>({c});
    l.run_var = Tensor<T>::full({c}, T(1));
    std::fill(l.weight.data(), l.weight.data() + static_cast<size_t>(c), T(1));
    return l;
}

}  // namespace

template <typename T>
Network<T> make_mlp(const std::vector<int>& dims) {
    if (dims.size() < 2) throw Error("make_mlp: need at least [in, out]");
    Network<T> net;
    net.input_shape = {dims[0]};
    net.num_classes = dims.back();
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        net.layers.push_back(linear_layer<T>(dims[i], dims[i + 1]));
        if (i + 2 < dims.size()) net.layers.push_back(relu_layer<T>());
    }
    net.refresh_cache();
    net.validate();
    return net;
}

template <typename T>
Network<T> make_small_cnn(const Shape& input_shape, int num_classes, const std::vector<int>& conv_channels,
                          int fc_width) {
    Network<T> net;
    net.input_shape = input_shape;
    net.num_classes = num_classes;
    int c = input_shape[0];
    Shape cur = input_shape;
    for (int oc : conv_channels) {
        net.layers.push_back(conv_layer<T>(c, oc, 3, 2, 1));
        net.layers.push_back(relu_layer<T>());
        cur = out_shape_of(net.layers[net.layers.size() - 2], cur);
        c = oc;
    }
    net.layers.push_back(flatten_layer<T>());
    const int flat = static_cast<int>(numel(cur));
    net.layers.push_back(linear_layer<T>(flat, fc_width));
    net.layers.push_back(relu_layer<T>());
    net.layers.push_back(linear_layer<T>(fc_width, num_classes));
    net.refresh_cache();
    net.validate();
    return net;
}

namespace {

template <typename T>
Network<T> make_cnn7_impl(const Shape& input_shape, int num_classes, const std::vector<int>& filters, int fc) {
    const std::vector<int> strides = {1, 1, 2, 1, 1};
    Network<T> net;
    net.input_shape = input_shape;
    net.num_classes = num_classes;
    int c = input_shape[0];
    Shape cur = input_shape;
    for (size_t i = 0; i < filters.size(); ++i) {
        net.layers.push_back(conv_layer<T>(c, filters[i], 3, strides[i], 1));
        cur = out_shape_of(net.layers.back(), cur);
        net.layers.push_back(bn_layer<T>(filters[i]));
        net.layers.push_back(relu_layer<T>());
        c = filters[i];
    }
    net.layers.push_back(flatten_layer<T>());
    const int flat = static_cast<int>(numel(cur));
    net.layers.push_back(linear_layer<T>(flat, fc));
    net.layers.push_back(bn_layer<T>(fc));
    net.layers.push_back(relu_layer<T>());
    net.layers.push_back(linear_layer<T>(fc, num_classes));
    net.refresh_cache();
    net.validate();
    return net;
}

}  // namespace

template <typename T>
Network<T> make_cnn7(const Shape& input_shape, int num_classes) {
    return make_cnn7_impl<T>(input_shape, num_classes, {64, 64, 128, 128, 128}, 512);
}

template <typename T>
Network<T> make_cnn7_narrow(const Shape& input_shape, int num_classes) {
    return make_cnn7_impl<T>(input_shape, num_classes, {32, 32, 64, 64, 64}, 216);
}

template <typename T>
Network<T> make_by_name(const std::string& name, const Shape& input_shape, int num_classes) {
    if (name == "cnn7") return make_cnn7<T>(input_shape, num_classes);
    if (name == "cnn7-narrow") return make_cnn7_narrow<T>(input_shape, num_classes);
    if (name == "cnn-small") return make_small_cnn<T>(input_shape, num_classes, {8, 16}, 128);
    if (name == "mlp-small") {
        std::vector<int> dims = {static_cast<int>(numel(input_shape)), 100, num_classes};
        return make_mlp<T>(dims);
    }
    throw ConfigError("unknown architecture '" + name + "' (cnn7|cnn7-narrow|cnn-small|mlp-small)");
}

template <typename T>
std::vector<ParamRef<T>> trainable_params(const Network<T>& net) {
    std::vector<ParamRef<T>> out;
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (l.kind == LayerKind::Linear || l.kind == LayerKind::Conv2d || l.kind == LayerKind::BatchNormAffine) {
            out.push_back({static_cast<int>(i), true});
            out.push_back({static_cast<int>(i), false});
        }
    }
    return out;
}

template <typename T>
Tensor<T>& param_tensor(Network<T>& net, const ParamRef<T>& r) {
    auto& l = net.layers[static_cast<size_t>(r.layer)];
    return r.is_weight ? l.weight : l.bias;
}

template <typename T>
const Tensor<T>& param_tensor(const Network<T>& net, const ParamRef<T>& r) {
    const auto& l = net.layers[static_cast<size_t>(r.layer)];
    return r.is_weight ? l.weight : l.bias;
}

template <typename T>
std::vector<Tensor<T>> make_grad_buffers(const Network<T>& net) {
    std::vector<Tensor<T>> bufs;
    for (const auto& r : trainable_params(net)) bufs.emplace_back(param_tensor(net, r).shape());
    return bufs;
}

#define SABR_INSTANTIATE(T)                                                                              \
    template struct Layer<T>;                                                                            \
    template struct Network<T>;                                                                          \
    template Tensor<T> forward<T>(const Network<T>&, const Tensor<T>&);                                  \
    template void init_params<T>(Network<T>&, uint64_t);                                                 \
    template void bn_update_stats<T>(Network<T>&, const Tensor<T>&);                                     \
    template Network<T> make_mlp<T>(const std::vector<int>&);                                            \
    template Network<T> make_small_cnn<T>(const Shape&, int, const std::vector<int>&, int);              \
    template Network<T> make_cnn7<T>(const Shape&, int);                                                 \
    template Network<T> make_cnn7_narrow<T>(const Shape&, int);                                          \
    template Network<T> make_by_name<T>(const std::string&, const Shape&, int);                          \
    template std::vector<ParamRef<T>> trainable_params<T>(const Network<T>&);                            \
    template Tensor<T>& param_tensor<T>(Network<T>&, const ParamRef<T>&);                                \
    template const Tensor<T>& param_tensor<T>(const Network<T>&, const ParamRef<T>&);                    \
    template std::vector<Tensor<T>> make_grad_buffers<T>(const Network<T>&);

SABR_INSTANTIATE(float)
SABR_INSTANTIATE(double)

template Network<double> Network<float>::cast<double>() const;
template Network<float> Network<double>::cast<float>() const;
template Network<float> Network<float>::cast<float>() const;
template Network<double> Network<double>::cast<double>() const;

#undef SABR_INSTANTIATE

}  // namespace sabr
