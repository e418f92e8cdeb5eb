#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sabr/tensor.hpp"

namespace sabr {

enum class LayerKind { Linear, Conv2d, ReLU, Flatten, BatchNormAffine };

const char* layer_kind_name(LayerKind k);

inline constexpr double kBnVarFloor = 1e-5;

// One layer of a sequential network.
//   Linear:          weight [in,out], bias [out]
//   Conv2d:          weight [O,C,kh,kw], bias [O], stride, padding
//   ReLU:            optional shrink-coefficient override
//   BatchNormAffine: weight = gamma [C], bias = beta [C], running mean/var
// Derived buffers (transposes, elementwise |W|, BN scale) are refreshed
// explicitly after parameter updates; forward/backward paths read them.
template <typename T>
struct Layer {
    LayerKind kind;
    Tensor<T> weight, bias;
    Tensor<T> run_mean, run_var;
    int stride = 1, padding = 0;
    std::optional<double> cs_override;

    // derived, refresh_cache()
    Tensor<T> w_t;       // Linear [out,in]; Conv [C*kh*kw, O]
    Tensor<T> w_abs;     // |weight|, weight layout
    Tensor<T> w_abs_t;   // |weight| transposed, w_t layout
    Tensor<T> bn_scale;  // gamma / sqrt(var + floor)
    Tensor<T> bn_scale_abs;
    Tensor<T> bn_inv_std;  // 1 / sqrt(var + floor)

    Layer clone() const;
};

template <typename T>
struct Network {
    std::vector<Layer<T>> layers;
    Shape input_shape;
    int num_classes = 0;

    // Output shape of every layer (index i = after layers[i]).
    std::vector<Shape> layer_output_shapes() const;
    const Shape& output_shape() const;

    // Checks shape composition and the single >=2-logit head.
    void validate() const;

    // Recompute transposed/absolute weight caches; call after any
    // parameter mutation.
    void refresh_cache();

    Network clone() const;

    template <typename U>
    Network<U> cast() const;

    size_t param_count() const;
};

// Point evaluation, [C,H,W] or [D] input -> [num_classes] logits.
template <typename T>
Tensor<T> forward(const Network<T>& net, const Tensor<T>& x);

// He-style init: weights ~ Normal(0, 2/fan_in), biases 0, BN gamma=1,
// beta=0, stats (0,1). Deterministic per seed (layer order, row-major).
template <typename T>
void init_params(Network<T>& net, uint64_t seed);

// Recomputes BN running statistics from a clean batch ([N,C,H,W] or
// [N,D]), flowing the batch front-to-back so later BN layers see the
// updated earlier ones. Batch size must be >= 2.
template <typename T>
void bn_update_stats(Network<T>& net, const Tensor<T>& batch);

// --- builders ---
template <typename T>
Network<T> make_mlp(const std::vector<int>& dims);
// conv_channels convolutions (kernel 3, stride 2, padding 1) + 2 fully
// connected layers; the desk-scale architecture, no BN.
template <typename T>
Network<T> make_small_cnn(const Shape& input_shape, int num_classes, const std::vector<int>& conv_channels,
                          int fc_width);
template <typename T>
Network<T> make_cnn7(const Shape& input_shape, int num_classes);
template <typename T>
Network<T> make_cnn7_narrow(const Shape& input_shape, int num_classes);
template <typename T>
Network<T> make_by_name(const std::string& name, const Shape& input_shape, int num_classes);

// Trainable parameter listing (Linear/Conv weight+bias, BN gamma+beta) in
// a fixed order shared by optimizer state and gradient buffers.
template <typename T>
struct ParamRef {
    int layer;
    bool is_weight;  // weight/gamma if true, bias/beta otherwise
};

template <typename T>
std::vector<ParamRef<T>> trainable_params(const Network<T>& net);

template <typename T>
Tensor<T>& param_tensor(Network<T>& net, const ParamRef<T>& r);
template <typename T>
const Tensor<T>& param_tensor(const Network<T>& net, const ParamRef<T>& r);

template <typename T>
std::vector<Tensor<T>> make_grad_buffers(const Network<T>& net);

}  // namespace sabr
