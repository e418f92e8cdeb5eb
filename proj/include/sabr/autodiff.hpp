#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "sabr/network.hpp"
#include "sabr/tensor.hpp"

namespace sabr {

// Handle to a value recorded on a Tape.
struct Val {
    int i = -1;
    bool valid() const { return i >= 0; }
};

// Per-forward-pass reverse-mode tape. Ops execute eagerly through the
// shared kernels (so tape and eager forwards agree bit-for-bit) and push
// a backward closure; backward() replays them once in reverse. A tape is
// confined to one worker and freed after the pass.
template <typename T>
class Tape {
public:
    Val leaf(const Tensor<T>& v, bool requires_grad = false);

    const Tensor<T>& value(Val v) const { return slots_[static_cast<size_t>(v.i)].value; }
    bool requires_grad(Val v) const { return slots_[static_cast<size_t>(v.i)].requires_grad; }
    bool has_grad(Val v) const { return !slots_[static_cast<size_t>(v.i)].grad.empty(); }
    // Gradient buffer, allocated (zeros) on first access.
    Tensor<T>& grad(Val v);

    // generic ops
    Val matmul(Val a, Val b);
    Val relu(Val x);
    Val add(Val a, Val b);
    Val sub(Val a, Val b);
    Val mul(Val a, Val b);
    Val scale(Val a, T alpha);
    Val abs(Val a);
    Val reshape(Val a, Shape s);
    Val sum(Val a);
    Val softmax_cross_entropy(Val logits, int target);
    Val margin(Val logits, int target_true, int target_attack);

    // layer ops with cached transposes (w_fwd: forward operand, |W| on the
    // radius path; w_bwd_t: its transpose for the input gradient). When
    // use_abs, the weight gradient is masked by sign(w).
    Val affine(Val x, Val w, Val b, const Tensor<T>& w_fwd, Tensor<T> w_bwd_t, bool use_abs);
    Val conv2d(Val x, Val k, Val b, int stride, int padding, const Tensor<T>& k_fwd2d, Tensor<T> k_bwd_t,
               bool use_abs);
    // generic conv (transposes materialised on the fly)
    Val conv2d(Val x, Val k, Val b, int stride, int padding);

    std::pair<Val, Val> box_relu(Val c, Val r, T cs);
    Val bn_centre(Val x, Val gamma, Val beta, const Tensor<T>& mean, const Tensor<T>& inv_std);
    Val bn_radius(Val r, Val gamma, const Tensor<T>& inv_std);

    // Seeds d(root)=1 (root must be scalar) and replays the tape. Ensures
    // every requires_grad slot has an allocated gradient afterwards.
    void backward(Val root);

    size_t size() const { return slots_.size(); }

private:
    struct Slot {
        Tensor<T> value;
        Tensor<T> grad;
        bool requires_grad;
    };
    struct Node {
        std::function<void(Tape&)> bwd;
    };

    Val push(Tensor<T> value, bool requires_grad);
    void record(std::function<void(Tape&)> fn) { nodes_.push_back({std::move(fn)}); }

    std::vector<Slot> slots_;
    std::vector<Node> nodes_;
};

// A network bound to a tape: parameter leaves plus point/box forward.
template <typename T>
struct TapeNet {
    Tape<T>* tape;
    const Network<T>* net;
    struct Leaves {
        Val w, b;
    };
    std::vector<Leaves> leaves;

    TapeNet(Tape<T>& t, const Network<T>& n, bool params_require_grad);

    Val forward(Val x);
    // Interval forward; per-layer ReLU shrink coefficient defaults to
    // cs_default with Layer::cs_override taking precedence.
    std::pair<Val, Val> forward_box(Val centre, Val radius, T cs_default);

    // Accumulate parameter-leaf gradients into buffers laid out per
    // trainable_params(net) order.
    void add_param_grads(std::vector<Tensor<T>>& grads) const;
};

// Upper bound on logit differences y - y_t, built by pushing the n x n
// difference matrix through the interval affine rule. Entry t is exactly 0.
template <typename T>
Val logit_diff_upper(Tape<T>& tape, Val centre, Val radius, int target);

}  // namespace sabr
