#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <type_traits>
#include <vector>

#include "starn/tensor.hpp"

namespace starn::ad {

// Non-deduced scalar parameter, so scale(v, 0.5) works for Var<float>.
template <typename T>
using Scalar = std::type_identity_t<T>;

template <typename T>
class Tape;

// Handle to a node on a tape.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Computation graph recorded in creation order. Node ids are a topological
// order, so backward walks ids from last to first.
template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Var<T> leaf(Tensor<T> value, bool requires_grad = true);
    Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }
    Var<T> push(Tensor<T> value, std::initializer_list<std::size_t> inputs, Backward backward, const char* op);
    Var<T> push(Tensor<T> value, const std::vector<std::size_t>& inputs, Backward backward, const char* op);

    const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const char* op(std::size_t id) const { return nodes_[id].op; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Gradient of the last backward target w.r.t. node `id`; zeros if no
    // gradient reached it.
    Tensor<T> grad(std::size_t id) const;
    Tensor<T> grad(Var<T> v) const { return grad(v.id); }
    bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
    // Accumulator for `id`, allocated on first use.
    Tensor<T>& grad_acc(std::size_t id);

    // Seeds d(loss)/d(loss) = 1 and runs every recorded VJP once.
    void backward(Var<T> loss);

    // Sign pattern of every kink (relu input, clamp) seen so far; used by the
    // gradient checker to detect nondifferentiable crossings.
    void set_track_kinks(bool on) noexcept { track_kinks_ = on; }
    void note_kinks(std::span<const T> x, T threshold);
    std::uint64_t kink_signature() const noexcept { return kink_hash_; }

private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        Backward backward;
        bool requires_grad = false;
        const char* op = "leaf";
    };
    std::vector<Node> nodes_;
    bool track_kinks_ = false;
    std::uint64_t kink_hash_ = 0xcbf29ce484222325ULL;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
    return tape->value(id);
}

// Running statistics of one batch-norm layer (eval-mode population stats).
template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;
    Tensor<T> running_var;

    explicit BatchNormState(std::size_t features = 0)
        : running_mean(Shape{features}, T(0)), running_var(Shape{features}, T(1)) {}
};

// 2-D matrix product [m,k]x[k,n].
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
// a·bᵀ for a [m,k], b [n,k]; the usual x·Wᵀ linear layer.
template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose(Var<T> a);
// Batched product [B,m,k]x[B,k,n].
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b);
template <typename T>
Var<T> transpose_last2(Var<T> a);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, Scalar<T> c);
// x [...,n] + b [n] on every row.
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> b);
// x [R,C] with row r multiplied by s[r]; s has R entries.
template <typename T>
Var<T> mul_rows(Var<T> x, Var<T> s);

template <typename T>
Var<T> exp(Var<T> a);
// Natural log; inputs must be positive.
template <typename T>
Var<T> log(Var<T> a);
template <typename T>
Var<T> relu(Var<T> a);
template <typename T>
Var<T> leaky_relu(Var<T> a, Scalar<T> slope);
template <typename T>
Var<T> elu(Var<T> a, Scalar<T> alpha = T(1));

// Softmax over the last dimension with the row max subtracted first.
template <typename T>
Var<T> softmax_rows(Var<T> a);
// Softmax of scores [E] (or [E,1]) within groups given by segment[e] < n.
template <typename T>
Var<T> segment_softmax(Var<T> scores, std::span<const int> segment, std::size_t n);

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, Scalar<T> eps = T(1e-5));
// Normalizes each column over the rows. Training mode uses the batch
// statistics and updates `state` with the given momentum.
template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, bool train,
                  Scalar<T> momentum = T(0.1), Scalar<T> eps = T(1e-5));
// Inverted dropout; mask entry i is a pure function of (key, i).
template <typename T>
Var<T> dropout(Var<T> x, Scalar<T> rate, bool train, std::uint64_t key);

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts);
template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t count);
template <typename T>
Var<T> reshape(Var<T> x, Shape shape);
// [d0, d1, ...] -> [d0, d1*...]
template <typename T>
Var<T> flatten(Var<T> x);

// out[i] = x[index[i]]
template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const int> index);
// out[index[i]] += x[i], out has n rows.
template <typename T>
Var<T> scatter_add_rows(Var<T> x, std::span<const int> index, std::size_t n);

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

// −(1/N) Σ_i α_{y_i} (1 − p_i)^γ log p_i with p_i = probs[i, y_i] clamped to [1e-12, 1].
template <typename T>
Var<T> focal_loss(Var<T> probs, std::span<const int> labels, std::span<const Scalar<T>> alpha, Scalar<T> gamma);

}  // namespace starn::ad
