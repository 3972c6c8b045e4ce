#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "starn/autodiff.hpp"
#include "starn/features.hpp"
#include "starn/graphbuild.hpp"

namespace starn {

struct Ablation {
    bool no_gat = false;
    bool no_temporal = false;
    bool no_external = false;
    bool concat_fusion = false;
    bool single_head = false;

    bool operator==(const Ablation&) const = default;
};

// Named variants: "full", "no_gat", "no_temporal", "no_external",
// "concat_fusion", "single_head".
Ablation ablation_from_name(const std::string& name);
std::string ablation_name(const Ablation& a);
const std::vector<std::string>& ablation_names();

struct ModelConfig {
    int gat_layers = 2;
    int heads = 4;
    int head_dim = 16;
    int hidden = 64;
    double dropout1 = 0.3;
    double dropout2 = 0.2;
    int num_classes = 4;
    double leaky_slope = 0.2;
    Ablation ablation;

    int effective_heads() const { return ablation.single_head ? 1 : heads; }
    int effective_head_dim() const { return ablation.single_head ? hidden : head_dim; }
    // Throws ConfigError unless heads * head_dim == hidden and sizes are positive.
    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Learned tensors in a fixed order. `is_weight` marks the matrices that
// receive L2 and decoupled weight decay.
template <typename T>
struct ModelParams {
    std::vector<std::string> names;
    std::vector<ad::Tensor<T>> values;
    std::vector<bool> is_weight;

    std::size_t size() const { return names.size(); }
    std::size_t index(const std::string& name) const;
    const ad::Tensor<T>& at(const std::string& name) const { return values[index(name)]; }
    ad::Tensor<T>& at(const std::string& name) { return values[index(name)]; }
    std::size_t scalar_count() const;

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        out.names = names;
        out.is_weight = is_weight;
        for (const auto& v : values) out.values.push_back(v.template cast<U>());
        return out;
    }
};

// Batch-norm running statistics of the external encoder.
template <typename T>
struct ModelBuffers {
    ad::BatchNormState<T> bn1;
    ad::BatchNormState<T> bn2;

    explicit ModelBuffers(std::size_t hidden = 64) : bn1(hidden), bn2(hidden) {}

    template <typename U>
    ModelBuffers<U> cast() const {
        ModelBuffers<U> out(bn1.running_mean.size());
        out.bn1.running_mean = bn1.running_mean.template cast<U>();
        out.bn1.running_var = bn1.running_var.template cast<U>();
        out.bn2.running_mean = bn2.running_mean.template cast<U>();
        out.bn2.running_var = bn2.running_var.template cast<U>();
        return out;
    }
};

// Glorot-uniform weights, zero biases, unit norm gains.
template <typename T = float>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

// Graph structure as consumed by the GAT encoder.
template <typename T>
struct GraphInput {
    std::size_t num_nodes = 0;
    std::vector<int> src;
    std::vector<int> dst;
    ad::Tensor<T> edge_features;  // E x 5
    ad::Tensor<T> node_spatial;   // n x 9
};

// Records of one batch.
template <typename T>
struct RecordBatch {
    ad::Tensor<T> temporal;  // m x 11
    ad::Tensor<T> external;  // m x 8
    std::vector<int> record_node;
    std::vector<int> labels;
};

// Throws DataError if some node has no outgoing edge (empty neighborhood).
template <typename T>
GraphInput<T> make_graph_input(const RoadGraph& graph, const RowMatrix& node_spatial);
template <typename T>
RecordBatch<T> make_record_batch(const FeatureSet& fs, std::span<const int> rows);

struct ForwardMode {
    bool train = false;
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::uint64_t batch = 0;
};

template <typename T>
struct ForwardOutput {
    ad::Var<T> h_spatial;  // n x 64 after the GAT stack (or h0 for no_gat)
    ad::Var<T> h_final;    // m x 192
    ad::Var<T> logits;     // m x classes
    ad::Var<T> probs;
    // attention[l][k]: E x 1 coefficients of head k in layer l, edge order.
    std::vector<std::vector<ad::Var<T>>> attention;
    std::optional<ad::Var<T>> fusion_weights;  // m x 3 x 3
};

template <typename T>
std::vector<ad::Var<T>> bind_params(ad::Tape<T>& tape, const ModelParams<T>& params, bool requires_grad);

template <typename T>
ad::Var<T> spatial_embed(ad::Var<T> x, ad::Var<T> W, ad::Var<T> b);

// One GAT layer; appends each head's attention coefficients to `attention`.
template <typename T>
ad::Var<T> gat_layer(ad::Var<T> h, const GraphInput<T>& graph, ad::Var<T> edge_features,
                     const std::vector<ad::Var<T>>& W, const std::vector<ad::Var<T>>& a,
                     const std::vector<ad::Var<T>>& We, ad::Var<T> W_res, T leaky_slope,
                     std::vector<ad::Var<T>>* attention = nullptr);

template <typename T>
ad::Var<T> temporal_encode(ad::Var<T> x, ad::Var<T> W1, ad::Var<T> b1, ad::Var<T> W2, ad::Var<T> b2,
                           ad::Var<T> gain, ad::Var<T> bias);

template <typename T>
ad::Var<T> external_encode(ad::Var<T> x, ad::Var<T> W1, ad::Var<T> b1, ad::Var<T> g1, ad::Var<T> be1,
                           ad::Var<T> W2, ad::Var<T> b2, ad::Var<T> g2, ad::Var<T> be2, ModelBuffers<T>& buffers,
                           bool train);

// Scaled dot-product attention over the three stacked 64-vectors of each
// record; returns h_final (m x 192) and writes the m x 3 x 3 weights.
template <typename T>
ad::Var<T> fuse(ad::Var<T> h_spatial, ad::Var<T> h_temporal, ad::Var<T> h_external, ad::Var<T>* weights = nullptr);

template <typename T>
ForwardOutput<T> forward(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& params, const ModelParams<T>& layout,
                         ModelBuffers<T>& buffers, const ModelConfig& config, const GraphInput<T>& graph,
                         const RecordBatch<T>& batch, const ForwardMode& mode);

// Eval-mode class probabilities (m x classes) without gradient bookkeeping.
template <typename T>
ad::Tensor<T> predict_proba(const ModelParams<T>& params, const ModelBuffers<T>& buffers, const ModelConfig& config,
                            const GraphInput<T>& graph, const RecordBatch<T>& batch);

}  // namespace starn
