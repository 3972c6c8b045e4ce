#include "starn/gradcheck_suite.hpp"

#include <cmath>
#include <algorithm>
#include <random>

#include "starn/rng.hpp"
#include "starn/train.hpp"

namespace starn {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;
using Vars = std::vector<Var<double>>;

namespace {

Tensor<double> normal(std::mt19937_64& eng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.values()) v = u(eng);
    return t;
}

// Reduces an op output to a scalar through fixed random weights so every
// output coordinate contributes to the checked gradient.
Var<double> project(Var<double> y, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    return ad::sum(ad::mul(y, y.tape->constant(normal(eng, y.shape()))));
}

struct OpCase {
    std::string name;
    std::vector<Tensor<double>> inputs;
    ad::ScalarFn fn;
};

std::vector<OpCase> op_cases(std::uint64_t seed) {
    auto eng = rng::engine(seed, "gradcheck", 0);
    const std::uint64_t ps = rng::substream(seed, "gradcheck", 1);
    std::vector<OpCase> c;
    auto add = [&](std::string name, std::vector<Tensor<double>> in, auto body) {
        c.push_back({std::move(name), std::move(in), [body, ps](Tape<double>&, const Vars& v) { return project(body(v), ps); }});
    };
    static const std::vector<int> seg{0, 0, 1, 2, 2, 2, 3};
    static const std::vector<int> gather_idx{2, 0, 2, 1, 3};
    static const std::vector<int> scatter_idx{1, 0, 1, 3, 1};

    add("matmul", {normal(eng, {3, 4}), normal(eng, {4, 2})}, [](const Vars& v) { return ad::matmul(v[0], v[1]); });
    add("matmul_nt", {normal(eng, {3, 4}), normal(eng, {5, 4})}, [](const Vars& v) { return ad::matmul_nt(v[0], v[1]); });
    add("transpose", {normal(eng, {3, 4})}, [](const Vars& v) { return ad::transpose(v[0]); });
    add("bmm", {normal(eng, {2, 3, 4}), normal(eng, {2, 4, 2})}, [](const Vars& v) { return ad::bmm(v[0], v[1]); });
    add("transpose_last2", {normal(eng, {2, 3, 4})}, [](const Vars& v) { return ad::transpose_last2(v[0]); });
    add("add", {normal(eng, {3, 4}), normal(eng, {3, 4})}, [](const Vars& v) { return ad::add(v[0], v[1]); });
    add("sub", {normal(eng, {3, 4}), normal(eng, {3, 4})}, [](const Vars& v) { return ad::sub(v[0], v[1]); });
    add("mul", {normal(eng, {3, 4}), normal(eng, {3, 4})}, [](const Vars& v) { return ad::mul(v[0], v[1]); });
    add("scale", {normal(eng, {3, 4})}, [](const Vars& v) { return ad::scale(v[0], -1.7); });
    add("add_bias", {normal(eng, {3, 4}), normal(eng, {4})}, [](const Vars& v) { return ad::add_bias(v[0], v[1]); });
    add("mul_rows", {normal(eng, {3, 4}), normal(eng, {3, 1})}, [](const Vars& v) { return ad::mul_rows(v[0], v[1]); });
    add("exp", {normal(eng, {3, 4})}, [](const Vars& v) { return ad::exp(v[0]); });
    add("log", {normal(eng, {3, 4}, 0.5, 2.0)}, [](const Vars& v) { return ad::log(v[0]); });
    add("relu", {normal(eng, {4, 5})}, [](const Vars& v) { return ad::relu(v[0]); });
    add("leaky_relu", {normal(eng, {4, 5})}, [](const Vars& v) { return ad::leaky_relu(v[0], 0.2); });
    add("elu", {normal(eng, {4, 5})}, [](const Vars& v) { return ad::elu(v[0]); });
    add("softmax_rows", {normal(eng, {3, 4}, -3.0, 3.0)}, [](const Vars& v) { return ad::softmax_rows(v[0]); });
    add("segment_softmax", {normal(eng, {7, 1}, -2.0, 2.0)},
        [](const Vars& v) { return ad::segment_softmax(v[0], seg, 4); });
    add("layer_norm", {normal(eng, {3, 6}), normal(eng, {6}), normal(eng, {6})},
        [](const Vars& v) { return ad::layer_norm(v[0], v[1], v[2]); });
    add("batch_norm_train", {normal(eng, {5, 4}), normal(eng, {4}), normal(eng, {4})}, [](const Vars& v) {
        ad::BatchNormState<double> st(4);
        return ad::batch_norm(v[0], v[1], v[2], st, true);
    });
    add("batch_norm_eval", {normal(eng, {5, 4}), normal(eng, {4}), normal(eng, {4})}, [](const Vars& v) {
        ad::BatchNormState<double> st(4);
        for (std::size_t j = 0; j < 4; ++j) st.running_mean[j] = 0.1 * j, st.running_var[j] = 0.5 + j;
        return ad::batch_norm(v[0], v[1], v[2], st, false);
    });
    add("dropout_train", {normal(eng, {4, 5})}, [](const Vars& v) { return ad::dropout(v[0], 0.3, true, 99); });
    add("concat_cols", {normal(eng, {3, 2}), normal(eng, {3, 4})},
        [](const Vars& v) { return ad::concat_cols<double>({v[0], v[1], v[0]}); });
    add("concat_rows", {normal(eng, {2, 3}), normal(eng, {4, 3})},
        [](const Vars& v) { return ad::concat_rows<double>({v[0], v[1]}); });
    add("slice_cols", {normal(eng, {3, 6})}, [](const Vars& v) { return ad::slice_cols(v[0], 2, 3); });
    add("reshape", {normal(eng, {3, 4})}, [](const Vars& v) { return ad::reshape(v[0], Shape{2, 6}); });
    add("flatten", {normal(eng, {2, 3, 4})}, [](const Vars& v) { return ad::flatten(v[0]); });
    add("gather_rows", {normal(eng, {4, 3})}, [](const Vars& v) { return ad::gather_rows(v[0], gather_idx); });
    add("scatter_add_rows", {normal(eng, {5, 3})},
        [](const Vars& v) { return ad::scatter_add_rows(v[0], scatter_idx, 4); });
    add("sum", {normal(eng, {3, 4})}, [](const Vars& v) { return ad::sum(v[0]); });
    add("mean", {normal(eng, {3, 4})}, [](const Vars& v) { return ad::mean(v[0]); });

    static const std::vector<int> labels{0, 3, 1, 2, 3};
    static const std::vector<double> alpha{0.5, 1.0, 1.5, 1.0};
    c.push_back({"focal_loss", {normal(eng, {5, 4}, 0.05, 0.95)}, [](Tape<double>&, const Vars& v) {
                     return ad::focal_loss(v[0], labels, alpha, 2.0);
                 }});
    c.push_back({"l2_penalty", {normal(eng, {3, 4}), normal(eng, {4})}, [](Tape<double>& t, const Vars& v) {
                     return l2_penalty(t, v, {true, false}, 0.3);
                 }});
    return c;
}

}  // namespace

GraphInput<double> toy_graph_input(std::uint64_t seed) {
    auto eng = rng::engine(seed, "toy_graph");
    constexpr int n = 6;
    GraphInput<double> g;
    g.num_nodes = n;
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) {
        edges.emplace_back(i, i);
        edges.emplace_back(i, (i + 1) % n);
        edges.emplace_back((i + 1) % n, i);
    }
    edges.emplace_back(0, 3);
    edges.emplace_back(3, 0);
    std::sort(edges.begin(), edges.end());
    for (const auto& [s, d] : edges) {
        g.src.push_back(s);
        g.dst.push_back(d);
    }
    g.edge_features = normal(eng, {edges.size(), static_cast<std::size_t>(kEdgeFeatureDim)}, 0.0, 1.0);
    g.node_spatial = normal(eng, {n, static_cast<std::size_t>(kSpatialDim)}, -1.5, 1.5);
    return g;
}

RecordBatch<double> toy_record_batch(std::uint64_t seed, std::size_t num_nodes) {
    auto eng = rng::engine(seed, "toy_records");
    constexpr std::size_t m = 8;
    RecordBatch<double> b;
    b.temporal = normal(eng, {m, static_cast<std::size_t>(kTemporalDim)});
    b.external = normal(eng, {m, static_cast<std::size_t>(kExternalDim)}, -1.5, 1.5);
    for (std::size_t i = 0; i < m; ++i) {
        b.record_node.push_back(static_cast<int>((i * 5 + 1) % num_nodes));
        b.labels.push_back(static_cast<int>(i % 4));
    }
    return b;
}

std::vector<SuiteEntry> run_gradcheck_suite(const SuiteOptions& opts) {
    std::vector<SuiteEntry> out;
    ad::GradCheckOptions go;
    go.h = opts.h;
    go.seed = opts.seed;
    go.corrupt_gradient = opts.corrupt_gradient;
    for (auto& c : op_cases(opts.seed)) {
        out.push_back({c.name, ad::grad_check(c.fn, c.inputs, go), opts.op_threshold});
    }

    const auto graph = toy_graph_input(opts.seed);
    const auto batch = toy_record_batch(opts.seed, graph.num_nodes);
    const std::vector<double> alpha{1.0, 0.8, 1.2, 1.5};
    go.max_coords_per_input = opts.model_coords_per_tensor;
    for (const auto& variant : ablation_names()) {
        ModelConfig cfg;
        cfg.ablation = ablation_from_name(variant);
        auto params = init_params<double>(cfg, opts.seed);
        // nonzero biases keep the check away from the symmetric starting point
        auto eng = rng::engine(opts.seed, "toy_bias");
        std::uniform_real_distribution<double> u(-0.1, 0.1);
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params.is_weight[i]) {
                for (auto& v : params.values[i].values()) v += u(eng);
            }
        }
        auto fn = [&](Tape<double>& t, const Vars& v) {
            ModelBuffers<double> buffers(cfg.hidden);
            const ForwardMode mode{true, opts.seed, 1, 2};
            const auto fo = forward(t, v, params, buffers, cfg, graph, batch, mode);
            const auto loss = ad::focal_loss(fo.probs, batch.labels, alpha, 2.0);
            return ad::add(loss, l2_penalty(t, v, params.is_weight, 1e-2));
        };
        out.push_back({"model:" + variant, ad::grad_check(fn, params.values, go), opts.model_threshold});
    }
    return out;
}

}  // namespace starn
