#include "starn/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "starn/detail/json_util.hpp"
#include "starn/rng.hpp"

namespace starn {

using ad::Shape;
using ad::Tensor;
using ad::Var;

// ---- configuration ------------------------------------------------------------

const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> names{"full", "no_gat", "no_temporal", "no_external", "concat_fusion",
                                                "single_head"};
    return names;
}

Ablation ablation_from_name(const std::string& name) {
    Ablation a;
    if (name == "full") return a;
    if (name == "no_gat") a.no_gat = true;
    else if (name == "no_temporal") a.no_temporal = true;
    else if (name == "no_external") a.no_external = true;
    else if (name == "concat_fusion") a.concat_fusion = true;
    else if (name == "single_head") a.single_head = true;
    else throw ConfigError("unknown ablation '" + name + "'");
    return a;
}

std::string ablation_name(const Ablation& a) {
    std::string out;
    auto add = [&](bool on, const char* n) {
        if (!on) return;
        if (!out.empty()) out += "+";
        out += n;
    };
    add(a.no_gat, "no_gat");
    add(a.no_temporal, "no_temporal");
    add(a.no_external, "no_external");
    add(a.concat_fusion, "concat_fusion");
    add(a.single_head, "single_head");
    return out.empty() ? "full" : out;
}

void ModelConfig::validate() const {
    if (gat_layers < 1) throw ConfigError("model.gat_layers must be >= 1");
    if (heads < 1 || head_dim < 1 || hidden < 1) throw ConfigError("model sizes must be positive");
    if (heads * head_dim != hidden) throw ConfigError("model.heads * model.head_dim must equal model.hidden");
    if (num_classes < 2) throw ConfigError("model.num_classes must be >= 2");
    for (double r : {dropout1, dropout2}) {
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("model dropout rates must be in [0,1)");
    }
    if (!(leaky_slope >= 0.0)) throw ConfigError("model.leaky_slope must be >= 0");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"gat_layers", c.gat_layers}, {"heads", c.heads},
                       {"head_dim", c.head_dim},     {"hidden", c.hidden},
                       {"dropout", {c.dropout1, c.dropout2}},
                       {"num_classes", c.num_classes},
                       {"leaky_slope", c.leaky_slope},
                       {"ablation",
                        {{"no_gat", c.ablation.no_gat},
                         {"no_temporal", c.ablation.no_temporal},
                         {"no_external", c.ablation.no_external},
                         {"concat_fusion", c.ablation.concat_fusion},
                         {"single_head", c.ablation.single_head}}}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    detail::JsonFields f(j, "model");
    f.get("gat_layers", c.gat_layers);
    f.get("heads", c.heads);
    f.get("head_dim", c.head_dim);
    f.get("hidden", c.hidden);
    std::array<double, 2> d{c.dropout1, c.dropout2};
    f.get("dropout", d);
    c.dropout1 = d[0];
    c.dropout2 = d[1];
    f.get("num_classes", c.num_classes);
    f.get("leaky_slope", c.leaky_slope);
    if (const auto* a = f.sub("ablation")) {
        detail::JsonFields fa(*a, f.child_path("ablation"));
        fa.get("no_gat", c.ablation.no_gat);
        fa.get("no_temporal", c.ablation.no_temporal);
        fa.get("no_external", c.ablation.no_external);
        fa.get("concat_fusion", c.ablation.concat_fusion);
        fa.get("single_head", c.ablation.single_head);
        fa.finish();
    }
    f.finish();
}

// ---- parameters -----------------------------------------------------------------

namespace {

enum class Kind { Weight, Bias, Gain };

struct ParamSpec {
    std::string name;
    Shape shape;
    Kind kind;
};

std::string gat_name(int layer, int head, const char* what) {
    return "gat" + std::to_string(layer) + ".head" + std::to_string(head) + "." + what;
}

std::string gat_name(int layer, const char* what) { return "gat" + std::to_string(layer) + "." + what; }

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
    c.validate();
    const std::size_t hid = c.hidden;
    const std::size_t heads = c.effective_heads(), d = c.effective_head_dim();
    std::vector<ParamSpec> s;
    s.push_back({"spatial.W", {hid, kSpatialDim}, Kind::Weight});
    s.push_back({"spatial.b", {hid}, Kind::Bias});
    if (!c.ablation.no_gat) {
        for (int l = 0; l < c.gat_layers; ++l) {
            for (std::size_t k = 0; k < heads; ++k) {
                s.push_back({gat_name(l, k, "W"), {d, hid}, Kind::Weight});
                s.push_back({gat_name(l, k, "a"), {3 * d}, Kind::Weight});
                s.push_back({gat_name(l, k, "We"), {d, kEdgeFeatureDim}, Kind::Weight});
            }
            s.push_back({gat_name(l, "W_res"), {hid, hid}, Kind::Weight});
        }
    }
    if (!c.ablation.no_temporal) {
        s.push_back({"temporal.W1", {2 * hid, kTemporalDim}, Kind::Weight});
        s.push_back({"temporal.b1", {2 * hid}, Kind::Bias});
        s.push_back({"temporal.W2", {hid, 2 * hid}, Kind::Weight});
        s.push_back({"temporal.b2", {hid}, Kind::Bias});
        s.push_back({"temporal.ln_gain", {hid}, Kind::Gain});
        s.push_back({"temporal.ln_bias", {hid}, Kind::Bias});
    }
    if (!c.ablation.no_external) {
        s.push_back({"external.W1", {hid, kExternalDim}, Kind::Weight});
        s.push_back({"external.b1", {hid}, Kind::Bias});
        s.push_back({"external.bn1_gamma", {hid}, Kind::Gain});
        s.push_back({"external.bn1_beta", {hid}, Kind::Bias});
        s.push_back({"external.W2", {hid, hid}, Kind::Weight});
        s.push_back({"external.b2", {hid}, Kind::Bias});
        s.push_back({"external.bn2_gamma", {hid}, Kind::Gain});
        s.push_back({"external.bn2_beta", {hid}, Kind::Bias});
    }
    s.push_back({"classifier.W1", {2 * hid, 3 * hid}, Kind::Weight});
    s.push_back({"classifier.b1", {2 * hid}, Kind::Bias});
    s.push_back({"classifier.W2", {hid, 2 * hid}, Kind::Weight});
    s.push_back({"classifier.b2", {hid}, Kind::Bias});
    s.push_back({"classifier.W3", {static_cast<std::size_t>(c.num_classes), hid}, Kind::Weight});
    s.push_back({"classifier.b3", {static_cast<std::size_t>(c.num_classes)}, Kind::Bias});
    return s;
}

}  // namespace

template <typename T>
std::size_t ModelParams<T>::index(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return i;
    }
    throw ConfigError("no parameter named '" + name + "'");
}

template <typename T>
std::size_t ModelParams<T>::scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values) n += v.size();
    return n;
}

template <typename T>
ModelParams<T> init_params(const ModelConfig& config, std::uint64_t seed) {
    auto eng = rng::engine(seed, "init");
    ModelParams<T> p;
    for (const auto& spec : param_specs(config)) {
        Tensor<T> t(spec.shape);
        if (spec.kind == Kind::Weight) {
            // a vectors count as 1 x 3d matrices
            const double fan_out = spec.shape.size() == 2 ? static_cast<double>(spec.shape[0]) : 1.0;
            const double fan_in = static_cast<double>(spec.shape.back());
            const double limit = std::sqrt(6.0 / (fan_in + fan_out));
            for (auto& v : t.values()) {
                const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
                v = static_cast<T>((2.0 * u - 1.0) * limit);
            }
        } else if (spec.kind == Kind::Gain) {
            t.fill(T(1));
        }
        p.names.push_back(spec.name);
        p.values.push_back(std::move(t));
        p.is_weight.push_back(spec.kind == Kind::Weight);
    }
    return p;
}

// ---- inputs ---------------------------------------------------------------------

template <typename T>
GraphInput<T> make_graph_input(const RoadGraph& graph, const RowMatrix& node_spatial) {
    const std::size_t n = graph.nodes.size();
    if (static_cast<std::size_t>(node_spatial.rows()) != n || node_spatial.cols() != kSpatialDim) {
        throw DimensionError("make_graph_input: node features are " + std::to_string(node_spatial.rows()) + "x" +
                             std::to_string(node_spatial.cols()) + " for " + std::to_string(n) + " nodes");
    }
    GraphInput<T> g;
    g.num_nodes = n;
    const std::size_t e = graph.edges.size();
    g.edge_features = Tensor<T>(Shape{e, kEdgeFeatureDim});
    std::vector<char> has_out(n, 0);
    for (std::size_t i = 0; i < e; ++i) {
        const auto& edge = graph.edges[i];
        if (edge.src < 0 || edge.dst < 0 || static_cast<std::size_t>(edge.src) >= n ||
            static_cast<std::size_t>(edge.dst) >= n) {
            throw DataError("edge " + std::to_string(i) + " references an unknown node");
        }
        g.src.push_back(edge.src);
        g.dst.push_back(edge.dst);
        has_out[edge.src] = 1;
        for (int f = 0; f < kEdgeFeatureDim; ++f) g.edge_features.at(i, f) = static_cast<T>(edge.edge_features[f]);
    }
    for (std::size_t v = 0; v < n; ++v) {
        if (!has_out[v]) throw DataError("node " + std::to_string(v) + " has an empty neighborhood");
    }
    g.node_spatial = Tensor<T>::from_matrix(node_spatial);
    return g;
}

template <typename T>
RecordBatch<T> make_record_batch(const FeatureSet& fs, std::span<const int> rows) {
    RecordBatch<T> b;
    const std::size_t m = rows.size();
    b.temporal = Tensor<T>(Shape{m, kTemporalDim});
    b.external = Tensor<T>(Shape{m, kExternalDim});
    for (std::size_t i = 0; i < m; ++i) {
        const int r = rows[i];
        if (r < 0 || static_cast<std::size_t>(r) >= fs.num_records()) {
            throw DataError("record row " + std::to_string(r) + " out of range");
        }
        for (int c = 0; c < kTemporalDim; ++c) b.temporal.at(i, c) = static_cast<T>(fs.record_temporal(r, c));
        for (int c = 0; c < kExternalDim; ++c) b.external.at(i, c) = static_cast<T>(fs.record_external(r, c));
        b.record_node.push_back(fs.record_node[r]);
        b.labels.push_back(fs.labels[r]);
    }
    return b;
}

// ---- blocks -----------------------------------------------------------------------

template <typename T>
std::vector<Var<T>> bind_params(ad::Tape<T>& tape, const ModelParams<T>& params, bool requires_grad) {
    std::vector<Var<T>> vars;
    vars.reserve(params.size());
    for (const auto& v : params.values) vars.push_back(tape.leaf(v, requires_grad));
    return vars;
}

template <typename T>
Var<T> spatial_embed(Var<T> x, Var<T> W, Var<T> b) {
    return ad::relu(ad::add_bias(ad::matmul_nt(x, W), b));
}

template <typename T>
Var<T> gat_layer(Var<T> h, const GraphInput<T>& graph, Var<T> edge_features, const std::vector<Var<T>>& W,
                 const std::vector<Var<T>>& a, const std::vector<Var<T>>& We, Var<T> W_res, T leaky_slope,
                 std::vector<Var<T>>* attention) {
    const std::size_t n = graph.num_nodes;
    if (h.value().rows() != n) {
        throw DimensionError("gat_layer: " + std::to_string(h.value().rows()) + " node rows for " +
                             std::to_string(n) + " nodes");
    }
    std::vector<Var<T>> heads;
    for (std::size_t k = 0; k < W.size(); ++k) {
        const std::size_t d = W[k].value().dim(0);
        if (a[k].value().size() != 3 * d) throw DimensionError("gat_layer: attention vector size must be 3*head_dim");
        const Var<T> wh = ad::matmul_nt(h, W[k]);                   // n x d
        const Var<T> we = ad::matmul_nt(edge_features, We[k]);      // E x d
        const Var<T> a_row = ad::reshape(a[k], Shape{1, 3 * d});
        const Var<T> a_src = ad::slice_cols(a_row, 0, d);
        const Var<T> a_dst = ad::slice_cols(a_row, d, d);
        const Var<T> a_edge = ad::slice_cols(a_row, 2 * d, d);
        // a·[W h_i ‖ W h_j ‖ W_e e_ij] split into its three blocks
        const Var<T> s_src = ad::matmul_nt(wh, a_src);   // n x 1
        const Var<T> s_dst = ad::matmul_nt(wh, a_dst);   // n x 1
        const Var<T> s_edge = ad::matmul_nt(we, a_edge); // E x 1
        const Var<T> e = ad::leaky_relu(
            ad::add(ad::add(ad::gather_rows(s_src, graph.src), ad::gather_rows(s_dst, graph.dst)), s_edge),
            leaky_slope);
        const Var<T> alpha = ad::segment_softmax(e, graph.src, n);
        if (attention) attention->push_back(alpha);
        const Var<T> msg = ad::mul_rows(ad::gather_rows(wh, graph.dst), alpha);
        heads.push_back(ad::elu(ad::scatter_add_rows(msg, graph.src, n)));
    }
    const Var<T> cat = heads.size() == 1 ? heads[0] : ad::concat_cols(heads);
    return ad::add(cat, ad::matmul_nt(h, W_res));
}

template <typename T>
Var<T> temporal_encode(Var<T> x, Var<T> W1, Var<T> b1, Var<T> W2, Var<T> b2, Var<T> gain, Var<T> bias) {
    const Var<T> z1 = ad::relu(ad::add_bias(ad::matmul_nt(x, W1), b1));
    const Var<T> z2 = ad::relu(ad::add_bias(ad::matmul_nt(z1, W2), b2));
    return ad::layer_norm(z2, gain, bias);
}

template <typename T>
Var<T> external_encode(Var<T> x, Var<T> W1, Var<T> b1, Var<T> g1, Var<T> be1, Var<T> W2, Var<T> b2, Var<T> g2,
                       Var<T> be2, ModelBuffers<T>& buffers, bool train) {
    const Var<T> z1 = ad::relu(ad::batch_norm(ad::add_bias(ad::matmul_nt(x, W1), b1), g1, be1, buffers.bn1, train));
    return ad::relu(ad::batch_norm(ad::add_bias(ad::matmul_nt(z1, W2), b2), g2, be2, buffers.bn2, train));
}

template <typename T>
Var<T> fuse(Var<T> h_spatial, Var<T> h_temporal, Var<T> h_external, Var<T>* weights) {
    const std::size_t m = h_spatial.value().rows(), d = h_spatial.value().cols();
    const Var<T> q = ad::reshape(ad::concat_cols<T>({h_spatial, h_temporal, h_external}), Shape{m, 3, d});
    const Var<T> scores = ad::scale(ad::bmm(q, ad::transpose_last2(q)), T(1) / std::sqrt(static_cast<T>(d)));
    const Var<T> att = ad::softmax_rows(scores);
    if (weights) *weights = att;
    return ad::reshape(ad::bmm(att, q), Shape{m, 3 * d});
}

template <typename T>
ForwardOutput<T> forward(ad::Tape<T>& tape, const std::vector<Var<T>>& params, const ModelParams<T>& layout,
                         ModelBuffers<T>& buffers, const ModelConfig& config, const GraphInput<T>& graph,
                         const RecordBatch<T>& batch, const ForwardMode& mode) {
    if (params.size() != layout.size()) throw DimensionError("forward: parameter count does not match the layout");
    auto P = [&](const std::string& name) { return params[layout.index(name)]; };
    const std::size_t m = batch.record_node.size();
    const std::size_t hid = static_cast<std::size_t>(config.hidden);
    for (int v : batch.record_node) {
        if (v < 0 || static_cast<std::size_t>(v) >= graph.num_nodes) {
            throw DataError("record mapped to unknown node " + std::to_string(v));
        }
    }

    ForwardOutput<T> out;
    Var<T> h = spatial_embed(tape.constant(graph.node_spatial), P("spatial.W"), P("spatial.b"));
    if (!config.ablation.no_gat) {
        const Var<T> ef = tape.constant(graph.edge_features);
        for (int l = 0; l < config.gat_layers; ++l) {
            std::vector<Var<T>> W, a, We;
            for (int k = 0; k < config.effective_heads(); ++k) {
                W.push_back(P(gat_name(l, k, "W")));
                a.push_back(P(gat_name(l, k, "a")));
                We.push_back(P(gat_name(l, k, "We")));
            }
            out.attention.emplace_back();
            h = gat_layer(h, graph, ef, W, a, We, P(gat_name(l, "W_res")), static_cast<T>(config.leaky_slope),
                          &out.attention.back());
        }
    }
    out.h_spatial = h;

    const Var<T> hs = ad::gather_rows(h, batch.record_node);
    const Var<T> ht = config.ablation.no_temporal
                          ? tape.constant(Tensor<T>(Shape{m, hid}))
                          : temporal_encode(tape.constant(batch.temporal), P("temporal.W1"), P("temporal.b1"),
                                            P("temporal.W2"), P("temporal.b2"), P("temporal.ln_gain"),
                                            P("temporal.ln_bias"));
    const Var<T> he = config.ablation.no_external
                          ? tape.constant(Tensor<T>(Shape{m, hid}))
                          : external_encode(tape.constant(batch.external), P("external.W1"), P("external.b1"),
                                            P("external.bn1_gamma"), P("external.bn1_beta"), P("external.W2"),
                                            P("external.b2"), P("external.bn2_gamma"), P("external.bn2_beta"),
                                            buffers, mode.train);
    if (config.ablation.concat_fusion) {
        out.h_final = ad::concat_cols<T>({hs, ht, he});
    } else {
        Var<T> att;
        out.h_final = fuse(hs, ht, he, &att);
        out.fusion_weights = att;
    }

    const std::uint64_t step = (mode.epoch << 32) ^ mode.batch;
    const Var<T> z1 = ad::dropout(
        ad::relu(ad::add_bias(ad::matmul_nt(out.h_final, P("classifier.W1")), P("classifier.b1"))),
        static_cast<T>(config.dropout1), mode.train, rng::substream(mode.seed, "dropout", step, 0));
    const Var<T> z2 = ad::dropout(ad::relu(ad::add_bias(ad::matmul_nt(z1, P("classifier.W2")), P("classifier.b2"))),
                                  static_cast<T>(config.dropout2), mode.train,
                                  rng::substream(mode.seed, "dropout", step, 1));
    out.logits = ad::add_bias(ad::matmul_nt(z2, P("classifier.W3")), P("classifier.b3"));
    out.probs = ad::softmax_rows(out.logits);
    return out;
}

template <typename T>
Tensor<T> predict_proba(const ModelParams<T>& params, const ModelBuffers<T>& buffers, const ModelConfig& config,
                        const GraphInput<T>& graph, const RecordBatch<T>& batch) {
    ad::Tape<T> tape;
    ModelBuffers<T> local = buffers;
    const auto vars = bind_params(tape, params, false);
    return forward(tape, vars, params, local, config, graph, batch, ForwardMode{}).probs.value();
}

#define STARN_INSTANTIATE(T)                                                                                      \
    template struct ModelParams<T>;                                                                               \
    template ModelParams<T> init_params<T>(const ModelConfig&, std::uint64_t);                                    \
    template GraphInput<T> make_graph_input<T>(const RoadGraph&, const RowMatrix&);                               \
    template RecordBatch<T> make_record_batch<T>(const FeatureSet&, std::span<const int>);                        \
    template std::vector<Var<T>> bind_params(ad::Tape<T>&, const ModelParams<T>&, bool);                          \
    template Var<T> spatial_embed(Var<T>, Var<T>, Var<T>);                                                        \
    template Var<T> gat_layer(Var<T>, const GraphInput<T>&, Var<T>, const std::vector<Var<T>>&,                   \
                              const std::vector<Var<T>>&, const std::vector<Var<T>>&, Var<T>, T,                  \
                              std::vector<Var<T>>*);                                                              \
    template Var<T> temporal_encode(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>);                      \
    template Var<T> external_encode(Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>, Var<T>,       \
                                    ModelBuffers<T>&, bool);                                                      \
    template Var<T> fuse(Var<T>, Var<T>, Var<T>, Var<T>*);                                                        \
    template ForwardOutput<T> forward(ad::Tape<T>&, const std::vector<Var<T>>&, const ModelParams<T>&,            \
                                      ModelBuffers<T>&, const ModelConfig&, const GraphInput<T>&,                 \
                                      const RecordBatch<T>&, const ForwardMode&);                                 \
    template Tensor<T> predict_proba(const ModelParams<T>&, const ModelBuffers<T>&, const ModelConfig&,           \
                                     const GraphInput<T>&, const RecordBatch<T>&);

STARN_INSTANTIATE(float)
STARN_INSTANTIATE(double)

#undef STARN_INSTANTIATE

}  // namespace starn
