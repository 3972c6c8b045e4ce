#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "starn/error.hpp"
#include "starn/gradcheck_suite.hpp"
#include "starn/model.hpp"

using namespace starn;
using ad::Tape;
using ad::Tensor;
using ad::Var;

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Vec vec(const Tensor<double>& t) { return Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size())); }

// Parameters with small random biases and gains away from 1.
ModelParams<double> jittered_params(const ModelConfig& cfg, std::uint64_t seed) {
    auto p = init_params<double>(cfg, seed);
    std::mt19937_64 eng(seed + 100);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!p.is_weight[i]) {
            for (auto& v : p.values[i].values()) v += u(eng);
        }
    }
    return p;
}

std::vector<int> seq(int n) {
    std::vector<int> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// 4-node path 0-1-2-3 with self-loops, edges sorted by (src, dst).
GraphInput<double> path4(std::mt19937_64& eng) {
    GraphInput<double> g;
    g.num_nodes = 4;
    const std::vector<std::pair<int, int>> edges{{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 2},
                                                 {2, 1}, {2, 2}, {2, 3}, {3, 2}, {3, 3}};
    for (auto [s, d] : edges) g.src.push_back(s), g.dst.push_back(d);
    std::normal_distribution<double> n(0, 1);
    g.edge_features = Tensor<double>(ad::Shape{edges.size(), 5});
    for (auto& v : g.edge_features.values()) v = n(eng);
    g.node_spatial = Tensor<double>(ad::Shape{4, 9});
    for (auto& v : g.node_spatial.values()) v = n(eng);
    return g;
}

Mat relu(const Mat& m) { return m.cwiseMax(0.0); }

GraphInput<float> to_float(const GraphInput<double>& g) {
    GraphInput<float> f;
    f.num_nodes = g.num_nodes;
    f.src = g.src;
    f.dst = g.dst;
    f.edge_features = g.edge_features.cast<float>();
    f.node_spatial = g.node_spatial.cast<float>();
    return f;
}

RecordBatch<float> to_float(const RecordBatch<double>& b) {
    return {b.temporal.cast<float>(), b.external.cast<float>(), b.record_node, b.labels};
}

template <typename T>
Tensor<T> eval_probs(const ModelParams<T>& p, const ModelConfig& cfg, const GraphInput<T>& g, const RecordBatch<T>& b) {
    return predict_proba(p, ModelBuffers<T>(cfg.hidden), cfg, g, b);
}

Mat layer_norm_rows(const Mat& z, const Vec& gain, const Vec& bias) {
    Mat out(z.rows(), z.cols());
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        const double mu = z.row(i).mean();
        const double var = (z.row(i).array() - mu).square().mean();
        out.row(i) = ((z.row(i).array() - mu) / std::sqrt(var + 1e-5)).matrix().cwiseProduct(gain.transpose()) +
                     bias.transpose();
    }
    return out;
}

Mat batch_norm_cols(const Mat& z, const Vec& gamma, const Vec& beta) {
    Mat out(z.rows(), z.cols());
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
        const double mu = z.col(j).mean();
        const double var = (z.col(j).array() - mu).square().mean();
        out.col(j) = ((z.col(j).array() - mu) / std::sqrt(var + 1e-5) * gamma(j) + beta(j)).matrix();
    }
    return out;
}

}  // namespace

TEST(Init, DeterministicPerSeed) {
    const ModelConfig cfg;
    const auto a = init_params<float>(cfg, 5), b = init_params<float>(cfg, 5), c = init_params<float>(cfg, 6);
    EXPECT_EQ(a.names, b.names);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, c.values);
}

TEST(Init, ShapesAndCounts) {
    const auto p = init_params<float>(ModelConfig{}, 1);
    EXPECT_EQ(p.at("classifier.W3").shape(), (ad::Shape{4, 64}));
    EXPECT_EQ(p.at("spatial.W").shape(), (ad::Shape{64, 9}));
    EXPECT_EQ(p.at("gat0.head3.W").shape(), (ad::Shape{16, 64}));
    EXPECT_EQ(p.at("gat1.head0.a").shape(), (ad::Shape{48}));
    EXPECT_EQ(p.at("gat1.head0.We").shape(), (ad::Shape{16, 5}));
    EXPECT_EQ(p.at("gat1.W_res").shape(), (ad::Shape{64, 64}));
    EXPECT_EQ(p.at("temporal.W1").shape(), (ad::Shape{128, 11}));
    EXPECT_EQ(p.at("classifier.W1").shape(), (ad::Shape{128, 192}));
    // 640 spatial + 2 x 8704 GAT + 9920 temporal + 4992 external + 33220 classifier
    EXPECT_EQ(p.scalar_count(), 66180u);
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (float v : p.values[i].values()) EXPECT_TRUE(std::isfinite(v));
        if (p.names[i].ends_with(".b") || p.names[i].find(".b1") != std::string::npos ||
            p.names[i].find("_beta") != std::string::npos || p.names[i].find("ln_bias") != std::string::npos) {
            for (float v : p.values[i].values()) EXPECT_EQ(v, 0.0f) << p.names[i];
        }
    }
    ModelConfig single;
    single.ablation.single_head = true;
    const auto s = init_params<float>(single, 1);
    EXPECT_EQ(s.at("gat0.head0.W").shape(), (ad::Shape{64, 64}));
    EXPECT_THROW(s.at("gat0.head1.W"), ConfigError);
}

TEST(Init, GlorotSpreadOfSpatialWeights) {
    const double bound = std::sqrt(6.0 / (64 + 9));
    double sum = 0, sq = 0, n = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        for (double v : init_params<double>(ModelConfig{}, seed).at("spatial.W").values()) {
            EXPECT_LE(std::abs(v), bound);
            sum += v, sq += v * v, ++n;
        }
    }
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    EXPECT_NEAR(sd / (bound / std::sqrt(3.0)), 1.0, 0.05);
}

TEST(Config, Validation) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    c.head_dim = 15;
    EXPECT_THROW(c.validate(), ConfigError);
    for (const auto& name : ablation_names()) EXPECT_EQ(ablation_name(ablation_from_name(name)), name);
    EXPECT_THROW(ablation_from_name("no_such_variant"), ConfigError);
}

TEST(SpatialEmbed, ZeroAndHandOracle) {
    Tape<double> tp;
    const auto p = jittered_params(ModelConfig{}, 2);
    const auto W = tp.constant(p.at("spatial.W"));
    const auto zero = spatial_embed(tp.constant(Tensor<double>(ad::Shape{3, 9})), W,
                                    tp.constant(Tensor<double>(ad::Shape{64})));
    for (double v : zero.value().values()) EXPECT_EQ(v, 0.0);

    Vec x = Vec::Random(9);
    const auto out = spatial_embed(tp.constant(fixtures::tensor(x.transpose())), W, tp.constant(p.at("spatial.b")));
    const Vec want = relu(fixtures::dense(p.at("spatial.W")) * x + vec(p.at("spatial.b")));
    EXPECT_LE((fixtures::dense(out.value()).row(0).transpose() - want).cwiseAbs().maxCoeff(), 1e-14);
    for (double v : out.value().values()) EXPECT_GE(v, 0.0);
}

TEST(GatOracle, FourNodePathMatchesDenseLoops) {
    std::mt19937_64 eng(11);
    const auto g = path4(eng);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto p = jittered_params(ModelConfig{}, seed);
        Tape<double> tp;
        Mat h = Mat::Random(4, 64);
        std::vector<Var<double>> W, a, We;
        std::vector<oracle::GatHead> heads;
        for (int k = 0; k < 4; ++k) {
            const std::string base = "gat0.head" + std::to_string(k) + ".";
            W.push_back(tp.constant(p.at(base + "W")));
            a.push_back(tp.constant(p.at(base + "a")));
            We.push_back(tp.constant(p.at(base + "We")));
            heads.push_back(fixtures::head_of(p, 0, k));
        }
        std::vector<Var<double>> att;
        const auto out = gat_layer(tp.constant(fixtures::tensor(h)), g, tp.constant(g.edge_features), W, a, We,
                                   tp.constant(p.at("gat0.W_res")), 0.2, &att);
        std::vector<std::vector<double>> want_alpha;
        const Mat want = oracle::gat_layer(h, g.src, g.dst, fixtures::dense(g.edge_features), heads,
                                           fixtures::dense(p.at("gat0.W_res")), 0.2, &want_alpha);
        EXPECT_LE((fixtures::dense(out.value()) - want).cwiseAbs().maxCoeff(), 1e-10);
        ASSERT_EQ(att.size(), 4u);
        for (int k = 0; k < 4; ++k) {
            for (std::size_t e = 0; e < g.src.size(); ++e) EXPECT_NEAR(att[k].value()[e], want_alpha[k][e], 1e-12);
        }
    }
}

TEST(Gat, SingleNodeSelfLoopHasUnitAttention) {
    GraphInput<double> g;
    g.num_nodes = 1;
    g.src = {0};
    g.dst = {0};
    g.edge_features = Tensor<double>(ad::Shape{1, 5}, 0.3);
    g.node_spatial = Tensor<double>(ad::Shape{1, 9}, 0.5);
    const ModelConfig cfg;
    const auto p = jittered_params(cfg, 4);
    Tape<double> tp;
    ModelBuffers<double> buf;
    const auto vars = bind_params(tp, p, false);
    auto batch = toy_record_batch(4, 1);
    const auto out = forward(tp, vars, p, buf, cfg, g, batch, ForwardMode{});
    for (const auto& layer : out.attention) {
        for (const auto& head : layer) EXPECT_DOUBLE_EQ(head.value()[0], 1.0);
    }
}

TEST(GatProperty, AttentionSumsToOnePerNode) {
    for (const auto& variant : {"full", "single_head"}) {
        ModelConfig cfg;
        cfg.ablation = ablation_from_name(variant);
        const auto g = to_float(toy_graph_input(9));
        const auto b = to_float(toy_record_batch(9, g.num_nodes));
        const auto p = init_params<float>(cfg, 9);
        Tape<float> tp;
        ModelBuffers<float> buf;
        const auto out = forward(tp, bind_params(tp, p, false), p, buf, cfg, g, b, ForwardMode{});
        ASSERT_EQ(out.attention.size(), 2u);
        for (const auto& layer : out.attention) {
            ASSERT_EQ(static_cast<int>(layer.size()), cfg.effective_heads());
            for (const auto& head : layer) {
                std::vector<double> total(g.num_nodes, 0.0);
                for (std::size_t e = 0; e < g.src.size(); ++e) total[g.src[e]] += head.value()[e];
                for (double t : total) EXPECT_NEAR(t, 1.0, 1e-6) << variant;
            }
        }
    }
}

TEST(Gat, EmptyNeighborhoodIsAnError) {
    RoadGraph rg;
    rg.nodes.resize(2);
    Edge e;
    e.src = 0, e.dst = 0, e.weight = 1;
    rg.edges = {e};
    EXPECT_THROW(make_graph_input<float>(rg, RowMatrix::Zero(2, 9)), DataError);
    EXPECT_THROW(make_graph_input<float>(rg, RowMatrix::Zero(3, 9)), DimensionError);
}

TEST(Temporal, HandOracleAndLayerNormContract) {
    const auto p = jittered_params(ModelConfig{}, 3);
    Mat x = Mat::Random(5, 11);
    x.row(4) = x.row(3);
    Tape<double> tp;
    auto P = [&](const char* n) { return tp.constant(p.at(n)); };
    const auto out = temporal_encode(tp.constant(fixtures::tensor(x)), P("temporal.W1"), P("temporal.b1"),
                                     P("temporal.W2"), P("temporal.b2"), P("temporal.ln_gain"), P("temporal.ln_bias"));
    const Mat z1 = relu((x * fixtures::dense(p.at("temporal.W1")).transpose()).rowwise() +
                        vec(p.at("temporal.b1")).transpose());
    const Mat z2 = relu((z1 * fixtures::dense(p.at("temporal.W2")).transpose()).rowwise() +
                        vec(p.at("temporal.b2")).transpose());
    const Mat want = layer_norm_rows(z2, vec(p.at("temporal.ln_gain")), vec(p.at("temporal.ln_bias")));
    const Mat got = fixtures::dense(out.value());
    EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(got.row(3), got.row(4));

    // unit gain, zero bias: each row has mean 0 and variance near 1
    const auto unit = temporal_encode(tp.constant(fixtures::tensor(x)), P("temporal.W1"), P("temporal.b1"),
                                      P("temporal.W2"), P("temporal.b2"), tp.constant(Tensor<double>(ad::Shape{64}, 1.0)),
                                      tp.constant(Tensor<double>(ad::Shape{64}, 0.0)));
    const Mat u = fixtures::dense(unit.value());
    for (Eigen::Index i = 0; i < u.rows(); ++i) {
        EXPECT_NEAR(u.row(i).mean(), 0.0, 1e-12);
        EXPECT_NEAR((u.row(i).array() - u.row(i).mean()).square().mean(), 1.0, 1e-3);
    }
}

TEST(External, EvalZeroInputAndTrainingOracle) {
    const auto p = jittered_params(ModelConfig{}, 5);
    Tape<double> tp;
    auto P = [&](const char* n) { return tp.constant(p.at(n)); };
    auto Z = [&](std::size_t n) { return tp.constant(Tensor<double>(ad::Shape{n})); };
    ModelBuffers<double> fresh;
    const auto zero = external_encode(tp.constant(Tensor<double>(ad::Shape{3, 8})), P("external.W1"), Z(64),
                                      P("external.bn1_gamma"), Z(64), P("external.W2"), Z(64),
                                      P("external.bn2_gamma"), Z(64), fresh, false);
    for (double v : zero.value().values()) EXPECT_EQ(v, 0.0);

    Mat x = Mat::Random(7, 8);
    ModelBuffers<double> buf;
    const auto out = external_encode(tp.constant(fixtures::tensor(x)), P("external.W1"), P("external.b1"),
                                     P("external.bn1_gamma"), P("external.bn1_beta"), P("external.W2"),
                                     P("external.b2"), P("external.bn2_gamma"), P("external.bn2_beta"), buf, true);
    const Mat a1 = (x * fixtures::dense(p.at("external.W1")).transpose()).rowwise() + vec(p.at("external.b1")).transpose();
    const Mat z1 = relu(batch_norm_cols(a1, vec(p.at("external.bn1_gamma")), vec(p.at("external.bn1_beta"))));
    const Mat a2 = (z1 * fixtures::dense(p.at("external.W2")).transpose()).rowwise() + vec(p.at("external.b2")).transpose();
    const Mat want = relu(batch_norm_cols(a2, vec(p.at("external.bn2_gamma")), vec(p.at("external.bn2_beta"))));
    EXPECT_LE((fixtures::dense(out.value()) - want).cwiseAbs().maxCoeff(), 1e-12);
    for (Eigen::Index j = 0; j < 64; ++j) EXPECT_NEAR(buf.bn1.running_mean[j], 0.1 * a1.col(j).mean(), 1e-14);

    // pre-affine batch statistics: mean 0, variance v / (v + eps)
    const Mat wide = a1 * 100.0;
    const auto bn = ad::batch_norm(tp.constant(fixtures::tensor(wide)), tp.constant(Tensor<double>(ad::Shape{64}, 1.0)),
                                   Z(64), fresh.bn1, true);
    const Mat n = fixtures::dense(bn.value());
    for (Eigen::Index j = 0; j < 64; ++j) {
        const double v = (wide.col(j).array() - wide.col(j).mean()).square().mean();
        EXPECT_NEAR(n.col(j).mean(), 0.0, 1e-12);
        EXPECT_NEAR(n.col(j).squaredNorm() / 7.0, v / (v + 1e-5), 1e-12);
        EXPECT_NEAR(n.col(j).squaredNorm() / 7.0, 1.0, 1e-6);
    }
}

TEST(FusionOracle, RandomVectorsMatchDenseLoops) {
    Tape<double> tp;
    const Mat hs = Mat::Random(6, 64) * 2, ht = Mat::Random(6, 64) * 2, he = Mat::Random(6, 64) * 2;
    Var<double> w;
    const auto out = fuse(tp.constant(fixtures::tensor(hs)), tp.constant(fixtures::tensor(ht)),
                          tp.constant(fixtures::tensor(he)), &w);
    std::vector<Eigen::Matrix3d> want_w;
    const Mat want = oracle::fuse(hs, ht, he, &want_w);
    EXPECT_LE((fixtures::dense(out.value()) - want).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_EQ(w.value().shape(), (ad::Shape{6, 3, 3}));
    for (std::size_t i = 0; i < 6; ++i) {
        for (int p = 0; p < 3; ++p) {
            double row = 0;
            for (int q = 0; q < 3; ++q) {
                const double v = w.value()[i * 9 + p * 3 + q];
                EXPECT_NEAR(v, want_w[i](p, q), 1e-12);
                row += v;
            }
            EXPECT_NEAR(row, 1.0, 1e-12);
        }
    }
}

TEST(Fusion, IdenticalModalitiesGiveUniformAttention) {
    Tape<float> tp;
    Eigen::MatrixXf v = Eigen::MatrixXf::Random(4, 64);
    const auto t = tp.constant(Tensor<float>::from_matrix(v));
    Var<float> w;
    const auto out = fuse(t, t, t, &w);
    for (float a : w.value().values()) EXPECT_NEAR(a, 1.0f / 3.0f, 1e-6);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t c = 0; c < 192; ++c) EXPECT_NEAR(out.value().at(i, c), v(i, c % 64), 1e-5);
    }
}

TEST(Classify, LogitsMatchHandChainAndProbsSumToOne) {
    const ModelConfig cfg;
    const auto p = jittered_params(cfg, 6);
    const auto g = toy_graph_input(6);
    const auto b = toy_record_batch(6, g.num_nodes);
    Tape<double> tp;
    ModelBuffers<double> buf;
    const auto out = forward(tp, bind_params(tp, p, false), p, buf, cfg, g, b, ForwardMode{});
    EXPECT_EQ(out.probs.value().shape(), (ad::Shape{8, 4}));
    EXPECT_EQ(out.h_final.value().shape(), (ad::Shape{8, 192}));
    const Mat hf = fixtures::dense(out.h_final.value());
    auto layer = [&](const Mat& x, const char* W, const char* bias) {
        return Mat((x * fixtures::dense(p.at(W)).transpose()).rowwise() + vec(p.at(bias)).transpose());
    };
    const Mat logits = layer(relu(layer(relu(layer(hf, "classifier.W1", "classifier.b1")), "classifier.W2",
                                        "classifier.b2")),
                             "classifier.W3", "classifier.b3");
    EXPECT_LE((fixtures::dense(out.logits.value()) - logits).cwiseAbs().maxCoeff(), 1e-12);
    for (std::size_t i = 0; i < 8; ++i) {
        double row = 0;
        for (std::size_t c = 0; c < 4; ++c) row += out.probs.value().at(i, c);
        EXPECT_NEAR(row, 1.0, 1e-12);
    }
    // float32 rows as well
    const auto pf = eval_probs(p.cast<float>(), cfg, to_float(g), to_float(b));
    for (std::size_t i = 0; i < 8; ++i) {
        double row = 0;
        for (std::size_t c = 0; c < 4; ++c) row += pf.at(i, c);
        EXPECT_NEAR(row, 1.0, 1e-6);
    }
}

TEST(Forward, EvalIsDeterministicAndTrainingUsesDropout) {
    const ModelConfig cfg;
    const auto p = init_params<float>(cfg, 8);
    const auto g = to_float(toy_graph_input(8));
    const auto b = to_float(toy_record_batch(8, g.num_nodes));
    EXPECT_EQ(eval_probs(p, cfg, g, b), eval_probs(p, cfg, g, b));
    auto train_probs = [&](std::uint64_t batch) {
        Tape<float> tp;
        ModelBuffers<float> buf;
        return forward(tp, bind_params(tp, p, false), p, buf, cfg, g, b, ForwardMode{true, 8, 0, batch}).probs.value();
    };
    EXPECT_EQ(train_probs(1), train_probs(1));
    EXPECT_NE(train_probs(1), train_probs(2));
}

TEST(Forward, UnknownNodeIsAnError) {
    const ModelConfig cfg;
    const auto p = init_params<double>(cfg, 1);
    const auto g = toy_graph_input(1);
    auto b = toy_record_batch(1, g.num_nodes);
    b.record_node[2] = 99;
    EXPECT_THROW(eval_probs(p, cfg, g, b), DataError);
}

TEST(Forward, NoGatIgnoresNeighbourFeatures) {
    // record 0 sits on node 1; changing node 3's features reaches it through
    // two GAT layers (3 -> 2 -> 1 and the 0-3 chord), but not without them
    auto g = toy_graph_input(12);
    auto b = toy_record_batch(12, g.num_nodes);
    ASSERT_EQ(b.record_node[0], 1);
    auto g2 = g;
    for (std::size_t c = 0; c < 9; ++c) g2.node_spatial.at(3, c) += 1.5;
    for (const char* variant : {"full", "no_gat"}) {
        ModelConfig cfg;
        cfg.ablation = ablation_from_name(variant);
        const auto p = jittered_params(cfg, 12);
        const auto before = eval_probs(p, cfg, g, b), after = eval_probs(p, cfg, g2, b);
        double diff = 0;
        for (std::size_t c = 0; c < 4; ++c) diff = std::max(diff, std::abs(before.at(0, c) - after.at(0, c)));
        if (std::string(variant) == "full") {
            EXPECT_GT(diff, 1e-6);
        } else {
            EXPECT_EQ(diff, 0.0);
        }
    }
}

TEST(Forward, EveryVariantProducesDistributions) {
    const auto g = to_float(toy_graph_input(13));
    const auto b = to_float(toy_record_batch(13, g.num_nodes));
    for (const auto& variant : ablation_names()) {
        ModelConfig cfg;
        cfg.ablation = ablation_from_name(variant);
        const auto pr = eval_probs(init_params<float>(cfg, 13), cfg, g, b);
        ASSERT_EQ(pr.shape(), (ad::Shape{8, 4})) << variant;
        for (std::size_t i = 0; i < 8; ++i) {
            double row = 0;
            for (std::size_t c = 0; c < 4; ++c) row += pr.at(i, c);
            EXPECT_NEAR(row, 1.0, 1e-6) << variant;
        }
    }
}

TEST(ForwardProperty, BatchPermutationPermutesRows) {
    const ModelConfig cfg;
    const auto p = init_params<float>(cfg, 14);
    const auto g = to_float(toy_graph_input(14));
    const auto b = to_float(toy_record_batch(14, g.num_nodes));
    std::vector<int> perm = seq(8);
    std::mt19937_64 eng(14);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(perm.begin(), perm.end(), eng);
        RecordBatch<float> pb;
        pb.temporal = Tensor<float>(b.temporal.shape());
        pb.external = Tensor<float>(b.external.shape());
        for (std::size_t i = 0; i < 8; ++i) {
            const int src = perm[i];
            for (std::size_t c = 0; c < 11; ++c) pb.temporal.at(i, c) = b.temporal.at(src, c);
            for (std::size_t c = 0; c < 8; ++c) pb.external.at(i, c) = b.external.at(src, c);
            pb.record_node.push_back(b.record_node[src]);
            pb.labels.push_back(b.labels[src]);
        }
        const auto base = eval_probs(p, cfg, g, b), permuted = eval_probs(p, cfg, g, pb);
        for (std::size_t i = 0; i < 8; ++i) {
            for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(permuted.at(i, c), base.at(perm[i], c), 1e-6);
        }
    }
}

TEST(ForwardProperty, NodeRelabelingEquivariance) {
    const auto g = to_float(toy_graph_input(15));
    const auto b = to_float(toy_record_batch(15, g.num_nodes));
    std::mt19937_64 eng(15);
    for (const char* variant : {"full", "single_head"}) {
        ModelConfig cfg;
        cfg.ablation = ablation_from_name(variant);
        const auto p = init_params<float>(cfg, 15);
        const auto base = eval_probs(p, cfg, g, b);
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<int> pi = seq(static_cast<int>(g.num_nodes));  // old id -> new id
            std::shuffle(pi.begin(), pi.end(), eng);
            GraphInput<float> rg;
            rg.num_nodes = g.num_nodes;
            rg.node_spatial = Tensor<float>(g.node_spatial.shape());
            for (std::size_t v = 0; v < g.num_nodes; ++v) {
                for (std::size_t c = 0; c < 9; ++c) rg.node_spatial.at(pi[v], c) = g.node_spatial.at(v, c);
            }
            // reorder edges by new (src, dst) as a real graph would store them
            std::vector<std::size_t> order(g.src.size());
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
                return std::pair(pi[g.src[x]], pi[g.dst[x]]) < std::pair(pi[g.src[y]], pi[g.dst[y]]);
            });
            rg.edge_features = Tensor<float>(g.edge_features.shape());
            for (std::size_t e = 0; e < order.size(); ++e) {
                rg.src.push_back(pi[g.src[order[e]]]);
                rg.dst.push_back(pi[g.dst[order[e]]]);
                for (std::size_t c = 0; c < 5; ++c) rg.edge_features.at(e, c) = g.edge_features.at(order[e], c);
            }
            auto rb = b;
            for (auto& v : rb.record_node) v = pi[v];
            const auto relabeled = eval_probs(p, cfg, rg, rb);
            for (std::size_t i = 0; i < base.size(); ++i) EXPECT_NEAR(relabeled[i], base[i], 1e-6) << variant;
        }
    }
}
