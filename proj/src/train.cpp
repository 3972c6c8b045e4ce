#include "starn/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "starn/detail/json_util.hpp"
#include "starn/rng.hpp"

namespace starn {

using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
    if (!(gamma >= 0.0)) throw ConfigError("train.gamma must be >= 0");
    if (!(l2_coeff >= 0.0)) throw ConfigError("train.l2_coeff must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (!(eta_min >= 0.0 && eta_min < eta_max)) throw ConfigError("train: need 0 <= eta_min < eta_max");
    if (restart_period < 1) throw ConfigError("train.restart_period must be >= 1");
    if (!(clip_tau > 0.0)) throw ConfigError("train.clip_tau must be > 0");
    if (batch_size < 2) throw ConfigError("train.batch_size must be >= 2");
    if (max_epochs < 1) throw ConfigError("train.max_epochs must be >= 1");
    if (early_stop_patience < 0) throw ConfigError("train.early_stop_patience must be >= 0");
    for (double w : class_weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("train.class_weights must be finite and >= 0");
    }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"gamma", c.gamma},
                       {"class_weights", c.class_weights},
                       {"l2_coeff", c.l2_coeff},
                       {"weight_decay", c.weight_decay},
                       {"eta_min", c.eta_min},
                       {"eta_max", c.eta_max},
                       {"restart_period", c.restart_period},
                       {"clip_tau", c.clip_tau},
                       {"batch_size", c.batch_size},
                       {"max_epochs", c.max_epochs},
                       {"early_stop_patience", c.early_stop_patience},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    detail::JsonFields f(j, "train");
    f.get("gamma", c.gamma);
    f.get("class_weights", c.class_weights);
    f.get("l2_coeff", c.l2_coeff);
    f.get("weight_decay", c.weight_decay);
    f.get("eta_min", c.eta_min);
    f.get("eta_max", c.eta_max);
    f.get("restart_period", c.restart_period);
    f.get("clip_tau", c.clip_tau);
    f.get("batch_size", c.batch_size);
    f.get("max_epochs", c.max_epochs);
    f.get("early_stop_patience", c.early_stop_patience);
    f.get("seed", c.seed);
    f.finish();
}

// ---- objective ------------------------------------------------------------------

template <typename T>
Var<T> l2_penalty(ad::Tape<T>& tape, const std::vector<Var<T>>& params, const std::vector<bool>& is_weight, T lambda) {
    if (params.size() != is_weight.size()) throw DimensionError("l2_penalty: weight mask does not match parameters");
    Var<T> total = tape.constant(Tensor<T>::scalar(T(0)));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (is_weight[i]) total = ad::add(total, ad::sum(ad::mul(params[i], params[i])));
    }
    return ad::scale(total, lambda);
}

double cosine_lr(double t_cur, double t_max, double eta_min, double eta_max) {
    if (!(t_max > 0.0) || t_cur < 0.0 || t_cur > t_max) throw ConfigError("cosine_lr: need 0 <= T_cur <= T_max");
    if (t_cur == 0.0) return eta_max;
    if (t_cur == t_max) return eta_min;
    return eta_min + 0.5 * (eta_max - eta_min) * (1.0 + std::cos(std::numbers::pi * t_cur / t_max));
}

double lr_for_epoch(int epoch, const TrainConfig& cfg) {
    if (epoch < 0) throw ConfigError("lr_for_epoch: epoch must be >= 0");
    return cosine_lr(epoch % cfg.restart_period, cfg.restart_period, cfg.eta_min, cfg.eta_max);
}

namespace {

template <typename T>
double global_norm(const std::vector<Tensor<T>>& grads) {
    double s = 0.0;
    for (const auto& g : grads) {
        for (const T v : g.values()) s += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(s);
}

template <typename T>
void scale_all(std::vector<Tensor<T>>& grads, double factor) {
    for (auto& g : grads) {
        for (auto& v : g.values()) v = static_cast<T>(static_cast<double>(v) * factor);
    }
}

}  // namespace

template <typename T>
double clip_gradients(std::vector<Tensor<T>>& grads, double tau) {
    if (!(tau > 0.0)) throw ConfigError("clip_gradients: tau must be > 0");
    const double norm = global_norm(grads);
    if (!std::isfinite(norm)) throw NumericError("clip_gradients: non-finite gradient norm");
    if (norm <= tau) return norm;
    scale_all(grads, tau / norm);
    // Rounding in T can leave the norm a hair above tau.
    for (double now = global_norm(grads); now > tau; now = global_norm(grads)) {
        scale_all(grads, (tau / now) * (1.0 - 4.0 * std::numeric_limits<T>::epsilon()));
    }
    return norm;
}

template <typename T>
AdamState<T> adam_init(const ModelParams<T>& params) {
    AdamState<T> s;
    for (const auto& v : params.values) {
        s.m.emplace_back(v.shape());
        s.v.emplace_back(v.shape());
    }
    return s;
}

template <typename T>
void adamw_step(ModelParams<T>& params, const std::vector<Tensor<T>>& grads, AdamState<T>& state, double lr,
                double weight_decay, const AdamHyper& hyper) {
    if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DimensionError("adamw_step: parameter, gradient and moment counts differ");
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& w = params.values[k];
        const auto& g = grads[k];
        if (g.size() != w.size()) throw DimensionError("adamw_step: gradient shape mismatch for " + params.names[k]);
        auto& m = state.m[k];
        auto& v = state.v[k];
        const double decay = params.is_weight[k] ? 1.0 - lr * weight_decay : 1.0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = g[i];
            const double mi = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * gi;
            const double vi = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1, vhat = vi / bc2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) * decay - lr * mhat / (std::sqrt(vhat) + hyper.eps));
        }
    }
}

std::vector<double> inverse_frequency_weights(std::span<const int> labels, int classes) {
    std::vector<double> count(classes, 0.0);
    for (int y : labels) {
        if (y < 0 || y >= classes) throw DataError("class weights: label " + std::to_string(y) + " out of range");
        count[y] += 1.0;
    }
    std::vector<double> w(classes, 0.0);
    double total = 0.0;
    int present = 0;
    for (int c = 0; c < classes; ++c) {
        if (count[c] == 0.0) continue;
        w[c] = static_cast<double>(labels.size()) / count[c];
        total += w[c];
        ++present;
    }
    if (present == 0) throw DataError("class weights: no labels");
    for (auto& x : w) x *= present / total;
    return w;
}

bool EarlyStopping::update(double score) {
    if (!seen_ || score > best_) {
        seen_ = true;
        best_ = score;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

// ---- history ----------------------------------------------------------------------

std::string history_csv(std::span<const EpochRecord> history) {
    std::ostringstream os;
    os << "epoch,lr,train_loss,grad_norm,val_macro_f1,val_weighted_f1,val_balanced_accuracy,val_kappa\n";
    char buf[256];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch, r.lr, r.train_loss,
                      r.grad_norm, r.val_macro_f1, r.val_weighted_f1, r.val_balanced_accuracy, r.val_kappa);
        os << buf;
    }
    return os.str();
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << history_csv(history);
}

// ---- loop -------------------------------------------------------------------------

RowMatrix predict_rows(const Checkpoint& ckpt, const GraphInput<float>& graph, const FeatureSet& fs,
                       std::span<const int> rows) {
    constexpr std::size_t kChunk = 4096;
    RowMatrix out(static_cast<Eigen::Index>(rows.size()), ckpt.model.num_classes);
    for (std::size_t start = 0; start < rows.size(); start += kChunk) {
        const auto part = rows.subspan(start, std::min(kChunk, rows.size() - start));
        const auto batch = make_record_batch<float>(fs, part);
        const auto probs = predict_proba(ckpt.params, ckpt.buffers, ckpt.model, graph, batch);
        for (std::size_t i = 0; i < part.size(); ++i) {
            for (int c = 0; c < ckpt.model.num_classes; ++c) {
                out(static_cast<Eigen::Index>(start + i), c) = probs.at(i, c);
            }
        }
    }
    return out;
}

metrics::MetricsReport evaluate_rows(const Checkpoint& ckpt, const GraphInput<float>& graph, const FeatureSet& fs,
                                     std::span<const int> rows) {
    if (rows.empty()) throw DataError("evaluate: no records to evaluate");
    std::vector<int> labels;
    for (int r : rows) labels.push_back(fs.labels.at(r));
    return metrics::evaluate(labels, predict_rows(ckpt, graph, fs, rows));
}

namespace {

std::string engine_state(const std::mt19937_64& eng) {
    std::ostringstream os;
    os << eng;
    return os.str();
}

std::vector<std::vector<int>> make_batches(const std::vector<int>& order, int batch_size) {
    std::vector<std::vector<int>> batches;
    for (std::size_t s = 0; s < order.size(); s += batch_size) {
        const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(batch_size));
        batches.emplace_back(order.begin() + s, order.begin() + e);
    }
    // batch norm needs two rows; fold a trailing singleton into its predecessor
    if (batches.size() > 1 && batches.back().size() == 1) {
        batches[batches.size() - 2].push_back(batches.back()[0]);
        batches.pop_back();
    }
    return batches;
}

}  // namespace

FitResult fit(const RoadGraph& graph, const FeatureSet& fs, std::span<const int> train_rows,
              std::span<const int> val_rows, const ModelConfig& model_config, const TrainConfig& train_config,
              const EpochCallback& on_epoch) {
    model_config.validate();
    train_config.validate();
    if (train_rows.size() < 2) throw DataError("fit: need at least 2 training records");
    if (val_rows.empty()) throw DataError("fit: validation split is empty");

    FitResult result;
    std::vector<int> train_labels;
    for (int r : train_rows) train_labels.push_back(fs.labels.at(r));
    if (train_config.class_weights.empty()) {
        result.class_weights = inverse_frequency_weights(train_labels, model_config.num_classes);
    } else {
        if (static_cast<int>(train_config.class_weights.size()) != model_config.num_classes) {
            throw ConfigError("train.class_weights needs one weight per class");
        }
        result.class_weights = train_config.class_weights;
    }
    const std::vector<float> alpha(result.class_weights.begin(), result.class_weights.end());

    const auto ginput = make_graph_input<float>(graph, fs.node_spatial);
    std::vector<int> val_labels;
    for (int r : val_rows) val_labels.push_back(fs.labels.at(r));

    Checkpoint state;
    state.model = model_config;
    state.train = train_config;
    state.train.class_weights = result.class_weights;
    state.stats = fs.stats;
    state.params = init_params<float>(model_config, train_config.seed);
    state.buffers = ModelBuffers<float>(model_config.hidden);
    state.adam = adam_init(state.params);
    auto shuffle = rng::engine(train_config.seed, "shuffle");

    std::vector<int> order(train_rows.begin(), train_rows.end());
    EarlyStopping stopper(train_config.early_stop_patience);
    for (int epoch = 0; epoch < train_config.max_epochs; ++epoch) {
        for (std::size_t i = order.size() - 1; i > 0; --i) {
            std::swap(order[i], order[shuffle() % (i + 1)]);
        }
        const double lr = lr_for_epoch(epoch, train_config);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        double loss_sum = 0.0, norm_sum = 0.0;
        const auto batches = make_batches(order, train_config.batch_size);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const auto batch = make_record_batch<float>(fs, batches[b]);
            ad::Tape<float> tape;
            const auto vars = bind_params(tape, state.params, true);
            const ForwardMode mode{true, train_config.seed, static_cast<std::uint64_t>(epoch), b};
            const auto out = forward(tape, vars, state.params, state.buffers, model_config, ginput, batch, mode);
            Var<float> loss = focal_loss(out.probs, batch.labels, alpha, static_cast<float>(train_config.gamma));
            if (train_config.l2_coeff > 0.0) {
                loss = ad::add(loss, l2_penalty(tape, vars, state.params.is_weight,
                                                static_cast<float>(train_config.l2_coeff)));
            }
            const double lv = loss.value()[0];
            if (!std::isfinite(lv)) {
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
            }
            tape.backward(loss);
            std::vector<Tensor<float>> grads;
            grads.reserve(vars.size());
            for (const auto& v : vars) grads.push_back(tape.grad(v));
            norm_sum += clip_gradients(grads, train_config.clip_tau);
            adamw_step(state.params, grads, state.adam, lr, train_config.weight_decay);
            loss_sum += lv * static_cast<double>(batches[b].size());
        }
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.grad_norm = norm_sum / static_cast<double>(batches.size());

        const auto report = metrics::evaluate(val_labels, predict_rows(state, ginput, fs, val_rows));
        rec.val_macro_f1 = report.macro_f1;
        rec.val_weighted_f1 = report.weighted_f1;
        rec.val_balanced_accuracy = report.balanced_accuracy;
        rec.val_kappa = report.cohens_kappa;
        result.history.push_back(rec);
        result.epochs_run = epoch + 1;
        if (on_epoch) on_epoch(rec);

        state.epoch = epoch;
        if (stopper.update(rec.val_macro_f1)) {
            state.best_score = rec.val_macro_f1;
            state.rng_state = engine_state(shuffle);
            result.best = state;
        }
        if (stopper.should_stop()) break;
    }
    return result;
}

FitResult fit(const RoadGraph& graph, const FeatureSet& fs, const DatasetSplit& split, const ModelConfig& model_config,
              const TrainConfig& train_config, const EpochCallback& on_epoch) {
    const auto train_rows = fs.rows_for(split.train_ids);
    const auto val_rows = fs.rows_for(split.val_ids);
    return fit(graph, fs, train_rows, val_rows, model_config, train_config, on_epoch);
}

template Var<float> l2_penalty(ad::Tape<float>&, const std::vector<Var<float>>&, const std::vector<bool>&, float);
template Var<double> l2_penalty(ad::Tape<double>&, const std::vector<Var<double>>&, const std::vector<bool>&, double);
template double clip_gradients(std::vector<Tensor<float>>&, double);
template double clip_gradients(std::vector<Tensor<double>>&, double);
template AdamState<float> adam_init(const ModelParams<float>&);
template AdamState<double> adam_init(const ModelParams<double>&);
template void adamw_step(ModelParams<float>&, const std::vector<Tensor<float>>&, AdamState<float>&, double, double,
                         const AdamHyper&);
template void adamw_step(ModelParams<double>&, const std::vector<Tensor<double>>&, AdamState<double>&, double, double,
                         const AdamHyper&);

}  // namespace starn
