#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "starn/autodiff.hpp"
#include "starn/features.hpp"
#include "starn/graphbuild.hpp"
#include "starn/ingest.hpp"
#include "starn/metrics.hpp"
#include "starn/model.hpp"

namespace starn {

struct TrainConfig {
    double gamma = 2.0;
    std::vector<double> class_weights;  // empty: inverse training frequency
    double l2_coeff = 1e-4;
    double weight_decay = 1e-2;
    double eta_min = 1e-6;
    double eta_max = 3e-4;
    int restart_period = 50;
    double clip_tau = 1.0;
    int batch_size = 256;
    int max_epochs = 200;
    int early_stop_patience = 20;
    std::uint64_t seed = 0;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Class-weighted focal loss over the true-class probabilities.
using ad::focal_loss;

// lambda * sum of squared entries of the tensors flagged as weights.
template <typename T>
ad::Var<T> l2_penalty(ad::Tape<T>& tape, const std::vector<ad::Var<T>>& params, const std::vector<bool>& is_weight,
                      T lambda);

// eta_min + (eta_max - eta_min)(1 + cos(pi t_cur / t_max)) / 2
double cosine_lr(double t_cur, double t_max, double eta_min, double eta_max);
// Rate of a 0-based epoch; the cycle restarts every restart_period epochs.
double lr_for_epoch(int epoch, const TrainConfig& cfg);

// Scales every gradient by min(1, tau / ||g||) with ||g|| the global L2
// norm; returns the norm before clipping.
template <typename T>
double clip_gradients(std::vector<ad::Tensor<T>>& grads, double tau);

template <typename T>
struct AdamState {
    std::vector<ad::Tensor<T>> m;
    std::vector<ad::Tensor<T>> v;
    std::int64_t step = 0;
};

template <typename T>
AdamState<T> adam_init(const ModelParams<T>& params);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Decoupled weight decay (weights only) followed by the bias-corrected Adam update.
template <typename T>
void adamw_step(ModelParams<T>& params, const std::vector<ad::Tensor<T>>& grads, AdamState<T>& state, double lr,
                double weight_decay, const AdamHyper& hyper = {});

// Inverse class frequency normalized to mean 1 over the classes present;
// absent classes get weight 0.
std::vector<double> inverse_frequency_weights(std::span<const int> labels, int classes);

struct EpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double grad_norm = 0.0;  // mean pre-clip global norm
    double val_macro_f1 = 0.0;
    double val_weighted_f1 = 0.0;
    double val_balanced_accuracy = 0.0;
    double val_kappa = 0.0;
};

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);
std::string history_csv(std::span<const EpochRecord> history);

struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    FeatureStats stats;
    ModelParams<float> params;
    ModelBuffers<float> buffers;
    AdamState<float> adam;
    std::string rng_state;  // shuffle engine state
    int epoch = 0;
    double best_score = 0.0;
};

inline constexpr const char* kCheckpointFormat = "starn-ckpt/1";

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

// Stops once the score has not strictly improved for more than `patience` epochs.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}
    // Returns true when the score is a new best.
    bool update(double score);
    bool should_stop() const { return since_best_ > patience_; }
    double best() const { return best_; }

private:
    int patience_;
    int since_best_ = 0;
    double best_ = -1.0;
    bool seen_ = false;
};

struct FitResult {
    Checkpoint best;
    std::vector<EpochRecord> history;
    int epochs_run = 0;
    std::vector<double> class_weights;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

FitResult fit(const RoadGraph& graph, const FeatureSet& fs, std::span<const int> train_rows,
              std::span<const int> val_rows, const ModelConfig& model_config, const TrainConfig& train_config,
              const EpochCallback& on_epoch = {});

FitResult fit(const RoadGraph& graph, const FeatureSet& fs, const DatasetSplit& split, const ModelConfig& model_config,
              const TrainConfig& train_config, const EpochCallback& on_epoch = {});

// Eval-mode probabilities of the given feature rows as a double matrix.
RowMatrix predict_rows(const Checkpoint& ckpt, const GraphInput<float>& graph, const FeatureSet& fs,
                       std::span<const int> rows);

metrics::MetricsReport evaluate_rows(const Checkpoint& ckpt, const GraphInput<float>& graph, const FeatureSet& fs,
                                     std::span<const int> rows);

}  // namespace starn
