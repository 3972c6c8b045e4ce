#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "starn/features.hpp"

namespace starn::metrics {

// counts[t][p]: rows are true classes, columns predicted classes.
struct Confusion {
    int classes = 0;
    std::vector<std::int64_t> counts;

    explicit Confusion(int k = 4) : classes(k), counts(static_cast<std::size_t>(k) * k, 0) {}
    std::int64_t& at(int t, int p) { return counts[static_cast<std::size_t>(t) * classes + p]; }
    std::int64_t at(int t, int p) const { return counts[static_cast<std::size_t>(t) * classes + p]; }
    std::int64_t total() const;
    std::int64_t support(int c) const;    // row sum
    std::int64_t predicted(int c) const;  // column sum

    bool operator==(const Confusion&) const = default;
};

Confusion confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int classes = 4);

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double auprc = 0.0;
    std::int64_t support = 0;
    // Set when a 0/0 cell was reported as 0.
    bool degenerate = false;
};

// Precision/recall/F1 per class with the 0/0 -> 0 convention (auprc left 0).
std::vector<ClassScores> per_class_scores(const Confusion& c);

double macro_f1(const Confusion& c);
double weighted_f1(const Confusion& c);
// Mean recall over the classes present in the truth.
double balanced_accuracy(const Confusion& c);
// Recall of the highest class; absent when it has no samples.
std::optional<double> severe_recall(const Confusion& c);
double cohens_kappa(const Confusion& c);

// Row-wise class probabilities; argmax with ties to the lower class.
std::vector<int> argmax_rows(const RowMatrix& probs);

struct RocAuc {
    std::optional<double> value;      // absent if every pair was skipped
    std::vector<std::string> warnings;  // one per skipped pair
};

// One-vs-one AUC of p_a/(p_a+p_b) over each class pair, both directions
// averaged, weighted by the pair's combined support; ties count 1/2.
RocAuc roc_auc_multiclass(std::span<const int> y_true, const RowMatrix& probs);

// One-vs-rest average precision per class (step-wise rule, tied scores
// grouped). A class without positives scores 0.
std::vector<double> auprc_per_class(std::span<const int> y_true, const RowMatrix& probs);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

// Ordinary least squares y = slope*x + intercept. R² is 0 when y has no variance.
LinearFit scaling_fit(std::span<const double> sizes, std::span<const double> times);

struct MetricsReport {
    Confusion confusion;
    double macro_f1 = 0.0;
    double weighted_f1 = 0.0;
    double balanced_accuracy = 0.0;
    std::optional<double> severe_recall;
    std::optional<double> roc_auc_weighted;
    double cohens_kappa = 0.0;
    std::vector<ClassScores> per_class;
    std::vector<std::string> warnings;
    std::size_t samples = 0;
};

MetricsReport evaluate(std::span<const int> y_true, const RowMatrix& probs);

nlohmann::json to_json(const MetricsReport& r);
void write_report(const std::filesystem::path& path, const MetricsReport& r);
void write_confusion_csv(const std::filesystem::path& path, const Confusion& c);

}  // namespace starn::metrics
