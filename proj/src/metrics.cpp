#include "starn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "starn/error.hpp"

namespace starn::metrics {

namespace {

double ratio(double num, double den, bool& degenerate) {
    if (den == 0.0) {
        degenerate = true;
        return 0.0;
    }
    return num / den;
}

void check_probs(std::span<const int> y_true, const RowMatrix& probs) {
    if (y_true.empty()) throw DataError("metrics: no samples");
    if (static_cast<std::size_t>(probs.rows()) != y_true.size()) {
        throw DimensionError("metrics: " + std::to_string(y_true.size()) + " labels for " +
                             std::to_string(probs.rows()) + " probability rows");
    }
    for (int y : y_true) {
        if (y < 0 || y >= probs.cols()) throw DataError("metrics: label " + std::to_string(y) + " out of range");
    }
}

// Mann-Whitney AUC with mid-ranks for tied scores.
double auc(const std::vector<std::pair<double, bool>>& scored) {
    std::vector<std::size_t> order(scored.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scored[a].first < scored[b].first; });
    double rank_sum = 0.0;
    double n_pos = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scored[order[j]].first == scored[order[i]].first) ++j;
        const double mid = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) {
            if (scored[order[k]].second) {
                rank_sum += mid;
                n_pos += 1.0;
            }
        }
        i = j;
    }
    const double n_neg = static_cast<double>(scored.size()) - n_pos;
    return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

}  // namespace

std::int64_t Confusion::total() const { return std::accumulate(counts.begin(), counts.end(), std::int64_t{0}); }

std::int64_t Confusion::support(int c) const {
    std::int64_t s = 0;
    for (int p = 0; p < classes; ++p) s += at(c, p);
    return s;
}

std::int64_t Confusion::predicted(int c) const {
    std::int64_t s = 0;
    for (int t = 0; t < classes; ++t) s += at(t, c);
    return s;
}

Confusion confusion_matrix(std::span<const int> y_true, std::span<const int> y_pred, int classes) {
    if (y_true.size() != y_pred.size()) {
        throw DimensionError("confusion_matrix: " + std::to_string(y_true.size()) + " labels vs " +
                             std::to_string(y_pred.size()) + " predictions");
    }
    if (classes < 1) throw ConfigError("confusion_matrix: classes must be >= 1");
    Confusion c(classes);
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        if (y_true[i] < 0 || y_true[i] >= classes || y_pred[i] < 0 || y_pred[i] >= classes) {
            throw DataError("confusion_matrix: class out of range at index " + std::to_string(i));
        }
        ++c.at(y_true[i], y_pred[i]);
    }
    return c;
}

std::vector<ClassScores> per_class_scores(const Confusion& c) {
    std::vector<ClassScores> out(c.classes);
    for (int k = 0; k < c.classes; ++k) {
        auto& s = out[k];
        const double tp = static_cast<double>(c.at(k, k));
        s.support = c.support(k);
        s.precision = ratio(tp, static_cast<double>(c.predicted(k)), s.degenerate);
        s.recall = ratio(tp, static_cast<double>(s.support), s.degenerate);
        s.f1 = ratio(2.0 * s.precision * s.recall, s.precision + s.recall, s.degenerate);
    }
    return out;
}

double macro_f1(const Confusion& c) {
    const auto s = per_class_scores(c);
    double total = 0.0;
    for (const auto& x : s) total += x.f1;
    return total / static_cast<double>(c.classes);
}

double weighted_f1(const Confusion& c) {
    const auto s = per_class_scores(c);
    const double n = static_cast<double>(c.total());
    if (n == 0.0) return 0.0;
    double total = 0.0;
    for (const auto& x : s) total += x.f1 * static_cast<double>(x.support);
    return total / n;
}

double balanced_accuracy(const Confusion& c) {
    double total = 0.0;
    int present = 0;
    for (int k = 0; k < c.classes; ++k) {
        const auto sup = c.support(k);
        if (sup == 0) continue;
        total += static_cast<double>(c.at(k, k)) / static_cast<double>(sup);
        ++present;
    }
    return present == 0 ? 0.0 : total / present;
}

std::optional<double> severe_recall(const Confusion& c) {
    const int k = c.classes - 1;
    const auto sup = c.support(k);
    if (sup == 0) return std::nullopt;
    return static_cast<double>(c.at(k, k)) / static_cast<double>(sup);
}

double cohens_kappa(const Confusion& c) {
    const double n = static_cast<double>(c.total());
    if (n == 0.0) return 0.0;
    double po = 0.0, pe = 0.0;
    for (int k = 0; k < c.classes; ++k) {
        po += static_cast<double>(c.at(k, k));
        pe += static_cast<double>(c.support(k)) * static_cast<double>(c.predicted(k));
    }
    po /= n;
    pe /= n * n;
    if (1.0 - pe == 0.0) return po == 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

std::vector<int> argmax_rows(const RowMatrix& probs) {
    std::vector<int> out(probs.rows());
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        int best = 0;
        for (Eigen::Index k = 1; k < probs.cols(); ++k) {
            if (probs(i, k) > probs(i, best)) best = static_cast<int>(k);
        }
        out[i] = best;
    }
    return out;
}

RocAuc roc_auc_multiclass(std::span<const int> y_true, const RowMatrix& probs) {
    check_probs(y_true, probs);
    const int k = static_cast<int>(probs.cols());
    RocAuc res;
    double weighted = 0.0, weights = 0.0;
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            std::vector<std::size_t> idx;
            std::size_t na = 0, nb = 0;
            for (std::size_t i = 0; i < y_true.size(); ++i) {
                if (y_true[i] == a) ++na, idx.push_back(i);
                else if (y_true[i] == b) ++nb, idx.push_back(i);
            }
            if (na == 0 || nb == 0) {
                res.warnings.push_back("roc_auc: class pair (" + std::to_string(a) + "," + std::to_string(b) +
                                       ") skipped, one side has no samples");
                continue;
            }
            double pair_auc = 0.0;
            for (const auto& [pos, neg] : {std::pair{a, b}, std::pair{b, a}}) {
                std::vector<std::pair<double, bool>> scored;
                scored.reserve(idx.size());
                for (std::size_t i : idx) {
                    const double pp = probs(i, pos), pn = probs(i, neg);
                    const double s = pp + pn == 0.0 ? 0.5 : pp / (pp + pn);
                    scored.emplace_back(s, y_true[i] == pos);
                }
                pair_auc += 0.5 * auc(scored);
            }
            const double w = static_cast<double>(na + nb);
            weighted += w * pair_auc;
            weights += w;
        }
    }
    if (weights > 0.0) res.value = weighted / weights;
    return res;
}

std::vector<double> auprc_per_class(std::span<const int> y_true, const RowMatrix& probs) {
    check_probs(y_true, probs);
    const std::size_t n = y_true.size();
    std::vector<double> out(probs.cols(), 0.0);
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
        const double positives = static_cast<double>(std::count(y_true.begin(), y_true.end(), static_cast<int>(c)));
        if (positives == 0.0) continue;
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs(a, c) > probs(b, c); });
        double tp = 0.0, fp = 0.0, prev_recall = 0.0, ap = 0.0;
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j < n && probs(order[j], c) == probs(order[i], c)) {
                (y_true[order[j]] == c ? tp : fp) += 1.0;
                ++j;
            }
            const double recall = tp / positives;
            ap += (recall - prev_recall) * (tp / (tp + fp));
            prev_recall = recall;
            i = j;
        }
        out[c] = ap;
    }
    return out;
}

LinearFit scaling_fit(std::span<const double> sizes, std::span<const double> times) {
    if (sizes.size() != times.size()) throw DimensionError("scaling_fit: sizes and times differ in length");
    if (sizes.size() < 2) throw ConfigError("scaling_fit: need at least 2 points");
    const double n = static_cast<double>(sizes.size());
    const double mx = std::accumulate(sizes.begin(), sizes.end(), 0.0) / n;
    const double my = std::accumulate(times.begin(), times.end(), 0.0) / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const double dx = sizes[i] - mx, dy = times[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw DataError("scaling_fit: all sizes are equal");
    LinearFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    if (syy == 0.0) {
        fit.r2 = 0.0;
        return fit;
    }
    double ss_res = 0.0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        const double r = times[i] - (fit.slope * sizes[i] + fit.intercept);
        ss_res += r * r;
    }
    fit.r2 = 1.0 - ss_res / syy;
    return fit;
}

MetricsReport evaluate(std::span<const int> y_true, const RowMatrix& probs) {
    check_probs(y_true, probs);
    MetricsReport r;
    const auto pred = argmax_rows(probs);
    r.confusion = confusion_matrix(y_true, pred, static_cast<int>(probs.cols()));
    r.samples = y_true.size();
    r.macro_f1 = macro_f1(r.confusion);
    r.weighted_f1 = weighted_f1(r.confusion);
    r.balanced_accuracy = balanced_accuracy(r.confusion);
    r.severe_recall = severe_recall(r.confusion);
    r.cohens_kappa = cohens_kappa(r.confusion);
    auto roc = roc_auc_multiclass(y_true, probs);
    r.roc_auc_weighted = roc.value;
    r.warnings = std::move(roc.warnings);
    r.per_class = per_class_scores(r.confusion);
    const auto ap = auprc_per_class(y_true, probs);
    for (std::size_t c = 0; c < ap.size(); ++c) {
        r.per_class[c].auprc = ap[c];
        if (r.per_class[c].degenerate) {
            r.warnings.push_back("class " + std::to_string(c) + ": 0/0 precision/recall/F1 cell reported as 0");
        }
    }
    if (!r.severe_recall) r.warnings.push_back("severe_recall: no severe samples");
    return r;
}

nlohmann::json to_json(const MetricsReport& r) {
    using nlohmann::json;
    json confusion = json::array();
    for (int t = 0; t < r.confusion.classes; ++t) {
        json row = json::array();
        for (int p = 0; p < r.confusion.classes; ++p) row.push_back(r.confusion.at(t, p));
        confusion.push_back(row);
    }
    json per_class = json::array();
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        const auto& s = r.per_class[c];
        per_class.push_back({{"class", c},
                             {"precision", s.precision},
                             {"recall", s.recall},
                             {"f1", s.f1},
                             {"auprc", s.auprc},
                             {"support", s.support},
                             {"degenerate", s.degenerate}});
    }
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return json{{"samples", r.samples},
                {"confusion", confusion},
                {"macro_f1", r.macro_f1},
                {"weighted_f1", r.weighted_f1},
                {"balanced_accuracy", r.balanced_accuracy},
                {"severe_recall", opt(r.severe_recall)},
                {"roc_auc_weighted", opt(r.roc_auc_weighted)},
                {"cohens_kappa", r.cohens_kappa},
                {"per_class", per_class},
                {"warnings", r.warnings}};
}

void write_report(const std::filesystem::path& path, const MetricsReport& r) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(r).dump(2) << '\n';
}

void write_confusion_csv(const std::filesystem::path& path, const Confusion& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << "true\\pred";
    for (int p = 0; p < c.classes; ++p) out << ',' << p;
    out << '\n';
    for (int t = 0; t < c.classes; ++t) {
        out << t;
        for (int p = 0; p < c.classes; ++p) out << ',' << c.at(t, p);
        out << '\n';
    }
}

}  // namespace starn::metrics
