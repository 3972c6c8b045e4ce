#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace oracle {

double haversine(double lat1, double lon1, double lat2, double lon2) {
    constexpr double R = 6371008.8;
    const double rad = std::numbers::pi / 180.0;
    const double dphi = (lat2 - lat1) * rad, dlambda = (lon2 - lon1) * rad;
    const double s = std::sin(dphi / 2) * std::sin(dphi / 2) +
                     std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
    return 2.0 * R * std::asin(std::min(1.0, std::sqrt(s)));
}

std::vector<int> dbscan(const std::vector<starn::GeoPoint>& pts, double eps, int min_samples) {
    const std::size_t n = pts.size();
    std::vector<std::vector<char>> near(n, std::vector<char>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            near[i][j] = haversine(pts[i].lat, pts[i].lon, pts[j].lat, pts[j].lon) <= eps;
        }
    }
    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        core[i] = std::count(near[i].begin(), near[i].end(), 1) >= min_samples;
    }
    // reach[i][j]: cores i and j are density-connected
    std::vector<std::vector<char>> reach(n, std::vector<char>(n, 0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) reach[i][j] = core[i] && core[j] && near[i][j];
    }
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            if (!reach[i][k]) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (reach[k][j]) reach[i][j] = 1;
            }
        }
    }
    std::vector<int> root(n, -1);  // smallest core index of each core's cluster
    for (std::size_t i = 0; i < n; ++i) {
        if (!core[i]) continue;
        for (std::size_t j = 0; j <= i; ++j) {
            if (reach[i][j]) {
                root[i] = static_cast<int>(j);
                break;
            }
        }
    }
    std::vector<int> roots;
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i] && root[i] == static_cast<int>(i)) roots.push_back(static_cast<int>(i));
    }
    auto id_of = [&](int r) { return static_cast<int>(std::find(roots.begin(), roots.end(), r) - roots.begin()); };
    std::vector<int> label(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) {
            label[i] = id_of(root[i]);
            continue;
        }
        for (std::size_t j = 0; j < n; ++j) {
            if (core[j] && near[i][j]) {
                const int c = id_of(root[j]);
                if (label[i] < 0 || c < label[i]) label[i] = c;
            }
        }
    }
    return label;
}

std::vector<double> jacobi_eigenvalues(Matrix a, double tol, int max_sweeps) {
    const Eigen::Index n = a.rows();
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (std::sqrt(off) < tol) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (Eigen::Index i = 0; i < n; ++i) ev[i] = a(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

double lambda2(const Matrix& adjacency) {
    const Eigen::Index n = adjacency.rows();
    Matrix a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = i == j ? 0.0 : 0.5 * (adjacency(i, j) + adjacency(j, i));
    }
    std::vector<double> deg(n, 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) deg[i] += a(i, j);
        if (deg[i] <= 0.0) return 0.0;
    }
    Matrix lap(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            lap(i, j) = (i == j ? 1.0 : 0.0) - a(i, j) / std::sqrt(deg[i] * deg[j]);
        }
    }
    return std::max(0.0, jacobi_eigenvalues(lap)[1]);
}

CountMatrix tally(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k) {
    CountMatrix cm(k, std::vector<std::int64_t>(k, 0));
    for (std::size_t i = 0; i < y_true.size(); ++i) cm[y_true[i]][y_pred[i]] += 1;
    return cm;
}

namespace {

double row_sum(const CountMatrix& cm, int c) {
    double s = 0;
    for (auto v : cm[c]) s += static_cast<double>(v);
    return s;
}

double col_sum(const CountMatrix& cm, int c) {
    double s = 0;
    for (const auto& row : cm) s += static_cast<double>(row[c]);
    return s;
}

double total(const CountMatrix& cm) {
    double s = 0;
    for (std::size_t c = 0; c < cm.size(); ++c) s += row_sum(cm, static_cast<int>(c));
    return s;
}

}  // namespace

double f1_of(const CountMatrix& cm, int c) {
    const double tp = static_cast<double>(cm[c][c]);
    const double fp = col_sum(cm, c) - tp, fn = row_sum(cm, c) - tp;
    // F1 = 2TP / (2TP + FP + FN) equals 2PR/(P+R) whenever both are defined
    const double den = 2 * tp + fp + fn;
    return den == 0 ? 0.0 : 2 * tp / den;
}

double macro_f1(const CountMatrix& cm) {
    double s = 0;
    for (std::size_t c = 0; c < cm.size(); ++c) s += f1_of(cm, static_cast<int>(c));
    return s / static_cast<double>(cm.size());
}

double weighted_f1(const CountMatrix& cm) {
    const double n = total(cm);
    double s = 0;
    for (std::size_t c = 0; c < cm.size(); ++c) s += row_sum(cm, static_cast<int>(c)) * f1_of(cm, static_cast<int>(c));
    return n == 0 ? 0.0 : s / n;
}

double recall_of(const CountMatrix& cm, int c) {
    const double s = row_sum(cm, c);
    return s == 0 ? -1.0 : static_cast<double>(cm[c][c]) / s;
}

double balanced_accuracy(const CountMatrix& cm) {
    double s = 0;
    int present = 0;
    for (std::size_t c = 0; c < cm.size(); ++c) {
        const double r = recall_of(cm, static_cast<int>(c));
        if (r < 0) continue;
        s += r;
        ++present;
    }
    return present ? s / present : 0.0;
}

double kappa(const CountMatrix& cm) {
    const double n = total(cm);
    double po = 0, pe = 0;
    for (std::size_t c = 0; c < cm.size(); ++c) {
        po += static_cast<double>(cm[c][c]) / n;
        pe += row_sum(cm, static_cast<int>(c)) * col_sum(cm, static_cast<int>(c)) / (n * n);
    }
    if (1.0 - pe == 0.0) return po == 1.0 ? 1.0 : 0.0;
    return (po - pe) / (1.0 - pe);
}

double roc_auc_ovo(const std::vector<int>& y, const Matrix& probs) {
    const int k = static_cast<int>(probs.cols());
    double acc = 0, weight = 0;
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            std::vector<std::size_t> ia, ib;
            for (std::size_t i = 0; i < y.size(); ++i) {
                if (y[i] == a) ia.push_back(i);
                if (y[i] == b) ib.push_back(i);
            }
            if (ia.empty() || ib.empty()) continue;
            auto score = [&](std::size_t i, int pos, int neg) {
                const double s = probs(i, pos) + probs(i, neg);
                return s == 0 ? 0.5 : probs(i, pos) / s;
            };
            auto directed = [&](const std::vector<std::size_t>& P, const std::vector<std::size_t>& N, int pos, int neg) {
                double wins = 0;
                for (auto i : P) {
                    for (auto j : N) {
                        const double si = score(i, pos, neg), sj = score(j, pos, neg);
                        wins += si > sj ? 1.0 : (si == sj ? 0.5 : 0.0);
                    }
                }
                return wins / static_cast<double>(P.size() * N.size());
            };
            const double pair = 0.5 * (directed(ia, ib, a, b) + directed(ib, ia, b, a));
            const double w = static_cast<double>(ia.size() + ib.size());
            acc += w * pair;
            weight += w;
        }
    }
    return acc / weight;
}

double average_precision(const std::vector<int>& y, const Matrix& probs, int c) {
    const double positives = static_cast<double>(std::count(y.begin(), y.end(), c));
    if (positives == 0) return 0.0;
    std::vector<double> thresholds;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) thresholds.push_back(probs(i, c));
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double ap = 0, prev_recall = 0;
    for (double t : thresholds) {
        double tp = 0, fp = 0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            if (probs(static_cast<Eigen::Index>(i), c) >= t) (y[i] == c ? tp : fp) += 1;
        }
        const double recall = tp / positives;
        ap += (recall - prev_recall) * tp / (tp + fp);
        prev_recall = recall;
    }
    return ap;
}

Line ols(const std::vector<double>& x, const std::vector<double>& y) {
    // normal equations [n Σx; Σx Σx²] [b; a] = [Σy; Σxy]
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double det = n * sxx - sx * sx;
    const double a = (n * sxy - sx * sy) / det;
    const double b = (sy * sxx - sx * sxy) / det;
    const double mean = sy / n;
    double ss_tot = 0, ss_res = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        ss_tot += (y[i] - mean) * (y[i] - mean);
        ss_res += (y[i] - a * x[i] - b) * (y[i] - a * x[i] - b);
    }
    return {a, b, ss_tot == 0 ? 0.0 : 1.0 - ss_res / ss_tot};
}

Matrix gat_layer(const Matrix& h, const std::vector<int>& src, const std::vector<int>& dst, const Matrix& ef,
                 const std::vector<GatHead>& heads, const Matrix& W_res, double slope,
                 std::vector<std::vector<double>>* alpha) {
    const Eigen::Index n = h.rows(), hid = h.cols();
    const std::size_t E = src.size();
    const Eigen::Index d = heads.at(0).W.rows();
    Matrix out = Matrix::Zero(n, d * static_cast<Eigen::Index>(heads.size()));
    if (alpha) alpha->assign(heads.size(), std::vector<double>(E, 0.0));
    for (std::size_t k = 0; k < heads.size(); ++k) {
        const auto& hd = heads[k];
        auto project = [&](Eigen::Index v, Eigen::Index r) {
            double s = 0;
            for (Eigen::Index c = 0; c < hid; ++c) s += hd.W(r, c) * h(v, c);
            return s;
        };
        for (Eigen::Index i = 0; i < n; ++i) {
            std::vector<std::size_t> nbr;
            std::vector<double> score;
            for (std::size_t e = 0; e < E; ++e) {
                if (src[e] != i) continue;
                const int j = dst[e];
                double s = 0;
                for (Eigen::Index r = 0; r < d; ++r) {
                    double edge_r = 0;
                    for (Eigen::Index f = 0; f < ef.cols(); ++f) edge_r += hd.We(r, f) * ef(static_cast<Eigen::Index>(e), f);
                    s += hd.a(r) * project(i, r) + hd.a(d + r) * project(j, r) + hd.a(2 * d + r) * edge_r;
                }
                score.push_back(s > 0 ? s : slope * s);
                nbr.push_back(e);
            }
            double mx = -1e300;
            for (double s : score) mx = std::max(mx, s);
            double z = 0;
            for (double& s : score) z += (s = std::exp(s - mx));
            for (Eigen::Index r = 0; r < d; ++r) {
                double agg = 0;
                for (std::size_t t = 0; t < nbr.size(); ++t) agg += score[t] / z * project(dst[nbr[t]], r);
                out(i, static_cast<Eigen::Index>(k) * d + r) = agg > 0 ? agg : std::expm1(agg);
            }
            if (alpha) {
                for (std::size_t t = 0; t < nbr.size(); ++t) (*alpha)[k][nbr[t]] = score[t] / z;
            }
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index r = 0; r < W_res.rows(); ++r) {
            double s = 0;
            for (Eigen::Index c = 0; c < hid; ++c) s += W_res(r, c) * h(i, c);
            out(i, r) += s;
        }
    }
    return out;
}

Matrix fuse(const Matrix& hs, const Matrix& ht, const Matrix& he, std::vector<Eigen::Matrix3d>* weights) {
    const Eigen::Index m = hs.rows(), d = hs.cols();
    Matrix out(m, 3 * d);
    if (weights) weights->clear();
    for (Eigen::Index i = 0; i < m; ++i) {
        const Matrix* rows[3] = {&hs, &ht, &he};
        Eigen::Matrix3d A;
        for (int p = 0; p < 3; ++p) {
            double s[3], mx = -1e300;
            for (int q = 0; q < 3; ++q) {
                double dot = 0;
                for (Eigen::Index c = 0; c < d; ++c) dot += (*rows[p])(i, c) * (*rows[q])(i, c);
                s[q] = dot / std::sqrt(static_cast<double>(d));
                mx = std::max(mx, s[q]);
            }
            double z = 0;
            for (double& v : s) z += (v = std::exp(v - mx));
            for (int q = 0; q < 3; ++q) A(p, q) = s[q] / z;
        }
        for (int p = 0; p < 3; ++p) {
            for (Eigen::Index c = 0; c < d; ++c) {
                double v = 0;
                for (int q = 0; q < 3; ++q) v += A(p, q) * (*rows[q])(i, c);
                out(i, p * d + c) = v;
            }
        }
        if (weights) weights->push_back(A);
    }
    return out;
}

}  // namespace oracle
