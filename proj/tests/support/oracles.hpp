#pragma once

// Straight-line reference implementations used to cross-check the library.
// Nothing here calls into starn code paths other than plain data types.

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "starn/graphbuild.hpp"

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CountMatrix = std::vector<std::vector<std::int64_t>>;

double haversine(double lat1, double lon1, double lat2, double lon2);

// DBSCAN by transitive closure of the core-point reachability relation.
// Cluster ids follow the smallest core index of each cluster; a border point
// takes the smallest id among the clusters that reach it; -1 is noise.
std::vector<int> dbscan(const std::vector<starn::GeoPoint>& points, double epsilon_m, int min_samples);

// Cyclic Jacobi rotations; eigenvalues in ascending order.
std::vector<double> jacobi_eigenvalues(Matrix a, double tol = 1e-14, int max_sweeps = 100);

// Second-smallest eigenvalue of I - D^-1/2 A D^-1/2 for the symmetrized,
// loop-free adjacency; 0 when some node is isolated.
double lambda2(const Matrix& adjacency);

// ---- metrics ----------------------------------------------------------------

CountMatrix tally(const std::vector<int>& y_true, const std::vector<int>& y_pred, int k);
double f1_of(const CountMatrix& cm, int c);
double macro_f1(const CountMatrix& cm);
double weighted_f1(const CountMatrix& cm);
double balanced_accuracy(const CountMatrix& cm);
double kappa(const CountMatrix& cm);
// -1 when the class has no samples
double recall_of(const CountMatrix& cm, int c);

// Pairwise one-vs-one AUC by direct comparison of every positive/negative pair.
double roc_auc_ovo(const std::vector<int>& y, const Matrix& probs);

// Step-wise average precision: every distinct score is tried as a threshold.
double average_precision(const std::vector<int>& y, const Matrix& probs, int c);

struct Line {
    double slope, intercept, r2;
};
Line ols(const std::vector<double>& x, const std::vector<double>& y);

// ---- model blocks -------------------------------------------------------------

struct GatHead {
    Matrix W;   // d x hidden
    Vector a;   // 3d
    Matrix We;  // d x 5
};

// One multi-head layer written as nested loops over nodes and edges.
// alpha[k][e] receives the coefficient of head k on edge e.
Matrix gat_layer(const Matrix& h, const std::vector<int>& src, const std::vector<int>& dst, const Matrix& edge_features,
                 const std::vector<GatHead>& heads, const Matrix& W_res, double slope,
                 std::vector<std::vector<double>>* alpha = nullptr);

// Self-attention over the three stacked rows of each record.
Matrix fuse(const Matrix& hs, const Matrix& ht, const Matrix& he, std::vector<Eigen::Matrix3d>* weights = nullptr);

}  // namespace oracle
