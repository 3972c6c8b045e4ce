#include "starn/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "starn/rng.hpp"

namespace starn::ad {

namespace {

[[noreturn]] void dim_error(const char* op, const std::string& detail) {
    throw DimensionError(std::string(op) + ": " + detail);
}

template <typename T>
[[noreturn]] void dim_error(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    dim_error(op, "incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
}

template <typename T>
void require_rank(const char* op, const Tensor<T>& a, std::size_t rank) {
    if (a.rank() != rank) dim_error(op, "expected rank " + std::to_string(rank) + ", got " + shape_str(a.shape()));
}

template <typename T>
void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) dim_error(op, a, b);
}

template <typename T>
Tape<T>& tape_of(const char* op, Var<T> a) {
    if (a.tape == nullptr) dim_error(op, "variable is not on a tape");
    return *a.tape;
}

template <typename T>
Tape<T>& tape_of(const char* op, Var<T> a, Var<T> b) {
    if (a.tape == nullptr || a.tape != b.tape) dim_error(op, "variables live on different tapes");
    return *a.tape;
}

template <typename T>
using Mat = typename Tensor<T>::Matrix;
template <typename T>
using MapM = Eigen::Map<Mat<T>>;
template <typename T>
using CMapM = Eigen::Map<const Mat<T>>;

template <typename T>
CMapM<T> mat(const Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    return CMapM<T>(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
MapM<T> mat(Tensor<T>& t, std::size_t rows, std::size_t cols, std::size_t offset = 0) {
    return MapM<T>(t.data() + offset, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void check_index(const char* op, std::span<const int> index, std::size_t n) {
    for (int i : index) {
        if (i < 0 || static_cast<std::size_t>(i) >= n) {
            dim_error(op, "index " + std::to_string(i) + " out of range [0," + std::to_string(n) + ")");
        }
    }
}

}  // namespace

// ---- Tape -------------------------------------------------------------------

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::push(Tensor<T> value, std::initializer_list<std::size_t> inputs, Backward backward, const char* op) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    for (auto id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::push(Tensor<T> value, const std::vector<std::size_t>& inputs, Backward backward, const char* op) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    for (auto id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

template <typename T>
Tensor<T> Tape<T>::grad(std::size_t id) const {
    const auto& n = nodes_[id];
    return n.grad.empty() ? Tensor<T>(n.value.shape()) : n.grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad_acc(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
    if (loss.tape != this) throw DimensionError("backward: loss is not on this tape");
    if (value(loss.id).size() != 1) {
        throw DimensionError("backward: loss must be a single value, got shape " + shape_str(value(loss.id).shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor<T>();
    grad_acc(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
        n.backward(*this, i);
    }
}

template <typename T>
void Tape<T>::note_kinks(std::span<const T> x, T threshold) {
    if (!track_kinks_) return;
    for (const T v : x) {
        kink_hash_ ^= (v > threshold) ? 0x9eULL : 0x3bULL;
        kink_hash_ *= 0x100000001b3ULL;
    }
}

// ---- products -----------------------------------------------------------------

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
    auto& tp = tape_of("matmul", a, b);
    const auto& A = a.value();
    const auto& B = b.value();
    require_rank("matmul", A, 2);
    require_rank("matmul", B, 2);
    if (A.dim(1) != B.dim(0)) dim_error("matmul", A, B);
    const std::size_t m = A.dim(0), k = A.dim(1), n = B.dim(1);
    Tensor<T> out(Shape{m, n});
    mat(out, m, n).noalias() = mat(A, m, k) * mat(B, k, n);
    return tp.push(std::move(out), {a.id, b.id},
                   [a = a.id, b = b.id, m, k, n](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       if (t.requires_grad(a)) {
                           mat(t.grad_acc(a), m, k).noalias() += mat(G, m, n) * mat(t.value(b), k, n).transpose();
                       }
                       if (t.requires_grad(b)) {
                           mat(t.grad_acc(b), k, n).noalias() += mat(t.value(a), m, k).transpose() * mat(G, m, n);
                       }
                   },
                   "matmul");
}

template <typename T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    auto& tp = tape_of("matmul_nt", a, b);
    const auto& A = a.value();
    const auto& B = b.value();
    require_rank("matmul_nt", B, 2);
    if (A.rank() < 1 || A.cols() != B.dim(1)) dim_error("matmul_nt", A, B);
    const std::size_t m = A.rows(), k = A.cols(), n = B.dim(0);
    Shape shape = A.shape();
    shape.back() = n;
    Tensor<T> out(std::move(shape));
    mat(out, m, n).noalias() = mat(A, m, k) * mat(B, n, k).transpose();
    return tp.push(std::move(out), {a.id, b.id},
                   [a = a.id, b = b.id, m, k, n](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       if (t.requires_grad(a)) {
                           mat(t.grad_acc(a), m, k).noalias() += mat(G, m, n) * mat(t.value(b), n, k);
                       }
                       if (t.requires_grad(b)) {
                           mat(t.grad_acc(b), n, k).noalias() += mat(G, m, n).transpose() * mat(t.value(a), m, k);
                       }
                   },
                   "matmul_nt");
}

template <typename T>
Var<T> transpose(Var<T> a) {
    auto& tp = tape_of("transpose", a);
    const auto& A = a.value();
    require_rank("transpose", A, 2);
    const std::size_t m = A.dim(0), n = A.dim(1);
    Tensor<T> out(Shape{n, m});
    mat(out, n, m) = mat(A, m, n).transpose();
    return tp.push(std::move(out), {a.id},
                   [a = a.id, m, n](Tape<T>& t, std::size_t self) {
                       mat(t.grad_acc(a), m, n) += mat(t.grad_acc(self), n, m).transpose();
                   },
                   "transpose");
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b) {
    auto& tp = tape_of("bmm", a, b);
    const auto& A = a.value();
    const auto& B = b.value();
    require_rank("bmm", A, 3);
    require_rank("bmm", B, 3);
    if (A.dim(0) != B.dim(0) || A.dim(2) != B.dim(1)) dim_error("bmm", A, B);
    const std::size_t nb = A.dim(0), m = A.dim(1), k = A.dim(2), n = B.dim(2);
    Tensor<T> out(Shape{nb, m, n});
    for (std::size_t i = 0; i < nb; ++i) {
        mat(out, m, n, i * m * n).noalias() = mat(A, m, k, i * m * k) * mat(B, k, n, i * k * n);
    }
    return tp.push(std::move(out), {a.id, b.id},
                   [a = a.id, b = b.id, nb, m, k, n](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& Av = t.value(a);
                       const auto& Bv = t.value(b);
                       const bool ga = t.requires_grad(a), gb = t.requires_grad(b);
                       for (std::size_t i = 0; i < nb; ++i) {
                           const auto g = mat(G, m, n, i * m * n);
                           if (ga) mat(t.grad_acc(a), m, k, i * m * k).noalias() += g * mat(Bv, k, n, i * k * n).transpose();
                           if (gb) mat(t.grad_acc(b), k, n, i * k * n).noalias() += mat(Av, m, k, i * m * k).transpose() * g;
                       }
                   },
                   "bmm");
}

template <typename T>
Var<T> transpose_last2(Var<T> a) {
    auto& tp = tape_of("transpose_last2", a);
    const auto& A = a.value();
    require_rank("transpose_last2", A, 3);
    const std::size_t nb = A.dim(0), m = A.dim(1), n = A.dim(2);
    Tensor<T> out(Shape{nb, n, m});
    for (std::size_t i = 0; i < nb; ++i) mat(out, n, m, i * m * n) = mat(A, m, n, i * m * n).transpose();
    return tp.push(std::move(out), {a.id},
                   [a = a.id, nb, m, n](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       auto& ga = t.grad_acc(a);
                       for (std::size_t i = 0; i < nb; ++i) {
                           mat(ga, m, n, i * m * n) += mat(G, n, m, i * m * n).transpose();
                       }
                   },
                   "transpose_last2");
}

// ---- elementwise ----------------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
    auto& tp = tape_of("add", a, b);
    require_same("add", a.value(), b.value());
    Tensor<T> out = a.value();
    const auto& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
    return tp.push(std::move(out), {a.id, b.id},
                   [a = a.id, b = b.id](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       for (auto id : {a, b}) {
                           if (!t.requires_grad(id)) continue;
                           auto& g = t.grad_acc(id);
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
                       }
                   },
                   "add");
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
    auto& tp = tape_of("sub", a, b);
    require_same("sub", a.value(), b.value());
    Tensor<T> out = a.value();
    const auto& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
    return tp.push(std::move(out), {a.id, b.id},
                   [a = a.id, b = b.id](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       if (t.requires_grad(a)) {
                           auto& g = t.grad_acc(a);
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
                       }
                       if (t.requires_grad(b)) {
                           auto& g = t.grad_acc(b);
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] -= G[i];
                       }
                   },
                   "sub");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
    auto& tp = tape_of("mul", a, b);
    require_same("mul", a.value(), b.value());
    Tensor<T> out = a.value();
    const auto& B = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
    return tp.push(std::move(out), {a.id, b.id},
                   [a = a.id, b = b.id](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       if (t.requires_grad(a)) {
                           auto& g = t.grad_acc(a);
                           const auto& Bv = t.value(b);
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Bv[i];
                       }
                       if (t.requires_grad(b)) {
                           auto& g = t.grad_acc(b);
                           const auto& Av = t.value(a);
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Av[i];
                       }
                   },
                   "mul");
}

template <typename T>
Var<T> scale(Var<T> a, Scalar<T> c) {
    auto& tp = tape_of("scale", a);
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v *= c;
    return tp.push(std::move(out), {a.id},
                   [a = a.id, c](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       auto& g = t.grad_acc(a);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += c * G[i];
                   },
                   "scale");
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> b) {
    auto& tp = tape_of("add_bias", x, b);
    const auto& X = x.value();
    const auto& B = b.value();
    if (B.size() != X.cols()) dim_error("add_bias", X, B);
    const std::size_t r = X.rows(), c = X.cols();
    Tensor<T> out = X;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += B[j];
    }
    return tp.push(std::move(out), {x.id, b.id},
                   [x = x.id, b = b.id, r, c](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       if (t.requires_grad(x)) {
                           auto& g = t.grad_acc(x);
                           for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
                       }
                       if (t.requires_grad(b)) {
                           auto& g = t.grad_acc(b);
                           for (std::size_t i = 0; i < r; ++i) {
                               for (std::size_t j = 0; j < c; ++j) g[j] += G[i * c + j];
                           }
                       }
                   },
                   "add_bias");
}

template <typename T>
Var<T> mul_rows(Var<T> x, Var<T> s) {
    auto& tp = tape_of("mul_rows", x, s);
    const auto& X = x.value();
    const auto& S = s.value();
    if (S.size() != X.rows()) dim_error("mul_rows", X, S);
    const std::size_t r = X.rows(), c = X.cols();
    Tensor<T> out = X;
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= S[i];
    }
    return tp.push(std::move(out), {x.id, s.id},
                   [x = x.id, s = s.id, r, c](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       if (t.requires_grad(x)) {
                           auto& g = t.grad_acc(x);
                           const auto& Sv = t.value(s);
                           for (std::size_t i = 0; i < r; ++i) {
                               for (std::size_t j = 0; j < c; ++j) g[i * c + j] += G[i * c + j] * Sv[i];
                           }
                       }
                       if (t.requires_grad(s)) {
                           auto& g = t.grad_acc(s);
                           const auto& Xv = t.value(x);
                           for (std::size_t i = 0; i < r; ++i) {
                               T acc = 0;
                               for (std::size_t j = 0; j < c; ++j) acc += G[i * c + j] * Xv[i * c + j];
                               g[i] += acc;
                           }
                       }
                   },
                   "mul_rows");
}

template <typename T>
Var<T> exp(Var<T> a) {
    auto& tp = tape_of("exp", a);
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = std::exp(v);
    return tp.push(std::move(out), {a.id},
                   [a = a.id](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& Y = t.value(self);
                       auto& g = t.grad_acc(a);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * Y[i];
                   },
                   "exp");
}

template <typename T>
Var<T> log(Var<T> a) {
    auto& tp = tape_of("log", a);
    Tensor<T> out = a.value();
    for (auto& v : out.values()) {
        if (!(v > T(0))) throw NumericError("log: non-positive input " + std::to_string(static_cast<double>(v)));
        v = std::log(v);
    }
    return tp.push(std::move(out), {a.id},
                   [a = a.id](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& X = t.value(a);
                       auto& g = t.grad_acc(a);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] / X[i];
                   },
                   "log");
}

template <typename T>
Var<T> relu(Var<T> a) {
    return leaky_relu(a, T(0));
}

template <typename T>
Var<T> leaky_relu(Var<T> a, Scalar<T> slope) {
    auto& tp = tape_of("leaky_relu", a);
    tp.note_kinks(a.value().values(), T(0));
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = v > T(0) ? v : slope * v;
    return tp.push(std::move(out), {a.id},
                   [a = a.id, slope](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& X = t.value(a);
                       auto& g = t.grad_acc(a);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += X[i] > T(0) ? G[i] : slope * G[i];
                   },
                   slope == T(0) ? "relu" : "leaky_relu");
}

template <typename T>
Var<T> elu(Var<T> a, Scalar<T> alpha) {
    auto& tp = tape_of("elu", a);
    Tensor<T> out = a.value();
    for (auto& v : out.values()) v = v > T(0) ? v : alpha * std::expm1(v);
    return tp.push(std::move(out), {a.id},
                   [a = a.id, alpha](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& X = t.value(a);
                       const auto& Y = t.value(self);
                       auto& g = t.grad_acc(a);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += X[i] > T(0) ? G[i] : G[i] * (Y[i] + alpha);
                   },
                   "elu");
}

// ---- normalizations -------------------------------------------------------------

template <typename T>
Var<T> softmax_rows(Var<T> a) {
    auto& tp = tape_of("softmax_rows", a);
    const auto& X = a.value();
    const std::size_t r = X.rows(), c = X.cols();
    if (c == 0) dim_error("softmax_rows", "empty rows");
    Tensor<T> out(X.shape());
    for (std::size_t i = 0; i < r; ++i) {
        const T* x = X.data() + i * c;
        T* y = out.data() + i * c;
        const T mx = *std::max_element(x, x + c);
        if (!std::isfinite(mx)) throw NumericError("softmax_rows: non-finite row " + std::to_string(i));
        T s = 0;
        for (std::size_t j = 0; j < c; ++j) s += (y[j] = std::exp(x[j] - mx));
        for (std::size_t j = 0; j < c; ++j) y[j] /= s;
    }
    return tp.push(std::move(out), {a.id},
                   [a = a.id, r, c](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& Y = t.value(self);
                       auto& g = t.grad_acc(a);
                       for (std::size_t i = 0; i < r; ++i) {
                           T dot = 0;
                           for (std::size_t j = 0; j < c; ++j) dot += G[i * c + j] * Y[i * c + j];
                           for (std::size_t j = 0; j < c; ++j) g[i * c + j] += Y[i * c + j] * (G[i * c + j] - dot);
                       }
                   },
                   "softmax_rows");
}

template <typename T>
Var<T> segment_softmax(Var<T> scores, std::span<const int> segment, std::size_t n) {
    auto& tp = tape_of("segment_softmax", scores);
    const auto& X = scores.value();
    if (X.size() != segment.size() || X.cols() != (X.rank() == 1 ? X.size() : 1)) {
        dim_error("segment_softmax", "scores " + shape_str(X.shape()) + " vs " + std::to_string(segment.size()) +
                                         " segment ids");
    }
    check_index("segment_softmax", segment, n);
    const std::size_t e = X.size();
    std::vector<T> mx(n, -std::numeric_limits<T>::infinity());
    for (std::size_t i = 0; i < e; ++i) mx[segment[i]] = std::max(mx[segment[i]], X[i]);
    std::vector<T> total(n, T(0));
    Tensor<T> out(X.shape());
    for (std::size_t i = 0; i < e; ++i) {
        if (!std::isfinite(X[i])) throw NumericError("segment_softmax: non-finite score at " + std::to_string(i));
        total[segment[i]] += (out[i] = std::exp(X[i] - mx[segment[i]]));
    }
    for (std::size_t i = 0; i < e; ++i) out[i] /= total[segment[i]];
    std::vector<int> seg(segment.begin(), segment.end());
    return tp.push(std::move(out), {scores.id},
                   [x = scores.id, seg = std::move(seg), n](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& Y = t.value(self);
                       std::vector<T> dot(n, T(0));
                       for (std::size_t i = 0; i < seg.size(); ++i) dot[seg[i]] += G[i] * Y[i];
                       auto& g = t.grad_acc(x);
                       for (std::size_t i = 0; i < seg.size(); ++i) g[i] += Y[i] * (G[i] - dot[seg[i]]);
                   },
                   "segment_softmax");
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, Scalar<T> eps) {
    auto& tp = tape_of("layer_norm", x, gain);
    tape_of("layer_norm", x, bias);
    const auto& X = x.value();
    const std::size_t r = X.rows(), c = X.cols();
    if (gain.value().size() != c || bias.value().size() != c) dim_error("layer_norm", X, gain.value());
    Tensor<T> xhat(X.shape());
    std::vector<T> inv_std(r);
    Tensor<T> out(X.shape());
    const auto& Gm = gain.value();
    const auto& Bt = bias.value();
    for (std::size_t i = 0; i < r; ++i) {
        const T* xi = X.data() + i * c;
        T mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += xi[j];
        mu /= static_cast<T>(c);
        T var = 0;
        for (std::size_t j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= static_cast<T>(c);
        inv_std[i] = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) {
            const T h = (xi[j] - mu) * inv_std[i];
            xhat[i * c + j] = h;
            out[i * c + j] = h * Gm[j] + Bt[j];
        }
    }
    return tp.push(std::move(out), {x.id, gain.id, bias.id},
                   [x = x.id, gn = gain.id, bs = bias.id, r, c, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& Gm = t.value(gn);
                       if (t.requires_grad(gn)) {
                           auto& g = t.grad_acc(gn);
                           for (std::size_t i = 0; i < r * c; ++i) g[i % c] += G[i] * xhat[i];
                       }
                       if (t.requires_grad(bs)) {
                           auto& g = t.grad_acc(bs);
                           for (std::size_t i = 0; i < r * c; ++i) g[i % c] += G[i];
                       }
                       if (t.requires_grad(x)) {
                           auto& g = t.grad_acc(x);
                           const T inv_c = T(1) / static_cast<T>(c);
                           for (std::size_t i = 0; i < r; ++i) {
                               T s1 = 0, s2 = 0;
                               for (std::size_t j = 0; j < c; ++j) {
                                   const T d = G[i * c + j] * Gm[j];
                                   s1 += d;
                                   s2 += d * xhat[i * c + j];
                               }
                               for (std::size_t j = 0; j < c; ++j) {
                                   const T d = G[i * c + j] * Gm[j];
                                   g[i * c + j] += inv_std[i] * (d - inv_c * s1 - xhat[i * c + j] * inv_c * s2);
                               }
                           }
                       }
                   },
                   "layer_norm");
}

template <typename T>
Var<T> batch_norm(Var<T> x, Var<T> gamma, Var<T> beta, BatchNormState<T>& state, bool train, Scalar<T> momentum,
                  Scalar<T> eps) {
    auto& tp = tape_of("batch_norm", x, gamma);
    tape_of("batch_norm", x, beta);
    const auto& X = x.value();
    require_rank("batch_norm", X, 2);
    const std::size_t r = X.rows(), c = X.cols();
    if (gamma.value().size() != c || beta.value().size() != c) dim_error("batch_norm", X, gamma.value());
    if (state.running_mean.size() != c || state.running_var.size() != c) {
        dim_error("batch_norm", X, state.running_mean);
    }
    if (train && r < 2) dim_error("batch_norm", "training mode needs a batch of at least 2 rows, got " + std::to_string(r));
    std::vector<T> mu(c, T(0)), inv_std(c);
    if (train) {
        std::vector<T> var(c, T(0));
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) mu[j] += X[i * c + j];
        }
        for (auto& m : mu) m /= static_cast<T>(r);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) {
                const T d = X[i * c + j] - mu[j];
                var[j] += d * d;
            }
        }
        for (std::size_t j = 0; j < c; ++j) {
            var[j] /= static_cast<T>(r);
            inv_std[j] = T(1) / std::sqrt(var[j] + eps);
            state.running_mean[j] = (T(1) - momentum) * state.running_mean[j] + momentum * mu[j];
            state.running_var[j] = (T(1) - momentum) * state.running_var[j] + momentum * var[j];
        }
    } else {
        for (std::size_t j = 0; j < c; ++j) {
            mu[j] = state.running_mean[j];
            inv_std[j] = T(1) / std::sqrt(state.running_var[j] + eps);
        }
    }
    Tensor<T> xhat(X.shape());
    Tensor<T> out(X.shape());
    const auto& Gm = gamma.value();
    const auto& Bt = beta.value();
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const T h = (X[i * c + j] - mu[j]) * inv_std[j];
            xhat[i * c + j] = h;
            out[i * c + j] = h * Gm[j] + Bt[j];
        }
    }
    return tp.push(std::move(out), {x.id, gamma.id, beta.id},
                   [x = x.id, gm = gamma.id, bt = beta.id, r, c, train, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       const auto& Gm = t.value(gm);
                       if (t.requires_grad(gm)) {
                           auto& g = t.grad_acc(gm);
                           for (std::size_t i = 0; i < r * c; ++i) g[i % c] += G[i] * xhat[i];
                       }
                       if (t.requires_grad(bt)) {
                           auto& g = t.grad_acc(bt);
                           for (std::size_t i = 0; i < r * c; ++i) g[i % c] += G[i];
                       }
                       if (!t.requires_grad(x)) return;
                       auto& g = t.grad_acc(x);
                       if (!train) {
                           for (std::size_t i = 0; i < r * c; ++i) g[i] += G[i] * Gm[i % c] * inv_std[i % c];
                           return;
                       }
                       std::vector<T> s1(c, T(0)), s2(c, T(0));
                       for (std::size_t i = 0; i < r * c; ++i) {
                           const T d = G[i] * Gm[i % c];
                           s1[i % c] += d;
                           s2[i % c] += d * xhat[i];
                       }
                       const T inv_r = T(1) / static_cast<T>(r);
                       for (std::size_t i = 0; i < r * c; ++i) {
                           const std::size_t j = i % c;
                           const T d = G[i] * Gm[j];
                           g[i] += inv_std[j] * (d - inv_r * s1[j] - xhat[i] * inv_r * s2[j]);
                       }
                   },
                   "batch_norm");
}

template <typename T>
Var<T> dropout(Var<T> x, Scalar<T> rate, bool train, std::uint64_t key) {
    auto& tp = tape_of("dropout", x);
    if (!(rate >= T(0) && rate < T(1))) throw ConfigError("dropout: rate must be in [0,1)");
    if (!train || rate == T(0)) return x;
    const T keep_scale = T(1) / (T(1) - rate);
    Tensor<T> mask(x.value().shape());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng::uniform01(key, i) < static_cast<double>(rate) ? T(0) : keep_scale;
    }
    Tensor<T> out = x.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return tp.push(std::move(out), {x.id},
                   [x = x.id, mask = std::move(mask)](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       auto& g = t.grad_acc(x);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i] * mask[i];
                   },
                   "dropout");
}

// ---- structure ------------------------------------------------------------------

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
    if (parts.empty()) dim_error("concat_cols", "no inputs");
    auto& tp = tape_of("concat_cols", parts[0]);
    const std::size_t r = parts[0].value().rows();
    std::vector<std::size_t> widths, ids;
    std::size_t total = 0;
    for (const auto& p : parts) {
        tape_of("concat_cols", parts[0], p);
        if (p.value().rows() != r) dim_error("concat_cols", parts[0].value(), p.value());
        widths.push_back(p.value().cols());
        ids.push_back(p.id);
        total += p.value().cols();
    }
    Tensor<T> out(Shape{r, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        for (std::size_t i = 0; i < r; ++i) {
            std::copy_n(v.data() + i * widths[k], widths[k], out.data() + i * total + off);
        }
        off += widths[k];
    }
    return tp.push(std::move(out), ids,
                   [ids, widths, r, total](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                           if (t.requires_grad(ids[k])) {
                               auto& g = t.grad_acc(ids[k]);
                               for (std::size_t i = 0; i < r; ++i) {
                                   for (std::size_t j = 0; j < widths[k]; ++j) {
                                       g[i * widths[k] + j] += G[i * total + off + j];
                                   }
                               }
                           }
                           off += widths[k];
                       }
                   },
                   "concat_cols");
}

template <typename T>
Var<T> concat_rows(const std::vector<Var<T>>& parts) {
    if (parts.empty()) dim_error("concat_rows", "no inputs");
    auto& tp = tape_of("concat_rows", parts[0]);
    const std::size_t c = parts[0].value().cols();
    std::vector<std::size_t> sizes, ids;
    std::size_t rows = 0;
    for (const auto& p : parts) {
        tape_of("concat_rows", parts[0], p);
        if (p.value().cols() != c) dim_error("concat_rows", parts[0].value(), p.value());
        sizes.push_back(p.value().size());
        ids.push_back(p.id);
        rows += p.value().rows();
    }
    Tensor<T> out(Shape{rows, c});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy_n(p.value().data(), p.value().size(), out.data() + off);
        off += p.value().size();
    }
    return tp.push(std::move(out), ids,
                   [ids, sizes](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                           if (t.requires_grad(ids[k])) {
                               auto& g = t.grad_acc(ids[k]);
                               for (std::size_t i = 0; i < sizes[k]; ++i) g[i] += G[off + i];
                           }
                           off += sizes[k];
                       }
                   },
                   "concat_rows");
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t count) {
    auto& tp = tape_of("slice_cols", x);
    const auto& X = x.value();
    const std::size_t r = X.rows(), c = X.cols();
    if (start + count > c) {
        dim_error("slice_cols", "columns [" + std::to_string(start) + "," + std::to_string(start + count) +
                                    ") out of " + shape_str(X.shape()));
    }
    Tensor<T> out(Shape{r, count});
    for (std::size_t i = 0; i < r; ++i) std::copy_n(X.data() + i * c + start, count, out.data() + i * count);
    return tp.push(std::move(out), {x.id},
                   [x = x.id, r, c, start, count](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       auto& g = t.grad_acc(x);
                       for (std::size_t i = 0; i < r; ++i) {
                           for (std::size_t j = 0; j < count; ++j) g[i * c + start + j] += G[i * count + j];
                       }
                   },
                   "slice_cols");
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
    auto& tp = tape_of("reshape", x);
    Tensor<T> out = x.value().reshaped(std::move(shape));
    return tp.push(std::move(out), {x.id},
                   [x = x.id](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       auto& g = t.grad_acc(x);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += G[i];
                   },
                   "reshape");
}

template <typename T>
Var<T> flatten(Var<T> x) {
    const auto& s = x.value().shape();
    if (s.empty()) dim_error("flatten", "rank-0 tensor");
    return reshape(x, Shape{s[0], s[0] == 0 ? 0 : x.value().size() / s[0]});
}

template <typename T>
Var<T> gather_rows(Var<T> x, std::span<const int> index) {
    auto& tp = tape_of("gather_rows", x);
    const auto& X = x.value();
    const std::size_t r = X.rows(), c = X.cols();
    check_index("gather_rows", index, r);
    Tensor<T> out(Shape{index.size(), c});
    for (std::size_t i = 0; i < index.size(); ++i) {
        std::copy_n(X.data() + static_cast<std::size_t>(index[i]) * c, c, out.data() + i * c);
    }
    std::vector<int> idx(index.begin(), index.end());
    return tp.push(std::move(out), {x.id},
                   [x = x.id, idx = std::move(idx), c](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       auto& g = t.grad_acc(x);
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                           T* dst = g.data() + static_cast<std::size_t>(idx[i]) * c;
                           const T* src = G.data() + i * c;
                           for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                       }
                   },
                   "gather_rows");
}

template <typename T>
Var<T> scatter_add_rows(Var<T> x, std::span<const int> index, std::size_t n) {
    auto& tp = tape_of("scatter_add_rows", x);
    const auto& X = x.value();
    const std::size_t r = X.rows(), c = X.cols();
    if (index.size() != r) {
        dim_error("scatter_add_rows", std::to_string(index.size()) + " indices for " + shape_str(X.shape()));
    }
    check_index("scatter_add_rows", index, n);
    Tensor<T> out(Shape{n, c});
    for (std::size_t i = 0; i < r; ++i) {
        T* dst = out.data() + static_cast<std::size_t>(index[i]) * c;
        const T* src = X.data() + i * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
    }
    std::vector<int> idx(index.begin(), index.end());
    return tp.push(std::move(out), {x.id},
                   [x = x.id, idx = std::move(idx), c](Tape<T>& t, std::size_t self) {
                       const auto& G = t.grad_acc(self);
                       auto& g = t.grad_acc(x);
                       for (std::size_t i = 0; i < idx.size(); ++i) {
                           const T* src = G.data() + static_cast<std::size_t>(idx[i]) * c;
                           T* dst = g.data() + i * c;
                           for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                       }
                   },
                   "scatter_add_rows");
}

// ---- reductions -----------------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> x) {
    auto& tp = tape_of("sum", x);
    T s = 0;
    for (const T v : x.value().values()) s += v;
    return tp.push(Tensor<T>::scalar(s), {x.id},
                   [x = x.id](Tape<T>& t, std::size_t self) {
                       const T g0 = t.grad_acc(self)[0];
                       for (auto& v : t.grad_acc(x).values()) v += g0;
                   },
                   "sum");
}

template <typename T>
Var<T> mean(Var<T> x) {
    const std::size_t n = x.value().size();
    if (n == 0) dim_error("mean", "empty tensor");
    return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Var<T> focal_loss(Var<T> probs, std::span<const int> labels, std::span<const Scalar<T>> alpha, Scalar<T> gamma) {
    auto& tp = tape_of("focal_loss", probs);
    const auto& P = probs.value();
    require_rank("focal_loss", P, 2);
    const std::size_t n = P.dim(0), c = P.dim(1);
    if (labels.size() != n) dim_error("focal_loss", std::to_string(labels.size()) + " labels for " + shape_str(P.shape()));
    if (alpha.size() != c) dim_error("focal_loss", std::to_string(alpha.size()) + " class weights for " + shape_str(P.shape()));
    if (n == 0) dim_error("focal_loss", "empty batch");
    if (gamma < T(0)) throw ConfigError("focal_loss: gamma must be >= 0");
    constexpr T kFloor = T(1e-12);
    std::vector<T> picked(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c) {
            throw DataError("focal_loss: label " + std::to_string(labels[i]) + " outside {0.." + std::to_string(c - 1) + "}");
        }
        picked[i] = P[i * c + labels[i]];
    }
    tp.note_kinks(picked, kFloor);
    T total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T p = std::clamp(picked[i], kFloor, T(1));
        total += alpha[labels[i]] * std::pow(T(1) - p, gamma) * std::log(p);
    }
    const T inv_n = T(1) / static_cast<T>(n);
    std::vector<int> lab(labels.begin(), labels.end());
    std::vector<T> alp(alpha.begin(), alpha.end());
    return tp.push(Tensor<T>::scalar(-total * inv_n), {probs.id},
                   [pid = probs.id, lab = std::move(lab), alp = std::move(alp), gamma, c, inv_n](Tape<T>& t,
                                                                                                std::size_t self) {
                       const T g0 = t.grad_acc(self)[0];
                       const auto& P = t.value(pid);
                       auto& g = t.grad_acc(pid);
                       for (std::size_t i = 0; i < lab.size(); ++i) {
                           const std::size_t k = i * c + static_cast<std::size_t>(lab[i]);
                           const T p = P[k];
                           if (!(p > kFloor) || p > T(1)) continue;  // clamped: flat
                           const T q = T(1) - p;
                           // d/dp [(1-p)^γ log p]
                           T d = std::pow(q, gamma) / p;
                           if (gamma != T(0) && q > T(0)) d -= gamma * std::pow(q, gamma - T(1)) * std::log(p);
                           g[k] += -g0 * inv_n * alp[lab[i]] * d;
                       }
                   },
                   "focal_loss");
}

#define STARN_INSTANTIATE(T)                                                                               \
    template class Tape<T>;                                                                                \
    template Var<T> matmul(Var<T>, Var<T>);                                                                \
    template Var<T> matmul_nt(Var<T>, Var<T>);                                                             \
    template Var<T> transpose(Var<T>);                                                                     \
    template Var<T> bmm(Var<T>, Var<T>);                                                                   \
    template Var<T> transpose_last2(Var<T>);                                                               \
    template Var<T> add(Var<T>, Var<T>);                                                                   \
    template Var<T> sub(Var<T>, Var<T>);                                                                   \
    template Var<T> mul(Var<T>, Var<T>);                                                                   \
    template Var<T> scale(Var<T>, Scalar<T>);                                                              \
    template Var<T> add_bias(Var<T>, Var<T>);                                                              \
    template Var<T> mul_rows(Var<T>, Var<T>);                                                              \
    template Var<T> exp(Var<T>);                                                                           \
    template Var<T> log(Var<T>);                                                                           \
    template Var<T> relu(Var<T>);                                                                          \
    template Var<T> leaky_relu(Var<T>, Scalar<T>);                                                         \
    template Var<T> elu(Var<T>, Scalar<T>);                                                                \
    template Var<T> softmax_rows(Var<T>);                                                                  \
    template Var<T> segment_softmax(Var<T>, std::span<const int>, std::size_t);                            \
    template Var<T> layer_norm(Var<T>, Var<T>, Var<T>, Scalar<T>);                                         \
    template Var<T> batch_norm(Var<T>, Var<T>, Var<T>, BatchNormState<T>&, bool, Scalar<T>, Scalar<T>);    \
    template Var<T> dropout(Var<T>, Scalar<T>, bool, std::uint64_t);                                       \
    template Var<T> concat_cols(const std::vector<Var<T>>&);                                               \
    template Var<T> concat_rows(const std::vector<Var<T>>&);                                               \
    template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                                          \
    template Var<T> reshape(Var<T>, Shape);                                                                \
    template Var<T> flatten(Var<T>);                                                                       \
    template Var<T> gather_rows(Var<T>, std::span<const int>);                                             \
    template Var<T> scatter_add_rows(Var<T>, std::span<const int>, std::size_t);                           \
    template Var<T> sum(Var<T>);                                                                           \
    template Var<T> mean(Var<T>);                                                                          \
    template Var<T> focal_loss(Var<T>, std::span<const int>, std::span<const Scalar<T>>, Scalar<T>);

STARN_INSTANTIATE(float)
STARN_INSTANTIATE(double)

#undef STARN_INSTANTIATE

}  // namespace starn::ad
