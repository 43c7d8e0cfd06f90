#include "aes/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "aes/error.hpp"

namespace aes {

OpStats& op_stats() {
    thread_local OpStats stats;
    return stats;
}

namespace detail {

namespace {
std::atomic<std::int64_t> g_live_nodes{0};
std::atomic<std::int64_t> g_peak_live_nodes{0};

void note_node_created() {
    const std::int64_t live = g_live_nodes.fetch_add(1, std::memory_order_relaxed) + 1;
    std::int64_t peak = g_peak_live_nodes.load(std::memory_order_relaxed);
    while (peak < live &&
           !g_peak_live_nodes.compare_exchange_weak(peak, live, std::memory_order_relaxed)) {
    }
}
}  // namespace

struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty until first accumulation
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backprop;

    TensorNode(std::vector<std::size_t> s, std::vector<double> v)
        : shape(std::move(s)), values(std::move(v)) {
        note_node_created();
    }
    ~TensorNode() { g_live_nodes.fetch_sub(1, std::memory_order_relaxed); }

    TensorNode(const TensorNode&) = delete;
    TensorNode& operator=(const TensorNode&) = delete;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0);
        return grad;
    }
};

struct TensorOps {
    static std::shared_ptr<TensorNode> node(const Tensor& t) { return t.node_; }
    static Tensor wrap(std::shared_ptr<TensorNode> n) { return Tensor(std::move(n)); }
};

}  // namespace detail

using detail::TensorNode;
using detail::TensorOps;

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t p = 1;
    for (std::size_t d : shape) p *= d;
    return p;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

TensorNode& deref(const Tensor& t, const char* op) {
    auto n = TensorOps::node(t);
    if (!n) throw ShapeError(std::string(op) + ": undefined tensor");
    return *n;
}

void check_finite(const char* op, const std::vector<double>& values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCategory::internal,
                        std::string(op) + ": produced a non-finite value");
        }
    }
}

Tensor make_result(std::vector<std::size_t> shape, std::vector<double> values,
                   std::vector<std::shared_ptr<TensorNode>> parents,
                   std::function<void(TensorNode&)> backprop, const char* op) {
    check_finite(op, values);
    auto node = std::make_shared<TensorNode>(std::move(shape), std::move(values));
    node->parents = std::move(parents);
    node->backprop = std::move(backprop);
    return TensorOps::wrap(std::move(node));
}

void require_rank2(const TensorNode& n, const char* op) {
    if (n.shape.size() != 2) {
        throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(n.shape));
    }
}

// Accumulating matrix kernels. Dimension names: out is M x N, contraction K.
void mm_nn_acc(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
               std::size_t N) {
    op_stats().matmul_elem_ops += static_cast<std::uint64_t>(M) * K * N;
    for (std::size_t i = 0; i < M; ++i) {
        double* crow = c + i * N;
        const double* arow = a + i * K;
        for (std::size_t t = 0; t < K; ++t) {
            const double av = arow[t];
            if (av == 0.0) continue;
            const double* brow = b + t * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

// a is M x K, b is N x K: c[i,j] += dot(a_i, b_j).
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
               std::size_t N) {
    op_stats().matmul_elem_ops += static_cast<std::uint64_t>(M) * K * N;
    for (std::size_t i = 0; i < M; ++i) {
        const double* arow = a + i * K;
        double* crow = c + i * N;
        for (std::size_t j = 0; j < N; ++j) {
            const double* brow = b + j * K;
            double acc = 0.0;
            for (std::size_t t = 0; t < K; ++t) acc += arow[t] * brow[t];
            crow[j] += acc;
        }
    }
}

// a is K x M, b is K x N: c[i,j] += sum_t a[t,i] * b[t,j].
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t M, std::size_t K,
               std::size_t N) {
    op_stats().matmul_elem_ops += static_cast<std::uint64_t>(M) * K * N;
    for (std::size_t t = 0; t < K; ++t) {
        const double* arow = a + t * M;
        const double* brow = b + t * N;
        for (std::size_t i = 0; i < M; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + i * N;
            for (std::size_t j = 0; j < N; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

// ---- Tensor --------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
    const std::size_t n = shape_product(shape);
    return TensorOps::wrap(std::make_shared<TensorNode>(std::move(shape), std::vector<double>(n, 0.0)));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    const std::size_t n = shape_product(shape);
    if (!std::isfinite(value)) throw Error(ErrorCategory::internal, "full: non-finite fill value");
    return TensorOps::wrap(std::make_shared<TensorNode>(std::move(shape), std::vector<double>(n, value)));
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
    if (shape_product(shape) != values.size()) {
        throw ShapeError("from: shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
    check_finite("from", values);
    return TensorOps::wrap(std::make_shared<TensorNode>(std::move(shape), std::move(values)));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const std::vector<std::size_t>& Tensor::shape() const { return deref(*this, "shape").shape; }
std::size_t Tensor::size() const { return deref(*this, "size").values.size(); }
std::size_t Tensor::rank() const { return deref(*this, "rank").shape.size(); }

std::size_t Tensor::rows() const {
    const auto& n = deref(*this, "rows");
    require_rank2(n, "rows");
    return n.shape[0];
}

std::size_t Tensor::cols() const {
    const auto& n = deref(*this, "cols");
    if (n.shape.size() == 1) return n.shape[0];
    require_rank2(n, "cols");
    return n.shape[1];
}

const std::vector<double>& Tensor::values() const { return deref(*this, "values").values; }

std::vector<double>& Tensor::values_mut() { return deref(*this, "values_mut").values; }

double Tensor::item() const {
    const auto& n = deref(*this, "item");
    if (n.values.size() != 1) throw ShapeError("item: tensor is not scalar");
    return n.values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    const auto& n = deref(*this, "at");
    require_rank2(n, "at");
    if (row >= n.shape[0] || col >= n.shape[1]) throw ShapeError("at: index out of range");
    return n.values[row * n.shape[1] + col];
}

bool Tensor::has_grad() const { return !deref(*this, "has_grad").grad.empty(); }

const std::vector<double>& Tensor::grad() const {
    const auto& n = deref(*this, "grad");
    if (n.grad.empty()) throw ShapeError("grad: no gradient has been accumulated");
    return n.grad;
}

void Tensor::zero_grad() {
    auto& n = deref(*this, "zero_grad");
    std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

bool Tensor::is_leaf() const { return deref(*this, "is_leaf").parents.empty(); }

std::int64_t Tensor::live_nodes() noexcept {
    return detail::g_live_nodes.load(std::memory_order_relaxed);
}
std::int64_t Tensor::peak_live_nodes() noexcept {
    return detail::g_peak_live_nodes.load(std::memory_order_relaxed);
}
void Tensor::reset_peak_live_nodes() noexcept {
    detail::g_peak_live_nodes.store(detail::g_live_nodes.load(std::memory_order_relaxed),
                                    std::memory_order_relaxed);
}

// ---- operations ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    auto an = TensorOps::node(a);
    auto bn = TensorOps::node(b);
    deref(a, "matmul");
    deref(b, "matmul");
    require_rank2(*an, "matmul");
    require_rank2(*bn, "matmul");
    const std::size_t m = an->shape[0], k = an->shape[1];
    const std::size_t k2 = bn->shape[0], n = bn->shape[1];
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(an->shape) + " x " +
                         shape_str(bn->shape));
    }
    std::vector<double> out(m * n, 0.0);
    mm_nn_acc(an->values.data(), bn->values.data(), out.data(), m, k, n);
    return make_result(
        {m, n}, std::move(out), {an, bn},
        [an, bn, m, k, n](TensorNode& self) {
            mm_nt_acc(self.grad.data(), bn->values.data(), an->ensure_grad().data(), m, n, k);
            mm_tn_acc(an->values.data(), self.grad.data(), bn->ensure_grad().data(), k, m, n);
        },
        "matmul");
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    auto an = TensorOps::node(a);
    auto bn = TensorOps::node(b);
    deref(a, "matmul_nt");
    deref(b, "matmul_nt");
    require_rank2(*an, "matmul_nt");
    require_rank2(*bn, "matmul_nt");
    const std::size_t m = an->shape[0], k = an->shape[1];
    const std::size_t n = bn->shape[0], k2 = bn->shape[1];
    if (k != k2) {
        throw ShapeError("matmul_nt: inner dimensions disagree: " + shape_str(an->shape) +
                         " x " + shape_str(bn->shape) + "^T");
    }
    std::vector<double> out(m * n, 0.0);
    mm_nt_acc(an->values.data(), bn->values.data(), out.data(), m, k, n);
    return make_result(
        {m, n}, std::move(out), {an, bn},
        [an, bn, m, k, n](TensorNode& self) {
            mm_nn_acc(self.grad.data(), bn->values.data(), an->ensure_grad().data(), m, n, k);
            mm_tn_acc(self.grad.data(), an->values.data(), bn->ensure_grad().data(), n, m, k);
        },
        "matmul_nt");
}

Tensor transpose(const Tensor& x) {
    auto xn = TensorOps::node(x);
    deref(x, "transpose");
    require_rank2(*xn, "transpose");
    const std::size_t m = xn->shape[0], n = xn->shape[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xn->values[i * n + j];
    return make_result(
        {n, m}, std::move(out), {xn},
        [xn, m, n](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
        },
        "transpose");
}

namespace {

Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* op, double sign_b,
                          bool product) {
    auto an = TensorOps::node(a);
    auto bn = TensorOps::node(b);
    deref(a, op);
    deref(b, op);
    if (an->shape != bn->shape) {
        throw ShapeError(std::string(op) + ": shapes disagree: " + shape_str(an->shape) + " vs " +
                         shape_str(bn->shape));
    }
    std::vector<double> out(an->values.size());
    if (product) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = an->values[i] * bn->values[i];
    } else {
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = an->values[i] + sign_b * bn->values[i];
    }
    std::function<void(TensorNode&)> back;
    if (product) {
        back = [an, bn](TensorNode& self) {
            auto& ga = an->ensure_grad();
            auto& gb = bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                ga[i] += self.grad[i] * bn->values[i];
                gb[i] += self.grad[i] * an->values[i];
            }
        };
    } else {
        back = [an, bn, sign_b](TensorNode& self) {
            auto& ga = an->ensure_grad();
            auto& gb = bn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                ga[i] += self.grad[i];
                gb[i] += sign_b * self.grad[i];
            }
        };
    }
    return make_result(an->shape, std::move(out), {an, bn}, std::move(back), op);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, "add", 1.0, false); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, "sub", -1.0, false); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise_binary(a, b, "mul", 0.0, true); }

Tensor scale(const Tensor& x, double c) {
    auto xn = TensorOps::node(x);
    deref(x, "scale");
    if (!std::isfinite(c)) throw Error(ErrorCategory::internal, "scale: non-finite factor");
    std::vector<double> out(xn->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * xn->values[i];
    return make_result(
        xn->shape, std::move(out), {xn},
        [xn, c](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += c * self.grad[i];
        },
        "scale");
}

Tensor add_row(const Tensor& x, const Tensor& row) {
    auto xn = TensorOps::node(x);
    auto rn = TensorOps::node(row);
    deref(x, "add_row");
    deref(row, "add_row");
    require_rank2(*xn, "add_row");
    if (rn->shape.size() != 1 || rn->shape[0] != xn->shape[1]) {
        throw ShapeError("add_row: row " + shape_str(rn->shape) + " does not match " +
                         shape_str(xn->shape));
    }
    const std::size_t m = xn->shape[0], n = xn->shape[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xn->values[i * n + j] + rn->values[j];
    return make_result(
        xn->shape, std::move(out), {xn, rn},
        [xn, rn, m, n](TensorNode& self) {
            auto& gx = xn->ensure_grad();
            auto& gr = rn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gx[i * n + j] += self.grad[i * n + j];
                    gr[j] += self.grad[i * n + j];
                }
            }
        },
        "add_row");
}

namespace {

Tensor softmax_impl(const Tensor& x, const std::vector<std::uint8_t>* mask, const char* op) {
    auto xn = TensorOps::node(x);
    deref(x, op);
    require_rank2(*xn, op);
    const std::size_t m = xn->shape[0], n = xn->shape[1];
    if (mask && mask->size() != m * n) {
        throw ShapeError(std::string(op) + ": mask size does not match tensor");
    }
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xrow = xn->values.data() + i * n;
        double* yrow = out.data() + i * n;
        double rowmax = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (mask && !(*mask)[i * n + j]) continue;
            rowmax = std::max(rowmax, xrow[j]);
        }
        if (rowmax == -std::numeric_limits<double>::infinity()) {
            throw ContractError(std::string(op) + ": row " + std::to_string(i) +
                                " is fully masked (no valid key)");
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (mask && !(*mask)[i * n + j]) continue;
            yrow[j] = std::exp(xrow[j] - rowmax);
            denom += yrow[j];
        }
        for (std::size_t j = 0; j < n; ++j) yrow[j] /= denom;
    }
    return make_result(
        xn->shape, std::move(out), {xn},
        [xn, m, n](TensorNode& self) {
            auto& gx = xn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* y = self.values.data() + i * n;
                const double* gy = self.grad.data() + i * n;
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j) dot += y[j] * gy[j];
                for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += y[j] * (gy[j] - dot);
            }
        },
        op);
}

}  // namespace

Tensor softmax_rows(const Tensor& x) { return softmax_impl(x, nullptr, "softmax_rows"); }

Tensor masked_softmax_rows(const Tensor& x, const std::vector<std::uint8_t>& mask) {
    return softmax_impl(x, &mask, "masked_softmax_rows");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    auto xn = TensorOps::node(x);
    auto gn = TensorOps::node(gain);
    auto bn = TensorOps::node(bias);
    deref(x, "layer_norm");
    deref(gain, "layer_norm");
    deref(bias, "layer_norm");
    require_rank2(*xn, "layer_norm");
    if (!(eps > 0.0)) throw InputError("layer_norm: eps must be positive");
    const std::size_t m = xn->shape[0], n = xn->shape[1];
    if (gn->values.size() != n || bn->values.size() != n) {
        throw ShapeError("layer_norm: gain/bias length does not match row width");
    }
    std::vector<double> out(m * n);
    std::vector<double> inv_std(m);
    std::vector<double> xhat(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xrow = xn->values.data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xrow[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = xrow[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xrow[j] - mu) * is;
            xhat[i * n + j] = h;
            out[i * n + j] = gn->values[j] * h + bn->values[j];
        }
    }
    auto xhat_shared = std::make_shared<std::vector<double>>(std::move(xhat));
    auto inv_std_shared = std::make_shared<std::vector<double>>(std::move(inv_std));
    return make_result(
        xn->shape, std::move(out), {xn, gn, bn},
        [xn, gn, bn, xhat_shared, inv_std_shared, m, n](TensorNode& self) {
            auto& gx = xn->ensure_grad();
            auto& gg = gn->ensure_grad();
            auto& gb = bn->ensure_grad();
            const auto& xh = *xhat_shared;
            const double dn = static_cast<double>(n);
            for (std::size_t i = 0; i < m; ++i) {
                const double* gy = self.grad.data() + i * n;
                const double* h = xh.data() + i * n;
                double sum_dh = 0.0, sum_dh_h = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const double dh = gy[j] * gn->values[j];
                    sum_dh += dh;
                    sum_dh_h += dh * h[j];
                }
                const double is = (*inv_std_shared)[i];
                for (std::size_t j = 0; j < n; ++j) {
                    const double dh = gy[j] * gn->values[j];
                    gx[i * n + j] += is * (dh - sum_dh / dn - h[j] * sum_dh_h / dn);
                    gg[j] += gy[j] * h[j];
                    gb[j] += gy[j];
                }
            }
        },
        "layer_norm");
}

Tensor gelu(const Tensor& x) {
    auto xn = TensorOps::node(x);
    deref(x, "gelu");
    constexpr double inv_sqrt2 = 0.7071067811865476;
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    std::vector<double> out(xn->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xn->values[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    return make_result(
        xn->shape, std::move(out), {xn},
        [xn](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double v = xn->values[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                g[i] += self.grad[i] * (cdf + v * pdf);
            }
        },
        "gelu");
}

Tensor sigmoid(const Tensor& x) {
    auto xn = TensorOps::node(x);
    deref(x, "sigmoid");
    std::vector<double> out(xn->values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xn->values[i];
        if (v >= 0.0) {
            out[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
            const double e = std::exp(v);
            out[i] = e / (1.0 + e);
        }
    }
    return make_result(
        xn->shape, std::move(out), {xn},
        [xn](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double y = self.values[i];
                g[i] += self.grad[i] * y * (1.0 - y);
            }
        },
        "sigmoid");
}

namespace {

Tensor reduce_impl(const Tensor& x, double factor, const char* op) {
    auto xn = TensorOps::node(x);
    deref(x, op);
    double acc = 0.0;
    for (double v : xn->values) acc += v;
    return make_result(
        {1}, {acc * factor}, {xn},
        [xn, factor](TensorNode& self) {
            auto& g = xn->ensure_grad();
            const double gy = self.grad[0] * factor;
            for (double& gi : g) gi += gy;
        },
        op);
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_impl(x, 1.0, "sum"); }

Tensor mean(const Tensor& x) {
    const std::size_t n = x.size();
    if (n == 0) throw ShapeError("mean: empty tensor");
    return reduce_impl(x, 1.0 / static_cast<double>(n), "mean");
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    auto xn = TensorOps::node(x);
    deref(x, "reshape");
    if (shape_product(shape) != xn->values.size()) {
        throw ShapeError("reshape: element count mismatch for " + shape_str(shape));
    }
    std::vector<double> out = xn->values;
    return make_result(
        std::move(shape), std::move(out), {xn},
        [xn](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
        },
        "reshape");
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
    auto tn = TensorOps::node(table);
    deref(table, "gather_rows");
    require_rank2(*tn, "gather_rows");
    const std::size_t rows = tn->shape[0], n = tn->shape[1];
    for (std::size_t id : ids) {
        if (id >= rows) {
            throw InputError("gather_rows: id " + std::to_string(id) + " out of range (" +
                             std::to_string(rows) + " rows)");
        }
    }
    std::vector<double> out(ids.size() * n);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::copy_n(tn->values.data() + ids[i] * n, n, out.data() + i * n);
    }
    auto ids_shared = std::make_shared<std::vector<std::size_t>>(ids);
    return make_result(
        {ids.size(), n}, std::move(out), {tn},
        [tn, ids_shared, n](TensorNode& self) {
            auto& g = tn->ensure_grad();
            const auto& idv = *ids_shared;
            for (std::size_t i = 0; i < idv.size(); ++i) {
                for (std::size_t j = 0; j < n; ++j) g[idv[i] * n + j] += self.grad[i * n + j];
            }
        },
        "gather_rows");
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
    auto xn = TensorOps::node(x);
    deref(x, "slice_rows");
    require_rank2(*xn, "slice_rows");
    const std::size_t m = xn->shape[0], n = xn->shape[1];
    if (begin + count > m) throw ShapeError("slice_rows: range exceeds row count");
    std::vector<double> out(count * n);
    std::copy_n(xn->values.data() + begin * n, count * n, out.data());
    return make_result(
        {count, n}, std::move(out), {xn},
        [xn, begin, n](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
        },
        "slice_rows");
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    std::vector<std::shared_ptr<TensorNode>> nodes;
    std::size_t total_rows = 0;
    std::size_t n = 0;
    for (const auto& p : parts) {
        auto pn = TensorOps::node(p);
        deref(p, "concat_rows");
        require_rank2(*pn, "concat_rows");
        if (nodes.empty()) {
            n = pn->shape[1];
        } else if (pn->shape[1] != n) {
            throw ShapeError("concat_rows: column widths disagree");
        }
        total_rows += pn->shape[0];
        nodes.push_back(std::move(pn));
    }
    std::vector<double> out;
    out.reserve(total_rows * n);
    for (const auto& pn : nodes) out.insert(out.end(), pn->values.begin(), pn->values.end());
    auto nodes_shared = std::make_shared<std::vector<std::shared_ptr<TensorNode>>>(nodes);
    return make_result(
        {total_rows, n}, std::move(out), std::move(nodes),
        [nodes_shared](TensorNode& self) {
            std::size_t offset = 0;
            for (auto& pn : *nodes_shared) {
                auto& g = pn->ensure_grad();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offset + i];
                offset += g.size();
            }
        },
        "concat_rows");
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    std::vector<std::shared_ptr<TensorNode>> nodes;
    std::size_t m = 0;
    std::size_t total_cols = 0;
    for (const auto& p : parts) {
        auto pn = TensorOps::node(p);
        deref(p, "concat_cols");
        require_rank2(*pn, "concat_cols");
        if (nodes.empty()) {
            m = pn->shape[0];
        } else if (pn->shape[0] != m) {
            throw ShapeError("concat_cols: row counts disagree");
        }
        total_cols += pn->shape[1];
        nodes.push_back(std::move(pn));
    }
    std::vector<double> out(m * total_cols);
    std::size_t col_offset = 0;
    for (const auto& pn : nodes) {
        const std::size_t w = pn->shape[1];
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(pn->values.data() + i * w, w, out.data() + i * total_cols + col_offset);
        }
        col_offset += w;
    }
    auto nodes_shared = std::make_shared<std::vector<std::shared_ptr<TensorNode>>>(nodes);
    return make_result(
        {m, total_cols}, std::move(out), std::move(nodes),
        [nodes_shared, m, total_cols](TensorNode& self) {
            std::size_t col_offset = 0;
            for (auto& pn : *nodes_shared) {
                const std::size_t w = pn->shape[1];
                auto& g = pn->ensure_grad();
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < w; ++j) {
                        g[i * w + j] += self.grad[i * total_cols + col_offset + j];
                    }
                }
                col_offset += w;
            }
        },
        "concat_cols");
}

Tensor take_cols_strided(const Tensor& x, std::size_t offset, std::size_t stride) {
    auto xn = TensorOps::node(x);
    deref(x, "take_cols_strided");
    require_rank2(*xn, "take_cols_strided");
    if (stride == 0) throw ShapeError("take_cols_strided: zero stride");
    const std::size_t m = xn->shape[0], n = xn->shape[1];
    if (offset >= n) throw ShapeError("take_cols_strided: offset exceeds column count");
    const std::size_t w = (n - offset + stride - 1) / stride;
    std::vector<double> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = xn->values[i * n + offset + j * stride];
    return make_result(
        {m, w}, std::move(out), {xn},
        [xn, offset, stride, m, n, w](TensorNode& self) {
            auto& g = xn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < w; ++j)
                    g[i * n + offset + j * stride] += self.grad[i * w + j];
        },
        "take_cols_strided");
}

Tensor interleave_cols(const Tensor& a, const Tensor& b) {
    auto an = TensorOps::node(a);
    auto bn = TensorOps::node(b);
    deref(a, "interleave_cols");
    deref(b, "interleave_cols");
    require_rank2(*an, "interleave_cols");
    require_rank2(*bn, "interleave_cols");
    if (an->shape != bn->shape) throw ShapeError("interleave_cols: shapes disagree");
    const std::size_t m = an->shape[0], w = an->shape[1];
    std::vector<double> out(m * 2 * w);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
            out[i * 2 * w + 2 * j] = an->values[i * w + j];
            out[i * 2 * w + 2 * j + 1] = bn->values[i * w + j];
        }
    }
    return make_result(
        {m, 2 * w}, std::move(out), {an, bn},
        [an, bn, m, w](TensorNode& self) {
            auto& ga = an->ensure_grad();
            auto& gb = bn->ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    ga[i * w + j] += self.grad[i * 2 * w + 2 * j];
                    gb[i * w + j] += self.grad[i * 2 * w + 2 * j + 1];
                }
            }
        },
        "interleave_cols");
}

// ---- backward --------------------------------------------------------------

namespace {

void run_backward(const std::vector<std::shared_ptr<TensorNode>>& roots,
                  std::span<const std::vector<double>> seeds) {
    // Post-order DFS over parents; reverse order is a valid backprop order.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    for (const auto& root : roots) {
        if (visited.count(root.get())) continue;
        stack.emplace_back(root.get(), 0);
        visited.insert(root.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                TensorNode* parent = node->parents[next++].get();
                if (visited.insert(parent).second) stack.emplace_back(parent, 0);
            } else {
                topo.push_back(node);
                stack.pop_back();
            }
        }
    }
    // Grads on computed (non-leaf) nodes are per-pass scratch: clear them so a
    // repeated pass over the same graph cannot double-count. Leaves keep their
    // grads; that is the accumulation contract.
    std::unordered_set<TensorNode*> root_set;
    for (const auto& root : roots) root_set.insert(root.get());
    for (TensorNode* node : topo) {
        if (node->backprop && !root_set.count(node)) {
            std::fill(node->grad.begin(), node->grad.end(), 0.0);
        }
    }
    for (std::size_t r = 0; r < roots.size(); ++r) {
        auto& g = roots[r]->ensure_grad();
        const auto& seed = seeds[r];
        if (seed.size() != g.size()) throw ShapeError("backward: seed size mismatch");
        if (roots[r]->backprop) std::fill(g.begin(), g.end(), 0.0);  // computed root: reseed
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    }
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backprop && !node->grad.empty()) node->backprop(*node);
    }
}

}  // namespace

void backward(const Tensor& loss) {
    auto ln = TensorOps::node(loss);
    deref(loss, "backward");
    if (ln->values.size() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(ln->shape));
    }
    const std::vector<std::vector<double>> seeds{{1.0}};
    run_backward({ln}, seeds);
}

void backward_seeded(std::span<const Tensor> roots, std::span<const std::vector<double>> seeds) {
    if (roots.size() != seeds.size()) throw ShapeError("backward_seeded: root/seed count mismatch");
    std::vector<std::shared_ptr<TensorNode>> nodes;
    nodes.reserve(roots.size());
    for (const auto& r : roots) {
        deref(r, "backward_seeded");
        nodes.push_back(TensorOps::node(r));
    }
    run_backward(nodes, seeds);
}

}  // namespace aes
