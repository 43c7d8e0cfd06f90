#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace aes {

/// Per-thread instrumentation counters. Reset with `op_stats() = {}`.
struct OpStats {
    std::uint64_t matmul_elem_ops = 0;   // accumulated m*k*n per matrix product
    std::uint64_t qk_dot_products = 0;   // query-key dot products (attention paths)
};
OpStats& op_stats();

namespace detail {
struct TensorNode;
struct TensorOps;
}

/// Dense fp64 tensor with an optional gradient slot. Every operation records
/// its backward rule; `backward()` on a scalar fills grads on all reachable
/// tensors. Tensors are immutable after construction except for the grad slot
/// (during a backward pass) and `values_mut()`, which is reserved for leaf
/// initialization and optimizer updates between recorded computations.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const noexcept { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const;
    std::size_t size() const;
    std::size_t rank() const;
    std::size_t rows() const;  // rank-2 only
    std::size_t cols() const;  // rank-2 only; rank-1 returns its length

    const std::vector<double>& values() const;
    std::vector<double>& values_mut();
    double item() const;  // scalar tensors
    double at(std::size_t row, std::size_t col) const;

    bool has_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    /// True if this tensor was produced by an operation (has parents).
    bool is_leaf() const;

    /// Live/peak counts of tensor nodes, for memory instrumentation.
    static std::int64_t live_nodes() noexcept;
    static std::int64_t peak_live_nodes() noexcept;
    static void reset_peak_live_nodes() noexcept;

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend struct detail::TensorOps;
};

// ---- recorded operations -------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k] * [k x n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // [m x k] * [n x k]^T
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& x, double c);
Tensor add_row(const Tensor& x, const Tensor& row);  // broadcast row bias over rows
Tensor softmax_rows(const Tensor& x);
/// Softmax per row restricted to entries with mask != 0 (masked-out entries
/// get weight 0). A fully masked row is a contract error.
Tensor masked_softmax_rows(const Tensor& x, const std::vector<std::uint8_t>& mask);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor sum(const Tensor& x);   // scalar
Tensor mean(const Tensor& x);  // scalar
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
/// Columns offset, offset+stride, offset+2*stride, ... (even/odd stream split).
Tensor take_cols_strided(const Tensor& x, std::size_t offset, std::size_t stride);
/// Inverse of the even/odd split: a supplies even columns, b odd columns.
Tensor interleave_cols(const Tensor& a, const Tensor& b);

// ---- backward ------------------------------------------------------------

/// Reverse-mode pass from a scalar loss. Gradients accumulate (add into any
/// existing grad); callers zero grads between optimizer steps.
void backward(const Tensor& loss);

/// Reverse-mode pass seeded with explicit output gradients (vector-Jacobian
/// products); used by the reversible-layer recomputing backward.
void backward_seeded(std::span<const Tensor> roots,
                     std::span<const std::vector<double>> seeds);

}  // namespace aes
