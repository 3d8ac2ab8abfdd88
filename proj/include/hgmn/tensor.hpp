#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hgmn/common.hpp"

namespace hgmn {

using Index = Eigen::Index;
using Array = Eigen::ArrayXd;
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;

class Tape;

namespace detail {

struct TensorImpl : std::enable_shared_from_this<TensorImpl> {
    std::vector<Index> shape;
    Array value;  // row-major flattened
    Array grad;   // empty until first accumulation
    bool requires_grad = false;
    bool needs_grad = false;      // requires_grad, or downstream of a tensor that does
    const Tape* producer = nullptr;  // tape that recorded this tensor as an op output

    Index numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad = Array::Zero(value.size());
    }
};

}  // namespace detail

/// Dense f64 tensor participating in reverse-mode differentiation.
/// Copies share storage; values are treated as immutable once an op has
/// consumed them (the tape caches references, not snapshots).
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<Index> shape, bool requires_grad = false);
    static Tensor full(std::vector<Index> shape, double value, bool requires_grad = false);
    static Tensor from_values(std::vector<Index> shape, std::span<const double> values,
                              bool requires_grad = false);
    static Tensor scalar(double v);
    static Tensor from_matrix(const MatrixRM& m, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<Index>& shape() const { return impl_->shape; }
    Index numel() const { return impl_->numel(); }
    Index ndim() const { return static_cast<Index>(impl_->shape.size()); }
    /// 2-d view helpers; rank-1 tensors read as a single row.
    Index rows() const;
    Index cols() const;

    bool requires_grad() const { return impl_->requires_grad; }
    bool needs_grad() const { return impl_->needs_grad; }
    void set_requires_grad(bool b);

    const Array& value_flat() const { return impl_->value; }
    Array& value_flat() { return impl_->value; }
    bool has_grad() const { return impl_->grad.size() == impl_->numel() && impl_->numel() > 0; }
    /// Gradient buffer; zeros if backward never reached this tensor.
    Array grad_flat() const;

    ConstMatMap mat() const { return ConstMatMap(impl_->value.data(), rows(), cols()); }
    MatMap mat() { return MatMap(impl_->value.data(), rows(), cols()); }
    ConstMatMap grad_mat() const;

    double item() const;

    void zero_grad();
    void check_finite(const std::string& what) const;

    std::string shape_str() const;

    bool same_impl(const Tensor& other) const { return impl_ == other.impl_; }
    detail::TensorImpl* impl() const { return impl_.get(); }

private:
    friend class Tape;
    friend Tensor make_op_output(Tape&, std::vector<Index>, bool);
    std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of the primitive ops of one forward pass. Ops append in
/// execution order, so the record is already topologically sorted; backward
/// walks it once, in reverse. An op output's adjoint buffer is cleared as
/// soon as its producing record has propagated, which makes repeated
/// backward calls accumulate only into leaf gradients.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    void record(Tensor output, BackwardFn fn);
    void backward(const Tensor& root);
    std::size_t num_records() const { return records_.size(); }
    void clear() { records_.clear(); }

private:
    struct Record {
        std::shared_ptr<detail::TensorImpl> output;
        BackwardFn fn;
    };
    std::vector<Record> records_;
};

/// Allocates an op-output tensor bound to `tape`. Internal to op
/// implementations (tensor.cpp, ssm.cpp, model.cpp).
Tensor make_op_output(Tape& tape, std::vector<Index> shape, bool needs_grad);

// ---- primitive ops ---------------------------------------------------------
// Binary ops accept identical shapes or a trailing row vector broadcast
// against the rows of a rank-2 operand. Anything else is a DimensionError.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor exp(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor softplus(Tape& tape, const Tensor& x);
Tensor silu(Tape& tape, const Tensor& x);
Tensor leaky_relu(Tape& tape, const Tensor& x, double slope = 0.01);
Tensor softmax_lastdim(Tape& tape, const Tensor& x);
Tensor sum(Tape& tape, const Tensor& x);
Tensor scale(Tape& tape, const Tensor& x, double c);
Tensor transpose(Tape& tape, const Tensor& x);
Tensor slice_cols(Tape& tape, const Tensor& x, Index begin, Index end);
Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const Index> ids);
Tensor scatter_rows(Tape& tape, const Tensor& x, std::span<const Index> ids, Index num_rows);
Tensor stack_rows(Tape& tape, std::span<const Tensor> rows);
/// General reshuffle: out.flat[j] = x.flat[indices[j]], with -1 meaning 0.
Tensor reindex(Tape& tape, const Tensor& x, std::vector<Index> shape,
               std::vector<Index> indices);
/// Mean cross-entropy over the given rows with integer labels;
/// log-softmax is computed with max subtraction.
Tensor cross_entropy_mean(Tape& tape, const Tensor& logits, std::span<const int> labels,
                          std::span<const Index> rows);

}  // namespace hgmn
