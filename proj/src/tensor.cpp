#include "hgmn/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace hgmn {

namespace {

Index shape_numel(const std::vector<Index>& shape) {
    Index n = 1;
    for (Index d : shape) n *= d;
    return n;
}

std::string shape_to_str(const std::vector<Index>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

std::shared_ptr<detail::TensorImpl> make_impl(std::vector<Index> shape) {
    for (Index d : shape) {
        if (d < 0) throw DimensionError("negative dimension in shape " + shape_to_str(shape));
    }
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->value = Array::Zero(shape_numel(shape));
    impl->shape = std::move(shape);
    return impl;
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<Index> shape, bool requires_grad) {
    Tensor t;
    t.impl_ = make_impl(std::move(shape));
    t.set_requires_grad(requires_grad);
    return t;
}

Tensor Tensor::full(std::vector<Index> shape, double value, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    t.impl_->value.setConstant(value);
    return t;
}

Tensor Tensor::from_values(std::vector<Index> shape, std::span<const double> values,
                           bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    if (static_cast<Index>(values.size()) != t.numel())
        throw DimensionError("value count " + std::to_string(values.size()) +
                             " does not fill shape " + t.shape_str());
    std::copy(values.begin(), values.end(), t.impl_->value.data());
    return t;
}

Tensor Tensor::scalar(double v) {
    return from_values({1}, std::span<const double>(&v, 1));
}

Tensor Tensor::from_matrix(const MatrixRM& m, bool requires_grad) {
    Tensor t = zeros({m.rows(), m.cols()}, requires_grad);
    t.mat() = m;
    return t;
}

Index Tensor::rows() const {
    if (ndim() <= 1) return 1;
    if (ndim() == 2) return impl_->shape[0];
    // higher ranks fold leading dims into rows
    Index r = 1;
    for (std::size_t i = 0; i + 1 < impl_->shape.size(); ++i) r *= impl_->shape[i];
    return r;
}

Index Tensor::cols() const {
    if (ndim() == 0) return 1;
    return impl_->shape.back();
}

void Tensor::set_requires_grad(bool b) {
    impl_->requires_grad = b;
    if (b) {
        impl_->needs_grad = true;
        impl_->ensure_grad();  // parameters expose a zero gradient until backward runs
    }
}

Array Tensor::grad_flat() const {
    if (impl_->grad.size() == impl_->numel()) return impl_->grad;
    return Array::Zero(impl_->numel());
}

ConstMatMap Tensor::grad_mat() const {
    if (impl_->grad.size() != impl_->numel())
        throw ContractError("gradient not populated for tensor of shape " + shape_str());
    return ConstMatMap(impl_->grad.data(), rows(), cols());
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str());
    return impl_->value[0];
}

void Tensor::zero_grad() {
    if (impl_->grad.size() == impl_->numel()) impl_->grad.setZero();
}

void Tensor::check_finite(const std::string& what) const {
    if (!impl_->value.isFinite().all())
        throw NumericError("non-finite values in " + what + " " + shape_str());
}

std::string Tensor::shape_str() const { return shape_to_str(impl_->shape); }

// ---- Tape ------------------------------------------------------------------

void Tape::record(Tensor output, BackwardFn fn) {
    records_.push_back(Record{output.impl_, std::move(fn)});
}

void Tape::backward(const Tensor& root) {
    if (root.numel() != 1)
        throw ContractError("backward root must be scalar, got shape " + root.shape_str());
    if (root.impl()->producer != this)
        throw ContractError("backward root was not produced on this tape");
    root.impl()->ensure_grad();
    root.impl()->grad[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (it->output->grad.size() == it->output->numel()) {
            it->fn();
            // cleared so a later backward call re-propagates from scratch;
            // leaves, never being op outputs, keep accumulating
            it->output->grad.setZero();
        }
    }
}

Tensor make_op_output(Tape& tape, std::vector<Index> shape, bool needs_grad) {
    Tensor t;
    t.impl_ = make_impl(std::move(shape));
    t.impl_->needs_grad = needs_grad;
    t.impl_->producer = &tape;
    return t;
}

// ---- op helpers ------------------------------------------------------------

namespace {

using Impl = detail::TensorImpl;

void accumulate(Impl* target, const Array& delta) {
    if (!target->needs_grad) return;
    target->ensure_grad();
    target->grad += delta;
}

enum class Broadcast { None, Row };

// b either matches a exactly or is a trailing vector broadcast against rows.
Broadcast binary_mode(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() == b.shape()) return Broadcast::None;
    if (b.ndim() <= 2 && b.rows() == 1 && b.cols() == a.cols() && a.ndim() >= 1)
        return Broadcast::Row;
    throw DimensionError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                         b.shape_str() + " are not broadcastable");
}

Tensor unary_op(Tape& tape, const Tensor& x, const char* name,
                const std::function<double(double)>& f,
                const std::function<double(double, double)>& dfdx_from_x_y,
                bool check_output_finite) {
    Tensor y = make_op_output(tape, x.shape(), x.needs_grad());
    y.value_flat() = x.value_flat().unaryExpr(f);
    if (check_output_finite && !y.value_flat().isFinite().all())
        throw NumericError(std::string(name) + " produced non-finite values");
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [xi, yi, dfdx_from_x_y]() {
            Array local(xi->value.size());
            for (Index i = 0; i < local.size(); ++i)
                local[i] = dfdx_from_x_y(xi->value[i], yi->value[i]);
            accumulate(xi.get(), yi->grad * local);
        });
    }
    return y;
}

}  // namespace

// ---- primitive ops ---------------------------------------------------------

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.ndim() > 2 || b.ndim() > 2)
        throw DimensionError("matmul requires rank <= 2, got " + a.shape_str() + " and " +
                             b.shape_str());
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                             b.shape_str());
    const bool ng = a.needs_grad() || b.needs_grad();
    Tensor y = make_op_output(tape, {a.rows(), b.cols()}, ng);
    y.mat().noalias() = a.mat() * b.mat();
    if (ng) {
        auto ai = a.impl()->shared_from_this();
        auto bi = b.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        const Index m = a.rows(), k = a.cols(), n = b.cols();
        tape.record(y, [ai, bi, yi, m, k, n]() {
            ConstMatMap gy(yi->grad.data(), m, n);
            ConstMatMap av(ai->value.data(), m, k);
            ConstMatMap bv(bi->value.data(), k, n);
            if (ai->needs_grad) {
                ai->ensure_grad();
                MatMap(ai->grad.data(), m, k).noalias() += gy * bv.transpose();
            }
            if (bi->needs_grad) {
                bi->ensure_grad();
                MatMap(bi->grad.data(), k, n).noalias() += av.transpose() * gy;
            }
        });
    }
    return y;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    Broadcast mode = binary_mode(a, b, "add");
    const bool ng = a.needs_grad() || b.needs_grad();
    Tensor y = make_op_output(tape, a.shape(), ng);
    if (mode == Broadcast::None) {
        y.value_flat() = a.value_flat() + b.value_flat();
    } else {
        y.mat() = a.mat().rowwise() + Eigen::RowVectorXd::Map(b.value_flat().data(), b.cols());
    }
    if (ng) {
        auto ai = a.impl()->shared_from_this();
        auto bi = b.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        const Index r = a.rows(), c = a.cols();
        tape.record(y, [ai, bi, yi, mode, r, c]() {
            accumulate(ai.get(), yi->grad);
            if (!bi->needs_grad) return;
            if (mode == Broadcast::None) {
                accumulate(bi.get(), yi->grad);
            } else {
                bi->ensure_grad();
                ConstMatMap gy(yi->grad.data(), r, c);
                Eigen::RowVectorXd::Map(bi->grad.data(), c) += gy.colwise().sum();
            }
        });
    }
    return y;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    Broadcast mode = binary_mode(a, b, "mul");
    const bool ng = a.needs_grad() || b.needs_grad();
    Tensor y = make_op_output(tape, a.shape(), ng);
    if (mode == Broadcast::None) {
        y.value_flat() = a.value_flat() * b.value_flat();
    } else {
        y.mat() = a.mat().array().rowwise() *
                  Eigen::Array<double, 1, Eigen::Dynamic>::Map(b.value_flat().data(), b.cols());
    }
    if (ng) {
        auto ai = a.impl()->shared_from_this();
        auto bi = b.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        const Index r = a.rows(), c = a.cols();
        tape.record(y, [ai, bi, yi, mode, r, c]() {
            if (mode == Broadcast::None) {
                accumulate(ai.get(), yi->grad * bi->value);
                accumulate(bi.get(), yi->grad * ai->value);
            } else {
                ConstMatMap gy(yi->grad.data(), r, c);
                if (ai->needs_grad) {
                    ai->ensure_grad();
                    MatMap(ai->grad.data(), r, c).array() +=
                        gy.array().rowwise() *
                        Eigen::Array<double, 1, Eigen::Dynamic>::Map(bi->value.data(), c);
                }
                if (bi->needs_grad) {
                    bi->ensure_grad();
                    ConstMatMap av(ai->value.data(), r, c);
                    Eigen::RowVectorXd::Map(bi->grad.data(), c) +=
                        (gy.array() * av.array()).colwise().sum().matrix();
                }
            }
        });
    }
    return y;
}

Tensor exp(Tape& tape, const Tensor& x) {
    return unary_op(
        tape, x, "exp", [](double v) { return std::exp(v); },
        [](double, double y) { return y; }, /*check_output_finite=*/true);
}

Tensor tanh(Tape& tape, const Tensor& x) {
    return unary_op(
        tape, x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; }, false);
}

Tensor softplus(Tape& tape, const Tensor& x) {
    // log(1 + e^x) in overflow-free form
    return unary_op(
        tape, x, "softplus",
        [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); }, false);
}

Tensor silu(Tape& tape, const Tensor& x) {
    return unary_op(
        tape, x, "silu",
        [](double v) { return v / (1.0 + std::exp(-v)); },
        [](double v, double) {
            const double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        },
        false);
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
    return unary_op(
        tape, x, "leaky_relu",
        [slope](double v) { return v >= 0.0 ? v : slope * v; },
        [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; }, false);
}

Tensor softmax_lastdim(Tape& tape, const Tensor& x) {
    const Index c = x.cols();
    if (c == 0) throw DimensionError("softmax over empty last dimension " + x.shape_str());
    const Index r = x.numel() / c;
    Tensor y = make_op_output(tape, x.shape(), x.needs_grad());
    ConstMatMap xv(x.value_flat().data(), r, c);
    MatMap yv(y.value_flat().data(), r, c);
    for (Index i = 0; i < r; ++i) {
        const double m = xv.row(i).maxCoeff();
        Eigen::ArrayXd e = (xv.row(i).array() - m).exp();
        yv.row(i) = (e / e.sum()).matrix();
    }
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [xi, yi, r, c]() {
            if (!xi->needs_grad) return;
            xi->ensure_grad();
            ConstMatMap gy(yi->grad.data(), r, c);
            ConstMatMap yv2(yi->value.data(), r, c);
            MatMap gx(xi->grad.data(), r, c);
            for (Index i = 0; i < r; ++i) {
                const double dot = gy.row(i).dot(yv2.row(i));
                gx.row(i).array() +=
                    yv2.row(i).array() * (gy.row(i).array() - dot);
            }
        });
    }
    return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
    Tensor y = make_op_output(tape, {1}, x.needs_grad());
    y.value_flat()[0] = x.value_flat().sum();
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [xi, yi]() {
            if (!xi->needs_grad) return;
            xi->ensure_grad();
            xi->grad += yi->grad[0];
        });
    }
    return y;
}

Tensor scale(Tape& tape, const Tensor& x, double cst) {
    Tensor y = make_op_output(tape, x.shape(), x.needs_grad());
    y.value_flat() = x.value_flat() * cst;
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [xi, yi, cst]() { accumulate(xi.get(), yi->grad * cst); });
    }
    return y;
}

Tensor transpose(Tape& tape, const Tensor& x) {
    if (x.ndim() != 2) throw DimensionError("transpose requires rank 2, got " + x.shape_str());
    const Index r = x.rows(), c = x.cols();
    Tensor y = make_op_output(tape, {c, r}, x.needs_grad());
    MatMap(y.value_flat().data(), c, r) = x.mat().transpose();
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [xi, yi, r, c]() {
            if (!xi->needs_grad) return;
            xi->ensure_grad();
            MatMap(xi->grad.data(), r, c) += ConstMatMap(yi->grad.data(), c, r).transpose();
        });
    }
    return y;
}

Tensor slice_cols(Tape& tape, const Tensor& x, Index begin, Index end) {
    if (x.ndim() != 2) throw DimensionError("slice_cols requires rank 2, got " + x.shape_str());
    if (begin < 0 || end > x.cols() || begin >= end)
        throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of range for " + x.shape_str());
    const Index r = x.rows(), w = end - begin;
    Tensor y = make_op_output(tape, {r, w}, x.needs_grad());
    MatMap(y.value_flat().data(), r, w) = x.mat().middleCols(begin, w);
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        const Index c = x.cols();
        tape.record(y, [xi, yi, r, c, w, begin]() {
            if (!xi->needs_grad) return;
            xi->ensure_grad();
            MatMap(xi->grad.data(), r, c).middleCols(begin, w) +=
                ConstMatMap(yi->grad.data(), r, w);
        });
    }
    return y;
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const Index> ids) {
    if (x.ndim() != 2) throw DimensionError("gather_rows requires rank 2, got " + x.shape_str());
    const Index r = x.rows(), c = x.cols();
    for (Index id : ids)
        if (id < 0 || id >= r)
            throw ContractError("gather_rows: row id " + std::to_string(id) +
                                " out of range for " + x.shape_str());
    const Index k = static_cast<Index>(ids.size());
    Tensor y = make_op_output(tape, {k, c}, x.needs_grad());
    MatMap yv(y.value_flat().data(), k, c);
    ConstMatMap xv(x.value_flat().data(), r, c);
    for (Index i = 0; i < k; ++i) yv.row(i) = xv.row(ids[i]);
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        std::vector<Index> id_copy(ids.begin(), ids.end());
        tape.record(y, [xi, yi, id_copy, r, c, k]() {
            if (!xi->needs_grad) return;
            xi->ensure_grad();
            ConstMatMap gy(yi->grad.data(), k, c);
            MatMap gx(xi->grad.data(), r, c);
            for (Index i = 0; i < k; ++i) gx.row(id_copy[i]) += gy.row(i);
        });
    }
    return y;
}

Tensor scatter_rows(Tape& tape, const Tensor& x, std::span<const Index> ids, Index num_rows) {
    if (x.ndim() != 2) throw DimensionError("scatter_rows requires rank 2, got " + x.shape_str());
    if (static_cast<Index>(ids.size()) != x.rows())
        throw ContractError("scatter_rows: " + std::to_string(ids.size()) + " ids for " +
                            std::to_string(x.rows()) + " rows");
    const Index c = x.cols(), k = x.rows();
    Tensor y = make_op_output(tape, {num_rows, c}, x.needs_grad());
    MatMap yv(y.value_flat().data(), num_rows, c);
    ConstMatMap xv(x.value_flat().data(), k, c);
    std::vector<bool> seen(static_cast<std::size_t>(num_rows), false);
    for (Index i = 0; i < k; ++i) {
        const Index id = ids[i];
        if (id < 0 || id >= num_rows)
            throw ContractError("scatter_rows: row id " + std::to_string(id) + " out of range");
        if (seen[static_cast<std::size_t>(id)])
            throw ContractError("scatter_rows: duplicate row id " + std::to_string(id));
        seen[static_cast<std::size_t>(id)] = true;
        yv.row(id) = xv.row(i);
    }
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        std::vector<Index> id_copy(ids.begin(), ids.end());
        tape.record(y, [xi, yi, id_copy, num_rows, c, k]() {
            if (!xi->needs_grad) return;
            xi->ensure_grad();
            ConstMatMap gy(yi->grad.data(), num_rows, c);
            MatMap gx(xi->grad.data(), k, c);
            for (Index i = 0; i < k; ++i) gx.row(i) += gy.row(id_copy[i]);
        });
    }
    return y;
}

Tensor stack_rows(Tape& tape, std::span<const Tensor> rows) {
    if (rows.empty()) throw ContractError("stack_rows on empty list");
    const Index c = rows.front().numel();
    bool ng = false;
    for (const Tensor& t : rows) {
        if (t.numel() != c)
            throw DimensionError("stack_rows: inconsistent row width " + t.shape_str());
        ng = ng || t.needs_grad();
    }
    const Index n = static_cast<Index>(rows.size());
    Tensor y = make_op_output(tape, {n, c}, ng);
    MatMap yv(y.value_flat().data(), n, c);
    for (Index i = 0; i < n; ++i)
        yv.row(i) = Eigen::RowVectorXd::Map(rows[i].value_flat().data(), c);
    if (ng) {
        std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
        inputs.reserve(rows.size());
        for (const Tensor& t : rows) inputs.push_back(t.impl()->shared_from_this());
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [inputs, yi, n, c]() {
            ConstMatMap gy(yi->grad.data(), n, c);
            for (Index i = 0; i < n; ++i) {
                auto& xi = inputs[static_cast<std::size_t>(i)];
                if (!xi->needs_grad) continue;
                xi->ensure_grad();
                Eigen::RowVectorXd::Map(xi->grad.data(), c) += gy.row(i);
            }
        });
    }
    return y;
}

Tensor reindex(Tape& tape, const Tensor& x, std::vector<Index> shape,
               std::vector<Index> indices) {
    Index n = 1;
    for (Index d : shape) n *= d;
    if (static_cast<Index>(indices.size()) != n)
        throw DimensionError("reindex: index count does not match target shape");
    const Index src_n = x.numel();
    for (Index i : indices)
        if (i < -1 || i >= src_n) throw ContractError("reindex: source index out of range");
    Tensor y = make_op_output(tape, std::move(shape), x.needs_grad());
    for (Index j = 0; j < n; ++j)
        y.value_flat()[j] = indices[j] >= 0 ? x.value_flat()[indices[j]] : 0.0;
    if (y.needs_grad()) {
        auto xi = x.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [xi, yi, indices = std::move(indices), n]() {
            if (!xi->needs_grad) return;
            xi->ensure_grad();
            for (Index j = 0; j < n; ++j)
                if (indices[j] >= 0) xi->grad[indices[j]] += yi->grad[j];
        });
    }
    return y;
}

Tensor cross_entropy_mean(Tape& tape, const Tensor& logits, std::span<const int> labels,
                          std::span<const Index> rows) {
    if (logits.ndim() != 2)
        throw DimensionError("cross_entropy_mean requires rank-2 logits, got " +
                             logits.shape_str());
    if (rows.empty()) throw ContractError("cross_entropy_mean: empty row mask");
    const Index n = logits.rows(), c = logits.cols();
    if (static_cast<Index>(labels.size()) != n)
        throw ContractError("cross_entropy_mean: label count does not match logit rows");
    const Index m = static_cast<Index>(rows.size());
    ConstMatMap lv(logits.value_flat().data(), n, c);
    double loss = 0.0;
    for (Index r : rows) {
        if (r < 0 || r >= n) throw ContractError("cross_entropy_mean: row out of range");
        const int lab = labels[static_cast<std::size_t>(r)];
        if (lab < 0 || lab >= c)
            throw ContractError("cross_entropy_mean: node " + std::to_string(r) +
                                " has no valid label");
        const double mx = lv.row(r).maxCoeff();
        const double lse = mx + std::log((lv.row(r).array() - mx).exp().sum());
        loss += lse - lv(r, lab);
    }
    Tensor y = make_op_output(tape, {1}, logits.needs_grad());
    y.value_flat()[0] = loss / static_cast<double>(m);
    if (y.needs_grad()) {
        auto li = logits.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        std::vector<Index> row_copy(rows.begin(), rows.end());
        std::vector<int> lab_copy(labels.begin(), labels.end());
        tape.record(y, [li, yi, row_copy, lab_copy, n, c, m]() {
            if (!li->needs_grad) return;
            li->ensure_grad();
            const double g = yi->grad[0] / static_cast<double>(m);
            ConstMatMap lv2(li->value.data(), n, c);
            MatMap gl(li->grad.data(), n, c);
            for (Index r : row_copy) {
                const double mx = lv2.row(r).maxCoeff();
                Eigen::ArrayXd e = (lv2.row(r).array() - mx).exp();
                Eigen::ArrayXd p = e / e.sum();
                p[lab_copy[static_cast<std::size_t>(r)]] -= 1.0;
                gl.row(r) += (g * p).matrix().transpose();
            }
        });
    }
    return y;
}

std::string fnv1a64_hex(std::string_view bytes) {
    static const char* digits = "0123456789abcdef";
    std::uint64_t h = fnv1a64(bytes);
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

}  // namespace hgmn
