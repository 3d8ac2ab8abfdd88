#include "hgmn/ssm.hpp"

#include <unsupported/Eigen/MatrixFunctions>

namespace hgmn {

namespace {

using ArrRM = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstArrMap = Eigen::Map<const ArrRM>;
using ArrMap = Eigen::Map<ArrRM>;

}  // namespace

LtiParams LtiParams::diagonal(Eigen::VectorXd a, Eigen::VectorXd b, Eigen::RowVectorXd c,
                              double dt) {
    if (a.size() != b.size() || a.size() != c.size())
        throw DimensionError("lti: inconsistent state dimensions");
    LtiParams p;
    p.a_diag = std::move(a);
    p.b = std::move(b);
    p.c = std::move(c);
    p.dt = dt;
    return p;
}

LtiParams LtiParams::dense(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::RowVectorXd c,
                           double dt) {
    if (a.rows() != a.cols() || a.rows() != b.size() || a.rows() != c.size())
        throw DimensionError("lti: inconsistent state dimensions");
    LtiParams p;
    p.a_dense = std::move(a);
    p.b = std::move(b);
    p.c = std::move(c);
    p.dt = dt;
    return p;
}

double zoh_phi(double x) {
    if (std::abs(x) < 1e-12) return 1.0;  // analytic limit of (e^x - 1)/x
    return std::expm1(x) / x;
}

double zoh_phi_deriv(double x) {
    if (std::abs(x) < 1e-2) {
        // 1/2 + x/3 + x^2/8 + x^3/30 + x^4/144, next term O(x^5/840)
        return 0.5 + x * (1.0 / 3.0 + x * (0.125 + x * (1.0 / 30.0 + x / 144.0)));
    }
    return (std::exp(x) * (x - 1.0) + 1.0) / (x * x);
}

DiscreteParams zoh_discretize(const LtiParams& p) {
    if (!(p.dt > 0.0)) throw ContractError("zoh_discretize: step size must be positive");
    DiscreteParams d;
    if (p.is_diagonal()) {
        const Eigen::VectorXd& a = *p.a_diag;
        Eigen::VectorXd abar(a.size()), bbar(a.size());
        for (Index i = 0; i < a.size(); ++i) {
            const double x = p.dt * a[i];
            abar[i] = std::exp(x);
            bbar[i] = p.dt * p.b[i] * zoh_phi(x);
        }
        d.a_bar_diag = std::move(abar);
        d.b_bar = std::move(bbar);
    } else {
        // Augmented matrix [[A, B], [0, 0]]: its exponential at dt carries
        // exp(dt*A) in the top-left block and the held input map top-right,
        // with no special casing for singular dt*A.
        const Index n = p.state_size();
        Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + 1, n + 1);
        aug.topLeftCorner(n, n) = p.a_dense;
        aug.topRightCorner(n, 1) = p.b;
        Eigen::MatrixXd e = (p.dt * aug).exp();
        d.a_bar_dense = e.topLeftCorner(n, n);
        d.b_bar = e.topRightCorner(n, 1);
    }
    const bool finite = d.is_diagonal()
                            ? (d.a_bar_diag->allFinite() && d.b_bar.allFinite())
                            : (d.a_bar_dense.allFinite() && d.b_bar.allFinite());
    if (!finite) throw NumericError("zoh_discretize produced non-finite parameters");
    return d;
}

Eigen::VectorXd lti_scan(const DiscreteParams& d, const Eigen::RowVectorXd& c,
                         const Eigen::VectorXd& x, const Eigen::VectorXd& h0) {
    const Index n = d.state_size();
    if (c.size() != n) throw DimensionError("lti_scan: output map size mismatch");
    Eigen::VectorXd h = h0.size() == 0 ? Eigen::VectorXd::Zero(n) : h0;
    if (h.size() != n) throw DimensionError("lti_scan: initial state size mismatch");
    Eigen::VectorXd y(x.size());
    for (Index t = 0; t < x.size(); ++t) {
        if (d.is_diagonal())
            h = d.a_bar_diag->cwiseProduct(h) + d.b_bar * x[t];
        else
            h = d.a_bar_dense * h + d.b_bar * x[t];
        y[t] = c * h;
    }
    return y;
}

Eigen::VectorXd lti_conv_kernel(const DiscreteParams& d, const Eigen::RowVectorXd& c, Index m) {
    if (m < 1) throw ContractError("lti_conv_kernel: length must be >= 1");
    if (c.size() != d.state_size()) throw DimensionError("lti_conv_kernel: output map mismatch");
    Eigen::VectorXd k(m);
    Eigen::VectorXd s = d.b_bar;
    k[0] = c * s;
    for (Index j = 1; j < m; ++j) {
        s = d.is_diagonal() ? Eigen::VectorXd(d.a_bar_diag->cwiseProduct(s))
                            : Eigen::VectorXd(d.a_bar_dense * s);
        k[j] = c * s;
    }
    return k;
}

Eigen::VectorXd lti_conv_apply(const Eigen::VectorXd& kernel, const Eigen::VectorXd& x) {
    if (kernel.size() != x.size())
        throw ContractError("lti_conv_apply: kernel and input lengths differ");
    Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
    for (Index t = 0; t < x.size(); ++t)
        for (Index j = 0; j <= t; ++j) y[t] += kernel[j] * x[t - j];
    return y;
}

Tensor causal_conv1d(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias) {
    const Index t_len = x.rows(), c_len = x.cols();
    const Index k_len = weight.cols();
    if (weight.rows() != c_len || bias.numel() != c_len)
        throw DimensionError("causal_conv1d: kernel/bias do not match " + x.shape_str());
    const bool ng = x.needs_grad() || weight.needs_grad() || bias.needs_grad();
    Tensor y = make_op_output(tape, {t_len, c_len}, ng);
    {
        ConstArrMap xv(x.value_flat().data(), t_len, c_len);
        ConstArrMap wv(weight.value_flat().data(), c_len, k_len);
        ArrMap yv(y.value_flat().data(), t_len, c_len);
        for (Index t = 0; t < t_len; ++t) {
            yv.row(t) = Eigen::Map<const Eigen::ArrayXd>(bias.value_flat().data(), c_len)
                            .transpose();
            for (Index j = 0; j < k_len && j <= t; ++j)
                yv.row(t) += xv.row(t - j) * wv.col(j).transpose();
        }
    }
    if (ng) {
        auto xi = x.impl()->shared_from_this();
        auto wi = weight.impl()->shared_from_this();
        auto bi = bias.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [xi, wi, bi, yi, t_len, c_len, k_len]() {
            ConstArrMap gy(yi->grad.data(), t_len, c_len);
            ConstArrMap xv(xi->value.data(), t_len, c_len);
            ConstArrMap wv(wi->value.data(), c_len, k_len);
            if (xi->needs_grad) {
                xi->ensure_grad();
                ArrMap gx(xi->grad.data(), t_len, c_len);
                for (Index t = 0; t < t_len; ++t)
                    for (Index j = 0; j < k_len && j <= t; ++j)
                        gx.row(t - j) += gy.row(t) * wv.col(j).transpose();
            }
            if (wi->needs_grad) {
                wi->ensure_grad();
                ArrMap gw(wi->grad.data(), c_len, k_len);
                for (Index t = 0; t < t_len; ++t)
                    for (Index j = 0; j < k_len && j <= t; ++j)
                        gw.col(j) += (gy.row(t) * xv.row(t - j)).transpose();
            }
            if (bi->needs_grad) {
                bi->ensure_grad();
                Eigen::Map<Eigen::ArrayXd>(bi->grad.data(), c_len) +=
                    gy.colwise().sum().transpose();
            }
        });
    }
    return y;
}

Tensor ssm_recurrence(Tape& tape, const Tensor& a, const Tensor& delta, const Tensor& b_seq,
                      const Tensor& c_seq, const Tensor& v, bool zoh_exact) {
    const Index t_len = delta.rows(), chans = delta.cols();
    const Index n = a.cols();
    if (t_len < 1) throw ContractError("ssm_recurrence: sequence length must be >= 1");
    if (a.rows() != chans || b_seq.rows() != t_len || b_seq.cols() != n ||
        c_seq.rows() != t_len || c_seq.cols() != n || v.rows() != t_len || v.cols() != chans)
        throw DimensionError("ssm_recurrence: inconsistent operand shapes");
    const bool ng = a.needs_grad() || delta.needs_grad() || b_seq.needs_grad() ||
                    c_seq.needs_grad() || v.needs_grad();
    Tensor y = make_op_output(tape, {t_len, chans}, ng);

    ConstArrMap a_m(a.value_flat().data(), chans, n);
    ConstArrMap d_m(delta.value_flat().data(), t_len, chans);
    ConstArrMap b_m(b_seq.value_flat().data(), t_len, n);
    ConstArrMap c_m(c_seq.value_flat().data(), t_len, n);
    ConstArrMap v_m(v.value_flat().data(), t_len, chans);
    ArrMap y_m(y.value_flat().data(), t_len, chans);

    // states h_0..h_T are cached for the backward sweep; everything else is
    // recomputed there from the inputs
    auto states = std::make_shared<std::vector<ArrRM>>();
    states->reserve(static_cast<std::size_t>(t_len) + 1);
    states->push_back(ArrRM::Zero(chans, n));
    ArrRM h = ArrRM::Zero(chans, n);
    for (Index t = 0; t < t_len; ++t) {
        const Eigen::ArrayXd d_c = d_m.row(t).transpose();
        const Eigen::ArrayXd b_n = b_m.row(t).transpose();
        const Eigen::ArrayXd v_c = v_m.row(t).transpose();
        ArrRM da = a_m.colwise() * d_c;
        ArrRM abar = da.exp();
        ArrRM bbar = (d_c.matrix() * b_n.matrix().transpose()).array();
        if (zoh_exact) bbar *= da.unaryExpr(&zoh_phi);
        h = abar * h + (bbar.colwise() * v_c);
        states->push_back(h);
        Eigen::VectorXd y_t = h.matrix() * c_m.row(t).matrix().transpose();
        if (!y_t.allFinite() || !h.isFinite().all()) {
            Index bad = 0;
            for (Index c = 0; c < chans; ++c)
                if (!std::isfinite(y_t[c]) || !h.row(c).isFinite().all()) {
                    bad = c;
                    break;
                }
            throw NumericError("ssm_recurrence: non-finite state at timestep " +
                               std::to_string(t) + ", channel " + std::to_string(bad));
        }
        y_m.row(t) = y_t.transpose().array();
    }

    if (ng) {
        auto ai = a.impl()->shared_from_this();
        auto di = delta.impl()->shared_from_this();
        auto bi = b_seq.impl()->shared_from_this();
        auto ci = c_seq.impl()->shared_from_this();
        auto vi = v.impl()->shared_from_this();
        auto yi = y.impl()->shared_from_this();
        tape.record(y, [ai, di, bi, ci, vi, yi, states, zoh_exact, t_len, chans, n]() {
            ConstArrMap a_m2(ai->value.data(), chans, n);
            ConstArrMap d_m2(di->value.data(), t_len, chans);
            ConstArrMap b_m2(bi->value.data(), t_len, n);
            ConstArrMap c_m2(ci->value.data(), t_len, n);
            ConstArrMap v_m2(vi->value.data(), t_len, chans);
            ConstArrMap gy(yi->grad.data(), t_len, chans);

            ArrRM ga = ArrRM::Zero(chans, n);
            ArrRM gdelta = ArrRM::Zero(t_len, chans);
            ArrRM gb = ArrRM::Zero(t_len, n);
            ArrRM gc = ArrRM::Zero(t_len, n);
            ArrRM gv = ArrRM::Zero(t_len, chans);

            ArrRM gh = ArrRM::Zero(chans, n);
            for (Index t = t_len - 1; t >= 0; --t) {
                const Eigen::ArrayXd d_c = d_m2.row(t).transpose();
                const Eigen::ArrayXd b_n = b_m2.row(t).transpose();
                const Eigen::ArrayXd v_c = v_m2.row(t).transpose();
                const Eigen::ArrayXd gy_c = gy.row(t).transpose();
                ArrRM da = a_m2.colwise() * d_c;
                ArrRM abar = da.exp();
                ArrRM w = (d_c.matrix() * b_n.matrix().transpose()).array();
                ArrRM phi = zoh_exact ? ArrRM(da.unaryExpr(&zoh_phi))
                                      : ArrRM(ArrRM::Ones(chans, n));
                ArrRM bbar = w * phi;

                const ArrRM& h_t = (*states)[static_cast<std::size_t>(t) + 1];
                const ArrRM& h_prev = (*states)[static_cast<std::size_t>(t)];

                // y_t[c] = <h_t[c,:], C_t>
                gh += (gy_c.matrix() * c_m2.row(t).matrix()).array();
                gc.row(t) += (h_t.matrix().transpose() * gy_c.matrix()).transpose().array();

                // h_t = abar (.) h_prev + bbar (.) v_c
                ArrRM gabar = gh * h_prev;
                ArrRM gbbar = gh.colwise() * v_c;
                gv.row(t) += (gh * bbar).rowwise().sum().transpose();
                ArrRM gh_prev = gh * abar;

                // bbar = (delta (x) B) (.) phi(da)
                gdelta.row(t) +=
                    ((gbbar * phi).rowwise() * b_n.transpose()).rowwise().sum().transpose();
                gb.row(t) += ((gbbar * phi).colwise() * d_c).colwise().sum();
                ArrRM gda = gabar * abar;  // d exp
                if (zoh_exact) gda += gbbar * w * da.unaryExpr(&zoh_phi_deriv);

                // da = delta (x over cols) A
                gdelta.row(t) += (gda * a_m2).rowwise().sum().transpose();
                ga += gda.colwise() * d_c;

                gh = gh_prev;
            }

            auto add_grad = [](detail::TensorImpl* impl, const ArrRM& g) {
                if (!impl->needs_grad) return;
                impl->ensure_grad();
                ArrMap(impl->grad.data(), g.rows(), g.cols()) += g;
            };
            add_grad(ai.get(), ga);
            add_grad(di.get(), gdelta);
            add_grad(bi.get(), gb);
            add_grad(ci.get(), gc);
            add_grad(vi.get(), gv);
        });
    }
    return y;
}

SelectiveSsmBlock SelectiveSsmBlock::create(Index dim, Index state_size, Index expansion,
                                            Index conv_width, bool zoh_exact, Rng& rng) {
    SelectiveSsmBlock blk;
    blk.dim = dim;
    blk.inner_dim = dim * expansion;
    blk.state_size = state_size;
    blk.conv_width = conv_width;
    blk.zoh_exact = zoh_exact;
    const Index inner = blk.inner_dim;

    auto uniform_init = [&rng](std::vector<Index> shape, double fan_in) {
        Tensor t = Tensor::zeros(std::move(shape), true);
        const double bound = 1.0 / std::sqrt(fan_in);
        for (Index i = 0; i < t.numel(); ++i) t.value_flat()[i] = rng.uniform(-bound, bound);
        return t;
    };

    blk.in_proj_w = uniform_init({dim, 2 * inner}, static_cast<double>(dim));
    blk.in_proj_b = uniform_init({2 * inner}, static_cast<double>(dim));
    blk.conv_w = uniform_init({inner, conv_width}, static_cast<double>(conv_width));
    blk.conv_b = uniform_init({inner}, static_cast<double>(conv_width));

    // state decay rates -1..-N per channel
    blk.a_log = Tensor::zeros({inner, state_size}, true);
    for (Index c = 0; c < inner; ++c)
        for (Index s = 0; s < state_size; ++s)
            blk.a_log.value_flat()[c * state_size + s] = std::log(static_cast<double>(s + 1));

    blk.delta_w = uniform_init({inner, inner}, static_cast<double>(inner));
    // bias placed so softplus(delta_b) lands in [1e-3, 1e-1]
    blk.delta_b = Tensor::zeros({inner}, true);
    for (Index c = 0; c < inner; ++c) {
        const double target = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        blk.delta_b.value_flat()[c] = std::log(std::expm1(target));
    }

    blk.b_w = uniform_init({inner, state_size}, static_cast<double>(inner));
    blk.c_w = uniform_init({inner, state_size}, static_cast<double>(inner));
    blk.skip_d = Tensor::full({inner}, 1.0, true);
    blk.out_proj_w = uniform_init({inner, dim}, static_cast<double>(inner));
    return blk;
}

SelectiveSsmBlock SelectiveSsmBlock::zeroed(Index dim, Index state_size, Index expansion,
                                            Index conv_width, bool zoh_exact) {
    SelectiveSsmBlock blk;
    blk.dim = dim;
    blk.inner_dim = dim * expansion;
    blk.state_size = state_size;
    blk.conv_width = conv_width;
    blk.zoh_exact = zoh_exact;
    const Index inner = blk.inner_dim;
    blk.in_proj_w = Tensor::zeros({dim, 2 * inner}, true);
    blk.in_proj_b = Tensor::zeros({2 * inner}, true);
    blk.conv_w = Tensor::zeros({inner, conv_width}, true);
    blk.conv_b = Tensor::zeros({inner}, true);
    blk.a_log = Tensor::zeros({inner, state_size}, true);
    blk.delta_w = Tensor::zeros({inner, inner}, true);
    blk.delta_b = Tensor::zeros({inner}, true);
    blk.b_w = Tensor::zeros({inner, state_size}, true);
    blk.c_w = Tensor::zeros({inner, state_size}, true);
    blk.skip_d = Tensor::zeros({inner}, true);
    blk.out_proj_w = Tensor::zeros({inner, dim}, true);
    return blk;
}

std::vector<Tensor> SelectiveSsmBlock::parameters() const {
    return {in_proj_w, in_proj_b, conv_w, conv_b, a_log, delta_w,
            delta_b,   b_w,       c_w,    skip_d, out_proj_w};
}

std::vector<std::string> SelectiveSsmBlock::parameter_names() const {
    return {"in_proj_w", "in_proj_b", "conv_w", "conv_b", "a_log", "delta_w",
            "delta_b",   "b_w",       "c_w",    "skip_d", "out_proj_w"};
}

Tensor selective_scan(Tape& tape, const SelectiveSsmBlock& block, const Tensor& x) {
    if (x.ndim() != 2 || x.cols() != block.dim)
        throw DimensionError("selective_scan: input " + x.shape_str() + " does not match width " +
                             std::to_string(block.dim));
    if (x.rows() < 1) throw ContractError("selective_scan: sequence length must be >= 1");
    const Index inner = block.inner_dim;

    Tensor u = add(tape, matmul(tape, x, block.in_proj_w), block.in_proj_b);
    Tensor val = slice_cols(tape, u, 0, inner);
    Tensor gate = slice_cols(tape, u, inner, 2 * inner);

    Tensor v = silu(tape, causal_conv1d(tape, val, block.conv_w, block.conv_b));
    Tensor delta = softplus(tape, add(tape, matmul(tape, v, block.delta_w), block.delta_b));
    Tensor b_seq = matmul(tape, v, block.b_w);
    Tensor c_seq = matmul(tape, v, block.c_w);
    Tensor a = scale(tape, exp(tape, block.a_log), -1.0);

    Tensor y = ssm_recurrence(tape, a, delta, b_seq, c_seq, v, block.zoh_exact);
    y = add(tape, y, mul(tape, v, block.skip_d));
    Tensor gated = mul(tape, y, silu(tape, gate));
    Tensor out = matmul(tape, gated, block.out_proj_w);
    return add(tape, x, out);
}

}  // namespace hgmn
