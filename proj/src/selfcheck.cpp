#include "hgmn/selfcheck.hpp"

#include <algorithm>

#include "hgmn/ssm.hpp"

namespace hgmn {

SelfTestResult check_scan_duality() {
    SelfTestResult r{"scan_duality", 0.0, 1e-9, false};
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(9000 + trial);
        const Index n = 1 + static_cast<Index>(rng.below(8));
        const Index len = 1 + static_cast<Index>(rng.below(256));
        Eigen::VectorXd a(n), b(n);
        Eigen::RowVectorXd c(n);
        for (Index i = 0; i < n; ++i) {
            a[i] = -std::exp(rng.uniform(-2.0, 1.5));  // stable
            b[i] = rng.uniform(-2.0, 2.0);
            c[i] = rng.uniform(-2.0, 2.0);
        }
        const double dt = std::exp(rng.uniform(std::log(1e-3), 0.0));
        Eigen::VectorXd x(len);
        for (Index t = 0; t < len; ++t) x[t] = rng.uniform(-2.0, 2.0);

        const DiscreteParams d = zoh_discretize(LtiParams::diagonal(a, b, c, dt));
        const Eigen::VectorXd via_scan = lti_scan(d, c, x);
        const Eigen::VectorXd via_conv = lti_conv_apply(lti_conv_kernel(d, c, len), x);
        r.max_err = std::max(r.max_err, (via_scan - via_conv).cwiseAbs().maxCoeff());
    }
    r.pass = r.max_err <= r.tolerance;
    return r;
}

std::vector<SelfTestResult> check_zoh_cases() {
    std::vector<SelfTestResult> out;
    {
        // A = -1, dt = ln 2: both hold factors are exactly one half
        SelfTestResult r{"zoh_scalar_half", 0.0, 1e-12, false};
        const double b0 = 1.7;
        const DiscreteParams d = zoh_discretize(LtiParams::diagonal(
            Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, b0),
            Eigen::RowVectorXd::Constant(1, 1.0), std::log(2.0)));
        r.max_err = std::max(std::abs((*d.a_bar_diag)[0] - 0.5),
                             std::abs(d.b_bar[0] - 0.5 * b0));
        r.pass = r.max_err <= r.tolerance;
        out.push_back(r);
    }
    {
        // dt = 1e-9: Abar -> I within 1e-6, Bbar -> dt*B within 1e-12
        SelfTestResult ra{"zoh_limit_abar", 0.0, 1e-6, false};
        SelfTestResult rb{"zoh_limit_bbar", 0.0, 1e-12, false};
        const double dt = 1e-9;
        Rng rng(41);
        Eigen::VectorXd a(6), b(6);
        Eigen::RowVectorXd c(6);
        for (Index i = 0; i < 6; ++i) {
            a[i] = -std::exp(rng.uniform(-1.0, 1.5));
            b[i] = rng.uniform(-2.0, 2.0);
            c[i] = 1.0;
        }
        const DiscreteParams d = zoh_discretize(LtiParams::diagonal(a, b, c, dt));
        ra.max_err = (d.a_bar_diag->array() - 1.0).abs().maxCoeff();
        rb.max_err = (d.b_bar - dt * b).cwiseAbs().maxCoeff();
        ra.pass = ra.max_err <= ra.tolerance;
        rb.pass = rb.max_err <= rb.tolerance;
        out.push_back(ra);
        out.push_back(rb);
    }
    {
        // A -> 0 limit branch against the series dt*B*(1 + x/2 + x^2/6)
        SelfTestResult r{"zoh_zero_rate_branch", 0.0, 1e-10, false};
        const double dt = 0.1, b0 = 3.0;
        for (double a0 : {0.0, 1e-13, -1e-13, 1e-9, -1e-9}) {
            const DiscreteParams d = zoh_discretize(LtiParams::diagonal(
                Eigen::VectorXd::Constant(1, a0), Eigen::VectorXd::Constant(1, b0),
                Eigen::RowVectorXd::Constant(1, 1.0), dt));
            const double x = dt * a0;
            const double series = dt * b0 * (1.0 + x / 2.0 + x * x / 6.0);
            r.max_err = std::max(r.max_err, std::abs(d.b_bar[0] - series));
        }
        r.pass = r.max_err <= r.tolerance;
        out.push_back(r);
    }
    return out;
}

SelfTestResult check_lti_reduction() {
    SelfTestResult r{"selective_lti_reduction", 0.0, 1e-10, false};
    const Index len = 64, chans = 5, n = 4;
    Rng rng(97);
    Tensor a = Tensor::zeros({chans, n});
    for (Index i = 0; i < a.numel(); ++i) a.value_flat()[i] = -std::exp(rng.uniform(-1.0, 1.0));
    const double dt = 0.05;
    Eigen::VectorXd b0(n), c0(n);
    for (Index i = 0; i < n; ++i) {
        b0[i] = rng.uniform(-1.0, 1.0);
        c0[i] = rng.uniform(-1.0, 1.0);
    }
    Tensor delta = Tensor::full({len, chans}, dt);
    Tensor b_seq = Tensor::zeros({len, n});
    Tensor c_seq = Tensor::zeros({len, n});
    for (Index t = 0; t < len; ++t)
        for (Index i = 0; i < n; ++i) {
            b_seq.value_flat()[t * n + i] = b0[i];
            c_seq.value_flat()[t * n + i] = c0[i];
        }
    Tensor v = Tensor::zeros({len, chans});
    for (Index i = 0; i < v.numel(); ++i) v.value_flat()[i] = rng.uniform(-1.0, 1.0);

    Tape tape;
    Tensor y = ssm_recurrence(tape, a, delta, b_seq, c_seq, v, /*zoh_exact=*/true);
    tape.clear();

    for (Index ch = 0; ch < chans; ++ch) {
        Eigen::VectorXd a_ch(n), x_ch(len);
        for (Index i = 0; i < n; ++i) a_ch[i] = a.value_flat()[ch * n + i];
        for (Index t = 0; t < len; ++t) x_ch[t] = v.value_flat()[t * chans + ch];
        const DiscreteParams d =
            zoh_discretize(LtiParams::diagonal(a_ch, b0, c0.transpose(), dt));
        Eigen::VectorXd ref = lti_scan(d, c0.transpose(), x_ch);
        for (Index t = 0; t < len; ++t)
            r.max_err =
                std::max(r.max_err, std::abs(ref[t] - y.value_flat()[t * chans + ch]));
    }
    r.pass = r.max_err <= r.tolerance;
    return r;
}

std::vector<SelfTestResult> run_kernel_selftests() {
    std::vector<SelfTestResult> all;
    all.push_back(check_scan_duality());
    for (auto& r : check_zoh_cases()) all.push_back(r);
    all.push_back(check_lti_reduction());
    return all;
}

}  // namespace hgmn
