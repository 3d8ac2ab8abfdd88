#pragma once

#include <Eigen/Dense>

#include <optional>

#include "hgmn/common.hpp"
#include "hgmn/tensor.hpp"

namespace hgmn {

/// Continuous-time linear system h' = A h + B x, y = C h, together with a
/// positive step size used to discretize it. A may be stored densely or as
/// a diagonal.
struct LtiParams {
    std::optional<Eigen::VectorXd> a_diag;
    Eigen::MatrixXd a_dense;
    Eigen::VectorXd b;
    Eigen::RowVectorXd c;
    double dt = 0.0;

    static LtiParams diagonal(Eigen::VectorXd a, Eigen::VectorXd b, Eigen::RowVectorXd c,
                              double dt);
    static LtiParams dense(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::RowVectorXd c,
                           double dt);
    bool is_diagonal() const { return a_diag.has_value(); }
    Index state_size() const { return b.size(); }
};

struct DiscreteParams {
    std::optional<Eigen::VectorXd> a_bar_diag;
    Eigen::MatrixXd a_bar_dense;
    Eigen::VectorXd b_bar;

    bool is_diagonal() const { return a_bar_diag.has_value(); }
    Index state_size() const { return b_bar.size(); }
};

/// phi(x) = (e^x - 1) / x with the removable singularity filled in;
/// the step-response factor of zero-order-hold discretization.
double zoh_phi(double x);
/// d/dx of zoh_phi, series-evaluated near zero.
double zoh_phi_deriv(double x);

/// Zero-order hold: Abar = exp(dt*A), Bbar = (dt*A)^{-1} (exp(dt*A) - I) dt*B.
/// Diagonal systems go elementwise; dense systems use the augmented-matrix
/// exponential, which also covers singular dt*A.
DiscreteParams zoh_discretize(const LtiParams& p);

/// h_t = Abar h_{t-1} + Bbar x_t, y_t = C h_t. Empty input gives empty output.
Eigen::VectorXd lti_scan(const DiscreteParams& d, const Eigen::RowVectorXd& c,
                         const Eigen::VectorXd& x,
                         const Eigen::VectorXd& h0 = Eigen::VectorXd());

/// Kernel (C Bbar, C Abar Bbar, ..., C Abar^{M-1} Bbar) by iterated state
/// propagation.
Eigen::VectorXd lti_conv_kernel(const DiscreteParams& d, const Eigen::RowVectorXd& c, Index m);

/// Causal convolution y_t = sum_{j<=t} k_j x_{t-j}; len(k) == len(x).
Eigen::VectorXd lti_conv_apply(const Eigen::VectorXd& kernel, const Eigen::VectorXd& x);

/// Depthwise causal convolution over a (T x C) sequence, kernel (C x K)
/// indexed by lag, bias (C). Positions before the start read as zero.
Tensor causal_conv1d(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

/// Input-dependent diagonal recurrence shared by every block:
///   h_t = exp(delta_t A) (.) h_{t-1} + Bbar_t (.) v_t,  y_t[c] = <C_t, h_t[c,:]> .
/// With zoh_exact, Bbar uses the exact hold factor phi(delta*A); otherwise
/// the simplified Bbar = delta * B. A is (C x N); delta, v are (T x C);
/// B, C_seq are (T x N). Output is (T x C).
Tensor ssm_recurrence(Tape& tape, const Tensor& a, const Tensor& delta, const Tensor& b_seq,
                      const Tensor& c_seq, const Tensor& v, bool zoh_exact);

/// Gated state-space block: expansion to value/gate branches, depthwise
/// causal convolution + SiLU on the value branch, input-dependent
/// delta/B/C, diagonal recurrence, per-channel skip, SiLU gating, output
/// projection and a residual connection.
struct SelectiveSsmBlock {
    Index dim = 0;         // block input/output width
    Index inner_dim = 0;   // dim * expansion
    Index state_size = 0;  // N per channel
    Index conv_width = 4;
    bool zoh_exact = true;

    Tensor in_proj_w;   // (dim x 2*inner)
    Tensor in_proj_b;   // (2*inner)
    Tensor conv_w;      // (inner x conv_width)
    Tensor conv_b;      // (inner)
    Tensor a_log;       // (inner x N); A = -exp(a_log)
    Tensor delta_w;     // (inner x inner)
    Tensor delta_b;     // (inner)
    Tensor b_w;         // (inner x N)
    Tensor c_w;         // (inner x N)
    Tensor skip_d;      // (inner)
    Tensor out_proj_w;  // (inner x dim)

    static SelectiveSsmBlock create(Index dim, Index state_size, Index expansion,
                                    Index conv_width, bool zoh_exact, Rng& rng);
    /// All-zero parameters; the block then reduces to the identity.
    static SelectiveSsmBlock zeroed(Index dim, Index state_size, Index expansion,
                                    Index conv_width, bool zoh_exact);

    std::vector<Tensor> parameters() const;
    std::vector<std::string> parameter_names() const;
};

Tensor selective_scan(Tape& tape, const SelectiveSsmBlock& block, const Tensor& x);

}  // namespace hgmn
