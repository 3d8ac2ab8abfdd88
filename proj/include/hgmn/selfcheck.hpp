#pragma once

#include <string>
#include <vector>

#include "hgmn/common.hpp"

namespace hgmn {

struct SelfTestResult {
    std::string name;
    double max_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

/// Recurrence/convolution duality over 100 seeded stable systems
/// (N <= 8, dt in [1e-3, 1], length <= 256).
SelfTestResult check_scan_duality();
/// Exact hold values for the scalar system, the small-step limit, and the
/// zero-rate limit branch.
std::vector<SelfTestResult> check_zoh_cases();
/// Recurrence core with held delta/B/C against the per-channel linear scan.
SelfTestResult check_lti_reduction();

std::vector<SelfTestResult> run_kernel_selftests();

}  // namespace hgmn
