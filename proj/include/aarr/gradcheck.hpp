#pragma once

// Finite-difference verification of the analytic gradients of every loss
// term on small random problems.

#include <cstdint>
#include <string>
#include <vector>

#include "aarr/trainer.hpp"

namespace aarr {

struct GradcheckOptions {
    std::uint64_t seed = 0;
    std::size_t channels = 8;
    std::size_t regions = 6;
    std::size_t n_attributes = 10;
    std::size_t embed_dim = 12;
    std::size_t k_seen = 5;
    std::size_t k_unseen = 2;
    std::size_t raw_dim = 5;
    std::size_t batch = 3;
    double step = 1e-5;
    double tolerance = 1e-4;
    // Scales every analytic gradient by (1 + fault); nonzero values exist
    // to prove the harness can fail.
    double fault = 0.0;
};

struct GradcheckTerm {
    std::string name;  // ce, uad, agl, combined
    double worst_rel_error = 0.0;
    std::string worst_param;
    std::size_t entries = 0;
    bool passed = false;
};

struct GradcheckReport {
    std::vector<GradcheckTerm> terms;
    bool passed = false;
};

/// Entry-wise |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double relative_error(double analytic, double numeric);

GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace aarr
