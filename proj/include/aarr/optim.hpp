#pragma once

#include "aarr/tensor.hpp"

namespace aarr {

struct RmsPropOptions {
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double alpha = 0.99;  // squared-gradient smoothing
    double eps = 1e-8;    // added inside the square root
};

/// Per-parameter optimizer state; empty until the first update.
struct RmsPropSlots {
    Tensor square_avg;
    Tensor momentum_buffer;

    bool operator==(const RmsPropSlots&) const = default;
};

/// g' = g + wd*p; v = alpha v + (1-alpha) g'^2; buf = mom buf + g'/sqrt(v+eps);
/// p -= lr buf.
void rmsprop_update(Tensor& param, const Tensor& grad, RmsPropSlots& slots, const RmsPropOptions& opt);

}  // namespace aarr
