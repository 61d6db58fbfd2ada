#pragma once

// Attribute-region classifier: a per-region feature head, attribute-region
// attention, and attribute-weighted class logits over all K classes.

#include <cstdint>
#include <random>

#include "aarr/autodiff.hpp"
#include "aarr/tensor.hpp"

namespace aarr {

/// Affine map D -> C applied to every region, then softplus.
struct FeatureHead {
    Tensor weight;  // C x D
    Tensor bias;    // C x 1

    bool operator==(const FeatureHead&) const = default;
};

struct ArcParams {
    Tensor w1;  // d_v x C, attention projection
    Tensor w2;  // d_v x C, classification projection

    bool operator==(const ArcParams&) const = default;
};

struct ArcModel {
    FeatureHead head;
    ArcParams arc;

    std::size_t channels() const { return head.weight.rows(); }
    std::size_t raw_dim() const { return head.weight.cols(); }
    std::size_t embed_dim() const { return arc.w1.rows(); }

    bool operator==(const ArcModel&) const = default;
};

/// Gaussian init scaled by fan-in; bias starts at zero.
ArcModel init_arc_model(std::size_t raw_dim, std::size_t channels, std::size_t embed_dim, std::mt19937_64& rng);

namespace arc {

using ad::Var;

struct ArcVars {
    Var head_w, head_b, w1, w2;
};

ArcVars as_leaves(const ArcModel& m);
ArcVars as_constants(const ArcModel& m);

/// f = softplus(W x + b), C x r for x of D x r.
Var extract(const Var& head_w, const Var& head_b, const Var& x);
/// p[i,j] = softmax over regions j of v_i w1 f_j; n x r.
Var attention_scores(const Var& f, const Var& v, const Var& w1);
/// z_k = a_k . sum_j (v w2 f)[:,j] * p[:,j]; K x 1.
Var class_logits(const Var& f, const Var& p, const Var& v, const Var& w2, const Var& a);
/// -log softmax(z)[y].
Var ce_loss(const Var& z, std::size_t y);

struct Forward {
    Var f, p, z;
};

Forward forward(const ArcVars& m, const Var& x, const Var& v, const Var& a);

/// Non-differentiable forward for evaluation and teacher passes.
struct Outputs {
    Tensor f, p, z;
};
Outputs run(const ArcModel& m, const Tensor& x, const Tensor& v, const Tensor& a);

}  // namespace arc
}  // namespace aarr
