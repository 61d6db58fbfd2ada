#pragma once

// Attribute-guided learning: a pool of per-attribute visual prototypes,
// refreshed from student features each batch, whose class compositions are
// pushed apart by a cross-entropy over all classes.

#include <span>
#include <vector>

#include "aarr/arc.hpp"
#include "aarr/autodiff.hpp"
#include "aarr/dataset.hpp"

namespace aarr::agl {

inline constexpr double kInitialLambda = 0.9;

struct AttributePool {
    Tensor h;                   // n x C prototypes
    double theta_lambda = 0.0;  // lambda = sigmoid(theta_lambda)
    bool initialized = false;

    double lambda() const;
    bool operator==(const AttributePool&) const = default;
};

double sigmoid(double x);
double logit(double p);

/// Seed the pool from the teacher: for each attribute, the score-weighted
/// average of every training sample's best-scoring region feature.
/// Throws ContractError if the pool is already initialized.
void init_pool(AttributePool& pool, const ArcModel& teacher, const GzslDataset& data,
               std::span<const std::size_t> train_samples);

/// Per-sample prototypes sum_j p(i,j) f_j / sum_j p(i,j), averaged over the
/// batch (n x C). With `literal` the weights cancel and each prototype is the
/// plain region sum sum_j f_j.
ad::Var batch_prototypes(std::span<const ad::Var> features, std::span<const ad::Var> scores, bool literal = false);

struct PoolVars {
    ad::Var h;      // n x C leaf
    ad::Var theta;  // 1 x 1 leaf
};

/// Leaves for the current step; throws ContractError if uninitialized.
PoolVars pool_vars(const AttributePool& pool);

/// h' = lambda h + (1 - lambda) h_bar.
ad::Var update_pool(const PoolVars& pool, const ad::Var& h_bar);
Tensor update_pool(const AttributePool& pool, const Tensor& h_bar);

/// q_k = a_k . (h' w_p); returns -log softmax(q)[y].
ad::Var agl_loss(const ad::Var& h_prime, const ad::Var& a, const ad::Var& w_p, std::size_t y);

}  // namespace aarr::agl
