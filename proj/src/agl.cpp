#include "aarr/agl.hpp"

#include <cmath>

#include "aarr/uad.hpp"

namespace aarr::agl {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double AttributePool::lambda() const { return sigmoid(theta_lambda); }

void init_pool(AttributePool& pool, const ArcModel& teacher, const GzslDataset& data,
               std::span<const std::size_t> train_samples) {
    if (pool.initialized) throw ContractError("init_pool: attribute pool is already initialized");
    if (train_samples.empty()) throw ContractError("init_pool: no training samples");
    const std::size_t n = data.num_attributes(), C = teacher.channels(), r = data.regions();
    Tensor num({n, C}, 0.0);
    std::vector<double> den(n, 0.0);
    for (auto s : train_samples) {
        const uad::TeacherPass pass = uad::teacher_pass(teacher, data.sample(s), data.embeddings);
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < r; ++j)
                if (pass.scores(i, j) > pass.scores(i, best)) best = j;
            const double w = pass.scores(i, best);
            den[i] += w;
            for (std::size_t c = 0; c < C; ++c) num(i, c) += w * pass.features(c, best);
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < C; ++c) num(i, c) /= den[i];
    pool.h = std::move(num);
    pool.theta_lambda = logit(kInitialLambda);
    pool.initialized = true;
}

ad::Var batch_prototypes(std::span<const ad::Var> features, std::span<const ad::Var> scores, bool literal) {
    if (features.empty() || features.size() != scores.size()) {
        throw ContractError("batch_prototypes: need matching non-empty feature and score batches");
    }
    ad::Var total;
    for (std::size_t b = 0; b < features.size(); ++b) {
        const ad::Var& f = features[b];
        const ad::Var& p = scores[b];
        const std::size_t C = f.value().rows();
        ad::Var proto;
        if (literal) {
            // sum_j p f_j / p reduces to the region sum.
            proto = ad::broadcast(ad::transpose(ad::sum_axis(f, 1)), 0, p.value().rows());
        } else {
            ad::Var weighted = ad::matmul(p, ad::transpose(f));  // n x C
            proto = ad::div(weighted, ad::broadcast(ad::sum_axis(p, 1), 1, C));
        }
        total = total.valid() ? ad::add(total, proto) : proto;
    }
    return ad::scale(total, 1.0 / static_cast<double>(features.size()));
}

PoolVars pool_vars(const AttributePool& pool) {
    if (!pool.initialized) throw ContractError("attribute pool used before initialization");
    return {ad::Var::leaf(pool.h), ad::Var::leaf(Tensor::scalar(pool.theta_lambda))};
}

ad::Var update_pool(const PoolVars& pool, const ad::Var& h_bar) {
    require_same_shape(pool.h.value(), h_bar.value(), "update_pool");
    const std::size_t n = h_bar.value().rows(), C = h_bar.value().cols();
    const ad::Var lambda = ad::sigmoid(pool.theta);
    const ad::Var lam = ad::broadcast(ad::broadcast(lambda, 1, C), 0, n);
    const ad::Var one_minus = ad::sub(ad::Var::constant(Tensor({n, C}, 1.0)), lam);
    return ad::add(ad::mul(lam, pool.h), ad::mul(one_minus, h_bar));
}

Tensor update_pool(const AttributePool& pool, const Tensor& h_bar) {
    return update_pool(pool_vars(pool), ad::Var::constant(h_bar)).value();
}

ad::Var agl_loss(const ad::Var& h_prime, const ad::Var& a, const ad::Var& w_p, std::size_t y) {
    const ad::Var q = ad::matmul(a, ad::matmul(h_prime, w_p));
    return ad::cross_entropy(q, y);
}

}  // namespace aarr::agl
