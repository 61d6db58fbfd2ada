#include "aarr/uad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace aarr::uad {

namespace {
const std::vector<std::size_t> kEmpty;
}

const std::vector<std::size_t>& SimilaritySets::of(std::size_t seen_class) const {
    auto it = by_seen.find(seen_class);
    return it == by_seen.end() ? kEmpty : it->second;
}

SimilaritySets build_similarity_sets(const Tensor& attributes, const std::vector<std::size_t>& seen,
                                     const std::vector<std::size_t>& unseen, std::size_t m) {
    if (m < 1 || m > seen.size()) {
        throw ContractError("build_similarity_sets: m=" + std::to_string(m) + " outside [1," +
                            std::to_string(seen.size()) + "]");
    }
    const std::size_t n = attributes.cols();
    SimilaritySets out;
    out.m = m;
    for (auto k : seen) out.by_seen[k];

    std::vector<std::size_t> ranked = seen;
    std::sort(ranked.begin(), ranked.end());
    for (auto u : unseen) {
        std::vector<double> dist(attributes.rows(), 0.0);
        for (auto k : ranked) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = attributes(u, i) - attributes(k, i);
                s += d * d;
            }
            dist[k] = std::sqrt(s);
        }
        std::vector<std::size_t> order = ranked;
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return dist[x] < dist[y]; });
        for (std::size_t t = 0; t < m; ++t) out.by_seen[order[t]].push_back(u);
    }
    for (auto& [k, us] : out.by_seen) std::sort(us.begin(), us.end());
    return out;
}

Tensor min_max_normalize(const Tensor& t) {
    const auto [lo, hi] = std::minmax_element(t.data().begin(), t.data().end());
    const double min = *lo, range = *hi - *lo;
    Tensor out(t.shape(), 0.0);
    if (!(range > 0.0)) return out;
    for (std::size_t i = 0; i < t.numel(); ++i) out[i] = (t[i] - min) / range;
    // Guard the endpoints against rounding in the division.
    for (std::size_t i = 0; i < t.numel(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
    return out;
}

TeacherPass teacher_pass(const ArcModel& teacher, const Tensor& x, const Tensor& v) {
    const arc::ArcVars m = arc::as_constants(teacher);
    const ad::Var f = arc::extract(m.head_w, m.head_b, ad::Var::constant(x));
    const ad::Var p = arc::attention_scores(f, ad::Var::constant(v), m.w1);
    return {f.value(), p.value()};
}

Tensor class_gradient(const ArcModel& teacher, const TeacherPass& pass, const Tensor& v, const Tensor& a,
                      std::size_t c) {
    const ad::Var f = ad::Var::leaf(pass.features);
    const ad::Var vv = ad::Var::constant(v);
    const ad::Var p = arc::attention_scores(f, vv, ad::Var::constant(teacher.arc.w1));
    const ad::Var z = arc::class_logits(f, p, vv, ad::Var::constant(teacher.arc.w2), ad::Var::constant(a));
    return ad::backward(arc::ce_loss(z, c), {f})[0];
}

Tensor cam(const ArcModel& teacher, const Tensor& x, const Tensor& v, const Tensor& a, std::size_t c) {
    if (c >= a.rows()) throw ContractError("cam: class " + std::to_string(c) + " out of range");
    return min_max_normalize(class_gradient(teacher, teacher_pass(teacher, x, v), v, a, c));
}

Tensor unseen_aware_map(const ArcModel& teacher, const TeacherPass& pass, const Tensor& v, const Tensor& a,
                        std::size_t k, const SimilaritySets& sets) {
    Tensor g = min_max_normalize(class_gradient(teacher, pass, v, a, k));
    const auto& similar = sets.of(k);
    if (!similar.empty()) {
        Tensor acc(g.shape(), 0.0);
        for (auto u : similar) acc += min_max_normalize(class_gradient(teacher, pass, v, a, u));
        g += (1.0 / static_cast<double>(similar.size())) * acc;
    }
    return min_max_normalize(g);
}

Tensor unseen_aware_map(const ArcModel& teacher, const Tensor& x, const Tensor& v, const Tensor& a, std::size_t k,
                        const SimilaritySets& sets) {
    return unseen_aware_map(teacher, teacher_pass(teacher, x, v), v, a, k, sets);
}

std::vector<double> attribute_reweight(const Tensor& g, const Tensor& p_hat) {
    if (g.cols() != p_hat.cols()) {
        throw DimensionError("attribute_reweight: region extents differ, " + shape_str(g.shape()) + " vs " +
                             shape_str(p_hat.shape()));
    }
    const std::size_t C = g.rows(), n = p_hat.rows(), r = g.cols();
    std::vector<double> w(r);
    for (std::size_t j = 0; j < r; ++j) {
        double mean = 0.0;
        for (std::size_t c = 0; c < C; ++c) mean += g(c, j);
        mean /= static_cast<double>(C);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, p_hat(i, j));
        w[j] = mean * mx;
    }
    return w;
}

ad::Var uad_loss(const ad::Var& f_s, const Tensor& f_t, const std::vector<double>& w) {
    require_same_shape(f_s.value(), f_t, "uad_loss");
    const std::size_t r = f_t.cols();
    if (w.size() != r) throw DimensionError("uad_loss: weight has " + std::to_string(w.size()) + " entries, r=" +
                                            std::to_string(r));
    const ad::Var diff = ad::sub(f_s, ad::Var::constant(f_t));
    const ad::Var per_region = ad::mean_axis(ad::mul(diff, diff), 0);  // 1 x r
    const ad::Var weights = ad::Var::constant(Tensor({1, r}, w));
    return ad::scale(ad::sum(ad::mul(per_region, weights)), 1.0 / static_cast<double>(r));
}

}  // namespace aarr::uad
