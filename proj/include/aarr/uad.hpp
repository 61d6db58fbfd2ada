#pragma once

// Unseen-aware distillation: teacher class-activation maps widened to the
// unseen classes nearest each seen class, reweighted by the student's
// attribute-region scores, and used to weight a feature MSE.

#include <map>
#include <vector>

#include "aarr/arc.hpp"
#include "aarr/autodiff.hpp"

namespace aarr::uad {

/// For every seen class k, the unseen classes that chose k among their
/// m nearest seen classes (Euclidean distance between attribute rows).
struct SimilaritySets {
    std::size_t m = 0;
    std::map<std::size_t, std::vector<std::size_t>> by_seen;

    const std::vector<std::size_t>& of(std::size_t seen_class) const;
    bool operator==(const SimilaritySets&) const = default;
};

/// `attributes` is K x n; class ids in the result are rows of it.
/// Ties in distance go to the lower class index.
SimilaritySets build_similarity_sets(const Tensor& attributes, const std::vector<std::size_t>& seen,
                                     const std::vector<std::size_t>& unseen, std::size_t m);

/// Min-max normalization over all entries; constant input maps to zeros.
Tensor min_max_normalize(const Tensor& t);

/// Teacher-side inputs shared by every activation map of one sample.
struct TeacherPass {
    Tensor features;  // f_t, C x r
    Tensor scores;    // p_t, n x r
};

TeacherPass teacher_pass(const ArcModel& teacher, const Tensor& x, const Tensor& v);

/// Raw gradient dL_CE(target c)/df_t of the teacher's classifier.
Tensor class_gradient(const ArcModel& teacher, const TeacherPass& pass, const Tensor& v, const Tensor& a,
                      std::size_t c);

/// tau(dL_CE/df_t) for target class c.
Tensor cam(const ArcModel& teacher, const Tensor& x, const Tensor& v, const Tensor& a, std::size_t c);

/// tau(g(k) + mean_{u in U_k} g(u)); the mean is dropped when U_k is empty.
Tensor unseen_aware_map(const ArcModel& teacher, const Tensor& x, const Tensor& v, const Tensor& a, std::size_t k,
                        const SimilaritySets& sets);
Tensor unseen_aware_map(const ArcModel& teacher, const TeacherPass& pass, const Tensor& v, const Tensor& a,
                        std::size_t k, const SimilaritySets& sets);

/// Region weight w_j = mean_c g[c,j] * max_i p_hat[i,j].
std::vector<double> attribute_reweight(const Tensor& g, const Tensor& p_hat);

/// (1/r) sum_j w_j mean_c (f_s[c,j] - f_t[c,j])^2; only f_s carries gradient.
ad::Var uad_loss(const ad::Var& f_s, const Tensor& f_t, const std::vector<double>& w);

}  // namespace aarr::uad
