#include "aarr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace aarr {

double relative_error(double analytic, double numeric) {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / scale;
}

namespace {

const char* const kParamNames[] = {"head_weight", "head_bias", "w1", "w2", "pool_h", "theta_lambda", "w_p"};
constexpr std::size_t kParams = 7;

struct Problem {
    std::vector<Tensor> params;  // ordered as kParamNames
    StepInputs inputs;
};

Tensor random_tensor(Shape shape, double sd, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, sd);
    Tensor t(std::move(shape));
    for (auto& x : t.data()) x = normal(rng);
    return t;
}

Problem make_problem(const GradcheckOptions& o) {
    std::mt19937_64 rng(o.seed);
    const std::size_t K = o.k_seen + o.k_unseen;
    const ArcModel student = init_arc_model(o.raw_dim, o.channels, o.embed_dim, rng);
    const ArcModel teacher = init_arc_model(o.raw_dim, o.channels, o.embed_dim, rng);

    Problem p;
    StepInputs& in = p.inputs;
    in.v = random_tensor({o.n_attributes, o.embed_dim}, 1.0, rng);
    Tensor a({K, o.n_attributes});
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (auto& x : a.data()) x = unit(rng);
    in.a = normalize_rows(a);
    std::uniform_int_distribution<std::size_t> seen_class(0, o.k_seen - 1);
    for (std::size_t b = 0; b < o.batch; ++b) {
        in.x.push_back(random_tensor({o.raw_dim, o.regions}, 1.0, rng));
        in.y.push_back(seen_class(rng));
    }
    in.main_phase = in.use_uad = in.use_agl = true;
    in.beta = 10.0;
    in.gamma = 0.1;

    std::vector<std::size_t> seen(o.k_seen), unseen(o.k_unseen);
    for (std::size_t k = 0; k < K; ++k) (k < o.k_seen ? seen[k] : unseen[k - o.k_seen]) = k;
    const uad::SimilaritySets sets = uad::build_similarity_sets(in.a, seen, unseen, std::min<std::size_t>(2, o.k_seen));
    for (std::size_t b = 0; b < o.batch; ++b)
        in.distill.push_back(distill_target(teacher, in.x[b], in.v, in.a, in.y[b], sets));

    p.params = {student.head.weight,
                student.head.bias,
                student.arc.w1,
                student.arc.w2,
                random_tensor({o.n_attributes, o.channels}, 0.5, rng),
                Tensor::scalar(agl::logit(agl::kInitialLambda) + random_tensor({1, 1}, 0.5, rng)[0]),
                random_tensor({o.channels, 1}, 1.0, rng)};
    return p;
}

ParamVars leaves(const std::vector<Tensor>& t) {
    ParamVars v;
    v.student = {ad::Var::leaf(t[0]), ad::Var::leaf(t[1]), ad::Var::leaf(t[2]), ad::Var::leaf(t[3])};
    v.pool = {ad::Var::leaf(t[4]), ad::Var::leaf(t[5])};
    v.w_p = ad::Var::leaf(t[6]);
    return v;
}

ad::Var pick(const StepGraph& g, const std::string& term) {
    if (term == "ce") return g.ce;
    if (term == "uad") return g.uad;
    if (term == "agl") return g.agl;
    return g.total;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& o) {
    Problem prob = make_problem(o);
    // Hold the distillation region weights at their current values so the
    // numeric derivative sees the same constants as the analytic one.
    {
        const StepGraph g0 = build_step_graph(leaves(prob.params), prob.inputs);
        prob.inputs.frozen_weights = g0.region_weights;
    }
    auto loss_at = [&](const std::vector<Tensor>& params, const std::string& term) {
        return pick(build_step_graph(leaves(params), prob.inputs), term).value().item();
    };

    GradcheckReport report;
    report.passed = true;
    for (const std::string term : {"ce", "uad", "agl", "combined"}) {
        const ParamVars vars = leaves(prob.params);
        const StepGraph g = build_step_graph(vars, prob.inputs);
        const std::vector<ad::Var> targets{vars.student.head_w, vars.student.head_b, vars.student.w1, vars.student.w2,
                                           vars.pool.h,         vars.pool.theta,     vars.w_p};
        const std::vector<Tensor> analytic = ad::backward(pick(g, term), targets);

        GradcheckTerm t;
        t.name = term;
        std::vector<Tensor> probe = prob.params;
        for (std::size_t p = 0; p < kParams; ++p) {
            for (std::size_t i = 0; i < probe[p].numel(); ++i) {
                const double orig = probe[p][i];
                probe[p][i] = orig + o.step;
                const double up = loss_at(probe, term);
                probe[p][i] = orig - o.step;
                const double down = loss_at(probe, term);
                probe[p][i] = orig;
                const double numeric = (up - down) / (2.0 * o.step);
                const double err = relative_error(analytic[p][i] * (1.0 + o.fault), numeric);
                if (err > t.worst_rel_error || !std::isfinite(err)) {
                    t.worst_rel_error = err;
                    t.worst_param = kParamNames[p];
                }
                ++t.entries;
            }
        }
        t.passed = std::isfinite(t.worst_rel_error) && t.worst_rel_error <= o.tolerance;
        report.passed = report.passed && t.passed;
        report.terms.push_back(std::move(t));
    }
    return report;
}

}  // namespace aarr
