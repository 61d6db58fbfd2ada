#include "aarr/arc.hpp"

#include <cmath>

namespace aarr {

ArcModel init_arc_model(std::size_t raw_dim, std::size_t channels, std::size_t embed_dim, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto fill = [&](Tensor& t, double sd) {
        for (auto& x : t.data()) x = sd * normal(rng);
    };
    ArcModel m;
    m.head.weight = Tensor({channels, raw_dim});
    m.head.bias = Tensor({channels, 1});
    m.arc.w1 = Tensor({embed_dim, channels});
    m.arc.w2 = Tensor({embed_dim, channels});
    fill(m.head.weight, 1.0 / std::sqrt(static_cast<double>(raw_dim)));
    fill(m.arc.w1, 1.0 / std::sqrt(static_cast<double>(channels)));
    fill(m.arc.w2, 1.0 / std::sqrt(static_cast<double>(channels)));
    return m;
}

namespace arc {

ArcVars as_leaves(const ArcModel& m) {
    return {Var::leaf(m.head.weight), Var::leaf(m.head.bias), Var::leaf(m.arc.w1), Var::leaf(m.arc.w2)};
}

ArcVars as_constants(const ArcModel& m) {
    return {Var::constant(m.head.weight), Var::constant(m.head.bias), Var::constant(m.arc.w1),
            Var::constant(m.arc.w2)};
}

Var extract(const Var& head_w, const Var& head_b, const Var& x) {
    if (head_w.value().cols() != x.value().rows() || head_b.value().rows() != head_w.value().rows()) {
        throw DimensionError("extract: head " + shape_str(head_w.shape()) + " / bias " + shape_str(head_b.shape()) +
                             " incompatible with input " + shape_str(x.shape()));
    }
    const std::size_t r = x.value().cols();
    return ad::softplus(ad::add(ad::matmul(head_w, x), ad::broadcast(head_b, 1, r)));
}

Var attention_scores(const Var& f, const Var& v, const Var& w1) {
    return ad::softmax_axis(ad::matmul(ad::matmul(v, w1), f), 1);
}

Var class_logits(const Var& f, const Var& p, const Var& v, const Var& w2, const Var& a) {
    Var evidence = ad::sum_axis(ad::mul(ad::matmul(ad::matmul(v, w2), f), p), 1);
    return ad::matmul(a, evidence);
}

Var ce_loss(const Var& z, std::size_t y) { return ad::cross_entropy(z, y); }

Forward forward(const ArcVars& m, const Var& x, const Var& v, const Var& a) {
    Forward out;
    out.f = extract(m.head_w, m.head_b, x);
    out.p = attention_scores(out.f, v, m.w1);
    out.z = class_logits(out.f, out.p, v, m.w2, a);
    return out;
}

Outputs run(const ArcModel& m, const Tensor& x, const Tensor& v, const Tensor& a) {
    const Forward fw = forward(as_constants(m), Var::constant(x), Var::constant(v), Var::constant(a));
    return {fw.f.value(), fw.p.value(), fw.z.value()};
}

}  // namespace arc
}  // namespace aarr
