#include "aarr/attention.hpp"

#include <fstream>
#include <iomanip>

namespace aarr {

AttentionExport attention_for_sample(const ModelState& state, const GzslDataset& data, std::size_t sample,
                                     const uad::SimilaritySets& sets) {
    if (sample >= data.num_samples()) {
        throw ContractError("attention: sample " + std::to_string(sample) + " out of range");
    }
    const Tensor x = data.sample(sample);
    AttentionExport out;
    out.sample = sample;
    out.scores = arc::run(state.student, x, data.embeddings, data.attributes).p;
    const Tensor g = uad::unseen_aware_map(state.teacher, x, data.embeddings, data.attributes, data.labels[sample], sets);
    out.region_weight = uad::attribute_reweight(g, out.scores);
    return out;
}

namespace {
void header(std::ostream& os, std::size_t r) {
    for (std::size_t j = 0; j < r; ++j) os << (j ? "," : "") << j;
    os << '\n';
}
}  // namespace

void write_attention_csv(const AttentionExport& e, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string stem = "sample_" + std::to_string(e.sample);
    const std::size_t r = e.scores.cols();
    std::ofstream p(dir / (stem + "_p.csv"));
    p << std::setprecision(17);
    header(p, r);
    for (std::size_t i = 0; i < e.scores.rows(); ++i) {
        for (std::size_t j = 0; j < r; ++j) p << (j ? "," : "") << e.scores(i, j);
        p << '\n';
    }
    std::ofstream w(dir / (stem + "_weight.csv"));
    w << std::setprecision(17);
    header(w, r);
    for (std::size_t j = 0; j < r; ++j) w << (j ? "," : "") << e.region_weight[j];
    w << '\n';
}

}  // namespace aarr
