#pragma once

// Per-sample attention grids for inspection: the student's attribute-region
// scores and the distillation region weight.

#include <filesystem>
#include <vector>

#include "aarr/dataset.hpp"
#include "aarr/trainer.hpp"

namespace aarr {

struct AttentionExport {
    std::size_t sample = 0;
    Tensor scores;                    // n x r
    std::vector<double> region_weight;  // r
};

AttentionExport attention_for_sample(const ModelState& state, const GzslDataset& data, std::size_t sample,
                                     const uad::SimilaritySets& sets);

/// Writes <stem>_p.csv (header + n rows) and <stem>_weight.csv (header + 1 row);
/// headers list region indices.
void write_attention_csv(const AttentionExport& e, const std::filesystem::path& dir);

}  // namespace aarr
