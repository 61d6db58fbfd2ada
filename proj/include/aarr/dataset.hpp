#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "aarr/tensor.hpp"

namespace aarr {

enum class Split : std::uint8_t { train = 0, test_seen = 1, test_unseen = 2 };
enum class ClassKind : std::uint8_t { seen = 0, unseen = 1 };

/// Parameters of the planted-attribute generator.
struct SyntheticSpec {
    std::size_t k_seen = 9;
    std::size_t k_unseen = 3;
    std::size_t n_attributes = 16;
    std::size_t embed_dim = 16;
    std::size_t raw_dim = 24;
    std::size_t regions = 4;
    std::size_t samples_per_class = 60;
    double attribute_density = 0.25;
    double noise_sigma = 0.3;
    std::uint64_t seed = 0;

    bool operator==(const SyntheticSpec&) const = default;
};

void to_json(nlohmann::json& j, const SyntheticSpec& s);
/// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, SyntheticSpec& s);

struct GzslDataset {
    std::string name;
    Tensor descriptors;                 // N x D x r
    std::vector<std::uint32_t> labels;  // N
    Tensor attributes_raw;              // K x n, as stored on disk
    Tensor attributes;                  // K x n, rows L2-normalized
    Tensor embeddings;                  // n x d_v
    std::vector<ClassKind> class_kind;  // K
    std::vector<Split> split;           // N
    std::optional<SyntheticSpec> spec;
    // Planted region of each attribute per sample, -1 where inactive.
    std::vector<std::vector<int>> ground_truth_regions;

    std::size_t num_samples() const { return labels.size(); }
    std::size_t num_classes() const { return class_kind.size(); }
    std::size_t num_attributes() const { return embeddings.dim(0); }
    std::size_t embed_dim() const { return embeddings.dim(1); }
    std::size_t raw_dim() const { return descriptors.dim(1); }
    std::size_t regions() const { return descriptors.dim(2); }

    /// D x r descriptor block of one sample.
    Tensor sample(std::size_t index) const;
    std::vector<std::size_t> classes_of(ClassKind kind) const;
    std::vector<std::size_t> samples_in(Split s) const;
    /// Rows of `attributes` for the given class indices.
    Tensor attribute_rows(const std::vector<std::size_t>& classes) const;

    bool operator==(const GzslDataset&) const = default;
};

/// Dataset plus the unit attribute signatures planted into it.
struct SyntheticDataset {
    GzslDataset dataset;
    Tensor signatures;  // n x D
};

SyntheticDataset generate_with_truth(const SyntheticSpec& spec);
GzslDataset generate_synthetic(const SyntheticSpec& spec);

/// Copy of `raw` with every row scaled to unit L2 norm (zero rows kept).
Tensor normalize_rows(const Tensor& raw);

void write_dataset(const GzslDataset& d, const std::filesystem::path& dir);
GzslDataset read_dataset(const std::filesystem::path& dir);

struct Violation {
    std::string invariant;
    std::size_t index;
    std::string message;
};

std::vector<Violation> validate_dataset(const GzslDataset& d);

}  // namespace aarr
