#pragma once

// Zero-shot (T) and generalized zero-shot (U, S, H) accuracy.

#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "aarr/arc.hpp"
#include "aarr/dataset.hpp"
#include "json.hpp"

namespace aarr {

struct GzslMetrics {
    double T = 0.0;  // unseen test samples, prediction over unseen classes only
    double U = 0.0;  // unseen test samples, prediction over all classes
    double S = 0.0;  // seen test samples, prediction over all classes
    double H = 0.0;
    std::map<std::size_t, double> per_class;      // GZSL accuracy per test class
    std::map<std::size_t, double> per_class_zsl;  // ZSL accuracy per unseen class

    bool operator==(const GzslMetrics&) const = default;
};

/// 2SU/(S+U), or 0 when S+U is 0.
double harmonic_mean(double seen, double unseen);

/// Argmax of logits over `subset`; ties go to the lowest class index.
std::size_t predict(const Tensor& logits, std::span<const std::size_t> subset);
std::size_t predict(const ArcModel& model, const Tensor& x, const Tensor& v, const Tensor& a,
                    std::span<const std::size_t> subset);

/// Labels and predictions for the test samples of one evaluation.
struct PredictionSet {
    std::vector<std::size_t> labels;
    std::vector<std::size_t> gzsl;  // prediction over all classes
    std::vector<std::size_t> zsl;   // prediction over unseen classes (unseen samples only)
    std::vector<Split> split;       // test_seen or test_unseen
};

enum class Averaging { per_class, per_sample };

GzslMetrics compute_metrics(const PredictionSet& preds, Averaging averaging = Averaging::per_class);

struct EvalOptions {
    Averaging averaging = Averaging::per_class;
    std::size_t threads = 1;
    bool restrict_unseen_gzsl = false;  // diagnostic: GZSL over unseen classes only
};

PredictionSet predict_dataset(const ArcModel& model, const GzslDataset& data, const EvalOptions& opt = {});
GzslMetrics evaluate(const ArcModel& model, const GzslDataset& data, const EvalOptions& opt = {});

nlohmann::json to_json(const GzslMetrics& m);
GzslMetrics metrics_from_json(const nlohmann::json& j);
/// metrics.json and metrics.csv in `dir`.
void write_metrics(const GzslMetrics& m, const GzslDataset& data, const std::filesystem::path& dir);

}  // namespace aarr
