#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aarr/agl.hpp"
#include "aarr/arc.hpp"
#include "aarr/dataset.hpp"
#include "aarr/metrics.hpp"
#include "aarr/optim.hpp"
#include "aarr/uad.hpp"
#include "json.hpp"

namespace aarr {

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t warmup_epochs = 5;
    std::size_t batch_size = 16;
    std::size_t channels = 16;
    double learning_rate = 1e-3;
    double rmsprop_momentum = 0.9;
    double rmsprop_alpha = 0.99;
    double rmsprop_eps = 1e-8;
    double weight_decay = 1e-4;
    double beta = 10.0;
    double gamma = 0.1;
    std::size_t m = 2;
    double delta = 0.9995;
    std::uint64_t seed = 0;
    bool uad_enabled = true;
    bool agl_enabled = true;
    bool literal_eq8 = false;
    bool eval_teacher = false;
    bool check_invariants = false;
    std::size_t threads = 1;

    /// Throws std::invalid_argument naming the first bad field.
    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Rejects unknown keys; missing keys keep their defaults.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct NamedSlots {
    std::map<std::string, RmsPropSlots> slots;
    bool operator==(const NamedSlots&) const = default;
};

struct ModelState {
    ArcModel student;
    ArcModel teacher;
    bool teacher_ready = false;
    agl::AttributePool pool;
    Tensor w_p;  // C x 1
    NamedSlots optimizer;
    std::size_t epoch = 0;

    bool operator==(const ModelState&) const = default;
};

ModelState init_state(const GzslDataset& data, const TrainConfig& config);

struct StepLosses {
    double ce = 0.0, uad = 0.0, agl = 0.0, total = 0.0;
};

/// Counts of invariant checks performed and any failures, by name.
struct InvariantLog {
    std::map<std::string, std::size_t> checks;
    std::vector<std::string> violations;

    void check(const std::string& name, bool ok, const std::string& detail = {});
};

/// Per-sample constants of the distillation term: teacher features and the
/// unseen-aware activation map, both fixed for the step.
struct DistillTarget {
    Tensor teacher_features;  // C x r
    Tensor activation;        // C x r, tau-normalized
};

/// Everything a step's loss depends on besides the trainable parameters.
struct StepInputs {
    std::vector<Tensor> x;
    std::vector<std::size_t> y;
    Tensor v;  // n x d_v
    Tensor a;  // K x n
    bool main_phase = false;
    bool use_uad = false;
    bool use_agl = false;
    bool literal_eq8 = false;
    double beta = 0.0;
    double gamma = 0.0;
    std::vector<DistillTarget> distill;  // one per sample when use_uad
    // Region weights to use instead of deriving them from the current
    // student scores; lets finite differences hold them fixed.
    std::optional<std::vector<std::vector<double>>> frozen_weights;
};

struct ParamVars {
    arc::ArcVars student;
    agl::PoolVars pool;  // set when use_agl
    ad::Var w_p;         // set when use_agl
};

struct StepGraph {
    ad::Var ce, uad, agl, total;
    ad::Var h_bar, h_prime;
    std::vector<Tensor> scores;                      // student p per sample
    std::vector<std::vector<double>> region_weights;  // per sample when use_uad
};

/// Builds the batch-mean losses: CE always, UAD and AGL when enabled in the
/// main phase, total = ce + beta uad + gamma agl.
StepGraph build_step_graph(const ParamVars& params, const StepInputs& in);

/// Teacher-side constants for one sample of class `label`.
DistillTarget distill_target(const ArcModel& teacher, const Tensor& x, const Tensor& v, const Tensor& a,
                             std::size_t label, const uad::SimilaritySets& sets);

struct TrainContext {
    const GzslDataset& data;
    const TrainConfig& config;
    const uad::SimilaritySets& sets;
    InvariantLog* invariants = nullptr;
};

/// One optimizer step on `batch`; the teacher is read but never written.
/// Throws NumericError naming the term if any loss is non-finite.
StepLosses train_step(ModelState& state, std::span<const std::size_t> batch, const TrainContext& ctx);

/// Theta_t <- delta Theta_t + (1 - delta) Theta_s.
void ema_teacher(ModelState& state, double delta);

/// Training order for an epoch, a pure function of (seed, epoch, indices).
std::vector<std::size_t> epoch_order(std::span<const std::size_t> samples, std::uint64_t seed, std::size_t epoch);

struct EpochRecord {
    std::size_t epoch = 0;
    bool main_phase = false;
    StepLosses losses;  // batch means over the epoch
    GzslMetrics metrics;
};

struct FitOptions {
    std::optional<std::filesystem::path> checkpoint_dir;
    InvariantLog* invariants = nullptr;
    std::function<void(const EpochRecord&)> on_epoch;
};

struct FitResult {
    ModelState state;
    std::vector<EpochRecord> history;
    uad::SimilaritySets sets;
};

FitResult fit(const GzslDataset& data, const TrainConfig& config, const FitOptions& options = {});

/// Model used for evaluation under the config's eval_teacher flag.
const ArcModel& eval_model(const ModelState& state, bool teacher);

std::string history_csv_header();
std::string history_csv_row(const EpochRecord& r);
void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

/// Per-epoch checkpoint: parameters as .aarr files plus manifest.json.
void save_checkpoint(const std::filesystem::path& dir, const ModelState& state, const TrainConfig& config,
                     const std::vector<EpochRecord>& history, const uad::SimilaritySets& sets);

struct Checkpoint {
    ModelState state;
    TrainConfig config;
    nlohmann::json manifest;
};

/// Throws io::FormatError on missing or corrupt files.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

nlohmann::json to_json(const uad::SimilaritySets& sets);

}  // namespace aarr
