// aarr: generate | train | eval | gradcheck | attention
//
// Exit codes: 0 success, 2 usage/config, 3 numeric failure, 4 I/O/format.

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "aarr/attention.hpp"
#include "aarr/dataset.hpp"
#include "aarr/gradcheck.hpp"
#include "aarr/io.hpp"
#include "aarr/metrics.hpp"
#include "aarr/parallel.hpp"
#include "aarr/run_config.hpp"
#include "aarr/trainer.hpp"

namespace fs = std::filesystem;
using namespace aarr;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Holds <dir>/.lock for the lifetime of a run.
class RunLock {
public:
    explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) throw io::FormatError("run directory " + dir.string() + " is locked by another process", 0);
    }
    ~RunLock() {
        ::close(fd_);
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path path_;
    int fd_ = -1;
};

// Flags that override the JSON config when given.
struct SpecFlags {
    std::optional<std::size_t> k_seen, k_unseen, n_attributes, embed_dim, raw_dim, regions, samples_per_class;
    std::optional<double> density, sigma;
    std::optional<std::uint64_t> seed;

    void add_to(CLI::App* app) {
        app->add_option("--seed", seed, "generator seed");
        app->add_option("--k-seen", k_seen, "number of seen classes");
        app->add_option("--k-unseen", k_unseen, "number of unseen classes");
        app->add_option("--n-attributes", n_attributes, "number of attributes");
        app->add_option("--embed-dim", embed_dim, "semantic embedding width");
        app->add_option("--raw-dim", raw_dim, "raw descriptor width D");
        app->add_option("--regions", regions, "regions per sample");
        app->add_option("--samples-per-class", samples_per_class, "samples per class");
        app->add_option("--density", density, "fraction of attributes active per class");
        app->add_option("--sigma", sigma, "Gaussian noise level");
    }

    void apply(SyntheticSpec& s) const {
        if (seed) s.seed = *seed;
        if (k_seen) s.k_seen = *k_seen;
        if (k_unseen) s.k_unseen = *k_unseen;
        if (n_attributes) s.n_attributes = *n_attributes;
        if (embed_dim) s.embed_dim = *embed_dim;
        if (raw_dim) s.raw_dim = *raw_dim;
        if (regions) s.regions = *regions;
        if (samples_per_class) s.samples_per_class = *samples_per_class;
        if (density) s.attribute_density = *density;
        if (sigma) s.noise_sigma = *sigma;
    }
};

struct TrainFlags {
    std::optional<std::size_t> epochs, warmup, batch_size, channels, m;
    std::optional<double> lr, momentum, weight_decay, beta, gamma, delta;
    std::optional<std::uint64_t> seed;
    bool no_uad = false, no_agl = false, literal_eq8 = false, eval_teacher = false, check_invariants = false;

    void add_to(CLI::App* app) {
        app->add_option("--epochs", epochs, "total epochs including warm-up");
        app->add_option("--warmup", warmup, "CE-only warm-up epochs");
        app->add_option("--batch-size", batch_size, "samples per step");
        app->add_option("--channels", channels, "feature channels C");
        app->add_option("--lr", lr, "RMSProp learning rate");
        app->add_option("--momentum", momentum, "RMSProp momentum");
        app->add_option("--weight-decay", weight_decay, "L2 weight decay");
        app->add_option("--beta", beta, "distillation weight");
        app->add_option("--gamma", gamma, "attribute-guided loss weight");
        app->add_option("--m", m, "nearest seen classes per unseen class");
        app->add_option("--delta", delta, "teacher EMA decay");
        app->add_option("--seed", seed, "training seed");
        app->add_flag("--no-uad", no_uad, "disable unseen-aware distillation");
        app->add_flag("--no-agl", no_agl, "disable attribute-guided learning");
        app->add_flag("--literal-eq8", literal_eq8, "unweighted region-sum batch prototypes");
        app->add_flag("--eval-teacher", eval_teacher, "evaluate the teacher instead of the student");
        app->add_flag("--check-invariants", check_invariants, "assert training invariants every step");
    }

    void apply(TrainConfig& c) const {
        if (epochs) c.epochs = *epochs;
        if (warmup) c.warmup_epochs = *warmup;
        if (batch_size) c.batch_size = *batch_size;
        if (channels) c.channels = *channels;
        if (lr) c.learning_rate = *lr;
        if (momentum) c.rmsprop_momentum = *momentum;
        if (weight_decay) c.weight_decay = *weight_decay;
        if (beta) c.beta = *beta;
        if (gamma) c.gamma = *gamma;
        if (m) c.m = *m;
        if (delta) c.delta = *delta;
        if (seed) c.seed = *seed;
        if (no_uad) c.uad_enabled = false;
        if (no_agl) c.agl_enabled = false;
        if (literal_eq8) c.literal_eq8 = true;
        if (eval_teacher) c.eval_teacher = true;
        if (check_invariants) c.check_invariants = true;
    }
};

RunConfig base_config(const std::string& config_path) {
    RunConfig rc;
    if (!config_path.empty()) rc = load_run_config(config_path);
    return rc;
}

void print_metrics(const GzslMetrics& m) {
    std::printf("T=%.4f U=%.4f S=%.4f H=%.4f\n", m.T, m.U, m.S, m.H);
}

int cmd_generate(const std::string& config_path, const SpecFlags& flags, std::string out) {
    RunConfig rc = base_config(config_path);
    flags.apply(rc.synthetic);
    if (!out.empty()) rc.out_dir = out;
    if (rc.out_dir.empty()) throw UsageError("generate: --out is required");
    const GzslDataset d = generate_synthetic(rc.synthetic);
    write_dataset(d, rc.out_dir);
    write_resolved_config(rc, rc.out_dir);
    std::printf("wrote %zu samples, %zu classes (%zu unseen) to %s\n", d.num_samples(), d.num_classes(),
                d.classes_of(ClassKind::unseen).size(), rc.out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& config_path, const TrainFlags& flags, const std::string& data,
              const std::string& out) {
    RunConfig rc = base_config(config_path);
    flags.apply(rc.train);
    if (!data.empty()) rc.data_dir = data;
    if (!out.empty()) rc.out_dir = out;
    if (rc.data_dir.empty()) throw UsageError("train: --data is required");
    if (rc.out_dir.empty()) throw UsageError("train: --out is required");
    rc.train.threads = threads_from_env();
    rc.train.validate();

    const GzslDataset d = read_dataset(rc.data_dir);
    if (auto v = validate_dataset(d); !v.empty()) {
        throw io::FormatError("dataset invalid: " + v.front().invariant + " at index " + std::to_string(v.front().index),
                              0);
    }
    const fs::path out_dir = rc.out_dir;
    RunLock lock(out_dir);
    write_resolved_config(rc, out_dir);

    InvariantLog log;
    FitOptions opt;
    opt.checkpoint_dir = out_dir / "checkpoints";
    if (rc.train.check_invariants) opt.invariants = &log;
    opt.on_epoch = [](const EpochRecord& r) {
        std::printf("epoch %3zu %-6s ce=%.5f uad=%.5f agl=%.5f total=%.5f  T=%.4f U=%.4f S=%.4f H=%.4f\n", r.epoch,
                    r.main_phase ? "main" : "warmup", r.losses.ce, r.losses.uad, r.losses.agl, r.losses.total,
                    r.metrics.T, r.metrics.U, r.metrics.S, r.metrics.H);
        std::fflush(stdout);
    };
    const FitResult res = fit(d, rc.train, opt);
    write_history_csv(res.history, out_dir / "history.csv");
    if (rc.train.check_invariants) {
        std::size_t total = 0;
        for (const auto& [name, n] : log.checks) total += n;
        std::printf("invariant checks: %zu, violations: %zu\n", total, log.violations.size());
        for (const auto& v : log.violations) std::fprintf(stderr, "violation: %s\n", v.c_str());
        if (!log.violations.empty()) return kExitNumeric;
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, const std::string& model, std::string out,
             bool per_sample) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    const GzslDataset d = read_dataset(data);
    bool teacher = ck.config.eval_teacher;
    if (model == "teacher") teacher = true;
    else if (model == "student") teacher = false;
    else if (!model.empty()) throw UsageError("eval: --model must be student or teacher");
    EvalOptions eo;
    eo.threads = threads_from_env();
    if (per_sample) eo.averaging = Averaging::per_sample;
    const GzslMetrics m = evaluate(eval_model(ck.state, teacher), d, eo);
    write_metrics(m, d, out.empty() ? fs::path(checkpoint) : fs::path(out));
    print_metrics(m);
    return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t seeds, double fault) {
    bool ok = true;
    std::map<std::string, double> worst;
    for (std::size_t s = 0; s < seeds; ++s) {
        GradcheckOptions o;
        o.seed = seed + s;
        o.fault = fault;
        const GradcheckReport r = run_gradcheck(o);
        ok = ok && r.passed;
        for (const auto& t : r.terms) worst[t.name] = std::max(worst[t.name], t.worst_rel_error);
    }
    for (const char* term : {"ce", "uad", "agl", "combined"}) {
        const double e = worst[term];
        std::printf("%-9s worst_rel_error=%.3e  %s\n", term, e, e <= GradcheckOptions{}.tolerance ? "PASS" : "FAIL");
    }
    std::printf("gradcheck %s (seeds %llu..%llu, tolerance %.0e)\n", ok ? "passed" : "FAILED",
                static_cast<unsigned long long>(seed), static_cast<unsigned long long>(seed + seeds - 1),
                GradcheckOptions{}.tolerance);
    return ok ? 0 : 1;
}

std::vector<std::size_t> parse_ids(const std::string& list) {
    std::vector<std::size_t> ids;
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        try {
            ids.push_back(std::stoul(tok));
        } catch (const std::exception&) {
            throw UsageError("attention: bad sample id '" + tok + "'");
        }
    }
    if (ids.empty()) throw UsageError("attention: --samples needs at least one id");
    return ids;
}

int cmd_attention(const std::string& checkpoint, const std::string& data, const std::string& samples,
                  const std::string& out) {
    const auto ids = parse_ids(samples);
    const Checkpoint ck = load_checkpoint(checkpoint);
    const GzslDataset d = read_dataset(data);
    const auto sets = uad::build_similarity_sets(d.attributes, d.classes_of(ClassKind::seen),
                                                 d.classes_of(ClassKind::unseen), ck.config.m);
    for (auto id : ids) {
        if (id >= d.num_samples()) throw UsageError("attention: sample " + std::to_string(id) + " out of range");
        write_attention_csv(attention_for_sample(ck.state, d, id, sets), out);
    }
    std::printf("wrote attention grids for %zu samples to %s\n", ids.size(), out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attribute-aware representation rectification for generalized zero-shot learning"};
    app.require_subcommand(1);

    std::string config_path, out, data, checkpoint, model, samples;
    bool per_sample = false;
    SpecFlags spec_flags;
    TrainFlags train_flags;
    std::uint64_t gc_seed = 0;
    std::size_t gc_seeds = 1;
    double gc_fault = 0.0;

    auto* gen = app.add_subcommand("generate", "write a synthetic dataset directory");
    gen->add_option("--config", config_path, "run config JSON");
    gen->add_option("--out", out, "dataset directory");
    spec_flags.add_to(gen);

    auto* train = app.add_subcommand("train", "warm-up plus full training with per-epoch checkpoints");
    train->add_option("--config", config_path, "run config JSON");
    train->add_option("--data", data, "dataset directory");
    train->add_option("--out", out, "run directory");
    train_flags.add_to(train);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (T, U, S, H)");
    eval->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    eval->add_option("--data", data, "dataset directory")->required();
    eval->add_option("--model", model, "student or teacher");
    eval->add_option("--out", out, "metrics directory (default: the checkpoint)");
    eval->add_flag("--per-sample", per_sample, "per-sample instead of per-class averaging");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every loss term");
    gc->add_option("--seed", gc_seed, "first seed");
    gc->add_option("--seeds", gc_seeds, "number of consecutive seeds")->check(CLI::PositiveNumber);
    gc->add_option("--fault", gc_fault, "scale analytic gradients by (1+fault)")->group("");

    auto* att = app.add_subcommand("attention", "export attribute-region scores and region weights as CSV");
    att->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
    att->add_option("--data", data, "dataset directory")->required();
    att->add_option("--samples", samples, "comma-separated sample ids")->required();
    att->add_option("--out", out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen) return cmd_generate(config_path, spec_flags, out);
        if (*train) return cmd_train(config_path, train_flags, data, out);
        if (*eval) return cmd_eval(checkpoint, data, model, out, per_sample);
        if (*gc) return cmd_gradcheck(gc_seed, gc_seeds, gc_fault);
        if (*att) return cmd_attention(checkpoint, data, samples, out);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const io::FormatError& e) {
        std::cerr << "format error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
