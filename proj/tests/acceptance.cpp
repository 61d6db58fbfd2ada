// Acceptance runner: one PASS/FAIL line per criterion.
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "aarr/agl.hpp"
#include "aarr/arc.hpp"
#include "aarr/gradcheck.hpp"
#include "aarr/metrics.hpp"
#include "aarr/trainer.hpp"
#include "aarr/uad.hpp"
#include "oracle.hpp"

using namespace aarr;
using ad::Var;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr std::size_t kGradSeeds = 20;
constexpr double kGradBudgetSeconds = 60.0;
constexpr double kOracleTolerance = 1e-10;
constexpr double kOracleBudgetSeconds = 30.0;
constexpr std::size_t kOracleTrials = 50;
constexpr double kEmaDelta = 0.9995;
constexpr double kEmaTolerance = 1e-12;
constexpr double kHarmonicTarget = 0.735;
constexpr double kHarmonicTolerance = 0.0005;
constexpr double kAblationMargin = 0.02;
constexpr double kAblationBudgetSeconds = 300.0;
constexpr std::size_t kBenchmarkSeeds[] = {0, 1, 2};
constexpr std::size_t kBenchmarkEpochs = 30;

struct Line {
    std::string name;
    bool pass = false;
    std::string detail;
};

std::vector<Line> g_lines;

void report(const std::string& name, bool pass, const std::string& detail) {
    g_lines.push_back({name, pass, detail});
    std::printf("%s %-22s %s\n", pass ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor from_grid(const oracle::Grid& g) {
    Tensor t({g.size(), g[0].size()});
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = 0; j < g[0].size(); ++j) t(i, j) = g[i][j];
    return t;
}

SyntheticSpec benchmark_spec(std::uint64_t seed) {
    SyntheticSpec s;
    s.k_seen = 9;
    s.k_unseen = 3;
    s.n_attributes = 16;
    s.regions = 4;
    s.raw_dim = 24;
    s.samples_per_class = 60;
    s.noise_sigma = 0.3;
    s.seed = seed;
    return s;
}

TrainConfig benchmark_config(std::uint64_t seed, bool uad, bool agl, std::size_t epochs) {
    TrainConfig c;
    c.seed = seed;
    c.epochs = epochs;
    c.uad_enabled = uad;
    c.agl_enabled = agl;
    return c;
}

void gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::string worst_where;
    bool all = true;
    for (std::size_t s = 0; s < kGradSeeds; ++s) {
        GradcheckOptions o;
        o.seed = s;
        o.channels = 8;
        o.regions = 6;
        o.n_attributes = 10;
        o.embed_dim = 12;
        o.k_seen = 5;
        o.k_unseen = 2;
        o.step = 1e-5;
        o.tolerance = kGradTolerance;
        const GradcheckReport r = run_gradcheck(o);
        all = all && r.passed;
        for (const auto& t : r.terms) {
            if (t.worst_rel_error > worst) {
                worst = t.worst_rel_error;
                worst_where = t.name + "/" + t.worst_param + " seed " + std::to_string(s);
            }
        }
    }
    const double secs = seconds_since(t0);
    report("gradient_correctness", all && worst <= kGradTolerance && secs < kGradBudgetSeconds,
           fmt("worst rel error %.3e (%s) over %zu seeds, %.1fs", worst, worst_where.c_str(), kGradSeeds, secs));
}

void oracle_equivalence() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    double att = 0, logits = 0, protos = 0, pool = 0, reweight = 0;
    std::size_t set_mismatch = 0;
    for (std::size_t t = 0; t < kOracleTrials; ++t) {
        const std::size_t D = 5 + t % 4, C = 4 + t % 5, r = 2 + t % 5, n = 6 + t % 6, dv = 3 + t % 5, K = 5 + t % 4;
        ArcModel m = init_arc_model(D, C, dv, rng);
        m.head.bias = oracle::random_tensor({C, 1}, rng, 0.3);
        const Tensor x = oracle::random_tensor({D, r}, rng);
        const Tensor v = oracle::random_tensor({n, dv}, rng);
        const Tensor a = normalize_rows(oracle::random_uniform({K, n}, rng, 0.0, 1.0));
        const auto out = arc::run(m, x, v, a);
        const auto f = oracle::features(m.head.weight, m.head.bias, x);
        const auto p = oracle::attention_scores(f, v, m.arc.w1);
        att = std::max(att, oracle::max_abs_diff(out.p, from_grid(p)));
        const auto z = oracle::class_logits(f, p, v, m.arc.w2, a);
        for (std::size_t k = 0; k < K; ++k) logits = std::max(logits, std::abs(out.z[k] - z[k]));

        std::vector<Var> fs, ps;
        std::vector<oracle::Grid> fg, pg;
        for (int b = 0; b < 3; ++b) {
            const Tensor fb = oracle::random_uniform({C, r}, rng, 0.0, 2.0);
            const Tensor pb = ad::softmax_tensor(oracle::random_tensor({n, r}, rng), 1);
            fs.push_back(Var::constant(fb));
            ps.push_back(Var::constant(pb));
            fg.push_back(oracle::grid(fb));
            pg.push_back(oracle::grid(pb));
        }
        for (bool literal : {false, true}) {
            protos = std::max(protos, oracle::max_abs_diff(agl::batch_prototypes(fs, ps, literal).value(),
                                                           from_grid(oracle::batch_prototypes(fg, pg, literal))));
        }

        std::vector<std::size_t> ids(K);
        std::iota(ids.begin(), ids.end(), 0);
        std::shuffle(ids.begin(), ids.end(), rng);
        const std::size_t ku = 1 + t % 3;
        const std::vector<std::size_t> seen(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(ku)),
            unseen(ids.end() - static_cast<std::ptrdiff_t>(ku), ids.end());
        for (std::size_t mm = 1; mm <= seen.size(); mm += 2) {
            if (uad::build_similarity_sets(a, seen, unseen, mm).by_seen != oracle::similarity_sets(a, seen, unseen, mm))
                ++set_mismatch;
        }

        const Tensor g = oracle::random_uniform({C, r}, rng, 0.0, 1.0);
        const Tensor ph = ad::softmax_tensor(oracle::random_tensor({n, r}, rng), 1);
        const auto w = uad::attribute_reweight(g, ph);
        const auto wo = oracle::attribute_reweight(g, ph);
        for (std::size_t j = 0; j < r; ++j) reweight = std::max(reweight, std::abs(w[j] - wo[j]));
    }
    for (std::uint64_t s = 0; s < 5; ++s) {
        SyntheticSpec spec;
        spec.samples_per_class = 4;
        spec.seed = s;
        const GzslDataset d = generate_synthetic(spec);
        std::mt19937_64 prng(s);
        const ArcModel t = init_arc_model(d.raw_dim(), 5 + s, d.embed_dim(), prng);
        const auto train = d.samples_in(Split::train);
        agl::AttributePool p;
        agl::init_pool(p, t, d, train);
        pool = std::max(pool, oracle::max_abs_diff(p.h, from_grid(oracle::init_pool(t, d, train))));
    }
    const double secs = seconds_since(t0);
    const double worst = std::max({att, logits, protos, pool, reweight});
    report("oracle_equivalence", worst <= kOracleTolerance && set_mismatch == 0 && secs < kOracleBudgetSeconds,
           fmt("max diff scores %.1e logits %.1e prototypes %.1e pool %.1e reweight %.1e, set mismatches %zu, %.1fs",
               att, logits, protos, pool, reweight, set_mismatch, secs));
}

void ema_arithmetic() {
    SyntheticSpec spec;
    spec.samples_per_class = 4;
    const GzslDataset d = generate_synthetic(spec);
    TrainConfig c;
    ModelState s = init_state(d, c);
    std::mt19937_64 rng(11);
    s.student = init_arc_model(d.raw_dim(), c.channels, d.embed_dim(), rng);
    const ModelState before = s;
    ema_teacher(s, kEmaDelta);
    double worst = 0.0;
    std::size_t count = 0;
    auto check = [&](const Tensor& t1, const Tensor& t0, const Tensor& st) {
        for (std::size_t i = 0; i < t0.numel(); ++i, ++count)
            worst = std::max(worst, std::abs((t1[i] - t0[i]) - (1.0 - kEmaDelta) * (st[i] - t0[i])));
    };
    check(s.teacher.head.weight, before.teacher.head.weight, s.student.head.weight);
    check(s.teacher.head.bias, before.teacher.head.bias, s.student.head.bias);
    check(s.teacher.arc.w1, before.teacher.arc.w1, s.student.arc.w1);
    check(s.teacher.arc.w2, before.teacher.arc.w2, s.student.arc.w2);
    report("ema_arithmetic", worst <= kEmaTolerance && s.student == before.student,
           fmt("max deviation %.2e over %zu parameters", worst, count));
}

void harmonic_mean_reproduction() {
    PredictionSet ps;
    auto add = [&](std::size_t k, int hit, int total, Split split) {
        for (int i = 0; i < total; ++i) {
            ps.labels.push_back(k);
            ps.gzsl.push_back(i < hit ? k : k + 1);
            ps.zsl.push_back(k);
            ps.split.push_back(split);
        }
    };
    add(0, 730, 1000, Split::test_seen);
    add(2, 741, 1000, Split::test_unseen);
    const GzslMetrics m = compute_metrics(ps);
    report("harmonic_mean", std::abs(m.H - kHarmonicTarget) <= kHarmonicTolerance,
           fmt("U=%.3f S=%.3f H=%.4f", m.U, m.S, m.H));
}

struct ModeRun {
    std::vector<double> H;  // per epoch, index 0 is epoch 1
};

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

void ablation_and_stability() {
    const auto t0 = std::chrono::steady_clock::now();
    enum Mode { ce, uad_only, agl_only, full };
    const char* names[] = {"ce", "uad", "agl", "full"};
    std::vector<double> final_h[4], decline[4];
    for (auto seed : kBenchmarkSeeds) {
        const GzslDataset d = generate_synthetic(benchmark_spec(seed));
        for (int mode = ce; mode <= full; ++mode) {
            const bool uad = mode == uad_only || mode == full, agl = mode == agl_only || mode == full;
            // CE-only and full runs continue to three times the longest possible
            // best epoch; histories are prefixes of each other, so one run serves both.
            const bool extended = mode == ce || mode == full;
            const std::size_t epochs = extended ? 3 * kBenchmarkEpochs : kBenchmarkEpochs;
            const FitResult r = fit(d, benchmark_config(seed, uad, agl, epochs));
            std::vector<double> h;
            for (const auto& e : r.history) h.push_back(e.metrics.H);
            final_h[mode].push_back(h[kBenchmarkEpochs - 1]);
            if (extended) {
                const auto best = static_cast<std::size_t>(
                    std::max_element(h.begin(), h.begin() + kBenchmarkEpochs) - h.begin());
                decline[mode].push_back(h[best] - h[3 * (best + 1) - 1]);
            }
        }
    }
    const double secs = seconds_since(t0);
    double H[4];
    std::string per_mode;
    for (int m = ce; m <= full; ++m) {
        H[m] = mean(final_h[m]);
        per_mode += fmt("%s=%.4f ", names[m], H[m]);
    }
    const bool order = H[full] >= H[ce] + kAblationMargin && H[full] >= std::max(H[uad_only], H[agl_only]);
    report("ablation_ordering", order && secs < kAblationBudgetSeconds,
           fmt("mean H over %zu seeds: %s(need full >= ce + %.2f and >= max(uad, agl)), %.1fs",
               std::size(kBenchmarkSeeds), per_mode.c_str(), kAblationMargin, secs));
    const double dc = mean(decline[ce]), df = mean(decline[full]);
    report("distillation_stability", df < dc, fmt("H decline from best epoch to 3x best: full %.4f, ce %.4f", df, dc));
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void determinism() {
    const fs::path root = fs::temp_directory_path() / ("aarr_accept_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const GzslDataset d = generate_synthetic(benchmark_spec(0));
    TrainConfig c = benchmark_config(0, true, true, 8);
    c.warmup_epochs = 3;
    for (const char* run : {"a", "b"}) {
        FitOptions o;
        o.checkpoint_dir = root / run / "checkpoints";
        const FitResult r = fit(d, c, o);
        write_history_csv(r.history, root / run / "history.csv");
    }
    std::size_t files = 0, differing = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
        if (!e.is_regular_file()) continue;
        ++files;
        const fs::path other = root / "b" / fs::relative(e.path(), root / "a");
        if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
    }
    std::size_t files_b = 0;
    for (const auto& e : fs::recursive_directory_iterator(root / "b")) files_b += e.is_regular_file();
    fs::remove_all(root);
    report("determinism", differing == 0 && files == files_b && files > 0,
           fmt("%zu files compared, %zu differ", files, differing));
}

void invariant_suite() {
    const GzslDataset d = generate_synthetic(benchmark_spec(0));
    TrainConfig c = benchmark_config(0, true, true, kBenchmarkEpochs);
    c.check_invariants = true;
    InvariantLog log;
    FitOptions o;
    o.invariants = &log;
    fit(d, c, o);
    const char* required[] = {"softmax_rows_sum_to_one", "tau_range", "lambda_in_open_unit_interval",
                              "pool_interpolation_bounds", "teacher_frozen_within_epoch"};
    std::string detail;
    bool covered = true;
    for (const char* name : required) {
        const auto it = log.checks.find(name);
        const std::size_t n = it == log.checks.end() ? 0 : it->second;
        covered = covered && n > 0;
        detail += fmt("%s=%zu ", name, n);
    }
    detail += fmt("violations=%zu", log.violations.size());
    report("invariant_suite", covered && log.violations.empty(), detail);
}

}  // namespace

// Usage: acceptance [--known-failure NAME]...
// A known failure still prints FAIL but does not make the exit status nonzero.
int main(int argc, char** argv) {
    std::vector<std::string> known;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--known-failure" && i + 1 < argc) {
            known.emplace_back(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--known-failure NAME]...\n", argv[0]);
            return 2;
        }
    }
    const std::vector<std::function<void()>> criteria = {
        gradient_correctness, oracle_equivalence, ema_arithmetic,    harmonic_mean_reproduction,
        ablation_and_stability, determinism,      invariant_suite,
    };
    for (const auto& run : criteria) {
        try {
            run();
        } catch (const std::exception& e) {
            report("error", false, e.what());
        }
    }
    std::size_t failed = 0, unexpected = 0;
    for (const auto& l : g_lines) {
        if (l.pass) continue;
        ++failed;
        if (std::find(known.begin(), known.end(), l.name) == known.end()) ++unexpected;
    }
    std::printf("%zu criteria, %zu failed, %zu not listed as known failures\n", g_lines.size(), failed, unexpected);
    return unexpected == 0 ? 0 : 1;
}
