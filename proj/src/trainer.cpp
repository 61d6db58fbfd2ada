#include "aarr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "aarr/io.hpp"
#include "aarr/parallel.hpp"

namespace aarr {

void TrainConfig::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
    if (epochs == 0) fail("epochs must be positive");
    if (warmup_epochs > epochs) fail("warmup_epochs must not exceed epochs");
    if (batch_size == 0) fail("batch_size must be positive");
    if (channels == 0) fail("channels must be positive");
    if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
    if (!(rmsprop_momentum >= 0.0 && rmsprop_momentum < 1.0)) fail("rmsprop_momentum must lie in [0,1)");
    if (!(rmsprop_alpha > 0.0 && rmsprop_alpha < 1.0)) fail("rmsprop_alpha must lie in (0,1)");
    if (!(rmsprop_eps > 0.0)) fail("rmsprop_eps must be positive");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (!(beta >= 0.0)) fail("beta must be >= 0");
    if (!(gamma >= 0.0)) fail("gamma must be >= 0");
    if (m == 0) fail("m must be positive");
    if (!(delta > 0.0 && delta < 1.0)) fail("delta must lie in (0,1)");
    if (threads == 0) fail("threads must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"epochs", c.epochs},
                       {"warmup_epochs", c.warmup_epochs},
                       {"batch_size", c.batch_size},
                       {"channels", c.channels},
                       {"learning_rate", c.learning_rate},
                       {"rmsprop_momentum", c.rmsprop_momentum},
                       {"rmsprop_alpha", c.rmsprop_alpha},
                       {"rmsprop_eps", c.rmsprop_eps},
                       {"weight_decay", c.weight_decay},
                       {"beta", c.beta},
                       {"gamma", c.gamma},
                       {"m", c.m},
                       {"delta", c.delta},
                       {"seed", c.seed},
                       {"uad_enabled", c.uad_enabled},
                       {"agl_enabled", c.agl_enabled},
                       {"literal_eq8", c.literal_eq8},
                       {"eval_teacher", c.eval_teacher},
                       {"check_invariants", c.check_invariants},
                       {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "epochs") c.epochs = value.get<std::size_t>();
        else if (key == "warmup_epochs") c.warmup_epochs = value.get<std::size_t>();
        else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
        else if (key == "channels") c.channels = value.get<std::size_t>();
        else if (key == "learning_rate") c.learning_rate = value.get<double>();
        else if (key == "rmsprop_momentum") c.rmsprop_momentum = value.get<double>();
        else if (key == "rmsprop_alpha") c.rmsprop_alpha = value.get<double>();
        else if (key == "rmsprop_eps") c.rmsprop_eps = value.get<double>();
        else if (key == "weight_decay") c.weight_decay = value.get<double>();
        else if (key == "beta") c.beta = value.get<double>();
        else if (key == "gamma") c.gamma = value.get<double>();
        else if (key == "m") c.m = value.get<std::size_t>();
        else if (key == "delta") c.delta = value.get<double>();
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "uad_enabled") c.uad_enabled = value.get<bool>();
        else if (key == "agl_enabled") c.agl_enabled = value.get<bool>();
        else if (key == "literal_eq8") c.literal_eq8 = value.get<bool>();
        else if (key == "eval_teacher") c.eval_teacher = value.get<bool>();
        else if (key == "check_invariants") c.check_invariants = value.get<bool>();
        else if (key == "threads") c.threads = value.get<std::size_t>();
        else throw std::invalid_argument("unknown train config key '" + key + "'");
    }
}

void InvariantLog::check(const std::string& name, bool ok, const std::string& detail) {
    ++checks[name];
    if (!ok) violations.push_back(name + (detail.empty() ? "" : ": " + detail));
}

ModelState init_state(const GzslDataset& data, const TrainConfig& config) {
    std::mt19937_64 rng(config.seed);
    ModelState s;
    s.student = init_arc_model(data.raw_dim(), config.channels, data.embed_dim(), rng);
    s.teacher = s.student;
    s.w_p = Tensor({config.channels, 1});
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(config.channels)));
    for (auto& x : s.w_p.data()) x = normal(rng);
    return s;
}

DistillTarget distill_target(const ArcModel& teacher, const Tensor& x, const Tensor& v, const Tensor& a,
                             std::size_t label, const uad::SimilaritySets& sets) {
    const uad::TeacherPass pass = uad::teacher_pass(teacher, x, v);
    Tensor g = uad::unseen_aware_map(teacher, pass, v, a, label, sets);
    return {pass.features, std::move(g)};
}

StepGraph build_step_graph(const ParamVars& params, const StepInputs& in) {
    using ad::Var;
    const std::size_t B = in.x.size();
    if (B == 0 || in.y.size() != B) throw ContractError("build_step_graph: empty or mismatched batch");
    const double inv_b = 1.0 / static_cast<double>(B);
    const Var v = Var::constant(in.v);
    const Var a = Var::constant(in.a);

    StepGraph g;
    std::vector<Var> features, scores;
    Var ce_sum;
    for (std::size_t b = 0; b < B; ++b) {
        const arc::Forward fw = arc::forward(params.student, Var::constant(in.x[b]), v, a);
        features.push_back(fw.f);
        scores.push_back(fw.p);
        g.scores.push_back(fw.p.value());
        const Var ce = arc::ce_loss(fw.z, in.y[b]);
        ce_sum = ce_sum.valid() ? ad::add(ce_sum, ce) : ce;
    }
    g.ce = ad::scale(ce_sum, inv_b);
    g.total = g.ce;
    if (!in.main_phase) return g;

    if (in.use_uad) {
        if (in.distill.size() != B) throw ContractError("build_step_graph: missing distillation targets");
        Var sum;
        for (std::size_t b = 0; b < B; ++b) {
            std::vector<double> w = in.frozen_weights ? (*in.frozen_weights)[b]
                                                      : uad::attribute_reweight(in.distill[b].activation, g.scores[b]);
            const Var term = uad::uad_loss(features[b], in.distill[b].teacher_features, w);
            g.region_weights.push_back(std::move(w));
            sum = sum.valid() ? ad::add(sum, term) : term;
        }
        g.uad = ad::scale(sum, inv_b);
        g.total = ad::add(g.total, ad::scale(g.uad, in.beta));
    }

    if (in.use_agl) {
        g.h_bar = agl::batch_prototypes(features, scores, in.literal_eq8);
        g.h_prime = agl::update_pool(params.pool, g.h_bar);
        Var sum;
        for (std::size_t b = 0; b < B; ++b) {
            const Var term = agl::agl_loss(g.h_prime, a, params.w_p, in.y[b]);
            sum = sum.valid() ? ad::add(sum, term) : term;
        }
        g.agl = ad::scale(sum, inv_b);
        g.total = ad::add(g.total, ad::scale(g.agl, in.gamma));
    }
    return g;
}

namespace {

void require_finite(double value, const char* term) {
    if (!std::isfinite(value)) {
        throw NumericError(std::string("non-finite ") + term + " loss (" + std::to_string(value) + ")");
    }
}

void check_step_invariants(InvariantLog& log, const StepGraph& g, const StepInputs& in, const ModelState& state) {
    for (const auto& p : g.scores) {
        double worst = 0.0;
        for (std::size_t i = 0; i < p.rows(); ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < p.cols(); ++j) s += p(i, j);
            worst = std::max(worst, std::abs(s - 1.0));
        }
        log.check("softmax_rows_sum_to_one", worst <= 1e-9, "deviation " + std::to_string(worst));
    }
    for (const auto& d : in.distill) {
        const auto [lo, hi] = std::minmax_element(d.activation.data().begin(), d.activation.data().end());
        log.check("tau_range", *lo >= 0.0 && *hi <= 1.0);
    }
    for (const auto& w : g.region_weights) {
        log.check("region_weight_range",
                  std::all_of(w.begin(), w.end(), [](double x) { return x >= 0.0 && x <= 1.0; }));
    }
    if (in.use_agl && in.main_phase) {
        const double lambda = state.pool.lambda();
        log.check("lambda_in_open_unit_interval", lambda > 0.0 && lambda < 1.0, std::to_string(lambda));
        const Tensor& h = state.pool.h;
        const Tensor& hb = g.h_bar.value();
        const Tensor& hp = g.h_prime.value();
        bool ok = true;
        for (std::size_t i = 0; i < h.numel(); ++i) {
            const double lo = std::min(h[i], hb[i]), hi = std::max(h[i], hb[i]);
            const double slack = 1e-12 * std::max(1.0, std::abs(hi));
            ok = ok && hp[i] >= lo - slack && hp[i] <= hi + slack;
        }
        log.check("pool_interpolation_bounds", ok);
    }
}

}  // namespace

StepLosses train_step(ModelState& state, std::span<const std::size_t> batch, const TrainContext& ctx) {
    const GzslDataset& data = ctx.data;
    const TrainConfig& cfg = ctx.config;
    const bool main_phase = state.teacher_ready;
    if (main_phase && cfg.agl_enabled && !state.pool.initialized) {
        throw ContractError("train_step: attribute pool must be initialized after warm-up");
    }

    StepInputs in;
    in.v = data.embeddings;
    in.a = data.attributes;
    in.main_phase = main_phase;
    in.use_uad = cfg.uad_enabled;
    in.use_agl = cfg.agl_enabled;
    in.literal_eq8 = cfg.literal_eq8;
    in.beta = cfg.beta;
    in.gamma = cfg.gamma;
    for (auto s : batch) {
        in.x.push_back(data.sample(s));
        in.y.push_back(data.labels[s]);
    }
    if (main_phase && in.use_uad) {
        in.distill.resize(batch.size());
        parallel_for(batch.size(), cfg.threads, [&](std::size_t b) {
            in.distill[b] = distill_target(state.teacher, in.x[b], in.v, in.a, in.y[b], ctx.sets);
        });
    }

    ParamVars params;
    params.student = arc::as_leaves(state.student);
    const bool agl_active = main_phase && in.use_agl;
    if (agl_active) {
        params.pool = agl::pool_vars(state.pool);
        params.w_p = ad::Var::leaf(state.w_p);
    }

    const StepGraph g = build_step_graph(params, in);
    StepLosses losses;
    losses.ce = g.ce.value().item();
    losses.uad = g.uad.valid() ? g.uad.value().item() : 0.0;
    losses.agl = g.agl.valid() ? g.agl.value().item() : 0.0;
    losses.total = g.total.value().item();
    require_finite(losses.ce, "ce");
    require_finite(losses.uad, "uad");
    require_finite(losses.agl, "agl");
    require_finite(losses.total, "total");

    if (ctx.invariants) check_step_invariants(*ctx.invariants, g, in, state);

    std::vector<ad::Var> targets{params.student.head_w, params.student.head_b, params.student.w1, params.student.w2};
    if (agl_active) {
        targets.push_back(params.pool.h);
        targets.push_back(params.pool.theta);
        targets.push_back(params.w_p);
    }
    const std::vector<Tensor> grads = ad::backward(g.total, targets);

    const RmsPropOptions opt{cfg.learning_rate, cfg.rmsprop_momentum, cfg.weight_decay, cfg.rmsprop_alpha,
                             cfg.rmsprop_eps};
    auto& slots = state.optimizer.slots;
    rmsprop_update(state.student.head.weight, grads[0], slots["student.head.weight"], opt);
    rmsprop_update(state.student.head.bias, grads[1], slots["student.head.bias"], opt);
    rmsprop_update(state.student.arc.w1, grads[2], slots["student.w1"], opt);
    rmsprop_update(state.student.arc.w2, grads[3], slots["student.w2"], opt);
    if (agl_active) {
        // The stored pool moves to this step's mixture, then takes its own
        // gradient step.
        state.pool.h = g.h_prime.value();
        rmsprop_update(state.pool.h, grads[4], slots["agl.h"], opt);
        Tensor theta = Tensor::scalar(state.pool.theta_lambda);
        rmsprop_update(theta, grads[5], slots["agl.theta_lambda"], opt);
        state.pool.theta_lambda = theta.item();
        rmsprop_update(state.w_p, grads[6], slots["agl.w_p"], opt);
    }
    return losses;
}

void ema_teacher(ModelState& state, double delta) {
    auto blend = [delta](Tensor& t, const Tensor& s) {
        require_same_shape(t, s, "ema_teacher");
        for (std::size_t i = 0; i < t.numel(); ++i) t[i] = t[i] * delta + s[i] * (1.0 - delta);
    };
    blend(state.teacher.head.weight, state.student.head.weight);
    blend(state.teacher.head.bias, state.student.head.bias);
    blend(state.teacher.arc.w1, state.student.arc.w1);
    blend(state.teacher.arc.w2, state.student.arc.w2);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

}  // namespace

std::vector<std::size_t> epoch_order(std::span<const std::size_t> samples, std::uint64_t seed, std::size_t epoch) {
    const std::uint64_t stream = splitmix64(splitmix64(seed) ^ (0xD1B54A32D192ED03ull * (epoch + 1)));
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed;
    keyed.reserve(samples.size());
    for (auto s : samples) keyed.emplace_back(splitmix64(stream ^ splitmix64(s)), s);
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> out;
    out.reserve(keyed.size());
    for (const auto& [k, s] : keyed) out.push_back(s);
    return out;
}

const ArcModel& eval_model(const ModelState& state, bool teacher) { return teacher ? state.teacher : state.student; }

FitResult fit(const GzslDataset& data, const TrainConfig& config, const FitOptions& options) {
    config.validate();
    FitResult result;
    ModelState& state = result.state;
    state = init_state(data, config);

    const auto seen = data.classes_of(ClassKind::seen);
    const auto unseen = data.classes_of(ClassKind::unseen);
    result.sets = uad::build_similarity_sets(data.attributes, seen, unseen, config.m);
    const std::vector<std::size_t> train = data.samples_in(Split::train);
    if (train.empty()) throw ContractError("fit: dataset has no training samples");

    InvariantLog* log = options.invariants;
    const TrainContext ctx{data, config, result.sets, log};
    for (std::size_t e = 0; e < config.epochs; ++e) {
        if (e == config.warmup_epochs && !state.teacher_ready) {
            state.teacher = state.student;
            state.teacher_ready = true;
            if (config.agl_enabled) agl::init_pool(state.pool, state.teacher, data, train);
        }
        const ArcModel teacher_at_start = state.teacher;

        EpochRecord rec;
        rec.epoch = e + 1;
        rec.main_phase = state.teacher_ready;
        const std::vector<std::size_t> order = epoch_order(train, config.seed, e);
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const StepLosses l = train_step(state, std::span(order).subspan(start, end - start), ctx);
            rec.losses.ce += l.ce;
            rec.losses.uad += l.uad;
            rec.losses.agl += l.agl;
            rec.losses.total += l.total;
            ++steps;
        }
        const double inv = 1.0 / static_cast<double>(steps);
        rec.losses.ce *= inv;
        rec.losses.uad *= inv;
        rec.losses.agl *= inv;
        rec.losses.total *= inv;

        if (log) log->check("teacher_frozen_within_epoch", state.teacher == teacher_at_start);
        if (state.teacher_ready) ema_teacher(state, config.delta);
        state.epoch = e + 1;

        EvalOptions eo;
        eo.threads = config.threads;
        rec.metrics = evaluate(eval_model(state, config.eval_teacher), data, eo);
        result.history.push_back(rec);
        if (options.on_epoch) options.on_epoch(rec);
        if (options.checkpoint_dir) {
            std::ostringstream name;
            name << "epoch_" << std::setw(3) << std::setfill('0') << rec.epoch;
            save_checkpoint(*options.checkpoint_dir / name.str(), state, config, result.history, result.sets);
        }
    }
    return result;
}

std::string history_csv_header() { return "epoch,phase,ce,uad,agl,total,T,U,S,H"; }

std::string history_csv_row(const EpochRecord& r) {
    std::ostringstream os;
    os << std::setprecision(17) << r.epoch << ',' << (r.main_phase ? "main" : "warmup") << ',' << r.losses.ce << ','
       << r.losses.uad << ',' << r.losses.agl << ',' << r.losses.total << ',' << r.metrics.T << ',' << r.metrics.U
       << ',' << r.metrics.S << ',' << r.metrics.H;
    return os.str();
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << history_csv_header() << '\n';
    for (const auto& r : history) out << history_csv_row(r) << '\n';
}

nlohmann::json to_json(const uad::SimilaritySets& sets) {
    nlohmann::json by_seen = nlohmann::json::object();
    for (const auto& [k, us] : sets.by_seen) by_seen[std::to_string(k)] = us;
    return {{"m", sets.m}, {"by_seen", by_seen}};
}

namespace {

const char* const kModelFiles[] = {"head_weight", "head_bias", "w1", "w2"};

void save_model(const std::filesystem::path& dir, const std::string& prefix, const ArcModel& m) {
    const Tensor* parts[] = {&m.head.weight, &m.head.bias, &m.arc.w1, &m.arc.w2};
    for (int i = 0; i < 4; ++i) io::write_tensor(dir / (prefix + "_" + kModelFiles[i] + ".aarr"), *parts[i]);
}

ArcModel load_model(const std::filesystem::path& dir, const std::string& prefix) {
    ArcModel m;
    Tensor* parts[] = {&m.head.weight, &m.head.bias, &m.arc.w1, &m.arc.w2};
    for (int i = 0; i < 4; ++i) *parts[i] = io::read_tensor(dir / (prefix + "_" + kModelFiles[i] + ".aarr"));
    const std::size_t C = m.head.weight.rows();
    if (m.head.bias.shape() != Shape{C, 1} || m.arc.w1.cols() != C || m.arc.w2.shape() != m.arc.w1.shape()) {
        throw io::FormatError(dir.string() + ": inconsistent " + prefix + " parameter shapes", 16);
    }
    return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const ModelState& state, const TrainConfig& config,
                     const std::vector<EpochRecord>& history, const uad::SimilaritySets& sets) {
    std::filesystem::create_directories(dir);
    save_model(dir, "student", state.student);
    save_model(dir, "teacher", state.teacher);
    io::write_tensor(dir / "w_p.aarr", state.w_p);
    if (state.pool.initialized) io::write_tensor(dir / "pool.aarr", state.pool.h);

    nlohmann::json slots = nlohmann::json::array();
    std::size_t idx = 0;
    for (const auto& [name, s] : state.optimizer.slots) {
        const std::string stem = "optim_" + std::to_string(idx++);
        io::write_tensor(dir / (stem + "_square_avg.aarr"), s.square_avg);
        io::write_tensor(dir / (stem + "_momentum.aarr"), s.momentum_buffer);
        slots.push_back({{"name", name}, {"file_stem", stem}});
    }

    nlohmann::json trace = nlohmann::json::array();
    for (const auto& r : history) {
        trace.push_back({{"epoch", r.epoch},
                         {"phase", r.main_phase ? "main" : "warmup"},
                         {"ce", r.losses.ce},
                         {"uad", r.losses.uad},
                         {"agl", r.losses.agl},
                         {"total", r.losses.total}});
    }
    nlohmann::json manifest{{"format_version", io::kFormatVersion},
                            {"epoch", state.epoch},
                            {"config", config},
                            {"loss_trace", trace},
                            {"metrics", history.empty() ? nlohmann::json(nullptr) : to_json(history.back().metrics)},
                            {"teacher_ready", state.teacher_ready},
                            {"pool_initialized", state.pool.initialized},
                            {"theta_lambda", state.pool.theta_lambda},
                            {"lambda", state.pool.lambda()},
                            {"similarity_sets", to_json(sets)},
                            {"optimizer_slots", slots}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    Checkpoint ck;
    std::ifstream in(dir / "manifest.json");
    if (!in) throw io::FormatError("missing manifest.json in " + dir.string(), 0);
    try {
        ck.manifest = nlohmann::json::parse(in);
        ck.config = ck.manifest.at("config").get<TrainConfig>();
        ck.state.epoch = ck.manifest.at("epoch").get<std::size_t>();
        ck.state.teacher_ready = ck.manifest.at("teacher_ready").get<bool>();
        ck.state.pool.initialized = ck.manifest.at("pool_initialized").get<bool>();
        ck.state.pool.theta_lambda = ck.manifest.at("theta_lambda").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw io::FormatError(std::string("manifest.json: ") + e.what(), 0);
    } catch (const std::invalid_argument& e) {
        throw io::FormatError(std::string("manifest.json: ") + e.what(), 0);
    }
    ck.state.student = load_model(dir, "student");
    ck.state.teacher = load_model(dir, "teacher");
    ck.state.w_p = io::read_tensor(dir / "w_p.aarr");
    if (ck.state.pool.initialized) ck.state.pool.h = io::read_tensor(dir / "pool.aarr");
    for (const auto& s : ck.manifest.value("optimizer_slots", nlohmann::json::array())) {
        const std::string stem = s.at("file_stem").get<std::string>();
        RmsPropSlots slot{io::read_tensor(dir / (stem + "_square_avg.aarr")),
                          io::read_tensor(dir / (stem + "_momentum.aarr"))};
        ck.state.optimizer.slots[s.at("name").get<std::string>()] = std::move(slot);
    }
    return ck;
}

}  // namespace aarr
