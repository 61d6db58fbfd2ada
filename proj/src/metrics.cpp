#include "aarr/metrics.hpp"

#include <fstream>
#include <iomanip>

#include "aarr/parallel.hpp"

namespace aarr {

double harmonic_mean(double seen, double unseen) {
    const double sum = seen + unseen;
    return sum > 0.0 ? 2.0 * seen * unseen / sum : 0.0;
}

std::size_t predict(const Tensor& logits, std::span<const std::size_t> subset) {
    if (subset.empty()) throw ContractError("predict: empty class subset");
    std::size_t best = subset[0];
    for (auto k : subset) {
        if (k >= logits.numel()) throw ContractError("predict: class " + std::to_string(k) + " out of range");
        if (logits[k] > logits[best] || (logits[k] == logits[best] && k < best)) best = k;
    }
    return best;
}

std::size_t predict(const ArcModel& model, const Tensor& x, const Tensor& v, const Tensor& a,
                    std::span<const std::size_t> subset) {
    return predict(arc::run(model, x, v, a).z, subset);
}

namespace {

struct Tally {
    std::size_t hit = 0, total = 0;
    double rate() const { return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0; }
};

double average(const std::map<std::size_t, Tally>& tallies, Averaging averaging) {
    if (tallies.empty()) return 0.0;
    if (averaging == Averaging::per_sample) {
        Tally all;
        for (const auto& [k, t] : tallies) {
            all.hit += t.hit;
            all.total += t.total;
        }
        return all.rate();
    }
    double s = 0.0;
    for (const auto& [k, t] : tallies) s += t.rate();
    return s / static_cast<double>(tallies.size());
}

}  // namespace

GzslMetrics compute_metrics(const PredictionSet& preds, Averaging averaging) {
    std::map<std::size_t, Tally> seen, unseen, zsl;
    for (std::size_t i = 0; i < preds.labels.size(); ++i) {
        const std::size_t y = preds.labels[i];
        if (preds.split[i] == Split::test_seen) {
            auto& t = seen[y];
            ++t.total;
            t.hit += preds.gzsl[i] == y;
        } else if (preds.split[i] == Split::test_unseen) {
            auto& t = unseen[y];
            ++t.total;
            t.hit += preds.gzsl[i] == y;
            auto& z = zsl[y];
            ++z.total;
            z.hit += preds.zsl[i] == y;
        }
    }
    GzslMetrics m;
    m.S = average(seen, averaging);
    m.U = average(unseen, averaging);
    m.T = average(zsl, averaging);
    m.H = harmonic_mean(m.S, m.U);
    for (const auto& [k, t] : seen) m.per_class[k] = t.rate();
    for (const auto& [k, t] : unseen) m.per_class[k] = t.rate();
    for (const auto& [k, t] : zsl) m.per_class_zsl[k] = t.rate();
    return m;
}

PredictionSet predict_dataset(const ArcModel& model, const GzslDataset& data, const EvalOptions& opt) {
    std::vector<std::size_t> has_test(data.num_classes(), 0);
    std::vector<std::size_t> ids;
    for (std::size_t s = 0; s < data.num_samples(); ++s) {
        if (data.split[s] == Split::train) continue;
        ids.push_back(s);
        ++has_test[data.labels[s]];
    }
    for (std::size_t k = 0; k < data.num_classes(); ++k) {
        if (!has_test[k]) throw ContractError("evaluate: class " + std::to_string(k) + " has no test samples");
    }

    std::vector<std::size_t> all(data.num_classes());
    for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
    const std::vector<std::size_t> unseen = data.classes_of(ClassKind::unseen);
    const std::vector<std::size_t>& gzsl_set = opt.restrict_unseen_gzsl ? unseen : all;

    PredictionSet out;
    out.labels.resize(ids.size());
    out.gzsl.resize(ids.size());
    out.zsl.resize(ids.size(), 0);
    out.split.resize(ids.size());
    parallel_for(ids.size(), opt.threads, [&](std::size_t t) {
        const std::size_t s = ids[t];
        const Tensor z = arc::run(model, data.sample(s), data.embeddings, data.attributes).z;
        out.labels[t] = data.labels[s];
        out.split[t] = data.split[s];
        out.gzsl[t] = predict(z, gzsl_set);
        if (data.split[s] == Split::test_unseen && !unseen.empty()) out.zsl[t] = predict(z, unseen);
    });
    return out;
}

GzslMetrics evaluate(const ArcModel& model, const GzslDataset& data, const EvalOptions& opt) {
    return compute_metrics(predict_dataset(model, data, opt), opt.averaging);
}

nlohmann::json to_json(const GzslMetrics& m) {
    nlohmann::json per_class = nlohmann::json::object(), per_zsl = nlohmann::json::object();
    for (const auto& [k, v] : m.per_class) per_class[std::to_string(k)] = v;
    for (const auto& [k, v] : m.per_class_zsl) per_zsl[std::to_string(k)] = v;
    return {{"T", m.T}, {"U", m.U}, {"S", m.S}, {"H", m.H}, {"per_class", per_class}, {"per_class_zsl", per_zsl}};
}

GzslMetrics metrics_from_json(const nlohmann::json& j) {
    GzslMetrics m;
    m.T = j.at("T").get<double>();
    m.U = j.at("U").get<double>();
    m.S = j.at("S").get<double>();
    m.H = j.at("H").get<double>();
    for (const auto& [k, v] : j.at("per_class").items()) m.per_class[std::stoul(k)] = v.get<double>();
    if (j.contains("per_class_zsl"))
        for (const auto& [k, v] : j.at("per_class_zsl").items()) m.per_class_zsl[std::stoul(k)] = v.get<double>();
    return m;
}

void write_metrics(const GzslMetrics& m, const GzslDataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "metrics.json") << to_json(m).dump(2) << '\n';
    std::ofstream csv(dir / "metrics.csv");
    csv << "class,kind,gzsl_accuracy,zsl_accuracy\n" << std::setprecision(17);
    for (const auto& [k, acc] : m.per_class) {
        const bool unseen = data.class_kind[k] == ClassKind::unseen;
        csv << k << ',' << (unseen ? "unseen" : "seen") << ',' << acc << ',';
        if (auto z = m.per_class_zsl.find(k); z != m.per_class_zsl.end()) csv << z->second;
        csv << '\n';
    }
}

}  // namespace aarr
