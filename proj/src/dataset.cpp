#include "aarr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "aarr/io.hpp"

namespace aarr {

void to_json(nlohmann::json& j, const SyntheticSpec& s) {
    j = nlohmann::json{{"k_seen", s.k_seen},
                       {"k_unseen", s.k_unseen},
                       {"n_attributes", s.n_attributes},
                       {"embed_dim", s.embed_dim},
                       {"raw_dim", s.raw_dim},
                       {"regions", s.regions},
                       {"samples_per_class", s.samples_per_class},
                       {"attribute_density", s.attribute_density},
                       {"noise_sigma", s.noise_sigma},
                       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, SyntheticSpec& s) {
    if (!j.is_object()) throw std::invalid_argument("synthetic spec must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "k_seen") s.k_seen = value.get<std::size_t>();
        else if (key == "k_unseen") s.k_unseen = value.get<std::size_t>();
        else if (key == "n_attributes") s.n_attributes = value.get<std::size_t>();
        else if (key == "embed_dim") s.embed_dim = value.get<std::size_t>();
        else if (key == "raw_dim") s.raw_dim = value.get<std::size_t>();
        else if (key == "regions") s.regions = value.get<std::size_t>();
        else if (key == "samples_per_class") s.samples_per_class = value.get<std::size_t>();
        else if (key == "attribute_density") s.attribute_density = value.get<double>();
        else if (key == "noise_sigma") s.noise_sigma = value.get<double>();
        else if (key == "seed") s.seed = value.get<std::uint64_t>();
        else throw std::invalid_argument("unknown synthetic spec key '" + key + "'");
    }
}

Tensor GzslDataset::sample(std::size_t index) const {
    const std::size_t d = raw_dim(), r = regions();
    const auto block = d * r;
    auto src = descriptors.data().subspan(index * block, block);
    return Tensor({d, r}, std::vector<double>(src.begin(), src.end()));
}

std::vector<std::size_t> GzslDataset::classes_of(ClassKind kind) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < class_kind.size(); ++k)
        if (class_kind[k] == kind) out.push_back(k);
    return out;
}

std::vector<std::size_t> GzslDataset::samples_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < split.size(); ++i)
        if (split[i] == s) out.push_back(i);
    return out;
}

Tensor GzslDataset::attribute_rows(const std::vector<std::size_t>& classes) const {
    const std::size_t n = attributes.cols();
    Tensor out({classes.size(), n});
    for (std::size_t r = 0; r < classes.size(); ++r)
        for (std::size_t i = 0; i < n; ++i) out(r, i) = attributes(classes[r], i);
    return out;
}

Tensor normalize_rows(const Tensor& raw) {
    Tensor out = raw;
    for (std::size_t k = 0; k < out.rows(); ++k) {
        double norm = 0.0;
        for (std::size_t i = 0; i < out.cols(); ++i) norm += out(k, i) * out(k, i);
        norm = std::sqrt(norm);
        if (norm == 0.0) continue;
        for (std::size_t i = 0; i < out.cols(); ++i) out(k, i) /= norm;
    }
    return out;
}

SyntheticDataset generate_with_truth(const SyntheticSpec& spec) {
    const std::size_t n = spec.n_attributes, D = spec.raw_dim, r = spec.regions;
    const std::size_t K = spec.k_seen + spec.k_unseen;
    if (spec.k_seen == 0 || n == 0 || spec.embed_dim == 0 || D == 0 || r == 0 || spec.samples_per_class == 0) {
        throw std::invalid_argument("synthetic spec: extents must be positive");
    }
    if (!(spec.attribute_density > 0.0 && spec.attribute_density < 1.0)) {
        throw std::invalid_argument("synthetic spec: attribute_density must lie in (0,1)");
    }
    if (!(spec.noise_sigma >= 0.0)) throw std::invalid_argument("synthetic spec: noise_sigma must be >= 0");
    const auto active = static_cast<std::size_t>(std::llround(spec.attribute_density * static_cast<double>(n)));
    if (active == 0) {
        throw std::invalid_argument("synthetic spec: attribute_density leaves classes with zero active attributes");
    }
    if (spec.samples_per_class < 2 && spec.k_seen > 0) {
        throw std::invalid_argument("synthetic spec: seen classes need at least 2 samples (train + test)");
    }

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    SyntheticDataset out;
    Tensor& sig = out.signatures = Tensor({n, D});
    for (std::size_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::size_t t = 0; t < D; ++t) {
            sig(i, t) = normal(rng);
            norm += sig(i, t) * sig(i, t);
        }
        norm = std::sqrt(norm);
        for (std::size_t t = 0; t < D; ++t) sig(i, t) /= norm;
    }

    GzslDataset& d = out.dataset;
    d.name = "synthetic-" + std::to_string(spec.seed);
    d.spec = spec;
    d.embeddings = Tensor({n, spec.embed_dim});
    for (auto& x : d.embeddings.data()) x = normal(rng) / std::sqrt(static_cast<double>(spec.embed_dim));

    // Distinct binary attribute vectors with a fixed number of active entries.
    d.attributes_raw = Tensor({K, n});
    std::set<std::vector<std::size_t>> used;
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<std::size_t> pick;
        for (int attempt = 0;; ++attempt) {
            std::vector<std::size_t> perm = all;
            std::shuffle(perm.begin(), perm.end(), rng);
            pick.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(active));
            std::sort(pick.begin(), pick.end());
            if (used.insert(pick).second || attempt >= 64) break;
        }
        for (auto i : pick) d.attributes_raw(k, i) = 1.0;
    }
    d.attributes = normalize_rows(d.attributes_raw);

    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    d.class_kind.assign(K, ClassKind::seen);
    for (std::size_t u = 0; u < spec.k_unseen; ++u) d.class_kind[order[u]] = ClassKind::unseen;

    const std::size_t per = spec.samples_per_class;
    const std::size_t N = K * per;
    const std::size_t n_test_seen = std::max<std::size_t>(1, per / 5);
    d.descriptors = Tensor({N, D, r});
    d.labels.resize(N);
    d.split.resize(N);
    d.ground_truth_regions.assign(N, std::vector<int>(n, -1));
    std::uniform_int_distribution<std::size_t> region_of(0, r - 1);
    std::size_t s = 0;
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t t = 0; t < per; ++t, ++s) {
            d.labels[s] = static_cast<std::uint32_t>(k);
            if (d.class_kind[k] == ClassKind::unseen) d.split[s] = Split::test_unseen;
            else d.split[s] = t + n_test_seen < per ? Split::train : Split::test_seen;
            double* x = d.descriptors.data().data() + s * D * r;
            if (spec.noise_sigma > 0.0)
                for (std::size_t e = 0; e < D * r; ++e) x[e] = spec.noise_sigma * normal(rng);
            for (std::size_t i = 0; i < n; ++i) {
                if (d.attributes_raw(k, i) == 0.0) continue;
                const std::size_t j = region_of(rng);
                d.ground_truth_regions[s][i] = static_cast<int>(j);
                for (std::size_t e = 0; e < D; ++e) x[e * r + j] += sig(i, e);
            }
        }
    }
    return out;
}

GzslDataset generate_synthetic(const SyntheticSpec& spec) { return generate_with_truth(spec).dataset; }

void write_dataset(const GzslDataset& d, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    io::write_tensor(dir / "descriptors.aarr", d.descriptors);
    io::write_u32(dir / "labels.aarr", d.labels);
    io::write_tensor(dir / "attributes.aarr", d.attributes_raw);
    io::write_tensor(dir / "embeddings.aarr", d.embeddings);
    std::vector<std::uint8_t> splits(d.split.size()), kinds(d.class_kind.size());
    std::transform(d.split.begin(), d.split.end(), splits.begin(), [](Split s) { return static_cast<std::uint8_t>(s); });
    std::transform(d.class_kind.begin(), d.class_kind.end(), kinds.begin(),
                   [](ClassKind c) { return static_cast<std::uint8_t>(c); });
    io::write_u8(dir / "splits.aarr", splits);
    io::write_u8(dir / "classes.aarr", kinds);

    nlohmann::json meta;
    meta["name"] = d.name;
    meta["spec"] = d.spec ? nlohmann::json(*d.spec) : nlohmann::json(nullptr);
    meta["ground_truth_regions"] =
        d.ground_truth_regions.empty() ? nlohmann::json(nullptr) : nlohmann::json(d.ground_truth_regions);
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

GzslDataset read_dataset(const std::filesystem::path& dir) {
    GzslDataset d;
    d.descriptors = io::read_tensor(dir / "descriptors.aarr");
    d.labels = io::read_u32(dir / "labels.aarr");
    d.attributes_raw = io::read_tensor(dir / "attributes.aarr");
    d.embeddings = io::read_tensor(dir / "embeddings.aarr");
    for (auto s : io::read_u8(dir / "splits.aarr")) {
        if (s > 2) throw io::FormatError("splits.aarr: invalid split code " + std::to_string(s), 0);
        d.split.push_back(static_cast<Split>(s));
    }
    for (auto c : io::read_u8(dir / "classes.aarr")) {
        if (c > 1) throw io::FormatError("classes.aarr: invalid class code " + std::to_string(c), 0);
        d.class_kind.push_back(static_cast<ClassKind>(c));
    }
    if (d.descriptors.ndim() != 3 || d.attributes_raw.ndim() != 2 || d.embeddings.ndim() != 2) {
        throw io::FormatError("dataset arrays have unexpected rank", 12);
    }
    if (d.labels.size() != d.descriptors.dim(0) || d.split.size() != d.labels.size() ||
        d.attributes_raw.rows() != d.class_kind.size() || d.attributes_raw.cols() != d.embeddings.rows()) {
        throw io::FormatError("dataset arrays have inconsistent extents", 16);
    }
    d.attributes = normalize_rows(d.attributes_raw);

    std::ifstream meta_in(dir / "meta.json");
    if (!meta_in) throw io::FormatError("missing meta.json", 0);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_in);
        d.name = meta.at("name").get<std::string>();
        if (!meta.at("spec").is_null()) d.spec = meta.at("spec").get<SyntheticSpec>();
        if (!meta.at("ground_truth_regions").is_null())
            d.ground_truth_regions = meta.at("ground_truth_regions").get<std::vector<std::vector<int>>>();
    } catch (const nlohmann::json::exception& e) {
        throw io::FormatError(std::string("meta.json: ") + e.what(), 0);
    }
    return d;
}

std::vector<Violation> validate_dataset(const GzslDataset& d) {
    std::vector<Violation> out;
    const std::size_t K = d.num_classes();
    for (std::size_t s = 0; s < d.num_samples(); ++s) {
        const std::size_t y = d.labels[s];
        if (y >= K) {
            out.push_back({"label_in_range", s, "sample label " + std::to_string(y) + " >= K"});
            continue;
        }
        const bool seen = d.class_kind[y] == ClassKind::seen;
        if (d.split[s] == Split::train && !seen)
            out.push_back({"train_labels_seen", s, "train sample carries unseen class " + std::to_string(y)});
        if (d.split[s] == Split::test_seen && !seen)
            out.push_back({"test_seen_labels_seen", s, "test_seen sample carries unseen class " + std::to_string(y)});
        if (d.split[s] == Split::test_unseen && seen)
            out.push_back({"test_unseen_labels_unseen", s, "test_unseen sample carries seen class " + std::to_string(y)});
    }
    std::vector<std::size_t> n_train(K, 0), n_test(K, 0);
    for (std::size_t s = 0; s < d.num_samples(); ++s) {
        if (d.labels[s] >= K) continue;
        (d.split[s] == Split::train ? n_train : n_test)[d.labels[s]]++;
    }
    for (std::size_t k = 0; k < K; ++k) {
        if (n_test[k] == 0) out.push_back({"class_has_test_sample", k, "class has no test sample"});
        if (d.class_kind[k] == ClassKind::seen && n_train[k] == 0)
            out.push_back({"seen_class_has_train_sample", k, "seen class has no train sample"});
    }
    for (std::size_t k = 0; k < d.attributes.rows(); ++k) {
        double norm = 0.0;
        for (std::size_t i = 0; i < d.attributes.cols(); ++i) norm += d.attributes(k, i) * d.attributes(k, i);
        if (std::abs(std::sqrt(norm) - 1.0) > 1e-9)
            out.push_back({"attribute_row_normalized", k, "attribute row norm " + std::to_string(std::sqrt(norm))});
    }
    return out;
}

}  // namespace aarr
