#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "aarr/dataset.hpp"
#include "aarr/io.hpp"
#include "oracle.hpp"

using namespace aarr;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("aarr_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::vector<std::byte> header_2x3_f64() {
    std::vector<std::byte> b(24, std::byte{0});
    std::memcpy(b.data(), "AARR", 4);
    b[4] = std::byte{1};
    b[8] = std::byte{1};
    b[12] = std::byte{2};
    b[16] = std::byte{2};
    b[20] = std::byte{3};
    return b;
}

std::size_t error_offset(const std::vector<std::byte>& bytes) {
    try {
        io::decode(bytes);
    } catch (const io::FormatError& e) {
        return e.offset();
    }
    ADD_FAILURE() << "decode accepted malformed bytes";
    return 0;
}

}  // namespace

TEST(Aarr, HeaderLayoutIsExact) {
    const Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    const auto bytes = io::encode(io::to_raw(t));
    ASSERT_EQ(bytes.size(), 24u + 48u);
    EXPECT_EQ(std::memcmp(bytes.data(), "AARR", 4), 0);
    EXPECT_EQ(std::memcmp(bytes.data(), header_2x3_f64().data(), 24), 0);
    double first;
    std::memcpy(&first, bytes.data() + 24, 8);
    EXPECT_EQ(first, 1.0);
}

TEST(Aarr, RoundTripF64IsBitExact) {
    std::mt19937_64 rng(11);
    const Tensor t = oracle::random_tensor({5, 7}, rng);
    EXPECT_EQ(io::to_tensor(io::decode(io::encode(io::to_raw(t)))), t);
}

TEST(Aarr, RoundTripF32RoundsOnce) {
    const Tensor t = Tensor::matrix(1, 2, {0.1, 2.5});
    const Tensor back = io::to_tensor(io::decode(io::encode(io::to_raw(t, io::DType::f32))));
    EXPECT_EQ(back[0], static_cast<double>(0.1f));
    EXPECT_EQ(back[1], 2.5);
}

TEST(Aarr, PayloadShortByEightBytesIsTruncation) {
    auto bytes = header_2x3_f64();
    bytes.resize(24 + 40);
    try {
        io::decode(bytes);
        FAIL() << "expected truncation";
    } catch (const io::FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("truncated payload"), std::string::npos);
        EXPECT_EQ(e.offset(), 64u);
    }
}

TEST(Aarr, CorruptedMagicReportsOffsetZero) {
    auto bytes = io::encode(io::to_raw(Tensor({2, 2}, 1.0)));
    bytes[1] = std::byte{'X'};
    EXPECT_EQ(error_offset(bytes), 0u);
}

TEST(Aarr, BadVersionDtypeAndRank) {
    const auto good = io::encode(io::to_raw(Tensor({2, 2}, 1.0)));
    auto v = good;
    v[4] = std::byte{2};
    EXPECT_EQ(error_offset(v), 4u);
    auto d = good;
    d[8] = std::byte{9};
    EXPECT_EQ(error_offset(d), 8u);
    auto n = good;
    n[12] = std::byte{0};
    EXPECT_EQ(error_offset(n), 12u);
}

TEST(Aarr, ZeroExtentAndOverflow) {
    auto z = header_2x3_f64();
    z[20] = std::byte{0};
    EXPECT_EQ(error_offset(z), 20u);
    auto o = header_2x3_f64();
    for (int i = 16; i < 24; ++i) o[i] = std::byte{0xff};
    EXPECT_EQ(error_offset(o), 20u);
}

TEST(Aarr, TrailingBytesRejected) {
    auto bytes = io::encode(io::to_raw(Tensor({1, 1}, 1.0)));
    bytes.push_back(std::byte{0});
    EXPECT_EQ(error_offset(bytes), 32u);
}

TEST(Aarr, ShortHeaderRejected) {
    const std::vector<std::byte> b(10, std::byte{0});
    EXPECT_THROW(io::decode(b), io::FormatError);
}

TEST(Aarr, MissingFileIsFormatError) {
    EXPECT_THROW(io::read_tensor("/nonexistent/x.aarr"), io::FormatError);
}

TEST(Synthetic, NoiselessSingleAttributeRegionIsTheSignature) {
    SyntheticSpec s;
    s.k_seen = 1;
    s.k_unseen = 0;
    s.n_attributes = 1;
    s.regions = 1;
    s.samples_per_class = 4;
    s.attribute_density = 0.5;
    s.noise_sigma = 0.0;
    const SyntheticDataset sd = generate_with_truth(s);
    for (std::size_t i = 0; i < sd.dataset.num_samples(); ++i) {
        const Tensor x = sd.dataset.sample(i);
        for (std::size_t d = 0; d < s.raw_dim; ++d) EXPECT_EQ(x(d, 0), sd.signatures(0, d));
    }
}

TEST(Synthetic, SameSeedIsBitIdentical) {
    SyntheticSpec s;
    s.seed = 7;
    EXPECT_EQ(generate_synthetic(s), generate_synthetic(s));
    SyntheticSpec t = s;
    t.seed = 8;
    EXPECT_FALSE(generate_synthetic(s) == generate_synthetic(t));
}

TEST(Synthetic, ShapesAndPartitions) {
    const GzslDataset d = generate_synthetic(SyntheticSpec{});
    EXPECT_EQ(d.num_samples(), 12u * 60u);
    EXPECT_EQ(d.descriptors.shape(), (Shape{720, 24, 4}));
    EXPECT_EQ(d.classes_of(ClassKind::seen).size(), 9u);
    EXPECT_EQ(d.classes_of(ClassKind::unseen).size(), 3u);
    std::size_t total = 0;
    for (Split s : {Split::train, Split::test_seen, Split::test_unseen}) total += d.samples_in(s).size();
    EXPECT_EQ(total, d.num_samples());
    EXPECT_TRUE(validate_dataset(d).empty());
}

TEST(Synthetic, EveryClassHasActiveAttributesAndRowsAreDistinct) {
    const GzslDataset d = generate_synthetic(SyntheticSpec{});
    std::set<std::vector<double>> rows;
    for (std::size_t k = 0; k < d.num_classes(); ++k) {
        std::vector<double> row;
        double active = 0;
        for (std::size_t i = 0; i < d.num_attributes(); ++i) {
            row.push_back(d.attributes_raw(k, i));
            active += d.attributes_raw(k, i);
        }
        EXPECT_GE(active, 1.0);
        rows.insert(row);
    }
    EXPECT_EQ(rows.size(), d.num_classes());
}

TEST(Synthetic, DensityTooLowIsRejected) {
    SyntheticSpec s;
    s.attribute_density = 0.01;
    EXPECT_THROW(generate_synthetic(s), std::invalid_argument);
}

TEST(Synthetic, GroundTruthMatchesActiveAttributes) {
    const GzslDataset d = generate_synthetic(SyntheticSpec{});
    for (std::size_t s = 0; s < d.num_samples(); ++s) {
        for (std::size_t i = 0; i < d.num_attributes(); ++i) {
            const bool active = d.attributes_raw(d.labels[s], i) > 0;
            const int region = d.ground_truth_regions[s][i];
            EXPECT_EQ(active, region >= 0);
            EXPECT_LT(region, static_cast<int>(d.regions()));
        }
    }
}

// Least-squares probe on the planted regions: concatenate each attribute's
// assigned region (zeros when inactive) and solve for one-vs-rest targets.
TEST(Synthetic, LinearProbeOnPlantedRegionsSeparatesTrainAtZeroNoise) {
    SyntheticSpec s;
    s.noise_sigma = 0.0;
    const SyntheticDataset sd = generate_with_truth(s);
    const GzslDataset& d = sd.dataset;
    const auto train = d.samples_in(Split::train);
    const std::size_t n = d.num_attributes(), D = d.raw_dim(), F = n * D, K = d.num_classes();
    std::vector<std::vector<double>> X;
    for (auto idx : train) {
        const Tensor x = d.sample(idx);
        std::vector<double> row(F, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const int j = d.ground_truth_regions[idx][i];
            if (j < 0) continue;
            for (std::size_t q = 0; q < D; ++q) row[i * D + q] = x(q, static_cast<std::size_t>(j));
        }
        X.push_back(std::move(row));
    }
    // Ridge normal equations (X^T X + eps I) W = X^T Y by Gaussian elimination.
    std::vector<std::vector<double>> A(F, std::vector<double>(F + K, 0.0));
    for (std::size_t t = 0; t < X.size(); ++t) {
        for (std::size_t a = 0; a < F; ++a) {
            if (X[t][a] == 0.0) continue;
            for (std::size_t b = 0; b < F; ++b) A[a][b] += X[t][a] * X[t][b];
            A[a][F + d.labels[train[t]]] += X[t][a];
        }
    }
    for (std::size_t a = 0; a < F; ++a) A[a][a] += 1e-6;
    for (std::size_t c = 0; c < F; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < F; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        std::swap(A[c], A[piv]);
        for (std::size_t r = 0; r < F; ++r) {
            if (r == c || A[r][c] == 0.0) continue;
            const double f = A[r][c] / A[c][c];
            for (std::size_t k = c; k < F + K; ++k) A[r][k] -= f * A[c][k];
        }
    }
    std::size_t correct = 0;
    for (std::size_t t = 0; t < X.size(); ++t) {
        std::size_t best = 0;
        double best_score = -1e300;
        for (std::size_t k = 0; k < K; ++k) {
            double sc = 0.0;
            for (std::size_t a = 0; a < F; ++a) sc += X[t][a] * A[a][F + k] / A[a][a];
            if (sc > best_score) {
                best_score = sc;
                best = k;
            }
        }
        correct += best == d.labels[train[t]];
    }
    EXPECT_EQ(correct, X.size());
}

TEST(DatasetDir, RoundTripIsExact) {
    const GzslDataset d = generate_synthetic(SyntheticSpec{});
    const fs::path dir = scratch_dir("roundtrip");
    write_dataset(d, dir);
    EXPECT_EQ(read_dataset(dir), d);
    for (const char* f : {"descriptors.aarr", "labels.aarr", "attributes.aarr", "embeddings.aarr", "splits.aarr",
                          "classes.aarr", "meta.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    fs::remove_all(dir);
}

TEST(DatasetDir, CorruptDescriptorFileIsFormatError) {
    const GzslDataset d = generate_synthetic(SyntheticSpec{});
    const fs::path dir = scratch_dir("corrupt");
    write_dataset(d, dir);
    {
        std::fstream f(dir / "descriptors.aarr", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(0);
        f.write("ZZZZ", 4);
    }
    EXPECT_THROW(read_dataset(dir), io::FormatError);
    fs::remove_all(dir);
}

TEST(Validate, TrainSampleRelabeledToUnseenIsNamed) {
    GzslDataset d = generate_synthetic(SyntheticSpec{});
    const std::size_t victim = d.samples_in(Split::train).at(3);
    d.labels[victim] = static_cast<std::uint32_t>(d.classes_of(ClassKind::unseen).front());
    const auto v = validate_dataset(d);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].invariant, "train_labels_seen");
    EXPECT_EQ(v[0].index, victim);
}

TEST(Validate, UnnormalizedAttributeRowIsNamed) {
    GzslDataset d = generate_synthetic(SyntheticSpec{});
    for (std::size_t i = 0; i < d.num_attributes(); ++i) d.attributes(5, i) *= 2.0;
    const auto v = validate_dataset(d);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].invariant, "attribute_row_normalized");
    EXPECT_EQ(v[0].index, 5u);
}

TEST(Validate, SeenClassWithoutTrainSamples) {
    GzslDataset d = generate_synthetic(SyntheticSpec{});
    const std::size_t k = d.classes_of(ClassKind::seen).front();
    for (std::size_t s = 0; s < d.num_samples(); ++s)
        if (d.labels[s] == k) d.split[s] = Split::test_seen;
    const auto v = validate_dataset(d);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].invariant, "seen_class_has_train_sample");
    EXPECT_EQ(v[0].index, k);
}

TEST(SpecJson, UnknownKeyRejected) {
    nlohmann::json j = SyntheticSpec{};
    j["bogus"] = 1;
    EXPECT_THROW(j.get<SyntheticSpec>(), std::invalid_argument);
    nlohmann::json k = SyntheticSpec{};
    EXPECT_EQ(k.get<SyntheticSpec>(), SyntheticSpec{});
}
