#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "dq/binner.hpp"
#include "support/oracles.hpp"

namespace dq {
namespace {

const FeatureMatrix kLine = FeatureMatrix::from_rows({{-1}, {0}, {1}});

std::vector<std::vector<std::size_t>> members_of(const BinSet& set) {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& b : set.bins) out.push_back(b.members);
    return out;
}

QuantizeConfig bins_config(std::size_t n, bool center = true) {
    QuantizeConfig c;
    c.num_bins = n;
    c.center_features = center;
    return c;
}

TEST(GenerateBins, ThreePointLineOneSamplePerBin) {
    const auto set = generate_bins(kLine, bins_config(3));
    EXPECT_EQ(members_of(set), (std::vector<std::vector<std::size_t>>{{1}, {0}, {2}}));
    EXPECT_EQ(set.bins[0].gains, std::vector<double>{-2.0});
    EXPECT_EQ(set.stratum_name(), "all");
}

TEST(GenerateBins, SingleBinHoldsEverythingInGreedyOrder) {
    const auto f = testing::gaussian_features(1, 30, 3);
    const auto set = generate_bins(f, bins_config(1));
    ASSERT_EQ(set.bins.size(), 1u);
    const auto oracle = testing::oracle_greedy_bins(testing::gaussian_rows(1, 30, 3), 1, true);
    EXPECT_EQ(set.bins[0].members, oracle[0]);
}

TEST(GenerateBins, LargeGaussianPartitionsEvenly) {
    const auto f = testing::gaussian_features(2, 5000, 2);
    const auto set = generate_bins(f, bins_config(10));
    std::vector<std::size_t> all;
    for (const auto& b : set.bins) {
        EXPECT_EQ(b.members.size(), 500u);
        all.insert(all.end(), b.members.begin(), b.members.end());
    }
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expect(5000);
    std::iota(expect.begin(), expect.end(), std::size_t{0});
    EXPECT_EQ(all, expect);
}

TEST(GenerateBins, RejectsBadBinCounts) {
    EXPECT_THROW(generate_bins(kLine, bins_config(0)), ValidationError);
    try {
        generate_bins(kLine, bins_config(4));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_STREQ(e.what(), "num_bins exceeds samples");
    }
}

TEST(GenerateBins, RejectsNonFiniteFeatures) {
    const auto f = FeatureMatrix::from_rows({{1}, {std::nan("")}, {2}});
    EXPECT_THROW(generate_bins(f, bins_config(1)), ValidationError);
}

TEST(BinSizes, CeilingWithRemainderAndNoEmptyBins) {
    EXPECT_EQ(bin_sizes(5000, 10), std::vector<std::size_t>(10, 500));
    EXPECT_EQ(bin_sizes(10, 3), (std::vector<std::size_t>{4, 4, 2}));
    EXPECT_EQ(bin_sizes(9, 4), (std::vector<std::size_t>{3, 3, 2, 1}));
    EXPECT_EQ(bin_sizes(4, 4), (std::vector<std::size_t>{1, 1, 1, 1}));
    for (std::size_t m = 1; m < 60; ++m) {
        for (std::size_t n = 1; n <= m; ++n) {
            const auto s = bin_sizes(m, n);
            EXPECT_EQ(s, testing::oracle_bin_sizes(m, n));
            EXPECT_EQ(std::accumulate(s.begin(), s.end(), std::size_t{0}), m);
            for (auto v : s) EXPECT_GE(v, 1u);
        }
    }
}

TEST(GenerateBins, MatchesDirectGreedyOracle) {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t m_samples = 5 + gen() % 80, dim = 1 + gen() % 8;
        const std::size_t n = 1 + gen() % std::min<std::size_t>(m_samples, 12);
        const bool center = trial % 2 == 0;
        const auto rows = testing::gaussian_rows(1000 + trial, m_samples, dim);
        const auto set = generate_bins(FeatureMatrix::from_rows(rows), bins_config(n, center));
        EXPECT_EQ(members_of(set), testing::oracle_greedy_bins(rows, n, center)) << "trial " << trial;
    }
}

TEST(GenerateBins, PoolNeverRevisitsEarlierBins) {
    const auto f = testing::gaussian_features(4, 300, 4);
    std::set<std::size_t> closed;
    std::size_t current_bin = 0;
    std::vector<std::size_t> in_bin;
    auto observer = [&](const SelectionStep& step) {
        if (step.bin_index != current_bin) {
            closed.insert(in_bin.begin(), in_bin.end());
            in_bin.clear();
            current_bin = step.bin_index;
        }
        for (std::size_t local : step.state.pool()) {
            EXPECT_FALSE(closed.count(step.to_global[local]));
        }
        in_bin.push_back(step.to_global[step.chosen.candidate]);
    };
    generate_bins(f, bins_config(6), Executor::sequential(), observer);
    EXPECT_EQ(closed.size(), 250u);
}

TEST(GenerateBins, ReproducibleAcrossRuns) {
    const auto f = testing::gaussian_features(5, 400, 6);
    EXPECT_EQ(generate_bins(f, bins_config(7)), generate_bins(f, bins_config(7)));
}

LabelVector two_class_labels(std::size_t per_class) {
    std::vector<std::int64_t> l;
    for (std::size_t i = 0; i < 2 * per_class; ++i) l.push_back(static_cast<std::int64_t>(i % 2));
    return LabelVector::from_labels(l);
}

TEST(GenerateBinsStratified, TwoClassesPartitionTheirOwnIndices) {
    const auto f = testing::gaussian_features(6, 8, 2);
    const auto sets = generate_bins_stratified(f, two_class_labels(4), bins_config(2));
    ASSERT_EQ(sets.size(), 2u);
    check_partition(sets[0], std::vector<std::size_t>{0, 2, 4, 6});
    check_partition(sets[1], std::vector<std::size_t>{1, 3, 5, 7});
    EXPECT_EQ(sets[0].stratum, 0);
    EXPECT_EQ(sets[1].stratum_name(), "1");
}

TEST(GenerateBinsStratified, SingleClassEqualsUnstratified) {
    const auto f = testing::gaussian_features(7, 60, 3);
    const auto labels = LabelVector::from_labels(std::vector<std::int64_t>(60, 0));
    const auto sets = generate_bins_stratified(f, labels, bins_config(5));
    ASSERT_EQ(sets.size(), 1u);
    EXPECT_EQ(members_of(sets[0]), members_of(generate_bins(f, bins_config(5))));
}

TEST(GenerateBinsStratified, UnevenClassSizes) {
    const auto f = testing::gaussian_features(8, 15, 2);
    std::vector<std::int64_t> l(15, 1);
    for (std::size_t i : {0, 3, 5, 9, 12, 14}) l[i] = 0;
    const auto sets = generate_bins_stratified(f, LabelVector::from_labels(l), bins_config(3));
    ASSERT_EQ(sets.size(), 2u);
    for (const auto& b : sets[0].bins) EXPECT_EQ(b.members.size(), 2u);
    for (const auto& b : sets[1].bins) EXPECT_EQ(b.members.size(), 3u);
}

TEST(GenerateBinsStratified, MatchesOraclePerClass) {
    const auto rows = testing::gaussian_rows(9, 90, 3);
    std::vector<std::int64_t> l(90);
    for (std::size_t i = 0; i < 90; ++i) l[i] = static_cast<std::int64_t>((i * 7) % 3);
    const auto sets =
        generate_bins_stratified(FeatureMatrix::from_rows(rows), LabelVector::from_labels(l), bins_config(4));
    for (const auto& set : sets) {
        testing::Rows sub;
        std::vector<std::size_t> global;
        for (std::size_t i = 0; i < 90; ++i) {
            if (l[i] == *set.stratum) {
                sub.push_back(rows[i]);
                global.push_back(i);
            }
        }
        auto oracle = testing::oracle_greedy_bins(sub, 4, true);
        for (auto& b : oracle) {
            for (auto& i : b) i = global[i];
        }
        EXPECT_EQ(members_of(set), oracle);
    }
}

TEST(GenerateBinsStratified, SmallClassIsNamed) {
    const auto f = testing::gaussian_features(10, 7, 2);
    const auto labels = LabelVector::from_labels({0, 0, 0, 1, 1, 0, 0});
    try {
        generate_bins_stratified(f, labels, bins_config(3));
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
    }
}

TEST(BinRadii, ThreePointLine) {
    const auto set = generate_bins(kLine, bins_config(3));
    EXPECT_EQ(bin_radii(set, kLine), (std::vector<double>{0, 1, 1}));
}

TEST(BinRadii, SingletonAtMeanHasZeroRadius) {
    const auto f = FeatureMatrix::from_rows({{2, 2}, {4, 4}, {3, 3}});
    BinSet set;
    set.bins = {Bin{0, {2}, {0.0}}, Bin{1, {0, 1}, {0.0, 0.0}}};
    set.universe_size = 3;
    const auto r = bin_radii(set, f);
    EXPECT_EQ(r[0], 0.0);
    EXPECT_NEAR(r[1], std::sqrt(2.0), 1e-15);
}

TEST(BinRadii, NeverExceedGlobalMaxNorm) {
    const auto f = center_features(testing::gaussian_features(11, 500, 3)).first;
    const auto set = generate_bins(f, bins_config(10));
    double max_norm = 0.0;
    for (std::size_t i = 0; i < 500; ++i) max_norm = std::max(max_norm, std::sqrt(detail::dot(f.row(i), f.row(i))));
    for (double r : bin_radii(set, f)) EXPECT_LE(r, max_norm + 1e-12);
}

TEST(Quantize, StratifiesOnlyWhenAskedAndLabelled) {
    const auto f = testing::gaussian_features(12, 40, 2);
    const auto labels = two_class_labels(20);
    auto cfg = bins_config(4);
    EXPECT_EQ(quantize(f, &labels, cfg).size(), 2u);
    cfg.stratify_by_class = false;
    EXPECT_EQ(quantize(f, &labels, cfg).size(), 1u);
    EXPECT_EQ(quantize(f, nullptr, bins_config(4)).size(), 1u);
}

}  // namespace
}  // namespace dq
