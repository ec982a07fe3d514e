#include <gtest/gtest.h>

#include <numeric>

#include "dq/diagnostics.hpp"
#include "support/oracles.hpp"

namespace dq {
namespace {

TEST(Executor, ReduceIsSplitIndependent) {
    std::vector<std::uint64_t> v(100000);
    std::iota(v.begin(), v.end(), std::uint64_t{1});
    for (std::size_t threads : {1, 2, 4}) {
        Executor exec(threads);
        const auto sum = exec.reduce(
            v.size(), std::uint64_t{0},
            [&](std::size_t lo, std::size_t hi, std::uint64_t acc) {
                for (std::size_t i = lo; i < hi; ++i) acc += v[i];
                return acc;
            },
            [](std::uint64_t a, std::uint64_t b) { return a + b; }, 64);
        EXPECT_EQ(sum, 100000ull * 100001ull / 2);
    }
}

TEST(Executor, ForEachVisitsEveryIndexOnce) {
    Executor exec(4);
    std::vector<int> hits(5000, 0);
    exec.for_each(hits.size(), [&](std::size_t i) { ++hits[i]; }, 16);
    for (int h : hits) EXPECT_EQ(h, 1);
    EXPECT_EQ(exec.threads(), 4u);
}

TEST(Executor, SelectNextIgnoresThreadCount) {
    const auto f = testing::gaussian_features(1, 3000, 8);
    std::vector<std::size_t> all(3000);
    std::iota(all.begin(), all.end(), std::size_t{0});
    Executor one(1), four(4);
    SelectionState a(f, all), b(f, all);
    for (int t = 0; t < 50; ++t) {
        const auto pa = select_next(a, f, one);
        const auto pb = select_next(b, f, four);
        ASSERT_EQ(pa, pb);
        EXPECT_EQ(delta_argmin(b, f, four), pa.candidate);
        a.commit(pa.candidate, f);
        b.commit(pb.candidate, f);
    }
}

TEST(Executor, BinsAndDiagnosticsIgnoreThreadCount) {
    const auto f = testing::gaussian_features(2, 1500, 4);
    QuantizeConfig c;
    c.num_bins = 6;
    const auto ref = quantize_with_diagnostics(f, nullptr, c, Executor(1));
    for (std::size_t threads : {2, 3, 4}) {
        const auto other = quantize_with_diagnostics(f, nullptr, c, Executor(threads));
        EXPECT_EQ(other.binsets, ref.binsets);
        EXPECT_EQ(other.report.strata[0].bin_radii, ref.report.strata[0].bin_radii);
        EXPECT_EQ(other.report.strata[0].mean_nn_distance_per_bin,
                  ref.report.strata[0].mean_nn_distance_per_bin);
    }
}

}  // namespace
}  // namespace dq
