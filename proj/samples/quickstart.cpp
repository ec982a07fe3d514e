// Quantize a small synthetic dataset, sample a 10% coreset, and audit it.

#include <cstdio>
#include <random>

#include "dq/dq.hpp"

int main() {
    std::mt19937_64 gen(7);
    std::normal_distribution<double> normal;
    const std::size_t samples = 2000, dim = 8;
    std::vector<double> data(samples * dim);
    for (auto& v : data) v = normal(gen);
    const dq::FeatureMatrix features(samples, dim, std::move(data));

    dq::QuantizeConfig qcfg;  // 10 bins, centered
    const dq::BinSet bins = dq::generate_bins(features, qcfg);
    const auto radii = dq::bin_radii(bins, features);
    for (std::size_t n = 0; n < bins.bins.size(); ++n) {
        std::printf("bin %zu: %zu samples, radius %.3f\n", n, bins.bins[n].members.size(), radii[n]);
    }

    const auto coreset = dq::sample_coreset(bins, dq::SampleConfig{0.1, 42});
    const auto cover = dq::coverage_stats(coreset, features);
    std::printf("coreset: %zu samples, mean coverage %.3f, covering radius %.3f\n",
                coreset.selected_indices.size(), cover.mean_distance, cover.max_distance);

    const auto report = dq::run_diagnostics(features, nullptr, qcfg);
    std::printf("delta agreement %zu/%zu, bound violations %zu\n", report.delta_agreements,
                report.delta_total, report.delta_norm_violations);
    return report.exact_invariants_hold() ? 0 : 3;
}
