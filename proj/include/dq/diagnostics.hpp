#pragma once

/**
 * @file diagnostics.hpp
 * @brief Instrumented re-run of bin generation that checks the exact
 *        properties of greedy GraphCut selection, plus coverage statistics
 *        for a sampled coreset.
 *
 * Exact checks, per greedy step with k samples already in the bin and a
 * universe U (current bin + pool):
 *   - first pick of every bin is the pool sample nearest the universe mean;
 *   - the delta-form pick (delta_argmin) equals the gain argmax whenever
 *     2k != |U|;
 *   - with the universe centered and 1 <= k, 2k < |U|:
 *       |delta - mu_U|^2 <= (2k / (|U| - 2k))^2 * R_k^2,
 *     R_k being the largest member distance from mu_U in the partial bin.
 */

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dq/binner.hpp"
#include "dq/core.hpp"
#include "dq/gain_engine.hpp"
#include "dq/parallel.hpp"
#include "dq/sampler.hpp"

namespace dq {

struct StratumDiagnostics {
    std::string stratum = "all";
    bool first_pick_ok = true;
    std::size_t first_pick_checked = 0;
    std::size_t delta_agreements = 0;
    std::size_t delta_total = 0;
    std::size_t delta_skipped = 0;
    std::size_t delta_norm_checked = 0;
    std::size_t delta_norm_violations = 0;
    std::vector<double> bin_radii;
    double radius_monotone_fraction = 1.0;
    std::vector<double> mean_nn_distance_per_bin;
};

struct DiagnosticsReport {
    bool first_pick_ok = true;
    std::size_t delta_agreements = 0;
    std::size_t delta_total = 0;
    std::size_t delta_norm_violations = 0;
    std::size_t delta_norm_checked = 0;
    /// Over all adjacent bin pairs of all strata.
    double radius_monotone_fraction = 1.0;
    std::vector<StratumDiagnostics> strata;

    /// First-pick law, delta agreement and the delta-norm bound all hold.
    bool exact_invariants_hold() const noexcept {
        return first_pick_ok && delta_agreements == delta_total && delta_norm_violations == 0;
    }
};

/// Relative slack on the delta-norm bound; k = 1 attains it with equality.
inline constexpr double kDeltaBoundTolerance = 1e-9;

namespace detail {

/// Accumulates per-step checks for one stratum while bins are generated.
class StepAuditor {
public:
    explicit StepAuditor(const Executor& exec) : exec_(exec) {}

    void operator()(const SelectionStep& step) {
        const SelectionState& s = step.state;
        const FeatureMatrix& f = step.features;
        const std::size_t k = s.selected_count();
        const std::size_t universe = s.universe_count();

        if (k == 0) {
            // New bin: the universe is fixed until the bin closes.
            mean_.assign(f.dim(), 0.0);
            for (std::size_t i : s.pool()) {
                auto r = f.row(i);
                for (std::size_t j = 0; j < mean_.size(); ++j) mean_[j] += r[j];
            }
            for (auto& v : mean_) v /= static_cast<double>(universe);
            radius_sq_ = 0.0;

            const double mean_norm = std::sqrt(dot(mean_, mean_));
            const auto pool = s.pool();
            std::vector<Scored> dist(pool.size());
            for (std::size_t t = 0; t < pool.size(); ++t) {
                const double reach = std::sqrt(s.sq_norms()[pool[t]]) + mean_norm;
                dist[t] = {squared_distance(f.row(pool[t]), mean_), reach * reach};
            }
            const std::size_t nearest = pool[pick_with_ties(pool, dist, false)];
            ++out.first_pick_checked;
            if (nearest != step.chosen.candidate) out.first_pick_ok = false;
        } else {
            radius_sq_ = std::max(radius_sq_, squared_distance(f.row(s.selected().back()), mean_));
        }

        if (2 * k == universe) {
            ++out.delta_skipped;
        } else {
            ++out.delta_total;
            if (delta_argmin(s, f, exec_) == step.chosen.candidate) ++out.delta_agreements;
        }

        if (k >= 1 && 2 * k < universe) {
            // delta - mu_U = 2k (Q - mu_U) / (2k - |U|), Q the bin centroid.
            const double kd = static_cast<double>(k);
            const double denom = 2.0 * kd - static_cast<double>(universe);
            double lhs = 0.0;
            auto sel = s.selected_sum();
            for (std::size_t j = 0; j < mean_.size(); ++j) {
                const double v = 2.0 * kd * (sel[j] / kd - mean_[j]) / denom;
                lhs += v * v;
            }
            const double ratio = 2.0 * kd / -denom;
            const double rhs = ratio * ratio * radius_sq_;
            ++out.delta_norm_checked;
            if (lhs > rhs * (1.0 + kDeltaBoundTolerance) + std::numeric_limits<double>::min()) {
                ++out.delta_norm_violations;
            }
        }
    }

    StratumDiagnostics out;

private:
    const Executor& exec_;
    std::vector<double> mean_;
    double radius_sq_ = 0.0;
};

/// Mean over members of the distance to the nearest other member (0 for singletons).
inline double mean_nn_distance(const Bin& bin, const FeatureMatrix& features, const Executor& exec) {
    const auto& m = bin.members;
    if (m.size() < 2) return 0.0;
    std::vector<double> nn(m.size());
    exec.for_each(
        m.size(),
        [&](std::size_t a) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < m.size(); ++b) {
                if (a != b) best = std::min(best, squared_distance(features.row(m[a]), features.row(m[b])));
            }
            nn[a] = std::sqrt(best);
        },
        16);
    double sum = 0.0;
    for (double v : nn) sum += v;
    return sum / static_cast<double>(m.size());
}

inline double monotone_fraction(const std::vector<double>& radii, std::size_t& pairs,
                                std::size_t& ok) {
    std::size_t p = 0, o = 0;
    for (std::size_t n = 1; n < radii.size(); ++n) {
        ++p;
        if (radii[n] >= radii[n - 1]) ++o;
    }
    pairs += p;
    ok += o;
    return p == 0 ? 1.0 : static_cast<double>(o) / static_cast<double>(p);
}

}  // namespace detail

struct DiagnosedQuantization {
    std::vector<BinSet> binsets;
    DiagnosticsReport report;
};

/**
 * Generates the bins with every step audited. The bins are identical to
 * quantize() on the same inputs.
 */
inline DiagnosedQuantization quantize_with_diagnostics(const FeatureMatrix& features,
                                                       const LabelVector* labels,
                                                       const QuantizeConfig& config,
                                                       const Executor& exec = Executor::sequential()) {
    std::vector<detail::StepAuditor> auditors;
    // Strata are generated one after another; a step with k == 0 in bin 0
    // marks the start of the next stratum.
    auto observer = [&](const SelectionStep& step) {
        if (step.bin_index == 0 && step.state.selected_count() == 0) auditors.emplace_back(exec);
        auditors.back()(step);
    };
    DiagnosedQuantization out;
    out.binsets = quantize(features, labels, config, exec, observer);

    std::size_t pairs = 0, ok = 0;
    for (std::size_t s = 0; s < out.binsets.size(); ++s) {
        const BinSet& set = out.binsets[s];
        StratumDiagnostics d = std::move(auditors.at(s).out);
        d.stratum = set.stratum_name();
        d.bin_radii = bin_radii(set, features);
        d.radius_monotone_fraction = detail::monotone_fraction(d.bin_radii, pairs, ok);
        for (const auto& b : set.bins) {
            d.mean_nn_distance_per_bin.push_back(detail::mean_nn_distance(b, features, exec));
        }
        auto& r = out.report;
        r.first_pick_ok = r.first_pick_ok && d.first_pick_ok;
        r.delta_agreements += d.delta_agreements;
        r.delta_total += d.delta_total;
        r.delta_norm_checked += d.delta_norm_checked;
        r.delta_norm_violations += d.delta_norm_violations;
        r.strata.push_back(std::move(d));
    }
    out.report.radius_monotone_fraction =
        pairs == 0 ? 1.0 : static_cast<double>(ok) / static_cast<double>(pairs);
    return out;
}

inline DiagnosticsReport run_diagnostics(const FeatureMatrix& features, const LabelVector* labels,
                                         const QuantizeConfig& config,
                                         const Executor& exec = Executor::sequential()) {
    return quantize_with_diagnostics(features, labels, config, exec).report;
}

struct CoverageReport {
    /// Mean over all samples of the distance to the nearest selected sample.
    double mean_distance = 0.0;
    /// Max of the same; the covering radius of the coreset.
    double max_distance = 0.0;
};

/// Brute force O(M * |S| * m).
inline CoverageReport coverage_stats(const CoresetManifest& manifest, const FeatureMatrix& features,
                                     const Executor& exec = Executor::sequential()) {
    const auto& sel = manifest.selected_indices;
    if (sel.empty()) throw ValidationError("coverage of an empty manifest");
    for (std::size_t i : sel) {
        if (i >= features.num_samples()) {
            throw ValidationError("manifest index " + std::to_string(i) + " out of range");
        }
    }
    std::vector<double> nearest(features.num_samples());
    exec.for_each(
        features.num_samples(),
        [&](std::size_t i) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t s : sel) best = std::min(best, detail::squared_distance(features.row(i), features.row(s)));
            nearest[i] = std::sqrt(best);
        },
        64);
    CoverageReport out;
    double sum = 0.0;
    for (double d : nearest) {
        sum += d;
        out.max_distance = std::max(out.max_distance, d);
    }
    out.mean_distance = sum / static_cast<double>(nearest.size());
    return out;
}

}  // namespace dq
