#pragma once

/**
 * @file binner.hpp
 * @brief Recursive bin generation: N greedy GraphCut passes over a shrinking
 *        pool, each pass producing one bin of the partition.
 */

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dq/core.hpp"
#include "dq/gain_engine.hpp"
#include "dq/parallel.hpp"

namespace dq {

struct Bin {
    std::size_t bin_index = 0;
    /// Global sample indices in greedy selection order.
    std::vector<std::size_t> members;
    /// Gain of each member at the moment it was selected.
    std::vector<double> gains;

    friend bool operator==(const Bin&, const Bin&) = default;
};

struct BinSet {
    std::vector<Bin> bins;
    std::size_t universe_size = 0;
    QuantizeConfig config;
    /// Class id of the stratum; nullopt means the whole dataset ("all").
    std::optional<std::int64_t> stratum;

    std::string stratum_name() const { return stratum ? std::to_string(*stratum) : "all"; }
    std::size_t member_count() const {
        std::size_t n = 0;
        for (const auto& b : bins) n += b.members.size();
        return n;
    }

    friend bool operator==(const BinSet& a, const BinSet& b) {
        return a.bins == b.bins && a.universe_size == b.universe_size &&
               a.stratum == b.stratum && a.config.num_bins == b.config.num_bins &&
               a.config.center_features == b.config.center_features &&
               a.config.stratify_by_class == b.config.stratify_by_class &&
               a.config.seed == b.config.seed;
    }
};

/**
 * One greedy step as seen by an observer, before the chosen sample is
 * committed. Indices in `state` and `chosen` are rows of `features`, the
 * stratum-local (possibly centered) matrix; `to_global` maps them back.
 */
struct SelectionStep {
    std::size_t bin_index;
    const SelectionState& state;
    const FeatureMatrix& features;
    GainValue chosen;
    std::span<const std::size_t> to_global;
};

using StepObserver = std::function<void(const SelectionStep&)>;

/**
 * Sizes of the N bins over a universe of M samples: ceil(M/N) for the first
 * N-1 bins, the remainder for the last, never leaving a later bin empty.
 */
inline std::vector<std::size_t> bin_sizes(std::size_t universe, std::size_t num_bins) {
    if (num_bins == 0) throw ValidationError("num_bins must be at least 1");
    if (num_bins > universe) throw ValidationError("num_bins exceeds samples");
    const std::size_t k = (universe + num_bins - 1) / num_bins;
    std::vector<std::size_t> sizes(num_bins);
    std::size_t left = universe;
    for (std::size_t n = 0; n + 1 < num_bins; ++n) {
        sizes[n] = std::min(k, left - (num_bins - 1 - n));
        left -= sizes[n];
    }
    sizes.back() = left;
    return sizes;
}

namespace detail {

/// Bins over the given universe of global row indices (ascending).
inline BinSet generate_bins_over(const FeatureMatrix& features,
                                 const std::vector<std::size_t>& universe,
                                 const QuantizeConfig& config, std::optional<std::int64_t> stratum,
                                 const Executor& exec, const StepObserver& observer) {
    const auto sizes = bin_sizes(universe.size(), config.num_bins);

    // Stratum-local rows; local row t is global sample universe[t].
    const bool whole = universe.size() == features.num_samples();
    std::optional<FeatureMatrix> local_store;
    if (config.center_features) {
        local_store = center_features(whole ? features : features.select_rows(universe)).first;
    } else if (!whole) {
        local_store = features.select_rows(universe);
    }
    const FeatureMatrix& local = local_store ? *local_store : features;

    std::vector<std::size_t> local_ids(universe.size());
    for (std::size_t t = 0; t < local_ids.size(); ++t) local_ids[t] = t;
    SelectionState state(local, local_ids);

    BinSet out;
    out.universe_size = universe.size();
    out.config = config;
    out.stratum = stratum;
    out.bins.resize(config.num_bins);
    for (std::size_t n = 0; n < config.num_bins; ++n) {
        Bin& bin = out.bins[n];
        bin.bin_index = n;
        bin.members.reserve(sizes[n]);
        bin.gains.reserve(sizes[n]);
        for (std::size_t k = 0; k < sizes[n]; ++k) {
            const GainValue g = select_next(state, local, exec);
            if (observer) observer(SelectionStep{n, state, local, g, universe});
            state.commit(g.candidate, local);
            bin.members.push_back(universe[g.candidate]);
            bin.gains.push_back(g.gain);
        }
        state.start_next_bin(local);
    }
    return out;
}

inline std::map<std::int64_t, std::vector<std::size_t>> strata_of(const LabelVector& labels) {
    std::map<std::int64_t, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < labels.labels.size(); ++i) strata[labels.labels[i]].push_back(i);
    return strata;
}

}  // namespace detail

/// Partitions all samples into config.num_bins bins by recursive greedy selection.
inline BinSet generate_bins(const FeatureMatrix& features, const QuantizeConfig& config,
                            const Executor& exec = Executor::sequential(),
                            const StepObserver& observer = {}) {
    validate_inputs(features).throw_if_failed();
    std::vector<std::size_t> universe(features.num_samples());
    for (std::size_t i = 0; i < universe.size(); ++i) universe[i] = i;
    return detail::generate_bins_over(features, universe, config, std::nullopt, exec, observer);
}

/// One BinSet per class present in `labels`, ascending class id.
inline std::vector<BinSet> generate_bins_stratified(const FeatureMatrix& features,
                                                    const LabelVector& labels,
                                                    const QuantizeConfig& config,
                                                    const Executor& exec = Executor::sequential(),
                                                    const StepObserver& observer = {}) {
    validate_inputs(features, labels).throw_if_failed();
    auto strata = detail::strata_of(labels);
    for (const auto& [cls, rows] : strata) {
        if (rows.size() < config.num_bins) {
            throw ValidationError("class " + std::to_string(cls) + " has " +
                                  std::to_string(rows.size()) + " samples, fewer than num_bins " +
                                  std::to_string(config.num_bins));
        }
    }
    std::vector<BinSet> out;
    out.reserve(strata.size());
    for (const auto& [cls, rows] : strata) {
        out.push_back(detail::generate_bins_over(features, rows, config, cls, exec, observer));
    }
    return out;
}

/**
 * Entry point used by the tools: stratified when labels are given and
 * config.stratify_by_class is set, a single "all" BinSet otherwise.
 */
inline std::vector<BinSet> quantize(const FeatureMatrix& features, const LabelVector* labels,
                                    const QuantizeConfig& config,
                                    const Executor& exec = Executor::sequential(),
                                    const StepObserver& observer = {}) {
    if (labels != nullptr && config.stratify_by_class) {
        return generate_bins_stratified(features, *labels, config, exec, observer);
    }
    if (labels != nullptr) validate_inputs(features, labels).throw_if_failed();
    return {generate_bins(features, config, exec, observer)};
}

/// Max distance of each bin's members from the mean of the BinSet's universe.
inline std::vector<double> bin_radii(const BinSet& bins, const FeatureMatrix& features) {
    std::vector<double> mean(features.dim(), 0.0);
    std::vector<std::size_t> all;
    for (const auto& b : bins.bins) all.insert(all.end(), b.members.begin(), b.members.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i : all) {
        auto r = features.row(i);
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += r[j];
    }
    if (!all.empty()) {
        for (auto& v : mean) v /= static_cast<double>(all.size());
    }
    std::vector<double> radii;
    radii.reserve(bins.bins.size());
    for (const auto& b : bins.bins) {
        double r2 = 0.0;
        for (std::size_t i : b.members) {
            r2 = std::max(r2, detail::squared_distance(features.row(i), mean));
        }
        radii.push_back(std::sqrt(r2));
    }
    return radii;
}

/// Checks disjointness, that the bins cover exactly `universe`, and non-emptiness.
inline void check_partition(const BinSet& bins, std::span<const std::size_t> universe) {
    std::vector<std::size_t> all;
    for (const auto& b : bins.bins) {
        if (b.members.empty()) {
            throw InvariantError("bin " + std::to_string(b.bin_index) + " is empty");
        }
        all.insert(all.end(), b.members.begin(), b.members.end());
    }
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) {
        throw InvariantError("bins overlap");
    }
    std::vector<std::size_t> expect(universe.begin(), universe.end());
    std::sort(expect.begin(), expect.end());
    if (all != expect) throw InvariantError("bins do not cover the universe exactly");
}

}  // namespace dq
