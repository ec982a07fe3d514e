#pragma once

/**
 * @file sampler.hpp
 * @brief Draws the final coreset from the bins: a keep-ratio share of every
 *        bin, combined into one sorted index set.
 */

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dq/binner.hpp"
#include "dq/core.hpp"

namespace dq {

/// Identifies the generator and draw procedure; recorded in every manifest.
inline constexpr const char* kRngAlgorithm = "mt19937_64/reject/fisher-yates/v1";

/**
 * Seeded generator for sampling. std::mt19937_64's output sequence is fixed
 * by the C++ standard; bounded draws use rejection on the full 64-bit output,
 * so the stream of indices is identical on every conforming implementation.
 */
class SampleRng {
public:
    explicit SampleRng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform integer in [0, n), n >= 1.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
        for (;;) {
            const std::uint64_t r = engine_();
            if (r >= threshold) return r % n;
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Picks `count` of `members`. Result order is irrelevant; callers sort.
using SamplerFn =
    std::function<std::vector<std::size_t>(std::span<const std::size_t>, std::size_t, SampleRng&)>;

/// Uniform draw without replacement (partial Fisher-Yates over a copy).
inline std::vector<std::size_t> uniform_sampler(std::span<const std::size_t> members,
                                                std::size_t count, SampleRng& rng) {
    std::vector<std::size_t> pool(members.begin(), members.end());
    for (std::size_t t = 0; t < count; ++t) {
        const auto j = t + static_cast<std::size_t>(rng.below(pool.size() - t));
        std::swap(pool[t], pool[j]);
    }
    pool.resize(count);
    return pool;
}

class SamplerRegistry {
public:
    SamplerRegistry() { add("uniform", uniform_sampler); }

    void add(const std::string& name, SamplerFn fn) { samplers_[name] = std::move(fn); }

    /// Names are case-sensitive.
    const SamplerFn& get(const std::string& name) const {
        auto it = samplers_.find(name);
        if (it == samplers_.end()) {
            std::string known;
            for (const auto& [n, _] : samplers_) known += (known.empty() ? "" : ", ") + n;
            throw ValidationError("unknown sampler '" + name + "' (available: " + known + ")");
        }
        return it->second;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [n, _] : samplers_) out.push_back(n);
        return out;
    }

    static SamplerRegistry& global() {
        static SamplerRegistry registry;
        return registry;
    }

private:
    std::map<std::string, SamplerFn> samplers_;
};

inline const SamplerFn& sampler_registry(const std::string& name) {
    return SamplerRegistry::global().get(name);
}

inline void register_sampler(const std::string& name, SamplerFn fn) {
    SamplerRegistry::global().add(name, std::move(fn));
}

struct CoresetManifest {
    /// Ascending global sample indices.
    std::vector<std::size_t> selected_indices;
    /// Samples kept per bin, BinSet-major then bin order.
    std::vector<std::size_t> per_bin_counts;
    double keep_ratio = 1.0;
    std::uint64_t seed = 0;
    /// Identity of the source bins (SHA-256 of the bins document when known).
    std::string source;
    std::string sampler = "uniform";
    std::string rng = kRngAlgorithm;
    /// Number of samples covered by the source bins.
    std::size_t total_samples = 0;

    friend bool operator==(const CoresetManifest&, const CoresetManifest&) = default;
};

/**
 * Per-bin sample counts: floor(rho * K_n), then +1 to the bins with the
 * largest fractional remainders (lower bin index first on ties) until the
 * total reaches floor(rho * sum K_n).
 */
inline std::vector<std::size_t> allocate_counts(std::span<const std::size_t> bin_sizes,
                                                double keep_ratio) {
    std::vector<std::size_t> counts(bin_sizes.size());
    std::vector<double> remainder(bin_sizes.size());
    std::size_t total = 0, assigned = 0;
    for (std::size_t n = 0; n < bin_sizes.size(); ++n) {
        counts[n] = floor_fraction(keep_ratio, bin_sizes[n]);
        remainder[n] = keep_ratio * static_cast<double>(bin_sizes[n]) - static_cast<double>(counts[n]);
        total += bin_sizes[n];
        assigned += counts[n];
    }
    const std::size_t target = floor_fraction(keep_ratio, total);
    std::vector<std::size_t> order(bin_sizes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t t = 0; assigned < target && t < order.size(); ++t) {
        const std::size_t n = order[t];
        if (counts[n] < bin_sizes[n]) {
            ++counts[n];
            ++assigned;
        }
    }
    return counts;
}

/**
 * Samples every BinSet independently at ratio rho (so each stratum keeps
 * floor(rho * its size)) and unions the results. One generator, seeded once,
 * is consumed BinSet by BinSet and bin by bin.
 */
inline CoresetManifest sample_coreset(std::span<const BinSet> binsets, const SampleConfig& config,
                                      const std::string& sampler = "uniform",
                                      std::string source = {}) {
    if (!(config.keep_ratio > 0.0 && config.keep_ratio <= 1.0)) {
        throw ValidationError("keep ratio must be in (0, 1], got " +
                              std::to_string(config.keep_ratio));
    }
    const SamplerFn& draw = sampler_registry(sampler);
    SampleRng rng(config.seed);

    CoresetManifest out;
    out.keep_ratio = config.keep_ratio;
    out.seed = config.seed;
    out.source = std::move(source);
    out.sampler = sampler;
    for (const auto& set : binsets) {
        std::vector<std::size_t> sizes;
        for (const auto& b : set.bins) sizes.push_back(b.members.size());
        const auto counts = allocate_counts(sizes, config.keep_ratio);
        for (std::size_t n = 0; n < set.bins.size(); ++n) {
            auto picked = draw(set.bins[n].members, counts[n], rng);
            if (picked.size() != counts[n]) {
                throw InvariantError("sampler '" + sampler + "' returned " +
                                     std::to_string(picked.size()) + " samples, expected " +
                                     std::to_string(counts[n]));
            }
            out.selected_indices.insert(out.selected_indices.end(), picked.begin(), picked.end());
            out.per_bin_counts.push_back(counts[n]);
        }
        out.total_samples += set.member_count();
    }
    std::sort(out.selected_indices.begin(), out.selected_indices.end());
    if (std::adjacent_find(out.selected_indices.begin(), out.selected_indices.end()) !=
        out.selected_indices.end()) {
        throw InvariantError("coreset contains a duplicate index");
    }
    return out;
}

inline CoresetManifest sample_coreset(const BinSet& bins, const SampleConfig& config,
                                      const std::string& sampler = "uniform",
                                      std::string source = {}) {
    return sample_coreset(std::span<const BinSet>(&bins, 1), config, sampler, std::move(source));
}

/**
 * Checks a manifest against its source bins: every selected index lies in
 * exactly one bin and the per-bin counts match the attribution.
 */
inline void verify_manifest(const CoresetManifest& manifest, std::span<const BinSet> binsets) {
    std::map<std::size_t, std::size_t> owner;
    std::size_t flat = 0;
    for (const auto& set : binsets) {
        for (const auto& b : set.bins) {
            for (std::size_t i : b.members) {
                if (!owner.emplace(i, flat).second) {
                    throw InvariantError("sample " + std::to_string(i) + " in two bins");
                }
            }
            ++flat;
        }
    }
    if (manifest.per_bin_counts.size() != flat) {
        throw InvariantError("manifest lists " + std::to_string(manifest.per_bin_counts.size()) +
                             " bins, source has " + std::to_string(flat));
    }
    std::vector<std::size_t> seen(flat, 0);
    for (std::size_t i : manifest.selected_indices) {
        auto it = owner.find(i);
        if (it == owner.end()) {
            throw InvariantError("selected sample " + std::to_string(i) + " is in no bin");
        }
        ++seen[it->second];
    }
    if (seen != manifest.per_bin_counts) throw InvariantError("per-bin counts do not match bins");
}

}  // namespace dq
