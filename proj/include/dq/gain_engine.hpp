#pragma once

/**
 * @file gain_engine.hpp
 * @brief GraphCut submodular gain for greedy bin construction.
 *
 * For a candidate x with current partial bin S (size k) and remaining pool
 * U \ S (size n, candidate included):
 *
 *     P(x) = sum_{p in S} |f(p) - f(x)|^2  -  sum_{p in pool} |f(p) - f(x)|^2
 *
 * Three routes evaluate it: gain_direct() loops over both sets literally,
 * gain_fast() expands the squares against running sums (O(m) per candidate),
 * and delta_argmin() uses the equivalent nearest/farthest-point form
 * P(x) = (2k - |U|) |f(x) - delta|^2 + const.
 */

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dq/core.hpp"
#include "dq/parallel.hpp"

namespace dq {

struct GainValue {
    std::size_t candidate = 0;
    double gain = 0.0;

    friend bool operator==(const GainValue&, const GainValue&) = default;
};

/// Strict total order used by every argmax: higher gain, then lower index.
inline bool gain_precedes(const GainValue& a, const GainValue& b) noexcept {
    return a.gain > b.gain || (a.gain == b.gain && a.candidate < b.candidate);
}

/**
 * Sufficient statistics of the current partial bin ("selected") and the
 * remaining candidate pool. Indices are rows of the FeatureMatrix the state
 * was built from; that matrix must outlive the state.
 */
class SelectionState {
public:
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

    /// Empty selection; every index in `universe` is in the pool.
    SelectionState(const FeatureMatrix& features, std::span<const std::size_t> universe)
        : SelectionState(features, {}, universe) {}

    SelectionState(const FeatureMatrix& features, std::span<const std::size_t> selected,
                   std::span<const std::size_t> pool)
        : dim_(features.dim()),
          pos_(features.num_samples(), npos),
          selected_sum_(features.dim(), 0.0),
          pool_sum_(features.dim(), 0.0),
          sq_norms_(features.num_samples()) {
        for (std::size_t i = 0; i < features.num_samples(); ++i) {
            auto r = features.row(i);
            sq_norms_[i] = detail::dot(r, r);
        }
        std::vector<char> seen(features.num_samples(), 0);
        auto claim = [&](std::size_t i) {
            if (i >= features.num_samples()) {
                throw ValidationError("sample index " + std::to_string(i) + " out of range");
            }
            if (seen[i]++) {
                throw ValidationError("sample " + std::to_string(i) + " listed twice");
            }
        };
        for (std::size_t i : selected) {
            claim(i);
            selected_.push_back(i);
        }
        for (std::size_t i : pool) {
            claim(i);
            pos_[i] = pool_.size();
            pool_.push_back(i);
        }
        recompute_sums(features);
    }

    std::size_t selected_count() const noexcept { return selected_.size(); }
    std::size_t pool_count() const noexcept { return pool_.size(); }
    /// selected_count() + pool_count(): the size of the universe this bin draws from.
    std::size_t universe_count() const noexcept { return selected_.size() + pool_.size(); }
    std::size_t dim() const noexcept { return dim_; }

    /// Selected samples in selection order.
    std::span<const std::size_t> selected() const noexcept { return selected_; }
    /// Pool samples in unspecified order.
    std::span<const std::size_t> pool() const noexcept { return pool_; }
    bool in_pool(std::size_t i) const noexcept { return i < pos_.size() && pos_[i] != npos; }

    std::span<const double> selected_sum() const noexcept { return selected_sum_; }
    std::span<const double> pool_sum() const noexcept { return pool_sum_; }
    double selected_sqsum() const noexcept { return selected_sqsum_; }
    double pool_sqsum() const noexcept { return pool_sqsum_; }
    std::span<const double> sq_norms() const noexcept { return sq_norms_; }

    /// Moves `chosen` from the pool into the selection. O(m).
    void commit(std::size_t chosen, const FeatureMatrix& features) {
        if (!in_pool(chosen)) {
            throw ValidationError("candidate not selectable: " + std::to_string(chosen));
        }
        const std::size_t at = pos_[chosen];
        const std::size_t last = pool_.back();
        pool_[at] = last;
        pos_[last] = at;
        pool_.pop_back();
        pos_[chosen] = npos;
        selected_.push_back(chosen);

        auto r = features.row(chosen);
        for (std::size_t j = 0; j < dim_; ++j) {
            selected_sum_[j] += r[j];
            pool_sum_[j] -= r[j];
        }
        selected_sqsum_ += sq_norms_[chosen];
        pool_sqsum_ -= sq_norms_[chosen];
    }

    /**
     * Closes the current bin: its members leave the universe and the next
     * bin starts empty. Pool sums are recomputed to shed accumulated drift.
     */
    std::vector<std::size_t> start_next_bin(const FeatureMatrix& features) {
        std::vector<std::size_t> closed;
        closed.swap(selected_);
        recompute_sums(features);
        return closed;
    }

    /// Largest deviation of the running sums from a fresh recomputation,
    /// relative to the magnitude of the summed terms.
    double sum_drift(const FeatureMatrix& features) const {
        double worst = 0.0;
        auto check = [&](std::span<const std::size_t> idx, std::span<const double> running,
                         double running_sq) {
            std::vector<double> sum(dim_, 0.0), scale(dim_, 0.0);
            double sq = 0.0;
            for (std::size_t i : idx) {
                auto r = features.row(i);
                for (std::size_t j = 0; j < dim_; ++j) {
                    sum[j] += r[j];
                    scale[j] += std::abs(r[j]);
                }
                sq += sq_norms_[i];
            }
            for (std::size_t j = 0; j < dim_; ++j) {
                worst = std::max(worst, std::abs(sum[j] - running[j]) / std::max(1.0, scale[j]));
            }
            worst = std::max(worst, std::abs(sq - running_sq) / std::max(1.0, sq));
        };
        check(selected_, selected_sum_, selected_sqsum_);
        check(pool_, pool_sum_, pool_sqsum_);
        return worst;
    }

private:
    void recompute_sums(const FeatureMatrix& features) {
        std::fill(selected_sum_.begin(), selected_sum_.end(), 0.0);
        std::fill(pool_sum_.begin(), pool_sum_.end(), 0.0);
        selected_sqsum_ = 0.0;
        pool_sqsum_ = 0.0;
        for (std::size_t i : selected_) {
            auto r = features.row(i);
            for (std::size_t j = 0; j < dim_; ++j) selected_sum_[j] += r[j];
            selected_sqsum_ += sq_norms_[i];
        }
        // Ascending index order keeps the sums independent of pool layout.
        std::vector<std::size_t> order(pool_.begin(), pool_.end());
        std::sort(order.begin(), order.end());
        for (std::size_t i : order) {
            auto r = features.row(i);
            for (std::size_t j = 0; j < dim_; ++j) pool_sum_[j] += r[j];
            pool_sqsum_ += sq_norms_[i];
        }
    }

    std::size_t dim_ = 0;
    std::vector<std::size_t> selected_;
    std::vector<std::size_t> pool_;
    std::vector<std::size_t> pos_;
    std::vector<double> selected_sum_;
    std::vector<double> pool_sum_;
    double selected_sqsum_ = 0.0;
    double pool_sqsum_ = 0.0;
    std::vector<double> sq_norms_;
};

namespace detail {

inline void require_selectable(const SelectionState& state, std::size_t candidate) {
    if (!state.in_pool(candidate)) {
        throw ValidationError("candidate not selectable: " + std::to_string(candidate));
    }
}

/// Scores closer than this, relative to their magnitude, count as tied.
inline constexpr double kTieTolerance = 1e-12;

/// A score and the magnitude its rounding error scales with.
struct Scored {
    double value = 0.0;
    double scale = 0.0;
};

/**
 * Position in `pool` of the best score; near-ties go to the lowest sample
 * index. Sequential and O(|pool|), so the result is split independent.
 */
inline std::size_t pick_with_ties(std::span<const std::size_t> pool, const std::vector<Scored>& scores,
                                  bool maximize) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < scores.size(); ++t) {
        const double v = scores[t].value, b = scores[best].value;
        if (maximize ? v > b : v < b) best = t;
    }
    std::size_t pick = best;
    for (std::size_t t = 0; t < scores.size(); ++t) {
        if (pool[t] >= pool[pick]) continue;
        const double slack = kTieTolerance * (scores[t].scale + scores[best].scale);
        if (std::abs(scores[t].value - scores[best].value) <= slack) pick = t;
    }
    return pick;
}

/// Per-step constants of the expanded gain: coef*|x|^2 - 2 dir.x + offset.
struct GainKernel {
    double coef = 0.0;
    std::vector<double> dir;
    double offset = 0.0;

    explicit GainKernel(const SelectionState& s)
        : coef(static_cast<double>(s.selected_count()) - static_cast<double>(s.pool_count())),
          dir(s.dim()),
          offset(s.selected_sqsum() - s.pool_sqsum()) {
        auto sel = s.selected_sum();
        auto pool = s.pool_sum();
        for (std::size_t j = 0; j < dir.size(); ++j) dir[j] = sel[j] - pool[j];
    }

    double operator()(std::span<const double> x, double sq_norm) const noexcept {
        return coef * sq_norm - 2.0 * dot(dir, x) + offset;
    }
};

}  // namespace detail

/// Literal double loop over the selection and the pool. O((k + |pool|) m).
inline GainValue gain_direct(const SelectionState& state, std::size_t candidate,
                             const FeatureMatrix& features) {
    detail::require_selectable(state, candidate);
    auto x = features.row(candidate);
    double c1 = 0.0;
    for (std::size_t p : state.selected()) c1 += detail::squared_distance(features.row(p), x);
    double c2 = 0.0;
    for (std::size_t p : state.pool()) c2 += detail::squared_distance(features.row(p), x);
    return {candidate, c1 - c2};
}

/// Gain from the running sums. O(m).
inline GainValue gain_fast(const SelectionState& state, std::size_t candidate,
                           const FeatureMatrix& features) {
    detail::require_selectable(state, candidate);
    const detail::GainKernel kernel(state);
    return {candidate, kernel(features.row(candidate), state.sq_norms()[candidate])};
}

/**
 * Pool candidate with the largest gain_fast(). Candidates whose gains differ
 * by less than rounding are tied and the lowest index wins. Scores are
 * computed in parallel; the winner does not depend on the worker count.
 */
inline GainValue select_next(const SelectionState& state, const FeatureMatrix& features,
                             const Executor& exec = Executor::sequential()) {
    if (state.pool_count() == 0) throw ValidationError("pool exhausted");
    const detail::GainKernel kernel(state);
    const double dir_norm = std::sqrt(detail::dot(kernel.dir, kernel.dir));
    const auto pool = state.pool();
    const auto sq = state.sq_norms();
    std::vector<detail::Scored> scores(pool.size());
    exec.for_each(
        pool.size(),
        [&](std::size_t t) {
            const std::size_t i = pool[t];
            scores[t] = {kernel(features.row(i), sq[i]),
                         std::abs(kernel.coef) * sq[i] + 2.0 * dir_norm * std::sqrt(sq[i]) +
                             std::abs(kernel.offset)};
        },
        512);
    const std::size_t t = detail::pick_with_ties(pool, scores, true);
    return {pool[t], scores[t].value};
}

/**
 * Target point of the quadratic form of the gain:
 * delta = (2 * selected_sum - universe_sum) / (2k - |U|).
 * Throws when 2k == |U| (the quadratic term vanishes).
 */
inline std::vector<double> delta_target(const SelectionState& state) {
    const auto k2 = 2 * state.selected_count();
    const auto universe = state.universe_count();
    if (k2 == universe) throw ValidationError("degenerate quadratic (2k = M)");
    const double denom = static_cast<double>(k2) - static_cast<double>(universe);
    std::vector<double> delta(state.dim());
    auto sel = state.selected_sum();
    auto pool = state.pool_sum();
    for (std::size_t j = 0; j < delta.size(); ++j) {
        delta[j] = (2.0 * sel[j] - (sel[j] + pool[j])) / denom;
    }
    return delta;
}

/**
 * Greedy pick via the delta form: the pool sample closest to delta while
 * 2k < |U|, farthest from it once 2k > |U| (the quadratic coefficient
 * changes sign). Lowest index wins ties. Must agree with select_next().
 */
inline std::size_t delta_argmin(const SelectionState& state, const FeatureMatrix& features,
                                const Executor& exec = Executor::sequential()) {
    if (state.pool_count() == 0) throw ValidationError("pool exhausted");
    const auto delta = delta_target(state);
    const bool nearest = 2 * state.selected_count() < state.universe_count();
    const auto pool = state.pool();
    const double delta_norm = std::sqrt(detail::dot(delta, delta));
    const auto sq = state.sq_norms();
    std::vector<detail::Scored> scores(pool.size());
    exec.for_each(
        pool.size(),
        [&](std::size_t t) {
            const std::size_t i = pool[t];
            const double reach = std::sqrt(sq[i]) + delta_norm;
            scores[t] = {detail::squared_distance(features.row(i), delta), reach * reach};
        },
        512);
    return pool[detail::pick_with_ties(pool, scores, !nearest)];
}

/// Value-returning form of SelectionState::commit().
inline SelectionState commit_selection(SelectionState state, std::size_t chosen,
                                       const FeatureMatrix& features) {
    state.commit(chosen, features);
    return state;
}

}  // namespace dq
