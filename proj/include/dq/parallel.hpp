#pragma once

// Deterministic parallel reductions. Every reduction here combines with a
// total order (or exact integer arithmetic), so the result does not depend on
// how the range is split or how many workers take part.

#include <cstddef>
#include <memory>
#include <thread>

#include <oneapi/tbb/blocked_range.h>
#include <oneapi/tbb/global_control.h>
#include <oneapi/tbb/parallel_for.h>
#include <oneapi/tbb/parallel_reduce.h>
#include <oneapi/tbb/task_arena.h>

namespace dq {

/// Caps the number of workers used by the gain fan-out and other parallel loops.
class Executor {
public:
    /// threads == 0 picks the hardware concurrency.
    explicit Executor(std::size_t threads = 1) {
        threads_ = threads == 0 ? std::max<std::size_t>(1, std::thread::hardware_concurrency())
                                : threads;
        if (threads_ > 1) {
            control_ = std::make_unique<oneapi::tbb::global_control>(
                oneapi::tbb::global_control::max_allowed_parallelism, threads_);
            arena_ = std::make_unique<oneapi::tbb::task_arena>(static_cast<int>(threads_));
        }
    }

    Executor(const Executor&) = delete;
    Executor& operator=(const Executor&) = delete;

    std::size_t threads() const noexcept { return threads_; }

    /**
     * Reduces body(lo, hi, acc) over [0, n) and merges partial results with
     * join(a, b). join must be associative and commutative for the result to
     * be independent of the split.
     */
    template <class T, class Body, class Join>
    T reduce(std::size_t n, T identity, Body body, Join join, std::size_t grain = 256) const {
        if (!arena_ || n <= grain) {
            return body(std::size_t{0}, n, identity);
        }
        T result = identity;
        arena_->execute([&] {
            result = oneapi::tbb::parallel_reduce(
                oneapi::tbb::blocked_range<std::size_t>(0, n, grain), identity,
                [&](const oneapi::tbb::blocked_range<std::size_t>& r, T acc) {
                    return body(r.begin(), r.end(), acc);
                },
                join);
        });
        return result;
    }

    /// Runs fn(i) for i in [0, n); fn must only write to slot-private state.
    template <class Fn>
    void for_each(std::size_t n, Fn fn, std::size_t grain = 1) const {
        if (!arena_ || n <= grain) {
            for (std::size_t i = 0; i < n; ++i) fn(i);
            return;
        }
        arena_->execute([&] {
            oneapi::tbb::parallel_for(oneapi::tbb::blocked_range<std::size_t>(0, n, grain),
                                      [&](const oneapi::tbb::blocked_range<std::size_t>& r) {
                                          for (std::size_t i = r.begin(); i < r.end(); ++i) fn(i);
                                      });
        });
    }

    static const Executor& sequential() {
        static const Executor exec(1);
        return exec;
    }

private:
    std::size_t threads_ = 1;
    std::unique_ptr<oneapi::tbb::global_control> control_;
    std::unique_ptr<oneapi::tbb::task_arena> arena_;
};

}  // namespace dq
