#pragma once

/**
 * @file patchmask.hpp
 * @brief Patch importance from pixel attention maps and keep/drop masks for
 *        a patch drop ratio.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "dq/core.hpp"

namespace dq {

/// Tag recorded next to serialized masks; bump when the tie-break changes.
inline constexpr const char* kMaskTieBreak = "lowest-score-then-highest-flat-index/v1";

/// Row-major real grid.
struct Grid {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Grid() = default;
    Grid(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    Grid(std::size_t r, std::size_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
        if (values.size() != rows * cols) throw ValidationError("grid data does not match its shape");
    }

    static Grid from_rows(const std::vector<std::vector<double>>& rows) {
        Grid g(rows.size(), rows.empty() ? 0 : rows.front().size());
        for (std::size_t r = 0; r < g.rows; ++r) {
            if (rows[r].size() != g.cols) throw ValidationError("ragged grid rows");
            std::copy(rows[r].begin(), rows[r].end(), g.values.begin() + r * g.cols);
        }
        return g;
    }

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    std::size_t size() const noexcept { return values.size(); }

    friend bool operator==(const Grid&, const Grid&) = default;
};

struct AttentionMap {
    Grid values;
    std::size_t image_id = 0;
};

struct PatchMask {
    std::size_t image_id = 0;
    /// Row-major over the patch grid; true = keep.
    std::vector<bool> keep;
    Grid scores;
    std::size_t dropped_count = 0;

    std::size_t grid_rows() const noexcept { return scores.rows; }
    std::size_t grid_cols() const noexcept { return scores.cols; }

    friend bool operator==(const PatchMask&, const PatchMask&) = default;
};

/**
 * Bilinear upsampling with corner-aligned sampling: output pixel (i, j)
 * samples the source at (i (H'-1)/(H-1), j (W'-1)/(W-1)).
 */
inline Grid upsample_map(const Grid& low, std::size_t height, std::size_t width) {
    if (low.rows == 0 || low.cols == 0) throw ValidationError("empty attention map");
    if (height < low.rows || width < low.cols) {
        throw ValidationError("target " + std::to_string(height) + "x" + std::to_string(width) +
                              " smaller than source " + std::to_string(low.rows) + "x" +
                              std::to_string(low.cols));
    }
    if (height == low.rows && width == low.cols) return low;

    auto axis = [](std::size_t out_i, std::size_t out_n, std::size_t in_n) {
        const double pos = out_n == 1 ? 0.0
                                      : static_cast<double>(out_i) * static_cast<double>(in_n - 1) /
                                            static_cast<double>(out_n - 1);
        const auto lo = std::min(static_cast<std::size_t>(pos), in_n - 1);
        const auto hi = std::min(lo + 1, in_n - 1);
        return std::tuple{lo, hi, pos - static_cast<double>(lo)};
    };

    Grid out(height, width);
    for (std::size_t i = 0; i < height; ++i) {
        const auto [r0, r1, ty] = axis(i, height, low.rows);
        for (std::size_t j = 0; j < width; ++j) {
            const auto [c0, c1, tx] = axis(j, width, low.cols);
            const double top = low.at(r0, c0) * (1.0 - tx) + low.at(r0, c1) * tx;
            const double bottom = low.at(r1, c0) * (1.0 - tx) + low.at(r1, c1) * tx;
            out.at(i, j) = top * (1.0 - ty) + bottom * ty;
        }
    }
    return out;
}

inline void check_patch_geometry(std::size_t height, std::size_t width, const PatchConfig& config) {
    if (config.patch_height == 0 || config.patch_width == 0) {
        throw ValidationError("patch size must be positive");
    }
    if (height % config.patch_height != 0 || width % config.patch_width != 0) {
        throw ValidationError("patch " + std::to_string(config.patch_height) + "x" +
                              std::to_string(config.patch_width) + " does not divide " +
                              std::to_string(height) + "x" + std::to_string(width));
    }
}

/// Mean attention of each h x w patch.
inline Grid patch_scores(const AttentionMap& map, const PatchConfig& config) {
    const Grid& a = map.values;
    check_patch_geometry(a.rows, a.cols, config);
    const std::size_t h = config.patch_height, w = config.patch_width;
    Grid scores(a.rows / h, a.cols / w);
    const double area = static_cast<double>(h * w);
    for (std::size_t r = 0; r < scores.rows; ++r) {
        for (std::size_t c = 0; c < scores.cols; ++c) {
            double sum = 0.0;
            for (std::size_t i = r * h; i < (r + 1) * h; ++i) {
                for (std::size_t j = c * w; j < (c + 1) * w; ++j) sum += a.at(i, j);
            }
            scores.at(r, c) = sum / area;
        }
    }
    return scores;
}

/**
 * Drops the floor(theta * P) lowest-scoring patches. Equal scores drop the
 * higher row-major index first, so uniform attention keeps the top-left.
 */
inline PatchMask drop_mask(const Grid& scores, double theta) {
    if (!(theta >= 0.0 && theta < 1.0)) {
        throw ValidationError("drop ratio must be in [0, 1), got " + std::to_string(theta));
    }
    const std::size_t count = scores.size();
    const std::size_t drop = floor_fraction(theta, count);
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double sa = scores.values[a], sb = scores.values[b];
        return sa != sb ? sa < sb : a > b;
    });
    PatchMask mask;
    mask.scores = scores;
    mask.keep.assign(count, true);
    for (std::size_t t = 0; t < drop; ++t) mask.keep[order[t]] = false;
    mask.dropped_count = drop;
    return mask;
}

inline PatchMask mask_image(const AttentionMap& map, const PatchConfig& config) {
    for (double v : map.values.values) {
        if (!std::isfinite(v)) throw ValidationError("non-finite attention value");
        if (v < 0.0) throw ValidationError("negative attention value");
    }
    PatchMask m = drop_mask(patch_scores(map, config), config.drop_ratio);
    m.image_id = map.image_id;
    return m;
}

/// Element-wise mask_image(); an error names the offending image.
inline std::vector<PatchMask> mask_batch(const std::vector<AttentionMap>& maps,
                                         const PatchConfig& config) {
    std::vector<PatchMask> out;
    out.reserve(maps.size());
    for (const auto& map : maps) {
        try {
            out.push_back(mask_image(map, config));
        } catch (const ValidationError& e) {
            throw ValidationError("image " + std::to_string(map.image_id) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace dq
