#pragma once

/**
 * @file core.hpp
 * @brief Shared domain types for dataset quantization: the feature matrix,
 *        labels, run configurations, and input validation.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dq {

inline constexpr const char* kToolVersion = "0.1.0";

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments, malformed input, or a broken precondition.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Well-formed file that violates its format contract.
class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

/// Filesystem failure (open, read, write).
class IoError : public Error {
public:
    using Error::Error;
};

/// An exact invariant was found violated at runtime.
class InvariantError : public Error {
public:
    using Error::Error;
};

/**
 * Dense row-major matrix of per-sample embeddings. Row i is f(x_i).
 *
 * Entries are not checked for finiteness on construction so that
 * validate_inputs() can report bad coordinates; every algorithm entry point
 * validates first.
 */
class FeatureMatrix {
public:
    FeatureMatrix() = default;

    FeatureMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw ValidationError("feature data size " + std::to_string(data_.size()) +
                                  " does not match shape " + std::to_string(rows_) + "x" +
                                  std::to_string(cols_));
        }
    }

    /// Builds a matrix from nested rows; all rows must share one length.
    static FeatureMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        const std::size_t m = rows.empty() ? 0 : rows.front().size();
        std::vector<double> flat;
        flat.reserve(rows.size() * m);
        for (const auto& r : rows) {
            if (r.size() != m) {
                throw ValidationError("ragged rows in feature matrix");
            }
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return FeatureMatrix(rows.size(), m, std::move(flat));
    }

    std::size_t num_samples() const noexcept { return rows_; }
    std::size_t dim() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }
    std::span<const double> data() const noexcept { return data_; }

    /// Copy of the given rows, in the given order.
    FeatureMatrix select_rows(std::span<const std::size_t> indices) const {
        std::vector<double> flat;
        flat.reserve(indices.size() * cols_);
        for (std::size_t i : indices) {
            auto r = row(i);
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return FeatureMatrix(indices.size(), cols_, std::move(flat));
    }

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// One integer class id per sample.
struct LabelVector {
    std::vector<std::int64_t> labels;
    std::size_t num_classes = 0;

    /// num_classes = max label + 1 (0 for an empty vector).
    static LabelVector from_labels(std::vector<std::int64_t> labels) {
        std::int64_t hi = -1;
        for (auto l : labels) hi = std::max(hi, l);
        LabelVector out;
        out.num_classes = static_cast<std::size_t>(hi + 1);
        out.labels = std::move(labels);
        return out;
    }
};

struct QuantizeConfig {
    std::size_t num_bins = 10;
    bool center_features = true;
    bool stratify_by_class = true;
    std::uint64_t seed = 0;
};

struct SampleConfig {
    double keep_ratio = 1.0;
    std::uint64_t seed = 0;
};

struct PatchConfig {
    std::size_t patch_height = 16;
    std::size_t patch_width = 16;
    double drop_ratio = 0.25;
};

/**
 * floor(ratio * count), tolerant of decimal ratios that are not exact in
 * binary (0.6 * 1000 must give 600, not 599).
 */
inline std::size_t floor_fraction(double ratio, std::size_t count) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(count) + 1e-9));
}

struct ValidationReport {
    std::vector<std::string> violations;

    bool ok() const noexcept { return violations.empty(); }

    /// Throws ValidationError carrying the first violations when not ok().
    void throw_if_failed() const {
        if (ok()) return;
        std::string msg = violations.front();
        if (violations.size() > 1) {
            msg += " (and " + std::to_string(violations.size() - 1) + " more)";
        }
        throw ValidationError(msg);
    }
};

/// Reports non-finite entries, empty matrices, and label mismatches. Never throws.
inline ValidationReport validate_inputs(const FeatureMatrix& features,
                                        const LabelVector* labels = nullptr) {
    constexpr std::size_t kMaxReported = 16;
    ValidationReport report;
    if (features.empty()) {
        report.violations.emplace_back("empty feature matrix");
    }
    std::size_t bad = 0;
    for (std::size_t i = 0; i < features.num_samples(); ++i) {
        for (std::size_t j = 0; j < features.dim(); ++j) {
            if (!std::isfinite(features(i, j))) {
                if (bad++ < kMaxReported) {
                    report.violations.push_back("non-finite at row " + std::to_string(i) +
                                                " col " + std::to_string(j));
                }
            }
        }
    }
    if (bad > kMaxReported) {
        report.violations.push_back(std::to_string(bad - kMaxReported) +
                                    " further non-finite entries");
    }
    if (labels != nullptr) {
        if (labels->labels.size() != features.num_samples()) {
            report.violations.push_back("label length " + std::to_string(labels->labels.size()) +
                                        " ≠ " + std::to_string(features.num_samples()) +
                                        " samples");
        }
        for (std::size_t i = 0; i < labels->labels.size(); ++i) {
            const auto l = labels->labels[i];
            if (l < 0 || static_cast<std::size_t>(l) >= labels->num_classes) {
                report.violations.push_back("label " + std::to_string(l) + " at sample " +
                                            std::to_string(i) + " outside [0, " +
                                            std::to_string(labels->num_classes) + ")");
                break;
            }
        }
    }
    return report;
}

inline ValidationReport validate_inputs(const FeatureMatrix& features, const LabelVector& labels) {
    return validate_inputs(features, &labels);
}

/// Column means, accumulated in row order.
inline std::vector<double> column_means(const FeatureMatrix& features) {
    std::vector<double> mean(features.dim(), 0.0);
    for (std::size_t i = 0; i < features.num_samples(); ++i) {
        auto r = features.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) mean[j] += r[j];
    }
    if (features.num_samples() > 0) {
        for (auto& v : mean) v /= static_cast<double>(features.num_samples());
    }
    return mean;
}

/// Subtracts the column means. Returns the centered matrix and the mean removed.
inline std::pair<FeatureMatrix, std::vector<double>> center_features(const FeatureMatrix& features) {
    auto mean = column_means(features);
    std::vector<double> out(features.data().begin(), features.data().end());
    const std::size_t m = features.dim();
    for (std::size_t i = 0; i < features.num_samples(); ++i) {
        for (std::size_t j = 0; j < m; ++j) out[i * m + j] -= mean[j];
    }
    return {FeatureMatrix(features.num_samples(), m, std::move(out)), std::move(mean)};
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

}  // namespace detail
}  // namespace dq
