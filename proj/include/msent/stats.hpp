#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "msent/error.hpp"
#include "msent/rng.hpp"

namespace msent {

struct ClassifierReport {
    std::size_t tp = 0;
    std::size_t fp = 0;
    double precision = 0.0;
};

inline ClassifierReport precision(std::span<const int> predicted, std::span<const int> truth) {
    require(!predicted.empty(), ErrorKind::empty_input, "precision: empty input");
    require(predicted.size() == truth.size(), ErrorKind::dimension_mismatch,
            "precision: length mismatch");
    ClassifierReport r;
    for (std::size_t i = 0; i < predicted.size(); ++i) (predicted[i] == truth[i] ? r.tp : r.fp)++;
    r.precision = double(r.tp) / double(r.tp + r.fp);
    return r;
}

// ---------------------------------------------------------------------------
// Column standardization

/// Per-column mean / population std, fitted on one sample and applied to others.
class Standardizer {
public:
    Standardizer() = default;

    /// `rows` is row-major with `width` columns.
    static Standardizer fit(std::span<const double> rows, std::size_t width,
                            const std::vector<std::string>& names = {}) {
        require(width > 0 && rows.size() % width == 0, ErrorKind::dimension_mismatch,
                "standardizer: data is not a whole number of rows");
        const std::size_t n = rows.size() / width;
        require(n > 0, ErrorKind::empty_input, "standardizer: no rows to fit");
        Standardizer s;
        s.mean_.assign(width, 0.0);
        s.std_.assign(width, 0.0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < width; ++c) s.mean_[c] += rows[r * width + c];
        for (auto& m : s.mean_) m /= double(n);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < width; ++c) {
                const double d = rows[r * width + c] - s.mean_[c];
                s.std_[c] += d * d;
            }
        for (std::size_t c = 0; c < width; ++c) {
            s.std_[c] = std::sqrt(s.std_[c] / double(n));
            if (!(s.std_[c] > 0.0)) {
                s.warnings_.push_back("zero-variance column " +
                                      (c < names.size() ? names[c] : std::to_string(c)) +
                                      " passed through as zeros");
            }
        }
        return s;
    }

    [[nodiscard]] double transform(double x, std::size_t column) const {
        return std_[column] > 0.0 ? (x - mean_[column]) / std_[column] : 0.0;
    }

    void apply(std::span<double> rows) const {
        require(rows.size() % width() == 0, ErrorKind::dimension_mismatch,
                "standardizer: data width does not match the fit");
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = transform(rows[i], i % width());
    }

    [[nodiscard]] std::size_t width() const noexcept { return mean_.size(); }
    [[nodiscard]] const std::vector<double>& means() const noexcept { return mean_; }
    [[nodiscard]] const std::vector<double>& stds() const noexcept { return std_; }
    [[nodiscard]] const std::vector<std::string>& warnings() const noexcept { return warnings_; }

private:
    std::vector<double> mean_;
    std::vector<double> std_;
    std::vector<std::string> warnings_;
};

struct ZScoreResult {
    std::vector<double> train;
    std::vector<double> other;
    Standardizer fitted;
};

inline ZScoreResult zscore_fit_apply(std::span<const double> train, std::span<const double> other,
                                     std::size_t width) {
    ZScoreResult r{{train.begin(), train.end()}, {other.begin(), other.end()},
                   Standardizer::fit(train, width)};
    r.fitted.apply(r.train);
    r.fitted.apply(r.other);
    return r;
}

/// Correlation matrix of equal-length, non-constant columns.
inline std::vector<std::vector<double>> pearson_matrix(const std::vector<std::vector<double>>& columns) {
    require(columns.size() >= 2, ErrorKind::invalid_argument, "pearson_matrix needs >= 2 columns");
    const std::size_t n = columns.front().size();
    require(n >= 2, ErrorKind::invalid_argument, "pearson_matrix needs >= 2 observations");
    std::vector<std::vector<double>> centered;
    std::vector<double> norms;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        require(columns[c].size() == n, ErrorKind::dimension_mismatch,
                "pearson_matrix: column lengths differ");
        const double mean = std::accumulate(columns[c].begin(), columns[c].end(), 0.0) / double(n);
        std::vector<double> x(n);
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = columns[c][i] - mean;
            ss += x[i] * x[i];
        }
        require(ss > 0.0, ErrorKind::zero_variance, "pearson_matrix: column " + std::to_string(c) +
                                                         " is constant");
        centered.push_back(std::move(x));
        norms.push_back(std::sqrt(ss));
    }
    const std::size_t p = columns.size();
    std::vector<std::vector<double>> r(p, std::vector<double>(p, 1.0));
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = a + 1; b < p; ++b) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += centered[a][i] * centered[b][i];
            r[a][b] = r[b][a] = std::clamp(dot / (norms[a] * norms[b]), -1.0, 1.0);
        }
    return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    return pearson_matrix({{x.begin(), x.end()}, {y.begin(), y.end()}})[0][1];
}

// ---------------------------------------------------------------------------
// Paired permutation test

struct PermutationConfig {
    std::size_t n_permutations = 10000;
    std::uint64_t seed = 0;
};

/// Two-sided paired sign-flip test on mean absolute error difference.
inline double permutation_test(std::span<const double> errors_a, std::span<const double> errors_b,
                               const PermutationConfig& cfg = {}) {
    require(errors_a.size() == errors_b.size(), ErrorKind::dimension_mismatch,
            "permutation_test: length mismatch");
    require(errors_a.size() >= 10, ErrorKind::invalid_argument,
            "permutation_test needs at least 10 pairs");
    require(cfg.n_permutations >= 100, ErrorKind::invalid_argument,
            "permutation_test needs at least 100 permutations");
    const std::size_t n = errors_a.size();
    std::vector<double> d(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        d[i] = errors_a[i] - errors_b[i];
        total += d[i];
    }
    const double observed = std::abs(total / double(n));
    // Relative slack so that exact ties survive rounding in the permuted sums.
    const double tolerance = 1e-12 * std::max(1.0, observed);
    std::size_t count = 0;
    for (std::size_t rep = 0; rep < cfg.n_permutations; ++rep) {
        Rng rng(cfg.seed, rep);
        double s = 0.0;
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (i % 64 == 0) bits = rng.next_u64();
            s += (bits & 1u) ? -d[i] : d[i];
            bits >>= 1;
        }
        if (std::abs(s / double(n)) >= observed - tolerance) ++count;
    }
    return double(1 + count) / double(1 + cfg.n_permutations);
}

// ---------------------------------------------------------------------------
// Permutation feature importance

struct ImportanceResult {
    std::size_t feature = 0;
    double baseline = 0.0;
    double importance = 0.0;
};

/// Mean over repeats of (MAE after shuffling feature column across samples - baseline MAE).
///
/// `Sample` exposes `window` (row-major steps x features), `features`, and `target`;
/// `predict` maps a vector of samples to predictions.
template <typename Sample, typename Predict>
ImportanceResult permutation_importance(Predict&& predict, const std::vector<Sample>& samples,
                                        std::size_t feature_index, std::size_t n_repeats,
                                        std::uint64_t seed) {
    require(!samples.empty(), ErrorKind::empty_input, "permutation_importance: no samples");
    require(n_repeats >= 1, ErrorKind::invalid_argument, "permutation_importance: n_repeats < 1");
    const std::size_t width = samples.front().features;
    require(feature_index < width, ErrorKind::out_of_range,
            "feature index " + std::to_string(feature_index) + " out of range (" +
                std::to_string(width) + " features)");
    const auto mae = [&](const std::vector<Sample>& s) {
        const auto p = predict(s);
        double e = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) e += std::abs(p[i] - s[i].target);
        return e / double(s.size());
    };
    ImportanceResult out;
    out.feature = feature_index;
    out.baseline = mae(samples);
    double total = 0.0;
    for (std::size_t rep = 0; rep < n_repeats; ++rep) {
        Rng rng(seed + feature_index * 1000003ULL, rep);
        std::vector<std::size_t> perm(samples.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(perm));
        std::vector<Sample> shuffled = samples;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto& src = samples[perm[i]];
            auto& dst = shuffled[i];
            const std::size_t steps = dst.window.size() / width;
            for (std::size_t t = 0; t < steps; ++t)
                dst.window[t * width + feature_index] = src.window[t * width + feature_index];
        }
        total += mae(shuffled) - out.baseline;
    }
    out.importance = total / double(n_repeats);
    return out;
}

}  // namespace msent
