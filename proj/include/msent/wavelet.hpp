#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "msent/error.hpp"

namespace msent {

enum class WaveletFamily { db4, db2 };
enum class Boundary { symmetric, periodization };
enum class SmoothMode { full_sample, causal };
enum class SmoothRule { band_zero, soft_threshold };

inline WaveletFamily parse_wavelet_family(std::string_view name) {
    if (name == "db4" || name == "db4_8tap") return WaveletFamily::db4;
    if (name == "db2" || name == "d4_4tap") return WaveletFamily::db2;
    fail(ErrorKind::config, "unknown wavelet family '" + std::string(name) + "'");
}

inline std::string_view to_string(WaveletFamily f) { return f == WaveletFamily::db4 ? "db4" : "db2"; }

inline SmoothMode parse_smooth_mode(std::string_view name) {
    if (name == "full_sample") return SmoothMode::full_sample;
    if (name == "causal") return SmoothMode::causal;
    fail(ErrorKind::config, "unknown smoothing mode '" + std::string(name) + "'");
}

inline std::string_view to_string(SmoothMode m) {
    return m == SmoothMode::full_sample ? "full_sample" : "causal";
}

inline Boundary parse_boundary(std::string_view name) {
    if (name == "symmetric") return Boundary::symmetric;
    if (name == "periodization") return Boundary::periodization;
    fail(ErrorKind::config, "unknown wavelet boundary '" + std::string(name) + "'");
}

inline std::string_view to_string(Boundary b) {
    return b == Boundary::symmetric ? "symmetric" : "periodization";
}

inline SmoothRule parse_smooth_rule(std::string_view name) {
    if (name == "band_zero") return SmoothRule::band_zero;
    if (name == "soft_threshold") return SmoothRule::soft_threshold;
    fail(ErrorKind::config, "unknown smoothing rule '" + std::string(name) + "'");
}

inline std::string_view to_string(SmoothRule r) {
    return r == SmoothRule::band_zero ? "band_zero" : "soft_threshold";
}

struct WaveletSpec {
    WaveletFamily family = WaveletFamily::db4;
    int level = 6;
    SmoothMode mode = SmoothMode::full_sample;
    Boundary boundary = Boundary::symmetric;
    SmoothRule rule = SmoothRule::band_zero;
    std::size_t causal_window = 128;
};

/// Orthogonal filter bank. Decomposition low-pass is stored; the rest is derived.
class FilterBank {
public:
    explicit FilterBank(WaveletFamily family) {
        // extremal-phase filters from the spectral factorization, 20 significant digits
        static constexpr std::array<double, 8> db4{
            -0.010597401785069032105, 0.032883011666885199735, 0.030841381835560763627,
            -0.18703481171909308408,  -0.027983769416859854211, 0.63088076792985890788,
            0.71484657055291564709,   0.23037781330889650086};
        static const double r3 = std::sqrt(3.0);
        static const double c = 4.0 * std::sqrt(2.0);
        const std::array<double, 4> db2{(1.0 - r3) / c, (3.0 - r3) / c, (3.0 + r3) / c, (1.0 + r3) / c};
        if (family == WaveletFamily::db4) {
            dec_lo_.assign(db4.begin(), db4.end());
        } else {
            dec_lo_.assign(db2.begin(), db2.end());
        }
        const std::size_t f = dec_lo_.size();
        dec_hi_.resize(f);
        for (std::size_t k = 0; k < f; ++k) {
            const double sign = (k % 2 == 0) ? -1.0 : 1.0;
            dec_hi_[k] = sign * dec_lo_[f - 1 - k];
        }
        rec_lo_.assign(dec_lo_.rbegin(), dec_lo_.rend());
        rec_hi_.assign(dec_hi_.rbegin(), dec_hi_.rend());
    }

    [[nodiscard]] std::size_t length() const noexcept { return dec_lo_.size(); }
    [[nodiscard]] const std::vector<double>& dec_lo() const noexcept { return dec_lo_; }
    [[nodiscard]] const std::vector<double>& dec_hi() const noexcept { return dec_hi_; }
    [[nodiscard]] const std::vector<double>& rec_lo() const noexcept { return rec_lo_; }
    [[nodiscard]] const std::vector<double>& rec_hi() const noexcept { return rec_hi_; }

private:
    std::vector<double> dec_lo_;
    std::vector<double> dec_hi_;
    std::vector<double> rec_lo_;
    std::vector<double> rec_hi_;
};

/// Multilevel coefficients; details[0] is the finest band.
struct WaveletPyramid {
    std::vector<double> approximation;
    std::vector<std::vector<double>> details;
    std::size_t original_length = 0;

    [[nodiscard]] std::size_t coefficient_count() const {
        std::size_t n = approximation.size();
        for (const auto& d : details) n += d.size();
        return n;
    }
};

inline std::size_t min_length(const WaveletSpec& spec) {
    return std::size_t{1} << static_cast<unsigned>(spec.level);
}

namespace detail {

/// Half-sample symmetric index with period 2n; also valid when |i| exceeds n.
inline std::size_t symmetric_index(std::ptrdiff_t i, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    i %= period;
    if (i < 0) i += period;
    if (i >= static_cast<std::ptrdiff_t>(n)) i = period - 1 - i;
    return static_cast<std::size_t>(i);
}

inline std::size_t periodic_index(std::ptrdiff_t i, std::size_t n) {
    const auto p = static_cast<std::ptrdiff_t>(n);
    i %= p;
    if (i < 0) i += p;
    return static_cast<std::size_t>(i);
}

inline void dwt_step(std::span<const double> x, const FilterBank& bank, Boundary boundary,
                     std::vector<double>& a, std::vector<double>& d) {
    const std::size_t n = x.size();
    const std::size_t f = bank.length();
    const std::size_t out = boundary == Boundary::symmetric ? (n + f - 1) / 2 : n / 2;
    a.assign(out, 0.0);
    d.assign(out, 0.0);
    const auto& lo = bank.dec_lo();
    const auto& hi = bank.dec_hi();
    for (std::size_t o = 0; o < out; ++o) {
        double sa = 0.0;
        double sd = 0.0;
        for (std::size_t j = 0; j < f; ++j) {
            const auto pos = static_cast<std::ptrdiff_t>(2 * o + 1) - static_cast<std::ptrdiff_t>(j);
            const std::size_t idx = boundary == Boundary::symmetric ? symmetric_index(pos, n)
                                                                    : periodic_index(pos, n);
            sa += lo[j] * x[idx];
            sd += hi[j] * x[idx];
        }
        a[o] = sa;
        d[o] = sd;
    }
}

/// Inverse of the symmetric step: upsample, full convolution, keep [F-2, 2n).
inline std::vector<double> idwt_symmetric(std::span<const double> a, std::span<const double> d,
                                          const FilterBank& bank) {
    const std::size_t n = a.size();
    const std::size_t f = bank.length();
    const std::size_t full = 2 * n + f - 1;
    std::vector<double> y(full, 0.0);
    const auto& lo = bank.rec_lo();
    const auto& hi = bank.rec_hi();
    for (std::size_t o = 0; o < n; ++o) {
        for (std::size_t j = 0; j < f; ++j) {
            y[2 * o + j] += lo[j] * a[o] + hi[j] * d[o];
        }
    }
    const std::size_t begin = f - 2;
    const std::size_t end = 2 * n;
    if (end <= begin) return {};
    return {y.begin() + static_cast<std::ptrdiff_t>(begin), y.begin() + static_cast<std::ptrdiff_t>(end)};
}

/// Periodized transform is orthogonal, so the inverse is the transpose.
inline std::vector<double> idwt_periodic(std::span<const double> a, std::span<const double> d,
                                         const FilterBank& bank) {
    const std::size_t n = 2 * a.size();
    std::vector<double> x(n, 0.0);
    const auto& lo = bank.dec_lo();
    const auto& hi = bank.dec_hi();
    for (std::size_t o = 0; o < a.size(); ++o) {
        for (std::size_t j = 0; j < bank.length(); ++j) {
            const auto pos = static_cast<std::ptrdiff_t>(2 * o + 1) - static_cast<std::ptrdiff_t>(j);
            x[periodic_index(pos, n)] += lo[j] * a[o] + hi[j] * d[o];
        }
    }
    return x;
}

inline double soft(double x, double threshold) {
    const double m = std::abs(x) - threshold;
    return m > 0.0 ? std::copysign(m, x) : 0.0;
}

inline double median_abs(std::vector<double> v) {
    if (v.empty()) return 0.0;
    for (auto& x : v) x = std::abs(x);
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), mid));
    }
    return m;
}

}  // namespace detail

inline void validate(const WaveletSpec& spec) {
    require(spec.level >= 1 && spec.level <= 30, ErrorKind::invalid_argument,
            "wavelet level must be in [1, 30], got " + std::to_string(spec.level));
}

inline WaveletPyramid dwt(std::span<const double> series, const WaveletSpec& spec) {
    validate(spec);
    const std::size_t n = series.size();
    require(n >= min_length(spec), ErrorKind::invalid_argument,
            "series of length " + std::to_string(n) + " is too short for level " +
                std::to_string(spec.level) + " (minimum " + std::to_string(min_length(spec)) + ")");
    if (spec.boundary == Boundary::periodization) {
        require(n % min_length(spec) == 0, ErrorKind::invalid_argument,
                "periodization needs a length divisible by 2^level");
    }
    const FilterBank bank(spec.family);
    WaveletPyramid out;
    out.original_length = n;
    std::vector<double> current(series.begin(), series.end());
    std::vector<double> a;
    std::vector<double> d;
    for (int level = 0; level < spec.level; ++level) {
        detail::dwt_step(current, bank, spec.boundary, a, d);
        out.details.push_back(d);
        current.swap(a);
    }
    out.approximation = std::move(current);
    return out;
}

inline std::vector<double> idwt(const WaveletPyramid& pyramid, const WaveletSpec& spec) {
    const FilterBank bank(spec.family);
    std::vector<double> a = pyramid.approximation;
    for (auto it = pyramid.details.rbegin(); it != pyramid.details.rend(); ++it) {
        const auto& d = *it;
        if (a.size() == d.size() + 1) a.pop_back();
        require(a.size() == d.size(), ErrorKind::dimension_mismatch,
                "wavelet pyramid band sizes are inconsistent");
        a = spec.boundary == Boundary::symmetric ? detail::idwt_symmetric(a, d, bank)
                                                 : detail::idwt_periodic(a, d, bank);
    }
    if (pyramid.original_length > 0 && a.size() > pyramid.original_length) {
        a.resize(pyramid.original_length);
    }
    return a;
}

namespace detail {

inline std::vector<double> smooth_block(std::span<const double> series, const WaveletSpec& spec) {
    auto pyramid = dwt(series, spec);
    if (spec.rule == SmoothRule::band_zero) {
        for (auto& d : pyramid.details) std::fill(d.begin(), d.end(), 0.0);
    } else {
        const double sigma = median_abs(pyramid.details.front()) / 0.6745;
        const double threshold =
            sigma * std::sqrt(2.0 * std::log(static_cast<double>(series.size())));
        for (auto& band : pyramid.details) {
            for (auto& c : band) c = soft(c, threshold);
        }
    }
    return idwt(pyramid, spec);
}

}  // namespace detail

struct SmoothResult {
    std::vector<double> values;
    std::vector<std::string> warnings;
};

/// Duration function: band-limited reconstruction of the series.
inline SmoothResult smooth_with_warnings(std::span<const double> series, const WaveletSpec& spec) {
    validate(spec);
    SmoothResult result;
    if (series.empty()) return result;
    if (spec.mode == SmoothMode::full_sample) {
        result.values = detail::smooth_block(series, spec);
        return result;
    }

    require(spec.causal_window >= 1, ErrorKind::invalid_argument, "causal window must be positive");
    const std::size_t minimum = min_length(spec);
    result.values.resize(series.size());
    std::size_t identity_days = 0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const std::size_t begin = k + 1 > spec.causal_window ? k + 1 - spec.causal_window : 0;
        const auto window = series.subspan(begin, k + 1 - begin);
        if (window.size() < minimum ||
            (spec.boundary == Boundary::periodization && window.size() % minimum != 0)) {
            result.values[k] = series[k];
            ++identity_days;
            continue;
        }
        result.values[k] = detail::smooth_block(window, spec).back();
    }
    if (identity_days > 0) {
        result.warnings.push_back("causal smoothing passed " + std::to_string(identity_days) +
                                  " leading day(s) through unsmoothed: window shorter than " +
                                  std::to_string(minimum));
    }
    return result;
}

inline std::vector<double> smooth(std::span<const double> series, const WaveletSpec& spec) {
    return smooth_with_warnings(series, spec).values;
}

}  // namespace msent
