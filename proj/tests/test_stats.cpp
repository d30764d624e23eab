#include <gtest/gtest.h>

#include "msent/rng.hpp"
#include "msent/stats.hpp"
#include "test_util.hpp"

using namespace msent;

namespace {

struct LinSample {
    std::vector<double> window;  // one step
    std::size_t features = 0;
    double target = 0.0;
};

std::vector<double> abs_normal(Rng& rng, std::size_t n, double shift = 0.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = std::abs(rng.normal()) + shift;
    return v;
}

}  // namespace

TEST(Precision, Examples) {
    const std::vector<int> truth{1, 0, -1, 1, 1, 0, -1, 1, 0, 0};
    EXPECT_EQ(precision(truth, truth).precision, 1.0);
    auto half = truth;
    for (std::size_t i = 0; i < 5; ++i) half[i] = truth[i] == 1 ? -1 : 1;
    const auto r = precision(half, truth);
    EXPECT_EQ(r.tp, 5u);
    EXPECT_EQ(r.fp, 5u);
    EXPECT_EQ(r.precision, 0.5);
    EXPECT_MSENT_ERROR(precision(std::vector<int>{}, std::vector<int>{}), ErrorKind::empty_input);
    EXPECT_MSENT_ERROR(precision(std::vector<int>{1}, std::vector<int>{1, 0}), ErrorKind::dimension_mismatch);
}

TEST(ZScore, HandExample) {
    const std::vector<double> train{1, 2, 3};
    const std::vector<double> other{4, 2};
    const auto z = zscore_fit_apply(train, other, 1);
    EXPECT_NEAR(z.train[0], -1.2247, 1e-4);
    EXPECT_NEAR(z.train[1], 0.0, 1e-15);
    EXPECT_NEAR(z.train[2], 1.2247, 1e-4);
    EXPECT_NEAR(z.other[0], 2.0 / std::sqrt(2.0 / 3.0), 1e-12);
    EXPECT_EQ(z.other[1], 0.0);
    auto again = train;
    z.fitted.apply(again);
    EXPECT_EQ(again, z.train);
}

TEST(ZScore, TrainColumnsHaveZeroMeanUnitStd) {
    Rng rng(1);
    const std::size_t width = 4;
    std::vector<double> rows(200 * width);
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = rng.normal(double(i % width) * 10, 1 + double(i % width));
    const auto z = zscore_fit_apply(rows, {}, width);
    for (std::size_t c = 0; c < width; ++c) {
        double m = 0, v = 0;
        for (std::size_t r = 0; r < 200; ++r) m += z.train[r * width + c] / 200;
        for (std::size_t r = 0; r < 200; ++r) v += std::pow(z.train[r * width + c] - m, 2) / 200;
        EXPECT_NEAR(m, 0.0, 1e-12);
        EXPECT_NEAR(v, 1.0, 1e-12);
    }
}

TEST(ZScore, ConstantColumnBecomesZerosWithWarning) {
    const std::vector<double> rows{1, 7, 2, 7, 3, 7};
    const auto z = zscore_fit_apply(rows, std::vector<double>{5, 9}, 2);
    EXPECT_EQ(z.train[1], 0.0);
    EXPECT_EQ(z.train[3], 0.0);
    EXPECT_EQ(z.other[1], 0.0);
    ASSERT_EQ(z.fitted.warnings().size(), 1u);
    EXPECT_NE(z.fitted.warnings()[0].find("column 1"), std::string::npos);
    EXPECT_MSENT_ERROR(Standardizer::fit(std::vector<double>{1, 2, 3}, 2), ErrorKind::dimension_mismatch);
}

TEST(Pearson, Examples) {
    const std::vector<double> x{1, 4, 2, 8, 5};
    std::vector<double> neg(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) neg[i] = -x[i];
    EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
    EXPECT_NEAR(pearson(x, neg), -1.0, 1e-15);
    EXPECT_MSENT_ERROR(pearson(x, std::vector<double>(5, 2.0)), ErrorKind::zero_variance);
    EXPECT_MSENT_ERROR(pearson(x, std::vector<double>{1, 2}), ErrorKind::dimension_mismatch);
}

TEST(Pearson, MatchesCovarianceFormula) {
    Rng rng(2);
    std::vector<std::vector<double>> cols(5, std::vector<double>(60));
    for (auto& c : cols)
        for (auto& v : c) v = rng.normal();
    for (std::size_t i = 0; i < 60; ++i) cols[1][i] += 0.7 * cols[0][i];
    const auto r = pearson_matrix(cols);
    const auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); };
    for (std::size_t a = 0; a < 5; ++a) {
        EXPECT_EQ(r[a][a], 1.0);
        for (std::size_t b = 0; b < 5; ++b) {
            // sample covariance / (sample std * sample std); the n-1 factors cancel
            const double ma = mean(cols[a]), mb = mean(cols[b]);
            double cov = 0, va = 0, vb = 0;
            for (std::size_t i = 0; i < 60; ++i) {
                cov += (cols[a][i] - ma) * (cols[b][i] - mb) / 59;
                va += (cols[a][i] - ma) * (cols[a][i] - ma) / 59;
                vb += (cols[b][i] - mb) * (cols[b][i] - mb) / 59;
            }
            EXPECT_NEAR(r[a][b], cov / std::sqrt(va * vb), 1e-10);
            EXPECT_EQ(r[a][b], r[b][a]);
            EXPECT_LE(std::abs(r[a][b]), 1.0);
        }
    }
}

TEST(Pearson, AffineInvariance) {
    Rng rng(3);
    std::vector<std::vector<double>> cols(3, std::vector<double>(40));
    for (auto& c : cols)
        for (auto& v : c) v = rng.normal();
    const auto r = pearson_matrix(cols);
    auto scaled = cols;
    for (auto& v : scaled[2]) v = 1e3 * v - 42.0;
    for (auto& v : scaled[0]) v = 0.01 * v + 5.0;
    const auto s = pearson_matrix(scaled);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) EXPECT_NEAR(s[a][b], r[a][b], 1e-10);
}

TEST(PermutationTest, IdenticalVectorsGiveOne) {
    Rng rng(4);
    const auto a = abs_normal(rng, 50);
    EXPECT_EQ(permutation_test(a, a, {1000, 1}), 1.0);
}

TEST(PermutationTest, LargeShiftIsSignificant) {
    Rng rng(5);
    const auto b = abs_normal(rng, 100);
    std::vector<double> a = b;
    for (auto& v : a) v += 3.0;
    const double p = permutation_test(a, b, {10000, 2});
    EXPECT_LE(p, 0.01);
    EXPECT_GT(p, 0.0);
    EXPECT_DOUBLE_EQ(p, 1.0 / 10001.0);
}

TEST(PermutationTest, SymmetricAndDeterministic) {
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        const auto a = abs_normal(rng, 30);
        const auto b = abs_normal(rng, 30, 0.1);
        const double p = permutation_test(a, b, {500, std::uint64_t(t)});
        EXPECT_EQ(p, permutation_test(b, a, {500, std::uint64_t(t)}));
        EXPECT_EQ(p, permutation_test(a, b, {500, std::uint64_t(t)}));
        EXPECT_GT(p, 0.0);
        EXPECT_LE(p, 1.0);
    }
}

TEST(PermutationTest, NullCalibration) {
    Rng rng(7);
    int rejections = 0;
    for (int t = 0; t < 200; ++t) {
        const auto a = abs_normal(rng, 60);
        const auto b = abs_normal(rng, 60);
        if (permutation_test(a, b, {1000, std::uint64_t(1000 + t)}) < 0.05) ++rejections;
    }
    const double rate = rejections / 200.0;
    EXPECT_GE(rate, 0.01);
    EXPECT_LE(rate, 0.10);
}

TEST(PermutationTest, Errors) {
    const std::vector<double> a(10, 1.0);
    EXPECT_MSENT_ERROR(permutation_test(a, std::vector<double>(11, 1.0)), ErrorKind::dimension_mismatch);
    EXPECT_MSENT_ERROR(permutation_test(std::vector<double>(9), std::vector<double>(9)), ErrorKind::invalid_argument);
    EXPECT_MSENT_ERROR(permutation_test(a, a, {99, 0}), ErrorKind::invalid_argument);
    EXPECT_EQ(PermutationConfig{}.n_permutations, 10000u);
}

namespace {

std::vector<LinSample> linear_data(std::size_t n, std::size_t width, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LinSample> out(n);
    for (auto& s : out) {
        s.features = width;
        s.window.resize(width);
        for (auto& v : s.window) v = rng.normal();
    }
    return out;
}

auto linear_model(std::vector<double> w) {
    return [w = std::move(w)](const std::vector<LinSample>& s) {
        std::vector<double> p;
        for (const auto& x : s) p.push_back(std::inner_product(w.begin(), w.end(), x.window.begin(), 0.0));
        return p;
    };
}

}  // namespace

TEST(Importance, IgnoredFeatureScoresZero) {
    auto data = linear_data(200, 3, 8);
    const auto model = linear_model({1.0, 0.0, -2.0});
    for (auto& s : data) s.target = model({s})[0] + 0.1;
    const auto r = permutation_importance(model, data, 1, 5, 9);
    EXPECT_NEAR(r.importance, 0.0, 1e-6);
    EXPECT_NEAR(r.baseline, 0.1, 1e-12);
    EXPECT_MSENT_ERROR(permutation_importance(model, data, 3, 5, 9), ErrorKind::out_of_range);
    EXPECT_EQ(permutation_importance(model, data, 0, 5, 9).importance,
              permutation_importance(model, data, 0, 5, 9).importance);
}

TEST(Importance, LeakedTargetRanksFirst) {
    auto data = linear_data(300, 5, 10);
    Rng rng(11);
    for (auto& s : data) {
        s.target = 0.3 * s.window[0] + 0.2 * s.window[1] + rng.normal(0, 0.5);
        s.window[4] = s.target;
    }
    const auto model = linear_model({0.05, 0.05, 0.0, 0.0, 0.9});
    std::size_t best = 0;
    double best_imp = -1e300;
    for (std::size_t f = 0; f < 5; ++f) {
        const auto r = permutation_importance(model, data, f, 5, 12);
        if (r.importance > best_imp) {
            best_imp = r.importance;
            best = f;
        }
    }
    EXPECT_EQ(best, 4u);
}

TEST(Importance, DuplicatedFeatureSplitsAttribution) {
    auto single = linear_data(400, 2, 13);
    for (auto& s : single) s.target = 2.0 * s.window[0] + 0.5 * s.window[1];
    auto dup = single;
    for (auto& s : dup) {
        s.window = {s.window[0], s.window[0], s.window[1]};
        s.features = 3;
    }
    const double whole = permutation_importance(linear_model({2.0, 0.5}), single, 0, 10, 14).importance;
    const auto dup_model = linear_model({1.0, 1.0, 0.5});
    const double parts = permutation_importance(dup_model, dup, 0, 10, 14).importance +
                         permutation_importance(dup_model, dup, 1, 10, 15).importance;
    EXPECT_GT(whole, 0.5);
    EXPECT_NEAR(parts, whole, 0.5 * whole);
}
