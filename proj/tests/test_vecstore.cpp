#include <algorithm>
#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "msent/rng.hpp"
#include "msent/vecstore.hpp"
#include "test_util.hpp"

using namespace msent;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    return v;
}

// Exhaustive oracle in long double: full sort, stable on index.
std::vector<std::size_t> oracle_order(const std::vector<std::vector<double>>& rows, const std::vector<double>& q) {
    std::vector<long double> sims;
    for (const auto& r : rows) {
        long double dot = 0, rr = 0, qq = 0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            dot += (long double)r[j] * q[j];
            rr += (long double)r[j] * r[j];
            qq += (long double)q[j] * q[j];
        }
        sims.push_back(dot / std::sqrt(rr * qq));
    }
    std::vector<std::size_t> idx(rows.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return sims[a] > sims[b]; });
    return idx;
}

}  // namespace

TEST(Cosine, Examples) {
    const std::vector<double> v{0.3, -2.0, 5.5};
    EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
    EXPECT_DOUBLE_EQ(cosine(std::vector<double>{1, 0}, std::vector<double>{0, 1}), 0.0);
    EXPECT_NEAR(cosine(std::vector<double>{1, 1}, std::vector<double>{2, 2}), 1.0, 1e-15);
}

TEST(Cosine, Errors) {
    EXPECT_MSENT_ERROR(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}), ErrorKind::invalid_argument);
    EXPECT_MSENT_ERROR(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}),
                       ErrorKind::dimension_mismatch);
}

TEST(Cosine, SymmetricBoundedScaleInvariant) {
    Rng rng(5);
    for (int t = 0; t < 500; ++t) {
        const auto u = random_vec(rng, 7);
        const auto v = random_vec(rng, 7);
        const double c = cosine(u, v);
        ASSERT_LE(std::abs(c), 1.0);
        ASSERT_EQ(c, cosine(v, u));
        auto su = u;
        const double a = std::exp(rng.uniform(-5, 5));
        for (auto& x : su) x *= a;
        ASSERT_NEAR(cosine(su, v), c, 1e-12);
    }
}

TEST(TopK, TruncatesToStoreSize) {
    VectorStore s(2);
    s.add("a", {1, 0});
    s.add("b", {0, 1});
    s.add("c", {1, 1});
    EXPECT_EQ(s.top_k(std::vector<double>{1, 0.2}, 5).size(), 3u);
}

TEST(TopK, ExactMatchRanksFirst) {
    Rng rng(11);
    VectorStore s(6);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 40; ++i) {
        rows.push_back(random_vec(rng, 6));
        s.add("k" + std::to_string(i), rows.back());
    }
    const auto m = s.top_k(rows[17], 3);
    EXPECT_EQ(m[0].topic_id, "k17");
    EXPECT_EQ(m[0].index, 17u);
    EXPECT_NEAR(m[0].similarity, 1.0, 1e-12);
}

TEST(TopK, TiesKeepRegistryOrder) {
    VectorStore s(2);
    s.add("z", {0, 1});
    s.add("y", {2, 0});
    s.add("x", {1, 0});
    s.add("w", {3, 0});
    const auto m = s.top_k(std::vector<double>{1, 0}, 3);
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m[0].topic_id, "y");
    EXPECT_EQ(m[1].topic_id, "x");
    EXPECT_EQ(m[2].topic_id, "w");
}

TEST(TopK, MatchesExhaustiveScan) {
    Rng rng(2024);
    const std::size_t d = 16;
    VectorStore s(d);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 1000; ++i) {
        rows.push_back(random_vec(rng, d));
        s.add("v" + std::to_string(i), rows.back());
    }
    for (int q = 0; q < 100; ++q) {
        const auto query = random_vec(rng, d);
        const auto expect = oracle_order(rows, query);
        const auto got = s.top_k(query, 5);
        ASSERT_EQ(got.size(), 5u);
        for (std::size_t i = 0; i < 5; ++i) {
            ASSERT_EQ(got[i].index, expect[i]) << "query " << q << " rank " << i;
            ASSERT_NEAR(got[i].similarity, cosine(rows[expect[i]], query), 1e-12);
        }
    }
}

TEST(TopK, PrefixOfFullSort) {
    Rng rng(3);
    VectorStore s(4);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 60; ++i) {
        rows.push_back(random_vec(rng, 4));
        s.add(std::to_string(i), rows.back());
    }
    const auto q = random_vec(rng, 4);
    const auto all = s.top_k(q, 60);
    for (std::size_t k = 1; k <= 60; k += 7) {
        const auto part = s.top_k(q, k);
        for (std::size_t i = 0; i < k; ++i) ASSERT_EQ(part[i].index, all[i].index);
    }
    for (std::size_t i = 1; i < all.size(); ++i) ASSERT_GE(all[i - 1].similarity, all[i].similarity);
}

TEST(TopK, Errors) {
    VectorStore empty(3);
    EXPECT_MSENT_ERROR(empty.top_k(std::vector<double>{1, 0, 0}, 1), ErrorKind::empty_input);
    VectorStore s(2);
    s.add("a", {1, 0});
    EXPECT_MSENT_ERROR(s.top_k(std::vector<double>{1, 0}, 0), ErrorKind::invalid_argument);
    EXPECT_MSENT_ERROR(s.top_k(std::vector<double>{1, 0, 0}, 1), ErrorKind::dimension_mismatch);
}

TEST(VectorStore, RejectsBadVectors) {
    VectorStore s(2);
    s.add("a", {1, 0});
    EXPECT_MSENT_ERROR(s.add("a", {0, 1}), ErrorKind::duplicate);
    EXPECT_MSENT_ERROR(s.add("b", {0, 0}), ErrorKind::invalid_argument);
    EXPECT_MSENT_ERROR(s.add("c", {1, 0, 0}), ErrorKind::dimension_mismatch);
    EXPECT_MSENT_ERROR(s.add("d", {NAN, 1}), ErrorKind::non_finite);
}

TEST(Embeddings, JsonlRoundTrip) {
    VectorStore s(3);
    s.add("t1", {0.1, 0.2, 0.3});
    s.add("t2", {-1, 0, 1e-300});
    std::stringstream io;
    write_embeddings(io, s);
    const auto back = read_embeddings(io);
    ASSERT_EQ(back.keys(), s.keys());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto a = s.vector(i);
        const auto b = back.vector(i);
        EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
    }
}

TEST(Embeddings, HeaderRequired) {
    std::istringstream no_header(R"({"key":"a","vector":[1,2]})");
    EXPECT_MSENT_ERROR(read_embeddings(no_header), ErrorKind::schema);
    std::istringstream wrong_dim("{\"dim\":2}\n{\"key\":\"a\",\"vector\":[1,2,3]}\n");
    std::string msg;
    EXPECT_EQ(test::error_kind([&] { static_cast<void>(read_embeddings(wrong_dim)); }, &msg),
              ErrorKind::dimension_mismatch);
    EXPECT_NE(msg.find("line 2"), std::string::npos);
}
