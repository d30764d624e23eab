#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "msent/micro_absa.hpp"
#include "test_util.hpp"

using namespace msent;

namespace {

const Calendar cal10 = build_calendar(parse_day("2013-01-01"), parse_day("2013-01-10"));

std::vector<LabeledItem> random_items(Rng& rng, std::size_t n, std::size_t d) {
    std::vector<LabeledItem> items;
    for (std::size_t i = 0; i < n; ++i) {
        LabeledItem it;
        for (std::size_t j = 0; j < 3 * d; ++j) it.pooled.push_back(rng.normal());
        double a = rng.uniform(0.1, 1), b = rng.uniform(0.1, 1), c = rng.uniform(0.1, 1);
        const double s = a + b + c;
        it.label = {a / s, b / s, 1.0 - a / s - b / s};
        items.push_back(it);
    }
    return items;
}

// Loss evaluated through the plain forward path, independent of the tape.
double direct_loss(const AbsaHead& head, const std::vector<LabeledItem>& items) {
    double s = 0.0;
    for (const auto& it : items) {
        const auto p = head.probabilities(it.pooled);
        const auto l = it.label.as_array();
        for (int c = 0; c < 3; ++c) s += (p[c] - l[c]) * (p[c] - l[c]);
    }
    return s / double(3 * items.size());
}

}  // namespace

TEST(MeanMaxPool, HandExample) {
    const auto out = mean_max_pool(std::vector<double>{0, 0}, {{1, 3}, {2, 0}});
    EXPECT_EQ(out, (std::vector<double>{0, 0, 1.5, 1.5, 2, 3}));
}

TEST(MeanMaxPool, SingleToken) {
    const std::vector<double> t{-1.5, 2.0, 0.25};
    const auto out = mean_max_pool(std::vector<double>{9, 8, 7}, {t});
    EXPECT_EQ(out, (std::vector<double>{9, 8, 7, -1.5, 2.0, 0.25, -1.5, 2.0, 0.25}));
}

TEST(MeanMaxPool, PermutationInvariant) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> cls(5);
        for (auto& x : cls) x = rng.normal();
        std::vector<std::vector<double>> tokens(1 + rng.index(6), std::vector<double>(5));
        for (auto& t : tokens)
            for (auto& x : t) x = double(rng.index(9)) - 4.0;  // integers keep the mean exact
        const auto base = mean_max_pool(cls, tokens);
        rng.shuffle(std::span<std::vector<double>>(tokens));
        ASSERT_EQ(mean_max_pool(cls, tokens), base);
    }
}

TEST(MeanMaxPool, Errors) {
    EXPECT_MSENT_ERROR(mean_max_pool(std::vector<double>{0, 0}, {}), ErrorKind::empty_input);
    EXPECT_MSENT_ERROR(mean_max_pool(std::vector<double>{0, 0}, {{1, 2}, {1}}), ErrorKind::dimension_mismatch);
}

TEST(ArgmaxPolarity, Examples) {
    EXPECT_EQ(argmax_polarity({0.7, 0.2, 0.1}), -1);
    EXPECT_EQ(argmax_polarity({0.2, 0.6, 0.2}), 0);
    EXPECT_EQ(argmax_polarity({0.4, 0.4, 0.2}), 0);
    EXPECT_EQ(argmax_polarity({0.1, 0.2, 0.7}), 1);
    EXPECT_EQ(argmax_polarity({0.45, 0.1, 0.45}), 0);
    EXPECT_MSENT_ERROR(argmax_polarity({NAN, 0.5, 0.5}), ErrorKind::non_finite);
}

TEST(ArgmaxPolarity, InvariantUnderPositiveRescaling) {
    Rng rng(1);
    for (int t = 0; t < 1000; ++t) {
        std::array<double, 3> p{rng.uniform(), rng.uniform(), rng.uniform()};
        const double s = p[0] + p[1] + p[2];
        for (auto& x : p) x /= s;
        const double a = std::exp(rng.uniform(-3, 3));
        std::array<double, 3> q{p[0] * a, p[1] * a, p[2] * a};
        const double qs = q[0] + q[1] + q[2];
        for (auto& x : q) x /= qs;
        ASSERT_EQ(argmax_polarity(p), argmax_polarity(q));
    }
}

TEST(AbsaHead, OutputIsProbabilityTriple) {
    Rng rng(3);
    const AbsaHead head(12, 16, 5);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> x(12);
        for (auto& v : x) v = 10.0 * rng.normal();
        const auto p = head.probabilities(x);
        EXPECT_NEAR(p[0] + p[1] + p[2], 1.0, 1e-6);
        for (double v : p) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(AbsaHead, TapeForwardMatchesDirectForward) {
    Rng rng(4);
    AbsaHead head(6, 8, 2);
    const auto items = random_items(rng, 5, 2);
    ad::Tensor x(ad::Shape{5, 6});
    for (std::size_t r = 0; r < 5; ++r) std::copy(items[r].pooled.begin(), items[r].pooled.end(), x.data.begin() + r * 6);
    ad::Tape tape;
    const auto p = head.forward(tape, tape.constant(x)).value();
    for (std::size_t r = 0; r < 5; ++r) {
        const auto q = head.probabilities(items[r].pooled);
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(p[r * 3 + c], q[c], 1e-14);
    }
}

TEST(AbsaHead, MseGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Rng rng(100 + seed);
        AbsaHead head(12, 8, seed);  // d = 4, h = 8
        // move biases off zero so the ReLU kinks are not hit exactly
        for (auto& b : head.parameters()[1].value.data) b = rng.uniform(-0.3, 0.3);
        const auto items = random_items(rng, 6, 4);
        ad::Tensor x(ad::Shape{6, 12});
        ad::Tensor y(ad::Shape{6, 3});
        for (std::size_t r = 0; r < 6; ++r) {
            std::copy(items[r].pooled.begin(), items[r].pooled.end(), x.data.begin() + r * 12);
            const auto l = items[r].label.as_array();
            std::copy(l.begin(), l.end(), y.data.begin() + r * 3);
        }
        ad::Tape tape;
        head.parameters().zero_grad();
        auto loss = ad::mse(head.forward(tape, tape.constant(x)), tape.constant(y));
        EXPECT_NEAR(loss.value()[0], direct_loss(head, items), 1e-14);
        tape.backward(loss);

        auto& params = head.parameters();
        for (std::size_t p = 0; p < params.size(); ++p) {
            for (std::size_t i = 0; i < params[p].value.size(); ++i) {
                const double keep = params[p].value[i];
                const double eps = 1e-6;
                params[p].value[i] = keep + eps;
                const double up = direct_loss(head, items);
                params[p].value[i] = keep - eps;
                const double down = direct_loss(head, items);
                params[p].value[i] = keep;
                const double fd = (up - down) / (2 * eps);
                const double an = params[p].grad[i];
                const double rel = std::abs(fd - an) / std::max(1e-7, std::abs(fd) + std::abs(an));
                ASSERT_LT(rel, 1e-4) << params[p].name << "[" << i << "] fd=" << fd << " an=" << an;
            }
        }
    }
}

TEST(TrainHead, Defaults) {
    const AbsaConfig cfg;
    EXPECT_DOUBLE_EQ(cfg.lr, 1e-4);
    EXPECT_DOUBLE_EQ(cfg.weight_decay, 1e-7);
    EXPECT_EQ(cfg.epochs, 50u);
    EXPECT_EQ(cfg.hidden, 256u);
}

TEST(TrainHead, ConstantPositiveLabelIsLearned) {
    Rng rng(8);
    auto items = random_items(rng, 64, 4);
    for (auto& it : items) it.label = {0, 0, 1};
    AbsaConfig cfg;
    cfg.lr = 1e-3;
    cfg.epochs = 150;
    const auto head = train_head(items, cfg);
    for (const auto& it : items) EXPECT_GT(head.probabilities(it.pooled)[2], 0.9);
    EXPECT_LT(head.loss_history().back(), head.loss_history().front());
}

TEST(TrainHead, SameSeedBitwiseIdentical) {
    Rng rng(9);
    const auto items = random_items(rng, 40, 3);
    AbsaConfig cfg;
    cfg.hidden = 16;
    cfg.epochs = 5;
    cfg.seed = 42;
    const auto a = train_head(items, cfg);
    const auto b = train_head(items, cfg);
    EXPECT_EQ(a.loss_history(), b.loss_history());
    EXPECT_EQ(a.to_json(), b.to_json());
    cfg.seed = 43;
    EXPECT_NE(train_head(items, cfg).loss_history(), a.loss_history());
}

TEST(TrainHead, JsonRoundTripPreservesPredictions) {
    Rng rng(10);
    const auto items = random_items(rng, 20, 2);
    AbsaConfig cfg;
    cfg.hidden = 8;
    cfg.epochs = 2;
    const auto head = train_head(items, cfg);
    const auto back = AbsaHead::from_json(nlohmann::json::parse(head.to_json().dump()));
    for (const auto& it : items) EXPECT_EQ(head.probabilities(it.pooled), back.probabilities(it.pooled));
}

TEST(TrainHead, Errors) {
    EXPECT_MSENT_ERROR(train_head({}, AbsaConfig{}), ErrorKind::empty_input);
    Rng rng(1);
    auto items = random_items(rng, 3, 2);
    items[1].pooled.pop_back();
    EXPECT_MSENT_ERROR(train_head(items, AbsaConfig{}), ErrorKind::dimension_mismatch);
    const AbsaHead head(6, 4, 0);
    EXPECT_MSENT_ERROR(head.probabilities(std::vector<double>(9, 0.0)), ErrorKind::dimension_mismatch);
}

TEST(DailyMicro, Examples) {
    EXPECT_EQ(daily_micro({}), 0.0);
    const Day d = parse_day("2013-01-01");
    std::vector<PerTextScore> two{{"a", "B", d, 1}, {"b", "B", d, -1}};
    EXPECT_EQ(daily_micro(two), 0.0);
    std::vector<PerTextScore> three{{"a", "B", d, 1}, {"b", "B", d, 1}, {"c", "B", d, -1}};
    EXPECT_DOUBLE_EQ(daily_micro(three), 1.0 / 3.0);
}

TEST(AlphaMatrix, EmptyAndSingleCell) {
    const auto zero = build_alpha_matrix({}, {"B1", "B2"}, cal10);
    EXPECT_TRUE(std::all_of(zero.values().begin(), zero.values().end(), [](double v) { return v == 0.0; }));
    const auto one = build_alpha_matrix({{"t", "B2", cal10.day(4), 1}}, {"B1", "B2"}, cal10);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(one.at(r, k), (r == 1 && k == 4) ? 1.0 : 0.0);
}

TEST(AlphaMatrix, MatchesPerCellRecomputation) {
    Rng rng(12);
    const std::vector<std::string> bonds{"B1", "B2", "B3", "B4"};
    std::vector<PerTextScore> scores;
    for (int i = 0; i < 200; ++i)
        scores.push_back({"t" + std::to_string(i), bonds[rng.index(4)], cal10.day(rng.index(10)),
                          double(int(rng.index(3)) - 1)});
    const auto m = build_alpha_matrix(scores, bonds, cal10);
    for (std::size_t r = 0; r < bonds.size(); ++r) {
        for (std::size_t k = 0; k < 10; ++k) {
            std::vector<PerTextScore> cell;
            for (const auto& s : scores)
                if (s.target_id == bonds[r] && cal10.index(s.date) == k) cell.push_back(s);
            EXPECT_EQ(m.at(r, k), daily_micro(cell));
            EXPECT_LE(std::abs(m.at(r, k)), 1.0);
        }
    }
}

TEST(AlphaMatrix, UnknownBondRejected) {
    EXPECT_MSENT_ERROR(build_alpha_matrix({{"t", "B9", cal10.day(0), 1}}, {"B1"}, cal10), ErrorKind::unknown_id);
}

TEST(TokenFeatures, ParseAndValidate) {
    std::istringstream texts_in(R"({"text_id":"t1","date":"2013-01-01","stream":"micro","mentioned_bonds":["B1","B2"]})");
    const auto texts = ingest_texts(texts_in, Stream::micro);
    std::istringstream ok(R"({"text_id":"t1","cls":[1,2],"bonds":{"B1":[[1,1],[2,2]]}})");
    const auto f = read_token_features(ok, &texts);
    ASSERT_EQ(f.size(), 1u);
    EXPECT_EQ(f[0].dim(), 2u);
    EXPECT_EQ(f[0].bond_tokens.at("B1").size(), 2u);

    std::istringstream stray(R"({"text_id":"t1","cls":[1,2],"bonds":{"B7":[[1,1]]}})");
    EXPECT_MSENT_ERROR(read_token_features(stray, &texts), ErrorKind::schema);
    std::istringstream empty_list(R"({"text_id":"t1","cls":[1,2],"bonds":{"B1":[]}})");
    EXPECT_MSENT_ERROR(read_token_features(empty_list, &texts), ErrorKind::schema);
    std::istringstream bad_dim(R"({"text_id":"t1","cls":[1,2],"bonds":{"B1":[[1,1,1]]}})");
    EXPECT_MSENT_ERROR(read_token_features(bad_dim, &texts), ErrorKind::dimension_mismatch);
    std::istringstream unknown(R"({"text_id":"zz","cls":[1,2],"bonds":{}})");
    EXPECT_MSENT_ERROR(read_token_features(unknown, &texts), ErrorKind::unknown_id);
}

TEST(ScoreMicro, ScoresEachMentionWithFeatures) {
    std::istringstream texts_in(
        R"({"text_id":"t1","date":"2013-01-02","stream":"micro","mentioned_bonds":["B1","B2"]})"
        "\n"
        R"({"text_id":"t2","date":"2013-01-03","stream":"micro","mentioned_bonds":["B1"]})");
    const auto texts = ingest_texts(texts_in, Stream::micro);
    std::istringstream feats_in(R"({"text_id":"t1","cls":[1,2],"bonds":{"B1":[[1,1]]}})");
    const auto feats = read_token_features(feats_in, &texts);
    const AbsaHead head(6, 4, 1);
    const auto r = score_micro(head, texts, feats, ScoreMode::argmax);
    ASSERT_EQ(r.scores.size(), 1u);
    EXPECT_EQ(r.skipped_mentions, 2u);
    EXPECT_EQ(r.scores[0].target_id, "B1");
    EXPECT_EQ(r.scores[0].value, score_text(head, mean_max_pool(std::vector<double>{1, 2}, {{1, 1}})));

    const auto ev = score_micro(head, texts, feats, ScoreMode::expected_value);
    const auto p = head.probabilities(mean_max_pool(std::vector<double>{1, 2}, {{1, 1}}));
    EXPECT_DOUBLE_EQ(ev.scores[0].value, p[2] - p[0]);

    std::stringstream io;
    write_scores_csv(io, r.scores);
    const auto back = read_scores_csv(io);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].text_id, "t1");
    EXPECT_EQ(back[0].value, r.scores[0].value);
}
