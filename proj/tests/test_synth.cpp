#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "msent/pipeline.hpp"
#include "msent/stats.hpp"
#include "msent/synth.hpp"
#include "test_util.hpp"

using namespace msent;

namespace {

SynthConfig small_config(std::uint64_t seed) {
    SynthConfig c;
    c.n_bonds = 6;
    c.n_days = 200;
    c.n_industries = 4;
    c.n_topics = 12;
    c.embedding_dim = 8;
    c.seed = seed;
    return c;
}

std::vector<double> latent_of(const SynthData& d, std::size_t bond) {
    return d.ground_truth["bonds"][bond]["latent"].get<std::vector<double>>();
}

// Spread innovation s_k - phi * s_{k-1}; removes the autoregressive carry-over.
std::vector<double> innovations(const BondPanel& p, double phi) {
    std::vector<double> out;
    for (std::size_t k = 1; k < p.rows.size(); ++k)
        out.push_back(p.rows[k].credit_spread - phi * p.rows[k - 1].credit_spread);
    return out;
}

// Pooled correlation of innovation at day k with latent at day k - lag.
double lagged_correlation(const SynthData& d, std::size_t lag) {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < d.panels.size(); ++i) {
        const auto lat = latent_of(d, i);
        const auto inn = innovations(d.panels[i], d.config.ar_coefficient);
        for (std::size_t k = 1 + 10; k < lat.size(); ++k) {
            x.push_back(lat[k - lag]);
            y.push_back(inn[k - 1]);
        }
    }
    return pearson(x, y);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Synth, ConfigValidation) {
    auto c = small_config(0);
    c.n_bonds = 0;
    EXPECT_MSENT_ERROR(generate(c), ErrorKind::config);
    c = small_config(0);
    c.noise_std = -1;
    EXPECT_MSENT_ERROR(generate(c), ErrorKind::config);
}

TEST(Synth, ShapesFollowConfig) {
    const auto d = generate(small_config(1));
    ASSERT_EQ(d.panels.size(), 6u);
    EXPECT_EQ(d.calendar.size(), 200u);
    for (const auto& p : d.panels) {
        EXPECT_EQ(p.rows.size(), 200u);
        EXPECT_FALSE(p.industry_ids.empty());
        p.validate();
    }
    EXPECT_EQ(d.graph.industries().size(), 4u);
    EXPECT_EQ(d.graph.topics().size(), 12u);
    EXPECT_EQ(d.topic_embeddings.size(), 12u);
    EXPECT_EQ(d.text_embeddings.size(), d.meso_texts.size());
    EXPECT_EQ(d.token_features.size(), d.micro_texts.size());
    EXPECT_EQ(d.topic_polarities.size(), d.meso_texts.size());
    EXPECT_GT(d.micro_texts.size(), 600u);
}

TEST(Synth, NoEffectMeansNoLaggedDependence) {
    auto c = small_config(2);
    c.n_bonds = 40;
    c.n_days = 500;
    c.effect_size = 0.0;
    const auto d = generate(c);
    for (std::size_t lag : {0u, 2u, 5u}) EXPECT_LT(std::abs(lagged_correlation(d, lag)), 0.1) << lag;
}

TEST(Synth, CrossCorrelationPeaksAtTheLag) {
    auto c = small_config(3);
    c.n_bonds = 20;
    c.n_days = 500;
    c.effect_size = 5 * c.noise_std;
    c.effect_lag = 2;
    c.latent_fast_share = 0.5;
    const auto d = generate(c);
    std::size_t best = 0;
    double best_r = 0;
    for (std::size_t lag = 0; lag <= 8; ++lag) {
        const double r = std::abs(lagged_correlation(d, lag));
        if (r > best_r) {
            best_r = r;
            best = lag;
        }
    }
    EXPECT_EQ(best, 2u);
    // positive sentiment narrows spreads
    EXPECT_LT(lagged_correlation(d, 2), -0.5);
}

TEST(Synth, SameSeedGivesIdenticalFiles) {
    test::TempDir a("a"), b("b"), c("c");
    const auto pa = write_synth(generate(small_config(4)), a.path());
    write_synth(generate(small_config(4)), b.path());
    write_synth(generate(small_config(5)), c.path());
    const SynthPaths names;
    for (const auto& f : {names.micro_texts, names.meso_texts, names.token_features, names.topic_embeddings,
                          names.text_embeddings, names.topic_polarities, names.graph, names.panel,
                          names.bond_industries, names.ground_truth}) {
        const auto x = slurp(a / f);
        EXPECT_FALSE(x.empty()) << f;
        EXPECT_EQ(x, slurp(b / f)) << f;
    }
    EXPECT_NE(slurp(a / names.panel), slurp(c / names.panel));
    EXPECT_EQ(pa.panel, a / names.panel);
}

TEST(Synth, EmittedFilesPassIngestion) {
    test::TempDir dir("ingest");
    const auto d = generate(small_config(6));
    write_synth(d, dir.path());
    const auto in = load_inputs(dir.path());
    EXPECT_EQ(in.panels.size(), d.panels.size());
    for (std::size_t i = 0; i < d.panels.size(); ++i) {
        EXPECT_EQ(in.panels[i].bond_id, d.panels[i].bond_id);
        EXPECT_EQ(in.panels[i].industry_ids, d.panels[i].industry_ids);
        EXPECT_EQ(in.panels[i].rows, d.panels[i].rows);
    }
    EXPECT_EQ(in.calendar.size(), d.calendar.size());
    EXPECT_EQ(in.micro_texts.size(), d.micro_texts.size());
    EXPECT_EQ(in.meso_texts.size(), d.meso_texts.size());
    EXPECT_EQ(in.token_features.size(), d.token_features.size());
    EXPECT_EQ(in.topic_embeddings.keys(), d.topic_embeddings.keys());
    EXPECT_EQ(in.text_embeddings.size(), d.text_embeddings.size());
    EXPECT_EQ(in.topic_polarities.size(), d.topic_polarities.size());
    EXPECT_EQ(in.graph.industries(), d.graph.industries());
    EXPECT_EQ(in.graph.topics(), d.graph.topics());
}

TEST(Synth, PolarityEmissionsFollowLatentSentiment) {
    const auto d = generate(small_config(7));
    // labelled micro texts carry the emitted polarity
    int agree = 0, total = 0;
    std::map<std::string, std::size_t> bond_index;
    for (std::size_t i = 0; i < d.panels.size(); ++i) bond_index[d.panels[i].bond_id] = i;
    for (const auto& t : d.micro_texts) {
        if (!t.soft_label || t.soft_label->p_neu > 0.5) continue;
        const auto i = bond_index.at(t.mentioned_bonds[0]);
        const double firm = d.ground_truth["bonds"][i]["firm_latent"][d.calendar.index(t.date)].get<double>();
        agree += (t.soft_label->p_pos > 0.5) == (firm > 0);
        ++total;
    }
    ASSERT_GT(total, 20);
    EXPECT_GT(double(agree) / total, 0.8);
}

TEST(Synth, PipelineRecoversPlantedSentiment) {
    SynthConfig c;  // defaults
    const auto d = generate(c);
    const auto in = inputs_from_synth(d);
    const auto s = run_sentiment(in, SentimentConfig{});
    const auto comp = compose(s, in.panels, WaveletSpec{});
    double sum_r = 0;
    for (std::size_t i = 0; i < d.panels.size(); ++i) {
        const auto& series = comp.at(d.panels[i].bond_id);
        sum_r += pearson(latent_of(d, i), series.smoothed);
    }
    const double mean_r = sum_r / double(d.panels.size());
    EXPECT_GT(mean_r, 0.3);
}
