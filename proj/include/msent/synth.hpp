#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "msent/corpus.hpp"
#include "msent/error.hpp"
#include "msent/io.hpp"
#include "msent/meso.hpp"
#include "msent/micro_absa.hpp"
#include "msent/rng.hpp"
#include "msent/vecstore.hpp"

namespace msent {

struct SynthConfig {
    std::size_t n_bonds = 40;
    std::size_t n_days = 500;
    std::size_t n_industries = 8;
    std::size_t n_topics = 40;
    std::size_t embedding_dim = 32;
    std::size_t token_dim = 8;
    double micro_rate = 1.0;          // Poisson mean of micro texts per bond-day
    double meso_rate = 3.0;           // Poisson mean of meso texts per industry-day
    double effect_size = 0.06;        // spread response to lagged latent sentiment
    std::size_t effect_lag = 2;
    double noise_std = 0.02;
    double ar_coefficient = 0.95;
    double latent_timescale = 30.0;   // Gaussian kernel width in days
    double latent_fast_share = 0.0;   // variance share of white noise in the latent
    double text_noise = 0.4;
    double dead_zone = 0.3;
    double labeled_fraction = 0.15;
    double extra_edge_probability = 0.05;
    std::string start_date = "2013-01-01";
    std::uint64_t seed = 0;

    void validate() const {
        require(n_bonds >= 1 && n_days >= 1 && n_industries >= 1 && n_topics >= 1 &&
                    embedding_dim >= 1 && token_dim >= 1,
                ErrorKind::config, "synth counts must be at least 1");
        require(noise_std >= 0.0, ErrorKind::config, "synth noise_std must be non-negative");
        require(micro_rate >= 0.0 && meso_rate >= 0.0, ErrorKind::config,
                "synth text rates must be non-negative");
        require(latent_fast_share >= 0.0 && latent_fast_share <= 1.0, ErrorKind::config,
                "latent_fast_share must be in [0, 1]");
        require(labeled_fraction >= 0.0 && labeled_fraction <= 1.0, ErrorKind::config,
                "labeled_fraction must be in [0, 1]");
    }

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"n_bonds", n_bonds},
                {"n_days", n_days},
                {"n_industries", n_industries},
                {"n_topics", n_topics},
                {"embedding_dim", embedding_dim},
                {"token_dim", token_dim},
                {"micro_rate", micro_rate},
                {"meso_rate", meso_rate},
                {"effect_size", effect_size},
                {"effect_lag", effect_lag},
                {"noise_std", noise_std},
                {"ar_coefficient", ar_coefficient},
                {"latent_timescale", latent_timescale},
                {"latent_fast_share", latent_fast_share},
                {"text_noise", text_noise},
                {"dead_zone", dead_zone},
                {"labeled_fraction", labeled_fraction},
                {"extra_edge_probability", extra_edge_probability},
                {"start_date", start_date},
                {"seed", seed}};
    }
};

struct SynthData {
    SynthConfig config;
    Calendar calendar;
    TextCollection micro_texts;
    TextCollection meso_texts;
    std::vector<TokenFeatureSet> token_features;
    VectorStore topic_embeddings;
    VectorStore text_embeddings;
    std::vector<TopicPolarity> topic_polarities;
    KnowledgeGraph graph;
    std::vector<BondPanel> panels;
    nlohmann::json ground_truth;
};

namespace detail {

/// Unit-variance slow noise: white noise convolved with a Gaussian kernel.
inline std::vector<double> slow_latent(Rng& rng, std::size_t n, double tau, double fast_share) {
    const auto half = static_cast<std::ptrdiff_t>(std::ceil(3.5 * tau));
    std::vector<double> kernel;
    for (std::ptrdiff_t j = -half; j <= half; ++j)
        kernel.push_back(std::exp(-0.5 * (double(j) / tau) * (double(j) / tau)));
    std::vector<double> white(n + 2 * static_cast<std::size_t>(half));
    for (auto& w : white) w = rng.normal();
    std::vector<double> out(n, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < kernel.size(); ++j) out[k] += kernel[j] * white[k + j];
    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= double(n);
    double var = 0.0;
    for (double v : out) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / double(n));
    for (auto& v : out) v = sd > 0.0 ? (v - mean) / sd : 0.0;
    if (fast_share > 0.0) {
        for (auto& v : out) v = std::sqrt(1.0 - fast_share) * v + std::sqrt(fast_share) * rng.normal();
    }
    return out;
}

inline void normalize(std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / double(v.size()));
    for (auto& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
}

inline int quantize(double z, double dead_zone) { return z > dead_zone ? 1 : (z < -dead_zone ? -1 : 0); }

inline std::vector<double> random_unit(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    double n = 0.0;
    while (n == 0.0) {
        for (auto& x : v) x = rng.normal();
        n = norm(v);
    }
    for (auto& x : v) x /= n;
    return v;
}

inline std::string numbered(const char* prefix, std::size_t i, int width) {
    std::string digits = std::to_string(i);
    if (digits.size() < std::size_t(width)) digits.insert(0, std::size_t(width) - digits.size(), '0');
    return prefix + digits;
}

inline const std::array<const char*, 40>& industry_names() {
    static const std::array<const char*, 40> names{
        "Agriculture, Forestry, Livestock, and Fishery", "Basic Chemicals", "Steel",
        "Non-ferrous Metals", "Electronics", "Automobile", "Household Appliances",
        "Food and Beverage", "Textiles and Apparel", "Light Industry Manufacturing",
        "Pharmaceuticals and Biotechnology", "Utilities", "Transportation", "Real Estate",
        "Trade and Retail", "Tourism and Scenic Areas", "Education (Including Sports)",
        "Local Life Services", "Professional Services", "Hospitality and Catering", "Banking",
        "Non-bank Financial Services", "Building Materials", "Building Decoration",
        "Electrical Equipment", "Machinery and Equipment", "Defense and Military Industry",
        "Computer", "Television and Broadcasting", "Gaming", "Advertising and Marketing",
        "Film and Cinema", "Digital Media", "Social Media", "Publishing", "Telecommunications",
        "Coal", "Petroleum and Petrochemicals", "Environmental Protection",
        "Beauty and Personal Care"};
    return names;
}

}  // namespace detail

/// Synthetic corpus and panel with a planted lagged sentiment effect on spread changes.
inline SynthData generate(const SynthConfig& cfg) {
    cfg.validate();
    SynthData out;
    out.config = cfg;
    const Day start = parse_day(cfg.start_date);
    out.calendar = Calendar(start, start + std::chrono::days(long(cfg.n_days) - 1));
    const std::size_t K = cfg.n_days;
    Rng rng(cfg.seed);

    // Latent sentiment: industry and firm components.
    std::vector<std::vector<double>> industry_latent(cfg.n_industries);
    for (auto& s : industry_latent)
        s = detail::slow_latent(rng, K, cfg.latent_timescale, cfg.latent_fast_share);
    std::vector<std::vector<double>> firm_latent(cfg.n_bonds);
    for (auto& s : firm_latent)
        s = detail::slow_latent(rng, K, cfg.latent_timescale, cfg.latent_fast_share);

    std::vector<std::string> industries;
    for (std::size_t m = 0; m < cfg.n_industries; ++m) {
        industries.push_back(m < 40 ? std::string(detail::industry_names()[m])
                                    : detail::numbered("industry_", m, 3));
    }
    std::vector<std::string> bonds;
    for (std::size_t i = 0; i < cfg.n_bonds; ++i) bonds.push_back(detail::numbered("B", i, 4));

    std::vector<std::vector<std::size_t>> bond_industries(cfg.n_bonds);
    std::vector<std::vector<double>> latent(cfg.n_bonds, std::vector<double>(K, 0.0));
    for (std::size_t i = 0; i < cfg.n_bonds; ++i) {
        const std::size_t count = std::min<std::size_t>(1 + rng.index(2), cfg.n_industries);
        while (bond_industries[i].size() < count) {
            const auto m = static_cast<std::size_t>(rng.index(cfg.n_industries));
            if (std::find(bond_industries[i].begin(), bond_industries[i].end(), m) ==
                bond_industries[i].end())
                bond_industries[i].push_back(m);
        }
        std::sort(bond_industries[i].begin(), bond_industries[i].end());
        for (std::size_t k = 0; k < K; ++k) {
            double ind = 0.0;
            for (auto m : bond_industries[i]) ind += industry_latent[m][k];
            latent[i][k] = 0.5 * firm_latent[i][k] + 0.5 * ind / double(bond_industries[i].size());
        }
        detail::normalize(latent[i]);
    }

    // Knowledge graph: each topic belongs to one industry, plus sparse extra edges.
    std::vector<std::string> topics;
    for (std::size_t n = 0; n < cfg.n_topics; ++n) topics.push_back(detail::numbered("topic_", n, 3));
    out.graph = KnowledgeGraph(industries, topics);
    for (std::size_t n = 0; n < cfg.n_topics; ++n) {
        for (std::size_t m = 0; m < cfg.n_industries; ++m) {
            const bool own = (n % cfg.n_industries) == m;
            if (own || rng.bernoulli(cfg.extra_edge_probability)) out.graph.set(m, n, true);
        }
    }
    out.topic_embeddings = VectorStore(cfg.embedding_dim);
    for (std::size_t n = 0; n < cfg.n_topics; ++n)
        out.topic_embeddings.add(topics[n], detail::random_unit(rng, cfg.embedding_dim));

    // Token emission centres for the three polarities.
    std::array<std::vector<double>, 3> centres;
    for (auto& c : centres) c = detail::random_unit(rng, cfg.token_dim);

    std::vector<TextRecord> micro;
    std::vector<int> micro_truth;
    std::size_t text_no = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const Day day = out.calendar.day(k);
        for (std::size_t i = 0; i < cfg.n_bonds; ++i) {
            const int count = rng.poisson(cfg.micro_rate);
            for (int c = 0; c < count; ++c) {
                const int pol = detail::quantize(firm_latent[i][k] + cfg.text_noise * rng.normal(),
                                                 cfg.dead_zone);
                TextRecord rec;
                rec.text_id = detail::numbered("m", text_no++, 7);
                rec.date = day;
                rec.stream = Stream::micro;
                rec.mentioned_bonds = {bonds[i]};
                if (rng.bernoulli(cfg.labeled_fraction)) {
                    SoftLabel label{0.1, 0.1, 0.1};
                    (pol < 0 ? label.p_neg : pol == 0 ? label.p_neu : label.p_pos) = 0.8;
                    rec.soft_label = label;
                }
                TokenFeatureSet f;
                f.text_id = rec.text_id;
                f.cls.resize(cfg.token_dim);
                for (auto& x : f.cls) x = rng.normal();
                const std::size_t n_tokens = 2 + rng.index(4);
                auto& tokens = f.bond_tokens[bonds[i]];
                const auto& centre = centres[std::size_t(pol + 1)];
                for (std::size_t t = 0; t < n_tokens; ++t) {
                    std::vector<double> tok(cfg.token_dim);
                    for (std::size_t j = 0; j < cfg.token_dim; ++j) tok[j] = centre[j] + 0.5 * rng.normal();
                    tokens.push_back(std::move(tok));
                }
                micro.push_back(std::move(rec));
                micro_truth.push_back(pol);
                out.token_features.push_back(std::move(f));
            }
        }
    }

    std::vector<TextRecord> meso;
    out.text_embeddings = VectorStore(cfg.embedding_dim);
    text_no = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const Day day = out.calendar.day(k);
        for (std::size_t m = 0; m < cfg.n_industries; ++m) {
            const int count = rng.poisson(cfg.meso_rate);
            for (int c = 0; c < count; ++c) {
                // A topic owned by industry m; texts about it reflect that industry's latent state.
                std::vector<std::size_t> owned;
                for (std::size_t n = m; n < cfg.n_topics; n += cfg.n_industries) owned.push_back(n);
                if (owned.empty()) owned.push_back(rng.index(cfg.n_topics));
                const std::size_t topic = owned[rng.index(owned.size())];
                const int pol = detail::quantize(industry_latent[m][k] + cfg.text_noise * rng.normal(),
                                                 cfg.dead_zone);
                TextRecord rec;
                rec.text_id = detail::numbered("s", text_no++, 7);
                rec.date = day;
                rec.stream = Stream::meso;
                const auto base = out.topic_embeddings.vector(topic);
                std::vector<double> emb(base.begin(), base.end());
                const double spread = 0.5 / std::sqrt(double(cfg.embedding_dim));
                for (auto& x : emb) x += spread * rng.normal();
                out.text_embeddings.add(rec.text_id, std::move(emb));
                out.topic_polarities.push_back({rec.text_id, day, pol});
                meso.push_back(std::move(rec));
            }
        }
    }
    out.micro_texts = TextCollection(std::move(micro));
    out.meso_texts = TextCollection(std::move(meso));

    // Spreads: AR(1) deviations driven by lagged latent sentiment, around a positive level.
    const double phi = cfg.ar_coefficient;
    const double level_pad = phi < 1.0 ? 3.0 * cfg.effect_size / (1.0 - phi) : 0.0;
    std::vector<double> levels;
    for (std::size_t i = 0; i < cfg.n_bonds; ++i) {
        BondPanel panel;
        panel.bond_id = bonds[i];
        for (auto m : bond_industries[i]) panel.industry_ids.push_back(industries[m]);
        const double mu = rng.uniform(2.0, 4.0) + level_pad;
        levels.push_back(mu);
        double u = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double lagged = k >= cfg.effect_lag ? latent[i][k - cfg.effect_lag] : 0.0;
            u = phi * u - cfg.effect_size * lagged + cfg.noise_std * rng.normal();
            PanelRow row;
            row.date = out.calendar.day(k);
            for (std::size_t f = 0; f < feature_count; ++f) row.features[f] = rng.normal();
            row.credit_spread = mu + u;
            panel.rows.push_back(row);
        }
        out.panels.push_back(std::move(panel));
    }

    nlohmann::json truth;
    truth["config"] = cfg.to_json();
    truth["bonds"] = nlohmann::json::array();
    for (std::size_t i = 0; i < cfg.n_bonds; ++i) {
        std::vector<std::string> inds;
        for (auto m : bond_industries[i]) inds.push_back(industries[m]);
        truth["bonds"].push_back({{"bond_id", bonds[i]},
                                  {"industries", inds},
                                  {"level", levels[i]},
                                  {"latent", latent[i]},
                                  {"firm_latent", firm_latent[i]}});
    }
    truth["industries"] = nlohmann::json::array();
    for (std::size_t m = 0; m < cfg.n_industries; ++m)
        truth["industries"].push_back({{"name", industries[m]}, {"latent", industry_latent[m]}});
    truth["micro_polarity_counts"] = {
        {"negative", std::count(micro_truth.begin(), micro_truth.end(), -1)},
        {"neutral", std::count(micro_truth.begin(), micro_truth.end(), 0)},
        {"positive", std::count(micro_truth.begin(), micro_truth.end(), 1)}};
    out.ground_truth = std::move(truth);
    return out;
}

struct SynthPaths {
    std::filesystem::path micro_texts = "texts_micro.jsonl";
    std::filesystem::path meso_texts = "texts_meso.jsonl";
    std::filesystem::path token_features = "token_features.jsonl";
    std::filesystem::path topic_embeddings = "topic_embeddings.jsonl";
    std::filesystem::path text_embeddings = "text_embeddings.jsonl";
    std::filesystem::path topic_polarities = "topic_polarities.jsonl";
    std::filesystem::path graph = "graph.csv";
    std::filesystem::path panel = "panel.csv";
    std::filesystem::path bond_industries = "bond_industries.csv";
    std::filesystem::path ground_truth = "ground_truth.json";
};

inline void write_texts(std::ostream& out, const TextCollection& texts) {
    for (const auto& t : texts) out << to_json(t).dump() << '\n';
}

inline void write_token_features(std::ostream& out, const std::vector<TokenFeatureSet>& features) {
    for (const auto& f : features) {
        nlohmann::json bonds = nlohmann::json::object();
        for (const auto& [bond, tokens] : f.bond_tokens) bonds[bond] = tokens;
        out << nlohmann::json{{"text_id", f.text_id}, {"cls", f.cls}, {"bonds", bonds}}.dump() << '\n';
    }
}

/// Writes every synth artifact under `dir`; returns the paths used.
inline SynthPaths write_synth(const SynthData& data, const std::filesystem::path& dir) {
    SynthPaths p;
    const auto under = [&](std::filesystem::path& f) { f = dir / f; };
    under(p.micro_texts);
    under(p.meso_texts);
    under(p.token_features);
    under(p.topic_embeddings);
    under(p.text_embeddings);
    under(p.topic_polarities);
    under(p.graph);
    under(p.panel);
    under(p.bond_industries);
    under(p.ground_truth);
    {
        auto o = io::open_output(p.micro_texts);
        write_texts(o, data.micro_texts);
    }
    {
        auto o = io::open_output(p.meso_texts);
        write_texts(o, data.meso_texts);
    }
    {
        auto o = io::open_output(p.token_features);
        write_token_features(o, data.token_features);
    }
    {
        auto o = io::open_output(p.topic_embeddings);
        write_embeddings(o, data.topic_embeddings);
    }
    {
        auto o = io::open_output(p.text_embeddings);
        write_embeddings(o, data.text_embeddings);
    }
    {
        auto o = io::open_output(p.topic_polarities);
        for (const auto& tp : data.topic_polarities) write_topic_polarity(o, tp);
    }
    {
        auto o = io::open_output(p.graph);
        write_graph(o, data.graph);
    }
    {
        auto o = io::open_output(p.panel);
        write_panel_csv(o, data.panels);
    }
    {
        auto o = io::open_output(p.bond_industries);
        write_bond_industries_csv(o, data.panels);
    }
    {
        auto o = io::open_output(p.ground_truth);
        o << data.ground_truth.dump() << '\n';
    }
    return p;
}

}  // namespace msent
