#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msent/composite.hpp"
#include "msent/config.hpp"
#include "msent/corpus.hpp"
#include "msent/error.hpp"
#include "msent/forecast.hpp"
#include "msent/meso.hpp"
#include "msent/micro_absa.hpp"
#include "msent/stats.hpp"
#include "msent/synth.hpp"
#include "msent/vecstore.hpp"
#include "msent/wavelet.hpp"

namespace msent {

// ---------------------------------------------------------------------------
// Inputs

/// Everything the sentiment and backtest stages read.
struct PipelineInputs {
    Calendar calendar;
    TextCollection micro_texts;
    TextCollection meso_texts;
    std::vector<TokenFeatureSet> token_features;
    VectorStore topic_embeddings;
    VectorStore text_embeddings;
    std::vector<TopicPolarity> topic_polarities;
    KnowledgeGraph graph;
    std::vector<BondPanel> panels;
};

inline PipelineInputs inputs_from_synth(const SynthData& d) {
    return {d.calendar,         d.micro_texts,      d.meso_texts,        d.token_features, d.topic_embeddings,
            d.text_embeddings, d.topic_polarities, d.graph, d.panels};
}

/// Calendar spanning the panel's first and last dates.
inline Calendar panel_calendar(const std::vector<BondPanel>& panels) {
    require(!panels.empty(), ErrorKind::empty_input, "no bond panels");
    Day lo = panels.front().rows.front().date;
    Day hi = lo;
    for (const auto& p : panels) {
        require(!p.rows.empty(), ErrorKind::empty_input, "bond " + p.bond_id + " has no panel rows");
        lo = std::min(lo, p.rows.front().date);
        hi = std::max(hi, p.rows.back().date);
    }
    return Calendar(lo, hi);
}

inline std::vector<BondPanel> load_panels(const std::filesystem::path& panel_csv,
                                          const std::filesystem::path& industries_csv) {
    auto in = io::open_input(panel_csv);
    auto panels = read_panel_csv(in);
    auto ind = io::open_input(industries_csv);
    read_bond_industries_csv(ind, panels);
    for (const auto& p : panels) p.validate();
    return panels;
}

/// Reads a directory laid out like `write_synth` output.
inline PipelineInputs load_inputs(const std::filesystem::path& dir, const SynthPaths& names = {}) {
    PipelineInputs in;
    in.panels = load_panels(dir / names.panel, dir / names.bond_industries);
    in.calendar = panel_calendar(in.panels);
    in.micro_texts = ingest_texts(dir / names.micro_texts, Stream::micro, &in.calendar);
    in.meso_texts = ingest_texts(dir / names.meso_texts, Stream::meso, &in.calendar);
    in.token_features = read_token_features(dir / names.token_features, &in.micro_texts);
    in.topic_embeddings = read_embeddings(dir / names.topic_embeddings);
    in.text_embeddings = read_embeddings(dir / names.text_embeddings);
    {
        auto f = io::open_input(dir / names.topic_polarities);
        in.topic_polarities = read_topic_polarities(f, &in.calendar);
    }
    in.graph = load_graph(dir / names.graph);
    return in;
}

// ---------------------------------------------------------------------------
// Sentiment stage

/// Pooled (text, bond) pairs of the soft-labelled micro texts.
inline std::vector<LabeledItem> labeled_items(const TextCollection& texts,
                                              const std::vector<TokenFeatureSet>& features) {
    std::unordered_map<std::string, const TokenFeatureSet*> by_id;
    for (const auto& f : features) by_id[f.text_id] = &f;
    std::vector<LabeledItem> out;
    for (const auto& t : texts) {
        if (!t.soft_label) continue;
        const auto it = by_id.find(t.text_id);
        if (it == by_id.end()) continue;
        for (const auto& bond : t.mentioned_bonds) {
            const auto tok = it->second->bond_tokens.find(bond);
            if (tok == it->second->bond_tokens.end()) continue;
            out.push_back({mean_max_pool(it->second->cls, tok->second), *t.soft_label});
        }
    }
    return out;
}

struct SentimentConfig {
    AbsaConfig absa;
    ScoreMode score_mode = ScoreMode::argmax;
    std::size_t top_k = 5;
    ZScoreAxis zscore_axis = ZScoreAxis::per_industry;
};

struct SentimentResult {
    AbsaHead head;
    MicroScoring micro;
    SentimentMatrix alpha;
    MesoScoring meso;
};

inline std::vector<std::string> bond_ids(const std::vector<BondPanel>& panels) {
    std::vector<std::string> out;
    for (const auto& p : panels) out.push_back(p.bond_id);
    return out;
}

/// Train the ABSA head on labelled micro texts, then score both streams.
inline SentimentResult run_sentiment(const PipelineInputs& in, const SentimentConfig& cfg) {
    const auto items = labeled_items(in.micro_texts, in.token_features);
    require(!items.empty(), ErrorKind::empty_input, "no soft-labelled micro texts with token features");
    SentimentResult r{train_head(items, cfg.absa), {}, {}, {}};
    r.micro = score_micro(r.head, in.micro_texts, in.token_features, cfg.score_mode);
    r.alpha = build_alpha_matrix(r.micro.scores, bond_ids(in.panels), in.calendar);
    r.meso = score_meso(in.graph, in.topic_embeddings, in.text_embeddings, in.topic_polarities,
                        in.calendar, cfg.top_k, cfg.zscore_axis);
    return r;
}

inline std::map<std::string, CompositeSeries> compose(const SentimentResult& s,
                                                      const std::vector<BondPanel>& panels,
                                                      const WaveletSpec& spec) {
    return build_composite(s.alpha, s.meso.standardized.matrix, panels, spec);
}

// ---------------------------------------------------------------------------
// Feature variants

/// Extra window columns per bond, each a calendar-indexed series.
struct FeatureVariant {
    std::string name;
    std::vector<std::string> column_names;
    std::map<std::string, std::vector<std::vector<double>>> columns;
};

inline FeatureVariant base_variant() { return {"base", {}, {}}; }

/// `smoothed`, `raw` and `separate` read `full`; `causal` reads the smoothed column of `causal`.
inline FeatureVariant make_variant(const std::string& name,
                                   const std::map<std::string, CompositeSeries>& full,
                                   const std::map<std::string, CompositeSeries>* causal = nullptr) {
    if (name == "base") return base_variant();
    FeatureVariant v{name, {}, {}};
    if (name == "smoothed" || name == "raw") {
        v.column_names = {"sentiment"};
        for (const auto& [bond, s] : full) v.columns[bond] = {name == "raw" ? s.raw : s.smoothed};
    } else if (name == "causal") {
        require(causal != nullptr, ErrorKind::invalid_argument, "causal variant needs causal composites");
        v.column_names = {"sentiment"};
        for (const auto& [bond, s] : *causal) v.columns[bond] = {s.smoothed};
    } else if (name == "separate") {
        v.column_names = {"sentiment_micro", "sentiment_meso"};
        for (const auto& [bond, s] : full)
            v.columns[bond] = {smooth(s.micro, s.spec), smooth(s.meso, s.spec)};
    } else {
        fail(ErrorKind::config, "unknown feature variant '" + name + "'");
    }
    return v;
}

/// Baseline (optional) followed by the named sentiment variants built from one alpha/beta pair.
inline std::vector<FeatureVariant> sentiment_variants(const std::vector<std::string>& names,
                                                      const SentimentMatrix& alpha,
                                                      const SentimentMatrix& beta,
                                                      const std::vector<BondPanel>& panels,
                                                      const WaveletSpec& spec, bool with_base) {
    const auto main = build_composite(alpha, beta, panels, spec);
    std::optional<std::map<std::string, CompositeSeries>> causal;
    std::vector<FeatureVariant> out;
    if (with_base) out.push_back(base_variant());
    for (const auto& n : names) {
        if (n == "causal" && !causal) {
            WaveletSpec c = spec;
            c.mode = SmoothMode::causal;
            causal = build_composite(alpha, beta, panels, c);
        }
        out.push_back(make_variant(n, main, causal ? &*causal : nullptr));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backtest

struct BacktestConfig {
    WindowOptions window;
    ForecastConfig forecast;
    SplitRatios ratios;
    std::uint64_t split_seed = 0;
    PermutationConfig permutation;
    bool per_bond_metrics = false;
    bool zero_init_sentiment = true;
    bool validation_loss = true;
};

struct VariantOutcome {
    std::string name;
    std::vector<std::string> feature_names;
    EvalReport report;
    std::vector<double> predictions;
    std::vector<double> abs_errors;
    std::vector<double> train_loss;
    std::vector<double> valid_loss;
    std::vector<std::string> warnings;
    double train_seconds = 0.0;
    std::optional<TrainedForecaster> model;
};

struct BacktestResult {
    SplitAssignment splits;
    std::vector<WindowSample> test_windows;  // base-variant windows: targets and dates
    std::vector<VariantOutcome> variants;    // variants[0] is the baseline

    [[nodiscard]] const VariantOutcome& variant(const std::string& name) const {
        for (const auto& v : variants)
            if (v.name == name) return v;
        fail(ErrorKind::unknown_id, "no backtest variant '" + name + "'");
    }

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["n_test"] = test_windows.size();
        j["variants"] = nlohmann::json::array();
        for (const auto& v : variants) {
            auto r = v.report.to_json();
            r["name"] = v.name;
            r["train_loss"] = v.train_loss;
            r["valid_loss"] = v.valid_loss;
            if (!v.warnings.empty()) r["warnings"] = v.warnings;
            j["variants"].push_back(std::move(r));
        }
        return j;
    }
};

namespace detail {

inline std::vector<WindowSample> windows_for(const std::vector<BondPanel>& panels,
                                             const std::vector<std::string>& members,
                                             const FeatureVariant& variant, const Calendar& calendar,
                                             const WindowOptions& opt) {
    std::map<std::string, const BondPanel*> by_id;
    for (const auto& p : panels) by_id[p.bond_id] = &p;
    std::vector<WindowSample> out;
    for (const auto& bond : members) {
        const BondPanel& panel = *by_id.at(bond);
        std::vector<std::vector<double>> extra;
        if (!variant.column_names.empty()) {
            const auto it = variant.columns.find(bond);
            require(it != variant.columns.end(), ErrorKind::unknown_id,
                    "variant '" + variant.name + "' has no series for bond " + bond);
            for (const auto& series : it->second) extra.push_back(align_to_panel(panel, series, calendar));
        }
        auto w = build_windows(panel, opt, extra);
        out.insert(out.end(), std::make_move_iterator(w.begin()), std::make_move_iterator(w.end()));
    }
    return out;
}

}  // namespace detail

/// Trains one forecaster per variant on the same bond split and scores all of them on
/// identical test windows. The first variant is the baseline the others are compared to.
inline BacktestResult run_backtest(const std::vector<BondPanel>& panels, const Calendar& calendar,
                                   const std::vector<FeatureVariant>& variants,
                                   const BacktestConfig& cfg) {
    require(!variants.empty(), ErrorKind::invalid_argument, "backtest needs at least one variant");
    BacktestResult result;
    result.splits = split_bonds(bond_ids(panels), cfg.ratios, cfg.split_seed);
    const auto train_ids = result.splits.members(Split::train);
    const auto valid_ids = result.splits.members(Split::valid);
    const auto test_ids = result.splits.members(Split::test);

    for (const auto& variant : variants) {
        VariantOutcome out;
        out.name = variant.name;
        out.feature_names = window_feature_names(cfg.window, variant.column_names);
        const auto train = detail::windows_for(panels, train_ids, variant, calendar, cfg.window);
        const auto valid = cfg.validation_loss
                               ? detail::windows_for(panels, valid_ids, variant, calendar, cfg.window)
                               : std::vector<WindowSample>{};
        auto test = detail::windows_for(panels, test_ids, variant, calendar, cfg.window);
        require(!test.empty(), ErrorKind::empty_input, "backtest: no test windows");

        if (result.variants.empty()) {
            result.test_windows = test;
        } else {
            require(test.size() == result.test_windows.size(), ErrorKind::dimension_mismatch,
                    "variant '" + variant.name + "' produced a different test set");
            for (std::size_t i = 0; i < test.size(); ++i)
                require(test[i].bond_id == result.test_windows[i].bond_id &&
                            test[i].target_date == result.test_windows[i].target_date &&
                            test[i].target == result.test_windows[i].target,
                        ErrorKind::dimension_mismatch,
                        "variant '" + variant.name + "' test window " + std::to_string(i) + " differs");
        }

        ForecastConfig fc = cfg.forecast;
        if (cfg.zero_init_sentiment) {
            const std::size_t width = out.feature_names.size();
            for (std::size_t c = width - variant.column_names.size(); c < width; ++c)
                fc.zero_init_inputs.push_back(c);
        }
        const auto t0 = std::chrono::steady_clock::now();
        auto model = train_forecaster(train, fc, valid);
        out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.train_loss = model.train_loss;
        out.valid_loss = model.valid_loss;
        out.warnings = model.warnings;
        out.predictions = predict(model, test);

        std::vector<double> targets;
        for (const auto& s : test) targets.push_back(s.target);
        const auto m = cfg.per_bond_metrics ? evaluate_per_bond(test, out.predictions)
                                            : evaluate(out.predictions, targets);
        out.report.mae = m.mae;
        out.report.mape = m.mape;
        out.report.n_test = test.size();
        for (std::size_t i = 0; i < test.size(); ++i)
            out.abs_errors.push_back(std::abs(test[i].target - out.predictions[i]));

        if (!result.variants.empty()) {
            const auto& base = result.variants.front();
            const auto d = delta_report(base.report, out.report);
            out.report.delta_mae_pct = d.delta_mae_pct;
            out.report.delta_mape_pct = d.delta_mape_pct;
            out.report.p_value = permutation_test(base.abs_errors, out.abs_errors, cfg.permutation);
        }
        out.model = std::move(model);
        result.variants.push_back(std::move(out));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Attribution

struct RankedImportance {
    std::size_t rank = 0;
    std::string feature;
    double importance = 0.0;
};

/// Permutation importance of every window column, sorted descending.
inline std::vector<RankedImportance> rank_importance(TrainedForecaster& model,
                                                     const std::vector<WindowSample>& samples,
                                                     const std::vector<std::string>& names,
                                                     std::size_t repeats, std::uint64_t seed) {
    require(!samples.empty(), ErrorKind::empty_input, "importance: no samples");
    require(names.size() == samples.front().features, ErrorKind::dimension_mismatch,
            "importance: feature names do not match window width");
    const auto predict_fn = [&](const std::vector<WindowSample>& s) { return predict(model, s); };
    std::vector<RankedImportance> out;
    for (std::size_t f = 0; f < names.size(); ++f) {
        const auto r = permutation_importance(predict_fn, samples, f, repeats, seed);
        out.push_back({0, names[f], r.importance});
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.importance > b.importance; });
    for (std::size_t i = 0; i < out.size(); ++i) out[i].rank = i + 1;
    return out;
}

inline void write_importance_csv(std::ostream& out, const std::vector<RankedImportance>& rows) {
    out << "rank,feature,importance\n";
    for (const auto& r : rows)
        out << r.rank << ',' << io::csv_escape(r.feature) << ',' << io::format_double(r.importance) << '\n';
}

// ---------------------------------------------------------------------------
// Run configuration

/// All knobs of a pipeline run, read from a Config (file, then environment, then flags).
struct RunConfig {
    std::uint64_t seed = 0;
    SynthConfig synth;
    SentimentConfig sentiment;
    WaveletSpec wavelet;
    BacktestConfig backtest;
    std::size_t importance_repeats = 5;
    std::vector<std::string> variants{"smoothed"};

    static const std::vector<std::string>& keys() {
        static const std::vector<std::string> k{
            "seed",
            "synth.n_bonds", "synth.n_days", "synth.n_industries", "synth.n_topics",
            "synth.embedding_dim", "synth.token_dim", "synth.micro_rate", "synth.meso_rate",
            "synth.effect_size", "synth.effect_lag", "synth.noise_std", "synth.ar_coefficient",
            "synth.latent_timescale", "synth.latent_fast_share", "synth.text_noise",
            "synth.labeled_fraction", "synth.start_date",
            "absa.hidden", "absa.lr", "absa.weight_decay", "absa.epochs", "absa.batch_size",
            "absa.score_mode",
            "meso.top_k", "meso.zscore_axis",
            "wavelet.family", "wavelet.level", "wavelet.mode", "wavelet.boundary", "wavelet.rule",
            "wavelet.causal_window",
            "window.steps", "window.horizon", "window.target_history",
            "forecast.d_model", "forecast.heads", "forecast.ff", "forecast.layers", "forecast.epochs",
            "forecast.batch_size", "forecast.lr", "forecast.weight_decay", "forecast.momentum",
            "forecast.schedule", "forecast.pooling", "forecast.target", "forecast.linear_skip",
            "forecast.zero_init_sentiment", "forecast.per_bond_metrics",
            "split.train", "split.valid", "split.test",
            "permutation.n", "importance.repeats", "backtest.variants"};
        return k;
    }

    static RunConfig from(const Config& c) {
        const auto unknown = c.unknown_keys(keys());
        require(unknown.empty(), ErrorKind::config,
                "unknown config key '" + (unknown.empty() ? std::string() : unknown.front()) + "'");
        RunConfig r;
        r.seed = c.get_u64("seed", 0);

        auto& s = r.synth;
        s.n_bonds = c.get_size("synth.n_bonds", s.n_bonds);
        s.n_days = c.get_size("synth.n_days", s.n_days);
        s.n_industries = c.get_size("synth.n_industries", s.n_industries);
        s.n_topics = c.get_size("synth.n_topics", s.n_topics);
        s.embedding_dim = c.get_size("synth.embedding_dim", s.embedding_dim);
        s.token_dim = c.get_size("synth.token_dim", s.token_dim);
        s.micro_rate = c.get_double("synth.micro_rate", s.micro_rate);
        s.meso_rate = c.get_double("synth.meso_rate", s.meso_rate);
        s.effect_size = c.get_double("synth.effect_size", s.effect_size);
        s.effect_lag = c.get_size("synth.effect_lag", s.effect_lag);
        s.noise_std = c.get_double("synth.noise_std", s.noise_std);
        s.ar_coefficient = c.get_double("synth.ar_coefficient", s.ar_coefficient);
        s.latent_timescale = c.get_double("synth.latent_timescale", s.latent_timescale);
        s.latent_fast_share = c.get_double("synth.latent_fast_share", s.latent_fast_share);
        s.text_noise = c.get_double("synth.text_noise", s.text_noise);
        s.labeled_fraction = c.get_double("synth.labeled_fraction", s.labeled_fraction);
        s.start_date = c.get_string("synth.start_date", s.start_date);
        s.seed = r.seed;
        s.validate();

        auto& a = r.sentiment.absa;
        a.hidden = c.get_size("absa.hidden", a.hidden);
        a.lr = c.get_double("absa.lr", a.lr);
        a.weight_decay = c.get_double("absa.weight_decay", a.weight_decay);
        a.epochs = c.get_size("absa.epochs", a.epochs);
        a.batch_size = c.get_size("absa.batch_size", a.batch_size);
        a.seed = r.seed;
        r.sentiment.score_mode = parse_score_mode(c.get_string("absa.score_mode", "argmax"));
        r.sentiment.top_k = c.get_size("meso.top_k", r.sentiment.top_k);
        r.sentiment.zscore_axis = parse_zscore_axis(c.get_string("meso.zscore_axis", "per_industry"));

        auto& w = r.wavelet;
        w.family = parse_wavelet_family(c.get_string("wavelet.family", std::string(to_string(w.family))));
        w.level = c.get_size("wavelet.level", w.level);
        w.mode = parse_smooth_mode(c.get_string("wavelet.mode", std::string(to_string(w.mode))));
        w.boundary = parse_boundary(c.get_string("wavelet.boundary", std::string(to_string(w.boundary))));
        w.rule = parse_smooth_rule(c.get_string("wavelet.rule", std::string(to_string(w.rule))));
        w.causal_window = c.get_size("wavelet.causal_window", w.causal_window);
        msent::validate(w);

        auto& b = r.backtest;
        b.window.steps = c.get_size("window.steps", b.window.steps);
        b.window.horizon = c.get_size("window.horizon", b.window.horizon);
        b.window.include_target_history = c.get_bool("window.target_history", true);
        require(b.window.steps >= 1 && b.window.horizon >= 1, ErrorKind::config,
                "window.steps and window.horizon must be at least 1");

        auto& f = b.forecast;
        f.d_model = c.get_size("forecast.d_model", f.d_model);
        f.heads = c.get_size("forecast.heads", f.heads);
        f.ff = c.get_size("forecast.ff", f.ff);
        f.layers = c.get_size("forecast.layers", f.layers);
        f.epochs = c.get_size("forecast.epochs", f.epochs);
        f.batch_size = c.get_size("forecast.batch_size", f.batch_size);
        f.lr = c.get_double("forecast.lr", f.lr);
        f.weight_decay = c.get_double("forecast.weight_decay", f.weight_decay);
        f.momentum = c.get_double("forecast.momentum", f.momentum);
        f.schedule = parse_lr_schedule(c.get_string("forecast.schedule", "constant"));
        f.pooling = parse_pooling(c.get_string("forecast.pooling", "last_step"));
        f.target = parse_target_mode(c.get_string("forecast.target", "delta"));
        f.linear_skip = c.get_bool("forecast.linear_skip", f.linear_skip);
        f.seed = r.seed;
        b.zero_init_sentiment = c.get_bool("forecast.zero_init_sentiment", true);
        b.per_bond_metrics = c.get_bool("forecast.per_bond_metrics", false);

        b.ratios.train = c.get_double("split.train", b.ratios.train);
        b.ratios.valid = c.get_double("split.valid", b.ratios.valid);
        b.ratios.test = c.get_double("split.test", b.ratios.test);
        b.split_seed = r.seed;
        b.permutation.n_permutations = c.get_size("permutation.n", b.permutation.n_permutations);
        b.permutation.seed = r.seed;
        r.importance_repeats = c.get_size("importance.repeats", r.importance_repeats);

        if (c.has("backtest.variants")) {
            r.variants.clear();
            for (auto part : io::split(c.get_string("backtest.variants", ""), ','))
                if (!io::trim(part).empty()) r.variants.emplace_back(io::trim(part));
        }
        return r;
    }
};

}  // namespace msent
