#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <unistd.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "msent/pipeline.hpp"
#include "msent/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace msent;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::vector<std::string> sets;
};

/// Output directory guard: holds the lockfile and records what the command wrote.
class RunDir {
public:
    explicit RunDir(const fs::path& dir) : dir_(dir), lock_(dir / ".msent.lock") {
        fs::create_directories(dir_);
        std::FILE* f = std::fopen(lock_.c_str(), "wx");
        require(f != nullptr, ErrorKind::io,
                "output directory " + dir_.string() + " is locked by another run (" + lock_.string() + ")");
        std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
        std::fclose(f);
    }
    RunDir(const RunDir&) = delete;
    RunDir& operator=(const RunDir&) = delete;
    ~RunDir() {
        std::error_code ec;
        fs::remove(lock_, ec);
    }

    fs::path output(const std::string& name) {
        outputs_.insert(name);
        return dir_ / name;
    }

    void manifest(const std::string& command, const Config& cfg, const RunConfig& rc) {
        json j;
        j["command"] = command;
        j["version"] = std::string("msent ") + kVersion;
        j["compiler"] = __VERSION__;
        j["config_hash"] = fnv1a_hex(cfg.canonical());
        j["seed"] = rc.seed;
        j["config"] = cfg.values();
        j["outputs"] = std::vector<std::string>(outputs_.begin(), outputs_.end());
        auto out = io::open_output(dir_ / "manifest.json");
        out << j.dump(2) << '\n';
    }

private:
    fs::path dir_;
    fs::path lock_;
    std::set<std::string> outputs_;
};

Config resolve_config(const CommonFlags& flags, const std::vector<std::pair<std::string, std::string>>& extra) {
    Config cfg = flags.config.empty() ? Config{} : Config::load(flags.config);
    cfg.apply_env("MSENT_", RunConfig::keys());
    for (const auto& kv : flags.sets) {
        const auto eq = kv.find('=');
        require(eq != std::string::npos, ErrorKind::config, "--set expects key=value, got '" + kv + "'");
        cfg.set(std::string(io::trim(std::string_view(kv).substr(0, eq))),
                std::string(io::trim(std::string_view(kv).substr(eq + 1))));
    }
    for (const auto& [k, v] : extra) cfg.set(k, v);
    if (flags.seed) cfg.set("seed", std::to_string(*flags.seed));
    return cfg;
}

void write_json(const fs::path& path, const json& j) {
    auto out = io::open_output(path);
    out << j.dump(2) << '\n';
}

SentimentMatrix read_matrix(const fs::path& path, Axis axis, const Calendar& calendar) {
    auto in = io::open_input(path);
    try {
        return read_matrix_csv(in, axis, calendar);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

struct PanelData {
    std::vector<BondPanel> panels;
    Calendar calendar;
};

PanelData read_panels(const fs::path& input) {
    const SynthPaths names;
    PanelData d;
    d.panels = load_panels(input / names.panel, input / names.bond_industries);
    d.calendar = panel_calendar(d.panels);
    return d;
}

struct Matrices {
    SentimentMatrix alpha;
    SentimentMatrix beta;
};

/// Alpha and standardized beta, from files when given, otherwise by running the sentiment stage.
Matrices sentiment_matrices(const fs::path& input, const std::string& alpha_path, const std::string& beta_path,
                            const Calendar& calendar, const RunConfig& rc) {
    require(alpha_path.empty() == beta_path.empty(), ErrorKind::config,
            "--alpha and --beta must be given together");
    if (!alpha_path.empty())
        return {read_matrix(alpha_path, Axis::alpha, calendar), read_matrix(beta_path, Axis::beta, calendar)};
    const auto in = load_inputs(input);
    auto s = run_sentiment(in, rc.sentiment);
    return {std::move(s.alpha), std::move(s.meso.standardized.matrix)};
}

std::string table_line(const std::string& name, const EvalReport& r, bool baseline) {
    std::ostringstream o;
    o << std::left << std::setw(12) << name << std::right << std::fixed << std::setprecision(4)
      << "  MAE " << std::setw(10) << r.mae << "  MAPE(x1e-3) " << std::setw(10) << r.mape * 1e3;
    if (!baseline)
        o << "  dMAE " << std::setw(8) << r.delta_mae_pct << "%  dMAPE " << std::setw(8) << r.delta_mape_pct
          << "%  p " << std::setprecision(4) << r.p_value;
    return o.str();
}

void write_predictions(const fs::path& path, const std::vector<WindowSample>& samples,
                       const std::vector<double>& preds) {
    auto out = io::open_output(path);
    write_predictions_csv(out, samples, preds);
}

struct PredictionRow {
    std::string key;
    double y_true = 0.0;
    double y_pred = 0.0;
};

std::vector<PredictionRow> read_predictions(const fs::path& path) {
    auto in = io::open_input(path);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && io::trim(line) == "bond_id,target_date,y_true,y_pred",
            ErrorKind::schema, path.string() + ": expected predictions header");
    std::vector<PredictionRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        const std::string where = path.string() + " line " + std::to_string(line_no);
        const auto f = io::split(io::trim(line), ',');
        require(f.size() == 4, ErrorKind::schema, where + ": expected 4 fields");
        rows.push_back({std::string(f[0]) + "@" + std::string(f[1]), io::parse_double(f[2], where),
                        io::parse_double(f[3], where)});
    }
    return rows;
}

std::vector<double> zscored(const std::vector<double>& v) {
    std::vector<double> out(v);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= double(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / double(v.size()));
    for (auto& x : out) x = sd > 0.0 ? (x - mean) / sd : 0.0;
    return out;
}

void print_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
    // The autodiff tape frees and reallocates the same large buffers every batch.
    mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
    CLI::App app{"Bond sentiment engine: scoring, smoothing and spread backtests"};
    app.set_version_flag("--version", std::string("msent ") + kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    CommonFlags common;
    app.add_option("--config", common.config, "TOML-style config file")->check(CLI::ExistingFile);
    app.add_option("--seed", common.seed, "Random seed (overrides config)");
    app.add_option("--out-dir", common.out_dir, "Output directory");
    app.add_option("--set", common.sets, "Override a config key: key=value (repeatable)");

    std::string input;
    std::string head_path;
    std::string alpha_path;
    std::string beta_path;
    std::string mode;
    std::string output_name;
    std::string variants_flag;
    std::string variant_name = "smoothed";
    std::string pred_a;
    std::string pred_b;
    std::string report_path;
    std::string composite_path;
    std::string plot_bonds;
    bool with_sentiment = false;
    bool without_sentiment = false;
    bool plots = false;

    app.add_subcommand("synth", "Generate a synthetic corpus and panel");
    auto* ingest = app.add_subcommand("ingest", "Validate an input directory");
    auto* train_absa = app.add_subcommand("train-absa", "Train the ABSA head on soft-labelled micro texts");
    auto* score_micro_cmd = app.add_subcommand("score-micro", "Score micro texts into the alpha matrix");
    auto* score_meso_cmd = app.add_subcommand("score-meso", "Propagate topic polarities into the beta matrix");
    auto* compose_cmd = app.add_subcommand("compose", "Sum and smooth per-bond sentiment");
    auto* backtest = app.add_subcommand("backtest", "Rolling-window spread forecasts with and without sentiment");
    auto* perm = app.add_subcommand("perm-test", "Paired permutation test on two prediction files");
    auto* importance = app.add_subcommand("importance", "Permutation feature importance on the test split");
    auto* report = app.add_subcommand("report", "Print a comparison table from a backtest report");

    for (auto* sc : {ingest, train_absa, score_micro_cmd, score_meso_cmd, compose_cmd, backtest, importance})
        sc->add_option("--input", input, "Input directory (synth layout)")->required()->check(CLI::ExistingDirectory);
    score_micro_cmd->add_option("--head", head_path, "ABSA head manifest")->required()->check(CLI::ExistingFile);
    for (auto* sc : {compose_cmd, backtest, importance}) {
        sc->add_option("--alpha", alpha_path, "Alpha matrix CSV")->check(CLI::ExistingFile);
        sc->add_option("--beta", beta_path, "Standardized beta matrix CSV")->check(CLI::ExistingFile);
    }
    compose_cmd->get_option("--alpha")->required();
    compose_cmd->get_option("--beta")->required();
    compose_cmd->add_option("--mode", mode, "Smoothing mode: full_sample or causal");
    compose_cmd->add_option("--output", output_name, "Output file name (default composite_<mode>.csv)");
    backtest->add_flag("--with-sentiment", with_sentiment, "Train the sentiment variants");
    backtest->add_flag("--without-sentiment", without_sentiment, "Train the baseline");
    backtest->add_option("--variants", variants_flag, "Comma list: smoothed,raw,causal,separate");
    importance->add_option("--variant", variant_name, "Feature variant to attribute");
    perm->add_option("--a", pred_a, "Predictions CSV of model A")->required()->check(CLI::ExistingFile);
    perm->add_option("--b", pred_b, "Predictions CSV of model B")->required()->check(CLI::ExistingFile);
    report->add_option("--report", report_path, "Backtest report JSON")->required()->check(CLI::ExistingFile);
    report->add_flag("--plots", plots, "Write SVG charts");
    report->add_option("--input", input, "Input directory, for spread series in plots");
    report->add_option("--composite", composite_path, "Composite CSV, for plots");
    report->add_option("--bonds", plot_bonds, "Comma list of bonds to plot (default: first three)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return 2;
    }

    try {
        std::vector<std::pair<std::string, std::string>> extra;
        if (!mode.empty()) extra.emplace_back("wavelet.mode", mode);
        if (!variants_flag.empty()) extra.emplace_back("backtest.variants", variants_flag);
        const Config cfg = resolve_config(common, extra);
        const RunConfig rc = RunConfig::from(cfg);
        const std::string command = app.get_subcommands().front()->get_name();
        RunDir run(common.out_dir);
        const fs::path in_dir(input);

        if (command == "synth") {
            const auto data = generate(rc.synth);
            const auto paths = write_synth(data, common.out_dir);
            for (const auto& p : {paths.micro_texts, paths.meso_texts, paths.token_features, paths.topic_embeddings,
                                  paths.text_embeddings, paths.topic_polarities, paths.graph, paths.panel,
                                  paths.bond_industries, paths.ground_truth})
                run.output(p.filename().string());
            std::cout << "synth: " << data.panels.size() << " bonds, " << data.calendar.size() << " days, "
                      << data.micro_texts.size() << " micro texts, " << data.meso_texts.size() << " meso texts\n";
        } else if (command == "ingest") {
            const auto in = load_inputs(in_dir);
            std::size_t labeled = 0;
            for (const auto& t : in.micro_texts) labeled += t.soft_label ? 1 : 0;
            const json summary{{"bonds", in.panels.size()},
                               {"days", in.calendar.size()},
                               {"micro_texts", in.micro_texts.size()},
                               {"labeled_micro_texts", labeled},
                               {"meso_texts", in.meso_texts.size()},
                               {"token_features", in.token_features.size()},
                               {"topic_embeddings", in.topic_embeddings.size()},
                               {"text_embeddings", in.text_embeddings.size()},
                               {"topic_polarities", in.topic_polarities.size()},
                               {"industries", in.graph.industry_count()},
                               {"topics", in.graph.topic_count()}};
            write_json(run.output("ingest_summary.json"), summary);
            std::cout << summary.dump() << '\n';
        } else if (command == "train-absa") {
            const auto in = load_inputs(in_dir);
            const auto items = labeled_items(in.micro_texts, in.token_features);
            const auto head = train_head(items, rc.sentiment.absa);
            write_json(run.output("absa_head.json"), head.to_json());
            std::cout << "train-absa: " << items.size() << " items, final loss "
                      << io::format_double(head.loss_history().back()) << '\n';
        } else if (command == "score-micro") {
            const auto in = load_inputs(in_dir);
            const auto head = AbsaHead::from_json(json::parse(io::read_file(head_path)));
            const auto scored = score_micro(head, in.micro_texts, in.token_features, rc.sentiment.score_mode);
            const auto alpha = build_alpha_matrix(scored.scores, bond_ids(in.panels), in.calendar);
            {
                auto o = io::open_output(run.output("micro_scores.csv"));
                write_scores_csv(o, scored.scores);
            }
            {
                auto o = io::open_output(run.output("alpha.csv"));
                write_matrix_csv(o, alpha);
            }
            std::cout << "score-micro: " << scored.scores.size() << " scores, " << scored.skipped_mentions
                      << " mentions without token features\n";
        } else if (command == "score-meso") {
            const auto in = load_inputs(in_dir);
            const auto meso = score_meso(in.graph, in.topic_embeddings, in.text_embeddings, in.topic_polarities,
                                         in.calendar, rc.sentiment.top_k, rc.sentiment.zscore_axis);
            {
                auto o = io::open_output(run.output("beta_raw.csv"));
                write_matrix_csv(o, meso.raw);
            }
            {
                auto o = io::open_output(run.output("beta.csv"));
                write_matrix_csv(o, meso.standardized.matrix);
            }
            for (const auto& name : meso.standardized.zero_variance)
                std::cerr << "warning: industry '" << name << "' has zero variance; standardized to zeros\n";
            std::cout << "score-meso: " << meso.texts_used << " texts\n";
        } else if (command == "compose") {
            const auto pd = read_panels(in_dir);
            const auto alpha = read_matrix(alpha_path, Axis::alpha, pd.calendar);
            const auto beta = read_matrix(beta_path, Axis::beta, pd.calendar);
            const auto series = build_composite(alpha, beta, pd.panels, rc.wavelet);
            const std::string name =
                output_name.empty() ? "composite_" + std::string(to_string(rc.wavelet.mode)) + ".csv" : output_name;
            auto o = io::open_output(run.output(name));
            write_composite_csv(o, series, pd.calendar);
            for (const auto& [bond, s] : series)
                for (const auto& w : s.warnings) std::cerr << "warning: " << bond << ": " << w << '\n';
            std::cout << "compose: " << series.size() << " bonds -> " << name << '\n';
        } else if (command == "backtest" || command == "importance") {
            const auto pd = read_panels(in_dir);
            const auto m = sentiment_matrices(in_dir, alpha_path, beta_path, pd.calendar, rc);
            if (command == "backtest") {
                const bool base = without_sentiment || !with_sentiment;
                const bool sentiment = with_sentiment || !without_sentiment;
                auto variants = sentiment_variants(sentiment ? rc.variants : std::vector<std::string>{}, m.alpha,
                                                   m.beta, pd.panels, rc.wavelet, base);
                auto result = run_backtest(pd.panels, pd.calendar, variants, rc.backtest);
                {
                    auto o = io::open_output(run.output("splits.csv"));
                    write_splits_csv(o, result.splits);
                }
                for (const auto& v : result.variants)
                    write_predictions(run.output("predictions_" + v.name + ".csv"), result.test_windows,
                                      v.predictions);
                write_json(run.output("report.json"), result.to_json());
                for (std::size_t i = 0; i < result.variants.size(); ++i)
                    std::cout << table_line(result.variants[i].name, result.variants[i].report, i == 0) << '\n';
            } else {
                auto variants = sentiment_variants({variant_name}, m.alpha, m.beta, pd.panels, rc.wavelet, false);
                auto result = run_backtest(pd.panels, pd.calendar, variants, rc.backtest);
                auto& v = result.variants.front();
                const auto ranked = rank_importance(*v.model, result.test_windows, v.feature_names,
                                                    rc.importance_repeats, rc.seed);
                auto o = io::open_output(run.output("importance.csv"));
                write_importance_csv(o, ranked);
                for (const auto& r : ranked)
                    if (r.feature.rfind("sentiment", 0) == 0)
                        std::cout << "importance: " << r.feature << " rank " << r.rank << " of " << ranked.size()
                                  << ", " << io::format_double(r.importance) << '\n';
            }
        } else if (command == "perm-test") {
            const auto a = read_predictions(pred_a);
            const auto b = read_predictions(pred_b);
            require(a.size() == b.size(), ErrorKind::dimension_mismatch, "prediction files differ in length");
            std::vector<double> ea;
            std::vector<double> eb;
            for (std::size_t i = 0; i < a.size(); ++i) {
                require(a[i].key == b[i].key && a[i].y_true == b[i].y_true, ErrorKind::dimension_mismatch,
                        "prediction files differ at row " + std::to_string(i + 1));
                ea.push_back(std::abs(a[i].y_true - a[i].y_pred));
                eb.push_back(std::abs(b[i].y_true - b[i].y_pred));
            }
            const double p = permutation_test(ea, eb, rc.backtest.permutation);
            double ma = 0.0;
            double mb = 0.0;
            for (std::size_t i = 0; i < ea.size(); ++i) {
                ma += ea[i];
                mb += eb[i];
            }
            const json j{{"p", p},
                         {"n", ea.size()},
                         {"n_permutations", rc.backtest.permutation.n_permutations},
                         {"mae_a", ma / double(ea.size())},
                         {"mae_b", mb / double(eb.size())}};
            write_json(run.output("perm_test.json"), j);
            std::cout << j.dump() << '\n';
        } else if (command == "report") {
            const auto j = json::parse(io::read_file(report_path));
            const auto& vs = j.at("variants");
            require(vs.is_array() && !vs.empty(), ErrorKind::schema, "report has no variants");
            std::vector<std::pair<std::string, EvalReport>> rows;
            for (const auto& v : vs) {
                EvalReport r;
                r.mae = v.at("mae").get<double>();
                r.mape = v.at("mape").get<double>();
                r.p_value = v.value("p", 1.0);
                r.n_test = v.value("n_test", std::size_t{0});
                rows.emplace_back(v.at("name").get<std::string>(), r);
            }
            std::size_t base = 0;
            for (std::size_t i = 0; i < rows.size(); ++i)
                if (rows[i].first == "base") base = i;
            std::ostringstream table;
            table << table_line(rows[base].first, rows[base].second, true) << '\n';
            json out{{"baseline", rows[base].first}, {"rows", json::array()}};
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (i == base) continue;
                auto r = rows[i].second;
                const auto d = delta_report(rows[base].second, r);
                r.delta_mae_pct = d.delta_mae_pct;
                r.delta_mape_pct = d.delta_mape_pct;
                table << table_line(rows[i].first, r, false) << '\n';
                auto row = r.to_json();
                row["name"] = rows[i].first;
                out["rows"].push_back(row);
            }
            std::cout << table.str();
            {
                auto o = io::open_output(run.output("report_table.txt"));
                o << table.str();
            }
            write_json(run.output("report_table.json"), out);

            if (plots) {
                require(!composite_path.empty() && !input.empty(), ErrorKind::config,
                        "--plots needs --composite and --input");
                const auto pd = read_panels(input);
                auto cin = io::open_input(composite_path);
                const auto series = read_composite_csv(cin, pd.calendar);
                std::vector<std::string> bonds;
                for (auto part : io::split(plot_bonds, ','))
                    if (!io::trim(part).empty()) bonds.emplace_back(io::trim(part));
                if (bonds.empty())
                    for (const auto& [b, s] : series)
                        if (bonds.size() < 3) bonds.push_back(b);
                for (const auto& bond : bonds) {
                    const auto it = series.find(bond);
                    require(it != series.end(), ErrorKind::unknown_id, "bond '" + bond + "' not in composite");
                    {
                        auto o = io::open_output(run.output("plot_composite_" + bond + ".svg"));
                        o << svg::line_chart({{"raw", it->second.raw}, {"smoothed", it->second.smoothed}},
                                             {"Composite sentiment " + bond, "day", "sentiment"});
                    }
                    const auto panel = std::find_if(pd.panels.begin(), pd.panels.end(),
                                                    [&](const BondPanel& p) { return p.bond_id == bond; });
                    require(panel != pd.panels.end(), ErrorKind::unknown_id, "bond '" + bond + "' not in panel");
                    std::vector<double> spread(pd.calendar.size(), std::nan(""));
                    for (const auto& row : panel->rows) spread[pd.calendar.index(row.date)] = row.credit_spread;
                    std::vector<double> finite;
                    for (double v : spread)
                        if (std::isfinite(v)) finite.push_back(v);
                    auto zs = zscored(finite);
                    for (std::size_t k = 0, n = 0; k < spread.size(); ++k)
                        if (std::isfinite(spread[k])) spread[k] = zs[n++];
                    auto o = io::open_output(run.output("plot_sentiment_spread_" + bond + ".svg"));
                    o << svg::line_chart({{"smoothed sentiment (z)", zscored(it->second.smoothed)},
                                          {"credit spread (z)", spread}},
                                         {"Sentiment vs credit spread " + bond, "day", "z-score"});
                }
            }
        }
        run.manifest(command, cfg, rc);
        return 0;
    } catch (const Error& e) {
        print_error(std::string(to_string(e.kind())), e.what());
        return 1;
    } catch (const json::exception& e) {
        print_error("schema", e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 1;
    }
}
