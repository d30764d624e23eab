#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "msent/autodiff.hpp"
#include "msent/corpus.hpp"
#include "msent/error.hpp"
#include "msent/io.hpp"
#include "msent/rng.hpp"
#include "msent/stats.hpp"

namespace msent {

// ---------------------------------------------------------------------------
// Rolling windows

struct WindowOptions {
    std::size_t steps = 21;
    std::size_t horizon = 2;
    bool include_target_history = true;
};

struct WindowSample {
    std::string bond_id;
    Day target_date{};
    std::vector<double> window;  // steps x features, row-major
    std::size_t steps = 0;
    std::size_t features = 0;
    double target = 0.0;
    double last = 0.0;  // spread on the final window day
};

/// Values of a calendar-indexed series on the panel's row dates.
inline std::vector<double> align_to_panel(const BondPanel& panel, std::span<const double> series,
                                          const Calendar& calendar) {
    require(series.size() == calendar.size(), ErrorKind::dimension_mismatch,
            "series length does not match the calendar");
    std::vector<double> out;
    out.reserve(panel.size());
    for (const auto& row : panel.rows) out.push_back(series[calendar.index(row.date)]);
    return out;
}

/// Stride-1 windows; the target sits `horizon` rows after the window's last row.
inline std::vector<WindowSample> build_windows(const BondPanel& panel, const WindowOptions& opt,
                                               const std::vector<std::vector<double>>& extra = {}) {
    require(opt.steps >= 1 && opt.horizon >= 1, ErrorKind::invalid_argument,
            "window steps and horizon must be at least 1");
    for (const auto& col : extra) {
        require(col.size() == panel.size(), ErrorKind::dimension_mismatch,
                "extra column for bond " + panel.bond_id + " has " + std::to_string(col.size()) +
                    " values, panel has " + std::to_string(panel.size()));
    }
    std::vector<WindowSample> out;
    const std::size_t n = panel.size();
    if (n < opt.steps + opt.horizon) return out;
    const std::size_t width = feature_count + (opt.include_target_history ? 1 : 0) + extra.size();
    for (std::size_t t = 0; t + opt.steps + opt.horizon <= n; ++t) {
        WindowSample s;
        s.bond_id = panel.bond_id;
        s.steps = opt.steps;
        s.features = width;
        s.window.reserve(opt.steps * width);
        for (std::size_t r = t; r < t + opt.steps; ++r) {
            const auto& row = panel.rows[r];
            s.window.insert(s.window.end(), row.features.begin(), row.features.end());
            if (opt.include_target_history) s.window.push_back(row.credit_spread);
            for (const auto& col : extra) s.window.push_back(col[r]);
        }
        const std::size_t end = t + opt.steps - 1;
        s.last = panel.rows[end].credit_spread;
        s.target = panel.rows[end + opt.horizon].credit_spread;
        s.target_date = panel.rows[end + opt.horizon].date;
        for (double v : s.window)
            if (!std::isfinite(v)) fail(ErrorKind::non_finite, "non-finite value in window for bond " + panel.bond_id);
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<std::string> window_feature_names(const WindowOptions& opt,
                                                     const std::vector<std::string>& extra_names) {
    std::vector<std::string> names;
    for (const auto& f : feature_registry) names.emplace_back(f.column);
    if (opt.include_target_history) names.emplace_back("credit_spread");
    names.insert(names.end(), extra_names.begin(), extra_names.end());
    return names;
}

// ---------------------------------------------------------------------------
// Model

enum class Pooling { last_step, mean };
enum class TargetMode { delta, level };
enum class LrSchedule { constant, linear };

inline Pooling parse_pooling(std::string_view s) {
    if (s == "last_step") return Pooling::last_step;
    if (s == "mean") return Pooling::mean;
    fail(ErrorKind::config, "unknown pooling '" + std::string(s) + "'");
}

inline TargetMode parse_target_mode(std::string_view s) {
    if (s == "delta") return TargetMode::delta;
    if (s == "level") return TargetMode::level;
    fail(ErrorKind::config, "unknown target mode '" + std::string(s) + "'");
}

inline LrSchedule parse_lr_schedule(std::string_view s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "linear") return LrSchedule::linear;
    fail(ErrorKind::config, "unknown lr schedule '" + std::string(s) + "'");
}

struct ForecastConfig {
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t ff = 128;
    std::size_t layers = 5;
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double lr = 1e-4;
    double weight_decay = 1e-7;
    double momentum = 0.9;
    LrSchedule schedule = LrSchedule::constant;
    Pooling pooling = Pooling::last_step;
    TargetMode target = TargetMode::delta;
    bool linear_skip = false;
    std::vector<std::size_t> zero_init_inputs;
    std::uint64_t seed = 0;
};

class Forecaster {
public:
    Forecaster() = default;

    Forecaster(std::size_t steps, std::size_t inputs, const ForecastConfig& cfg)
        : steps_(steps), inputs_(inputs), cfg_(cfg) {
        require(steps >= 1 && inputs >= 1, ErrorKind::invalid_argument, "empty window shape");
        require(cfg.heads >= 1 && cfg.d_model % cfg.heads == 0, ErrorKind::invalid_argument,
                "d_model must be divisible by the head count");
        require(cfg.d_model % 2 == 0, ErrorKind::invalid_argument, "d_model must be even");
        Rng rng(cfg.seed);
        const std::size_t D = cfg.d_model;
        const std::size_t dh = D / cfg.heads;
        auto& w_in = params_.add("input.w", ad::glorot_uniform(inputs, D, rng));
        for (std::size_t c : cfg.zero_init_inputs) {
            require(c < inputs, ErrorKind::out_of_range, "zero-init input column out of range");
            for (std::size_t j = 0; j < D; ++j) w_in.value[c * D + j] = 0.0;
        }
        params_.add("input.b", ad::Tensor(ad::Shape{D}));
        for (std::size_t l = 0; l < cfg.layers; ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            for (std::size_t h = 0; h < cfg.heads; ++h) {
                const std::string ph = p + "head" + std::to_string(h) + ".";
                for (const char* m : {"q", "k", "v"}) {
                    params_.add(ph + m + ".w", ad::glorot_uniform(D, dh, rng));
                    params_.add(ph + m + ".b", ad::Tensor(ad::Shape{dh}));
                }
                params_.add(ph + "o.w", ad::glorot_uniform(dh, D, rng));
            }
            params_.add(p + "o.b", ad::Tensor(ad::Shape{D}));
            params_.add(p + "ln1.gain", ad::Tensor(ad::Shape{D}, 1.0));
            params_.add(p + "ln1.shift", ad::Tensor(ad::Shape{D}));
            params_.add(p + "ff1.w", ad::glorot_uniform(D, cfg.ff, rng));
            params_.add(p + "ff1.b", ad::Tensor(ad::Shape{cfg.ff}));
            params_.add(p + "ff2.w", ad::glorot_uniform(cfg.ff, D, rng));
            params_.add(p + "ff2.b", ad::Tensor(ad::Shape{D}));
            params_.add(p + "ln2.gain", ad::Tensor(ad::Shape{D}, 1.0));
            params_.add(p + "ln2.shift", ad::Tensor(ad::Shape{D}));
        }
        params_.add("head1.w", ad::glorot_uniform(D, D, rng));
        params_.add("head1.b", ad::Tensor(ad::Shape{D}));
        params_.add("head2.w", ad::glorot_uniform(D, 1, rng));
        params_.add("head2.b", ad::Tensor(ad::Shape{1}));
        if (cfg.linear_skip) {
            params_.add("skip.w", ad::Tensor(ad::Shape{steps * inputs, 1}));
            params_.add("skip.b", ad::Tensor(ad::Shape{1}));
        }
        positional_ = positional_encoding(steps, D);
    }

    static ad::Tensor positional_encoding(std::size_t steps, std::size_t d) {
        ad::Tensor pe(ad::Shape{steps, d});
        for (std::size_t t = 0; t < steps; ++t)
            for (std::size_t i = 0; i < d; i += 2) {
                const double freq = std::exp(-std::log(10000.0) * double(i) / double(d));
                pe[t * d + i] = std::sin(double(t) * freq);
                pe[t * d + i + 1] = std::cos(double(t) * freq);
            }
        return pe;
    }

    [[nodiscard]] std::size_t steps() const noexcept { return steps_; }
    [[nodiscard]] std::size_t inputs() const noexcept { return inputs_; }
    [[nodiscard]] const ForecastConfig& config() const noexcept { return cfg_; }
    ad::ParameterSet& parameters() { return params_; }
    [[nodiscard]] const ad::ParameterSet& parameters() const { return params_; }

    /// Model output for a [B, T, d] batch, shape [B, 1]. Attention maps go to `attention` if given.
    ad::Var forward(ad::Tape& tape, ad::Var x, std::vector<ad::Var>* attention = nullptr) {
        const auto& shape = x.shape();
        if (shape.size() != 3 || shape[1] != steps_ || shape[2] != inputs_)
            fail(ErrorKind::dimension_mismatch, "forecaster expects [B," + std::to_string(steps_) + "," +
                                                    std::to_string(inputs_) + "], got " + ad::shape_string(shape));
        const std::size_t B = shape[0];
        const std::size_t D = cfg_.d_model;
        const std::size_t dh = D / cfg_.heads;
        std::size_t next = 0;
        const auto p = [&]() { return tape.leaf(params_[next++]); };
        const auto linear = [&](ad::Var in) {
            auto w = p();
            auto b = p();
            return ad::add_row(ad::matmul(in, w), b);
        };

        auto h = linear(x);
        ad::Tensor pe(ad::Shape{B, steps_, D});
        for (std::size_t b = 0; b < B; ++b)
            std::copy(positional_.data.begin(), positional_.data.end(),
                      pe.data.begin() + static_cast<std::ptrdiff_t>(b * steps_ * D));
        h = ad::add(h, tape.constant(std::move(pe)));

        const double inv_sqrt = 1.0 / std::sqrt(double(dh));
        for (std::size_t l = 0; l < cfg_.layers; ++l) {
            std::optional<ad::Var> attn;
            for (std::size_t head = 0; head < cfg_.heads; ++head) {
                auto q = linear(h);
                auto k = linear(h);
                auto v = linear(h);
                auto a = ad::softmax(ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt));
                if (attention) attention->push_back(a);
                auto wo = p();
                auto o = ad::matmul(ad::matmul(a, v), wo);
                attn = attn ? ad::add(*attn, o) : o;
            }
            auto bo = p();
            auto attn_out = ad::add_row(*attn, bo);
            auto g1 = p();
            auto s1 = p();
            h = ad::layer_norm(ad::add(h, attn_out), g1, s1);
            auto f = linear(ad::relu(linear(h)));
            auto g2 = p();
            auto s2 = p();
            h = ad::layer_norm(ad::add(h, f), g2, s2);
        }
        auto pooled = cfg_.pooling == Pooling::last_step ? ad::select_step(h, steps_ - 1)
                                                         : ad::mean_steps(h);
        auto out = linear(ad::relu(linear(pooled)));
        if (cfg_.linear_skip) {
            out = ad::add(out, linear(ad::reshape(x, ad::Shape{B, steps_ * inputs_})));
        }
        return out;
    }

    [[nodiscard]] nlohmann::json to_json() const {
        auto j = params_.to_json();
        j["kind"] = "forecaster";
        j["steps"] = steps_;
        j["inputs"] = inputs_;
        j["d_model"] = cfg_.d_model;
        j["heads"] = cfg_.heads;
        j["ff"] = cfg_.ff;
        j["layers"] = cfg_.layers;
        j["pooling"] = cfg_.pooling == Pooling::last_step ? "last_step" : "mean";
        j["linear_skip"] = cfg_.linear_skip;
        return j;
    }

    static Forecaster from_json(const nlohmann::json& j) {
        require(j.value("kind", "") == "forecaster", ErrorKind::schema, "not a forecaster manifest");
        ForecastConfig cfg;
        cfg.d_model = j.at("d_model").get<std::size_t>();
        cfg.heads = j.at("heads").get<std::size_t>();
        cfg.ff = j.at("ff").get<std::size_t>();
        cfg.layers = j.at("layers").get<std::size_t>();
        cfg.pooling = j.at("pooling").get<std::string>() == "mean" ? Pooling::mean : Pooling::last_step;
        cfg.linear_skip = j.at("linear_skip").get<bool>();
        Forecaster f(j.at("steps").get<std::size_t>(), j.at("inputs").get<std::size_t>(), cfg);
        f.params_.load_json(j);
        return f;
    }

private:
    std::size_t steps_ = 0;
    std::size_t inputs_ = 0;
    ForecastConfig cfg_;
    ad::ParameterSet params_;
    ad::Tensor positional_;
};

/// Trained model plus the input and target scaling fitted on the training windows.
struct TrainedForecaster {
    Forecaster model;
    Standardizer inputs;
    TargetMode target_mode = TargetMode::delta;
    double target_mean = 0.0;
    double target_std = 1.0;
    std::vector<double> train_loss;
    std::vector<double> valid_loss;
    std::vector<std::string> warnings;

    [[nodiscard]] nlohmann::json to_json() const {
        auto j = model.to_json();
        j["input_mean"] = inputs.means();
        j["input_std"] = inputs.stds();
        j["target_mode"] = target_mode == TargetMode::delta ? "delta" : "level";
        j["target_mean"] = target_mean;
        j["target_std"] = target_std;
        j["train_loss"] = train_loss;
        j["valid_loss"] = valid_loss;
        return j;
    }
};

namespace detail {

inline double raw_target(const WindowSample& s, TargetMode mode) {
    return mode == TargetMode::delta ? s.target - s.last : s.target;
}

inline ad::Tensor batch_tensor(const std::vector<WindowSample>& samples,
                               std::span<const std::size_t> idx, const Standardizer& scaler) {
    const auto& first = samples[idx[0]];
    ad::Tensor x(ad::Shape{idx.size(), first.steps, first.features});
    const std::size_t stride = first.steps * first.features;
    for (std::size_t b = 0; b < idx.size(); ++b) {
        const auto& s = samples[idx[b]];
        require(s.steps == first.steps && s.features == first.features, ErrorKind::dimension_mismatch,
                "windows in a batch have different shapes");
        for (std::size_t i = 0; i < stride; ++i)
            x[b * stride + i] = scaler.transform(s.window[i], i % s.features);
    }
    return x;
}

}  // namespace detail

/// Predictions in spread units.
inline std::vector<double> predict(TrainedForecaster& tf, const std::vector<WindowSample>& samples,
                                   std::size_t chunk = 256) {
    std::vector<double> out;
    out.reserve(samples.size());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < samples.size(); start += chunk) {
        const std::size_t b = std::min(chunk, samples.size() - start);
        idx.resize(b);
        for (std::size_t i = 0; i < b; ++i) idx[i] = start + i;
        ad::Tape tape;
        auto y = tf.model.forward(tape, tape.constant(detail::batch_tensor(samples, idx, tf.inputs)));
        for (std::size_t i = 0; i < b; ++i) {
            const double z = y.value()[i] * tf.target_std + tf.target_mean;
            const double v = tf.target_mode == TargetMode::delta ? z + samples[start + i].last : z;
            require(std::isfinite(v), ErrorKind::non_finite, "non-finite forecast");
            out.push_back(v);
        }
    }
    return out;
}

inline double predict_one(TrainedForecaster& tf, const WindowSample& sample) {
    return predict(tf, std::vector<WindowSample>{sample}).front();
}

/// Minibatch RMSprop on the batch RMSE of the scaled target.
inline TrainedForecaster train_forecaster(const std::vector<WindowSample>& train,
                                          const ForecastConfig& cfg,
                                          const std::vector<WindowSample>& valid = {}) {
    require(!train.empty(), ErrorKind::empty_input, "train_forecaster: no training windows");
    require(cfg.epochs >= 1 && cfg.batch_size >= 1, ErrorKind::invalid_argument,
            "epochs and batch size must be positive");
    const std::size_t steps = train.front().steps;
    const std::size_t width = train.front().features;

    std::vector<double> rows;
    rows.reserve(train.size() * steps * width);
    for (const auto& s : train) {
        require(s.steps == steps && s.features == width, ErrorKind::dimension_mismatch,
                "training windows have different shapes");
        rows.insert(rows.end(), s.window.begin(), s.window.end());
    }
    TrainedForecaster tf{Forecaster(steps, width, cfg), Standardizer::fit(rows, width), cfg.target,
                         0.0, 1.0, {}, {}, {}};
    rows.clear();
    rows.shrink_to_fit();
    tf.warnings = tf.inputs.warnings();

    std::vector<double> y(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) y[i] = detail::raw_target(train[i], cfg.target);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= double(y.size());
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= double(y.size());
    tf.target_mean = mean;
    tf.target_std = var > 0.0 ? std::sqrt(var) : 1.0;
    for (double& v : y) v = (v - tf.target_mean) / tf.target_std;

    ad::Rmsprop opt(tf.model.parameters(),
                    ad::RmspropConfig{cfg.lr, 0.99, 1e-8, cfg.momentum, cfg.weight_decay});
    Rng rng(cfg.seed, 2);
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    const std::size_t batches = (train.size() + cfg.batch_size - 1) / cfg.batch_size;
    const double total_steps = double(batches * cfg.epochs);
    std::size_t step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        for (std::size_t b = 0; b < batches; ++b) {
            if (cfg.schedule == LrSchedule::linear) opt.set_lr(cfg.lr * (1.0 - double(step) / total_steps));
            ++step;
            const std::size_t start = b * cfg.batch_size;
            const std::size_t n = std::min(cfg.batch_size, train.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, n);
            ad::Tensor target(ad::Shape{n, 1});
            for (std::size_t i = 0; i < n; ++i) target[i] = y[idx[i]];
            ad::Tape tape;
            tf.model.parameters().zero_grad();
            auto out = tf.model.forward(tape, tape.constant(detail::batch_tensor(train, idx, tf.inputs)));
            auto loss = ad::rmse(out, tape.constant(std::move(target)));
            const double value = loss.value()[0];
            if (!std::isfinite(value))
                fail(ErrorKind::non_finite,
                     "non-finite loss in epoch " + std::to_string(epoch) + ", batch " + std::to_string(b));
            tape.backward(loss);
            opt.step(tf.model.parameters());
            loss_sum += value;
        }
        tf.train_loss.push_back(loss_sum / double(batches));
        if (!valid.empty()) {
            const auto p = predict(tf, valid);
            double se = 0.0;
            for (std::size_t i = 0; i < valid.size(); ++i) {
                const double d = (p[i] - valid[i].target) / tf.target_std;
                se += d * d;
            }
            tf.valid_loss.push_back(std::sqrt(se / double(valid.size())));
        }
    }
    return tf;
}

// ---------------------------------------------------------------------------
// Evaluation

struct ErrorMetrics {
    double mae = 0.0;
    double mape = 0.0;
};

inline ErrorMetrics evaluate(std::span<const double> preds, std::span<const double> targets) {
    require(!preds.empty(), ErrorKind::empty_input, "evaluate: no predictions");
    require(preds.size() == targets.size(), ErrorKind::dimension_mismatch,
            "evaluate: predictions and targets differ in length");
    std::vector<std::size_t> zeros;
    for (std::size_t i = 0; i < targets.size(); ++i)
        if (targets[i] == 0.0) zeros.push_back(i);
    if (!zeros.empty()) {
        std::string list;
        for (std::size_t i = 0; i < zeros.size() && i < 20; ++i)
            list += (i ? "," : "") + std::to_string(zeros[i]);
        if (zeros.size() > 20) list += ",...";
        fail(ErrorKind::invalid_argument, "MAPE undefined: zero targets at indices " + list);
    }
    ErrorMetrics m;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double e = std::abs(targets[i] - preds[i]);
        m.mae += e;
        m.mape += e / std::abs(targets[i]);
    }
    m.mae /= double(preds.size());
    m.mape /= double(preds.size());
    return m;
}

/// MAE / MAPE averaged over bonds instead of pooled windows.
inline ErrorMetrics evaluate_per_bond(const std::vector<WindowSample>& samples,
                                      std::span<const double> preds) {
    require(samples.size() == preds.size(), ErrorKind::dimension_mismatch,
            "evaluate_per_bond: length mismatch");
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        groups[samples[i].bond_id].first.push_back(preds[i]);
        groups[samples[i].bond_id].second.push_back(samples[i].target);
    }
    ErrorMetrics total;
    for (const auto& [bond, g] : groups) {
        const auto m = evaluate(g.first, g.second);
        total.mae += m.mae;
        total.mape += m.mape;
    }
    total.mae /= double(groups.size());
    total.mape /= double(groups.size());
    return total;
}

struct EvalReport {
    double mae = 0.0;
    double mape = 0.0;
    double delta_mae_pct = 0.0;
    double delta_mape_pct = 0.0;
    double p_value = 1.0;
    std::size_t n_test = 0;

    [[nodiscard]] nlohmann::json to_json() const {
        return {{"mae", mae},
                {"mape", mape},
                {"p", p_value},
                {"delta_mae_pct", delta_mae_pct},
                {"delta_mape_pct", delta_mape_pct},
                {"n_test", n_test}};
    }
};

struct Deltas {
    double delta_mae_pct = 0.0;
    double delta_mape_pct = 0.0;
};

/// Percentage improvement of `with_s` over `base`.
inline Deltas delta_report(const EvalReport& base, const EvalReport& with_s) {
    require(base.mae != 0.0 && base.mape != 0.0, ErrorKind::invalid_argument,
            "delta_report: baseline metric is zero");
    return {(base.mae - with_s.mae) / base.mae * 100.0, (base.mape - with_s.mape) / base.mape * 100.0};
}

inline void write_predictions_csv(std::ostream& out, const std::vector<WindowSample>& samples,
                                  std::span<const double> preds) {
    out << "bond_id,target_date,y_true,y_pred\n";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        out << samples[i].bond_id << ',' << format_day(samples[i].target_date) << ','
            << io::format_double(samples[i].target) << ',' << io::format_double(preds[i]) << '\n';
    }
}

}  // namespace msent
