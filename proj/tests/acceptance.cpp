#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>

#include "gradcheck.hpp"
#include "meso_oracle.hpp"
#include "msent/pipeline.hpp"
#include "msent/stats.hpp"
#include "wavelet_checks.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

using namespace msent;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<double> normal_vec(Rng& rng, std::size_t n, double sd = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, sd);
    return v;
}

Outcome wavelet_round_trip() {
    Rng rng(1);
    double worst_rt = 0, worst_const = 0, worst_cubic = 0;
    for (std::size_t n : {64u, 65u, 100u, 127u, 256u, 333u, 512u, 777u, 1000u}) {
        for (int level = 1; level <= 6; ++level) {
            WaveletSpec spec;
            spec.level = level;
            const auto x = normal_vec(rng, n);
            worst_rt = std::max(worst_rt, check::max_abs_diff(idwt(dwt(x, spec), spec), x));
            worst_const = std::max(worst_const, check::max_detail(dwt(std::vector<double>(n, -1.75), spec)));
            std::vector<double> cubic(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double t = double(i) / double(n);
                cubic[i] = 0.3 - t + 2 * t * t - 1.5 * t * t * t;
            }
            // boundary extension breaks polynomial structure, so only interior coefficients count
            worst_cubic = std::max(worst_cubic, check::max_interior_detail(dwt(cubic, spec), spec));
        }
    }
    std::ostringstream s;
    s << "roundtrip " << worst_rt << ", constant detail " << worst_const << ", cubic detail " << worst_cubic;
    return {worst_rt < 1e-8 && worst_const < 1e-10 && worst_cubic < 1e-10, s.str()};
}

ad::Tensor random_tensor(Rng& rng, ad::Shape shape, double lo, double hi) {
    ad::Tensor t(std::move(shape));
    for (auto& x : t.data) x = rng.uniform(lo, hi);
    return t;
}

ad::Tensor off_zero(Rng& rng, ad::Shape shape) {
    ad::Tensor t(std::move(shape));
    for (auto& x : t.data) x = (rng.bernoulli(0.5) ? 1 : -1) * rng.uniform(0.2, 1.5);
    return t;
}

Outcome gradient_fidelity() {
    using namespace msent::ad;
    Rng rng(2);
    double worst = 0;
    std::string where;
    std::uint64_t seed = 500;
    const auto record = [&](const char* name, const check::GradReport& r) {
        if (r.max_rel > worst) {
            worst = r.max_rel;
            where = std::string(name) + " " + r.worst;
        }
    };
    const auto probe = [](Tape& t, Var out, std::uint64_t s) {
        Rng r(s);
        return sum(mul(out, t.constant(random_tensor(r, out.shape(), -1, 1))));
    };
    const auto unary = [&](const char* name, Shape shape, const std::function<Var(Var)>& op, bool positive = false) {
        ParameterSet ps;
        auto& x = ps.add("x", positive ? random_tensor(rng, shape, 0.3, 2.0) : off_zero(rng, shape));
        const auto s = ++seed;
        record(name, check::gradient_check(ps, [&](Tape& t) { return probe(t, op(t.leaf(x)), s); }));
    };
    const auto binary = [&](const char* name, Shape sa, Shape sb, const std::function<Var(Var, Var)>& op) {
        ParameterSet ps;
        auto& a = ps.add("a", off_zero(rng, sa));
        auto& b = ps.add("b", off_zero(rng, sb));
        const auto s = ++seed;
        record(name, check::gradient_check(ps, [&](Tape& t) { return probe(t, op(t.leaf(a), t.leaf(b)), s); }));
    };
    binary("add", {3, 4}, {3, 4}, [](Var a, Var b) { return add(a, b); });
    binary("sub", {3, 4}, {3, 4}, [](Var a, Var b) { return sub(a, b); });
    binary("mul", {3, 4}, {3, 4}, [](Var a, Var b) { return mul(a, b); });
    binary("add_row", {2, 3, 4}, {4}, [](Var a, Var b) { return add_row(a, b); });
    binary("matmul", {3, 4}, {4, 5}, [](Var a, Var b) { return matmul(a, b); });
    binary("matmul batched", {2, 3, 4}, {2, 4, 5}, [](Var a, Var b) { return matmul(a, b); });
    binary("mse", {3, 4}, {3, 4}, [](Var a, Var b) { return mse(a, b); });
    binary("rmse", {3, 4}, {3, 4}, [](Var a, Var b) { return rmse(a, b); });
    unary("scale", {3, 4}, [](Var a) { return scale(a, -2.5); });
    unary("transpose", {2, 3, 4}, [](Var a) { return transpose(a); });
    unary("reshape", {2, 3, 4}, [](Var a) { return reshape(a, Shape{6, 4}); });
    unary("select_step", {2, 3, 4}, [](Var a) { return select_step(a, 1); });
    unary("mean_steps", {2, 3, 4}, [](Var a) { return mean_steps(a); });
    unary("relu", {3, 4}, [](Var a) { return relu(a); });
    unary("sqrt", {3, 4}, [](Var a) { return sqrt(a); }, true);
    unary("softmax", {2, 3, 4}, [](Var a) { return softmax(a); });
    unary("sum", {3, 4}, [](Var a) { return sum(a); });
    unary("mean", {3, 4}, [](Var a) { return mean(a); });
    {
        ParameterSet ps;
        auto& x = ps.add("x", random_tensor(rng, Shape{3, 6}, -2, 2));
        auto& g = ps.add("gain", random_tensor(rng, Shape{6}, 0.5, 1.5));
        auto& b = ps.add("shift", random_tensor(rng, Shape{6}, -1, 1));
        record("layer_norm", check::gradient_check(ps, [&](Tape& t) {
                   return probe(t, layer_norm(t.leaf(x), t.leaf(g), t.leaf(b)), 999);
               }));
    }
    ForecastConfig cfg;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.ff = 16;
    cfg.layers = 2;
    cfg.linear_skip = true;
    cfg.seed = 3;
    Forecaster model(5, 3, cfg);
    for (std::size_t p = 0; p < model.parameters().size(); ++p)
        for (auto& v : model.parameters()[p].value.data) v += rng.uniform(-0.1, 0.1);
    const auto x = random_tensor(rng, Shape{4, 5, 3}, -2, 2);
    const auto y = random_tensor(rng, Shape{4, 1}, -1, 1);
    record("forecaster", check::gradient_check(model.parameters(), [&](Tape& t) {
               return rmse(model.forward(t, t.constant(x)), t.constant(y));
           }));
    std::ostringstream s;
    s << "max relative error " << worst << " (" << where << ")";
    return {worst < 1e-3, s.str()};
}

Outcome meso_oracle() {
    Rng rng(3);
    double worst = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto x = oracle::random_instance(rng, 3, 5, 4);
        const auto expect = oracle::brute_force(x);
        const auto got = oracle::run_library(x);
        worst = std::max({worst, oracle::max_abs_diff(got.raw, expect.raw),
                          oracle::max_abs_diff(got.standardized, expect.standardized),
                          oracle::max_abs_diff(got.bond, expect.bond)});
    }
    std::ostringstream s;
    s << "500 instances, max abs diff " << worst;
    return {worst <= 1e-12, s.str()};
}

Outcome table_deltas() {
    EvalReport base, sent;
    base.mae = 8.9683;
    base.mape = 8.0033;
    sent.mae = 8.6765;
    sent.mape = 7.1257;
    const auto d = delta_report(base, sent);
    std::ostringstream s;
    s.precision(6);
    s << "dMAE " << d.delta_mae_pct << "%, dMAPE " << d.delta_mape_pct << "%";
    return {std::abs(d.delta_mae_pct - 3.2539) <= 1e-3 && std::abs(d.delta_mape_pct - 10.9658) <= 1e-3, s.str()};
}

struct SeedRun {
    double delta_mae = 0, p = 1, smoothed_mae = 0, raw_mae = 0;
};

SeedRun backtest_seed(std::uint64_t seed, double effect, bool with_raw) {
    SynthConfig sc;
    sc.seed = seed;
    sc.effect_size = effect;
    const auto data = generate(sc);
    const auto in = inputs_from_synth(data);
    SentimentConfig scfg;
    scfg.absa.seed = seed;
    const auto s = run_sentiment(in, scfg);
    std::vector<std::string> names{"smoothed"};
    if (with_raw) names.push_back("raw");
    const auto variants =
        sentiment_variants(names, s.alpha, s.meso.standardized.matrix, in.panels, WaveletSpec{}, true);
    BacktestConfig bc;
    bc.split_seed = seed;
    bc.permutation.seed = seed;
    auto& f = bc.forecast;
    f.d_model = 16;
    f.heads = 2;
    f.ff = 32;
    f.layers = 1;
    f.epochs = 16;
    f.lr = 1e-3;
    f.schedule = LrSchedule::linear;
    f.linear_skip = true;
    f.seed = seed;
    bc.validation_loss = false;
    const auto r = run_backtest(in.panels, in.calendar, variants, bc);
    const auto& sm = r.variant("smoothed");
    SeedRun out{sm.report.delta_mae_pct, sm.report.p_value, sm.report.mae, 0.0};
    if (with_raw) out.raw_mae = r.variant("raw").report.mae;
    return out;
}

Outcome absa_clusters() {
    const std::size_t d = 32;
    Rng rng(7);
    // one centre per polarity class; items are noisy draws around it
    std::vector<std::vector<double>> centres;
    for (int c = 0; c < 3; ++c) centres.push_back(normal_vec(rng, d));
    const auto draw = [&](std::size_t n) {
        std::vector<LabeledItem> items;
        std::vector<int> truth;
        for (std::size_t i = 0; i < n; ++i) {
            const int c = int(i % 3);
            const auto jitter = [&] {
                auto v = centres[std::size_t(c)];
                for (auto& x : v) x += rng.normal(0.0, 0.5);
                return v;
            };
            const auto cls = jitter();
            std::vector<std::vector<double>> tokens;
            for (int k = 0; k < 4; ++k) tokens.push_back(jitter());
            LabeledItem it;
            it.pooled = mean_max_pool(cls, tokens);
            it.label = SoftLabel{c == 0 ? 1.0 : 0.0, c == 1 ? 1.0 : 0.0, c == 2 ? 1.0 : 0.0};
            items.push_back(std::move(it));
            truth.push_back(c - 1);
        }
        return std::pair{items, truth};
    };
    const auto [train, train_truth] = draw(300);
    const auto [held, held_truth] = draw(300);
    AbsaConfig cfg;  // defaults are the published hyperparameters
    const auto head = train_head(train, cfg);
    std::vector<int> pred;
    for (const auto& it : held) pred.push_back(int(score_text(head, it.pooled)));
    const auto r = precision(pred, held_truth);
    std::ostringstream s;
    s << "held-out precision " << r.precision << " after " << cfg.epochs << " epochs";
    return {r.precision >= 0.95, s.str()};
}

Outcome retrieval_oracle() {
    Rng rng(8);
    const std::size_t d = 16;
    VectorStore store(d);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 1000; ++i) {
        rows.push_back(normal_vec(rng, d));
        store.add("v" + std::to_string(i), rows.back());
    }
    int mismatches = 0;
    for (int q = 0; q < 100; ++q) {
        const auto query = normal_vec(rng, d);
        std::vector<long double> sims;
        for (const auto& r : rows) {
            long double dot = 0, rr = 0, qq = 0;
            for (std::size_t j = 0; j < d; ++j) {
                dot += (long double)r[j] * query[j];
                rr += (long double)r[j] * r[j];
                qq += (long double)query[j] * query[j];
            }
            sims.push_back(dot / std::sqrt(rr * qq));
        }
        std::vector<std::size_t> idx(rows.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return sims[a] > sims[b]; });
        const auto got = store.top_k(query, 5);
        for (std::size_t i = 0; i < 5; ++i)
            if (i >= got.size() || got[i].topic_id != "v" + std::to_string(idx[i])) {
                ++mismatches;
                break;
            }
    }
    return {mismatches == 0, std::to_string(mismatches) + " of 100 queries differ"};
}

Outcome permutation_calibration() {
    Rng rng(9);
    int rejections = 0;
    for (int t = 0; t < 200; ++t) {
        std::vector<double> a(60), b(60);
        for (auto& v : a) v = std::abs(rng.normal());
        for (auto& v : b) v = std::abs(rng.normal());
        if (permutation_test(a, b, {1000, std::uint64_t(t)}) < 0.05) ++rejections;
    }
    const double rate = rejections / 200.0;
    return {rate >= 0.01 && rate <= 0.10, "rejection rate " + std::to_string(rate)};
}

int failures = 0;

void report(int id, const char* name, double limit_s, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o = {false, std::string("threw: ") + e.what()};
    }
    const double t = seconds_since(t0);
    const bool in_time = limit_s <= 0 || t < limit_s;
    const bool ok = o.pass && in_time;
    if (!ok) ++failures;
    std::printf("%s criterion %d: %s; %s; %.1f s%s\n", ok ? "PASS" : "FAIL", id, name, o.detail.c_str(), t,
                in_time ? "" : " (over time limit)");
    std::fflush(stdout);
}

}  // namespace

int main() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
    report(1, "wavelet round trip", 5, wavelet_round_trip);
    report(2, "gradient fidelity", 60, gradient_fidelity);
    report(3, "meso oracle", 0, meso_oracle);
    report(4, "table deltas", 0, table_deltas);

    std::vector<SeedRun> effect;
    report(5, "end-to-end sentiment effect", 600, [&] {
        std::ostringstream s;
        int wins = 0, null_hits = 0;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            effect.push_back(backtest_seed(seed, SynthConfig{}.noise_std * 3, true));
            const auto& r = effect.back();
            wins += r.delta_mae > 0 && r.p < 0.05;
            s << "seed " << seed << " dMAE " << r.delta_mae << "% p " << r.p << "; ";
        }
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto r = backtest_seed(seed, 0.0, false);
            null_hits += r.p < 0.05;
            s << "null " << seed << " p " << r.p << "; ";
        }
        s << wins << "/5 effect, " << null_hits << "/5 null";
        return Outcome{wins >= 4 && null_hits <= 1, s.str()};
    });
    report(6, "smoothing ablation", 0, [&] {
        if (effect.size() != 5) return Outcome{false, "effect runs unavailable"};
        int wins = 0;
        std::ostringstream s;
        for (const auto& r : effect) {
            wins += r.smoothed_mae < r.raw_mae;
            s << r.smoothed_mae << " vs " << r.raw_mae << "; ";
        }
        s << wins << "/5 smoothed better";
        return Outcome{wins >= 4, s.str()};
    });
    report(7, "ABSA head on separable clusters", 0, absa_clusters);
    report(8, "retrieval oracle", 0, retrieval_oracle);
    report(9, "permutation calibration", 0, permutation_calibration);
    return failures == 0 ? 0 : 1;
}
