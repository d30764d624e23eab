#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <istream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "msent/autodiff.hpp"
#include "msent/corpus.hpp"
#include "msent/error.hpp"
#include "msent/io.hpp"
#include "msent/matrix.hpp"
#include "msent/rng.hpp"

namespace msent {

struct TokenFeatureSet {
    std::string text_id;
    std::vector<double> cls;
    std::map<std::string, std::vector<std::vector<double>>> bond_tokens;

    [[nodiscard]] std::size_t dim() const noexcept { return cls.size(); }
};

/// [cls ; mean(tokens) ; max(tokens)], length 3d.
inline std::vector<double> mean_max_pool(std::span<const double> cls,
                                         const std::vector<std::vector<double>>& tokens) {
    require(!tokens.empty(), ErrorKind::empty_input, "mean_max_pool: empty token list");
    const std::size_t d = cls.size();
    std::vector<double> out(3 * d, 0.0);
    std::copy(cls.begin(), cls.end(), out.begin());
    for (std::size_t j = 0; j < d; ++j) out[2 * d + j] = -std::numeric_limits<double>::infinity();
    for (const auto& t : tokens) {
        if (t.size() != d)
            fail(ErrorKind::dimension_mismatch, "mean_max_pool: token of dimension " + std::to_string(t.size()) +
                                                    ", expected " + std::to_string(d));
        for (std::size_t j = 0; j < d; ++j) {
            out[d + j] += t[j];
            out[2 * d + j] = std::max(out[2 * d + j], t[j]);
        }
    }
    for (std::size_t j = 0; j < d; ++j) out[d + j] /= double(tokens.size());
    return out;
}

/// Token-features JSONL: `{"text_id", "cls": [...], "bonds": {"<bond>": [[...], ...]}}`.
inline std::vector<TokenFeatureSet> read_token_features(std::istream& in,
                                                        const TextCollection* texts = nullptr) {
    std::vector<TokenFeatureSet> out;
    std::unordered_map<std::string, bool> seen;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        const std::string where = "token features line " + std::to_string(line_no);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::schema, where + ": invalid JSON (" + e.what() + ")");
        }
        TokenFeatureSet f;
        try {
            f.text_id = obj.at("text_id").get<std::string>();
            f.cls = obj.at("cls").get<std::vector<double>>();
            for (const auto& [bond, tokens] : obj.at("bonds").items()) {
                f.bond_tokens[bond] = tokens.get<std::vector<std::vector<double>>>();
            }
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::schema, where + ": " + e.what());
        }
        require(seen.emplace(f.text_id, true).second, ErrorKind::duplicate,
                where + ": duplicate text_id '" + f.text_id + "'");
        require(!f.cls.empty(), ErrorKind::schema, where + ": empty cls vector");
        if (dim == 0) dim = f.cls.size();
        require(f.cls.size() == dim, ErrorKind::dimension_mismatch,
                where + ": cls dimension " + std::to_string(f.cls.size()) + ", expected " +
                    std::to_string(dim));
        const TextRecord* record = texts ? texts->find(f.text_id) : nullptr;
        if (texts) {
            require(record != nullptr, ErrorKind::unknown_id,
                    where + ": text_id '" + f.text_id + "' not in the text collection");
        }
        for (const auto& [bond, tokens] : f.bond_tokens) {
            require(!tokens.empty(), ErrorKind::schema, where + ": bond " + bond + " has no tokens");
            for (const auto& t : tokens) {
                if (t.size() != dim) fail(ErrorKind::dimension_mismatch, where + ": token dimension mismatch for bond " + bond);
            }
            if (record) {
                const auto& mb = record->mentioned_bonds;
                require(std::find(mb.begin(), mb.end(), bond) != mb.end(), ErrorKind::schema,
                        where + ": bond " + bond + " is not mentioned by the text");
            }
        }
        out.push_back(std::move(f));
    }
    return out;
}

inline std::vector<TokenFeatureSet> read_token_features(const std::filesystem::path& path,
                                                        const TextCollection* texts = nullptr) {
    auto in = io::open_input(path);
    try {
        return read_token_features(in, texts);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Head

enum class ScoreMode { argmax, expected_value };

inline ScoreMode parse_score_mode(std::string_view s) {
    if (s == "argmax") return ScoreMode::argmax;
    if (s == "expected_value") return ScoreMode::expected_value;
    fail(ErrorKind::config, "unknown score mode '" + std::string(s) + "'");
}

/// Polarity of the most probable class; any tie involving the maximum resolves to neutral.
inline int argmax_polarity(const std::array<double, 3>& p) {
    for (double x : p) require(std::isfinite(x), ErrorKind::non_finite, "non-finite head output");
    const double best = std::max({p[0], p[1], p[2]});
    const int count = int(p[0] == best) + int(p[1] == best) + int(p[2] == best);
    if (count > 1 || p[1] == best) return 0;
    return p[0] == best ? -1 : 1;
}

struct AbsaConfig {
    std::size_t hidden = 256;
    double lr = 1e-4;
    double weight_decay = 1e-7;
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    std::uint64_t seed = 0;
};

struct LabeledItem {
    std::vector<double> pooled;
    SoftLabel label;
};

class AbsaHead {
public:
    AbsaHead() = default;

    AbsaHead(std::size_t input_dim, std::size_t hidden, std::uint64_t seed)
        : input_dim_(input_dim), hidden_(hidden) {
        require(input_dim > 0 && input_dim % 3 == 0, ErrorKind::invalid_argument,
                "ABSA head input must be 3d for some d > 0");
        require(hidden > 0, ErrorKind::invalid_argument, "ABSA hidden width must be positive");
        Rng rng(seed);
        params_.add("w1", ad::glorot_uniform(input_dim, hidden, rng));
        params_.add("b1", ad::Tensor(ad::Shape{hidden}));
        params_.add("w2", ad::glorot_uniform(hidden, 3, rng));
        params_.add("b2", ad::Tensor(ad::Shape{3}));
    }

    [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
    [[nodiscard]] std::size_t hidden() const noexcept { return hidden_; }
    ad::ParameterSet& parameters() { return params_; }
    [[nodiscard]] const ad::ParameterSet& parameters() const { return params_; }
    [[nodiscard]] const std::vector<double>& loss_history() const noexcept { return losses_; }
    std::vector<double>& loss_history() { return losses_; }

    /// Probability rows for a [B, 3d] batch, recorded on `tape`.
    ad::Var forward(ad::Tape& tape, ad::Var x) {
        if (x.shape().size() != 2 || x.shape()[1] != input_dim_)
            fail(ErrorKind::dimension_mismatch, "ABSA head expects [B, " + std::to_string(input_dim_) +
                                                    "] input, got " + ad::shape_string(x.shape()));
        auto h = ad::relu(ad::add_row(ad::matmul(x, tape.leaf(params_[0])), tape.leaf(params_[1])));
        auto logits = ad::add_row(ad::matmul(h, tape.leaf(params_[2])), tape.leaf(params_[3]));
        return ad::softmax(logits);
    }

    [[nodiscard]] std::array<double, 3> probabilities(std::span<const double> pooled) const {
        if (pooled.size() != input_dim_)
            fail(ErrorKind::dimension_mismatch, "pooled vector of length " + std::to_string(pooled.size()) +
                                                    ", head expects " + std::to_string(input_dim_));
        const auto& w1 = params_[0].value;
        const auto& b1 = params_[1].value;
        const auto& w2 = params_[2].value;
        const auto& b2 = params_[3].value;
        std::vector<double> h(b1.data);
        for (std::size_t i = 0; i < input_dim_; ++i) {
            const double x = pooled[i];
            if (x == 0.0) continue;
            for (std::size_t j = 0; j < hidden_; ++j) h[j] += x * w1[i * hidden_ + j];
        }
        std::array<double, 3> z{b2[0], b2[1], b2[2]};
        for (std::size_t j = 0; j < hidden_; ++j) {
            if (h[j] <= 0.0) continue;
            for (std::size_t c = 0; c < 3; ++c) z[c] += h[j] * w2[j * 3 + c];
        }
        const double mx = std::max({z[0], z[1], z[2]});
        double s = 0.0;
        for (auto& v : z) {
            v = std::exp(v - mx);
            s += v;
        }
        for (auto& v : z) v /= s;
        return z;
    }

    [[nodiscard]] nlohmann::json to_json() const {
        auto j = params_.to_json();
        j["kind"] = "absa_head";
        j["input_dim"] = input_dim_;
        j["hidden"] = hidden_;
        j["loss_history"] = losses_;
        return j;
    }

    static AbsaHead from_json(const nlohmann::json& j) {
        require(j.value("kind", "") == "absa_head", ErrorKind::schema, "not an ABSA head manifest");
        AbsaHead head(j.at("input_dim").get<std::size_t>(), j.at("hidden").get<std::size_t>(), 0);
        head.params_.load_json(j);
        head.losses_ = j.value("loss_history", std::vector<double>{});
        return head;
    }

private:
    std::size_t input_dim_ = 0;
    std::size_t hidden_ = 0;
    ad::ParameterSet params_;
    std::vector<double> losses_;
};

inline double score_text(const AbsaHead& head, std::span<const double> pooled,
                         ScoreMode mode = ScoreMode::argmax) {
    const auto p = head.probabilities(pooled);
    if (mode == ScoreMode::expected_value) {
        for (double x : p) require(std::isfinite(x), ErrorKind::non_finite, "non-finite head output");
        return p[2] - p[0];
    }
    return argmax_polarity(p);
}

/// Minibatch Adam on the soft-label MSE. Records the mean batch loss per epoch.
inline AbsaHead train_head(const std::vector<LabeledItem>& items, const AbsaConfig& cfg) {
    require(!items.empty(), ErrorKind::empty_input, "train_head: empty training set");
    require(cfg.batch_size >= 1 && cfg.epochs >= 1, ErrorKind::invalid_argument,
            "train_head: batch size and epochs must be positive");
    const std::size_t in_dim = items.front().pooled.size();
    for (const auto& it : items) {
        require(it.pooled.size() == in_dim, ErrorKind::dimension_mismatch,
                "train_head: inconsistent pooled dimensions");
        require(it.label.valid(), ErrorKind::schema, "train_head: invalid soft label");
    }
    AbsaHead head(in_dim, cfg.hidden, cfg.seed);
    ad::Adam opt(head.parameters(), ad::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng rng(cfg.seed, 1);
    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t b = std::min(cfg.batch_size, order.size() - start);
            ad::Tensor x(ad::Shape{b, in_dim});
            ad::Tensor y(ad::Shape{b, 3});
            for (std::size_t r = 0; r < b; ++r) {
                const auto& item = items[order[start + r]];
                std::copy(item.pooled.begin(), item.pooled.end(), x.data.begin() + r * in_dim);
                const auto l = item.label.as_array();
                std::copy(l.begin(), l.end(), y.data.begin() + r * 3);
            }
            ad::Tape tape;
            head.parameters().zero_grad();
            auto loss = ad::mse(head.forward(tape, tape.constant(std::move(x))),
                                tape.constant(std::move(y)));
            require(std::isfinite(loss.value()[0]), ErrorKind::non_finite,
                    "train_head: non-finite loss in epoch " + std::to_string(epoch));
            tape.backward(loss);
            opt.step(head.parameters());
            total += loss.value()[0];
            ++batches;
        }
        head.loss_history().push_back(total / double(batches));
    }
    return head;
}

// ---------------------------------------------------------------------------
// Daily aggregation

struct PerTextScore {
    std::string text_id;
    std::string target_id;
    Day date{};
    double value = 0.0;
};

/// Mean of the day's text scores for one bond; zero when there are none.
inline double daily_micro(std::span<const PerTextScore> scores) {
    if (scores.empty()) return 0.0;
    double s = 0.0;
    for (const auto& x : scores) s += x.value;
    return s / double(scores.size());
}

inline SentimentMatrix build_alpha_matrix(const std::vector<PerTextScore>& scores,
                                          const std::vector<std::string>& bonds,
                                          const Calendar& calendar) {
    SentimentMatrix m(Axis::alpha, bonds, calendar);
    std::vector<double> sums(m.rows() * m.days(), 0.0);
    std::vector<std::size_t> counts(sums.size(), 0);
    for (const auto& s : scores) {
        const std::size_t r = m.index_of(s.target_id);
        const std::size_t k = calendar.index(s.date);
        require(std::isfinite(s.value), ErrorKind::non_finite, "non-finite score for " + s.text_id);
        sums[r * m.days() + k] += s.value;
        counts[r * m.days() + k] += 1;
    }
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t k = 0; k < m.days(); ++k)
            if (counts[r * m.days() + k] > 0)
                m.at(r, k) = sums[r * m.days() + k] / double(counts[r * m.days() + k]);
    return m;
}

struct MicroScoring {
    std::vector<PerTextScore> scores;
    std::size_t skipped_mentions = 0;
};

/// Scores every (text, bond) pair that has token features.
inline MicroScoring score_micro(const AbsaHead& head, const TextCollection& texts,
                               const std::vector<TokenFeatureSet>& features, ScoreMode mode) {
    std::unordered_map<std::string, const TokenFeatureSet*> by_id;
    for (const auto& f : features) by_id[f.text_id] = &f;
    MicroScoring out;
    for (const auto& text : texts) {
        const auto it = by_id.find(text.text_id);
        if (it == by_id.end()) {
            out.skipped_mentions += text.mentioned_bonds.size();
            continue;
        }
        const TokenFeatureSet& f = *it->second;
        for (const auto& bond : text.mentioned_bonds) {
            const auto tokens = f.bond_tokens.find(bond);
            if (tokens == f.bond_tokens.end()) {
                ++out.skipped_mentions;
                continue;
            }
            const auto pooled = mean_max_pool(f.cls, tokens->second);
            out.scores.push_back({text.text_id, bond, text.date, score_text(head, pooled, mode)});
        }
    }
    return out;
}

inline void write_scores_csv(std::ostream& out, const std::vector<PerTextScore>& scores) {
    out << "text_id,target_id,date,value\n";
    for (const auto& s : scores) {
        out << s.text_id << ',' << s.target_id << ',' << format_day(s.date) << ','
            << io::format_double(s.value) << '\n';
    }
}

inline std::vector<PerTextScore> read_scores_csv(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) &&
                io::trim(line) == "text_id,target_id,date,value",
            ErrorKind::schema, "scores CSV must start with 'text_id,target_id,date,value'");
    std::vector<PerTextScore> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = io::trim(line);
        if (trimmed.empty()) continue;
        const std::string where = "scores CSV line " + std::to_string(line_no);
        const auto f = io::split(trimmed, ',');
        require(f.size() == 4, ErrorKind::schema, where + ": expected 4 fields");
        out.push_back({std::string(f[0]), std::string(f[1]), parse_day(f[2]),
                       io::parse_double(f[3], where)});
    }
    return out;
}

}  // namespace msent
