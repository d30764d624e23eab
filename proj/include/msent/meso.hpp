#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "msent/corpus.hpp"
#include "msent/error.hpp"
#include "msent/io.hpp"
#include "msent/matrix.hpp"
#include "msent/vecstore.hpp"

namespace msent {

/// Boolean industries x topics relation.
class KnowledgeGraph {
public:
    KnowledgeGraph() = default;

    KnowledgeGraph(std::vector<std::string> industries, std::vector<std::string> topics)
        : industries_(std::move(industries)), topics_(std::move(topics)),
          g_(industries_.size() * topics_.size(), 0) {
        for (std::size_t i = 0; i < industries_.size(); ++i)
            require(industry_index_.emplace(industries_[i], i).second, ErrorKind::duplicate,
                    "duplicate industry '" + industries_[i] + "'");
        for (std::size_t n = 0; n < topics_.size(); ++n)
            require(topic_index_.emplace(topics_[n], n).second, ErrorKind::duplicate,
                    "duplicate topic '" + topics_[n] + "'");
    }

    [[nodiscard]] std::size_t industry_count() const noexcept { return industries_.size(); }
    [[nodiscard]] std::size_t topic_count() const noexcept { return topics_.size(); }
    [[nodiscard]] const std::vector<std::string>& industries() const noexcept { return industries_; }
    [[nodiscard]] const std::vector<std::string>& topics() const noexcept { return topics_; }

    [[nodiscard]] std::size_t industry(const std::string& name) const {
        const auto it = industry_index_.find(name);
        require(it != industry_index_.end(), ErrorKind::unknown_id, "unknown industry '" + name + "'");
        return it->second;
    }

    [[nodiscard]] std::size_t topic(const std::string& name) const {
        const auto it = topic_index_.find(name);
        require(it != topic_index_.end(), ErrorKind::unknown_id, "unknown topic '" + name + "'");
        return it->second;
    }

    [[nodiscard]] bool has_industry(const std::string& name) const {
        return industry_index_.contains(name);
    }

    [[nodiscard]] bool edge(std::size_t m, std::size_t n) const {
        return g_[m * topics_.size() + n] != 0;
    }
    [[nodiscard]] bool edge(const std::string& industry_name, const std::string& topic_name) const {
        return edge(industry(industry_name), topic(topic_name));
    }

    void set(std::size_t m, std::size_t n, bool value) {
        require(m < industry_count() && n < topic_count(), ErrorKind::out_of_range,
                "graph cell out of range");
        g_[m * topics_.size() + n] = value ? 1 : 0;
    }

private:
    std::vector<std::string> industries_;
    std::vector<std::string> topics_;
    std::vector<std::uint8_t> g_;
    std::unordered_map<std::string, std::size_t> industry_index_;
    std::unordered_map<std::string, std::size_t> topic_index_;
};

struct GraphShape {
    std::size_t industries = 40;
    std::size_t topics = 117;
};

/// Graph CSV: header `<label>,<topic>...`, then `<industry>,0|1,...` rows.
inline KnowledgeGraph load_graph(std::istream& in, std::optional<GraphShape> expected = std::nullopt) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::schema, "graph CSV is empty");
    auto header = io::parse_csv_row(line);
    require(header.size() >= 2, ErrorKind::schema, "graph CSV header needs at least one topic");
    std::vector<std::string> topics(header.begin() + 1, header.end());
    std::vector<std::string> industries;
    std::vector<std::vector<bool>> cells;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        const std::string where = "graph CSV line " + std::to_string(line_no);
        auto fields = io::parse_csv_row(line);
        require(fields.size() == header.size(), ErrorKind::schema,
                where + ": expected " + std::to_string(header.size()) + " fields");
        industries.push_back(fields[0]);
        std::vector<bool> row;
        for (std::size_t n = 1; n < fields.size(); ++n) {
            const auto cell = io::trim(fields[n]);
            require(cell == "0" || cell == "1", ErrorKind::schema,
                    where + ": cell for topic '" + topics[n - 1] + "' is not 0 or 1");
            row.push_back(cell == "1");
        }
        cells.push_back(std::move(row));
    }
    if (expected) {
        require(industries.size() == expected->industries && topics.size() == expected->topics,
                ErrorKind::dimension_mismatch,
                "graph is " + std::to_string(industries.size()) + "x" + std::to_string(topics.size()) +
                    ", expected " + std::to_string(expected->industries) + "x" +
                    std::to_string(expected->topics));
    }
    KnowledgeGraph g(std::move(industries), std::move(topics));
    for (std::size_t m = 0; m < cells.size(); ++m)
        for (std::size_t n = 0; n < cells[m].size(); ++n) g.set(m, n, cells[m][n]);
    return g;
}

inline KnowledgeGraph load_graph(const std::filesystem::path& path,
                                 std::optional<GraphShape> expected = std::nullopt) {
    auto in = io::open_input(path);
    try {
        return load_graph(in, expected);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

inline void write_graph(std::ostream& out, const KnowledgeGraph& g) {
    out << "industry";
    for (const auto& t : g.topics()) out << ',' << io::csv_escape(t);
    out << '\n';
    for (std::size_t m = 0; m < g.industry_count(); ++m) {
        out << io::csv_escape(g.industries()[m]);
        for (std::size_t n = 0; n < g.topic_count(); ++n) out << ',' << (g.edge(m, n) ? '1' : '0');
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Topic recall and industry-day accumulation

struct TopicIncrement {
    std::string text_id;
    Day date{};
    std::string topic_id;
    double similarity = 0.0;
    int polarity = 0;
};

/// Recalls the k nearest topics of one text; polarity 0 still yields increments.
inline std::vector<TopicIncrement> map_text(const std::string& text_id, Day date, int polarity,
                                            std::span<const double> embedding,
                                            const VectorStore& topics, std::size_t k = 5) {
    require(polarity >= -1 && polarity <= 1, ErrorKind::invalid_argument,
            "text '" + text_id + "' has polarity outside {-1,0,1}");
    std::vector<TopicIncrement> out;
    for (const auto& match : topics.top_k(embedding, k)) {
        out.push_back({text_id, date, match.topic_id, match.similarity, polarity});
    }
    return out;
}

/// Sum over texts and recalled topics of c * s * g for industry `m`.
inline double industry_day(const KnowledgeGraph& graph, std::span<const TopicIncrement> increments,
                           std::size_t m) {
    require(m < graph.industry_count(), ErrorKind::unknown_id, "unknown industry index");
    double s = 0.0;
    for (const auto& inc : increments) {
        if (graph.edge(m, graph.topic(inc.topic_id))) s += inc.similarity * double(inc.polarity);
    }
    return s;
}

inline SentimentMatrix build_beta_matrix(const KnowledgeGraph& graph,
                                         const std::vector<TopicIncrement>& increments,
                                         const Calendar& calendar) {
    SentimentMatrix beta(Axis::beta, graph.industries(), calendar);
    for (const auto& inc : increments) {
        const std::size_t k = calendar.index(inc.date);
        const std::size_t n = graph.topic(inc.topic_id);
        const double contribution = inc.similarity * double(inc.polarity);
        for (std::size_t m = 0; m < graph.industry_count(); ++m) {
            if (graph.edge(m, n)) beta.at(m, k) += contribution;
        }
    }
    return beta;
}

enum class ZScoreAxis { per_industry, global };

inline ZScoreAxis parse_zscore_axis(std::string_view s) {
    if (s == "per_industry") return ZScoreAxis::per_industry;
    if (s == "global") return ZScoreAxis::global;
    fail(ErrorKind::config, "unknown z-score axis '" + std::string(s) + "'");
}

struct StandardizedBeta {
    SentimentMatrix matrix;
    std::vector<std::string> zero_variance;
};

namespace detail {

inline bool zscore_in_place(std::span<double> values) {
    if (values.empty()) return false;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= double(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= double(values.size());
    if (!(var > 0.0)) {
        std::fill(values.begin(), values.end(), 0.0);
        return false;
    }
    const double sd = std::sqrt(var);
    for (double& v : values) v = (v - mean) / sd;
    return true;
}

}  // namespace detail

/// Full-sample z-score with population variance; degenerate rows become zeros and are reported.
inline StandardizedBeta standardize_beta(const SentimentMatrix& beta,
                                         ZScoreAxis axis = ZScoreAxis::per_industry) {
    StandardizedBeta out{beta, {}};
    if (axis == ZScoreAxis::global) {
        std::vector<double> all(beta.values());
        if (!detail::zscore_in_place(all)) {
            out.zero_variance.emplace_back("<all industries>");
        }
        for (std::size_t r = 0; r < beta.rows(); ++r)
            for (std::size_t k = 0; k < beta.days(); ++k)
                out.matrix.at(r, k) = all[r * beta.days() + k];
        return out;
    }
    for (std::size_t r = 0; r < beta.rows(); ++r) {
        if (!detail::zscore_in_place(out.matrix.row(r))) {
            out.zero_variance.push_back(beta.entities()[r]);
        }
    }
    return out;
}

/// Mean of the bond's industry cells on day k.
inline double bond_meso(const std::vector<std::string>& industry_ids, const SentimentMatrix& beta,
                        std::size_t k) {
    require(!industry_ids.empty(), ErrorKind::invalid_argument, "bond has no industry mapping");
    double s = 0.0;
    for (const auto& ind : industry_ids) s += beta.at(beta.index_of(ind), k);
    return s / double(industry_ids.size());
}

inline std::vector<double> bond_meso_series(const std::vector<std::string>& industry_ids,
                                            const SentimentMatrix& beta) {
    require(!industry_ids.empty(), ErrorKind::invalid_argument, "bond has no industry mapping");
    std::vector<std::size_t> rows;
    for (const auto& ind : industry_ids) rows.push_back(beta.index_of(ind));
    std::vector<double> out(beta.days(), 0.0);
    for (std::size_t k = 0; k < beta.days(); ++k) {
        double s = 0.0;
        for (std::size_t r : rows) s += beta.at(r, k);
        out[k] = s / double(rows.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Topic polarity input

struct TopicPolarity {
    std::string text_id;
    Day date{};
    int polarity = 0;
};

/// Topic polarities JSONL: `{"text_id", "date", "polarity": -1|0|1}`.
inline std::vector<TopicPolarity> read_topic_polarities(std::istream& in,
                                                        const Calendar* calendar = nullptr) {
    std::vector<TopicPolarity> out;
    std::unordered_map<std::string, bool> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        const std::string where = "topic polarities line " + std::to_string(line_no);
        TopicPolarity p;
        try {
            const auto obj = nlohmann::json::parse(line);
            p.text_id = obj.at("text_id").get<std::string>();
            p.date = parse_day(obj.at("date").get<std::string>());
            const auto& pol = obj.at("polarity");
            require(pol.is_number_integer(), ErrorKind::schema, where + ": polarity must be an integer");
            p.polarity = pol.get<int>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::schema, where + ": " + e.what());
        }
        require(p.polarity >= -1 && p.polarity <= 1, ErrorKind::schema,
                where + ": polarity must be -1, 0 or 1");
        require(seen.emplace(p.text_id, true).second, ErrorKind::duplicate,
                where + ": duplicate text_id '" + p.text_id + "'");
        if (calendar) {
            require(calendar->contains(p.date), ErrorKind::out_of_range,
                    where + ": date outside calendar");
        }
        out.push_back(std::move(p));
    }
    return out;
}

inline void write_topic_polarity(std::ostream& out, const TopicPolarity& p) {
    out << nlohmann::json{{"text_id", p.text_id}, {"date", format_day(p.date)}, {"polarity", p.polarity}}
               .dump()
        << '\n';
}

struct MesoScoring {
    SentimentMatrix raw;
    StandardizedBeta standardized;
    std::size_t texts_used = 0;
};

/// Recall, accumulate and standardize the industry sentiment matrix.
inline MesoScoring score_meso(const KnowledgeGraph& graph, const VectorStore& topic_store,
                              const VectorStore& text_store,
                              const std::vector<TopicPolarity>& polarities, const Calendar& calendar,
                              std::size_t k = 5, ZScoreAxis axis = ZScoreAxis::per_industry) {
    for (const auto& key : topic_store.keys()) static_cast<void>(graph.topic(key));
    std::vector<TopicIncrement> increments;
    for (const auto& p : polarities) {
        const auto inc = map_text(p.text_id, p.date, p.polarity, text_store.vector(p.text_id),
                                  topic_store, k);
        increments.insert(increments.end(), inc.begin(), inc.end());
    }
    auto raw = build_beta_matrix(graph, increments, calendar);
    auto standardized = standardize_beta(raw, axis);
    return {std::move(raw), std::move(standardized), polarities.size()};
}

}  // namespace msent
