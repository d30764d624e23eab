#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "msent/error.hpp"
#include "msent/io.hpp"

namespace msent {

inline double norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

inline double cosine(std::span<const double> u, std::span<const double> v) {
    require(u.size() == v.size(), ErrorKind::dimension_mismatch,
            "cosine: dimensions " + std::to_string(u.size()) + " and " + std::to_string(v.size()));
    double dot = 0.0;
    double uu = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u[i] * v[i];
        uu += u[i] * u[i];
        vv += v[i] * v[i];
    }
    require(uu > 0.0 && vv > 0.0, ErrorKind::invalid_argument, "cosine: zero vector");
    return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

struct TopicMatch {
    std::size_t index = 0;
    std::string topic_id;
    double similarity = 0.0;

    friend bool operator==(const TopicMatch&, const TopicMatch&) = default;
};

/// Fixed-dimension embedding table with exact cosine retrieval.
class VectorStore {
public:
    VectorStore() = default;
    explicit VectorStore(std::size_t dim) : dim_(dim) {
        require(dim > 0, ErrorKind::invalid_argument, "vector store dimension must be positive");
    }

    void add(std::string key, std::vector<double> vector) {
        require(vector.size() == dim_, ErrorKind::dimension_mismatch,
                "vector for '" + key + "' has dimension " + std::to_string(vector.size()) +
                    ", store expects " + std::to_string(dim_));
        for (double x : vector) {
            require(std::isfinite(x), ErrorKind::non_finite, "vector for '" + key + "' is not finite");
        }
        const double n = norm(vector);
        require(n > 0.0, ErrorKind::invalid_argument, "vector for '" + key + "' has zero norm");
        require(index_.emplace(key, keys_.size()).second, ErrorKind::duplicate,
                "duplicate embedding key '" + key + "'");
        keys_.push_back(std::move(key));
        norms_.push_back(n);
        data_.insert(data_.end(), vector.begin(), vector.end());
    }

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    [[nodiscard]] std::size_t size() const noexcept { return keys_.size(); }
    [[nodiscard]] bool empty() const noexcept { return keys_.empty(); }
    [[nodiscard]] const std::string& key(std::size_t i) const { return keys_.at(i); }
    [[nodiscard]] const std::vector<std::string>& keys() const noexcept { return keys_; }

    [[nodiscard]] std::span<const double> vector(std::size_t i) const {
        require(i < size(), ErrorKind::out_of_range, "vector store index out of range");
        return {data_.data() + i * dim_, dim_};
    }

    [[nodiscard]] bool contains(const std::string& key) const { return index_.contains(key); }

    [[nodiscard]] std::span<const double> vector(const std::string& key) const {
        const auto it = index_.find(key);
        require(it != index_.end(), ErrorKind::unknown_id, "no embedding for '" + key + "'");
        return vector(it->second);
    }

    /// Similarity of `query` against every stored vector, in registry order.
    [[nodiscard]] std::vector<double> similarities(std::span<const double> query) const {
        require(query.size() == dim_, ErrorKind::dimension_mismatch,
                "query dimension " + std::to_string(query.size()) + ", store expects " +
                    std::to_string(dim_));
        const double qn = norm(query);
        require(qn > 0.0, ErrorKind::invalid_argument, "query vector has zero norm");
        std::vector<double> out(size());
        for (std::size_t i = 0; i < size(); ++i) {
            const double* row = data_.data() + i * dim_;
            double dot = 0.0;
            for (std::size_t j = 0; j < dim_; ++j) dot += row[j] * query[j];
            out[i] = std::clamp(dot / (norms_[i] * qn), -1.0, 1.0);
        }
        return out;
    }

    /// Descending similarity; equal similarities keep registry order.
    [[nodiscard]] std::vector<TopicMatch> top_k(std::span<const double> query, std::size_t k) const {
        require(k >= 1, ErrorKind::invalid_argument, "top_k: k must be at least 1");
        require(!empty(), ErrorKind::empty_input, "top_k: empty store");
        const auto sims = similarities(query);
        std::vector<std::size_t> order(size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        const auto take = std::min(k, order.size());
        const auto better = [&](std::size_t a, std::size_t b) {
            return sims[a] > sims[b] || (sims[a] == sims[b] && a < b);
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take),
                          order.end(), better);
        std::vector<TopicMatch> out;
        out.reserve(take);
        for (std::size_t i = 0; i < take; ++i) {
            out.push_back({order[i], keys_[order[i]], sims[order[i]]});
        }
        return out;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::string> keys_;
    std::vector<double> norms_;
    std::vector<double> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Embeddings JSONL: a `{"dim": d}` header, then `{"key": ..., "vector": [...]}` lines.
inline VectorStore read_embeddings(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::optional<VectorStore> store;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        const std::string where = "embeddings line " + std::to_string(line_no);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::schema, where + ": invalid JSON (" + e.what() + ")");
        }
        require(obj.is_object(), ErrorKind::schema, where + ": expected an object");
        if (!store) {
            const auto it = obj.find("dim");
            require(it != obj.end() && it->is_number_integer() && it->get<long>() > 0,
                    ErrorKind::schema, where + ": first line must be {\"dim\": positive int}");
            store.emplace(it->get<std::size_t>());
            continue;
        }
        const auto key = obj.find("key");
        const auto vec = obj.find("vector");
        require(key != obj.end() && key->is_string(), ErrorKind::schema, where + ": missing key");
        require(vec != obj.end() && vec->is_array(), ErrorKind::schema, where + ": missing vector");
        std::vector<double> values;
        values.reserve(vec->size());
        for (const auto& x : *vec) {
            require(x.is_number(), ErrorKind::schema, where + ": vector entries must be numbers");
            values.push_back(x.get<double>());
        }
        try {
            store->add(key->get<std::string>(), std::move(values));
        } catch (const Error& e) {
            fail(e.kind(), where + ": " + e.what());
        }
    }
    require(store.has_value(), ErrorKind::schema, "embeddings file has no {\"dim\": d} header");
    return std::move(*store);
}

inline VectorStore read_embeddings(const std::filesystem::path& path) {
    auto in = io::open_input(path);
    try {
        return read_embeddings(in);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

inline void write_embeddings(std::ostream& out, const VectorStore& store) {
    out << nlohmann::json{{"dim", store.dim()}}.dump() << '\n';
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto v = store.vector(i);
        out << nlohmann::json{{"key", store.key(i)},
                              {"vector", std::vector<double>(v.begin(), v.end())}}
                   .dump()
            << '\n';
    }
}

}  // namespace msent
