#pragma once

#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "msent/corpus.hpp"
#include "msent/error.hpp"
#include "msent/io.hpp"

namespace msent {

enum class Axis { alpha, beta, composite };

inline std::string_view to_string(Axis axis) {
    switch (axis) {
        case Axis::alpha: return "alpha";
        case Axis::beta: return "beta";
        case Axis::composite: return "composite";
    }
    return "alpha";
}

/// Entity x day dense matrix (bonds for alpha/composite, industries for beta).
class SentimentMatrix {
public:
    SentimentMatrix() = default;

    SentimentMatrix(Axis axis, std::vector<std::string> entities, Calendar calendar)
        : axis_(axis), entities_(std::move(entities)), calendar_(calendar),
          data_(entities_.size() * calendar_.size(), 0.0) {
        for (std::size_t i = 0; i < entities_.size(); ++i) {
            require(index_.emplace(entities_[i], i).second, ErrorKind::duplicate,
                    "duplicate entity '" + entities_[i] + "' in sentiment matrix");
        }
    }

    [[nodiscard]] Axis axis() const noexcept { return axis_; }
    [[nodiscard]] const std::vector<std::string>& entities() const noexcept { return entities_; }
    [[nodiscard]] const Calendar& calendar() const noexcept { return calendar_; }
    [[nodiscard]] std::size_t rows() const noexcept { return entities_.size(); }
    [[nodiscard]] std::size_t days() const noexcept { return calendar_.size(); }

    [[nodiscard]] bool contains(const std::string& entity) const { return index_.contains(entity); }

    [[nodiscard]] std::size_t index_of(const std::string& entity) const {
        const auto it = index_.find(entity);
        require(it != index_.end(), ErrorKind::unknown_id,
                "unknown " + std::string(to_string(axis_)) + " entity '" + entity + "'");
        return it->second;
    }

    double& at(std::size_t row, std::size_t day) { return data_[row * days() + day]; }
    [[nodiscard]] double at(std::size_t row, std::size_t day) const { return data_[row * days() + day]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * days(), days()}; }
    [[nodiscard]] std::span<const double> row(std::size_t r) const {
        return {data_.data() + r * days(), days()};
    }
    [[nodiscard]] std::span<const double> row(const std::string& entity) const {
        return row(index_of(entity));
    }

    [[nodiscard]] const std::vector<double>& values() const noexcept { return data_; }

    [[nodiscard]] bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const SentimentMatrix& a, const SentimentMatrix& b) {
        return a.axis_ == b.axis_ && a.entities_ == b.entities_ && a.calendar_ == b.calendar_ &&
               a.data_ == b.data_;
    }

private:
    Axis axis_ = Axis::alpha;
    std::vector<std::string> entities_;
    Calendar calendar_;
    std::vector<double> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Long format: `entity,date,value`, one line per cell.
inline void write_matrix_csv(std::ostream& out, const SentimentMatrix& m) {
    out << "entity,date,value\n";
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t k = 0; k < m.days(); ++k) {
            out << io::csv_escape(m.entities()[r]) << ',' << format_day(m.calendar().day(k)) << ','
                << io::format_double(m.at(r, k)) << '\n';
        }
    }
}

/// Reads a long-format matrix; entities keep first-appearance order. Missing cells stay 0.
inline SentimentMatrix read_matrix_csv(std::istream& in, Axis axis, const Calendar& calendar) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && io::trim(line) == "entity,date,value",
            ErrorKind::schema, "matrix CSV must start with 'entity,date,value'");
    struct Cell {
        std::string entity;
        std::size_t day;
        double value;
    };
    std::vector<Cell> cells;
    std::vector<std::string> entities;
    std::unordered_map<std::string, bool> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = io::trim(line);
        if (trimmed.empty()) continue;
        const std::string where = "matrix CSV line " + std::to_string(line_no);
        auto fields = io::parse_csv_row(trimmed);
        require(fields.size() == 3, ErrorKind::schema, where + ": expected 3 fields");
        std::string entity = std::move(fields[0]);
        if (seen.emplace(entity, true).second) entities.push_back(entity);
        const auto day = parse_day(fields[1]);
        require(calendar.contains(day), ErrorKind::out_of_range, where + ": date outside calendar");
        cells.push_back({std::move(entity), calendar.index(day), io::parse_double(fields[2], where)});
    }
    SentimentMatrix m(axis, entities, calendar);
    for (const auto& c : cells) m.at(m.index_of(c.entity), c.day) = c.value;
    return m;
}

}  // namespace msent
