#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "msent/error.hpp"
#include "msent/io.hpp"
#include "msent/rng.hpp"

namespace msent {

using Day = std::chrono::sys_days;

inline Day parse_day(std::string_view text) {
    using namespace std::chrono;
    const std::string context = "date '" + std::string(text) + "'";
    require(text.size() == 10 && text[4] == '-' && text[7] == '-', ErrorKind::schema,
            context + " is not YYYY-MM-DD");
    const auto y = static_cast<int>(io::parse_int(text.substr(0, 4), context));
    const auto m = static_cast<unsigned>(io::parse_int(text.substr(5, 2), context));
    const auto d = static_cast<unsigned>(io::parse_int(text.substr(8, 2), context));
    const year_month_day ymd{year{y}, month{m}, day{d}};
    require(ymd.ok(), ErrorKind::schema, context + " is not a calendar day");
    return Day{ymd};
}

inline std::string format_day(Day day) {
    const std::chrono::year_month_day ymd{day};
    char buffer[16];
    std::snprintf(buffer, sizeof(buffer), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buffer;
}

/// Dense inclusive range of calendar days, indexed 0..K-1.
class Calendar {
public:
    Calendar() = default;

    Calendar(Day start, Day end) : start_(start) {
        require(start <= end, ErrorKind::invalid_argument,
                "calendar start " + format_day(start) + " is after end " + format_day(end));
        size_ = static_cast<std::size_t>((end - start).count()) + 1;
    }

    [[nodiscard]] std::size_t size() const noexcept { return size_; }
    [[nodiscard]] Day start() const noexcept { return start_; }
    [[nodiscard]] Day end() const noexcept { return start_ + std::chrono::days(size_ - 1); }

    [[nodiscard]] bool contains(Day day) const noexcept {
        return size_ > 0 && day >= start_ && day <= end();
    }

    [[nodiscard]] std::size_t index(Day day) const {
        require(contains(day), ErrorKind::out_of_range,
                "date " + format_day(day) + " outside calendar");
        return static_cast<std::size_t>((day - start_).count());
    }

    [[nodiscard]] Day day(std::size_t index) const {
        require(index < size_, ErrorKind::out_of_range, "calendar index out of range");
        return start_ + std::chrono::days(static_cast<long>(index));
    }

    friend bool operator==(const Calendar&, const Calendar&) = default;

private:
    Day start_{};
    std::size_t size_ = 0;
};

inline Calendar build_calendar(Day start, Day end) { return Calendar(start, end); }

enum class Stream { micro, meso };

inline std::string_view to_string(Stream stream) {
    return stream == Stream::micro ? "micro" : "meso";
}

inline Stream parse_stream(std::string_view text) {
    if (text == "micro") {
        return Stream::micro;
    }
    if (text == "meso") {
        return Stream::meso;
    }
    fail(ErrorKind::schema, "unknown stream '" + std::string(text) + "'");
}

/// Probability triple over (negative, neutral, positive).
struct SoftLabel {
    double p_neg = 0.0;
    double p_neu = 1.0;
    double p_pos = 0.0;

    static constexpr double sum_tolerance = 1e-9;

    [[nodiscard]] std::array<double, 3> as_array() const { return {p_neg, p_neu, p_pos}; }

    [[nodiscard]] bool valid() const {
        const auto in_unit = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };
        return in_unit(p_neg) && in_unit(p_neu) && in_unit(p_pos) &&
               std::abs(p_neg + p_neu + p_pos - 1.0) <= sum_tolerance;
    }

    friend bool operator==(const SoftLabel&, const SoftLabel&) = default;
};

struct TextRecord {
    std::string text_id;
    Day date{};
    Stream stream = Stream::micro;
    std::vector<std::string> mentioned_bonds;
    std::optional<SoftLabel> soft_label;

    friend bool operator==(const TextRecord&, const TextRecord&) = default;
};

/// Validated, immutable set of text records for one stream.
class TextCollection {
public:
    TextCollection() = default;
    explicit TextCollection(std::vector<TextRecord> records) : records_(std::move(records)) {
        for (std::size_t i = 0; i < records_.size(); ++i) {
            by_id_.emplace(records_[i].text_id, i);
        }
    }

    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
    [[nodiscard]] bool empty() const noexcept { return records_.empty(); }
    [[nodiscard]] const std::vector<TextRecord>& records() const noexcept { return records_; }
    [[nodiscard]] auto begin() const noexcept { return records_.begin(); }
    [[nodiscard]] auto end() const noexcept { return records_.end(); }

    [[nodiscard]] const TextRecord* find(std::string_view text_id) const {
        const auto it = by_id_.find(std::string(text_id));
        return it == by_id_.end() ? nullptr : &records_[it->second];
    }

    friend bool operator==(const TextCollection& a, const TextCollection& b) {
        return a.records_ == b.records_;
    }

private:
    std::vector<TextRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

namespace detail {

inline TextRecord parse_text_line(const nlohmann::json& obj, Stream expected,
                                  const Calendar* calendar, const std::string& where) {
    require(obj.is_object(), ErrorKind::schema, where + ": expected a JSON object");
    const auto field = [&](const char* name) -> const nlohmann::json& {
        const auto it = obj.find(name);
        require(it != obj.end(), ErrorKind::schema, where + ": missing field '" + name + "'");
        return *it;
    };

    TextRecord record;
    const auto& id = field("text_id");
    require(id.is_string() && !id.get_ref<const std::string&>().empty(), ErrorKind::schema,
            where + ": text_id must be a non-empty string");
    record.text_id = id.get<std::string>();

    const auto& date = field("date");
    require(date.is_string(), ErrorKind::schema, where + ": date must be a string");
    try {
        record.date = parse_day(date.get<std::string>());
    } catch (const Error& e) {
        fail(ErrorKind::schema, where + ": " + e.what());
    }
    if (calendar != nullptr) {
        require(calendar->contains(record.date), ErrorKind::out_of_range,
                where + ": date " + format_day(record.date) + " outside calendar");
    }

    const auto& stream = field("stream");
    require(stream.is_string(), ErrorKind::schema, where + ": stream must be a string");
    try {
        record.stream = parse_stream(stream.get<std::string>());
    } catch (const Error& e) {
        fail(ErrorKind::schema, where + ": " + e.what());
    }
    require(record.stream == expected, ErrorKind::schema,
            where + ": stream '" + std::string(to_string(record.stream)) + "' but ingesting '" +
                std::string(to_string(expected)) + "'");

    if (const auto it = obj.find("mentioned_bonds"); it != obj.end()) {
        require(it->is_array(), ErrorKind::schema, where + ": mentioned_bonds must be an array");
        for (const auto& bond : *it) {
            require(bond.is_string(), ErrorKind::schema, where + ": bond ids must be strings");
            record.mentioned_bonds.push_back(bond.get<std::string>());
        }
    }
    if (record.stream == Stream::micro) {
        require(!record.mentioned_bonds.empty(), ErrorKind::schema,
                where + ": micro record mentions no bond");
    } else {
        require(record.mentioned_bonds.empty(), ErrorKind::schema,
                where + ": meso record must not mention bonds");
    }

    if (const auto it = obj.find("soft_label"); it != obj.end() && !it->is_null()) {
        require(it->is_array() && it->size() == 3, ErrorKind::schema,
                where + ": soft_label must be an array of three numbers");
        for (const auto& p : *it) {
            require(p.is_number(), ErrorKind::schema, where + ": soft_label entries must be numbers");
        }
        SoftLabel label{(*it)[0].get<double>(), (*it)[1].get<double>(), (*it)[2].get<double>()};
        require(label.valid(), ErrorKind::schema,
                where + ": soft_label must be probabilities summing to 1");
        record.soft_label = label;
    }
    return record;
}

}  // namespace detail

/// Parses texts JSONL. Any malformed line rejects the whole input.
inline TextCollection ingest_texts(std::istream& in, Stream stream,
                                   const Calendar* calendar = nullptr) {
    std::vector<TextRecord> records;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) {
            continue;
        }
        const std::string where = "line " + std::to_string(line_no);
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::schema, where + ": invalid JSON (" + e.what() + ")");
        }
        auto record = detail::parse_text_line(obj, stream, calendar, where);
        require(seen.insert(record.text_id).second, ErrorKind::duplicate,
                where + ": duplicate text_id '" + record.text_id + "'");
        records.push_back(std::move(record));
    }
    return TextCollection(std::move(records));
}

inline TextCollection ingest_texts(const std::filesystem::path& path, Stream stream,
                                   const Calendar* calendar = nullptr) {
    auto in = io::open_input(path);
    try {
        return ingest_texts(in, stream, calendar);
    } catch (const Error& e) {
        fail(e.kind(), path.string() + ": " + e.what());
    }
}

inline nlohmann::json to_json(const TextRecord& record) {
    nlohmann::json obj;
    obj["text_id"] = record.text_id;
    obj["date"] = format_day(record.date);
    obj["stream"] = std::string(to_string(record.stream));
    obj["mentioned_bonds"] = record.mentioned_bonds;
    if (record.soft_label) {
        obj["soft_label"] = record.soft_label->as_array();
    }
    return obj;
}

// ---------------------------------------------------------------------------
// Bond-level split

enum class Split { train, valid, test };

inline std::string_view to_string(Split split) {
    switch (split) {
        case Split::train: return "train";
        case Split::valid: return "valid";
        case Split::test: return "test";
    }
    return "train";
}

inline Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "valid") return Split::valid;
    if (text == "test") return Split::test;
    fail(ErrorKind::schema, "unknown split '" + std::string(text) + "'");
}

struct SplitRatios {
    double train = 7.0;
    double valid = 1.0;
    double test = 2.0;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t valid = 0;
    std::size_t test = 0;

    friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

/// Floor each share; the rounding remainder goes to train.
inline SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios) {
    require(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0, ErrorKind::invalid_argument,
            "split ratios must be positive");
    const double total = ratios.train + ratios.valid + ratios.test;
    SplitSizes sizes;
    sizes.valid = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.valid / total));
    sizes.test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratios.test / total));
    sizes.train = n - sizes.valid - sizes.test;
    return sizes;
}

class SplitAssignment {
public:
    SplitAssignment() = default;

    void assign(const std::string& bond_id, Split split) { splits_[bond_id] = split; }

    [[nodiscard]] Split at(const std::string& bond_id) const {
        const auto it = splits_.find(bond_id);
        require(it != splits_.end(), ErrorKind::unknown_id, "bond '" + bond_id + "' has no split");
        return it->second;
    }

    [[nodiscard]] bool contains(const std::string& bond_id) const {
        return splits_.contains(bond_id);
    }

    [[nodiscard]] std::vector<std::string> members(Split split) const {
        std::vector<std::string> out;
        for (const auto& [bond, s] : splits_) {
            if (s == split) {
                out.push_back(bond);
            }
        }
        return out;
    }

    [[nodiscard]] SplitSizes sizes() const {
        SplitSizes sizes;
        for (const auto& [bond, s] : splits_) {
            (s == Split::train ? sizes.train : s == Split::valid ? sizes.valid : sizes.test)++;
        }
        return sizes;
    }

    [[nodiscard]] std::size_t size() const noexcept { return splits_.size(); }
    [[nodiscard]] const std::map<std::string, Split>& entries() const noexcept { return splits_; }

    friend bool operator==(const SplitAssignment&, const SplitAssignment&) = default;

private:
    std::map<std::string, Split> splits_;
};

inline SplitAssignment split_bonds(std::vector<std::string> bond_ids, const SplitRatios& ratios,
                                   std::uint64_t seed) {
    const double parts = ratios.train + ratios.valid + ratios.test;
    require(static_cast<double>(bond_ids.size()) >= parts, ErrorKind::invalid_argument,
            "need at least " + std::to_string(static_cast<long>(parts)) + " bonds to split, got " +
                std::to_string(bond_ids.size()));
    std::sort(bond_ids.begin(), bond_ids.end());
    require(std::adjacent_find(bond_ids.begin(), bond_ids.end()) == bond_ids.end(),
            ErrorKind::duplicate, "duplicate bond id in split input");

    Rng rng(seed);
    rng.shuffle(std::span<std::string>(bond_ids));
    const auto sizes = split_sizes(bond_ids.size(), ratios);

    SplitAssignment out;
    for (std::size_t i = 0; i < bond_ids.size(); ++i) {
        const Split s = i < sizes.train                ? Split::train
                        : i < sizes.train + sizes.valid ? Split::valid
                                                        : Split::test;
        out.assign(bond_ids[i], s);
    }
    return out;
}

inline void write_splits_csv(std::ostream& out, const SplitAssignment& splits) {
    out << "bond_id,split\n";
    for (const auto& [bond, split] : splits.entries()) {
        out << bond << ',' << to_string(split) << '\n';
    }
}

inline SplitAssignment read_splits_csv(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && io::trim(line) == "bond_id,split",
            ErrorKind::schema, "splits CSV must start with header 'bond_id,split'");
    SplitAssignment out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (io::trim(line).empty()) continue;
        const auto fields = io::split(io::trim(line), ',');
        require(fields.size() == 2, ErrorKind::schema,
                "splits CSV line " + std::to_string(line_no) + ": expected 2 fields");
        const std::string bond(fields[0]);
        require(!out.contains(bond), ErrorKind::duplicate, "splits CSV: duplicate bond " + bond);
        out.assign(bond, parse_split(fields[1]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Bond panel

inline constexpr std::size_t feature_count = 45;

struct FeatureInfo {
    std::string_view column;
    std::string_view display;
    std::string_view group;
};

/// Structured independent variables, in registry order.
inline constexpr std::array<FeatureInfo, feature_count> feature_registry{{
    {"usdcnyc", "USDCNYC", "macro"},
    {"shibor_3m", "Shibor", "macro"},
    {"manufacturing_pmi", "Manufacturing PMI", "macro"},
    {"macro_leading_index", "Macroeconomic Climate Index", "macro"},
    {"ppi_yoy", "PPI", "macro"},
    {"gdp_yoy", "GDP", "macro"},
    {"cpi_yoy", "CPI", "macro"},
    {"afre_yoy", "AFRE", "macro"},
    {"govt_bond_yield", "Yield on Government Bonds", "macro"},
    {"sws_industry_index", "SWS Primary Industry Index", "industry"},
    {"trading_volume", "Trading Volume", "trading"},
    {"operating_revenue", "Operating Revenue", "firm"},
    {"operating_costs", "Operating Costs", "firm"},
    {"total_profit", "Total Profit", "firm"},
    {"current_assets", "Current Assets", "firm"},
    {"non_current_assets", "Non-Current Assets", "firm"},
    {"total_assets", "Total Assets", "firm"},
    {"current_liabilities", "Current Liabilities", "firm"},
    {"non_current_liabilities", "Non-Current Liabilities", "firm"},
    {"total_liabilities", "Total Liabilities", "firm"},
    {"total_equity", "Total Shareholders' Equity", "firm"},
    {"cash_flow_operations", "Cash Flow from Operations", "firm"},
    {"cash_flow_investment", "Cash Flow from Investment", "firm"},
    {"cash_flow_finance", "Cash Flow from Finance", "firm"},
    {"total_cash_flow", "Total Cash Flow", "firm"},
    {"current_ratio", "Current Ratio", "firm"},
    {"quick_ratio", "Quick Ratio", "firm"},
    {"super_quick_ratio", "Super Quick Ratio", "firm"},
    {"debt_to_asset_ratio", "Debt-to-Asset Ratio", "firm"},
    {"equity_ratio", "Equity Ratio", "firm"},
    {"tangible_net_worth_debt_ratio", "Tangible Net Worth Debt Ratio", "firm"},
    {"gross_profit_margin", "Gross Profit Margin", "firm"},
    {"net_profit_margin", "Net Profit Margin", "firm"},
    {"return_on_assets", "Return on Assets", "firm"},
    {"operating_profit_margin", "Operating Profit Margin", "firm"},
    {"average_roe", "Average Return on Equity", "firm"},
    {"operating_cycle_days", "Operating Cycle", "firm"},
    {"inventory_turnover", "Inventory Turnover Ratio", "firm"},
    {"receivables_turnover", "Accounts Receivable Turnover Ratio", "firm"},
    {"current_asset_turnover", "Current Asset Turnover Ratio", "firm"},
    {"equity_turnover", "Shareholders' Equity Turnover Ratio", "firm"},
    {"total_asset_turnover", "Total Asset Turnover Ratio", "firm"},
    {"remaining_credit_utilization", "Remaining Credit Utilization Ratio", "credit"},
    {"credit_mom_change", "Month-over-Month Change in Credit", "credit"},
    {"secured_credit_ratio", "Secured Credit Ratio", "credit"},
}};

struct PanelRow {
    Day date{};
    std::array<double, feature_count> features{};
    double credit_spread = 0.0;

    friend bool operator==(const PanelRow&, const PanelRow&) = default;
};

struct BondPanel {
    std::string bond_id;
    std::vector<std::string> industry_ids;
    std::vector<PanelRow> rows;

    [[nodiscard]] std::size_t size() const noexcept { return rows.size(); }

    void validate() const {
        require(!bond_id.empty(), ErrorKind::schema, "bond panel without id");
        for (std::size_t i = 0; i < rows.size(); ++i) {
            require(std::isfinite(rows[i].credit_spread), ErrorKind::non_finite,
                    "bond " + bond_id + ": non-finite credit spread on " + format_day(rows[i].date));
            if (i > 0) {
                require(rows[i - 1].date < rows[i].date, ErrorKind::schema,
                        "bond " + bond_id + ": rows not strictly increasing at " +
                            format_day(rows[i].date));
            }
        }
    }

    friend bool operator==(const BondPanel&, const BondPanel&) = default;
};

inline std::string panel_header() {
    std::string header = "bond_id,date";
    for (const auto& f : feature_registry) {
        header += ',';
        header += f.column;
    }
    header += ",credit_spread";
    return header;
}

inline void write_panel_csv(std::ostream& out, const std::vector<BondPanel>& panels) {
    out << panel_header() << '\n';
    for (const auto& panel : panels) {
        for (const auto& row : panel.rows) {
            out << panel.bond_id << ',' << format_day(row.date);
            for (double v : row.features) {
                out << ',' << io::format_double(v);
            }
            out << ',' << io::format_double(row.credit_spread) << '\n';
        }
    }
}

/// Reads the panel CSV; bonds keep first-appearance order, rows are sorted by date.
inline std::vector<BondPanel> read_panel_csv(std::istream& in) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && io::trim(line) == panel_header(),
            ErrorKind::schema, "panel CSV header does not match the feature registry");
    std::vector<BondPanel> panels;
    std::unordered_map<std::string, std::size_t> index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = io::trim(line);
        if (trimmed.empty()) continue;
        const std::string where = "panel CSV line " + std::to_string(line_no);
        const auto fields = io::split(trimmed, ',');
        require(fields.size() == feature_count + 3, ErrorKind::schema,
                where + ": expected " + std::to_string(feature_count + 3) + " fields, got " +
                    std::to_string(fields.size()));
        const std::string bond(fields[0]);
        auto [it, inserted] = index.emplace(bond, panels.size());
        if (inserted) {
            panels.push_back(BondPanel{bond, {}, {}});
        }
        PanelRow row;
        try {
            row.date = parse_day(fields[1]);
        } catch (const Error& e) {
            fail(ErrorKind::schema, where + ": " + e.what());
        }
        for (std::size_t f = 0; f < feature_count; ++f) {
            row.features[f] = io::parse_double(fields[2 + f], where);
        }
        row.credit_spread = io::parse_double(fields[feature_count + 2], where);
        require(std::isfinite(row.credit_spread), ErrorKind::non_finite,
                where + ": credit_spread must be finite");
        panels[it->second].rows.push_back(row);
    }
    for (auto& panel : panels) {
        std::stable_sort(panel.rows.begin(), panel.rows.end(),
                         [](const PanelRow& a, const PanelRow& b) { return a.date < b.date; });
        panel.validate();
    }
    return panels;
}

/// Sidecar mapping `bond_id,industry`, one line per membership.
inline void write_bond_industries_csv(std::ostream& out, const std::vector<BondPanel>& panels) {
    out << "bond_id,industry\n";
    for (const auto& panel : panels) {
        for (const auto& industry : panel.industry_ids) {
            out << io::csv_escape(panel.bond_id) << ',' << io::csv_escape(industry) << '\n';
        }
    }
}

inline void read_bond_industries_csv(std::istream& in, std::vector<BondPanel>& panels) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && io::trim(line) == "bond_id,industry",
            ErrorKind::schema, "bond industries CSV must start with 'bond_id,industry'");
    std::unordered_map<std::string, BondPanel*> by_id;
    for (auto& p : panels) {
        by_id[p.bond_id] = &p;
        p.industry_ids.clear();
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = io::trim(line);
        if (trimmed.empty()) continue;
        const auto fields = io::parse_csv_row(trimmed);
        require(fields.size() == 2, ErrorKind::schema,
                "bond industries CSV line " + std::to_string(line_no) + ": expected 2 fields");
        const auto it = by_id.find(fields[0]);
        require(it != by_id.end(), ErrorKind::unknown_id,
                "bond industries CSV: unknown bond '" + fields[0] + "'");
        it->second->industry_ids.emplace_back(fields[1]);
    }
    for (const auto& p : panels) {
        require(!p.industry_ids.empty(), ErrorKind::schema,
                "bond " + p.bond_id + " has no industry mapping");
    }
}

}  // namespace msent
