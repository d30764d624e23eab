#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "msent/corpus.hpp"
#include "msent/error.hpp"
#include "msent/io.hpp"
#include "msent/matrix.hpp"
#include "msent/meso.hpp"
#include "msent/wavelet.hpp"

namespace msent {

inline std::vector<double> aggregate(std::span<const double> alpha, std::span<const double> beta) {
    require(alpha.size() == beta.size(), ErrorKind::dimension_mismatch,
            "aggregate: lengths " + std::to_string(alpha.size()) + " and " +
                std::to_string(beta.size()));
    std::vector<double> out(alpha.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = alpha[k] + beta[k];
    return out;
}

struct CompositeSeries {
    std::string bond_id;
    std::vector<double> micro;
    std::vector<double> meso;
    std::vector<double> raw;
    std::vector<double> smoothed;
    WaveletSpec spec;
    std::vector<std::string> warnings;
};

/// Per-bond micro + meso sum and its smoothed version.
inline std::map<std::string, CompositeSeries> build_composite(const SentimentMatrix& alpha,
                                                              const SentimentMatrix& beta,
                                                              const std::vector<BondPanel>& panels,
                                                              const WaveletSpec& spec) {
    require(alpha.calendar() == beta.calendar(), ErrorKind::dimension_mismatch,
            "alpha and beta matrices use different calendars");
    std::map<std::string, CompositeSeries> out;
    for (const auto& panel : panels) {
        require(alpha.contains(panel.bond_id), ErrorKind::unknown_id,
                "bond '" + panel.bond_id + "' missing from the alpha matrix");
        CompositeSeries s;
        s.bond_id = panel.bond_id;
        const auto a = alpha.row(panel.bond_id);
        s.micro.assign(a.begin(), a.end());
        s.meso = bond_meso_series(panel.industry_ids, beta);
        s.raw = aggregate(s.micro, s.meso);
        auto smoothed = smooth_with_warnings(s.raw, spec);
        s.smoothed = std::move(smoothed.values);
        s.warnings = std::move(smoothed.warnings);
        s.spec = spec;
        out.emplace(panel.bond_id, std::move(s));
    }
    return out;
}

inline void write_composite_csv(std::ostream& out, const std::map<std::string, CompositeSeries>& series,
                                const Calendar& calendar) {
    out << "bond_id,date,raw,smoothed\n";
    for (const auto& [bond, s] : series) {
        for (std::size_t k = 0; k < s.raw.size(); ++k) {
            out << bond << ',' << format_day(calendar.day(k)) << ',' << io::format_double(s.raw[k])
                << ',' << io::format_double(s.smoothed[k]) << '\n';
        }
    }
}

inline std::map<std::string, CompositeSeries> read_composite_csv(std::istream& in,
                                                                 const Calendar& calendar) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)) && io::trim(line) == "bond_id,date,raw,smoothed",
            ErrorKind::schema, "composite CSV must start with 'bond_id,date,raw,smoothed'");
    std::map<std::string, CompositeSeries> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto trimmed = io::trim(line);
        if (trimmed.empty()) continue;
        const std::string where = "composite CSV line " + std::to_string(line_no);
        const auto f = io::split(trimmed, ',');
        require(f.size() == 4, ErrorKind::schema, where + ": expected 4 fields");
        auto& s = out[std::string(f[0])];
        if (s.raw.empty()) {
            s.bond_id = std::string(f[0]);
            s.raw.assign(calendar.size(), 0.0);
            s.smoothed.assign(calendar.size(), 0.0);
        }
        const auto k = calendar.index(parse_day(f[1]));
        s.raw[k] = io::parse_double(f[2], where);
        s.smoothed[k] = io::parse_double(f[3], where);
    }
    return out;
}

}  // namespace msent
