#pragma once

// Aggregated outputs: summary.json (mean MSE per model and graph spec) and
// report.md, a side-by-side comparison table of the graph model against the
// random-forest baseline.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "perfgraph/errors.hpp"
#include "perfgraph/results.hpp"

namespace perfgraph {

/// Atomically write a text file (temporary file + rename).
inline void write_text_file(const std::string& path, const std::string& text) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
        if (!out) throw DataError("cannot write file '" + tmp + "'");
        out << text;
        if (!out) throw DataError("error while writing file '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string make_summary_json(const std::vector<ResultRow>& rows) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [model, cells] : summarize_results(rows)) {
        nlohmann::json entry = nlohmann::json::object();
        for (const auto& [key, value] : cells) entry[key] = value;
        j[model] = entry;
    }
    return j.dump(2) + "\n";
}

inline void write_summary_json(const std::string& path, const std::vector<ResultRow>& rows) {
    write_text_file(path, make_summary_json(rows));
}

namespace report_detail {

/// Round to two decimals, the precision at which table cells are displayed
/// and compared.
inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

inline std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

struct Cell {
    std::optional<double> gnn;
    std::optional<double> rf;
};

}  // namespace report_detail

/// Render the comparison table.  Sections are (family, dimension) pairs; rows
/// are budget multipliers; each row shows mean MSE for both models, bolding
/// the winner after rounding to two decimals (ties bold both) plus the
/// relative improvement of the graph model over the baseline computed from
/// the rounded values.  Specs with rows from only one model are listed under
/// "Missing results".
inline std::string make_report(const std::vector<ResultRow>& rows) {
    namespace rp = report_detail;
    auto summary = summarize_results(rows);

    // (family name, dimension) -> budget -> cell, in deterministic map order.
    std::map<std::pair<std::string, int>, std::map<int, rp::Cell>> table;
    std::map<std::string, GraphSpec> specs_by_key;
    for (const auto& row : rows) specs_by_key.emplace(row.spec().key(), row.spec());
    for (const auto& [key, spec] : specs_by_key) {
        rp::Cell cell;
        if (auto it = summary.find("GNN"); it != summary.end())
            if (auto jt = it->second.find(key); jt != it->second.end()) cell.gnn = jt->second;
        if (auto it = summary.find("RF"); it != summary.end())
            if (auto jt = it->second.find(key); jt != it->second.end()) cell.rf = jt->second;
        table[{std::string(family_name(spec.family)), spec.dimension}][spec.budget_multiplier] =
            cell;
    }

    std::string out;
    out += "# Performance prediction comparison\n\n";
    out += "Mean squared error of predicted problem-solving precision (after the\n";
    out += "configured target transform), averaged over all outer folds and\n";
    out += "repetitions. Lower is better. Values are shown to two decimals; the\n";
    out += "better model per row is bold, and ties after rounding bold both\n";
    out += "entries. The last column is the relative improvement of the graph\n";
    out += "model over the random-forest baseline, computed from the rounded\n";
    out += "values.\n";

    std::vector<std::string> missing;
    for (const auto& [section, budgets] : table) {
        out += "\n## " + section.first + ", dimension " + std::to_string(section.second) + "\n\n";
        out += "| budget multiplier | GNN | RF | GNN improvement |\n";
        out += "|------------------:|----:|----:|----------------:|\n";
        for (const auto& [budget, cell] : budgets) {
            std::string key = section.first + ":" + std::to_string(section.second) + ":" +
                              std::to_string(budget);
            std::string gnn_text = "—", rf_text = "—", improvement = "—";
            if (cell.gnn && cell.rf) {
                double g = rp::round2(*cell.gnn);
                double r = rp::round2(*cell.rf);
                gnn_text = rp::fixed(g, 2);
                rf_text = rp::fixed(r, 2);
                if (g <= r) gnn_text = "**" + gnn_text + "**";
                if (r <= g) rf_text = "**" + rf_text + "**";
                if (r != 0.0) improvement = rp::fixed((r - g) / r * 100.0, 1) + "%";
            } else if (cell.gnn) {
                gnn_text = rp::fixed(rp::round2(*cell.gnn), 2);
                missing.push_back(key + ": no RF rows");
            } else if (cell.rf) {
                rf_text = rp::fixed(rp::round2(*cell.rf), 2);
                missing.push_back(key + ": no GNN rows");
            }
            out += "| " + std::to_string(budget) + " | " + gnn_text + " | " + rf_text + " | " +
                   improvement + " |\n";
        }
    }

    if (!missing.empty()) {
        out += "\n## Missing results\n\n";
        for (const auto& item : missing) out += "- " + item + "\n";
    }
    return out;
}

inline void write_report(const std::string& path, const std::vector<ResultRow>& rows) {
    write_text_file(path, make_report(rows));
}

}  // namespace perfgraph
