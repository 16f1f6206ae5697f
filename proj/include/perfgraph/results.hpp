#pragma once

// Result rows: one per (model, graph spec, repetition, outer fold), written
// to results.csv and aggregated into summary.json and report.md.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "perfgraph/csv.hpp"
#include "perfgraph/errors.hpp"
#include "perfgraph/hetgraph.hpp"

namespace perfgraph {

struct ResultRow {
    std::string model;  // "GNN" or "RF"
    Family family = Family::modCMA;
    int dimension = 0;
    int budget_multiplier = 0;
    int repetition = 0;  // 1-based
    int outer_fold = 0;  // instance id held out for testing
    std::optional<int> embedding_size;  // chosen hyperparameters; empty for RF
    std::optional<double> dropout;
    double mse = 0.0;

    GraphSpec spec() const { return GraphSpec{dimension, budget_multiplier, family}; }

    auto sort_key() const {
        return std::tuple(model, std::string(family_name(family)), dimension,
                          budget_multiplier, repetition, outer_fold);
    }
    bool operator==(const ResultRow&) const = default;
};

inline const std::vector<std::string>& results_header() {
    static const std::vector<std::string> header = {
        "model",          "family",     "dimension", "budget_multiplier", "repetition",
        "outer_fold",     "embedding_size", "dropout", "mse"};
    return header;
}

namespace results_detail {

inline void append_field(std::string& line, const std::string& field, bool first) {
    if (!first) line.push_back(',');
    line += field;
}

}  // namespace results_detail

inline std::string format_result_row(const ResultRow& row) {
    std::string line;
    namespace rd = results_detail;
    rd::append_field(line, row.model, true);
    rd::append_field(line, std::string(family_name(row.family)), false);
    rd::append_field(line, std::to_string(row.dimension), false);
    rd::append_field(line, std::to_string(row.budget_multiplier), false);
    rd::append_field(line, std::to_string(row.repetition), false);
    rd::append_field(line, std::to_string(row.outer_fold), false);
    rd::append_field(line, row.embedding_size ? std::to_string(*row.embedding_size) : "", false);
    rd::append_field(line, row.dropout ? csv::format_double(*row.dropout) : "", false);
    rd::append_field(line, csv::format_double(row.mse), false);
    return line;
}

inline ResultRow parse_result_row(const csv::Row& row, const std::string& path) {
    auto fail = [&](const std::string& msg) -> void {
        throw DataError(path + ":" + std::to_string(row.line) + ": " + msg);
    };
    auto ctx = [&](const char* col) {
        return path + ":" + std::to_string(row.line) + ": column '" + col + "'";
    };
    const auto& f = row.fields;
    ResultRow out;
    out.model = f[0];
    if (out.model != "GNN" && out.model != "RF")
        fail("unknown model '" + out.model + "'");
    auto family = parse_family(f[1]);
    if (!family) fail("unknown family '" + f[1] + "'");
    out.family = *family;
    out.dimension = static_cast<int>(csv::parse_long(f[2], ctx("dimension")));
    out.budget_multiplier = static_cast<int>(csv::parse_long(f[3], ctx("budget_multiplier")));
    out.repetition = static_cast<int>(csv::parse_long(f[4], ctx("repetition")));
    out.outer_fold = static_cast<int>(csv::parse_long(f[5], ctx("outer_fold")));
    if (!f[6].empty())
        out.embedding_size = static_cast<int>(csv::parse_long(f[6], ctx("embedding_size")));
    if (!f[7].empty()) out.dropout = csv::parse_double(f[7], ctx("dropout"));
    if ((out.model == "GNN") != (out.embedding_size.has_value() && out.dropout.has_value()))
        fail("hyperparameter fields must be set for GNN rows and empty for RF rows");
    out.mse = csv::parse_double(f[8], ctx("mse"));
    if (!std::isfinite(out.mse)) fail("non-finite mse");
    if (out.repetition < 1) fail("repetition must be 1-based");
    return out;
}

/// Write rows (sorted by model, family, dimension, budget, repetition, fold)
/// to a CSV file via a temporary-file rename, so readers never observe a
/// partially written file.
inline void write_results_csv(const std::string& path, std::vector<ResultRow> rows) {
    std::sort(rows.begin(), rows.end(),
              [](const ResultRow& a, const ResultRow& b) { return a.sort_key() < b.sort_key(); });
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw DataError("cannot write results file '" + tmp + "'");
        bool first = true;
        for (const auto& col : results_header()) {
            if (!first) out << ',';
            out << col;
            first = false;
        }
        out << '\n';
        for (const auto& row : rows) out << format_result_row(row) << '\n';
        if (!out) throw DataError("error while writing results file '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<ResultRow> read_results_csv(const std::string& path) {
    auto rows = csv::read_file(path, results_header());
    std::vector<ResultRow> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(parse_result_row(row, path));
    return out;
}

/// Mean MSE per (model, spec key), averaged over every repetition and outer
/// fold present.  This is the quantity reported in summary.json and the
/// comparison table.
inline std::map<std::string, std::map<std::string, double>>
summarize_results(const std::vector<ResultRow>& rows) {
    std::map<std::string, std::map<std::string, std::pair<double, int>>> acc;
    for (const auto& row : rows) {
        auto& cell = acc[row.model][row.spec().key()];
        cell.first += row.mse;
        cell.second += 1;
    }
    std::map<std::string, std::map<std::string, double>> out;
    for (const auto& [model, cells] : acc)
        for (const auto& [key, sum_count] : cells)
            out[model][key] = sum_count.first / sum_count.second;
    return out;
}

}  // namespace perfgraph
