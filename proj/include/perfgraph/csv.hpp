#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "perfgraph/errors.hpp"

namespace perfgraph::csv {

// Strict line-oriented CSV: comma separator, no quoting, '.' decimal
// separator, mandatory header row. Fields therefore must not contain commas
// or newlines; the schemas used here never need them.

struct Row {
    long line = 0;  // 1-based line number in the file
    std::vector<std::string> fields;
};

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

/// Read a CSV file, check the header matches `expected_header` exactly, and
/// return the data rows. Skips nothing; blank trailing line is tolerated.
inline std::vector<Row> read_file(const std::string& path,
                                  const std::vector<std::string>& expected_header) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::vector<Row> rows;
    std::string line;
    long lineno = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() && in.peek() == EOF) break;
        auto fields = split_fields(line);
        if (!saw_header) {
            if (fields != expected_header) {
                std::ostringstream os;
                os << path << ":1: unexpected header; expected \"";
                for (size_t i = 0; i < expected_header.size(); ++i)
                    os << (i ? "," : "") << expected_header[i];
                os << "\" got \"" << line << "\"";
                throw DataError(os.str());
            }
            saw_header = true;
            continue;
        }
        if (fields.size() != expected_header.size()) {
            std::ostringstream os;
            os << path << ":" << lineno << ": expected " << expected_header.size()
               << " columns, got " << fields.size();
            throw DataError(os.str());
        }
        rows.push_back(Row{lineno, std::move(fields)});
    }
    if (!saw_header) throw DataError(path + ": empty file (missing header row)");
    return rows;
}

inline long parse_long(const std::string& s, const std::string& context) {
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw DataError(context + ": not an integer: \"" + s + "\"");
    return v;
}

inline double parse_double(const std::string& s, const std::string& context) {
    if (s.empty()) throw DataError(context + ": empty numeric field");
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size())
        throw DataError(context + ": not a number: \"" + s + "\"");
    return v;
}

/// Shortest decimal form that round-trips a double exactly (17 significant
/// digits are always sufficient for IEEE-754 binary64).
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace perfgraph::csv
