#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "perfgraph/csv.hpp"
#include "perfgraph/errors.hpp"
#include "perfgraph/hetgraph.hpp"

namespace perfgraph {

// Graph container format (text, line oriented, documented in docs/formats.md):
// versioned header, spec and transform lines, one node section per type in
// canonical order, feature/target/mask sections, then the relation tables.
// Doubles are written with 17 significant digits so a save/load round trip is
// bit-exact.

namespace io_detail {

inline constexpr std::string_view kGraphMagic = "perfgraph-graph";
inline constexpr int kGraphVersion = 1;

struct LineReader {
    std::ifstream in;
    std::string path;
    long lineno = 0;

    explicit LineReader(const std::string& p) : in(p), path(p) {
        if (!in) throw DataError("cannot open graph file: " + p);
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw DataError(path + ":" + std::to_string(lineno) + ": " + msg);
    }

    std::string next(const std::string& what) {
        std::string line;
        if (!std::getline(in, line)) {
            ++lineno;
            fail("unexpected end of file, expected " + what);
        }
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    }

    std::vector<std::string> next_tokens(const std::string& what) {
        std::istringstream is(next(what));
        std::vector<std::string> toks;
        std::string t;
        while (is >> t) toks.push_back(t);
        return toks;
    }

    long to_long(const std::string& s) {
        try {
            return csv::parse_long(s, path + ":" + std::to_string(lineno));
        } catch (const DataError&) {
            throw;
        }
    }

    double to_double(const std::string& s) {
        return csv::parse_double(s, path + ":" + std::to_string(lineno));
    }
};

inline void expect_keyword(LineReader& r, const std::vector<std::string>& toks,
                           const std::string& keyword) {
    if (toks.empty() || toks[0] != keyword)
        r.fail("expected '" + keyword + "' section");
}

}  // namespace io_detail

inline void save_graph(const HeteroGraph& g, const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw DataError("cannot write graph file: " + path.string());
        out << io_detail::kGraphMagic << " " << io_detail::kGraphVersion << "\n";
        out << "spec " << family_name(g.spec.family) << " " << g.spec.dimension << " "
            << g.spec.budget_multiplier << "\n";
        if (g.transform.kind == TargetTransform::Kind::Raw)
            out << "transform raw\n";
        else
            out << "transform log10 " << csv::format_double(g.transform.floor) << "\n";
        for (NodeType t : kAllNodeTypes) {
            out << "nodes " << node_type_name(t) << " " << g.count(t) << "\n";
            for (const auto& key : g.keys(t)) out << key << "\n";
        }
        for (NodeType t : kAllNodeTypes) {
            const auto& f = g.features[static_cast<size_t>(t)];
            if (!f) continue;
            out << "features " << node_type_name(t) << " " << f->rows() << " " << f->cols()
                << "\n";
            for (Eigen::Index i = 0; i < f->rows(); ++i) {
                for (Eigen::Index j = 0; j < f->cols(); ++j)
                    out << (j ? " " : "") << csv::format_double((*f)(i, j));
                out << "\n";
            }
        }
        out << "targets " << g.targets.size() << "\n";
        for (double v : g.targets) out << csv::format_double(v) << "\n";
        out << "masks " << g.train_mask.size() << "\n";
        for (size_t i = 0; i < g.train_mask.size(); ++i)
            out << int(g.train_mask[i]) << " " << int(g.val_mask[i]) << " "
                << int(g.test_mask[i]) << "\n";
        out << "relations " << g.relations.size() << "\n";
        for (size_t r = 0; r < g.relations.size(); ++r) {
            out << "relation " << g.relations[r].name << " "
                << node_type_name(g.relations[r].src) << " "
                << node_type_name(g.relations[r].dst) << " " << g.edges[r].size() << "\n";
            for (const auto& [s, d] : g.edges[r]) out << s << " " << d << "\n";
        }
        out << "end\n";
        if (!out) throw DataError("write failed: " + path.string());
    }
    fs::rename(tmp, path);
}

inline HeteroGraph load_graph(const std::filesystem::path& path) {
    using io_detail::LineReader;
    LineReader r(path.string());
    HeteroGraph g;

    auto header = r.next_tokens("header");
    if (header.size() != 2 || header[0] != io_detail::kGraphMagic)
        r.fail("not a perfgraph graph file");
    if (r.to_long(header[1]) != io_detail::kGraphVersion)
        r.fail("unsupported graph file version " + header[1]);

    auto spec = r.next_tokens("spec");
    if (spec.size() != 4 || spec[0] != "spec") r.fail("expected spec line");
    auto fam = parse_family(spec[1]);
    if (!fam) r.fail("unknown family '" + spec[1] + "'");
    g.spec.family = *fam;
    g.spec.dimension = static_cast<int>(r.to_long(spec[2]));
    g.spec.budget_multiplier = static_cast<int>(r.to_long(spec[3]));

    auto tr = r.next_tokens("transform");
    if (tr.size() < 2 || tr[0] != "transform") r.fail("expected transform line");
    if (tr[1] == "raw") {
        g.transform.kind = TargetTransform::Kind::Raw;
    } else if (tr[1] == "log10" && tr.size() == 3) {
        g.transform.kind = TargetTransform::Kind::Log10Clip;
        g.transform.floor = r.to_double(tr[2]);
    } else {
        r.fail("unknown transform '" + tr[1] + "'");
    }

    for (NodeType t : kAllNodeTypes) {
        auto sec = r.next_tokens("nodes section");
        io_detail::expect_keyword(r, sec, "nodes");
        if (sec.size() != 3) r.fail("malformed nodes line");
        auto parsed = parse_node_type(sec[1]);
        if (!parsed) r.fail("unknown node type '" + sec[1] + "'");
        if (*parsed != t)
            r.fail("node sections out of order: expected '" +
                   std::string(node_type_name(t)) + "', got '" + sec[1] + "'");
        long n = r.to_long(sec[2]);
        auto& keys = g.node_keys[static_cast<size_t>(t)];
        keys.reserve(static_cast<size_t>(n));
        for (long i = 0; i < n; ++i) keys.push_back(r.next("node key"));
    }

    // Optional feature sections, then targets.
    std::vector<std::string> toks = r.next_tokens("features or targets");
    while (!toks.empty() && toks[0] == "features") {
        if (toks.size() != 4) r.fail("malformed features line");
        auto t = parse_node_type(toks[1]);
        if (!t) r.fail("unknown node type '" + toks[1] + "'");
        long rows = r.to_long(toks[2]), cols = r.to_long(toks[3]);
        ad::Matrix m(rows, cols);
        for (long i = 0; i < rows; ++i) {
            auto vals = r.next_tokens("feature row");
            if (static_cast<long>(vals.size()) != cols)
                r.fail("feature row has " + std::to_string(vals.size()) + " values, expected " +
                       std::to_string(cols));
            for (long j = 0; j < cols; ++j) m(i, j) = r.to_double(vals[static_cast<size_t>(j)]);
        }
        g.features[static_cast<size_t>(*t)] = std::move(m);
        toks = r.next_tokens("features or targets");
    }

    io_detail::expect_keyword(r, toks, "targets");
    if (toks.size() != 2) r.fail("malformed targets line");
    long n_targets = r.to_long(toks[1]);
    g.targets.reserve(static_cast<size_t>(n_targets));
    for (long i = 0; i < n_targets; ++i) {
        auto v = r.next_tokens("target value");
        if (v.size() != 1) r.fail("malformed target value");
        g.targets.push_back(r.to_double(v[0]));
    }

    toks = r.next_tokens("masks");
    io_detail::expect_keyword(r, toks, "masks");
    if (toks.size() != 2) r.fail("malformed masks line");
    long n_masks = r.to_long(toks[1]);
    for (long i = 0; i < n_masks; ++i) {
        auto v = r.next_tokens("mask row");
        if (v.size() != 3) r.fail("malformed mask row");
        g.train_mask.push_back(static_cast<std::uint8_t>(r.to_long(v[0]) != 0));
        g.val_mask.push_back(static_cast<std::uint8_t>(r.to_long(v[1]) != 0));
        g.test_mask.push_back(static_cast<std::uint8_t>(r.to_long(v[2]) != 0));
    }

    toks = r.next_tokens("relations");
    io_detail::expect_keyword(r, toks, "relations");
    if (toks.size() != 2) r.fail("malformed relations line");
    long n_relations = r.to_long(toks[1]);
    for (long i = 0; i < n_relations; ++i) {
        auto rel = r.next_tokens("relation header");
        if (rel.size() != 5 || rel[0] != "relation") r.fail("malformed relation header");
        auto src = parse_node_type(rel[2]);
        auto dst = parse_node_type(rel[3]);
        if (!src) r.fail("unknown node type '" + rel[2] + "'");
        if (!dst) r.fail("unknown node type '" + rel[3] + "'");
        long n_edges = r.to_long(rel[4]);
        EdgeList e;
        e.reserve(static_cast<size_t>(n_edges));
        for (long k = 0; k < n_edges; ++k) {
            auto pair = r.next_tokens("edge");
            if (pair.size() != 2) r.fail("malformed edge");
            e.emplace_back(static_cast<int>(r.to_long(pair[0])),
                           static_cast<int>(r.to_long(pair[1])));
        }
        g.relations.push_back(Relation{rel[1], *src, *dst});
        g.edges.push_back(std::move(e));
    }

    auto tail = r.next_tokens("end marker");
    if (tail.size() != 1 || tail[0] != "end") r.fail("expected end marker");
    return g;
}

}  // namespace perfgraph
