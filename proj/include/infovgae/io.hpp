#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "analysis.hpp"
#include "errors.hpp"
#include "graph.hpp"
#include "matrix.hpp"
#include "rng.hpp"
#include "trainer.hpp"

namespace infovgae {

namespace detail {

// Shortest exact decimal form: %.17g round-trips every finite double.
inline std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline double parse_real(const std::string& s, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        throw DataError(where + ": not a number: \"" + s + "\"");
    }
    if (used != s.size()) throw DataError(where + ": trailing junk in number: \"" + s + "\"");
    return v;
}

} // namespace detail

// Writes content to a sibling temp file, then renames over the target, so
// readers never observe a half-written file.
inline void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw IoError("short write: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- interaction edge lists (TSV) ------------------------------------------

inline constexpr const char* kEdgelistHeader = "user_id\tclaim_id\trelation\tweight";

// TSV with a header row; '#' lines and blank lines are skipped; the weight
// column may be omitted per row (defaults to 1.0).
inline std::vector<InteractionRecord> load_edgelist(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<InteractionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        std::string where = path + ":" + std::to_string(lineno);
        std::vector<std::string> f = detail::split(line, '\t');
        if (!header_seen) {
            if (f.size() < 3 || f[0] != "user_id" || f[1] != "claim_id" || f[2] != "relation")
                throw DataError(where + ": expected edge-list header \"" +
                                std::string(kEdgelistHeader) + "\"");
            header_seen = true;
            continue;
        }
        if (f.size() < 3 || f.size() > 4)
            throw DataError(where + ": expected 3 or 4 tab-separated fields, got " +
                            std::to_string(f.size()));
        InteractionRecord rec;
        rec.user = f[0];
        rec.claim = f[1];
        rec.relation = f[2];
        rec.weight = f.size() == 4 ? detail::parse_real(f[3], where) : 1.0;
        if (rec.user.empty() || rec.claim.empty() || rec.relation.empty())
            throw DataError(where + ": empty identifier");
        if (!(rec.weight >= 0.0) || !std::isfinite(rec.weight))
            throw DataError(where + ": weight must be finite and >= 0");
        out.push_back(std::move(rec));
    }
    if (!header_seen) throw DataError(path + ": missing edge-list header");
    return out;
}

// Rejects records the reader could not load back (the grammar excludes tabs,
// newlines, and user ids opening a comment).
inline std::string format_edgelist(const std::vector<InteractionRecord>& records) {
    std::string out = std::string(kEdgelistHeader) + "\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const InteractionRecord& r = records[i];
        for (const std::string* s : {&r.user, &r.claim, &r.relation}) {
            if (s->empty()) throw DataError("record " + std::to_string(i) + ": empty identifier");
            if (s->find_first_of("\t\n\r") != std::string::npos)
                throw DataError("record " + std::to_string(i) +
                                ": identifiers may not contain tabs or line breaks");
        }
        if (r.user[0] == '#')
            throw DataError("record " + std::to_string(i) +
                            ": user id may not start with '#'");
        if (!(r.weight >= 0.0) || !std::isfinite(r.weight))
            throw DataError("record " + std::to_string(i) + ": weight must be finite and >= 0");
        out += r.user + "\t" + r.claim + "\t" + r.relation + "\t" + detail::g17(r.weight) + "\n";
    }
    return out;
}

inline void write_edgelist(const std::string& path,
                           const std::vector<InteractionRecord>& records) {
    write_file_atomic(path, format_edgelist(records));
}

// ---- label and ideology side files (TSV) ------------------------------------

// `node_id<TAB>label`, '#' comments; later rows overwrite earlier ones.
inline std::map<std::string, std::string> load_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f = detail::split(line, '\t');
        std::string where = path + ":" + std::to_string(lineno);
        if (f.size() != 2) throw DataError(where + ": expected node_id<TAB>label");
        if (f[0].empty() || f[1].empty()) throw DataError(where + ": empty field");
        out[f[0]] = f[1];
    }
    return out;
}

inline std::string format_labels(const std::map<std::string, std::string>& labels) {
    std::string out;
    for (const auto& [id, label] : labels) {
        for (const std::string* s : {&id, &label})
            if (s->empty() || s->find_first_of("\t\n\r") != std::string::npos ||
                (*s)[0] == '#')
                throw DataError("label entry not representable in TSV: \"" + *s + "\"");
        out += id + "\t" + label + "\n";
    }
    return out;
}

inline void write_labels(const std::string& path,
                         const std::map<std::string, std::string>& labels) {
    write_file_atomic(path, format_labels(labels));
}

// `node_id<TAB>value` with real-valued entries (e.g. external ideology scores).
inline std::map<std::string, double> load_ideology(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::map<std::string, double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f = detail::split(line, '\t');
        std::string where = path + ":" + std::to_string(lineno);
        if (f.size() != 2) throw DataError(where + ": expected node_id<TAB>value");
        if (f[0].empty()) throw DataError(where + ": empty node id");
        double v = detail::parse_real(f[1], where);
        if (!std::isfinite(v)) throw DataError(where + ": value must be finite");
        out[f[0]] = v;
    }
    return out;
}

// Maps raw per-id labels onto graph node indices. Class ids follow the sorted
// distinct label strings actually applied, so they are stable across runs.
inline LabelSet make_label_set(const Bhin& g,
                               const std::map<std::string, std::string>& user_labels,
                               const std::map<std::string, std::string>& claim_labels) {
    std::vector<std::string> applied(g.num_nodes());
    std::vector<bool> has(g.num_nodes(), false);
    for (std::size_t i = 0; i < g.num_users(); ++i) {
        auto it = user_labels.find(g.user_ids[i]);
        if (it != user_labels.end()) {
            applied[i] = it->second;
            has[i] = true;
        }
    }
    for (std::size_t i = 0; i < g.num_claims(); ++i) {
        auto it = claim_labels.find(g.claim_ids[i]);
        if (it != claim_labels.end()) {
            applied[g.claim_node(i)] = it->second;
            has[g.claim_node(i)] = true;
        }
    }
    std::map<std::string, int> class_ix;
    for (std::size_t i = 0; i < applied.size(); ++i)
        if (has[i]) class_ix.emplace(applied[i], 0);
    LabelSet set;
    for (auto& [name, ix] : class_ix) {
        ix = static_cast<int>(set.class_names.size());
        set.class_names.push_back(name);
    }
    set.label.assign(g.num_nodes(), -1);
    for (std::size_t i = 0; i < applied.size(); ++i)
        if (has[i]) set.label[i] = class_ix[applied[i]];
    return set;
}

// Per-node external values aligned to graph indexing; NaN where absent.
inline std::vector<double> ideology_vector(const Bhin& g,
                                           const std::map<std::string, double>& values) {
    std::vector<double> out(g.num_nodes(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < g.num_users(); ++i) {
        auto it = values.find(g.user_ids[i]);
        if (it != values.end()) out[i] = it->second;
    }
    for (std::size_t i = 0; i < g.num_claims(); ++i) {
        auto it = values.find(g.claim_ids[i]);
        if (it != values.end()) out[g.claim_node(i)] = it->second;
    }
    return out;
}

// ---- roll-call ingestion (CSV) ----------------------------------------------

struct RollcallOptions {
    // Members outside these parties are dropped along with their votes.
    std::vector<std::string> parties{"100", "200"};
    // Raw cast code -> relation category; empty category means skip the vote.
    std::map<std::string, std::string> cast_map{
        {"0", ""},         {"1", "yea"},      {"2", "yea"},  {"3", "yea"},
        {"4", "nay"},      {"5", "nay"},      {"6", "nay"},  {"7", "abstain"},
        {"8", "abstain"},  {"9", "abstain"},  {"yea", "yea"}, {"nay", "nay"},
        {"abstain", "abstain"},
    };
    bool skip_unknown_cast = false; // false: unknown codes are an error
};

struct RollcallData {
    std::vector<InteractionRecord> records;
    std::map<std::string, std::string> user_labels;  // member -> party
    std::map<std::string, std::string> claim_labels; // bill -> majority-yea party
};

// members CSV: header `member_id,party`; votes CSV: header
// `member_id,bill_id,cast`. Bill labels are the strict-majority party among
// yea votes of kept members; ties leave the bill unlabeled.
inline RollcallData load_rollcall(const std::string& members_path,
                                  const std::string& votes_path,
                                  const RollcallOptions& opts = {}) {
    std::ifstream members_in(members_path);
    if (!members_in) throw IoError("cannot open: " + members_path);
    std::map<std::string, std::string> party_of;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(members_in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> f = detail::split(line, ',');
        std::string where = members_path + ":" + std::to_string(lineno);
        if (!header) {
            if (f.size() != 2 || f[0] != "member_id" || f[1] != "party")
                throw DataError(where + ": expected header member_id,party");
            header = true;
            continue;
        }
        if (f.size() != 2 || f[0].empty() || f[1].empty())
            throw DataError(where + ": expected member_id,party");
        party_of[f[0]] = f[1];
    }
    if (!header) throw DataError(members_path + ": missing header member_id,party");

    auto kept = [&](const std::string& party) {
        for (const std::string& p : opts.parties)
            if (p == party) return true;
        return false;
    };

    RollcallData out;
    std::map<std::string, std::map<std::string, std::size_t>> yea_by_party; // bill -> party -> n
    std::ifstream votes_in(votes_path);
    if (!votes_in) throw IoError("cannot open: " + votes_path);
    lineno = 0;
    header = false;
    while (std::getline(votes_in, line)) {
        ++lineno;
        detail::strip_cr(line);
        if (line.empty()) continue;
        std::vector<std::string> f = detail::split(line, ',');
        std::string where = votes_path + ":" + std::to_string(lineno);
        if (!header) {
            if (f.size() != 3 || f[0] != "member_id" || f[1] != "bill_id" || f[2] != "cast")
                throw DataError(where + ": expected header member_id,bill_id,cast");
            header = true;
            continue;
        }
        if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty())
            throw DataError(where + ": expected member_id,bill_id,cast");
        auto pit = party_of.find(f[0]);
        if (pit == party_of.end())
            throw DataError(where + ": vote by unknown member \"" + f[0] + "\"");
        if (!kept(pit->second)) continue;
        auto cit = opts.cast_map.find(f[2]);
        if (cit == opts.cast_map.end()) {
            if (opts.skip_unknown_cast) continue;
            throw DataError(where + ": unknown cast code \"" + f[2] + "\"");
        }
        if (cit->second.empty()) continue;
        out.records.push_back(InteractionRecord{f[0], f[1], cit->second, 1.0});
        out.user_labels[f[0]] = pit->second;
        if (cit->second == "yea") ++yea_by_party[f[1]][pit->second];
    }
    if (!header) throw DataError(votes_path + ": missing header member_id,bill_id,cast");

    for (const auto& [bill, counts] : yea_by_party) {
        std::string best;
        std::size_t best_n = 0;
        bool tie = false;
        for (const auto& [party, n] : counts) {
            if (n > best_n) {
                best = party;
                best_n = n;
                tie = false;
            } else if (n == best_n) {
                tie = true;
            }
        }
        if (!tie && best_n > 0) out.claim_labels[bill] = best;
    }
    return out;
}

// ---- synthetic two-block benchmark ------------------------------------------

struct SyntheticData {
    std::vector<InteractionRecord> records;
    std::map<std::string, std::string> user_labels;
    std::map<std::string, std::string> claim_labels;
};

// Users and claims split evenly into two blocks; a user-claim edge appears
// with probability p_in inside a block and p_out across blocks. One uniform
// draw per pair keeps the record stream a pure function of the seed.
inline SyntheticData generate_synthetic(std::size_t users, std::size_t claims, double p_in,
                                        double p_out, std::uint64_t seed) {
    if (!(p_in >= 0.0 && p_in <= 1.0 && p_out >= 0.0 && p_out <= 1.0))
        throw ConfigError("edge probabilities must lie in [0, 1]");
    if (users == 0 || claims == 0) throw ConfigError("need at least one user and one claim");
    SyntheticData out;
    Rng rng(seed);
    auto block = [](std::size_t i, std::size_t n) { return 2 * i < n ? 0 : 1; };
    for (std::size_t u = 0; u < users; ++u) {
        std::string uid = "u" + std::to_string(u);
        out.user_labels[uid] = std::to_string(block(u, users));
        for (std::size_t c = 0; c < claims; ++c) {
            double p = block(u, users) == block(c, claims) ? p_in : p_out;
            if (rng.uniform() < p)
                out.records.push_back(
                    InteractionRecord{uid, "c" + std::to_string(c), "act", 1.0});
        }
    }
    for (std::size_t c = 0; c < claims; ++c)
        out.claim_labels["c" + std::to_string(c)] = std::to_string(block(c, claims));
    return out;
}

// ---- scatter emission (CSV + optional SVG) -----------------------------------

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

inline const char* scatter_color(int cls) {
    switch (cls) {
    case 0: return "#1f77b4";
    case 1: return "#d62728";
    case 2: return "#2ca02c";
    default: return cls < 0 ? "#999999" : "#9467bd";
    }
}

} // namespace detail

// CSV columns: node_id,node_type,x,y,label with x/y taken from the first two
// selected axes; unlabeled nodes carry "-". The optional SVG draws users as
// circles, claims as squares, and the x = y separating diagonal.
inline void emit_scatter(const std::string& csv_path, const std::string& svg_path,
                         const DenseMatrix& z, const AxisSelection& axes, const Bhin& g,
                         const LabelSet& labels) {
    if (axes.selected.size() < 2) throw ContractError("emit_scatter: need two selected axes");
    if (z.rows != g.num_nodes() || labels.label.size() != z.rows)
        throw ContractError("emit_scatter: shape mismatch");
    std::size_t ax = axes.selected[0], ay = axes.selected[1];

    auto node_id = [&](std::size_t i) {
        return i < g.num_users() ? g.user_ids[i] : g.claim_ids[i - g.num_users()];
    };
    auto label_of = [&](std::size_t i) {
        int l = labels.label[i];
        return l < 0 ? std::string("-") : labels.class_names[static_cast<std::size_t>(l)];
    };

    std::string csv = "node_id,node_type,x,y,label\n";
    for (std::size_t i = 0; i < z.rows; ++i) {
        char xy[80];
        std::snprintf(xy, sizeof xy, "%.6f,%.6f", z(i, ax), z(i, ay));
        csv += detail::csv_field(node_id(i)) + "," +
               (i < g.num_users() ? "user" : "claim") + "," + xy + "," +
               detail::csv_field(label_of(i)) + "\n";
    }
    write_file_atomic(csv_path, csv);

    if (svg_path.empty()) return;
    double lo = 0.0, hi = 1e-9;
    for (std::size_t i = 0; i < z.rows; ++i) {
        lo = std::min({lo, z(i, ax), z(i, ay)});
        hi = std::max({hi, z(i, ax), z(i, ay)});
    }
    const double size = 640.0, margin = 50.0;
    auto px = [&](double v) { return margin + (v - lo) / (hi - lo) * (size - 2 * margin); };
    auto py = [&](double v) { return size - px(v); };
    char buf[256];
    std::string svg =
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 640\">\n"
        "<rect width=\"640\" height=\"640\" fill=\"#ffffff\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" "
                  "stroke=\"#555555\" stroke-dasharray=\"6 4\"/>\n",
                  px(lo), py(lo), px(hi), py(hi));
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.0f\" y=\"%.0f\" font-size=\"14\">axis %zu</text>\n", size / 2 - 20,
                  size - 12.0, ax);
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"14\" y=\"%.0f\" font-size=\"14\" transform=\"rotate(-90 14 %.0f)\">"
                  "axis %zu</text>\n",
                  size / 2 + 20, size / 2 + 20, ay);
    svg += buf;
    for (std::size_t i = 0; i < z.rows; ++i) {
        const char* color = detail::scatter_color(labels.label[i]);
        double x = px(z(i, ax)), y = py(z(i, ay));
        if (i < g.num_users())
            std::snprintf(buf, sizeof buf,
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"5\" fill=\"%s\" "
                          "fill-opacity=\"0.8\"/>\n",
                          x, y, color);
        else
            std::snprintf(buf, sizeof buf,
                          "<rect x=\"%.2f\" y=\"%.2f\" width=\"8\" height=\"8\" fill=\"%s\" "
                          "fill-opacity=\"0.8\"/>\n",
                          x - 4, y - 4, color);
        svg += buf;
    }
    svg += "</svg>\n";
    write_file_atomic(svg_path, svg);
}

// ---- checkpoint container -----------------------------------------------------

inline constexpr const char* kCheckpointMagic = "IVGAE1";

// Line-oriented container: magic, a one-line JSON config echo, then named
// matrices with shape tags and %.17g rows, which round-trip doubles exactly.
struct Checkpoint {
    nlohmann::ordered_json config;
    std::vector<std::pair<std::string, DenseMatrix>> matrices;

    const DenseMatrix* find(const std::string& name) const {
        for (const auto& [n, m] : matrices)
            if (n == name) return &m;
        return nullptr;
    }
};

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string out = std::string(kCheckpointMagic) + "\n";
    out += "config " + ckpt.config.dump() + "\n";
    out += "matrices " + std::to_string(ckpt.matrices.size()) + "\n";
    for (const auto& [name, m] : ckpt.matrices) {
        check_finite(m, ("checkpoint matrix " + name).c_str());
        if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
            throw DataError("checkpoint matrix name not representable: \"" + name + "\"");
        out += "matrix " + name + " " + std::to_string(m.rows) + " " +
               std::to_string(m.cols) + "\n";
        for (std::size_t i = 0; i < m.rows; ++i) {
            for (std::size_t j = 0; j < m.cols; ++j) {
                if (j) out += ' ';
                out += detail::g17(m(i, j));
            }
            out += '\n';
        }
    }
    write_file_atomic(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    detail::strip_cr(line);
    if (line != kCheckpointMagic)
        throw DataError(path + ": not a checkpoint file (bad magic)");

    Checkpoint ckpt;
    if (!std::getline(in, line)) throw DataError(path + ": missing config line");
    detail::strip_cr(line);
    if (line.rfind("config ", 0) != 0) throw DataError(path + ": missing config line");
    try {
        ckpt.config = nlohmann::ordered_json::parse(line.substr(7));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(path + ": bad config json: " + e.what());
    }

    if (!std::getline(in, line)) throw DataError(path + ": missing matrices count");
    detail::strip_cr(line);
    std::size_t count = 0;
    if (std::sscanf(line.c_str(), "matrices %zu", &count) != 1)
        throw DataError(path + ": missing matrices count");

    for (std::size_t k = 0; k < count; ++k) {
        if (!std::getline(in, line)) throw DataError(path + ": truncated matrix header");
        detail::strip_cr(line);
        char name[128];
        std::size_t rows = 0, cols = 0;
        if (std::sscanf(line.c_str(), "matrix %127s %zu %zu", name, &rows, &cols) != 3)
            throw DataError(path + ": bad matrix header: " + line);
        DenseMatrix m(rows, cols);
        for (std::size_t i = 0; i < rows; ++i) {
            if (!std::getline(in, line)) throw DataError(path + ": truncated matrix data");
            detail::strip_cr(line);
            std::istringstream row(line);
            for (std::size_t j = 0; j < cols; ++j)
                if (!(row >> m(i, j)))
                    throw DataError(path + ": short row in matrix " + std::string(name));
            std::string extra;
            if (row >> extra)
                throw DataError(path + ": long row in matrix " + std::string(name));
        }
        check_finite(m, (path + ": matrix " + name).c_str());
        ckpt.matrices.emplace_back(name, std::move(m));
    }
    return ckpt;
}

inline Checkpoint make_checkpoint(const EncoderParams& enc, const DiscriminatorParams* disc,
                                  const nlohmann::ordered_json& config_echo) {
    Checkpoint ckpt;
    ckpt.config = config_echo;
    for (std::size_t l = 0; l < enc.layers.size(); ++l)
        for (std::size_t r = 0; r < enc.layers[l].size(); ++r)
            ckpt.matrices.emplace_back(
                "layer" + std::to_string(l) + "_rel" + std::to_string(r), enc.layers[l][r]);
    ckpt.matrices.emplace_back("head_mu", enc.head_mu);
    ckpt.matrices.emplace_back("head_sigma", enc.head_sigma);
    if (disc) {
        ckpt.matrices.emplace_back("disc_w1", disc->w1);
        ckpt.matrices.emplace_back("disc_b1", disc->b1);
        ckpt.matrices.emplace_back("disc_w2", disc->w2);
        ckpt.matrices.emplace_back("disc_b2", disc->b2);
    }
    return ckpt;
}

inline EncoderParams encoder_from_checkpoint(const Checkpoint& ckpt) {
    EncoderParams enc;
    for (std::size_t l = 0;; ++l) {
        std::vector<DenseMatrix> layer;
        for (std::size_t r = 0;; ++r) {
            const DenseMatrix* m =
                ckpt.find("layer" + std::to_string(l) + "_rel" + std::to_string(r));
            if (!m) break;
            layer.push_back(*m);
        }
        if (layer.empty()) break;
        enc.layers.push_back(std::move(layer));
    }
    const DenseMatrix* mu = ckpt.find("head_mu");
    const DenseMatrix* sigma = ckpt.find("head_sigma");
    if (enc.layers.empty() || !mu || !sigma)
        throw DataError("checkpoint does not contain a complete encoder");
    enc.head_mu = *mu;
    enc.head_sigma = *sigma;
    return enc;
}

// ---- trace and metric emission -------------------------------------------------

inline void write_trace_csv(const std::string& path, const TrainTrace& trace) {
    std::string out = "step,recon,kl,beta,tc,disc,wall_ms\n";
    for (const TrainStepRecord& r : trace.rows)
        out += std::to_string(r.step) + "," + detail::g17(r.recon) + "," + detail::g17(r.kl) +
               "," + detail::g17(r.beta) + "," + detail::g17(r.tc) + "," +
               detail::g17(r.disc) + "," + detail::g17(r.wall_ms) + "\n";
    write_file_atomic(path, out);
}

inline void write_controller_trace_csv(const std::string& path,
                                       const std::vector<ControllerTraceRow>& rows) {
    std::string out = "step,kl_actual,error,beta\n";
    for (const ControllerTraceRow& r : rows)
        out += std::to_string(r.step) + "," + detail::g17(r.kl_actual) + "," +
               detail::g17(r.error) + "," + detail::g17(r.beta) + "\n";
    write_file_atomic(path, out);
}

namespace detail {

template <typename Fn>
inline void metrics_visit(const MetricsReport& rep, Fn&& fn) {
    fn("user_precision", rep.user_precision);
    fn("user_recall", rep.user_recall);
    fn("user_f1", rep.user_f1);
    fn("claim_precision", rep.claim_precision);
    fn("claim_recall", rep.claim_recall);
    fn("claim_f1", rep.claim_f1);
    fn("purity", rep.purity);
    if (rep.kendall_overall) fn("kendall_overall", *rep.kendall_overall);
    if (rep.kendall_group_0) fn("kendall_group_0", *rep.kendall_group_0);
    if (rep.kendall_group_1) fn("kendall_group_1", *rep.kendall_group_1);
    if (rep.cosine_similarity) fn("cosine_similarity", *rep.cosine_similarity);
}

} // namespace detail

inline void write_metrics_txt(const std::string& path, const MetricsReport& rep) {
    std::string out;
    detail::metrics_visit(rep, [&](const char* key, double v) {
        out += std::string(key) + " " + detail::g17(v) + "\n";
    });
    write_file_atomic(path, out);
}

inline void write_metrics_json(const std::string& path, const MetricsReport& rep) {
    nlohmann::ordered_json j;
    detail::metrics_visit(rep, [&](const char* key, double v) { j[key] = v; });
    write_file_atomic(path, j.dump(2) + "\n");
}

// ---- run configuration ----------------------------------------------------------

enum class DatasetKind { edgelist, rollcall, synth };

struct SynthSpec {
    std::size_t users = 40;
    std::size_t claims = 60;
    double p_in = 0.3;
    double p_out = 0.02;
};

// One JSON file describing a full run; every key is checked before any work
// starts and referenced input paths must exist. Relative paths resolve
// against the config file's directory.
struct RunConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "run_out";
    DatasetKind dataset = DatasetKind::edgelist;
    std::string edgelist_path;
    std::string rollcall_members_path;
    std::string rollcall_votes_path;
    SynthSpec synth;
    std::string user_labels_path;  // optional
    std::string claim_labels_path; // optional
    std::string ideology_path;     // optional
    std::size_t min_degree = 1;
    TrainConfig train; // model config nested inside; seed mirrored from above
    std::size_t k_axes = 2;

    // The checkpoint config echo: everything needed to rerun except paths.
    nlohmann::ordered_json echo_without_paths() const {
        nlohmann::ordered_json j;
        j["seed"] = seed;
        j["min_degree"] = min_degree;
        j["model"] = {{"latent_dim", train.model.latent_dim},
                      {"hidden_dims", train.model.hidden_dims},
                      {"rectified", train.model.rectified}};
        j["train"] = {{"epochs", train.epochs},
                      {"lr_vae", train.lr_vae},
                      {"lr_disc", train.lr_disc},
                      {"lambda_tc", train.lambda_tc},
                      {"disc_hidden", train.disc_hidden},
                      {"pi_kp", train.pi_kp},
                      {"pi_ki", train.pi_ki},
                      {"pi_kl_set", train.pi_kl_set},
                      {"no_tc", train.no_tc},
                      {"no_pi", train.no_pi},
                      {"gaussian", train.gaussian},
                      {"log_every", train.log_every},
                      {"early_stop_delta", train.early_stop_delta},
                      {"early_stop_patience", train.early_stop_patience}};
        j["analysis"] = {{"k_axes", k_axes}};
        return j;
    }
};

namespace detail {

using json = nlohmann::json;

inline void check_keys(const json& obj, const std::vector<std::string>& allowed,
                       const std::string& ctx) {
    for (const auto& el : obj.items()) {
        bool ok = false;
        for (const std::string& a : allowed)
            if (a == el.key()) ok = true;
        if (!ok) throw ConfigError("unknown key \"" + el.key() + "\" in " + ctx);
    }
}

inline double cfg_real(const json& j, const std::string& ctx) {
    if (!j.is_number()) throw ConfigError(ctx + " must be a number");
    return j.get<double>();
}

inline std::uint64_t cfg_uint(const json& j, const std::string& ctx) {
    if (!j.is_number_unsigned()) throw ConfigError(ctx + " must be a nonnegative integer");
    return j.get<std::uint64_t>();
}

inline bool cfg_bool(const json& j, const std::string& ctx) {
    if (!j.is_boolean()) throw ConfigError(ctx + " must be a boolean");
    return j.get<bool>();
}

inline std::string cfg_string(const json& j, const std::string& ctx) {
    if (!j.is_string()) throw ConfigError(ctx + " must be a string");
    return j.get<std::string>();
}

inline std::string cfg_path(const json& j, const std::string& ctx,
                            const std::filesystem::path& base) {
    std::filesystem::path p(cfg_string(j, ctx));
    if (p.is_relative()) p = base / p;
    if (!std::filesystem::exists(p))
        throw ConfigError(ctx + ": referenced path does not exist: " + p.string());
    return p.string();
}

} // namespace detail

inline RunConfig load_run_config(const std::string& path) {
    namespace fs = std::filesystem;
    using detail::json;
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path);
    json root;
    try {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        root = json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path + ": invalid json: " + std::string(e.what()));
    }
    if (!root.is_object()) throw ConfigError(path + ": config must be a json object");
    fs::path base = fs::path(path).parent_path();

    detail::check_keys(root,
                       {"seed", "output_dir", "dataset", "labels", "ideology", "min_degree",
                        "model", "train", "analysis"},
                       "config");
    if (!root.contains("seed")) throw ConfigError("config requires an explicit \"seed\"");

    RunConfig cfg;
    cfg.seed = detail::cfg_uint(root["seed"], "seed");
    if (root.contains("output_dir")) {
        fs::path out(detail::cfg_string(root["output_dir"], "output_dir"));
        cfg.output_dir = (out.is_relative() ? base / out : out).string();
    } else {
        cfg.output_dir = (base / cfg.output_dir).string();
    }
    if (root.contains("min_degree"))
        cfg.min_degree = detail::cfg_uint(root["min_degree"], "min_degree");

    if (!root.contains("dataset") || !root["dataset"].is_object())
        throw ConfigError("config requires a \"dataset\" object");
    const json& ds = root["dataset"];
    detail::check_keys(ds, {"edgelist", "rollcall", "synth"}, "dataset");
    if (ds.size() != 1)
        throw ConfigError("dataset must contain exactly one of edgelist, rollcall, synth");
    if (ds.contains("edgelist")) {
        cfg.dataset = DatasetKind::edgelist;
        cfg.edgelist_path = detail::cfg_path(ds["edgelist"], "dataset.edgelist", base);
    } else if (ds.contains("rollcall")) {
        cfg.dataset = DatasetKind::rollcall;
        const json& rc = ds["rollcall"];
        if (!rc.is_object()) throw ConfigError("dataset.rollcall must be an object");
        detail::check_keys(rc, {"members", "votes"}, "dataset.rollcall");
        if (!rc.contains("members") || !rc.contains("votes"))
            throw ConfigError("dataset.rollcall requires members and votes paths");
        cfg.rollcall_members_path =
            detail::cfg_path(rc["members"], "dataset.rollcall.members", base);
        cfg.rollcall_votes_path = detail::cfg_path(rc["votes"], "dataset.rollcall.votes", base);
    } else {
        cfg.dataset = DatasetKind::synth;
        const json& sy = ds["synth"];
        if (!sy.is_object()) throw ConfigError("dataset.synth must be an object");
        detail::check_keys(sy, {"users", "claims", "p_in", "p_out"}, "dataset.synth");
        if (sy.contains("users"))
            cfg.synth.users = detail::cfg_uint(sy["users"], "dataset.synth.users");
        if (sy.contains("claims"))
            cfg.synth.claims = detail::cfg_uint(sy["claims"], "dataset.synth.claims");
        if (sy.contains("p_in"))
            cfg.synth.p_in = detail::cfg_real(sy["p_in"], "dataset.synth.p_in");
        if (sy.contains("p_out"))
            cfg.synth.p_out = detail::cfg_real(sy["p_out"], "dataset.synth.p_out");
    }

    if (root.contains("labels")) {
        const json& lb = root["labels"];
        if (!lb.is_object()) throw ConfigError("labels must be an object");
        detail::check_keys(lb, {"users", "claims"}, "labels");
        if (lb.contains("users"))
            cfg.user_labels_path = detail::cfg_path(lb["users"], "labels.users", base);
        if (lb.contains("claims"))
            cfg.claim_labels_path = detail::cfg_path(lb["claims"], "labels.claims", base);
    }
    if (root.contains("ideology"))
        cfg.ideology_path = detail::cfg_path(root["ideology"], "ideology", base);

    if (root.contains("model")) {
        const json& mo = root["model"];
        if (!mo.is_object()) throw ConfigError("model must be an object");
        detail::check_keys(mo, {"latent_dim", "hidden_dims", "rectified"}, "model");
        if (mo.contains("latent_dim"))
            cfg.train.model.latent_dim =
                detail::cfg_uint(mo["latent_dim"], "model.latent_dim");
        if (mo.contains("hidden_dims")) {
            if (!mo["hidden_dims"].is_array())
                throw ConfigError("model.hidden_dims must be an array");
            cfg.train.model.hidden_dims.clear();
            for (const json& h : mo["hidden_dims"])
                cfg.train.model.hidden_dims.push_back(
                    detail::cfg_uint(h, "model.hidden_dims entry"));
        }
        if (mo.contains("rectified"))
            cfg.train.model.rectified = detail::cfg_bool(mo["rectified"], "model.rectified");
    }

    if (root.contains("train")) {
        const json& tr = root["train"];
        if (!tr.is_object()) throw ConfigError("train must be an object");
        detail::check_keys(tr,
                           {"epochs", "lr_vae", "lr_disc", "lambda_tc", "disc_hidden", "pi_kp",
                            "pi_ki", "pi_kl_set", "no_tc", "no_pi", "gaussian", "log_every",
                            "early_stop_delta", "early_stop_patience"},
                           "train");
        if (tr.contains("epochs"))
            cfg.train.epochs = detail::cfg_uint(tr["epochs"], "train.epochs");
        if (tr.contains("lr_vae")) cfg.train.lr_vae = detail::cfg_real(tr["lr_vae"], "train.lr_vae");
        if (tr.contains("lr_disc"))
            cfg.train.lr_disc = detail::cfg_real(tr["lr_disc"], "train.lr_disc");
        if (tr.contains("lambda_tc"))
            cfg.train.lambda_tc = detail::cfg_real(tr["lambda_tc"], "train.lambda_tc");
        if (tr.contains("disc_hidden"))
            cfg.train.disc_hidden = detail::cfg_uint(tr["disc_hidden"], "train.disc_hidden");
        if (tr.contains("pi_kp")) cfg.train.pi_kp = detail::cfg_real(tr["pi_kp"], "train.pi_kp");
        if (tr.contains("pi_ki")) cfg.train.pi_ki = detail::cfg_real(tr["pi_ki"], "train.pi_ki");
        if (tr.contains("pi_kl_set"))
            cfg.train.pi_kl_set = detail::cfg_real(tr["pi_kl_set"], "train.pi_kl_set");
        if (tr.contains("no_tc")) cfg.train.no_tc = detail::cfg_bool(tr["no_tc"], "train.no_tc");
        if (tr.contains("no_pi")) cfg.train.no_pi = detail::cfg_bool(tr["no_pi"], "train.no_pi");
        if (tr.contains("gaussian"))
            cfg.train.gaussian = detail::cfg_bool(tr["gaussian"], "train.gaussian");
        if (tr.contains("log_every"))
            cfg.train.log_every = detail::cfg_uint(tr["log_every"], "train.log_every");
        if (tr.contains("early_stop_delta"))
            cfg.train.early_stop_delta =
                detail::cfg_real(tr["early_stop_delta"], "train.early_stop_delta");
        if (tr.contains("early_stop_patience"))
            cfg.train.early_stop_patience =
                detail::cfg_uint(tr["early_stop_patience"], "train.early_stop_patience");
    }

    if (root.contains("analysis")) {
        const json& an = root["analysis"];
        if (!an.is_object()) throw ConfigError("analysis must be an object");
        detail::check_keys(an, {"k_axes"}, "analysis");
        if (an.contains("k_axes")) cfg.k_axes = detail::cfg_uint(an["k_axes"], "analysis.k_axes");
    }

    cfg.train.seed = cfg.seed;
    cfg.train.validate();
    if (cfg.k_axes < 1 || cfg.k_axes > cfg.train.model.latent_dim)
        throw ConfigError("analysis.k_axes must lie in [1, latent_dim]");
    return cfg;
}

} // namespace infovgae
