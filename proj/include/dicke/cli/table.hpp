#pragma once

// Columnar output shared by every command.  A Table renders to CSV (with
// '# key=value' comment lines before the header) or to a JSON document with
// the same metadata, and both forms parse back into a Table.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dicke/error.hpp"

namespace dicke::cli {

using Json = nlohmann::ordered_json;

/// Locale-independent rendering with 17 significant digits.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last) throw ValidationError("not a number: '" + s + "'");
    return v;
}

using Cell = std::variant<double, std::int64_t, std::string>;

inline std::string cell_text(const Cell& c) {
    if (const auto* d = std::get_if<double>(&c)) return format_double(*d);
    if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
    return std::get<std::string>(c);
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

struct Table {
    std::string kind;
    std::vector<std::pair<std::string, std::string>> meta;  ///< echoed as comments, in order
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add_meta(const std::string& key, const std::string& value) { meta.emplace_back(key, value); }
    void add_meta(const std::string& key, double value) { meta.emplace_back(key, format_double(value)); }

    [[nodiscard]] std::string meta_value(const std::string& key) const {
        for (const auto& [k, v] : meta) {
            if (k == key) return v;
        }
        throw ValidationError("missing metadata key '" + key + "' in " + kind);
    }
    [[nodiscard]] bool has_meta(const std::string& key) const {
        for (const auto& kv : meta) {
            if (kv.first == key) return true;
        }
        return false;
    }
    [[nodiscard]] double meta_double(const std::string& key) const { return parse_double(meta_value(key)); }

    [[nodiscard]] std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i] == name) return i;
        }
        throw ValidationError("missing column '" + name + "' in " + kind);
    }
    [[nodiscard]] bool has_column(const std::string& name) const {
        for (const auto& c : columns) {
            if (c == name) return true;
        }
        return false;
    }
    [[nodiscard]] double number(std::size_t row, std::size_t col) const {
        const Cell& c = rows.at(row).at(col);
        if (const auto* d = std::get_if<double>(&c)) return *d;
        if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
        return parse_double(std::get<std::string>(c));
    }
    [[nodiscard]] std::string text(std::size_t row, std::size_t col) const {
        return cell_text(rows.at(row).at(col));
    }
};

inline std::string to_csv(const Table& t) {
    std::string out;
    out += "# kind=" + t.kind + "\r\n";
    for (const auto& [k, v] : t.meta) out += "# " + k + "=" + v + "\r\n";
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
        if (i) out += ',';
        out += csv_quote(t.columns[i]);
    }
    out += "\r\n";
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += csv_quote(cell_text(row[i]));
        }
        out += "\r\n";
    }
    return out;
}

inline Json to_json(const Table& t) {
    Json j;
    j["kind"] = t.kind;
    Json meta = Json::object();
    for (const auto& [k, v] : t.meta) meta[k] = v;
    j["meta"] = meta;
    j["columns"] = t.columns;
    Json rows = Json::array();
    for (const auto& row : t.rows) {
        Json r = Json::array();
        for (const auto& c : row) {
            if (const auto* d = std::get_if<double>(&c)) {
                r.push_back(*d);
            } else if (const auto* i = std::get_if<std::int64_t>(&c)) {
                r.push_back(*i);
            } else {
                r.push_back(std::get<std::string>(c));
            }
        }
        rows.push_back(std::move(r));
    }
    j["rows"] = std::move(rows);
    return j;
}

inline std::string dump_json(const Json& j) { return j.dump(2) + "\n"; }

namespace detail {

inline std::vector<std::string> split_csv_record(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

}  // namespace detail

/// Parses the CSV produced by to_csv.  Cells come back as strings.
inline Table parse_csv(const std::string& content) {
    Table t;
    std::istringstream in(content);
    std::string line;
    bool header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!header && line.rfind("# ", 0) == 0) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(2, eq - 2);
            const std::string value = line.substr(eq + 1);
            if (key == "kind") {
                t.kind = value;
            } else {
                t.meta.emplace_back(key, value);
            }
            continue;
        }
        if (!header) {
            t.columns = detail::split_csv_record(line);
            header = true;
            continue;
        }
        if (line.empty()) continue;
        auto fields = detail::split_csv_record(line);
        if (fields.size() != t.columns.size()) {
            throw ValidationError("CSV row has " + std::to_string(fields.size()) + " fields, header has " +
                                  std::to_string(t.columns.size()));
        }
        std::vector<Cell> row(fields.begin(), fields.end());
        t.rows.push_back(std::move(row));
    }
    if (!header) throw ValidationError("CSV has no header row");
    return t;
}

inline Table parse_table_json(const Json& j) {
    Table t;
    t.kind = j.at("kind").get<std::string>();
    for (const auto& [k, v] : j.at("meta").items()) t.meta.emplace_back(k, v.get<std::string>());
    t.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) {
        std::vector<Cell> row;
        for (const auto& c : r) {
            if (c.is_number_integer()) {
                row.emplace_back(c.get<std::int64_t>());
            } else if (c.is_number()) {
                row.emplace_back(c.get<double>());
            } else {
                row.emplace_back(c.get<std::string>());
            }
        }
        if (row.size() != t.columns.size()) throw ValidationError("JSON row width differs from columns");
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes to a sibling temporary and renames it over the target.
inline void write_atomic(const std::filesystem::path& p, const std::string& content) {
    namespace fs = std::filesystem;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw ValidationError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, p, ec);
    if (ec) {
        fs::remove(tmp);
        throw ValidationError("cannot move output into place at " + p.string() + ": " + ec.message());
    }
}

}  // namespace dicke::cli
