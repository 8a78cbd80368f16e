#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shopseq::csv {

// Minimal RFC-4180-ish CSV. Fields are quoted on output only when they
// contain a comma, quote, or newline, so canonical records round-trip
// byte-identically.

inline std::string escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string join(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out += ',';
        out += escape(fields[i]);
    }
    return out;
}

// Splits one line. Returns nullopt on malformed quoting.
inline std::optional<std::vector<std::string>> split(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool in_quotes = false;
    std::size_t i = 0;
    bool field_quoted = false;
    while (i < line.size()) {
        char c = line[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    i += 2;
                } else {
                    in_quotes = false;
                    ++i;
                }
            } else {
                cur += c;
                ++i;
            }
        } else if (c == '"') {
            if (!cur.empty() || field_quoted) return std::nullopt;  // quote mid-field
            in_quotes = true;
            field_quoted = true;
            ++i;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
            field_quoted = false;
            ++i;
        } else {
            cur += c;
            ++i;
        }
    }
    if (in_quotes) return std::nullopt;
    fields.push_back(std::move(cur));
    return fields;
}

}  // namespace shopseq::csv
