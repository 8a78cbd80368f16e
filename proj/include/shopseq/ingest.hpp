#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "shopseq/core.hpp"
#include "shopseq/csv.hpp"
#include "shopseq/time.hpp"

namespace shopseq {

enum class FileFormat { csv, jsonl };
enum class ParseMode { strict, lenient };

struct RowError {
    std::int64_t row = 0;  // 1-based; row 1 is the CSV header
    std::string field;
    std::string message;
};

struct ParseResult {
    std::vector<Transaction> transactions;
    std::vector<RowError> errors;
};

inline const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> columns = {"account_id", "timestamp", "merchant_id",
                                                     "mcc",        "amount",    "direction"};
    return columns;
}

namespace detail {

inline void handle_row_error(ParseResult& result, ParseMode mode, std::int64_t row,
                             std::string field, std::string message) {
    if (mode == ParseMode::strict)
        throw Error("row " + std::to_string(row) + ", field '" + field + "': " + message);
    result.errors.push_back({row, std::move(field), std::move(message)});
}

// Reads one line, tolerating a trailing \r so CRLF files parse.
inline bool read_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

}  // namespace detail

inline ParseResult parse_transactions_csv(std::istream& in, ParseMode mode = ParseMode::lenient) {
    ParseResult result;
    std::string line;
    if (!detail::read_line(in, line)) throw Error("csv: empty input, missing header");
    auto header = csv::split(line);
    if (!header || *header != csv_columns()) {
        throw Error("csv: schema mismatch, expected header '" + csv::join(csv_columns()) +
                    "', got '" + line + "'");
    }
    std::int64_t row = 1;
    while (detail::read_line(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto fields = csv::split(line);
        if (!fields) {
            detail::handle_row_error(result, mode, row, "", "malformed csv quoting");
            continue;
        }
        if (fields->size() != csv_columns().size()) {
            detail::handle_row_error(result, mode, row, "",
                                     "expected " + std::to_string(csv_columns().size()) +
                                         " fields, got " + std::to_string(fields->size()));
            continue;
        }
        RawTransaction raw{(*fields)[0], (*fields)[1], (*fields)[2],
                           (*fields)[3], (*fields)[4], (*fields)[5]};
        auto parsed = validate_transaction(raw);
        if (!parsed) {
            detail::handle_row_error(result, mode, row, parsed.error().field,
                                     parsed.error().message);
            continue;
        }
        result.transactions.push_back(std::move(parsed.value()));
    }
    return result;
}

inline ParseResult parse_transactions_jsonl(std::istream& in, ParseMode mode = ParseMode::lenient) {
    ParseResult result;
    std::string line;
    std::int64_t row = 0;
    while (detail::read_line(in, line)) {
        ++row;
        if (line.empty()) continue;
        nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) {
            detail::handle_row_error(result, mode, row, "", "line is not a json object");
            continue;
        }
        RawTransaction raw;
        bool missing = false;
        auto get = [&](const char* key, std::string& out) {
            if (!obj.contains(key)) {
                detail::handle_row_error(result, mode, row, key, "missing key");
                missing = true;
                return;
            }
            const auto& v = obj.at(key);
            if (v.is_string())
                out = v.get<std::string>();
            else
                out = v.dump();
        };
        get("account_id", raw.account_id);
        if (!missing) get("timestamp", raw.timestamp);
        if (!missing) get("merchant_id", raw.merchant_id);
        if (!missing) get("mcc", raw.mcc);
        if (!missing) get("amount", raw.amount);
        if (!missing) get("direction", raw.direction);
        if (missing) continue;
        auto parsed = validate_transaction(raw);
        if (!parsed) {
            detail::handle_row_error(result, mode, row, parsed.error().field,
                                     parsed.error().message);
            continue;
        }
        result.transactions.push_back(std::move(parsed.value()));
    }
    return result;
}

inline ParseResult parse_transactions(std::istream& in, FileFormat format,
                                      ParseMode mode = ParseMode::lenient) {
    return format == FileFormat::csv ? parse_transactions_csv(in, mode)
                                     : parse_transactions_jsonl(in, mode);
}

inline ParseResult parse_transactions_file(const std::string& path, FileFormat format,
                                           ParseMode mode = ParseMode::lenient) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    return parse_transactions(in, format, mode);
}

// Canonical serialization: amounts with 2 decimals, whole-second timestamps.
inline std::string serialize_transaction_csv(const Transaction& t) {
    return csv::join({t.account_id, format_timestamp(t.timestamp), t.merchant_id, t.mcc,
                      format_amount(t.amount_cents), std::string(to_string(t.direction))});
}

inline void write_transactions_csv(std::ostream& out, std::span<const Transaction> transactions) {
    out << csv::join(csv_columns()) << '\n';
    for (const auto& t : transactions) out << serialize_transaction_csv(t) << '\n';
}

inline std::string serialize_transaction_jsonl(const Transaction& t) {
    nlohmann::ordered_json obj;
    obj["account_id"] = t.account_id;
    obj["timestamp"] = format_timestamp(t.timestamp);
    obj["merchant_id"] = t.merchant_id;
    obj["mcc"] = t.mcc;
    obj["amount"] = format_amount(t.amount_cents);
    obj["direction"] = std::string(to_string(t.direction));
    return obj.dump();
}

inline void write_error_report(std::ostream& out, std::span<const RowError> errors) {
    for (const auto& e : errors) {
        nlohmann::ordered_json obj;
        obj["row"] = e.row;
        obj["field"] = e.field;
        obj["message"] = e.message;
        out << obj.dump() << '\n';
    }
}

// Annualized inflow over a window. 365.25 / window-days scales the paper's
// quarterly observation up to a yearly figure; a lower bound on earnings.
inline double annualize(std::int64_t total_cents, double window_days) {
    if (window_days <= 0) throw Error("estimate_income: empty window");
    return static_cast<double>(total_cents) / 100.0 * (365.25 / window_days);
}

inline double estimate_income(std::span<const Transaction> transactions, const DateWindow& window,
                              const Timezone& tz = {}) {
    if (window.n_days() < 1) throw Error("estimate_income: empty window");
    std::int64_t total = 0;
    for (const auto& t : transactions) {
        if (t.direction != Direction::inflow) continue;
        if (!window.contains(civil_date_of(t.timestamp, tz))) continue;
        total += t.amount_cents;
    }
    return annualize(total, static_cast<double>(window.n_days()));
}

// All per-account sequences plus annualized incomes for one window.
struct Dataset {
    std::map<std::string, EventSequence> sequences;
    std::map<std::string, double> incomes;
    DateWindow window;
    Timezone timezone{};

    std::vector<std::string> account_ids() const {
        std::vector<std::string> ids;
        ids.reserve(sequences.size());
        for (const auto& [id, seq] : sequences) ids.push_back(id);
        return ids;
    }
};

inline Dataset build_dataset(std::span<const Transaction> transactions, const DateWindow& window,
                             const BuildOptions& options = {}) {
    std::map<std::string, std::vector<Transaction>> by_account;
    for (const auto& t : transactions) by_account[t.account_id].push_back(t);
    Dataset ds;
    ds.window = window;
    ds.timezone = options.timezone;
    for (auto& [id, txs] : by_account) {
        ds.sequences[id] = build_sequence(txs, window, options);
        ds.incomes[id] = estimate_income(txs, window, options.timezone);
    }
    return ds;
}

// Window spanning all transaction dates; used when the caller gives none.
inline DateWindow infer_window(std::span<const Transaction> transactions, const Timezone& tz = {}) {
    if (transactions.empty()) throw Error("cannot infer window from empty input");
    std::int64_t lo = transactions.front().timestamp, hi = lo;
    for (const auto& t : transactions) {
        lo = std::min(lo, t.timestamp);
        hi = std::max(hi, t.timestamp);
    }
    return DateWindow{civil_date_of(lo, tz), civil_date_of(hi, tz)};
}

// Partition into named income bands plus the residual "middle" cohort.
// Specs must be non-overlapping; strict bounds leave exact thresholds in the
// residual.
inline std::map<std::string, std::set<std::string>> segment_cohorts(
    const Dataset& dataset, std::span<const CohortSpec> specs,
    const std::string& residual_name = "middle") {
    for (const auto& s : specs) s.validate();
    for (std::size_t i = 0; i < specs.size(); ++i) {
        for (std::size_t j = i + 1; j < specs.size(); ++j) {
            double lo = std::max(specs[i].annual_inflow_min.value_or(-1.0),
                                 specs[j].annual_inflow_min.value_or(-1.0));
            double hi = std::min(
                specs[i].annual_inflow_max.value_or(std::numeric_limits<double>::infinity()),
                specs[j].annual_inflow_max.value_or(std::numeric_limits<double>::infinity()));
            if (lo < hi)
                throw Error("cohort specs '" + specs[i].name + "' and '" + specs[j].name +
                            "' overlap");
        }
        if (specs[i].name == residual_name)
            throw Error("cohort name '" + residual_name + "' is reserved for the residual");
    }
    std::map<std::string, std::set<std::string>> cohorts;
    for (const auto& s : specs) cohorts[s.name];
    cohorts[residual_name];
    for (const auto& [id, income] : dataset.incomes) {
        const CohortSpec* hit = nullptr;
        for (const auto& s : specs) {
            if (s.contains(income)) {
                hit = &s;
                break;
            }
        }
        cohorts[hit ? hit->name : residual_name].insert(id);
    }
    return cohorts;
}

}  // namespace shopseq
