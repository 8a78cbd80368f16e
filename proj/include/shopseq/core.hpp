#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "shopseq/time.hpp"

namespace shopseq {

// Hard failures (IO, usage, broken preconditions) throw; per-row validation
// problems are returned as values so lenient parsing can collect them.
inline constexpr const char* kVersion = "0.1.0";

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct FieldError {
    std::string field;
    std::string message;
};

template <typename T>
class Expected {
public:
    Expected(T value) : data_(std::move(value)) {}
    Expected(FieldError err) : data_(std::move(err)) {}

    bool ok() const { return std::holds_alternative<T>(data_); }
    explicit operator bool() const { return ok(); }

    const T& value() const { return std::get<T>(data_); }
    T& value() { return std::get<T>(data_); }
    const FieldError& error() const { return std::get<FieldError>(data_); }

private:
    std::variant<T, FieldError> data_;
};

enum class Direction { inflow, outflow };

inline std::string_view to_string(Direction d) {
    return d == Direction::inflow ? "inflow" : "outflow";
}

// Amounts are exact minor units (cents); the sign lives in `direction`.
struct Transaction {
    std::string account_id;
    std::int64_t timestamp = 0;  // UTC epoch seconds
    std::string merchant_id;
    std::string mcc;  // exactly 4 decimal digits, zero padding preserved
    std::int64_t amount_cents = 0;
    Direction direction = Direction::outflow;

    friend bool operator==(const Transaction&, const Transaction&) = default;
};

// Raw string fields of one external record, before validation.
struct RawTransaction {
    std::string account_id;
    std::string timestamp;
    std::string merchant_id;
    std::string mcc;
    std::string amount;
    std::string direction;
};

inline bool is_valid_mcc(std::string_view s) {
    if (s.size() != 4) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    return true;
}

// Positive decimal with at most 2 fraction digits -> cents.
inline std::optional<std::int64_t> parse_amount_cents(std::string_view s) {
    if (s.empty() || s.size() > 18) return std::nullopt;
    std::int64_t whole = 0;
    std::size_t i = 0;
    bool any_digit = false;
    for (; i < s.size() && s[i] != '.'; ++i) {
        if (s[i] < '0' || s[i] > '9') return std::nullopt;
        whole = whole * 10 + (s[i] - '0');
        any_digit = true;
    }
    if (!any_digit) return std::nullopt;
    std::int64_t frac = 0;
    if (i < s.size()) {  // at the '.'
        ++i;
        std::size_t digits = s.size() - i;
        if (digits < 1 || digits > 2) return std::nullopt;
        for (; i < s.size(); ++i) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            frac = frac * 10 + (s[i] - '0');
        }
        if (digits == 1) frac *= 10;
    }
    return whole * 100 + frac;
}

inline std::string format_amount(std::int64_t cents) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%lld.%02lld", static_cast<long long>(cents / 100),
                  static_cast<long long>(cents % 100));
    return buf;
}

// Validates one raw record. Errors name the offending field and leave row
// context to the caller.
inline Expected<Transaction> validate_transaction(const RawTransaction& raw) {
    if (raw.account_id.empty())
        return FieldError{"account_id", "empty account id"};
    auto ts = parse_timestamp(raw.timestamp);
    if (!ts)
        return FieldError{"timestamp", "malformed timestamp '" + raw.timestamp +
                                           "' (expected YYYY-MM-DDTHH:MM:SSZ)"};
    if (raw.merchant_id.empty())
        return FieldError{"merchant_id", "empty merchant id"};
    if (!is_valid_mcc(raw.mcc))
        return FieldError{"mcc", "mcc '" + raw.mcc + "' is not 4 decimal digits"};
    auto amount = parse_amount_cents(raw.amount);
    if (!amount)
        return FieldError{"amount", "non-numeric amount '" + raw.amount + "'"};
    if (*amount <= 0)
        return FieldError{"amount", "amount must be positive, got '" + raw.amount + "'"};
    Direction dir;
    if (raw.direction == "inflow")
        dir = Direction::inflow;
    else if (raw.direction == "outflow")
        dir = Direction::outflow;
    else
        return FieldError{"direction", "unknown direction '" + raw.direction + "'"};
    return Transaction{raw.account_id, *ts, raw.merchant_id, raw.mcc, *amount, dir};
}

struct Event {
    std::int64_t timestamp = 0;
    std::string merchant_id;
    std::string mcc;

    friend bool operator==(const Event&, const Event&) = default;
};

// Per-account, time-ordered merchant visits. The unit of all analysis.
struct EventSequence {
    std::string account_id;
    std::vector<Event> events;
    DateWindow window;

    std::size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }

    std::size_t n_merchants() const {
        std::set<std::string_view> distinct;
        for (const auto& e : events) distinct.insert(e.merchant_id);
        return distinct.size();
    }

    friend bool operator==(const EventSequence&, const EventSequence&) = default;
};

struct BuildOptions {
    Timezone timezone{};
    // Collapse repeat same-day visits to one merchant into the first one.
    bool dedup_same_day = false;
    // MCCs excluded from visit sequences (e.g. cash withdrawals), kept in the
    // raw data so analyses can opt out.
    std::set<std::string> exclude_mccs;
};

// Visits are outflows only; inflows feed income estimation. Stable sort keeps
// ingestion order between equal timestamps.
inline EventSequence build_sequence(std::span<const Transaction> transactions,
                                    const DateWindow& window, const BuildOptions& options = {}) {
    EventSequence seq;
    seq.window = window;
    for (const auto& t : transactions) {
        if (seq.account_id.empty())
            seq.account_id = t.account_id;
        else if (t.account_id != seq.account_id)
            throw Error("build_sequence: mixed account ids '" + seq.account_id + "' and '" +
                        t.account_id + "'");
        if (t.direction != Direction::outflow) continue;
        if (options.exclude_mccs.count(t.mcc)) continue;
        if (!window.contains(civil_date_of(t.timestamp, options.timezone))) continue;
        seq.events.push_back({t.timestamp, t.merchant_id, t.mcc});
    }
    std::stable_sort(seq.events.begin(), seq.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp < b.timestamp; });
    if (options.dedup_same_day) {
        std::set<std::pair<std::int64_t, std::string>> seen;
        std::vector<Event> kept;
        kept.reserve(seq.events.size());
        for (auto& e : seq.events) {
            if (seen.insert({day_index(e.timestamp, options.timezone), e.merchant_id}).second)
                kept.push_back(std::move(e));
        }
        seq.events = std::move(kept);
    }
    return seq;
}

// Visit counts per merchant. p(j) = count(j) / total.
struct VisitDistribution {
    std::map<std::string, std::int64_t> counts;
    std::int64_t total = 0;

    std::vector<double> probabilities() const {
        std::vector<double> p;
        p.reserve(counts.size());
        for (const auto& [id, c] : counts) p.push_back(static_cast<double>(c) / total);
        return p;
    }
};

inline VisitDistribution visit_distribution(const EventSequence& seq) {
    VisitDistribution dist;
    for (const auto& e : seq.events) {
        ++dist.counts[e.merchant_id];
        ++dist.total;
    }
    return dist;
}

// MCC-level projection of the visit distribution.
inline VisitDistribution mcc_distribution(const EventSequence& seq) {
    VisitDistribution dist;
    for (const auto& e : seq.events) {
        ++dist.counts[e.mcc];
        ++dist.total;
    }
    return dist;
}

struct EntropyReport {
    std::string account_id;
    double s_rand = 0.0;
    double s_unc = 0.0;
    double s_true = 0.0;
    std::int64_t n_events = 0;
    std::int64_t n_merchants = 0;
};

// Income band. Both bounds strict when present: "less than" / "greater than".
struct CohortSpec {
    std::string name;
    std::optional<double> annual_inflow_min;
    std::optional<double> annual_inflow_max;

    void validate() const {
        if (name.empty()) throw Error("cohort spec: empty name");
        if (annual_inflow_min && annual_inflow_max && !(*annual_inflow_min < *annual_inflow_max))
            throw Error("cohort spec '" + name + "': min must be < max");
    }

    bool contains(double income) const {
        if (annual_inflow_min && !(income > *annual_inflow_min)) return false;
        if (annual_inflow_max && !(income < *annual_inflow_max)) return false;
        return true;
    }
};

}  // namespace shopseq
