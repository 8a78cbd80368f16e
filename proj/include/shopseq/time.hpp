#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace shopseq {

// Calendar date (proleptic Gregorian). Timestamps are UTC epoch seconds;
// date arithmetic goes through day numbers so no timezone database is needed.
struct CivilDate {
    int year = 1970;
    int month = 1;  // 1..12
    int day = 1;    // 1..31

    friend bool operator==(const CivilDate&, const CivilDate&) = default;
    friend auto operator<=>(const CivilDate& a, const CivilDate& b) {
        if (a.year != b.year) return a.year <=> b.year;
        if (a.month != b.month) return a.month <=> b.month;
        return a.day <=> b.day;
    }
};

inline bool is_leap_year(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int y, int m) {
    static constexpr int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap_year(y)) return 29;
    return lengths[m - 1];
}

// Days since 1970-01-01 (Howard Hinnant's algorithm).
inline std::int64_t days_from_civil(const CivilDate& c) {
    std::int64_t y = c.year;
    const int m = c.month;
    const int d = c.day;
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return CivilDate{static_cast<int>(y + (m <= 2)), static_cast<int>(m), static_cast<int>(d)};
}

// Fixed-offset timezone. "UTC", "Z", or "+HH:MM" / "-HH:MM".
struct Timezone {
    int offset_minutes = 0;

    friend bool operator==(const Timezone&, const Timezone&) = default;
};

inline std::optional<Timezone> parse_timezone(std::string_view s) {
    if (s == "UTC" || s == "Z" || s == "utc") return Timezone{0};
    if (s.size() == 6 && (s[0] == '+' || s[0] == '-') && s[3] == ':') {
        auto dig = [](char c) { return c >= '0' && c <= '9'; };
        if (!dig(s[1]) || !dig(s[2]) || !dig(s[4]) || !dig(s[5])) return std::nullopt;
        int h = (s[1] - '0') * 10 + (s[2] - '0');
        int m = (s[4] - '0') * 10 + (s[5] - '0');
        if (h > 14 || m > 59) return std::nullopt;
        int total = h * 60 + m;
        return Timezone{s[0] == '-' ? -total : total};
    }
    return std::nullopt;
}

inline std::string format_timezone(const Timezone& tz) {
    if (tz.offset_minutes == 0) return "UTC";
    int m = tz.offset_minutes < 0 ? -tz.offset_minutes : tz.offset_minutes;
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%c%02d:%02d", tz.offset_minutes < 0 ? '-' : '+', m / 60, m % 60);
    return buf;
}

constexpr std::int64_t kSecondsPerDay = 86400;

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

// Local day number of a UTC timestamp under a fixed-offset timezone.
inline std::int64_t day_index(std::int64_t epoch_seconds, const Timezone& tz = {}) {
    return floor_div(epoch_seconds + static_cast<std::int64_t>(tz.offset_minutes) * 60, kSecondsPerDay);
}

inline CivilDate civil_date_of(std::int64_t epoch_seconds, const Timezone& tz = {}) {
    return civil_from_days(day_index(epoch_seconds, tz));
}

// Strict ISO-8601 "YYYY-MM-DDTHH:MM:SSZ" -> UTC epoch seconds.
inline std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    if (s.size() != 20) return std::nullopt;
    if (s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':' || s[19] != 'Z')
        return std::nullopt;
    auto num = [&](int pos, int len) -> int {
        int v = 0;
        for (int i = pos; i < pos + len; ++i) {
            if (s[i] < '0' || s[i] > '9') return -1;
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    int year = num(0, 4), month = num(5, 2), day = num(8, 2);
    int hour = num(11, 2), minute = num(14, 2), second = num(17, 2);
    if (year < 0 || month < 1 || month > 12 || day < 1) return std::nullopt;
    if (day > days_in_month(year, month)) return std::nullopt;
    if (hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 || second > 59)
        return std::nullopt;
    return days_from_civil({year, month, day}) * kSecondsPerDay + hour * 3600 + minute * 60 + second;
}

inline std::string format_timestamp(std::int64_t epoch_seconds) {
    CivilDate d = civil_from_days(floor_div(epoch_seconds, kSecondsPerDay));
    std::int64_t sod = epoch_seconds - days_from_civil(d) * kSecondsPerDay;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02dZ", d.year, d.month, d.day,
                  static_cast<int>(sod / 3600), static_cast<int>((sod % 3600) / 60),
                  static_cast<int>(sod % 60));
    return buf;
}

// Strict "YYYY-MM-DD".
inline std::optional<CivilDate> parse_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    auto num = [&](int pos, int len) -> int {
        int v = 0;
        for (int i = pos; i < pos + len; ++i) {
            if (s[i] < '0' || s[i] > '9') return -1;
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    int year = num(0, 4), month = num(5, 2), day = num(8, 2);
    if (year < 0 || month < 1 || month > 12 || day < 1) return std::nullopt;
    if (day > days_in_month(year, month)) return std::nullopt;
    return CivilDate{year, month, day};
}

inline std::string format_date(const CivilDate& d) {
    char buf[12];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
    return buf;
}

// Inclusive calendar-date window.
struct DateWindow {
    CivilDate start;
    CivilDate end;

    std::int64_t n_days() const {
        return days_from_civil(end) - days_from_civil(start) + 1;
    }
    bool contains(const CivilDate& d) const { return start <= d && d <= end; }

    friend bool operator==(const DateWindow&, const DateWindow&) = default;
};

}  // namespace shopseq
