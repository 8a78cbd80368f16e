#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "shopseq/core.hpp"
#include "shopseq/ingest.hpp"
#include "shopseq/parallel.hpp"

namespace shopseq {

// Which label an event contributes to the symbol stream: individual stores or
// their 4-digit category codes.
enum class SymbolLevel { merchant, mcc };

inline std::string to_string(SymbolLevel level) {
    return level == SymbolLevel::merchant ? "merchant" : "mcc";
}

// How match lengths are computed.  Both scanners produce bit-identical
// results; `naive` is the simple quadratic reference, `indexed` builds a
// suffix automaton of the growing prefix.  `automatic` picks by length.
enum class LzScanner { naive, indexed, automatic };

// Events mapped to dense integer symbols in order of first appearance.
inline std::vector<std::int32_t> encode_symbols(const EventSequence& seq,
                                                SymbolLevel level = SymbolLevel::merchant) {
    std::vector<std::int32_t> symbols;
    symbols.reserve(seq.events.size());
    std::unordered_map<std::string, std::int32_t> ids;
    for (const Event& event : seq.events) {
        const std::string& key = level == SymbolLevel::merchant ? event.merchant_id : event.mcc;
        auto it = ids.find(key);
        if (it == ids.end()) {
            it = ids.emplace(key, static_cast<std::int32_t>(ids.size())).first;
        }
        symbols.push_back(it->second);
    }
    return symbols;
}

namespace detail {

// Occurrence-list walk shared by the scanner variants below.  `WordProbe`
// additionally screens candidates against the four trailing symbols of the
// current best match with one 32-bit compare; only the byte-packed variant
// uses it, since four symbols then fit a single register.
template <typename Sym, bool WordProbe>
inline void lz_walk(const Sym* code, std::int64_t n,
                    std::vector<std::vector<std::int32_t>>& occurrences,
                    std::vector<std::int64_t>& lengths) {
    std::int64_t prev = 0;  // best match length at the previous position
    for (std::int64_t i = 0; i < n; ++i) {
        const Sym c = code[i];
        const std::int64_t suffix_cap = n - i;
        // A match of length L at i-1 shifts to a match of length L-1 at i,
        // so the walk starts from that floor instead of re-earning it.
        std::int64_t ell = prev > 0 ? prev - 1 : 0;
        if (ell < suffix_cap) {
            for (const std::int32_t j : occurrences[static_cast<std::size_t>(c)]) {
                const std::int64_t cap = i - j;  // occurrence must end before position i
                if (cap <= ell) {
                    break;  // later occurrences have even smaller caps
                }
                // A match longer than ell must agree on the symbols ending at
                // offset ell; screen on those before paying for verification.
                if constexpr (WordProbe) {
                    if (ell >= 3) {
                        std::uint32_t ours = 0, theirs = 0;
                        std::memcpy(&ours, code + (i + ell - 3), 4);
                        std::memcpy(&theirs, code + (j + ell - 3), 4);
                        if (ours != theirs) {
                            continue;
                        }
                        if (ell > 3 &&
                            std::memcmp(code + j, code + i, static_cast<std::size_t>(ell - 3)) != 0) {
                            continue;
                        }
                    } else {
                        if (code[j + ell] != code[i + ell]) {
                            continue;
                        }
                        if (ell > 0 && std::memcmp(code + j, code + i,
                                                   static_cast<std::size_t>(ell)) != 0) {
                            continue;
                        }
                    }
                } else {
                    if (code[j + ell] != code[i + ell]) {
                        continue;
                    }
                    if (ell > 0 && std::memcmp(code + j, code + i,
                                               sizeof(Sym) * static_cast<std::size_t>(ell)) != 0) {
                        continue;
                    }
                }
                const std::int64_t limit = cap < suffix_cap ? cap : suffix_cap;
                std::int64_t len = ell + 1;
                while (len < limit && code[j + len] == code[i + len]) {
                    ++len;
                }
                ell = len;
                if (ell >= suffix_cap) {
                    break;  // already matched the whole remaining suffix
                }
            }
        }
        lengths[static_cast<std::size_t>(i)] = ell + 1;
        prev = ell;
        occurrences[static_cast<std::size_t>(c)].push_back(static_cast<std::int32_t>(i));
    }
}

// Scanner core for symbols already densely coded in [0, n_symbols).  The
// occurrence lists and the output vector are caller-owned so tight loops
// (Monte Carlo runs) can reuse their capacity across calls.  Long sequences
// over byte-sized alphabets are repacked so the walk compares bytes, not
// int32s; short ones skip the copy because the walk is already cheap.
inline void lz_match_lengths_dense(std::span<const std::int32_t> code, std::size_t n_symbols,
                                   std::vector<std::vector<std::int32_t>>& occurrences,
                                   std::vector<std::int64_t>& lengths) {
    const std::int64_t n = static_cast<std::int64_t>(code.size());
    lengths.resize(static_cast<std::size_t>(n));
    if (occurrences.size() < n_symbols) {
        occurrences.resize(n_symbols);
    }
    for (auto& list : occurrences) {
        list.clear();
    }
    if (n_symbols <= 256 && n >= 64) {
        std::vector<std::uint8_t> bytes(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            bytes[static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(code[static_cast<std::size_t>(i)]);
        }
        lz_walk<std::uint8_t, true>(bytes.data(), n, occurrences, lengths);
    } else {
        lz_walk<std::int32_t, false>(code.data(), n, occurrences, lengths);
    }
}

}  // namespace detail

// Match lengths for the shortest-novel-substring estimator.  For position i
// (0-based), let ell be the length of the longest substring starting at i
// that also occurs entirely inside s[0..i-1]; the returned value is ell + 1,
// the length of the shortest substring starting at i that is NOT contained
// in the preceding text.  When the whole remaining suffix repeats earlier
// material, ell is capped at the suffix length, so the value is n - i + 1.
//
// Reference scanner: for each position, walk the earlier occurrences of its
// first symbol.  An occurrence at j can only support a match of length
// i - j before bleeding past the boundary, and occurrences are visited in
// ascending j (shrinking cap), so the walk stops as soon as the cap cannot
// beat the best match found.  Quadratic in the worst case but fast on
// stochastic sequences, where only ~1/alphabet of positions share a symbol.
inline std::vector<std::int64_t> lz_match_lengths_naive(std::span<const std::int32_t> symbols) {
    const std::int64_t n = static_cast<std::int64_t>(symbols.size());

    // Re-encode densely so occurrence lists can live in a flat vector even
    // when the caller passes sparse symbol values.
    std::vector<std::int32_t> code(static_cast<std::size_t>(n));
    std::unordered_map<std::int32_t, std::int32_t> dense;
    for (std::int64_t i = 0; i < n; ++i) {
        auto it = dense.find(symbols[static_cast<std::size_t>(i)]);
        if (it == dense.end()) {
            it = dense.emplace(symbols[static_cast<std::size_t>(i)],
                               static_cast<std::int32_t>(dense.size()))
                     .first;
        }
        code[static_cast<std::size_t>(i)] = it->second;
    }

    std::vector<std::vector<std::int32_t>> occurrences;
    std::vector<std::int64_t> lengths;
    detail::lz_match_lengths_dense(code, dense.size(), occurrences, lengths);
    return lengths;
}

namespace detail {

// Suffix automaton over int32 symbols, extended one symbol at a time.  At any
// point it recognizes exactly the substrings of the text fed so far.
class SuffixAutomaton {
public:
    SuffixAutomaton() { states_.push_back(State{0, -1, {}}); }

    void extend(std::int32_t c) {
        const int cur = static_cast<int>(states_.size());
        states_.push_back(State{states_[static_cast<std::size_t>(last_)].len + 1, -1, {}});
        int p = last_;
        while (p != -1 && states_[static_cast<std::size_t>(p)].next.find(c) ==
                              states_[static_cast<std::size_t>(p)].next.end()) {
            states_[static_cast<std::size_t>(p)].next.emplace(c, cur);
            p = states_[static_cast<std::size_t>(p)].link;
        }
        if (p == -1) {
            states_[static_cast<std::size_t>(cur)].link = 0;
        } else {
            const int q = states_[static_cast<std::size_t>(p)].next.at(c);
            if (states_[static_cast<std::size_t>(p)].len + 1 ==
                states_[static_cast<std::size_t>(q)].len) {
                states_[static_cast<std::size_t>(cur)].link = q;
            } else {
                const int clone = static_cast<int>(states_.size());
                State cloned{states_[static_cast<std::size_t>(p)].len + 1,
                             states_[static_cast<std::size_t>(q)].link,
                             states_[static_cast<std::size_t>(q)].next};
                states_.push_back(std::move(cloned));
                while (p != -1) {
                    auto it = states_[static_cast<std::size_t>(p)].next.find(c);
                    if (it == states_[static_cast<std::size_t>(p)].next.end() || it->second != q) {
                        break;
                    }
                    it->second = clone;
                    p = states_[static_cast<std::size_t>(p)].link;
                }
                states_[static_cast<std::size_t>(q)].link = clone;
                states_[static_cast<std::size_t>(cur)].link = clone;
            }
        }
        last_ = cur;
    }

    // Length of the longest prefix of `suffix` that is a substring of the
    // text fed so far.
    std::int64_t longest_prefix_match(std::span<const std::int32_t> suffix) const {
        int state = 0;
        std::int64_t len = 0;
        for (const std::int32_t c : suffix) {
            const auto& next = states_[static_cast<std::size_t>(state)].next;
            const auto it = next.find(c);
            if (it == next.end()) {
                break;
            }
            state = it->second;
            ++len;
        }
        return len;
    }

private:
    struct State {
        std::int64_t len;
        int link;
        std::map<std::int32_t, int> next;
    };
    std::vector<State> states_;
    int last_ = 0;
};

}  // namespace detail

// Indexed scanner: same contract as the reference, but each position queries
// a suffix automaton of the prefix instead of rescanning it.  Walk cost is
// the match length itself, so the total is O(n log n) on mixing sequences.
inline std::vector<std::int64_t> lz_match_lengths_indexed(std::span<const std::int32_t> symbols) {
    const std::int64_t n = static_cast<std::int64_t>(symbols.size());
    std::vector<std::int64_t> lengths(static_cast<std::size_t>(n));
    detail::SuffixAutomaton automaton;
    for (std::int64_t i = 0; i < n; ++i) {
        lengths[static_cast<std::size_t>(i)] =
            automaton.longest_prefix_match(symbols.subspan(static_cast<std::size_t>(i))) + 1;
        automaton.extend(symbols[static_cast<std::size_t>(i)]);
    }
    return lengths;
}

inline std::vector<std::int64_t> lz_match_lengths(std::span<const std::int32_t> symbols,
                                                  LzScanner scanner = LzScanner::automatic) {
    if (scanner == LzScanner::automatic) {
        scanner = symbols.size() <= 4096 ? LzScanner::naive : LzScanner::indexed;
    }
    return scanner == LzScanner::naive ? lz_match_lengths_naive(symbols)
                                       : lz_match_lengths_indexed(symbols);
}

// Entropy rate estimate in bits/symbol: n * log2(n) / sum of match lengths.
inline double lz_entropy_rate(std::span<const std::int32_t> symbols,
                              LzScanner scanner = LzScanner::automatic) {
    const std::int64_t n = static_cast<std::int64_t>(symbols.size());
    if (n < 2) {
        throw Error("entropy rate needs at least 2 symbols, got " + std::to_string(n));
    }
    std::int64_t sum = 0;
    for (const std::int64_t length : lz_match_lengths(symbols, scanner)) {
        sum += length;
    }
    return static_cast<double>(n) * std::log2(static_cast<double>(n)) / static_cast<double>(sum);
}

namespace detail {

inline VisitDistribution symbol_distribution(const EventSequence& seq, SymbolLevel level) {
    return level == SymbolLevel::merchant ? visit_distribution(seq) : mcc_distribution(seq);
}

}  // namespace detail

// log2 of the number of distinct symbols: the entropy of a shopper with no
// structure at all beyond the set of places they visit.
inline double random_entropy(const EventSequence& seq, SymbolLevel level = SymbolLevel::merchant) {
    if (seq.empty()) {
        throw Error("random entropy of account '" + seq.account_id + "': sequence is empty");
    }
    return std::log2(static_cast<double>(detail::symbol_distribution(seq, level).counts.size()));
}

// Shannon entropy of the visit distribution, ignoring order.  Computed from
// integer counts as log2(T) - (sum c*log2(c))/T rather than from normalized
// probabilities, and clamped into [0, log2(#symbols)] so the exact relation
// random >= uncorrelated >= 0 survives floating-point rounding.
inline double uncorrelated_entropy(const EventSequence& seq,
                                   SymbolLevel level = SymbolLevel::merchant) {
    if (seq.empty()) {
        throw Error("uncorrelated entropy of account '" + seq.account_id + "': sequence is empty");
    }
    const VisitDistribution dist = detail::symbol_distribution(seq, level);
    const double total = static_cast<double>(dist.total);
    double weighted = 0.0;
    for (const auto& [symbol, count] : dist.counts) {
        weighted += static_cast<double>(count) * std::log2(static_cast<double>(count));
    }
    double h = std::log2(total) - weighted / total;
    const double cap = std::log2(static_cast<double>(dist.counts.size()));
    h = std::clamp(h, 0.0, cap);
    return h;
}

// Entropy rate of the ordered sequence via the match-length estimator.
inline double true_entropy(const EventSequence& seq, SymbolLevel level = SymbolLevel::merchant,
                           LzScanner scanner = LzScanner::automatic) {
    if (seq.size() < 2) {
        throw Error("true entropy of account '" + seq.account_id + "' needs at least 2 events, got " +
                    std::to_string(seq.size()));
    }
    const std::vector<std::int32_t> symbols = encode_symbols(seq, level);
    return lz_entropy_rate(symbols, scanner);
}

// All three measures for one account.  The level applies to every measure so
// the report stays internally consistent; n_merchants holds the distinct
// symbol count at that level.
inline EntropyReport entropy_report(const EventSequence& seq,
                                    SymbolLevel level = SymbolLevel::merchant,
                                    LzScanner scanner = LzScanner::automatic) {
    if (seq.size() < 2) {
        throw Error("entropy report of account '" + seq.account_id + "' needs at least 2 events, got " +
                    std::to_string(seq.size()));
    }
    EntropyReport report;
    report.account_id = seq.account_id;
    report.n_events = static_cast<std::int64_t>(seq.size());
    report.n_merchants =
        static_cast<std::int64_t>(detail::symbol_distribution(seq, level).counts.size());
    report.s_rand = random_entropy(seq, level);
    report.s_unc = uncorrelated_entropy(seq, level);
    report.s_true = true_entropy(seq, level, scanner);
    return report;
}

inline nlohmann::ordered_json to_json(const EntropyReport& report) {
    nlohmann::ordered_json j;
    j["account_id"] = report.account_id;
    j["s_rand"] = report.s_rand;
    j["s_unc"] = report.s_unc;
    j["s_true"] = report.s_true;
    j["n_events"] = report.n_events;
    j["n_merchants"] = report.n_merchants;
    return j;
}

// Fixed-width histogram.  Bin k covers [k*width, (k+1)*width); the bins
// vector is contiguous from the lowest to the highest occupied bin, with
// empty bins in between kept so the output plots directly.
struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t count = 0;
};

struct Histogram {
    double bin_width = 0.0;
    std::vector<HistogramBin> bins;
    std::int64_t total = 0;
};

inline Histogram make_histogram(std::span<const double> values, double bin_width) {
    if (!(bin_width > 0.0)) {
        throw Error("histogram bin width must be positive");
    }
    Histogram hist;
    hist.bin_width = bin_width;
    hist.total = static_cast<std::int64_t>(values.size());
    if (values.empty()) {
        return hist;
    }
    const auto bin_of = [bin_width](double v) {
        return static_cast<std::int64_t>(std::floor(v / bin_width));
    };
    std::int64_t lo_bin = std::numeric_limits<std::int64_t>::max();
    std::int64_t hi_bin = std::numeric_limits<std::int64_t>::min();
    for (const double v : values) {
        const std::int64_t k = bin_of(v);
        lo_bin = std::min(lo_bin, k);
        hi_bin = std::max(hi_bin, k);
    }
    hist.bins.resize(static_cast<std::size_t>(hi_bin - lo_bin + 1));
    for (std::size_t b = 0; b < hist.bins.size(); ++b) {
        const double lo = static_cast<double>(lo_bin + static_cast<std::int64_t>(b)) * bin_width;
        hist.bins[b].lo = lo;
        hist.bins[b].hi = lo + bin_width;
    }
    for (const double v : values) {
        ++hist.bins[static_cast<std::size_t>(bin_of(v) - lo_bin)].count;
    }
    return hist;
}

struct EntropyDistributionOptions {
    double bin_width = 0.1;
    SymbolLevel level = SymbolLevel::merchant;
    LzScanner scanner = LzScanner::automatic;
    unsigned threads = 1;
};

struct EntropyDistribution {
    std::vector<EntropyReport> reports;  // ordered by account_id
    std::vector<std::string> skipped;    // accounts with fewer than 2 events
    Histogram s_rand;
    Histogram s_unc;
    Histogram s_true;
};

// Per-account entropy reports plus a histogram per measure, restricted to
// `accounts`.  Accounts too short to estimate are listed in `skipped` rather
// than silently dropped.  Work is sharded across threads with results placed
// by index, so the output is independent of the thread count.
inline EntropyDistribution entropy_distribution(const Dataset& dataset,
                                                const std::set<std::string>& accounts,
                                                const EntropyDistributionOptions& options = {}) {
    if (accounts.empty()) {
        throw Error("entropy distribution needs a non-empty account set");
    }
    EntropyDistribution result;
    std::vector<const EventSequence*> eligible;
    for (const std::string& account : accounts) {
        const auto it = dataset.sequences.find(account);
        if (it == dataset.sequences.end()) {
            throw Error("entropy distribution: unknown account '" + account + "'");
        }
        if (it->second.size() < 2) {
            result.skipped.push_back(account);
        } else {
            eligible.push_back(&it->second);
        }
    }
    result.reports.resize(eligible.size());
    parallel_for(eligible.size(), options.threads, [&](std::size_t i) {
        result.reports[i] = entropy_report(*eligible[i], options.level, options.scanner);
    });

    std::vector<double> rand_values, unc_values, true_values;
    rand_values.reserve(result.reports.size());
    unc_values.reserve(result.reports.size());
    true_values.reserve(result.reports.size());
    for (const EntropyReport& report : result.reports) {
        rand_values.push_back(report.s_rand);
        unc_values.push_back(report.s_unc);
        true_values.push_back(report.s_true);
    }
    result.s_rand = make_histogram(rand_values, options.bin_width);
    result.s_unc = make_histogram(unc_values, options.bin_width);
    result.s_true = make_histogram(true_values, options.bin_width);
    return result;
}

// Histogram CSV: one row per occupied-or-gap bin per measure.
inline void write_histograms_csv(std::ostream& out, const Histogram& s_rand, const Histogram& s_unc,
                                 const Histogram& s_true) {
    out << "bin_lo,bin_hi,count,measure\n";
    const auto write_one = [&out](const Histogram& hist, const char* measure) {
        char buffer[64];
        for (const HistogramBin& bin : hist.bins) {
            std::snprintf(buffer, sizeof(buffer), "%.6f,%.6f,", bin.lo, bin.hi);
            out << buffer << bin.count << ',' << measure << '\n';
        }
    };
    write_one(s_rand, "s_rand");
    write_one(s_unc, "s_unc");
    write_one(s_true, "s_true");
}

// Largest per-event chance of guessing the next symbol correctly that is
// consistent with entropy rate `s` over `n_symbols` symbols.  Solves
//   s = H(p) + (1 - p) * log2(n_symbols - 1)
// for p by bisection; the right-hand side decreases monotonically in p on
// [1/n_symbols, 1], from log2(n_symbols) down to 0.
inline double max_predictability(double s, std::int64_t n_symbols) {
    if (n_symbols < 2) {
        throw Error("max predictability needs at least 2 symbols, got " +
                    std::to_string(n_symbols));
    }
    const double n = static_cast<double>(n_symbols);
    const double s_max = std::log2(n);
    const double slack = 1e-9;
    if (s < -slack || s > s_max + slack) {
        throw Error("entropy " + std::to_string(s) + " outside feasible range [0, " +
                    std::to_string(s_max) + "] for " + std::to_string(n_symbols) + " symbols");
    }
    if (s <= 0.0) {
        return 1.0;
    }
    if (s >= s_max) {
        return 1.0 / n;
    }
    const auto binary_entropy = [](double p) {
        double h = 0.0;
        if (p > 0.0) {
            h -= p * std::log2(p);
        }
        if (p < 1.0) {
            h -= (1.0 - p) * std::log2(1.0 - p);
        }
        return h;
    };
    const double tail = std::log2(n - 1.0);
    const auto objective = [&](double p) { return binary_entropy(p) + (1.0 - p) * tail - s; };
    double lo = 1.0 / n;  // objective >= 0 here
    double hi = 1.0;      // objective = -s < 0 here
    for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (objective(mid) >= 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace shopseq
