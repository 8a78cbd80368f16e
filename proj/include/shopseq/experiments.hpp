#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "shopseq/core.hpp"
#include "shopseq/entropy.hpp"
#include "shopseq/ingest.hpp"
#include "shopseq/parallel.hpp"
#include "shopseq/rng.hpp"
#include "shopseq/time.hpp"

namespace shopseq {

namespace detail {

// Unbiased in-place shuffle; consumes one bounded draw per element beyond
// the first, which both the event-level transform and the symbol-level fast
// path rely on to stay bit-identical to each other.
template <typename T>
inline void fisher_yates(std::span<T> items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        std::swap(items[i - 1], items[j]);
    }
}

// Half-open index ranges of consecutive events sharing the same bin (day or
// week).  Events are timestamp-sorted, so equal bins are contiguous.
template <typename BinOf>
inline std::vector<std::pair<std::size_t, std::size_t>> bin_runs(const EventSequence& seq,
                                                                 BinOf&& bin_of) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::size_t begin = 0;
    while (begin < seq.events.size()) {
        std::size_t end = begin + 1;
        const auto bin = bin_of(seq.events[begin]);
        while (end < seq.events.size() && bin_of(seq.events[end]) == bin) {
            ++end;
        }
        runs.emplace_back(begin, end);
        begin = end;
    }
    return runs;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sequence transforms
// ---------------------------------------------------------------------------

// Uniformly permutes the events inside each calendar day.  The day's
// timestamp slots stay where they are; only the (merchant, mcc) payloads
// move, so day assignment and the event multiset are unchanged.
inline EventSequence shuffle_within_day(const EventSequence& seq, std::uint64_t seed,
                                        const Timezone& tz = Timezone{}) {
    EventSequence out = seq;
    SplitMix64 rng(seed);
    std::vector<std::pair<std::string, std::string>> payloads;
    const auto runs =
        detail::bin_runs(seq, [&tz](const Event& e) { return day_index(e.timestamp, tz); });
    for (const auto& [begin, end] : runs) {
        if (end - begin < 2) {
            continue;
        }
        payloads.clear();
        for (std::size_t i = begin; i < end; ++i) {
            payloads.emplace_back(seq.events[i].merchant_id, seq.events[i].mcc);
        }
        detail::fisher_yates(std::span<std::pair<std::string, std::string>>(payloads), rng);
        for (std::size_t i = begin; i < end; ++i) {
            out.events[i].merchant_id = payloads[i - begin].first;
            out.events[i].mcc = payloads[i - begin].second;
        }
    }
    return out;
}

// Reorders the events inside each consecutive 7-day window (anchored at the
// sequence's window start) by merchant id.  Deterministic and idempotent;
// timestamp slots stay fixed as in shuffle_within_day.
inline EventSequence sort_within_week(const EventSequence& seq, const Timezone& tz = Timezone{}) {
    EventSequence out = seq;
    const std::int64_t anchor = days_from_civil(seq.window.start);
    const auto runs = detail::bin_runs(seq, [&](const Event& e) {
        return floor_div(day_index(e.timestamp, tz) - anchor, 7);
    });
    std::vector<std::pair<std::string, std::string>> payloads;
    for (const auto& [begin, end] : runs) {
        if (end - begin < 2) {
            continue;
        }
        payloads.clear();
        for (std::size_t i = begin; i < end; ++i) {
            payloads.emplace_back(seq.events[i].merchant_id, seq.events[i].mcc);
        }
        std::stable_sort(payloads.begin(), payloads.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t i = begin; i < end; ++i) {
            out.events[i].merchant_id = payloads[i - begin].first;
            out.events[i].mcc = payloads[i - begin].second;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte Carlo entropy simulation
// ---------------------------------------------------------------------------

enum class SimulationMode { shuffle_day, sort_week };

inline std::string to_string(SimulationMode mode) {
    return mode == SimulationMode::shuffle_day ? "shuffle_day" : "sort_week";
}

struct SimulationConfig {
    std::int64_t runs = 10000;
    std::int64_t sample_size = 2000;
    std::uint64_t seed = 0;
    SimulationMode mode = SimulationMode::shuffle_day;
    double bin_width = 0.1;
};

struct AccountSimulation {
    std::string account_id;
    double baseline = 0.0;          // entropy rate of the untouched sequence
    double transformed_mean = 0.0;  // mean entropy rate across runs
    double transformed_sd = 0.0;    // sample sd across runs (0 when runs == 1)
};

struct SimulationResult {
    SimulationConfig config;
    std::vector<AccountSimulation> per_account;  // ordered by account_id
    Histogram baseline_hist;
    Histogram transformed_hist;
    double mean_baseline = 0.0;
    double mean_transformed = 0.0;
};

// Samples accounts without replacement, applies the configured transform
// `runs` times with per-run, per-account derived seeds (seed XOR run index,
// salted by the account id hash; run index 0 is reserved for the sampling
// draw itself), and reports baseline vs transformed entropy rates.  The
// sort_week transform is deterministic, so it is evaluated once regardless
// of `runs`.  Work is sharded per account into preallocated slots; results
// do not depend on the thread count.
inline SimulationResult run_entropy_simulation(const Dataset& dataset,
                                               const SimulationConfig& config,
                                               unsigned threads = 1,
                                               LzScanner scanner = LzScanner::automatic) {
    if (config.runs < 1) {
        throw Error("simulation needs at least 1 run, got " + std::to_string(config.runs));
    }
    if (config.sample_size < 1) {
        throw Error("simulation needs a positive sample size");
    }
    std::vector<const EventSequence*> eligible;
    for (const auto& [account, seq] : dataset.sequences) {
        if (seq.size() >= 2) {
            eligible.push_back(&seq);
        }
    }
    if (config.sample_size > static_cast<std::int64_t>(eligible.size())) {
        throw Error("sample size " + std::to_string(config.sample_size) + " exceeds the " +
                    std::to_string(eligible.size()) + " accounts with at least 2 events");
    }

    // Partial shuffle picks the sample; the selection is then re-sorted by
    // account id so downstream order is stable.
    SplitMix64 sampler = run_stream(config.seed, 0);
    const std::size_t sample_size = static_cast<std::size_t>(config.sample_size);
    for (std::size_t i = 0; i < sample_size; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(sampler.bounded(eligible.size() - i));
        std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(sample_size);
    std::sort(eligible.begin(), eligible.end(),
              [](const EventSequence* a, const EventSequence* b) {
                  return a->account_id < b->account_id;
              });

    SimulationResult result;
    result.config = config;
    result.per_account.resize(sample_size);
    const Timezone tz = dataset.timezone;

    parallel_for(sample_size, threads, [&](std::size_t slot) {
        const EventSequence& seq = *eligible[slot];
        AccountSimulation& acc = result.per_account[slot];
        acc.account_id = seq.account_id;
        acc.baseline = true_entropy(seq, SymbolLevel::merchant, scanner);

        if (config.mode == SimulationMode::sort_week) {
            acc.transformed_mean = true_entropy(sort_within_week(seq, tz),
                                                SymbolLevel::merchant, scanner);
            acc.transformed_sd = 0.0;
            return;
        }

        // shuffle_day hot path: permuting (merchant, mcc) payloads within a
        // day permutes the encoded symbol array the same way, and the
        // estimate only depends on the symbols' equality pattern.  So each
        // run shuffles a dense int32 copy with the same RNG stream the
        // event-level transform would consume, skipping all string work.
        const std::vector<std::int32_t> base = encode_symbols(seq);
        std::size_t n_symbols = 0;
        for (const std::int32_t s : base) {
            n_symbols = std::max(n_symbols, static_cast<std::size_t>(s) + 1);
        }
        const auto runs_index =
            detail::bin_runs(seq, [&tz](const Event& e) { return day_index(e.timestamp, tz); });
        const double n = static_cast<double>(base.size());
        const double numerator = n * std::log2(n);

        std::vector<std::int32_t> work(base.size());
        std::vector<std::vector<std::int32_t>> occurrences;
        std::vector<std::int64_t> lengths;
        double sum = 0.0;
        double sum_sq = 0.0;
        for (std::int64_t run = 1; run <= config.runs; ++run) {
            SplitMix64 rng = account_stream(config.seed, static_cast<std::uint64_t>(run),
                                            seq.account_id);
            std::copy(base.begin(), base.end(), work.begin());
            for (const auto& [begin, end] : runs_index) {
                if (end - begin < 2) {
                    continue;
                }
                detail::fisher_yates(
                    std::span<std::int32_t>(work.data() + begin, end - begin), rng);
            }
            detail::lz_match_lengths_dense(work, n_symbols, occurrences, lengths);
            std::int64_t lambda_sum = 0;
            for (const std::int64_t length : lengths) {
                lambda_sum += length;
            }
            const double rate = numerator / static_cast<double>(lambda_sum);
            sum += rate;
            sum_sq += rate * rate;
        }
        const double runs_d = static_cast<double>(config.runs);
        acc.transformed_mean = sum / runs_d;
        if (config.runs > 1) {
            const double var =
                std::max(0.0, (sum_sq - sum * sum / runs_d) / (runs_d - 1.0));
            acc.transformed_sd = std::sqrt(var);
        }
    });

    std::vector<double> baselines;
    std::vector<double> transformed;
    baselines.reserve(sample_size);
    transformed.reserve(sample_size);
    for (const AccountSimulation& acc : result.per_account) {
        baselines.push_back(acc.baseline);
        transformed.push_back(acc.transformed_mean);
        result.mean_baseline += acc.baseline;
        result.mean_transformed += acc.transformed_mean;
    }
    result.mean_baseline /= static_cast<double>(sample_size);
    result.mean_transformed /= static_cast<double>(sample_size);
    result.baseline_hist = make_histogram(baselines, config.bin_width);
    result.transformed_hist = make_histogram(transformed, config.bin_width);
    return result;
}

inline nlohmann::ordered_json to_json(const Histogram& hist) {
    nlohmann::ordered_json j;
    j["bin_width"] = hist.bin_width;
    j["total"] = hist.total;
    j["bins"] = nlohmann::ordered_json::array();
    for (const HistogramBin& bin : hist.bins) {
        j["bins"].push_back({{"lo", bin.lo}, {"hi", bin.hi}, {"count", bin.count}});
    }
    return j;
}

inline nlohmann::ordered_json to_json(const SimulationResult& result) {
    nlohmann::ordered_json j;
    j["config"] = {{"mode", to_string(result.config.mode)},
                   {"runs", result.config.runs},
                   {"sample_size", result.config.sample_size},
                   {"seed", result.config.seed},
                   {"bin_width", result.config.bin_width},
                   {"sort_key", "merchant_id-lexicographic"}};
    j["per_account"] = nlohmann::ordered_json::array();
    for (const AccountSimulation& acc : result.per_account) {
        j["per_account"].push_back({{"id", acc.account_id},
                                    {"baseline", acc.baseline},
                                    {"transformed_mean", acc.transformed_mean},
                                    {"transformed_sd", acc.transformed_sd}});
    }
    j["histograms"] = {{"baseline", to_json(result.baseline_hist)},
                       {"transformed", to_json(result.transformed_hist)}};
    j["mean_baseline"] = result.mean_baseline;
    j["mean_transformed"] = result.mean_transformed;
    return j;
}

// ---------------------------------------------------------------------------
// Bundling
// ---------------------------------------------------------------------------

struct BundlingScore {
    std::string account_id;
    double variance = 0.0;    // population variance of the daily-count series
    double mean_daily = 0.0;  // events per day
    std::int64_t n_days = 0;
};

// Variance of daily event counts over the whole window, zero-count days
// included: concentrating the same events onto fewer days raises it.
inline BundlingScore bundling_score(const EventSequence& seq, const Timezone& tz = Timezone{}) {
    const std::int64_t n_days = seq.window.n_days();
    if (n_days < 2) {
        throw Error("bundling score of account '" + seq.account_id +
                    "' needs a window of at least 2 days");
    }
    const std::int64_t first_day = days_from_civil(seq.window.start);
    std::vector<std::int64_t> daily(static_cast<std::size_t>(n_days), 0);
    for (const Event& event : seq.events) {
        ++daily[static_cast<std::size_t>(day_index(event.timestamp, tz) - first_day)];
    }
    BundlingScore score;
    score.account_id = seq.account_id;
    score.n_days = n_days;
    double sum = 0.0;
    for (const std::int64_t c : daily) {
        sum += static_cast<double>(c);
    }
    score.mean_daily = sum / static_cast<double>(n_days);
    double ss = 0.0;
    for (const std::int64_t c : daily) {
        const double d = static_cast<double>(c) - score.mean_daily;
        ss += d * d;
    }
    score.variance = ss / static_cast<double>(n_days);
    return score;
}

// ---------------------------------------------------------------------------
// Cohort summary
// ---------------------------------------------------------------------------

// Raw per-account values for one cohort, aligned with `accounts`; histograms
// are derived on demand with make_histogram.
struct CohortStats {
    std::string name;
    std::vector<std::string> accounts;
    std::vector<double> store_counts;    // distinct merchants per account
    std::vector<double> s_rand;
    std::vector<double> s_unc;
    std::vector<double> entropy_gap;     // s_rand - s_unc per account
    std::vector<double> visit_variance;  // population variance of per-merchant counts
    std::vector<double> bundling;        // daily-count variance
};

inline std::vector<CohortStats> cohort_summary(
    const Dataset& dataset, const std::map<std::string, std::set<std::string>>& cohorts) {
    std::vector<CohortStats> summaries;
    summaries.reserve(cohorts.size());
    for (const auto& [name, accounts] : cohorts) {
        if (accounts.empty()) {
            throw Error("cohort '" + name + "' is empty");
        }
        CohortStats stats;
        stats.name = name;
        for (const std::string& account : accounts) {
            const auto it = dataset.sequences.find(account);
            if (it == dataset.sequences.end()) {
                throw Error("cohort '" + name + "': unknown account '" + account + "'");
            }
            const EventSequence& seq = it->second;
            if (seq.empty()) {
                throw Error("cohort '" + name + "': account '" + account + "' has no events");
            }
            stats.accounts.push_back(account);
            const VisitDistribution dist = visit_distribution(seq);
            stats.store_counts.push_back(static_cast<double>(dist.counts.size()));
            const double rand_bits = random_entropy(seq);
            const double unc_bits = uncorrelated_entropy(seq);
            stats.s_rand.push_back(rand_bits);
            stats.s_unc.push_back(unc_bits);
            stats.entropy_gap.push_back(rand_bits - unc_bits);

            double mean = static_cast<double>(dist.total) / static_cast<double>(dist.counts.size());
            double ss = 0.0;
            for (const auto& [merchant, count] : dist.counts) {
                const double d = static_cast<double>(count) - mean;
                ss += d * d;
            }
            stats.visit_variance.push_back(ss / static_cast<double>(dist.counts.size()));
            stats.bundling.push_back(bundling_score(seq, dataset.timezone).variance);
        }
        summaries.push_back(std::move(stats));
    }
    return summaries;
}

// One statistic across all cohorts as figure-ready CSV.
inline void write_cohort_csv(std::ostream& out, const std::vector<CohortStats>& summaries,
                             const std::string& statistic) {
    const auto values_of = [&statistic](const CohortStats& stats) -> const std::vector<double>& {
        if (statistic == "store_count") return stats.store_counts;
        if (statistic == "s_rand") return stats.s_rand;
        if (statistic == "s_unc") return stats.s_unc;
        if (statistic == "entropy_gap") return stats.entropy_gap;
        if (statistic == "visit_variance") return stats.visit_variance;
        if (statistic == "bundling") return stats.bundling;
        throw Error("unknown cohort statistic '" + statistic + "'");
    };
    out << "cohort,account_id,value\n";
    char buffer[64];
    for (const CohortStats& stats : summaries) {
        const std::vector<double>& values = values_of(stats);
        for (std::size_t i = 0; i < stats.accounts.size(); ++i) {
            std::snprintf(buffer, sizeof(buffer), "%.9f", values[i]);
            out << stats.name << ',' << stats.accounts[i] << ',' << buffer << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Overlap probability
// ---------------------------------------------------------------------------

struct OverlapResult {
    double within_group_prob = 0.0;  // mean over unordered distinct pairs in group A
    double cross_group_prob = 0.0;   // mean over ordered pairs (a in A, b in B, a != b)
    std::int64_t n_pairs_within = 0;
    std::int64_t n_pairs_cross = 0;
};

enum class OverlapMethod { closed_form, monte_carlo };

struct OverlapOptions {
    OverlapMethod method = OverlapMethod::closed_form;
    std::int64_t samples = 1000000;  // per pair, monte_carlo only
    std::uint64_t seed = 0;
};

namespace detail {

// Per-account category distribution as a sorted (mcc, probability) list.
inline std::vector<std::pair<std::string, double>> mcc_profile(const EventSequence& seq) {
    if (seq.empty()) {
        throw Error("overlap: account '" + seq.account_id + "' has no events");
    }
    const VisitDistribution dist = mcc_distribution(seq);
    std::vector<std::pair<std::string, double>> profile;
    profile.reserve(dist.counts.size());
    for (const auto& [mcc, count] : dist.counts) {
        profile.emplace_back(mcc, static_cast<double>(count) / static_cast<double>(dist.total));
    }
    return profile;
}

inline double profile_overlap(const std::vector<std::pair<std::string, double>>& a,
                              const std::vector<std::pair<std::string, double>>& b) {
    double sum = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < a.size() && j < b.size()) {
        const int cmp = a[i].first.compare(b[j].first);
        if (cmp == 0) {
            sum += a[i].second * b[j].second;
            ++i;
            ++j;
        } else if (cmp < 0) {
            ++i;
        } else {
            ++j;
        }
    }
    return sum;
}

}  // namespace detail

// Chance that one event drawn from each of two accounts lands on the same
// merchant category: sum over categories of the product of the two visit
// probabilities.
inline double pair_overlap(const EventSequence& a, const EventSequence& b) {
    return detail::profile_overlap(detail::mcc_profile(a), detail::mcc_profile(b));
}

// Same expectation, estimated by actually drawing `samples` event pairs.
// The per-pair stream is salted symmetrically and the draw order pinned to
// the lexicographically smaller account, so (a, b) and (b, a) agree exactly.
inline double pair_overlap_monte_carlo(const EventSequence& a, const EventSequence& b,
                                       std::int64_t samples, std::uint64_t seed) {
    if (a.empty() || b.empty()) {
        throw Error("overlap: account '" + (a.empty() ? a.account_id : b.account_id) +
                    "' has no events");
    }
    if (samples < 1) {
        throw Error("overlap needs a positive sample count");
    }
    const EventSequence& first = b.account_id < a.account_id ? b : a;
    const EventSequence& second = b.account_id < a.account_id ? a : b;
    SplitMix64 rng(seed ^ fnv1a64(a.account_id) ^ fnv1a64(b.account_id));
    std::int64_t hits = 0;
    for (std::int64_t s = 0; s < samples; ++s) {
        const Event& ea =
            first.events[static_cast<std::size_t>(rng.bounded(first.events.size()))];
        const Event& eb =
            second.events[static_cast<std::size_t>(rng.bounded(second.events.size()))];
        if (ea.mcc == eb.mcc) {
            ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(samples);
}

// Mean pair overlap within group A and across A x B.
inline OverlapResult overlap_probability(const Dataset& dataset,
                                         const std::set<std::string>& group_a,
                                         const std::set<std::string>& group_b,
                                         const OverlapOptions& options = {}) {
    if (group_a.empty() || group_b.empty()) {
        throw Error("overlap needs two non-empty groups");
    }
    const auto sequence_of = [&dataset](const std::string& account) -> const EventSequence& {
        const auto it = dataset.sequences.find(account);
        if (it == dataset.sequences.end()) {
            throw Error("overlap: unknown account '" + account + "'");
        }
        return it->second;
    };
    const auto pair_value = [&](const EventSequence& a, const EventSequence& b) {
        if (options.method == OverlapMethod::closed_form) {
            return pair_overlap(a, b);
        }
        return pair_overlap_monte_carlo(a, b, options.samples, options.seed);
    };

    OverlapResult result;
    std::vector<const EventSequence*> members_a;
    for (const std::string& account : group_a) {
        members_a.push_back(&sequence_of(account));
    }
    double within_sum = 0.0;
    for (std::size_t i = 0; i < members_a.size(); ++i) {
        for (std::size_t j = i + 1; j < members_a.size(); ++j) {
            within_sum += pair_value(*members_a[i], *members_a[j]);
            ++result.n_pairs_within;
        }
    }
    if (result.n_pairs_within > 0) {
        result.within_group_prob = within_sum / static_cast<double>(result.n_pairs_within);
    }

    double cross_sum = 0.0;
    for (const std::string& account_a : group_a) {
        const EventSequence& a = sequence_of(account_a);
        for (const std::string& account_b : group_b) {
            if (account_a == account_b) {
                continue;
            }
            cross_sum += pair_value(a, sequence_of(account_b));
            ++result.n_pairs_cross;
        }
    }
    if (result.n_pairs_cross > 0) {
        result.cross_group_prob = cross_sum / static_cast<double>(result.n_pairs_cross);
    }
    return result;
}

inline nlohmann::ordered_json to_json(const OverlapResult& result) {
    nlohmann::ordered_json j;
    j["within_group_prob"] = result.within_group_prob;
    j["cross_group_prob"] = result.cross_group_prob;
    j["n_pairs_within"] = result.n_pairs_within;
    j["n_pairs_cross"] = result.n_pairs_cross;
    return j;
}

// ---------------------------------------------------------------------------
// Top-merchant profile
// ---------------------------------------------------------------------------

struct TopMccShare {
    std::string mcc;
    double share = 0.0;
    std::int64_t n_accounts = 0;
};

// For each account, the most-visited merchant (ties to the lexicographically
// smaller id); returns the share of accounts per top merchant's category,
// sorted by descending share then category.
inline std::vector<TopMccShare> top_merchant_profile(const Dataset& dataset,
                                                     const std::set<std::string>& accounts) {
    if (accounts.empty()) {
        throw Error("top-merchant profile needs a non-empty account set");
    }
    std::map<std::string, std::int64_t> counts;
    for (const std::string& account : accounts) {
        const auto it = dataset.sequences.find(account);
        if (it == dataset.sequences.end()) {
            throw Error("top-merchant profile: unknown account '" + account + "'");
        }
        const EventSequence& seq = it->second;
        if (seq.empty()) {
            throw Error("top-merchant profile: account '" + account + "' has no events");
        }
        const VisitDistribution dist = visit_distribution(seq);
        // counts is keyed by merchant id in lexicographic order, so the
        // first maximum is the tie-winner.
        const std::string* top = nullptr;
        std::int64_t best = 0;
        for (const auto& [merchant, count] : dist.counts) {
            if (count > best) {
                best = count;
                top = &merchant;
            }
        }
        // The top merchant's category: taken from its first event.
        for (const Event& event : seq.events) {
            if (event.merchant_id == *top) {
                ++counts[event.mcc];
                break;
            }
        }
    }
    std::vector<TopMccShare> profile;
    profile.reserve(counts.size());
    const double total = static_cast<double>(accounts.size());
    for (const auto& [mcc, count] : counts) {
        profile.push_back(TopMccShare{mcc, static_cast<double>(count) / total, count});
    }
    std::sort(profile.begin(), profile.end(), [](const TopMccShare& a, const TopMccShare& b) {
        if (a.share != b.share) {
            return a.share > b.share;
        }
        return a.mcc < b.mcc;
    });
    return profile;
}

// ---------------------------------------------------------------------------
// Window stability
// ---------------------------------------------------------------------------

// Ranks with ties assigned the average of the positions they span.
inline std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&values](std::size_t a, std::size_t b) {
        return values[a] < values[b];
    });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) {
            ++j;
        }
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    return ranks;
}

// Spearman rank correlation with average ranks.  When one side has no rank
// variation the usual formula is undefined; equal rank vectors count as
// perfect agreement, anything else as no association.
inline double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw Error("rank correlation needs two equally sized samples of at least 2");
    }
    const std::vector<double> ra = average_ranks(a);
    const std::vector<double> rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0.0;
    double sbb = 0.0;
    double sab = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - ma;
        const double db = rb[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    if (saa == 0.0 || sbb == 0.0) {
        return ra == rb ? 1.0 : 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

struct StabilityEntry {
    std::string account_id;
    double s_unc_a = 0.0;
    double s_unc_b = 0.0;
    double s_true_a = 0.0;
    double s_true_b = 0.0;
};

struct StabilityResult {
    std::vector<StabilityEntry> per_account;  // shared accounts, ordered by id
    std::vector<std::string> skipped;         // shared but too short in either window
    double s_unc_rank_corr = 0.0;
    double s_true_rank_corr = 0.0;
};

// Compares entropies of the accounts present in both datasets and reports
// how well the population ranking persists from one window to the other.
inline StabilityResult window_stability(const Dataset& dataset_a, const Dataset& dataset_b,
                                        LzScanner scanner = LzScanner::automatic,
                                        unsigned threads = 1) {
    std::vector<std::pair<const EventSequence*, const EventSequence*>> shared;
    StabilityResult result;
    bool any_shared = false;
    for (const auto& [account, seq_a] : dataset_a.sequences) {
        const auto it = dataset_b.sequences.find(account);
        if (it == dataset_b.sequences.end()) {
            continue;
        }
        any_shared = true;
        if (seq_a.size() < 2 || it->second.size() < 2) {
            result.skipped.push_back(account);
        } else {
            shared.emplace_back(&seq_a, &it->second);
        }
    }
    if (!any_shared) {
        throw Error("window stability: the two datasets share no accounts");
    }
    if (shared.size() < 2) {
        throw Error("window stability needs at least 2 shared accounts with 2+ events in both windows");
    }
    result.per_account.resize(shared.size());
    parallel_for(shared.size(), threads, [&](std::size_t i) {
        const auto& [seq_a, seq_b] = shared[i];
        StabilityEntry& entry = result.per_account[i];
        entry.account_id = seq_a->account_id;
        entry.s_unc_a = uncorrelated_entropy(*seq_a);
        entry.s_unc_b = uncorrelated_entropy(*seq_b);
        entry.s_true_a = true_entropy(*seq_a, SymbolLevel::merchant, scanner);
        entry.s_true_b = true_entropy(*seq_b, SymbolLevel::merchant, scanner);
    });

    std::vector<double> unc_a, unc_b, true_a, true_b;
    for (const StabilityEntry& entry : result.per_account) {
        unc_a.push_back(entry.s_unc_a);
        unc_b.push_back(entry.s_unc_b);
        true_a.push_back(entry.s_true_a);
        true_b.push_back(entry.s_true_b);
    }
    result.s_unc_rank_corr = spearman(unc_a, unc_b);
    result.s_true_rank_corr = spearman(true_a, true_b);
    return result;
}

inline nlohmann::ordered_json to_json(const StabilityResult& result) {
    nlohmann::ordered_json j;
    j["per_account"] = nlohmann::ordered_json::array();
    for (const StabilityEntry& entry : result.per_account) {
        j["per_account"].push_back({{"id", entry.account_id},
                                    {"s_unc_a", entry.s_unc_a},
                                    {"s_unc_b", entry.s_unc_b},
                                    {"s_unc_delta", entry.s_unc_b - entry.s_unc_a},
                                    {"s_true_a", entry.s_true_a},
                                    {"s_true_b", entry.s_true_b},
                                    {"s_true_delta", entry.s_true_b - entry.s_true_a}});
    }
    j["skipped"] = result.skipped;
    j["s_unc_rank_corr"] = result.s_unc_rank_corr;
    j["s_true_rank_corr"] = result.s_true_rank_corr;
    return j;
}

}  // namespace shopseq
