#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "shopseq/core.hpp"
#include "shopseq/entropy.hpp"
#include "shopseq/ingest.hpp"
#include "shopseq/rng.hpp"

namespace shopseq {

// ---------------------------------------------------------------------------
// Rank-frequency curves
// ---------------------------------------------------------------------------

struct RankPoint {
    std::int64_t rank = 0;
    double probability = 0.0;
};

// Visit probability by popularity rank.  Individual curves are normalized
// per account and guaranteed non-increasing with sum <= 1; population curves
// are rank-wise means of individual curves, where later ranks average over
// fewer individuals, so neither the monotonicity nor the unit-sum bound
// carries over (the mean at rank 2 can sit above a shallow tail and the
// rank-wise sums can exceed 1).
struct RankCurve {
    std::vector<RankPoint> points;
    std::string source;        // account id, or "population" for aggregates
    bool population = false;

    void validate() const {
        std::int64_t expected = 1;
        double sum = 0.0;
        double previous = std::numeric_limits<double>::infinity();
        for (const RankPoint& point : points) {
            if (point.rank != expected) {
                throw Error("rank curve '" + source + "': ranks must increase from 1 without gaps");
            }
            ++expected;
            if (!(point.probability > 0.0)) {
                throw Error("rank curve '" + source + "': probabilities must be positive");
            }
            if (!population && point.probability > previous + 1e-12) {
                throw Error("rank curve '" + source + "': probabilities must be non-increasing");
            }
            previous = point.probability;
            sum += point.probability;
        }
        if (!population && sum > 1.0 + 1e-9) {
            throw Error("rank curve '" + source + "': probabilities sum above 1");
        }
    }
};

namespace detail {

// Descending per-merchant visit counts; ties broken by merchant id so the
// ordering (and everything derived from it) is reproducible.
inline std::vector<std::int64_t> ranked_counts(const VisitDistribution& dist) {
    std::vector<std::pair<std::string, std::int64_t>> items(dist.counts.begin(), dist.counts.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    std::vector<std::int64_t> counts;
    counts.reserve(items.size());
    for (const auto& [merchant, count] : items) {
        counts.push_back(count);
    }
    return counts;
}

inline RankCurve curve_from_counts(const std::vector<std::int64_t>& counts, std::string source) {
    std::int64_t total = 0;
    for (const std::int64_t c : counts) {
        total += c;
    }
    RankCurve curve;
    curve.source = std::move(source);
    curve.points.reserve(counts.size());
    for (std::size_t r = 0; r < counts.size(); ++r) {
        curve.points.push_back(RankPoint{static_cast<std::int64_t>(r) + 1,
                                         static_cast<double>(counts[r]) / static_cast<double>(total)});
    }
    return curve;
}

}  // namespace detail

// Per-account curve: visit counts sorted descending and normalized.
inline RankCurve rank_curve(const EventSequence& seq) {
    if (seq.empty()) {
        throw Error("rank curve of account '" + seq.account_id + "': sequence is empty");
    }
    RankCurve curve = detail::curve_from_counts(detail::ranked_counts(visit_distribution(seq)),
                                                seq.account_id);
    curve.validate();
    return curve;
}

// Population curve: rank-wise mean of the individual curves, each rank
// averaged over the individuals that reach it.
inline RankCurve population_rank_curve(const Dataset& dataset,
                                       const std::set<std::string>& accounts) {
    if (accounts.empty()) {
        throw Error("population rank curve needs a non-empty account set");
    }
    std::vector<double> sums;
    std::vector<std::int64_t> reached;
    for (const std::string& account : accounts) {
        const auto it = dataset.sequences.find(account);
        if (it == dataset.sequences.end()) {
            throw Error("population rank curve: unknown account '" + account + "'");
        }
        const RankCurve individual = rank_curve(it->second);
        if (individual.points.size() > sums.size()) {
            sums.resize(individual.points.size(), 0.0);
            reached.resize(individual.points.size(), 0);
        }
        for (std::size_t r = 0; r < individual.points.size(); ++r) {
            sums[r] += individual.points[r].probability;
            ++reached[r];
        }
    }
    RankCurve curve;
    curve.source = "population";
    curve.population = true;
    curve.points.reserve(sums.size());
    for (std::size_t r = 0; r < sums.size(); ++r) {
        curve.points.push_back(RankPoint{static_cast<std::int64_t>(r) + 1,
                                         sums[r] / static_cast<double>(reached[r])});
    }
    curve.validate();
    return curve;
}

inline void write_rank_curve_csv(std::ostream& out, const RankCurve& curve) {
    out << "rank,probability\n";
    char buffer[64];
    for (const RankPoint& point : curve.points) {
        std::snprintf(buffer, sizeof(buffer), "%lld,%.9f\n",
                      static_cast<long long>(point.rank), point.probability);
        out << buffer;
    }
}

// ---------------------------------------------------------------------------
// Zipf fit
// ---------------------------------------------------------------------------

struct RankRange {
    std::int64_t min_rank = 0;
    std::int64_t max_rank = 0;
};

struct ZipfFit {
    double s = 0.0;         // exponent (minus the log-log slope)
    double s_stderr = 0.0;  // bootstrap standard error; 0 when no resampling source
    double r_squared = 0.0;
    RankRange rank_range;
    std::string method = "loglog-least-squares";
    std::string bootstrap = "none";  // none | visits | individuals
};

inline constexpr int kBootstrapResamples = 1000;

namespace detail {

struct SlopeFit {
    double s = 0.0;
    double r_squared = 0.0;
};

// Least squares of log probability against log rank over the given range.
// Returns nothing when fewer than 3 usable points fall in range; throws
// never — callers decide whether absence is an error.
inline std::optional<SlopeFit> try_loglog_fit(const RankCurve& curve, const RankRange& range) {
    std::vector<double> xs;
    std::vector<double> ys;
    for (const RankPoint& point : curve.points) {
        if (point.rank < range.min_rank || point.rank > range.max_rank) {
            continue;
        }
        if (!(point.probability > 0.0)) {
            return std::nullopt;
        }
        xs.push_back(std::log(static_cast<double>(point.rank)));
        ys.push_back(std::log(point.probability));
    }
    if (xs.size() < 3) {
        return std::nullopt;
    }
    const double n = static_cast<double>(xs.size());
    double x_mean = 0.0;
    double y_mean = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        x_mean += xs[i];
        y_mean += ys[i];
    }
    x_mean /= n;
    y_mean /= n;
    double sxx = 0.0;
    double sxy = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = xs[i] - x_mean;
        const double dy = ys[i] - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) {
        return std::nullopt;
    }
    const double slope = sxy / sxx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double residual = (ys[i] - y_mean) - slope * (xs[i] - x_mean);
        ss_res += residual * residual;
    }
    SlopeFit fit;
    fit.s = -slope;
    fit.r_squared = syy > 0.0 ? std::max(0.0, 1.0 - ss_res / syy) : 1.0;
    return fit;
}

inline void check_rank_range(const RankRange& range) {
    if (range.min_rank < 1 || range.max_rank < range.min_rank) {
        throw Error("rank range [" + std::to_string(range.min_rank) + ", " +
                    std::to_string(range.max_rank) + "] is invalid");
    }
}

// Standard deviation of the bootstrap replicates around their own mean.
inline double bootstrap_stddev(const std::vector<double>& replicates) {
    if (replicates.size() < 2) {
        return 0.0;
    }
    double mean = 0.0;
    for (const double value : replicates) {
        mean += value;
    }
    mean /= static_cast<double>(replicates.size());
    double ss = 0.0;
    for (const double value : replicates) {
        const double d = value - mean;
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(replicates.size() - 1));
}

}  // namespace detail

// Fit a bare curve.  No resampling source is attached, so s_stderr is 0 —
// appropriate for noiseless/analytic curves.
inline ZipfFit fit_zipf(const RankCurve& curve, const RankRange& range) {
    detail::check_rank_range(range);
    const auto fit = detail::try_loglog_fit(curve, range);
    if (!fit) {
        throw Error("zipf fit over ranks [" + std::to_string(range.min_rank) + ", " +
                    std::to_string(range.max_rank) +
                    "] needs at least 3 in-range points with positive probability");
    }
    ZipfFit result;
    result.s = fit->s;
    result.r_squared = fit->r_squared;
    result.rank_range = range;
    return result;
}

// Fit one account's curve, with the standard error bootstrapped by
// resampling its visits (multinomial over the observed counts).
inline ZipfFit fit_zipf(const EventSequence& seq, const RankRange& range, std::uint64_t seed) {
    ZipfFit result = fit_zipf(rank_curve(seq), range);
    result.bootstrap = "visits";

    const std::vector<std::int64_t> base_counts = detail::ranked_counts(visit_distribution(seq));
    const std::int64_t total = static_cast<std::int64_t>(seq.size());
    std::vector<std::int64_t> cumulative(base_counts.size());
    std::int64_t running = 0;
    for (std::size_t j = 0; j < base_counts.size(); ++j) {
        running += base_counts[j];
        cumulative[j] = running;
    }

    SplitMix64 rng(seed);
    std::vector<double> replicates;
    replicates.reserve(kBootstrapResamples);
    std::vector<std::int64_t> resampled(base_counts.size());
    for (int b = 0; b < kBootstrapResamples; ++b) {
        std::fill(resampled.begin(), resampled.end(), 0);
        for (std::int64_t draw = 0; draw < total; ++draw) {
            const std::int64_t u = static_cast<std::int64_t>(
                rng.bounded(static_cast<std::uint64_t>(total)));
            const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
            ++resampled[static_cast<std::size_t>(it - cumulative.begin())];
        }
        std::vector<std::int64_t> counts;
        counts.reserve(resampled.size());
        for (const std::int64_t c : resampled) {
            if (c > 0) {
                counts.push_back(c);
            }
        }
        std::sort(counts.begin(), counts.end(), std::greater<>());
        const auto fit =
            detail::try_loglog_fit(detail::curve_from_counts(counts, seq.account_id), range);
        if (fit) {
            replicates.push_back(fit->s);
        }
    }
    result.s_stderr = detail::bootstrap_stddev(replicates);
    return result;
}

// Fit a population curve, with the standard error bootstrapped by resampling
// individuals with replacement and rebuilding the rank-wise mean each time.
inline ZipfFit fit_zipf(const Dataset& dataset, const std::set<std::string>& accounts,
                        const RankRange& range, std::uint64_t seed) {
    ZipfFit result = fit_zipf(population_rank_curve(dataset, accounts), range);
    result.bootstrap = "individuals";

    std::vector<RankCurve> individuals;
    individuals.reserve(accounts.size());
    for (const std::string& account : accounts) {
        individuals.push_back(rank_curve(dataset.sequences.at(account)));
    }

    SplitMix64 rng(seed);
    const std::size_t m = individuals.size();
    std::vector<double> replicates;
    replicates.reserve(kBootstrapResamples);
    std::vector<double> sums;
    std::vector<std::int64_t> reached;
    for (int b = 0; b < kBootstrapResamples; ++b) {
        sums.clear();
        reached.clear();
        for (std::size_t pick = 0; pick < m; ++pick) {
            const RankCurve& individual =
                individuals[static_cast<std::size_t>(rng.bounded(m))];
            if (individual.points.size() > sums.size()) {
                sums.resize(individual.points.size(), 0.0);
                reached.resize(individual.points.size(), 0);
            }
            for (std::size_t r = 0; r < individual.points.size(); ++r) {
                sums[r] += individual.points[r].probability;
                ++reached[r];
            }
        }
        RankCurve curve;
        curve.source = "population";
        curve.population = true;
        curve.points.reserve(sums.size());
        for (std::size_t r = 0; r < sums.size(); ++r) {
            curve.points.push_back(RankPoint{static_cast<std::int64_t>(r) + 1,
                                             sums[r] / static_cast<double>(reached[r])});
        }
        const auto fit = detail::try_loglog_fit(curve, range);
        if (fit) {
            replicates.push_back(fit->s);
        }
    }
    result.s_stderr = detail::bootstrap_stddev(replicates);
    return result;
}

inline nlohmann::ordered_json to_json(const ZipfFit& fit) {
    nlohmann::ordered_json j;
    j["s"] = fit.s;
    j["s_stderr"] = fit.s_stderr;
    j["r_squared"] = fit.r_squared;
    j["rank_range"] = {fit.rank_range.min_rank, fit.rank_range.max_rank};
    j["method"] = fit.method;
    j["bootstrap"] = fit.bootstrap;
    return j;
}

// ---------------------------------------------------------------------------
// Transition graphs
// ---------------------------------------------------------------------------

struct GraphEdge {
    std::int64_t count = 0;   // pooled consecutive-pair count
    double weight = 0.0;      // count / (source node's pair-source count)
};

// Weighted directed graph of consecutive visits.  Nodes carry total visit
// counts; an edge a->b carries the empirical probability that the next visit
// after a is b.  Maps keep everything in lexicographic order so exports are
// byte-stable.
struct TransitionGraph {
    SymbolLevel level = SymbolLevel::merchant;
    std::map<std::string, std::int64_t> nodes;  // label -> visit count
    std::map<std::pair<std::string, std::string>, GraphEdge> edges;
};

namespace detail {

inline const std::string& event_label(const Event& event, SymbolLevel level) {
    return level == SymbolLevel::merchant ? event.merchant_id : event.mcc;
}

// Accumulates one account's visit counts and consecutive-pair counts.
inline void accumulate_pairs(const EventSequence& seq, SymbolLevel level,
                             std::map<std::string, std::int64_t>& nodes,
                             std::map<std::pair<std::string, std::string>, std::int64_t>& pairs) {
    for (const Event& event : seq.events) {
        ++nodes[event_label(event, level)];
    }
    for (std::size_t i = 0; i + 1 < seq.events.size(); ++i) {
        ++pairs[{event_label(seq.events[i], level), event_label(seq.events[i + 1], level)}];
    }
}

inline TransitionGraph normalize_graph(SymbolLevel level,
                                       std::map<std::string, std::int64_t> nodes,
                                       const std::map<std::pair<std::string, std::string>,
                                                      std::int64_t>& pairs) {
    std::map<std::string, std::int64_t> source_totals;
    for (const auto& [edge, count] : pairs) {
        source_totals[edge.first] += count;
    }
    TransitionGraph graph;
    graph.level = level;
    graph.nodes = std::move(nodes);
    for (const auto& [edge, count] : pairs) {
        graph.edges[edge] = GraphEdge{
            count, static_cast<double>(count) / static_cast<double>(source_totals[edge.first])};
    }
    return graph;
}

}  // namespace detail

// Graph of one account's consecutive visits.  The final event is a node but
// never a pair source.
inline TransitionGraph transition_graph(const EventSequence& seq,
                                        SymbolLevel level = SymbolLevel::merchant) {
    if (seq.size() < 2) {
        throw Error("transition graph of account '" + seq.account_id +
                    "' needs at least 2 events, got " + std::to_string(seq.size()));
    }
    std::map<std::string, std::int64_t> nodes;
    std::map<std::pair<std::string, std::string>, std::int64_t> pairs;
    detail::accumulate_pairs(seq, level, nodes, pairs);
    return detail::normalize_graph(level, std::move(nodes), pairs);
}

// Pools pair counts across accounts (pairs never span accounts), then
// normalizes per source node.  Accounts with a single event contribute their
// visit count but no pairs.
inline TransitionGraph population_graph(const Dataset& dataset,
                                        const std::set<std::string>& accounts,
                                        SymbolLevel level = SymbolLevel::mcc) {
    if (accounts.empty()) {
        throw Error("population graph needs a non-empty account set");
    }
    std::map<std::string, std::int64_t> nodes;
    std::map<std::pair<std::string, std::string>, std::int64_t> pairs;
    for (const std::string& account : accounts) {
        const auto it = dataset.sequences.find(account);
        if (it == dataset.sequences.end()) {
            throw Error("population graph: unknown account '" + account + "'");
        }
        detail::accumulate_pairs(it->second, level, nodes, pairs);
    }
    return detail::normalize_graph(level, std::move(nodes), pairs);
}

namespace detail {

inline std::string dot_quote(const std::string& label) {
    std::string quoted = "\"";
    for (const char c : label) {
        if (c == '"' || c == '\\') {
            quoted.push_back('\\');
        }
        quoted.push_back(c);
    }
    quoted.push_back('"');
    return quoted;
}

}  // namespace detail

// DOT export, nodes then edges, both in lexicographic order.
inline void write_graph_dot(std::ostream& out, const TransitionGraph& graph) {
    out << "digraph transitions {\n";
    for (const auto& [label, count] : graph.nodes) {
        out << "  " << detail::dot_quote(label) << " [count=" << count << "];\n";
    }
    char weight[32];
    for (const auto& [edge, data] : graph.edges) {
        std::snprintf(weight, sizeof(weight), "%.6f", data.weight);
        out << "  " << detail::dot_quote(edge.first) << " -> " << detail::dot_quote(edge.second)
            << " [weight=\"" << weight << "\"];\n";
    }
    out << "}\n";
}

inline nlohmann::ordered_json to_json(const TransitionGraph& graph) {
    nlohmann::ordered_json j;
    j["level"] = to_string(graph.level);
    j["nodes"] = nlohmann::ordered_json::array();
    for (const auto& [label, count] : graph.nodes) {
        j["nodes"].push_back({{"id", label}, {"count", count}});
    }
    j["edges"] = nlohmann::ordered_json::array();
    for (const auto& [edge, data] : graph.edges) {
        j["edges"].push_back(
            {{"from", edge.first}, {"to", edge.second}, {"weight", data.weight}});
    }
    return j;
}

// ---------------------------------------------------------------------------
// Predictable quintile
// ---------------------------------------------------------------------------

enum class Quintile { top, bottom };

// Accounts in the requested entropy quintile after controlling for visit
// volume: accounts are stratified into five visit-count bands, and within
// each band the fifth with the lowest (top) or highest (bottom) uncorrelated
// entropy is selected.  Ties break by account id, so the selection is
// deterministic.
inline std::set<std::string> predictable_quintile(const Dataset& dataset,
                                                  const std::set<std::string>& accounts,
                                                  Quintile quintile) {
    if (accounts.size() < 25) {
        throw Error("predictable quintile needs at least 25 accounts, got " +
                    std::to_string(accounts.size()));
    }
    struct Entry {
        std::string account;
        std::int64_t visits;
        double s_unc;
    };
    std::vector<Entry> entries;
    entries.reserve(accounts.size());
    for (const std::string& account : accounts) {
        const auto it = dataset.sequences.find(account);
        if (it == dataset.sequences.end()) {
            throw Error("predictable quintile: unknown account '" + account + "'");
        }
        if (it->second.empty()) {
            throw Error("predictable quintile: account '" + account + "' has no events");
        }
        entries.push_back(Entry{account, static_cast<std::int64_t>(it->second.size()),
                                uncorrelated_entropy(it->second)});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.visits != b.visits) {
            return a.visits < b.visits;
        }
        return a.account < b.account;
    });

    std::set<std::string> selected;
    const std::size_t m = entries.size();
    for (int stratum = 0; stratum < 5; ++stratum) {
        const std::size_t begin = m * static_cast<std::size_t>(stratum) / 5;
        const std::size_t end = m * (static_cast<std::size_t>(stratum) + 1) / 5;
        std::vector<Entry> band(entries.begin() + static_cast<std::ptrdiff_t>(begin),
                                entries.begin() + static_cast<std::ptrdiff_t>(end));
        std::sort(band.begin(), band.end(), [quintile](const Entry& a, const Entry& b) {
            if (a.s_unc != b.s_unc) {
                return quintile == Quintile::top ? a.s_unc < b.s_unc : a.s_unc > b.s_unc;
            }
            return a.account < b.account;
        });
        const std::size_t take = (band.size() + 4) / 5;
        for (std::size_t i = 0; i < take && i < band.size(); ++i) {
            selected.insert(band[i].account);
        }
    }
    return selected;
}

}  // namespace shopseq
