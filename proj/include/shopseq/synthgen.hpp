#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "shopseq/core.hpp"
#include "shopseq/ingest.hpp"
#include "shopseq/rng.hpp"
#include "shopseq/time.hpp"

namespace shopseq {

// ---------------------------------------------------------------------------
// Synthetic population
// ---------------------------------------------------------------------------

// Behavioral knobs for one agent archetype.  Store preference is Zipf over a
// per-agent random permutation of its private stores; preference rank r is
// assigned the category mccs[(r-1) mod mccs.size()], so the most-preferred
// store's category is controlled directly.
struct AgentParams {
    std::int64_t n_stores = 8;
    double zipf_s = 1.0;            // preference exponent over store ranks
    double trips_per_week = 7.0;    // daily trip counts are Poisson(rate/7)
    double burst_q = 1.0;           // events per trip ~ Geometric(q) on {1,2,...}, mean 1/q
    double routine_strength = 0.0;  // 0 = iid preference draws, 1 = fixed store cycle
    double income = 0.0;            // currency/year, realized as monthly inflows
    std::vector<std::string> mccs = {"5411"};

    void validate() const {
        if (n_stores < 1) {
            throw Error("agent params: n_stores must be at least 1");
        }
        if (!(zipf_s > 0.0)) {
            throw Error("agent params: zipf_s must be positive");
        }
        if (!(trips_per_week >= 0.0)) {
            throw Error("agent params: trips_per_week must be non-negative");
        }
        if (!(burst_q > 0.0) || burst_q > 1.0) {
            throw Error("agent params: burst_q must be in (0, 1]");
        }
        if (!(routine_strength >= 0.0) || routine_strength > 1.0) {
            throw Error("agent params: routine_strength must be in [0, 1]");
        }
        if (!(income >= 0.0)) {
            throw Error("agent params: income must be non-negative");
        }
        if (mccs.empty()) {
            throw Error("agent params: mccs must list at least one category");
        }
        for (const std::string& mcc : mccs) {
            if (!is_valid_mcc(mcc)) {
                throw Error("agent params: invalid mcc '" + mcc + "'");
            }
        }
    }
};

struct PopulationCohort {
    std::string name;
    std::int64_t count = 0;
    AgentParams params;
};

struct PopulationSpec {
    std::vector<PopulationCohort> cohorts;
    DateWindow window;
    std::uint64_t seed = 0;

    void validate() const {
        if (cohorts.empty()) {
            throw Error("population spec: cohorts must be non-empty");
        }
        std::set<std::string> names;
        for (const PopulationCohort& cohort : cohorts) {
            if (cohort.name.empty()) {
                throw Error("population spec: cohort name must be non-empty");
            }
            if (!names.insert(cohort.name).second) {
                throw Error("population spec: duplicate cohort name '" + cohort.name + "'");
            }
            if (cohort.count < 1) {
                throw Error("population spec: cohort '" + cohort.name +
                            "' count must be at least 1");
            }
            cohort.params.validate();
        }
        if (window.end < window.start) {
            throw Error("population spec: window end precedes start");
        }
        if (window.n_days() < 7) {
            throw Error("population spec: window must cover at least 7 days");
        }
    }
};

// ---------------------------------------------------------------------------
// Seeded samplers (shared by the generator and the oracles)
// ---------------------------------------------------------------------------

// Knuth's product-of-uniforms method; fine for the per-day rates used here.
inline std::int64_t poisson_draw(SplitMix64& rng, double lambda) {
    if (lambda <= 0.0) {
        return 0;
    }
    const double limit = std::exp(-lambda);
    std::int64_t k = 0;
    double p = 1.0;
    do {
        p *= rng.next_double();
        ++k;
    } while (p > limit);
    return k - 1;
}

// Geometric on {1, 2, ...} with success probability q, by inversion.
inline std::int64_t geometric_draw(SplitMix64& rng, double q) {
    if (q >= 1.0) {
        return 1;
    }
    const double u = rng.next_double();
    const std::int64_t draw =
        1 + static_cast<std::int64_t>(std::floor(std::log1p(-u) / std::log1p(-q)));
    return std::min<std::int64_t>(draw, 10000);  // guard against astronomically rare tails
}

// Draw an index in [0, cdf.size()) from a cumulative distribution whose last
// entry is 1.
inline std::size_t cdf_draw(SplitMix64& rng, const std::vector<double>& cdf) {
    const double u = rng.next_double();
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
}

inline std::vector<double> zipf_cdf(std::int64_t n, double s) {
    std::vector<double> cdf(static_cast<std::size_t>(n));
    double total = 0.0;
    for (std::int64_t r = 1; r <= n; ++r) {
        total += std::pow(static_cast<double>(r), -s);
        cdf[static_cast<std::size_t>(r - 1)] = total;
    }
    for (double& c : cdf) {
        c /= total;
    }
    cdf.back() = 1.0;
    return cdf;
}

namespace detail {

// One agent's transactions, in chronological order, appended to `out`.  All
// randomness comes from the agent's own derived stream, so agents are
// independent and the population can be generated in any order.
inline void append_agent(std::vector<Transaction>& out, const PopulationSpec& spec,
                         const AgentParams& params, const std::string& account_id) {
    SplitMix64 rng = account_stream(spec.seed, 0, account_id);

    // Stores are named per agent; preference rank r maps to a random store
    // label but a fixed category mccs[(r-1) mod m].
    std::vector<std::string> label_of_rank(static_cast<std::size_t>(params.n_stores));
    {
        std::vector<std::int64_t> perm(static_cast<std::size_t>(params.n_stores));
        for (std::int64_t k = 0; k < params.n_stores; ++k) {
            perm[static_cast<std::size_t>(k)] = k + 1;
        }
        for (std::size_t i = perm.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng.bounded(i));
            std::swap(perm[i - 1], perm[j]);
        }
        char label[96];
        for (std::size_t r = 0; r < perm.size(); ++r) {
            std::snprintf(label, sizeof(label), "%s-s%lld", account_id.c_str(),
                          static_cast<long long>(perm[r]));
            label_of_rank[r] = label;
        }
    }
    const std::vector<double> cdf = zipf_cdf(params.n_stores, params.zipf_s);
    const auto mcc_of_rank = [&params](std::size_t rank0) -> const std::string& {
        return params.mccs[rank0 % params.mccs.size()];
    };

    const std::int64_t first_day = days_from_civil(spec.window.start);
    const std::int64_t n_days = spec.window.n_days();
    const double daily_rate = params.trips_per_week / 7.0;
    std::int64_t cycle_pos = 0;

    std::vector<std::size_t> day_ranks;  // preference ranks of today's events, in order
    for (std::int64_t d = 0; d < n_days; ++d) {
        day_ranks.clear();
        const std::int64_t trips = poisson_draw(rng, daily_rate);
        for (std::int64_t t = 0; t < trips; ++t) {
            const std::int64_t burst = geometric_draw(rng, params.burst_q);
            for (std::int64_t e = 0; e < burst; ++e) {
                std::size_t rank0;
                if (rng.next_double() < params.routine_strength) {
                    rank0 = static_cast<std::size_t>(cycle_pos % params.n_stores);
                    ++cycle_pos;
                } else {
                    rank0 = cdf_draw(rng, cdf);
                }
                day_ranks.push_back(rank0);
            }
        }
        const std::int64_t day_epoch = (first_day + d) * kSecondsPerDay;
        const std::int64_t m = static_cast<std::int64_t>(day_ranks.size());
        for (std::int64_t k = 0; k < m; ++k) {
            Transaction tx;
            tx.account_id = account_id;
            tx.timestamp = day_epoch + (k + 1) * kSecondsPerDay / (m + 1);
            tx.merchant_id = label_of_rank[day_ranks[static_cast<std::size_t>(k)]];
            tx.mcc = mcc_of_rank(day_ranks[static_cast<std::size_t>(k)]);
            tx.amount_cents = 100 + static_cast<std::int64_t>(rng.bounded(19901));
            tx.direction = Direction::outflow;
            out.push_back(std::move(tx));
        }
    }

    // Three inflows sized so that annualizing them over the window recovers
    // the configured income up to cent rounding.
    const std::int64_t total_cents = static_cast<std::int64_t>(
        std::llround(params.income * 100.0 * static_cast<double>(n_days) / 365.25));
    if (total_cents > 0) {
        const std::int64_t part = total_cents / 3;
        const std::int64_t parts[3] = {part, part, total_cents - 2 * part};
        for (int i = 0; i < 3; ++i) {
            if (parts[i] <= 0) {
                continue;
            }
            Transaction tx;
            tx.account_id = account_id;
            tx.timestamp = (first_day + i * n_days / 3) * kSecondsPerDay + kSecondsPerDay / 2;
            tx.merchant_id = "inflow";
            tx.mcc = "0000";
            tx.amount_cents = parts[i];
            tx.direction = Direction::inflow;
            out.push_back(std::move(tx));
        }
    }
}

}  // namespace detail

// All transactions of the population, agents in cohort order and
// chronological within each agent.  Deterministic given (spec, seed).
inline std::vector<Transaction> generate_transactions(const PopulationSpec& spec) {
    spec.validate();
    std::vector<Transaction> all;
    char account_id[128];
    for (const PopulationCohort& cohort : spec.cohorts) {
        for (std::int64_t a = 1; a <= cohort.count; ++a) {
            std::snprintf(account_id, sizeof(account_id), "%s-%05lld", cohort.name.c_str(),
                          static_cast<long long>(a));
            detail::append_agent(all, spec, cohort.params, account_id);
        }
    }
    return all;
}

inline void generate_population_csv(const PopulationSpec& spec, std::ostream& out) {
    write_transactions_csv(out, generate_transactions(spec));
}

// ---------------------------------------------------------------------------
// Population spec file
// ---------------------------------------------------------------------------

// JSON layout: {"seed": n, "window": {"start": "YYYY-MM-DD", "end": ...},
// "cohorts": [{"name", "count", <agent params inline>}]}.  Unknown keys are
// rejected so typos fail loudly instead of silently using a default.
inline PopulationSpec load_population_spec(std::istream& in) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("population spec: invalid JSON: ") + e.what());
    }
    if (!root.is_object()) {
        throw Error("population spec: top level must be a JSON object");
    }
    for (const auto& [key, value] : root.items()) {
        if (key != "seed" && key != "window" && key != "cohorts") {
            throw Error("population spec: unknown key '" + key + "'");
        }
    }

    PopulationSpec spec;
    if (!root.contains("seed") || !root["seed"].is_number_integer()) {
        throw Error("population spec: field 'seed' must be an integer");
    }
    spec.seed = root["seed"].get<std::uint64_t>();

    if (!root.contains("window") || !root["window"].is_object()) {
        throw Error("population spec: field 'window' must be an object with start and end");
    }
    const auto read_date = [&root](const char* key) {
        const auto& window = root["window"];
        if (!window.contains(key) || !window[key].is_string()) {
            throw Error(std::string("population spec: field 'window.") + key +
                        "' must be a date string");
        }
        const auto date = parse_date(window[key].get<std::string>());
        if (!date) {
            throw Error(std::string("population spec: field 'window.") + key +
                        "' is not a valid YYYY-MM-DD date");
        }
        return *date;
    };
    spec.window.start = read_date("start");
    spec.window.end = read_date("end");

    if (!root.contains("cohorts") || !root["cohorts"].is_array()) {
        throw Error("population spec: field 'cohorts' must be an array");
    }
    for (const auto& entry : root["cohorts"]) {
        if (!entry.is_object()) {
            throw Error("population spec: each cohort must be an object");
        }
        PopulationCohort cohort;
        for (const auto& [key, value] : entry.items()) {
            try {
                if (key == "name") {
                    cohort.name = value.get<std::string>();
                } else if (key == "count") {
                    cohort.count = value.get<std::int64_t>();
                } else if (key == "n_stores") {
                    cohort.params.n_stores = value.get<std::int64_t>();
                } else if (key == "zipf_s") {
                    cohort.params.zipf_s = value.get<double>();
                } else if (key == "trips_per_week") {
                    cohort.params.trips_per_week = value.get<double>();
                } else if (key == "burst_q") {
                    cohort.params.burst_q = value.get<double>();
                } else if (key == "routine_strength") {
                    cohort.params.routine_strength = value.get<double>();
                } else if (key == "income") {
                    cohort.params.income = value.get<double>();
                } else if (key == "mccs") {
                    cohort.params.mccs = value.get<std::vector<std::string>>();
                } else {
                    throw Error("population spec: unknown cohort key '" + key + "'");
                }
            } catch (const nlohmann::json::exception&) {
                throw Error("population spec: cohort field '" + key + "' has the wrong type");
            }
        }
        if (cohort.name.empty()) {
            throw Error("population spec: cohort field 'name' is required");
        }
        if (cohort.count < 1) {
            throw Error("population spec: cohort '" + cohort.name +
                        "' field 'count' must be at least 1");
        }
        spec.cohorts.push_back(std::move(cohort));
    }
    spec.validate();
    return spec;
}

inline PopulationSpec load_population_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open population spec file '" + path + "'");
    }
    return load_population_spec(in);
}

// ---------------------------------------------------------------------------
// Oracle sequences
// ---------------------------------------------------------------------------

// A synthetic symbol sequence with analytically known entropy rate.
struct OracleSequence {
    std::vector<std::int32_t> symbols;
    double entropy_rate = 0.0;  // bits/symbol, exact
};

inline OracleSequence oracle_iid(std::int64_t k, std::int64_t n, std::uint64_t seed) {
    if (k < 1 || n < 1) {
        throw Error("iid oracle needs k >= 1 and n >= 1");
    }
    OracleSequence oracle;
    oracle.symbols.reserve(static_cast<std::size_t>(n));
    SplitMix64 rng(seed);
    for (std::int64_t i = 0; i < n; ++i) {
        oracle.symbols.push_back(
            static_cast<std::int32_t>(rng.bounded(static_cast<std::uint64_t>(k))));
    }
    oracle.entropy_rate = std::log2(static_cast<double>(k));
    return oracle;
}

namespace detail {

inline void check_stochastic(const std::vector<std::vector<double>>& matrix) {
    const std::size_t k = matrix.size();
    if (k == 0) {
        throw Error("markov oracle: matrix is empty");
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (matrix[i].size() != k) {
            throw Error("markov oracle: matrix row " + std::to_string(i) + " has " +
                        std::to_string(matrix[i].size()) + " entries, expected " +
                        std::to_string(k));
        }
        double sum = 0.0;
        for (const double p : matrix[i]) {
            if (!(p >= 0.0)) {
                throw Error("markov oracle: matrix row " + std::to_string(i) +
                            " has a negative entry");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw Error("markov oracle: matrix row " + std::to_string(i) + " sums to " +
                        std::to_string(sum) + ", expected 1");
        }
    }
}

inline bool strongly_connected(const std::vector<std::vector<double>>& matrix) {
    const std::size_t k = matrix.size();
    const auto reachable = [k, &matrix](bool transpose) {
        std::vector<bool> seen(k, false);
        std::vector<std::size_t> stack{0};
        seen[0] = true;
        std::size_t visited = 1;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < k; ++v) {
                const double p = transpose ? matrix[v][u] : matrix[u][v];
                if (p > 0.0 && !seen[v]) {
                    seen[v] = true;
                    ++visited;
                    stack.push_back(v);
                }
            }
        }
        return visited == k;
    };
    return reachable(false) && reachable(true);
}

}  // namespace detail

// Stationary distribution by damped power iteration (v <- (v + vP) / 2, same
// fixed points as v = vP but convergent for periodic chains too).
inline std::vector<double> markov_stationary(const std::vector<std::vector<double>>& matrix) {
    detail::check_stochastic(matrix);
    if (!detail::strongly_connected(matrix)) {
        throw Error("markov oracle: chain is reducible, no unique stationary distribution");
    }
    const std::size_t k = matrix.size();
    std::vector<double> v(k, 1.0 / static_cast<double>(k));
    std::vector<double> next(k, 0.0);
    for (int iter = 0; iter < 1000000; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                next[j] += v[i] * matrix[i][j];
            }
        }
        double delta = 0.0;
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            next[j] = 0.5 * (next[j] + v[j]);
            total += next[j];
        }
        for (std::size_t j = 0; j < k; ++j) {
            next[j] /= total;
            delta = std::max(delta, std::abs(next[j] - v[j]));
        }
        v.swap(next);
        if (delta < 1e-12) {
            return v;
        }
    }
    throw Error("markov oracle: power iteration did not converge");
}

inline double markov_entropy_rate(const std::vector<std::vector<double>>& matrix) {
    const std::vector<double> pi = markov_stationary(matrix);
    double rate = 0.0;
    for (std::size_t i = 0; i < matrix.size(); ++i) {
        double row_entropy = 0.0;
        for (const double p : matrix[i]) {
            if (p > 0.0) {
                row_entropy -= p * std::log2(p);
            }
        }
        rate += pi[i] * row_entropy;
    }
    return rate;
}

inline OracleSequence oracle_markov(const std::vector<std::vector<double>>& matrix,
                                    std::int64_t n, std::uint64_t seed) {
    if (n < 1) {
        throw Error("markov oracle needs n >= 1");
    }
    const std::vector<double> pi = markov_stationary(matrix);
    const std::size_t k = matrix.size();

    std::vector<std::vector<double>> row_cdf(k, std::vector<double>(k, 0.0));
    for (std::size_t i = 0; i < k; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            total += matrix[i][j];
            row_cdf[i][j] = total;
        }
        row_cdf[i][k - 1] = 1.0;
    }
    std::vector<double> pi_cdf(k, 0.0);
    {
        double total = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            total += pi[j];
            pi_cdf[j] = total;
        }
        pi_cdf[k - 1] = 1.0;
    }

    OracleSequence oracle;
    oracle.entropy_rate = markov_entropy_rate(matrix);
    oracle.symbols.reserve(static_cast<std::size_t>(n));
    SplitMix64 rng(seed);
    std::size_t state = cdf_draw(rng, pi_cdf);
    oracle.symbols.push_back(static_cast<std::int32_t>(state));
    for (std::int64_t i = 1; i < n; ++i) {
        state = cdf_draw(rng, row_cdf[state]);
        oracle.symbols.push_back(static_cast<std::int32_t>(state));
    }
    return oracle;
}

}  // namespace shopseq
