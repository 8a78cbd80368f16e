#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <shopseq/experiments.hpp>
#include <shopseq/structure.hpp>

using namespace shopseq;

namespace {

constexpr std::int64_t kJan1 = 14610LL * 86400;  // 2010-01-01T00:00:00Z

struct Stamp {
    int day;
    int hour;
    std::string merchant;
    std::string mcc;
};

EventSequence timed_sequence(const std::string& account, const DateWindow& window,
                             const std::vector<Stamp>& stamps) {
    EventSequence seq;
    seq.account_id = account;
    seq.window = window;
    for (const Stamp& s : stamps) {
        seq.events.push_back(
            Event{kJan1 + s.day * 86400LL + s.hour * 3600LL, s.merchant, s.mcc});
    }
    return seq;
}

// Fixture shared by the transform tests: three multi-event days plus one
// singleton, spanning two weeks of a 14-day window.
EventSequence transform_fixture() {
    return timed_sequence("acct", {{2010, 1, 1}, {2010, 1, 14}},
                          {{0, 9, "c", "5912"},
                           {0, 12, "a", "5411"},
                           {0, 15, "b", "5812"},
                           {1, 9, "d", "5999"},
                           {3, 8, "b", "5813"},
                           {3, 20, "a", "5411"},
                           {8, 10, "z", "5411"},
                           {8, 16, "y", "5912"}});
}

std::vector<std::string> merchants_of(const EventSequence& seq) {
    std::vector<std::string> out;
    for (const Event& e : seq.events) out.push_back(e.merchant_id);
    return out;
}

std::multiset<std::pair<std::string, std::string>> payloads_in(const EventSequence& seq,
                                                               std::size_t begin,
                                                               std::size_t end) {
    std::multiset<std::pair<std::string, std::string>> payloads;
    for (std::size_t i = begin; i < end; ++i) {
        payloads.insert({seq.events[i].merchant_id, seq.events[i].mcc});
    }
    return payloads;
}

Dataset dataset_of(const std::vector<EventSequence>& sequences) {
    Dataset ds;
    ds.window = {{2010, 1, 1}, {2010, 1, 14}};
    for (const auto& seq : sequences) ds.sequences[seq.account_id] = seq;
    return ds;
}

// One account per regularity style, every account with two events on each
// of six days.
Dataset simulation_fixture() {
    std::vector<EventSequence> sequences;
    for (int i = 0; i < 6; ++i) {
        std::vector<Stamp> stamps;
        for (int day = 0; day < 6; ++day) {
            for (int slot = 0; slot < 2; ++slot) {
                const int pick = (day * 2 + slot) % (i + 2);
                stamps.push_back(
                    {day, 9 + slot * 6, "m" + std::to_string(pick), "5411"});
            }
        }
        sequences.push_back(
            timed_sequence("s" + std::to_string(i), {{2010, 1, 1}, {2010, 1, 14}}, stamps));
    }
    sequences.push_back(timed_sequence("tiny", {{2010, 1, 1}, {2010, 1, 14}},
                                       {{0, 9, "m0", "5411"}}));
    return dataset_of(sequences);
}

}  // namespace

TEST_CASE("day shuffle permutes payloads but never timestamps or days") {
    const EventSequence seq = transform_fixture();
    const EventSequence shuffled = shuffle_within_day(seq, 5);

    REQUIRE(shuffled.events.size() == seq.events.size());
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        CHECK(shuffled.events[i].timestamp == seq.events[i].timestamp);
    }
    // Day ranges: [0,3) [3,4) [4,6) [6,8).  Each keeps its payload multiset,
    // and the merchant keeps its category.
    CHECK(payloads_in(shuffled, 0, 3) == payloads_in(seq, 0, 3));
    CHECK(payloads_in(shuffled, 3, 4) == payloads_in(seq, 3, 4));
    CHECK(payloads_in(shuffled, 4, 6) == payloads_in(seq, 4, 6));
    CHECK(payloads_in(shuffled, 6, 8) == payloads_in(seq, 6, 8));
    CHECK(shuffled.events[3].merchant_id == "d");  // singleton day untouched

    SECTION("seeding is deterministic and actually varies") {
        CHECK(merchants_of(shuffle_within_day(seq, 5)) == merchants_of(shuffled));
        bool any_moved = false;
        for (std::uint64_t seed = 1; seed <= 16 && !any_moved; ++seed) {
            any_moved = merchants_of(shuffle_within_day(seq, seed)) != merchants_of(seq);
        }
        CHECK(any_moved);
    }

    SECTION("order-free entropies are bit-identical under the shuffle") {
        for (std::uint64_t seed = 1; seed <= 8; ++seed) {
            const EventSequence s = shuffle_within_day(seq, seed);
            CHECK(random_entropy(s) == random_entropy(seq));
            CHECK(uncorrelated_entropy(s) == uncorrelated_entropy(seq));
        }
    }

    SECTION("a timezone moves the day boundary") {
        // 23:30 UTC sits on the next local day at +02:00, joining the
        // morning event there into one two-event bin.
        const EventSequence late = timed_sequence("late", {{2010, 1, 1}, {2010, 1, 3}},
                                                  {{0, 23, "p", "5411"},
                                                   {1, 1, "q", "5912"}});
        const Timezone plus2 = *parse_timezone("+02:00");
        bool moved = false;
        for (std::uint64_t seed = 1; seed <= 16 && !moved; ++seed) {
            moved = merchants_of(shuffle_within_day(late, seed, plus2)) !=
                    merchants_of(late);
        }
        CHECK(moved);  // the two events share a local day, so they can swap
        for (std::uint64_t seed = 1; seed <= 16; ++seed) {
            CHECK(merchants_of(shuffle_within_day(late, seed)) == merchants_of(late));
        }
    }
}

TEST_CASE("week sort orders payloads by merchant inside each week") {
    const EventSequence seq = transform_fixture();
    const EventSequence sorted = sort_within_week(seq);

    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        CHECK(sorted.events[i].timestamp == seq.events[i].timestamp);
    }
    // Week one holds days 0..6 (six events), week two day 8 (two events).
    CHECK(merchants_of(sorted) ==
          std::vector<std::string>{"a", "a", "b", "b", "c", "d", "y", "z"});
    // The sort is stable, so the day-0 "b" keeps its place ahead of the
    // day-3 "b" and both keep their own categories.
    CHECK(sorted.events[2].mcc == "5812");
    CHECK(sorted.events[3].mcc == "5813");

    SECTION("idempotent") {
        const EventSequence twice = sort_within_week(sorted);
        CHECK(merchants_of(twice) == merchants_of(sorted));
        for (std::size_t i = 0; i < sorted.events.size(); ++i) {
            CHECK(twice.events[i].mcc == sorted.events[i].mcc);
        }
    }

    SECTION("events in different weeks never mix") {
        // "y" and "z" sort after "a".."d" alphabetically anyway; plant a
        // week-2 merchant that would sort first if weeks leaked.
        EventSequence leaky = seq;
        leaky.events[6].merchant_id = "A";
        const EventSequence kept = sort_within_week(leaky);
        CHECK(kept.events[6].merchant_id == "A");  // still in week two's slots
        CHECK(kept.events[0].merchant_id == "a");
    }
}

TEST_CASE("entropy simulation reports baseline and transformed rates") {
    const Dataset ds = simulation_fixture();
    SimulationConfig config;
    config.runs = 10;
    config.sample_size = 6;
    config.seed = 3;
    config.mode = SimulationMode::shuffle_day;

    const SimulationResult result = run_entropy_simulation(ds, config);
    REQUIRE(result.per_account.size() == 6);
    for (std::size_t i = 0; i < result.per_account.size(); ++i) {
        CHECK(result.per_account[i].account_id == "s" + std::to_string(i));
    }
    // The single-event account is never eligible.
    for (const AccountSimulation& acc : result.per_account) {
        CHECK(acc.account_id != "tiny");
        CHECK(acc.baseline == true_entropy(ds.sequences.at(acc.account_id)));
        CHECK(acc.transformed_sd >= 0.0);
    }
    CHECK(result.baseline_hist.total == 6);
    CHECK(result.transformed_hist.total == 6);
    double mean = 0.0;
    for (const AccountSimulation& acc : result.per_account) mean += acc.baseline;
    CHECK(result.mean_baseline == Catch::Approx(mean / 6.0));

    SECTION("the symbol-level fast path matches the event-level transform") {
        for (const AccountSimulation& acc : result.per_account) {
            const EventSequence& seq = ds.sequences.at(acc.account_id);
            double sum = 0.0;
            for (std::int64_t run = 1; run <= config.runs; ++run) {
                const std::uint64_t derived =
                    (config.seed ^ static_cast<std::uint64_t>(run)) ^ fnv1a64(acc.account_id);
                sum += true_entropy(shuffle_within_day(seq, derived, ds.timezone));
            }
            CHECK(acc.transformed_mean == sum / static_cast<double>(config.runs));
        }
    }

    SECTION("rerun and thread count leave the numbers untouched") {
        const SimulationResult again = run_entropy_simulation(ds, config);
        const SimulationResult threaded = run_entropy_simulation(ds, config, 3);
        REQUIRE(again.per_account.size() == 6);
        REQUIRE(threaded.per_account.size() == 6);
        for (std::size_t i = 0; i < 6; ++i) {
            CHECK(again.per_account[i].transformed_mean ==
                  result.per_account[i].transformed_mean);
            CHECK(threaded.per_account[i].transformed_mean ==
                  result.per_account[i].transformed_mean);
            CHECK(threaded.per_account[i].transformed_sd ==
                  result.per_account[i].transformed_sd);
        }
    }

    SECTION("a single run has no spread") {
        SimulationConfig once = config;
        once.runs = 1;
        for (const AccountSimulation& acc : run_entropy_simulation(ds, once).per_account) {
            CHECK(acc.transformed_sd == 0.0);
        }
    }

    SECTION("subsampling is deterministic in the seed") {
        SimulationConfig sub = config;
        sub.sample_size = 3;
        const SimulationResult first = run_entropy_simulation(ds, sub);
        const SimulationResult second = run_entropy_simulation(ds, sub);
        REQUIRE(first.per_account.size() == 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(first.per_account[i].account_id == second.per_account[i].account_id);
        }
        CHECK(std::is_sorted(first.per_account.begin(), first.per_account.end(),
                             [](const AccountSimulation& a, const AccountSimulation& b) {
                                 return a.account_id < b.account_id;
                             }));
    }

    SECTION("week sorting is deterministic, so runs collapse to one") {
        SimulationConfig sorted = config;
        sorted.mode = SimulationMode::sort_week;
        sorted.runs = 5;
        const SimulationResult weekly = run_entropy_simulation(ds, sorted);
        for (const AccountSimulation& acc : weekly.per_account) {
            CHECK(acc.transformed_sd == 0.0);
            CHECK(acc.transformed_mean ==
                  true_entropy(sort_within_week(ds.sequences.at(acc.account_id), ds.timezone)));
        }
    }

    SECTION("bad configurations are rejected") {
        SimulationConfig bad = config;
        bad.runs = 0;
        CHECK_THROWS_WITH(run_entropy_simulation(ds, bad),
                          Catch::Matchers::ContainsSubstring("at least 1 run"));
        bad = config;
        bad.sample_size = 0;
        CHECK_THROWS_WITH(run_entropy_simulation(ds, bad),
                          Catch::Matchers::ContainsSubstring("positive sample size"));
        bad = config;
        bad.sample_size = 7;  // only 6 accounts have 2+ events
        CHECK_THROWS_WITH(run_entropy_simulation(ds, bad),
                          Catch::Matchers::ContainsSubstring("exceeds the 6 accounts"));
    }

    SECTION("json export") {
        const auto j = to_json(result);
        CHECK(j["config"]["mode"] == "shuffle_day");
        CHECK(j["config"]["runs"] == 10);
        CHECK(j["per_account"].size() == 6);
        CHECK(j["per_account"][0]["id"] == "s0");
        CHECK(j["histograms"]["baseline"]["total"] == 6);
        CHECK(j["mean_transformed"].get<double>() == result.mean_transformed);
    }
}

TEST_CASE("bundling variance counts empty days against concentration") {
    SECTION("everything on one day of a week") {
        const EventSequence piled = timed_sequence(
            "piled", {{2010, 1, 1}, {2010, 1, 7}},
            std::vector<Stamp>(7, Stamp{0, 9, "m", "5411"}));
        const BundlingScore score = bundling_score(piled);
        CHECK(score.n_days == 7);
        CHECK(score.mean_daily == Catch::Approx(1.0));
        // counts (7,0,0,0,0,0,0): variance (36 + 6) / 7
        CHECK(score.variance == Catch::Approx(6.0));
    }

    SECTION("one visit every day is perfectly smooth") {
        std::vector<Stamp> stamps;
        for (int day = 0; day < 7; ++day) stamps.push_back({day, 9, "m", "5411"});
        const BundlingScore score =
            bundling_score(timed_sequence("even", {{2010, 1, 1}, {2010, 1, 7}}, stamps));
        CHECK(score.variance == 0.0);
        CHECK(score.mean_daily == Catch::Approx(1.0));
    }

    SECTION("the timezone decides which day a late purchase lands on") {
        const EventSequence late = timed_sequence("late", {{2010, 1, 1}, {2010, 1, 2}},
                                                  {{0, 1, "m", "5411"},
                                                   {0, 23, "m", "5411"}});
        CHECK(bundling_score(late).variance == Catch::Approx(1.0));  // (2,0)
        CHECK(bundling_score(late, *parse_timezone("+02:00")).variance == 0.0);  // (1,1)
    }

    SECTION("a one-day window cannot express bundling") {
        const EventSequence tiny = timed_sequence("tiny", {{2010, 1, 1}, {2010, 1, 1}},
                                                  {{0, 9, "m", "5411"}});
        CHECK_THROWS_WITH(bundling_score(tiny),
                          Catch::Matchers::ContainsSubstring("at least 2 days"));
    }
}

namespace {

Dataset cohort_fixture() {
    // alpha: counts (4,1,1) spread one per day; beta: one store, one day.
    std::vector<Stamp> alpha_stamps;
    const char* alpha_merchants[] = {"a", "a", "a", "a", "b", "c"};
    for (int day = 0; day < 6; ++day) {
        alpha_stamps.push_back({day, 9, alpha_merchants[day], "5411"});
    }
    std::vector<Stamp> beta_stamps(4, Stamp{0, 10, "d", "5912"});
    return dataset_of({
        timed_sequence("alpha", {{2010, 1, 1}, {2010, 1, 6}}, alpha_stamps),
        timed_sequence("beta", {{2010, 1, 1}, {2010, 1, 4}}, beta_stamps),
    });
}

}  // namespace

TEST_CASE("cohort summary collects per-account regularity statistics") {
    const Dataset ds = cohort_fixture();
    const std::map<std::string, std::set<std::string>> cohorts = {
        {"g1", {"alpha"}},
        {"g2", {"beta"}},
    };
    const std::vector<CohortStats> summaries = cohort_summary(ds, cohorts);
    REQUIRE(summaries.size() == 2);

    const CohortStats& g1 = summaries[0];
    CHECK(g1.name == "g1");
    REQUIRE(g1.accounts == std::vector<std::string>{"alpha"});
    CHECK(g1.store_counts[0] == 3.0);
    CHECK(g1.s_rand[0] == Catch::Approx(std::log2(3.0)));
    // counts (4,1,1) over 6 visits: log2(6) - (4*2)/6
    CHECK(g1.s_unc[0] == Catch::Approx(std::log2(6.0) - 8.0 / 6.0));
    CHECK(g1.entropy_gap[0] == Catch::Approx(g1.s_rand[0] - g1.s_unc[0]));
    // counts (4,1,1), mean 2: ((2)^2 + 1 + 1) / 3
    CHECK(g1.visit_variance[0] == Catch::Approx(2.0));
    CHECK(g1.bundling[0] == 0.0);  // one visit per day of its window

    const CohortStats& g2 = summaries[1];
    CHECK(g2.store_counts[0] == 1.0);
    CHECK(g2.s_rand[0] == 0.0);
    CHECK(g2.s_unc[0] == 0.0);
    CHECK(g2.visit_variance[0] == 0.0);
    // counts (4,0,0,0) over four days: (9 + 3) / 4
    CHECK(g2.bundling[0] == Catch::Approx(3.0));

    SECTION("csv export pivots one statistic across cohorts") {
        std::ostringstream out;
        write_cohort_csv(out, summaries, "store_count");
        CHECK(out.str() ==
              "cohort,account_id,value\n"
              "g1,alpha,3.000000000\n"
              "g2,beta,1.000000000\n");
        std::ostringstream bundling;
        write_cohort_csv(bundling, summaries, "bundling");
        CHECK(bundling.str() ==
              "cohort,account_id,value\n"
              "g1,alpha,0.000000000\n"
              "g2,beta,3.000000000\n");
        std::ostringstream bad;
        CHECK_THROWS_WITH(write_cohort_csv(bad, summaries, "frobnication"),
                          Catch::Matchers::ContainsSubstring("unknown cohort statistic"));
    }

    SECTION("defective cohorts are rejected") {
        CHECK_THROWS_WITH(cohort_summary(ds, {{"void", {}}}),
                          Catch::Matchers::ContainsSubstring("is empty"));
        CHECK_THROWS_WITH(cohort_summary(ds, {{"g", {"ghost"}}}),
                          Catch::Matchers::ContainsSubstring("unknown account"));
        Dataset with_empty = ds;
        with_empty.sequences["hollow"] =
            timed_sequence("hollow", {{2010, 1, 1}, {2010, 1, 6}}, {});
        CHECK_THROWS_WITH(cohort_summary(with_empty, {{"g", {"hollow"}}}),
                          Catch::Matchers::ContainsSubstring("no events"));
    }
}

namespace {

EventSequence mcc_sequence(const std::string& account, const std::vector<std::string>& mccs) {
    std::vector<Stamp> stamps;
    for (std::size_t i = 0; i < mccs.size(); ++i) {
        stamps.push_back({static_cast<int>(i % 6), 8 + static_cast<int>(i / 6),
                          "m" + std::to_string(i), mccs[i]});
    }
    return timed_sequence(account, {{2010, 1, 1}, {2010, 1, 14}}, stamps);
}

}  // namespace

TEST_CASE("pair overlap is the collision chance of two category draws") {
    const EventSequence grocer1 = mcc_sequence("grocer1", {"5411", "5411", "5411", "5411"});
    const EventSequence grocer2 = mcc_sequence("grocer2", {"5411", "5411"});
    const EventSequence mixed = mcc_sequence("mixed", {"5411", "5411", "5812", "5812"});
    const EventSequence diner = mcc_sequence("diner", {"5812", "5812", "5812"});

    CHECK(pair_overlap(grocer1, grocer2) == 1.0);
    CHECK(pair_overlap(grocer1, diner) == 0.0);
    CHECK(pair_overlap(mixed, grocer1) == Catch::Approx(0.5));
    CHECK(pair_overlap(mixed, diner) == Catch::Approx(0.5));
    CHECK(pair_overlap(mixed, mixed) == Catch::Approx(0.5));  // 0.25 + 0.25
    CHECK(pair_overlap(mixed, grocer1) == pair_overlap(grocer1, mixed));

    CHECK_THROWS_WITH(pair_overlap(mcc_sequence("void", {}), grocer1),
                      Catch::Matchers::ContainsSubstring("no events"));

    SECTION("monte carlo estimates converge on the closed form") {
        const double mc = pair_overlap_monte_carlo(mixed, grocer1, 100000, 9);
        CHECK(mc == Catch::Approx(0.5).margin(0.01));
        // The pair stream is salted symmetrically.
        CHECK(pair_overlap_monte_carlo(grocer1, mixed, 100000, 9) == mc);
        CHECK(pair_overlap_monte_carlo(grocer1, grocer2, 1000, 1) == 1.0);
        CHECK(pair_overlap_monte_carlo(grocer1, diner, 1000, 1) == 0.0);
        CHECK_THROWS_WITH(pair_overlap_monte_carlo(grocer1, diner, 0, 1),
                          Catch::Matchers::ContainsSubstring("positive sample count"));
    }
}

TEST_CASE("group overlap averages pairs within and across groups") {
    const Dataset ds = dataset_of({
        mcc_sequence("grocer1", {"5411", "5411", "5411", "5411"}),
        mcc_sequence("grocer2", {"5411", "5411"}),
        mcc_sequence("mixed", {"5411", "5411", "5812", "5812"}),
        mcc_sequence("diner", {"5812", "5812", "5812"}),
    });

    const OverlapResult result =
        overlap_probability(ds, {"grocer1", "grocer2", "mixed"}, {"diner"});
    CHECK(result.n_pairs_within == 3);
    // pairs: (g1,g2)=1, (g1,mixed)=.5, (g2,mixed)=.5
    CHECK(result.within_group_prob == Catch::Approx(2.0 / 3.0));
    CHECK(result.n_pairs_cross == 3);
    // (g1,diner)=0, (g2,diner)=0, (mixed,diner)=.5
    CHECK(result.cross_group_prob == Catch::Approx(1.0 / 6.0));

    SECTION("accounts in both groups are never paired with themselves") {
        const OverlapResult shared =
            overlap_probability(ds, {"grocer1", "mixed"}, {"mixed", "diner"});
        CHECK(shared.n_pairs_cross == 3);  // (g1,mixed) (g1,diner) (mixed,diner)
        CHECK(shared.cross_group_prob == Catch::Approx(1.0 / 3.0));
    }

    SECTION("a singleton group has no within pairs") {
        const OverlapResult solo = overlap_probability(ds, {"grocer1"}, {"diner"});
        CHECK(solo.n_pairs_within == 0);
        CHECK(solo.within_group_prob == 0.0);
        CHECK(solo.n_pairs_cross == 1);
    }

    SECTION("monte carlo group estimates track the closed form") {
        OverlapOptions options;
        options.method = OverlapMethod::monte_carlo;
        options.samples = 50000;
        options.seed = 4;
        const OverlapResult mc =
            overlap_probability(ds, {"grocer1", "grocer2", "mixed"}, {"diner"}, options);
        CHECK(mc.within_group_prob == Catch::Approx(result.within_group_prob).margin(0.01));
        CHECK(mc.cross_group_prob == Catch::Approx(result.cross_group_prob).margin(0.01));
    }

    SECTION("json export") {
        const auto j = to_json(result);
        CHECK(j["within_group_prob"].get<double>() == result.within_group_prob);
        CHECK(j["n_pairs_cross"] == 3);
    }

    SECTION("defective groups are rejected") {
        CHECK_THROWS_WITH(overlap_probability(ds, {}, {"diner"}),
                          Catch::Matchers::ContainsSubstring("non-empty groups"));
        CHECK_THROWS_WITH(overlap_probability(ds, {"grocer1"}, {}),
                          Catch::Matchers::ContainsSubstring("non-empty groups"));
        CHECK_THROWS_WITH(overlap_probability(ds, {"grocer1"}, {"ghost"}),
                          Catch::Matchers::ContainsSubstring("unknown account"));
    }
}

TEST_CASE("top-merchant profile shares out each account's favorite store") {
    const Dataset ds = dataset_of({
        // tie between a and b; "a" wins lexicographically, category 5411
        timed_sequence("t1", {{2010, 1, 1}, {2010, 1, 14}},
                       {{0, 9, "b", "5812"},
                        {1, 9, "a", "5411"},
                        {2, 9, "b", "5812"},
                        {3, 9, "a", "5411"}}),
        timed_sequence("t2", {{2010, 1, 1}, {2010, 1, 14}},
                       {{0, 9, "z", "5411"},
                        {1, 9, "z", "5411"},
                        {2, 9, "w", "5999"},
                        {3, 9, "z", "5411"}}),
        timed_sequence("t3", {{2010, 1, 1}, {2010, 1, 14}}, {{0, 9, "q", "5999"}}),
    });

    const std::vector<TopMccShare> profile = top_merchant_profile(ds, {"t1", "t2", "t3"});
    REQUIRE(profile.size() == 2);
    CHECK(profile[0].mcc == "5411");
    CHECK(profile[0].share == Catch::Approx(2.0 / 3.0));
    CHECK(profile[0].n_accounts == 2);
    CHECK(profile[1].mcc == "5999");
    CHECK(profile[1].n_accounts == 1);

    SECTION("equal shares order by category") {
        const std::vector<TopMccShare> even = top_merchant_profile(ds, {"t2", "t3"});
        REQUIRE(even.size() == 2);
        CHECK(even[0].mcc == "5411");
        CHECK(even[1].mcc == "5999");
        CHECK(even[0].share == Catch::Approx(0.5));
    }

    SECTION("defective inputs are rejected") {
        CHECK_THROWS_AS(top_merchant_profile(ds, {}), Error);
        CHECK_THROWS_WITH(top_merchant_profile(ds, {"ghost"}),
                          Catch::Matchers::ContainsSubstring("unknown account"));
    }
}

TEST_CASE("average ranks split ties evenly") {
    const std::vector<double> values = {10.0, 20.0, 20.0, 30.0};
    CHECK(average_ranks(values) == std::vector<double>{1.0, 2.5, 2.5, 4.0});
    CHECK(average_ranks(std::vector<double>{5.0, 5.0, 5.0}) ==
          std::vector<double>{2.0, 2.0, 2.0});
}

TEST_CASE("spearman correlation follows rank agreement") {
    const std::vector<double> up = {1.0, 2.0, 3.0, 4.0};
    const std::vector<double> scaled = {10.0, 100.0, 1000.0, 10000.0};
    const std::vector<double> down = {9.0, 7.0, 5.0, 3.0};
    CHECK(spearman(up, scaled) == Catch::Approx(1.0));
    CHECK(spearman(up, down) == Catch::Approx(-1.0));

    // One flat side: equal rank vectors mean perfect agreement, anything
    // else means none.
    const std::vector<double> flat = {2.0, 2.0, 2.0, 2.0};
    CHECK(spearman(flat, flat) == 1.0);
    CHECK(spearman(flat, up) == 0.0);

    const std::vector<double> tied_a = {1.0, 1.0, 2.0};
    const std::vector<double> tied_b = {5.0, 5.0, 9.0};
    CHECK(spearman(tied_a, tied_b) == 1.0);

    CHECK_THROWS_AS(spearman(up, tied_a), Error);
    CHECK_THROWS_AS(spearman(std::vector<double>{1.0}, std::vector<double>{2.0}), Error);
}

namespace {

EventSequence styled_sequence(const std::string& account, int n_events, const std::string& style) {
    std::vector<Stamp> stamps;
    for (int i = 0; i < n_events; ++i) {
        std::string merchant;
        if (style == "calm") {
            merchant = "home";
        } else if (style == "mix") {
            merchant = i % 2 ? "left" : "right";
        } else {
            merchant = "v" + std::to_string(i);
        }
        stamps.push_back({i % 14, 8 + i / 14, merchant, "5411"});
    }
    return timed_sequence(account, {{2010, 1, 1}, {2010, 1, 14}}, stamps);
}

}  // namespace

TEST_CASE("window stability correlates entropy ranks across periods") {
    const Dataset first = dataset_of({
        styled_sequence("calm", 12, "calm"),
        styled_sequence("varied", 12, "varied"),
        styled_sequence("mix", 12, "mix"),
        styled_sequence("only_first", 8, "mix"),
        styled_sequence("shorty", 3, "calm"),
    });
    const Dataset second = dataset_of({
        styled_sequence("calm", 14, "calm"),
        styled_sequence("varied", 14, "varied"),
        styled_sequence("mix", 14, "mix"),
        styled_sequence("only_second", 8, "mix"),
        styled_sequence("shorty", 1, "calm"),
    });

    const StabilityResult result = window_stability(first, second);
    REQUIRE(result.per_account.size() == 3);
    CHECK(result.per_account[0].account_id == "calm");
    CHECK(result.per_account[1].account_id == "mix");
    CHECK(result.per_account[2].account_id == "varied");
    CHECK(result.skipped == std::vector<std::string>{"shorty"});

    // Every account keeps its style, so both rankings carry over perfectly.
    CHECK(result.s_unc_rank_corr == Catch::Approx(1.0));
    CHECK(result.s_true_rank_corr == Catch::Approx(1.0));
    CHECK(result.per_account[0].s_unc_a == 0.0);
    CHECK(result.per_account[2].s_unc_a == Catch::Approx(std::log2(12.0)));

    SECTION("threading does not change the result") {
        const StabilityResult threaded = window_stability(first, second,
                                                          LzScanner::automatic, 3);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(threaded.per_account[i].s_true_a == result.per_account[i].s_true_a);
            CHECK(threaded.per_account[i].s_true_b == result.per_account[i].s_true_b);
        }
    }

    SECTION("json export carries deltas and the skip list") {
        const auto j = to_json(result);
        CHECK(j["per_account"].size() == 3);
        CHECK(j["per_account"][0]["id"] == "calm");
        CHECK(j["per_account"][0]["s_unc_delta"].get<double>() ==
              result.per_account[0].s_unc_b - result.per_account[0].s_unc_a);
        CHECK(j["skipped"] == nlohmann::ordered_json({"shorty"}));
        CHECK(j["s_unc_rank_corr"].get<double>() == result.s_unc_rank_corr);
    }

    SECTION("disjoint datasets cannot be compared") {
        const Dataset stranger = dataset_of({styled_sequence("other", 8, "mix")});
        CHECK_THROWS_WITH(window_stability(first, stranger),
                          Catch::Matchers::ContainsSubstring("share no accounts"));
    }

    SECTION("fewer than two usable shared accounts is not a ranking") {
        const Dataset sliver = dataset_of({
            styled_sequence("calm", 10, "calm"),
            styled_sequence("shorty", 1, "calm"),
        });
        CHECK_THROWS_WITH(window_stability(first, sliver),
                          Catch::Matchers::ContainsSubstring("at least 2 shared accounts"));
    }
}
