#include <catch2/catch_amalgamated.hpp>

#include <shopseq/core.hpp>
#include <shopseq/rng.hpp>
#include <shopseq/time.hpp>

using namespace shopseq;

TEST_CASE("civil date math round-trips and matches known day numbers") {
    // Day numbers counted from 1970-01-01; checked against an independent
    // calendar implementation.
    CHECK(days_from_civil({1970, 1, 1}) == 0);
    CHECK(days_from_civil({1969, 12, 31}) == -1);
    CHECK(days_from_civil({2010, 3, 31}) == 14699);
    CHECK(days_from_civil({2000, 2, 29}) == 11016);
    CHECK(days_from_civil({2100, 3, 1}) == 47541);

    for (std::int64_t day = -1000; day <= 40000; day += 97) {
        CHECK(days_from_civil(civil_from_days(day)) == day);
    }

    CHECK(is_leap_year(2000));
    CHECK(is_leap_year(2012));
    CHECK_FALSE(is_leap_year(1900));
    CHECK_FALSE(is_leap_year(2010));
    CHECK(days_in_month(2012, 2) == 29);
    CHECK(days_in_month(2010, 2) == 28);
}

TEST_CASE("timestamps parse strictly and format back unchanged") {
    CHECK(parse_timestamp("2010-02-14T09:30:00Z") == 1266139800);
    CHECK(format_timestamp(1266139800) == "2010-02-14T09:30:00Z");
    CHECK(parse_timestamp("1970-01-01T00:00:00Z") == 0);

    CHECK_FALSE(parse_timestamp("2010-02-30T09:00:00Z"));  // no such day
    CHECK_FALSE(parse_timestamp("2010-02-14 09:30:00Z"));  // missing 'T'
    CHECK_FALSE(parse_timestamp("2010-02-14T09:30:00"));   // missing 'Z'
    CHECK_FALSE(parse_timestamp("2010-02-14T24:00:00Z"));  // hour out of range
    CHECK_FALSE(parse_timestamp(""));

    for (std::int64_t ts : {0L, 1266139800L, 4102444799L}) {
        const auto parsed = parse_timestamp(format_timestamp(ts));
        REQUIRE(parsed);
        CHECK(*parsed == ts);
    }
}

TEST_CASE("timezone offsets shift the local day") {
    CHECK(parse_timezone("UTC") == Timezone{0});
    CHECK(parse_timezone("Z") == Timezone{0});
    CHECK(parse_timezone("+02:00") == Timezone{120});
    CHECK(parse_timezone("-05:30") == Timezone{-330});
    CHECK_FALSE(parse_timezone("2:00"));
    CHECK_FALSE(parse_timezone("+2:00"));
    CHECK_FALSE(parse_timezone("+15:00"));
    CHECK(format_timezone(Timezone{-330}) == "-05:30");
    CHECK(format_timezone(Timezone{0}) == "UTC");

    // 23:30 UTC is already the next day at +02:00 but still the same day at
    // -05:30.
    const auto late = *parse_timestamp("2010-06-01T23:30:00Z");
    CHECK(civil_date_of(late) == CivilDate{2010, 6, 1});
    CHECK(civil_date_of(late, Timezone{120}) == CivilDate{2010, 6, 2});
    CHECK(civil_date_of(late, Timezone{-330}) == CivilDate{2010, 6, 1});

    // Negative epochs must floor, not truncate toward zero.
    CHECK(day_index(-1) == -1);
    CHECK(day_index(-86400) == -1);
    CHECK(day_index(-86401) == -2);
}

TEST_CASE("amounts parse as exact cents") {
    CHECK(parse_amount_cents("12.34") == 1234);
    CHECK(parse_amount_cents("12.3") == 1230);
    CHECK(parse_amount_cents("12") == 1200);
    CHECK(parse_amount_cents("0.01") == 1);
    CHECK_FALSE(parse_amount_cents("12.345"));  // sub-cent precision
    CHECK_FALSE(parse_amount_cents("-5.00"));
    CHECK_FALSE(parse_amount_cents("12."));
    CHECK_FALSE(parse_amount_cents(".5"));
    CHECK_FALSE(parse_amount_cents("1,50"));
    CHECK_FALSE(parse_amount_cents(""));

    CHECK(format_amount(1234) == "12.34");
    CHECK(format_amount(5) == "0.05");
    for (std::int64_t cents : {1L, 99L, 100L, 123456L}) {
        CHECK(parse_amount_cents(format_amount(cents)) == cents);
    }
}

TEST_CASE("transaction validation names the offending field") {
    const RawTransaction good{"acct-1", "2010-02-14T09:30:00Z", "shop-7", "5411", "12.50",
                              "outflow"};
    const auto ok = validate_transaction(good);
    REQUIRE(ok);
    CHECK(ok.value().amount_cents == 1250);
    CHECK(ok.value().direction == Direction::outflow);

    const auto check_fails = [&](auto mutate, const std::string& field) {
        RawTransaction raw = good;
        mutate(raw);
        const auto result = validate_transaction(raw);
        REQUIRE_FALSE(result);
        CHECK(result.error().field == field);
    };
    check_fails([](RawTransaction& r) { r.account_id = ""; }, "account_id");
    check_fails([](RawTransaction& r) { r.timestamp = "yesterday"; }, "timestamp");
    check_fails([](RawTransaction& r) { r.merchant_id = ""; }, "merchant_id");
    check_fails([](RawTransaction& r) { r.mcc = "54"; }, "mcc");
    check_fails([](RawTransaction& r) { r.mcc = "54a1"; }, "mcc");
    check_fails([](RawTransaction& r) { r.amount = "0.00"; }, "amount");
    check_fails([](RawTransaction& r) { r.amount = "lots"; }, "amount");
    check_fails([](RawTransaction& r) { r.direction = "sideways"; }, "direction");

    CHECK(is_valid_mcc("0000"));
    CHECK(is_valid_mcc("5411"));
    CHECK_FALSE(is_valid_mcc("541"));
    CHECK_FALSE(is_valid_mcc("54111"));
}

namespace {

Transaction tx(const char* account, const char* when, const char* merchant, const char* mcc,
               Direction dir = Direction::outflow) {
    return Transaction{account, *parse_timestamp(when), merchant, mcc, 100, dir};
}

}  // namespace

TEST_CASE("build_sequence keeps ordered in-window outflows") {
    const DateWindow window{{2010, 1, 1}, {2010, 1, 31}};
    const std::vector<Transaction> txs = {
        tx("a", "2010-01-05T10:00:00Z", "late", "5411"),
        tx("a", "2010-01-03T10:00:00Z", "early", "5411"),
        tx("a", "2010-01-04T10:00:00Z", "salary", "0000", Direction::inflow),
        tx("a", "2010-02-01T10:00:00Z", "outside", "5411"),
        tx("a", "2009-12-31T23:59:59Z", "before", "5411"),
    };
    const EventSequence seq = build_sequence(txs, window);
    REQUIRE(seq.size() == 2);
    CHECK(seq.events[0].merchant_id == "early");
    CHECK(seq.events[1].merchant_id == "late");
    CHECK(seq.account_id == "a");
    CHECK(seq.window == window);

    SECTION("equal timestamps keep input order") {
        const std::vector<Transaction> same_time = {
            tx("a", "2010-01-03T10:00:00Z", "first", "5411"),
            tx("a", "2010-01-03T10:00:00Z", "second", "5411"),
            tx("a", "2010-01-02T10:00:00Z", "zeroth", "5411"),
        };
        const EventSequence ordered = build_sequence(same_time, window);
        REQUIRE(ordered.size() == 3);
        CHECK(ordered.events[0].merchant_id == "zeroth");
        CHECK(ordered.events[1].merchant_id == "first");
        CHECK(ordered.events[2].merchant_id == "second");
    }

    SECTION("mixed account ids are rejected") {
        const std::vector<Transaction> mixed = {tx("a", "2010-01-03T10:00:00Z", "m", "5411"),
                                                tx("b", "2010-01-04T10:00:00Z", "m", "5411")};
        CHECK_THROWS_AS(build_sequence(mixed, window), Error);
    }

    SECTION("timezone moves the window edge") {
        // 23:30 UTC on Jan 31 falls on Feb 1 at +02:00, so it drops out.
        const std::vector<Transaction> edge = {tx("a", "2010-01-31T23:30:00Z", "m", "5411")};
        CHECK(build_sequence(edge, window).size() == 1);
        BuildOptions options;
        options.timezone = *parse_timezone("+02:00");
        CHECK(build_sequence(edge, window, options).empty());
    }

    SECTION("dedup keeps the first same-day visit per merchant") {
        const std::vector<Transaction> repeats = {
            tx("a", "2010-01-03T08:00:00Z", "m", "5411"),
            tx("a", "2010-01-03T18:00:00Z", "m", "5411"),
            tx("a", "2010-01-03T12:00:00Z", "other", "5411"),
            tx("a", "2010-01-04T08:00:00Z", "m", "5411"),
        };
        BuildOptions options;
        options.dedup_same_day = true;
        const EventSequence deduped = build_sequence(repeats, window, options);
        REQUIRE(deduped.size() == 3);
        CHECK(deduped.events[0].timestamp == *parse_timestamp("2010-01-03T08:00:00Z"));
    }

    SECTION("excluded mccs are dropped") {
        BuildOptions options;
        options.exclude_mccs = {"5411"};
        CHECK(build_sequence(txs, window, options).empty());
    }
}

TEST_CASE("visit and mcc distributions count per symbol") {
    const DateWindow window{{2010, 1, 1}, {2010, 1, 31}};
    const std::vector<Transaction> txs = {
        tx("a", "2010-01-01T10:00:00Z", "x", "5411"),
        tx("a", "2010-01-02T10:00:00Z", "y", "5411"),
        tx("a", "2010-01-03T10:00:00Z", "x", "5912"),
    };
    const EventSequence seq = build_sequence(txs, window);
    CHECK(seq.n_merchants() == 2);

    const VisitDistribution visits = visit_distribution(seq);
    CHECK(visits.total == 3);
    CHECK(visits.counts.at("x") == 2);
    CHECK(visits.counts.at("y") == 1);
    const std::vector<double> p = visits.probabilities();
    CHECK(p == std::vector<double>{2.0 / 3.0, 1.0 / 3.0});

    const VisitDistribution mccs = mcc_distribution(seq);
    CHECK(mccs.counts.at("5411") == 2);
    CHECK(mccs.counts.at("5912") == 1);
}

TEST_CASE("cohort bounds are strict on both ends") {
    CohortSpec poor{"poor", std::nullopt, 16000.0};
    CohortSpec wealthy{"wealthy", 80000.0, std::nullopt};
    poor.validate();
    wealthy.validate();

    CHECK(poor.contains(0.0));  // no lower bound, so zero income is in band
    CHECK(poor.contains(15999.99));
    CHECK_FALSE(poor.contains(16000.0));  // threshold goes to the residual
    CHECK_FALSE(wealthy.contains(80000.0));
    CHECK(wealthy.contains(80000.01));
    CHECK_FALSE(poor.contains(50000.0));
    CHECK_FALSE(wealthy.contains(50000.0));

    CohortSpec empty_name{"", std::nullopt, 1.0};
    CHECK_THROWS_AS(empty_name.validate(), Error);
    CohortSpec inverted{"bad", 10.0, 5.0};
    CHECK_THROWS_AS(inverted.validate(), Error);

    // Bounded band: both edges excluded.
    CohortSpec band{"mid", 100.0, 200.0};
    CHECK_FALSE(band.contains(100.0));
    CHECK(band.contains(150.0));
    CHECK_FALSE(band.contains(200.0));
}

TEST_CASE("splitmix64 matches the reference stream") {
    SplitMix64 rng(0);
    CHECK(rng.next() == 0xe220a8397b1dcdafULL);
    CHECK(rng.next() == 0x6e789e6aa1b965f4ULL);
    CHECK(rng.next() == 0x06c45d188009454fULL);
    CHECK(SplitMix64(42).next() == 0xbdd732262feb6e95ULL);

    SECTION("bounded draws stay in range and hit every value") {
        SplitMix64 r(7);
        std::set<std::uint64_t> seen;
        for (int i = 0; i < 1000; ++i) {
            const std::uint64_t v = r.bounded(6);
            CHECK(v < 6);
            seen.insert(v);
        }
        CHECK(seen.size() == 6);
    }

    SECTION("next_double is in [0, 1)") {
        SplitMix64 r(9);
        for (int i = 0; i < 1000; ++i) {
            const double u = r.next_double();
            CHECK(u >= 0.0);
            CHECK(u < 1.0);
        }
        SplitMix64 r2(9);
        for (int i = 0; i < 1000; ++i) {
            CHECK(r2.next_double_open() > 0.0);
        }
    }
}

TEST_CASE("fnv1a64 matches published vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("habit-00001") == 0x123571c1909fbee3ULL);
    CHECK(fnv1a64("abc") != fnv1a64("acb"));
}

TEST_CASE("derived rng streams depend on run and account") {
    CHECK(run_stream(5, 0).next() == SplitMix64(5).next());
    CHECK(run_stream(5, 1).next() != run_stream(5, 2).next());
    CHECK(account_stream(5, 1, "a").next() != account_stream(5, 1, "b").next());
    CHECK(account_stream(5, 1, "a").next() == account_stream(5, 1, "a").next());
    CHECK(account_stream(5, 1, "a").next() == SplitMix64((5ULL ^ 1ULL) ^ fnv1a64("a")).next());
}
