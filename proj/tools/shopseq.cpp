// shopseq — command-line front end for the sequence-predictability toolkit.
//
// Subcommands: generate, ingest-check, analyze, simulate, overlap, stability.
// Global flags (--seed, --threads, --timezone, --strict) may appear before or
// after the subcommand, and every flag can also be supplied through a flat
// key=value --config file; an explicit command-line flag always wins over the
// config file, which wins over the built-in default.
//
// Exit codes are a stable contract: 0 success, 1 runtime failure (I/O or
// compute), 2 usage or validation error (bad flags, malformed spec, strict
// parse failure, unknown config key).

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <shopseq/core.hpp>
#include <shopseq/entropy.hpp>
#include <shopseq/experiments.hpp>
#include <shopseq/ingest.hpp>
#include <shopseq/rng.hpp>
#include <shopseq/structure.hpp>
#include <shopseq/synthgen.hpp>
#include <shopseq/time.hpp>

namespace {

using nlohmann::ordered_json;

// Thrown for anything the user got wrong (flags, config, malformed inputs in
// strict mode); main() maps it to exit code 2.  Everything else that escapes
// is a runtime failure and exits 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

unsigned default_threads() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : hw;
}

// Every tunable the commands share.  Command-line parsing and the config file
// both write here; path arguments stay in per-command locals because they are
// positional or command-specific and never come from the config file.
struct Settings {
    std::uint64_t seed = 0;
    unsigned threads = default_threads();
    std::string timezone;  // empty = UTC
    bool strict = false;
    std::string config_path;

    std::string format = "auto";        // csv | jsonl | auto (by extension)
    std::string scanner = "auto";       // naive | indexed | auto
    std::string measures;               // analyze: comma-separated list
    std::string level = "mcc";          // analyze graph: merchant | mcc
    std::string quintile = "all";       // analyze graph: top | bottom | all
    std::int64_t rank_min = 0;          // zipf fit range; 0 = not provided
    std::int64_t rank_max = 0;
    double bin_width = 0.1;             // histogram bin width (bits)
    std::int64_t runs = 10000;          // simulate
    std::int64_t sample = 2000;         // simulate
    std::string mode;                   // simulate: shuffle_day | sort_week
    std::string method = "closed_form"; // overlap: closed_form | monte_carlo
    std::int64_t samples = 1000000;     // overlap monte_carlo, per pair
};

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t");
    return s.substr(begin, end - begin + 1);
}

std::int64_t config_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': expected an integer, got '" + value + "'");
    }
}

std::uint64_t config_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size() || (!value.empty() && value[0] == '-'))
            throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': expected a non-negative integer, got '" +
                         value + "'");
    }
}

double config_float(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': expected a number, got '" + value + "'");
    }
}

bool config_bool(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true" || value == "yes" || value == "on") return true;
    if (value == "0" || value == "false" || value == "no" || value == "off") return false;
    throw UsageError("config key '" + key + "': expected true or false, got '" + value + "'");
}

// Maps config keys to the command-line options that shadow them.  A key may
// be bound to options on several subcommands (only one parses per run); the
// config value is applied only when none of them was given on the command
// line.
class ConfigBook {
public:
    void bind(const std::string& key, CLI::Option* option,
              std::function<void(const std::string&)> setter) {
        Entry& entry = entries_[key];
        entry.options.push_back(option);
        entry.set = std::move(setter);
    }

    // Applies the file in line order (a repeated key: last one wins) and
    // returns the keys that actually took effect.
    std::set<std::string> apply_file(const std::string& path) const {
        std::ifstream in(path);
        if (!in) throw UsageError("cannot open config file '" + path + "'");
        std::set<std::string> applied;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw UsageError("config line " + std::to_string(lineno) + ": expected key=value");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw UsageError("config line " + std::to_string(lineno) + ": empty key");
            const auto it = entries_.find(key);
            if (it == entries_.end()) throw UsageError("config: unknown key '" + key + "'");
            bool overridden = false;
            for (const CLI::Option* option : it->second.options)
                if (option->count() > 0) overridden = true;
            if (overridden) continue;
            it->second.set(value);
            applied.insert(key);
        }
        return applied;
    }

private:
    struct Entry {
        std::vector<CLI::Option*> options;
        std::function<void(const std::string&)> set;
    };
    std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Small resolvers
// ---------------------------------------------------------------------------

shopseq::Timezone resolve_timezone(const std::string& text) {
    if (text.empty()) return shopseq::Timezone{};
    const auto tz = shopseq::parse_timezone(text);
    if (!tz) throw UsageError("invalid timezone '" + text + "' (expected UTC or +HH:MM/-HH:MM)");
    return *tz;
}

shopseq::FileFormat resolve_format(const std::string& format, const std::string& path) {
    if (format == "csv") return shopseq::FileFormat::csv;
    if (format == "jsonl") return shopseq::FileFormat::jsonl;
    if (format == "auto") {
        const auto ext = std::filesystem::path(path).extension().string();
        return (ext == ".jsonl" || ext == ".ndjson") ? shopseq::FileFormat::jsonl
                                                     : shopseq::FileFormat::csv;
    }
    throw UsageError("unknown format '" + format + "' (valid: csv, jsonl, auto)");
}

shopseq::LzScanner resolve_scanner(const std::string& text) {
    if (text == "naive") return shopseq::LzScanner::naive;
    if (text == "indexed") return shopseq::LzScanner::indexed;
    if (text == "auto") return shopseq::LzScanner::automatic;
    throw UsageError("unknown scanner '" + text + "' (valid: naive, indexed, auto)");
}

shopseq::SymbolLevel resolve_level(const std::string& text) {
    if (text == "merchant") return shopseq::SymbolLevel::merchant;
    if (text == "mcc") return shopseq::SymbolLevel::mcc;
    throw UsageError("unknown level '" + text + "' (valid: merchant, mcc)");
}

shopseq::SimulationMode resolve_mode(const std::string& text) {
    if (text == "shuffle_day") return shopseq::SimulationMode::shuffle_day;
    if (text == "sort_week") return shopseq::SimulationMode::sort_week;
    throw UsageError("unknown mode '" + text + "' (valid: shuffle_day, sort_week)");
}

shopseq::OverlapMethod resolve_method(const std::string& text) {
    if (text == "closed_form") return shopseq::OverlapMethod::closed_form;
    if (text == "monte_carlo") return shopseq::OverlapMethod::monte_carlo;
    throw UsageError("unknown method '" + text + "' (valid: closed_form, monte_carlo)");
}

// "name:min:max" with either bound optional, e.g. "poor::16000" or
// "wealthy:80000:".  Bounds are strict ("less than" / "greater than"), so a
// band starting at zero is written with an empty minimum.
shopseq::CohortSpec resolve_cohort(const std::string& text) {
    const auto first = text.find(':');
    const auto second = first == std::string::npos ? std::string::npos : text.find(':', first + 1);
    if (second == std::string::npos || text.find(':', second + 1) != std::string::npos)
        throw UsageError("cohort '" + text + "': expected name:min:max (bounds may be empty)");
    shopseq::CohortSpec spec;
    spec.name = trim(text.substr(0, first));
    const std::string lo = trim(text.substr(first + 1, second - first - 1));
    const std::string hi = trim(text.substr(second + 1));
    if (!lo.empty()) spec.annual_inflow_min = config_float("cohort min", lo);
    if (!hi.empty()) spec.annual_inflow_max = config_float("cohort max", hi);
    try {
        spec.validate();
    } catch (const shopseq::Error& e) {
        throw UsageError(e.what());
    }
    return spec;
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

std::filesystem::path ensure_out_dir(const std::string& out) {
    std::filesystem::path dir(out);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw shopseq::Error("cannot create output directory '" + out + "': " + ec.message());
    return dir;
}

// Writes one output file and records its name for the manifest.
template <typename Writer>
void emit(const std::filesystem::path& dir, const std::string& name, std::vector<std::string>& outputs,
          Writer&& writer) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw shopseq::Error("cannot write '" + path.string() + "'");
    writer(out);
    out.flush();
    if (!out) throw shopseq::Error("failed while writing '" + path.string() + "'");
    outputs.push_back(name);
}

void emit_json(const std::filesystem::path& dir, const std::string& name,
               std::vector<std::string>& outputs, const ordered_json& j) {
    emit(dir, name, outputs, [&j](std::ostream& out) { out << j.dump(2) << '\n'; });
}

std::string file_digest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw shopseq::Error("cannot open '" + path + "' for digesting");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(shopseq::fnv1a64(buffer.str())));
    return hex;
}

// The manifest makes a run re-creatable: tool version, the exact argv, the
// fully resolved settings (after config-file merging), and a digest of every
// input.  Deliberately no timestamps or host details, so reruns are
// byte-identical.
ordered_json manifest_base(const std::string& command, const std::vector<std::string>& argv) {
    ordered_json m;
    m["version"] = shopseq::kVersion;
    m["command"] = command;
    m["argv"] = argv;
    return m;
}

void add_manifest_input(ordered_json& manifest, const std::string& path) {
    manifest["inputs"].push_back({{"path", path}, {"fnv1a64", file_digest(path)}});
}

void write_manifest(const std::filesystem::path& dir, ordered_json manifest,
                    const std::vector<std::string>& outputs) {
    manifest["outputs"] = outputs;
    std::vector<std::string> unused;
    emit_json(dir, "manifest.json", unused, manifest);
}

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

struct LoadedInput {
    shopseq::ParseResult parsed;
    shopseq::Dataset dataset;
    std::string format;  // resolved: "csv" or "jsonl"
};

LoadedInput load_input(const std::string& path, const Settings& settings) {
    const shopseq::FileFormat format = resolve_format(settings.format, path);
    const shopseq::ParseMode mode =
        settings.strict ? shopseq::ParseMode::strict : shopseq::ParseMode::lenient;
    LoadedInput loaded;
    try {
        loaded.parsed = shopseq::parse_transactions_file(path, format, mode);
    } catch (const shopseq::Error& e) {
        // Unopenable path or a malformed row under --strict: the user's input
        // is at fault either way.
        throw UsageError(std::string(e.what()) + " ('" + path + "')");
    }
    if (loaded.parsed.transactions.empty())
        throw UsageError("no parseable transactions in '" + path + "'");
    shopseq::BuildOptions options;
    options.timezone = resolve_timezone(settings.timezone);
    const shopseq::DateWindow window =
        shopseq::infer_window(loaded.parsed.transactions, options.timezone);
    loaded.dataset = shopseq::build_dataset(loaded.parsed.transactions, window, options);
    loaded.format = format == shopseq::FileFormat::csv ? "csv" : "jsonl";
    return loaded;
}

std::set<std::string> accounts_with_events(const shopseq::Dataset& dataset) {
    std::set<std::string> accounts;
    for (const auto& [id, seq] : dataset.sequences)
        if (!seq.empty()) accounts.insert(id);
    return accounts;
}

void warn_rejected(const shopseq::ParseResult& parsed, const std::string& report_name) {
    if (parsed.errors.empty()) return;
    std::cerr << "warning: " << parsed.errors.size() << " malformed rows skipped (see "
              << report_name << ")\n";
}

ordered_json global_settings(const Settings& settings) {
    ordered_json j;
    j["seed"] = settings.seed;
    j["threads"] = settings.threads;
    j["timezone"] = settings.timezone.empty() ? "UTC" : settings.timezone;
    j["strict"] = settings.strict;
    return j;
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

int cmd_generate(const Settings& settings, bool seed_overridden, const std::string& spec_path,
                 const std::string& out_path) {
    shopseq::PopulationSpec spec;
    try {
        spec = shopseq::load_population_spec_file(spec_path);
    } catch (const shopseq::Error& e) {
        throw UsageError(e.what());
    }
    if (seed_overridden) spec.seed = settings.seed;

    const std::vector<shopseq::Transaction> transactions = shopseq::generate_transactions(spec);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw shopseq::Error("cannot write '" + out_path + "'");
    shopseq::write_transactions_csv(out, transactions);
    out.flush();
    if (!out) throw shopseq::Error("failed while writing '" + out_path + "'");

    std::int64_t agents = 0;
    for (const auto& cohort : spec.cohorts) agents += cohort.count;
    std::cout << "wrote " << transactions.size() << " transactions for " << agents
              << " accounts (window " << shopseq::format_date(spec.window.start) << ".."
              << shopseq::format_date(spec.window.end) << ", seed " << spec.seed << ") to "
              << out_path << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// ingest-check
// ---------------------------------------------------------------------------

int cmd_ingest_check(const Settings& settings, const std::string& input,
                     const std::string& report_path) {
    const shopseq::FileFormat format = resolve_format(settings.format, input);
    const shopseq::ParseMode mode =
        settings.strict ? shopseq::ParseMode::strict : shopseq::ParseMode::lenient;
    shopseq::ParseResult parsed;
    try {
        parsed = shopseq::parse_transactions_file(input, format, mode);
    } catch (const shopseq::Error& e) {
        throw UsageError(std::string(e.what()) + " ('" + input + "')");
    }

    std::set<std::string> accounts;
    for (const auto& t : parsed.transactions) accounts.insert(t.account_id);
    std::ostringstream shape;
    shape << parsed.transactions.size() << " rows, " << accounts.size() << " accounts";
    if (!parsed.transactions.empty()) {
        const shopseq::DateWindow window =
            shopseq::infer_window(parsed.transactions, resolve_timezone(settings.timezone));
        shape << ", window " << shopseq::format_date(window.start) << ".."
              << shopseq::format_date(window.end);
    }

    if (mode == shopseq::ParseMode::strict) {
        std::cout << "ok: " << shape.str() << "\n";
        return 0;
    }
    if (!report_path.empty()) {
        std::ofstream out(report_path, std::ios::binary);
        if (!out) throw shopseq::Error("cannot write '" + report_path + "'");
        shopseq::write_error_report(out, parsed.errors);
        out.flush();
        if (!out) throw shopseq::Error("failed while writing '" + report_path + "'");
    }
    std::cout << shape.str() << "; " << parsed.errors.size() << " malformed rows";
    if (!report_path.empty()) std::cout << " (report: " << report_path << ")";
    std::cout << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

std::vector<std::string> resolve_measures(const std::string& text) {
    static const std::set<std::string> valid = {"entropy", "zipf", "graph", "bundle", "cohorts"};
    std::vector<std::string> measures;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        if (!valid.count(item))
            throw UsageError("unknown measure '" + item +
                             "' (valid: entropy, zipf, graph, bundle, cohorts)");
        if (std::find(measures.begin(), measures.end(), item) == measures.end())
            measures.push_back(item);
    }
    if (measures.empty())
        throw UsageError("--measures needs at least one of: entropy, zipf, graph, bundle, cohorts");
    return measures;
}

struct AnalyzeArgs {
    std::string input;
    std::string out;
    std::vector<std::string> cohorts;  // raw name:min:max strings
};

int cmd_analyze(const Settings& settings, const AnalyzeArgs& args,
                const std::vector<std::string>& argv) {
    const std::vector<std::string> measures = resolve_measures(settings.measures);
    const shopseq::LzScanner scanner = resolve_scanner(settings.scanner);
    const shopseq::SymbolLevel level = resolve_level(settings.level);
    if (settings.quintile != "all" && settings.quintile != "top" && settings.quintile != "bottom")
        throw UsageError("unknown quintile '" + settings.quintile + "' (valid: top, bottom, all)");
    if (settings.bin_width <= 0.0) throw UsageError("--bin-width must be positive");

    const bool wants_zipf = std::find(measures.begin(), measures.end(), "zipf") != measures.end();
    if (wants_zipf) {
        if (settings.rank_min == 0 || settings.rank_max == 0)
            throw UsageError(
                "the zipf measure requires --rank-min and --rank-max; the fitted rank range is "
                "never defaulted");
        if (settings.rank_min < 1 || settings.rank_max < settings.rank_min)
            throw UsageError("invalid rank range [" + std::to_string(settings.rank_min) + ", " +
                             std::to_string(settings.rank_max) + "]");
    }

    std::vector<shopseq::CohortSpec> cohort_specs;
    if (args.cohorts.empty()) {
        // Paper-style income bands: "poor" is everything below 16k (no lower
        // bound, so zero-income accounts land here), "wealthy" above 80k.
        cohort_specs.push_back(shopseq::CohortSpec{"poor", std::nullopt, 16000.0});
        cohort_specs.push_back(shopseq::CohortSpec{"wealthy", 80000.0, std::nullopt});
    } else {
        for (const std::string& raw : args.cohorts) cohort_specs.push_back(resolve_cohort(raw));
    }

    LoadedInput loaded = load_input(args.input, settings);
    const std::filesystem::path dir = ensure_out_dir(args.out);
    std::vector<std::string> outputs;
    if (!loaded.parsed.errors.empty()) {
        emit(dir, "error_report.jsonl", outputs,
             [&](std::ostream& out) { shopseq::write_error_report(out, loaded.parsed.errors); });
        warn_rejected(loaded.parsed, "error_report.jsonl");
    }

    std::set<std::string> everyone;
    for (const auto& [id, seq] : loaded.dataset.sequences) everyone.insert(id);
    const std::set<std::string> active = accounts_with_events(loaded.dataset);
    if (active.empty()) throw UsageError("input has no purchase events");

    for (const std::string& measure : measures) {
        if (measure == "entropy") {
            shopseq::EntropyDistributionOptions options;
            options.bin_width = settings.bin_width;
            options.scanner = scanner;
            options.threads = settings.threads;
            const shopseq::EntropyDistribution dist =
                shopseq::entropy_distribution(loaded.dataset, everyone, options);
            ordered_json reports = ordered_json::array();
            for (const auto& report : dist.reports) reports.push_back(shopseq::to_json(report));
            emit_json(dir, "entropy_reports.json", outputs, reports);
            emit(dir, "entropy_histograms.csv", outputs, [&](std::ostream& out) {
                shopseq::write_histograms_csv(out, dist.s_rand, dist.s_unc, dist.s_true);
            });
            emit_json(dir, "entropy_skipped.json", outputs, ordered_json(dist.skipped));
        } else if (measure == "zipf") {
            const shopseq::RankRange range{settings.rank_min, settings.rank_max};
            shopseq::ZipfFit fit;
            try {
                fit = shopseq::fit_zipf(loaded.dataset, active, range, settings.seed);
            } catch (const shopseq::Error& e) {
                throw UsageError(e.what());
            }
            const shopseq::RankCurve curve =
                shopseq::population_rank_curve(loaded.dataset, active);
            emit(dir, "rank_curve.csv", outputs,
                 [&](std::ostream& out) { shopseq::write_rank_curve_csv(out, curve); });
            emit_json(dir, "zipf_fit.json", outputs, shopseq::to_json(fit));
        } else if (measure == "graph") {
            std::set<std::string> chosen = active;
            if (settings.quintile != "all") {
                if (active.size() < 25)
                    throw UsageError("--quintile needs at least 25 accounts with events, got " +
                                     std::to_string(active.size()));
                chosen = shopseq::predictable_quintile(loaded.dataset, active,
                                                       settings.quintile == "top"
                                                           ? shopseq::Quintile::top
                                                           : shopseq::Quintile::bottom);
            }
            const shopseq::TransitionGraph graph =
                shopseq::population_graph(loaded.dataset, chosen, level);
            emit(dir, "graph.dot", outputs,
                 [&](std::ostream& out) { shopseq::write_graph_dot(out, graph); });
            emit_json(dir, "graph.json", outputs, shopseq::to_json(graph));
        } else if (measure == "bundle") {
            emit(dir, "bundling.csv", outputs, [&](std::ostream& out) {
                out << "account_id,variance,mean_daily,n_days\n";
                char buffer[80];
                for (const std::string& id : active) {
                    const shopseq::BundlingScore score = shopseq::bundling_score(
                        loaded.dataset.sequences.at(id), loaded.dataset.timezone);
                    std::snprintf(buffer, sizeof(buffer), ",%.9f,%.9f,", score.variance,
                                  score.mean_daily);
                    out << id << buffer << score.n_days << '\n';
                }
            });
        } else {  // cohorts
            std::map<std::string, std::set<std::string>> assignment;
            try {
                assignment = shopseq::segment_cohorts(loaded.dataset, cohort_specs);
            } catch (const shopseq::Error& e) {
                throw UsageError(e.what());
            }
            emit(dir, "cohort_assignments.csv", outputs, [&](std::ostream& out) {
                out << "cohort,account_id\n";
                for (const auto& [name, ids] : assignment)
                    for (const std::string& id : ids) out << name << ',' << id << '\n';
            });
            std::map<std::string, std::set<std::string>> usable;
            for (const auto& [name, ids] : assignment) {
                std::set<std::string> kept;
                for (const std::string& id : ids)
                    if (active.count(id)) kept.insert(id);
                if (kept.empty()) {
                    std::cerr << "note: cohort '" << name
                              << "' has no accounts with events; skipped in summaries\n";
                    continue;
                }
                usable[name] = std::move(kept);
            }
            if (usable.empty()) throw UsageError("no cohort has any accounts with events");
            const std::vector<shopseq::CohortStats> summaries =
                shopseq::cohort_summary(loaded.dataset, usable);
            for (const std::string& stat : {std::string("store_count"), std::string("s_rand"),
                                            std::string("s_unc"), std::string("entropy_gap"),
                                            std::string("visit_variance"), std::string("bundling")})
                emit(dir, "cohort_" + stat + ".csv", outputs, [&](std::ostream& out) {
                    shopseq::write_cohort_csv(out, summaries, stat);
                });
        }
    }

    ordered_json manifest = manifest_base("analyze", argv);
    ordered_json resolved = global_settings(settings);
    resolved["input"] = args.input;
    resolved["format"] = loaded.format;
    resolved["measures"] = measures;
    resolved["scanner"] = settings.scanner;
    resolved["bin_width"] = settings.bin_width;
    resolved["level"] = settings.level;
    resolved["quintile"] = settings.quintile;
    if (wants_zipf) resolved["rank_range"] = {settings.rank_min, settings.rank_max};
    ordered_json cohort_json = ordered_json::array();
    for (const auto& spec : cohort_specs) {
        ordered_json c;
        c["name"] = spec.name;
        c["annual_inflow_min"] =
            spec.annual_inflow_min ? ordered_json(*spec.annual_inflow_min) : ordered_json(nullptr);
        c["annual_inflow_max"] =
            spec.annual_inflow_max ? ordered_json(*spec.annual_inflow_max) : ordered_json(nullptr);
        cohort_json.push_back(std::move(c));
    }
    resolved["cohorts"] = std::move(cohort_json);
    manifest["settings"] = std::move(resolved);
    add_manifest_input(manifest, args.input);
    write_manifest(dir, std::move(manifest), outputs);

    std::cout << "analyze: wrote";
    for (const std::string& name : outputs) std::cout << ' ' << name;
    std::cout << " to " << args.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string input;
    std::string out;
};

int cmd_simulate(const Settings& settings, const SimulateArgs& args,
                 const std::vector<std::string>& argv) {
    if (settings.mode.empty())
        throw UsageError("simulate requires --mode (shuffle_day or sort_week)");
    const shopseq::SimulationMode mode = resolve_mode(settings.mode);
    const shopseq::LzScanner scanner = resolve_scanner(settings.scanner);
    if (settings.runs < 1) throw UsageError("--runs must be at least 1");
    if (settings.sample < 1) throw UsageError("--sample must be at least 1");
    if (settings.bin_width <= 0.0) throw UsageError("--bin-width must be positive");

    LoadedInput loaded = load_input(args.input, settings);
    std::int64_t eligible = 0;
    for (const auto& [id, seq] : loaded.dataset.sequences)
        if (seq.size() >= 2) ++eligible;
    if (settings.sample > eligible)
        throw UsageError("--sample " + std::to_string(settings.sample) + " exceeds the " +
                         std::to_string(eligible) + " accounts with at least 2 events");

    shopseq::SimulationConfig config;
    config.runs = settings.runs;
    config.sample_size = settings.sample;
    config.seed = settings.seed;
    config.mode = mode;
    config.bin_width = settings.bin_width;
    const shopseq::SimulationResult result =
        shopseq::run_entropy_simulation(loaded.dataset, config, settings.threads, scanner);

    const std::filesystem::path dir = ensure_out_dir(args.out);
    std::vector<std::string> outputs;
    if (!loaded.parsed.errors.empty()) {
        emit(dir, "error_report.jsonl", outputs,
             [&](std::ostream& out) { shopseq::write_error_report(out, loaded.parsed.errors); });
        warn_rejected(loaded.parsed, "error_report.jsonl");
    }
    emit_json(dir, "simulation.json", outputs, shopseq::to_json(result));

    ordered_json manifest = manifest_base("simulate", argv);
    ordered_json resolved = global_settings(settings);
    resolved["input"] = args.input;
    resolved["format"] = loaded.format;
    resolved["mode"] = settings.mode;
    resolved["runs"] = settings.runs;
    resolved["sample"] = settings.sample;
    resolved["bin_width"] = settings.bin_width;
    resolved["scanner"] = settings.scanner;
    manifest["settings"] = std::move(resolved);
    add_manifest_input(manifest, args.input);
    write_manifest(dir, std::move(manifest), outputs);

    char line[160];
    std::snprintf(line, sizeof(line),
                  "simulate %s: mean s_true %.4f -> %.4f over %lld runs x %lld accounts",
                  settings.mode.c_str(), result.mean_baseline, result.mean_transformed,
                  static_cast<long long>(settings.runs), static_cast<long long>(settings.sample));
    std::cout << line << " -> " << (dir / "simulation.json").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// overlap
// ---------------------------------------------------------------------------

struct OverlapArgs {
    std::string input;
    std::string group_a;
    std::string group_b;
    bool auto_quintiles = false;
    std::string out;  // optional; stdout when empty
};

std::set<std::string> read_group_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open group file '" + path + "'");
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        ids.insert(line);
    }
    if (ids.empty()) throw UsageError("group file '" + path + "' contains no account ids");
    return ids;
}

int cmd_overlap(const Settings& settings, const OverlapArgs& args,
                const std::vector<std::string>& argv) {
    const bool has_groups = !args.group_a.empty() || !args.group_b.empty();
    if (args.auto_quintiles == has_groups)
        throw UsageError("overlap needs either --group-a with --group-b, or --auto-quintiles");
    if (has_groups && (args.group_a.empty() || args.group_b.empty()))
        throw UsageError("overlap needs both --group-a and --group-b");
    const shopseq::OverlapMethod method = resolve_method(settings.method);
    if (settings.samples < 1) throw UsageError("--samples must be at least 1");

    LoadedInput loaded = load_input(args.input, settings);
    const std::set<std::string> active = accounts_with_events(loaded.dataset);

    std::set<std::string> first, second;
    std::string first_label, second_label;
    if (args.auto_quintiles) {
        if (active.size() < 25)
            throw UsageError("--auto-quintiles needs at least 25 accounts with events, got " +
                             std::to_string(active.size()));
        first = shopseq::predictable_quintile(loaded.dataset, active, shopseq::Quintile::top);
        second = shopseq::predictable_quintile(loaded.dataset, active, shopseq::Quintile::bottom);
        first_label = "top";
        second_label = "bottom";
    } else {
        first = read_group_file(args.group_a);
        second = read_group_file(args.group_b);
        first_label = "a";
        second_label = "b";
        for (const auto* group : {&first, &second})
            for (const std::string& id : *group) {
                const auto it = loaded.dataset.sequences.find(id);
                if (it == loaded.dataset.sequences.end())
                    throw UsageError("group account '" + id + "' is not in the input");
                if (it->second.empty())
                    throw UsageError("group account '" + id + "' has no purchase events");
            }
    }

    shopseq::OverlapOptions options;
    options.method = method;
    options.samples = settings.samples;
    options.seed = settings.seed;
    const shopseq::OverlapResult from_first =
        shopseq::overlap_probability(loaded.dataset, first, second, options);
    const shopseq::OverlapResult from_second =
        shopseq::overlap_probability(loaded.dataset, second, first, options);

    const std::int64_t pooled_pairs = from_first.n_pairs_within + from_second.n_pairs_within;
    const double pooled_within =
        pooled_pairs == 0
            ? 0.0
            : (from_first.within_group_prob * static_cast<double>(from_first.n_pairs_within) +
               from_second.within_group_prob * static_cast<double>(from_second.n_pairs_within)) /
                  static_cast<double>(pooled_pairs);

    ordered_json j;
    j["method"] = settings.method;
    if (method == shopseq::OverlapMethod::monte_carlo) j["samples"] = settings.samples;
    j["seed"] = settings.seed;
    j["within_" + first_label] = from_first.within_group_prob;
    j["within_" + second_label] = from_second.within_group_prob;
    j["pooled_within"] = pooled_within;
    j["cross"] = from_first.cross_group_prob;
    j["n_pairs_within_" + first_label] = from_first.n_pairs_within;
    j["n_pairs_within_" + second_label] = from_second.n_pairs_within;
    j["n_pairs_cross"] = from_first.n_pairs_cross;
    j["group_" + first_label + "_size"] = first.size();
    j["group_" + second_label + "_size"] = second.size();

    if (args.out.empty()) {
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    const std::filesystem::path dir = ensure_out_dir(args.out);
    std::vector<std::string> outputs;
    if (!loaded.parsed.errors.empty()) {
        emit(dir, "error_report.jsonl", outputs,
             [&](std::ostream& out) { shopseq::write_error_report(out, loaded.parsed.errors); });
        warn_rejected(loaded.parsed, "error_report.jsonl");
    }
    emit_json(dir, "overlap.json", outputs, j);
    // The resolved groups go out as plain id-per-line files, so an
    // --auto-quintiles run can be repeated later with explicit groups.
    for (const auto& [label, group] :
         {std::pair{first_label, &first}, std::pair{second_label, &second}})
        emit(dir, "group_" + label + ".txt", outputs, [&group = *group](std::ostream& out) {
            for (const std::string& id : group) out << id << '\n';
        });

    ordered_json manifest = manifest_base("overlap", argv);
    ordered_json resolved = global_settings(settings);
    resolved["input"] = args.input;
    resolved["format"] = loaded.format;
    resolved["method"] = settings.method;
    if (method == shopseq::OverlapMethod::monte_carlo) resolved["samples"] = settings.samples;
    resolved["auto_quintiles"] = args.auto_quintiles;
    if (!args.auto_quintiles) {
        resolved["group_a"] = args.group_a;
        resolved["group_b"] = args.group_b;
    }
    manifest["settings"] = std::move(resolved);
    add_manifest_input(manifest, args.input);
    if (!args.auto_quintiles) {
        add_manifest_input(manifest, args.group_a);
        add_manifest_input(manifest, args.group_b);
    }
    write_manifest(dir, std::move(manifest), outputs);

    char line[120];
    std::snprintf(line, sizeof(line), "overlap: pooled_within %.6f, cross %.6f", pooled_within,
                  from_first.cross_group_prob);
    std::cout << line << " -> " << (dir / "overlap.json").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

struct StabilityArgs {
    std::string input_a;
    std::string input_b;
    std::string out;
};

int cmd_stability(const Settings& settings, const StabilityArgs& args,
                  const std::vector<std::string>& argv) {
    const shopseq::LzScanner scanner = resolve_scanner(settings.scanner);
    LoadedInput loaded_a = load_input(args.input_a, settings);
    LoadedInput loaded_b = load_input(args.input_b, settings);

    shopseq::StabilityResult result;
    try {
        result = shopseq::window_stability(loaded_a.dataset, loaded_b.dataset, scanner,
                                           settings.threads);
    } catch (const shopseq::Error& e) {
        throw UsageError(e.what());
    }

    const std::filesystem::path dir = ensure_out_dir(args.out);
    std::vector<std::string> outputs;
    if (!loaded_a.parsed.errors.empty()) {
        emit(dir, "error_report_a.jsonl", outputs,
             [&](std::ostream& out) { shopseq::write_error_report(out, loaded_a.parsed.errors); });
        warn_rejected(loaded_a.parsed, "error_report_a.jsonl");
    }
    if (!loaded_b.parsed.errors.empty()) {
        emit(dir, "error_report_b.jsonl", outputs,
             [&](std::ostream& out) { shopseq::write_error_report(out, loaded_b.parsed.errors); });
        warn_rejected(loaded_b.parsed, "error_report_b.jsonl");
    }
    emit_json(dir, "stability.json", outputs, shopseq::to_json(result));

    ordered_json manifest = manifest_base("stability", argv);
    ordered_json resolved = global_settings(settings);
    resolved["input_a"] = args.input_a;
    resolved["input_b"] = args.input_b;
    resolved["format_a"] = loaded_a.format;
    resolved["format_b"] = loaded_b.format;
    resolved["scanner"] = settings.scanner;
    manifest["settings"] = std::move(resolved);
    add_manifest_input(manifest, args.input_a);
    add_manifest_input(manifest, args.input_b);
    write_manifest(dir, std::move(manifest), outputs);

    char line[160];
    std::snprintf(line, sizeof(line),
                  "stability: s_unc rank corr %.4f, s_true rank corr %.4f (%zu shared, %zu skipped)",
                  result.s_unc_rank_corr, result.s_true_rank_corr, result.per_account.size(),
                  result.skipped.size());
    std::cout << line << " -> " << (dir / "stability.json").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

int run(int argc, char** argv) {
    Settings settings;
    ConfigBook book;

    CLI::App app{"Predictability analysis for categorical purchase sequences"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("shopseq ") + shopseq::kVersion);

    CLI::Option* seed_opt = app.add_option("--seed", settings.seed, "RNG seed (default 0)");
    CLI::Option* threads_opt =
        app.add_option("--threads", settings.threads, "Worker threads (default: hardware)");
    CLI::Option* timezone_opt = app.add_option(
        "--timezone", settings.timezone, "Fixed UTC offset for day binning, e.g. +02:00 (default UTC)");
    CLI::Option* strict_opt =
        app.add_flag("--strict", settings.strict, "Fail on the first malformed input row");
    app.add_option("--config", settings.config_path,
                   "Flat key=value settings file (command line wins over it)");

    book.bind("seed", seed_opt,
              [&settings](const std::string& v) { settings.seed = config_u64("seed", v); });
    book.bind("threads", threads_opt, [&settings](const std::string& v) {
        settings.threads = static_cast<unsigned>(config_u64("threads", v));
    });
    book.bind("timezone", timezone_opt,
              [&settings](const std::string& v) { settings.timezone = v; });
    book.bind("strict", strict_opt,
              [&settings](const std::string& v) { settings.strict = config_bool("strict", v); });

    const auto bind_format = [&](CLI::App* cmd) {
        book.bind("format",
                  cmd->add_option("--format", settings.format,
                                  "Input format: csv, jsonl, or auto (default: by extension)"),
                  [&settings](const std::string& v) { settings.format = v; });
    };
    const auto bind_scanner = [&](CLI::App* cmd) {
        book.bind("scanner",
                  cmd->add_option("--scanner", settings.scanner,
                                  "Match scanner: naive, indexed, or auto (default auto)"),
                  [&settings](const std::string& v) { settings.scanner = v; });
    };
    const auto bind_bin_width = [&](CLI::App* cmd) {
        book.bind("bin-width",
                  cmd->add_option("--bin-width", settings.bin_width,
                                  "Histogram bin width in bits (default 0.1)"),
                  [&settings](const std::string& v) {
                      settings.bin_width = config_float("bin-width", v);
                  });
    };

    // generate
    std::string spec_path, gen_out;
    CLI::App* generate =
        app.add_subcommand("generate", "Write a synthetic transaction CSV from a population spec");
    generate->fallthrough();
    generate->add_option("spec", spec_path, "Population spec JSON")->required();
    generate->add_option("out", gen_out, "Output CSV path")->required();

    // ingest-check
    std::string check_input, check_report;
    CLI::App* check = app.add_subcommand("ingest-check", "Validate a transaction file");
    check->fallthrough();
    check->add_option("--input", check_input, "Transaction file")->required();
    check->add_option("--report", check_report, "Write the malformed-row report (JSONL) here");
    bind_format(check);

    // analyze
    AnalyzeArgs analyze_args;
    CLI::App* analyze = app.add_subcommand("analyze", "Compute measures and write figure-ready files");
    analyze->fallthrough();
    analyze->add_option("--input", analyze_args.input, "Transaction file")->required();
    analyze->add_option("--out", analyze_args.out, "Output directory")->required();
    book.bind("measures",
              analyze->add_option("--measures", settings.measures,
                                  "Comma list of: entropy, zipf, graph, bundle, cohorts"),
              [&settings](const std::string& v) { settings.measures = v; });
    book.bind("level",
              analyze->add_option("--level", settings.level,
                                  "Graph nodes: merchant or mcc (default mcc)"),
              [&settings](const std::string& v) { settings.level = v; });
    book.bind("quintile",
              analyze->add_option("--quintile", settings.quintile,
                                  "Graph accounts: top, bottom, or all (default all)"),
              [&settings](const std::string& v) { settings.quintile = v; });
    book.bind("rank-min",
              analyze->add_option("--rank-min", settings.rank_min, "Smallest rank in the zipf fit"),
              [&settings](const std::string& v) { settings.rank_min = config_int("rank-min", v); });
    book.bind("rank-max",
              analyze->add_option("--rank-max", settings.rank_max, "Largest rank in the zipf fit"),
              [&settings](const std::string& v) { settings.rank_max = config_int("rank-max", v); });
    analyze->add_option("--cohort", analyze_args.cohorts,
                        "Income band as name:min:max, bounds optional and strict; repeatable "
                        "(default poor::16000 and wealthy:80000:)");
    bind_format(analyze);
    bind_scanner(analyze);
    bind_bin_width(analyze);

    // simulate
    SimulateArgs simulate_args;
    CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo transform experiment");
    simulate->fallthrough();
    simulate->add_option("--input", simulate_args.input, "Transaction file")->required();
    simulate->add_option("--out", simulate_args.out, "Output directory")->required();
    book.bind("mode",
              simulate->add_option("--mode", settings.mode, "Transform: shuffle_day or sort_week"),
              [&settings](const std::string& v) { settings.mode = v; });
    book.bind("runs", simulate->add_option("--runs", settings.runs, "Transform runs (default 10000)"),
              [&settings](const std::string& v) { settings.runs = config_int("runs", v); });
    book.bind("sample",
              simulate->add_option("--sample", settings.sample,
                                   "Accounts sampled without replacement (default 2000)"),
              [&settings](const std::string& v) { settings.sample = config_int("sample", v); });
    bind_format(simulate);
    bind_scanner(simulate);
    bind_bin_width(simulate);

    // overlap
    OverlapArgs overlap_args;
    CLI::App* overlap = app.add_subcommand("overlap", "Chance two accounts shop the same category");
    overlap->fallthrough();
    overlap->add_option("--input", overlap_args.input, "Transaction file")->required();
    overlap->add_option("--group-a", overlap_args.group_a, "Account ids, one per line");
    overlap->add_option("--group-b", overlap_args.group_b, "Account ids, one per line");
    overlap->add_flag("--auto-quintiles", overlap_args.auto_quintiles,
                      "Compare the most vs least predictable quintiles");
    overlap->add_option("--out", overlap_args.out,
                        "Output directory (prints JSON to stdout when omitted)");
    book.bind("method",
              overlap->add_option("--method", settings.method,
                                  "closed_form or monte_carlo (default closed_form)"),
              [&settings](const std::string& v) { settings.method = v; });
    book.bind("samples",
              overlap->add_option("--samples", settings.samples,
                                  "Monte Carlo draws per pair (default 1000000)"),
              [&settings](const std::string& v) { settings.samples = config_int("samples", v); });
    bind_format(overlap);

    // stability
    StabilityArgs stability_args;
    CLI::App* stability =
        app.add_subcommand("stability", "Compare per-account entropies across two windows");
    stability->fallthrough();
    stability->add_option("--input-a", stability_args.input_a, "First-window transaction file")
        ->required();
    stability->add_option("--input-b", stability_args.input_b, "Second-window transaction file")
        ->required();
    stability->add_option("--out", stability_args.out, "Output directory")->required();
    bind_format(stability);
    bind_scanner(stability);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    std::set<std::string> from_config;
    if (!settings.config_path.empty()) from_config = book.apply_file(settings.config_path);
    if (settings.threads == 0) settings.threads = 1;

    const std::vector<std::string> raw_argv(argv + 1, argv + argc);
    if (generate->parsed()) {
        const bool seed_overridden = seed_opt->count() > 0 || from_config.count("seed") > 0;
        return cmd_generate(settings, seed_overridden, spec_path, gen_out);
    }
    if (check->parsed()) return cmd_ingest_check(settings, check_input, check_report);
    if (analyze->parsed()) return cmd_analyze(settings, analyze_args, raw_argv);
    if (simulate->parsed()) return cmd_simulate(settings, simulate_args, raw_argv);
    if (overlap->parsed()) return cmd_overlap(settings, overlap_args, raw_argv);
    return cmd_stability(settings, stability_args, raw_argv);
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
