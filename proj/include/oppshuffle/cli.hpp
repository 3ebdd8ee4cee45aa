#pragma once

// Command-line front end. Every command writes to the given streams so the
// whole CLI can be driven in-process by tests.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cohort.hpp"
#include "errors.hpp"
#include "experiment.hpp"
#include "mobility.hpp"
#include "sim_engine.hpp"

namespace oppshuffle::cli {

enum exit_code : int { success = 0, config_error = 1, data_error = 2, infeasible = 3 };

namespace detail {

// "<number><unit>" with the unit looked up in `units`; a bare number uses
// the unit mapped from "".
inline double parse_with_units(const std::string& text, const std::map<std::string, double>& units,
                               const char* what) {
    std::size_t used = 0;
    double value = 0;
    try {
        value = std::stod(text, &used);
    } catch (const std::logic_error&) {
        throw invalid_parameter(std::string("bad ") + what + " '" + text + "'");
    }
    const auto unit = oppshuffle::detail::trim(text.substr(used));
    const auto it = units.find(unit);
    if (it == units.end() || !std::isfinite(value) || value < 0)
        throw invalid_parameter(std::string("bad ") + what + " '" + text + "'");
    return value * it->second;
}

} // namespace detail

/// Metres. Accepts "50", "50m", "0.05km".
inline double parse_length_m(const std::string& text) {
    return detail::parse_with_units(text, {{"", 1.0}, {"m", 1.0}, {"km", 1000.0}}, "length");
}

/// Seconds. Accepts "1800", "1800s", "30min", "0.5h".
inline std::int64_t parse_duration_s(const std::string& text) {
    const double s = detail::parse_with_units(
        text, {{"", 1.0}, {"s", 1.0}, {"min", 60.0}, {"h", 3600.0}, {"d", 86400.0}}, "duration");
    return static_cast<std::int64_t>(std::llround(s));
}

/// Re-reads a written CSV and checks it against its declared header; every
/// data cell must be numeric, or "none" where `allow_none` is set.
inline void validate_csv(const std::filesystem::path& path, const std::string& header, bool allow_none = false) {
    std::ifstream in(path);
    if (!in)
        throw ingestion_error(0, "cannot re-open '" + path.string() + "' for validation");
    std::string line;
    if (!std::getline(in, line) || line != header)
        throw ingestion_error(1, path.string() + ": header is not '" + header + "'");
    const auto columns = oppshuffle::detail::split_csv(header).size();
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto cells = oppshuffle::detail::split_csv(line);
        if (cells.size() != columns)
            throw ingestion_error(line_no, path.string() + ": wrong column count");
        for (const auto& c : cells) {
            double v = 0;
            if (!(allow_none && c == "none") && !oppshuffle::detail::parse_number(c, v))
                throw ingestion_error(line_no, path.string() + ": non-numeric cell '" + c + "'");
        }
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
    out.close();
    if (!out)
        throw ingestion_error(0, "cannot write '" + path.string() + "'");
}

/// Runs a simulation and writes tensor.csv, series.csv, item_series.csv,
/// config.txt and manifest.json into spec.out.
inline int cmd_simulate(const experiment_spec& spec, unsigned threads, std::ostream& out, std::ostream& err) {
    (void)err;
    const trial_config cfg = resolve_spec(spec);
    const auto result = run_experiment(cfg, threads);
    const auto tensor = result.counts.tensor();
    const auto ks = ks_series(tensor);
    const auto closeness = mean_trial_closeness(result.trials);

    const std::filesystem::path dir(spec.out);
    std::filesystem::create_directories(dir);
    {
        std::ostringstream s;
        write_tensor_csv(s, tensor);
        write_text_file(dir / "tensor.csv", s.str());
    }
    {
        std::ostringstream s;
        write_series_csv(s, ks);
        write_text_file(dir / "series.csv", s.str());
    }
    {
        std::ostringstream s;
        write_item_series_csv(s, ks);
        write_text_file(dir / "item_series.csv", s.str());
    }
    {
        std::ostringstream s;
        write_spec_config(s, spec);
        write_text_file(dir / "config.txt", s.str());
    }
    write_text_file(dir / "manifest.json", run_manifest(spec, ks, closeness).dump(2) + "\n");

    validate_csv(dir / "tensor.csv", "round,item,node,probability");
    validate_csv(dir / "series.csv", "round,aggregate_D,maxdev");
    validate_csv(dir / "item_series.csv", "round,item,D");

    const auto crossing = rounds_to_threshold(ks, spec.ks_threshold);
    out << "scenario=" << to_string(spec.kind) << " n=" << spec.n << " m=" << spec.m << " trials=" << spec.trials
        << " seed=" << spec.seed << " rounds_to_threshold(D<" << oppshuffle::detail::fmt_double(spec.ks_threshold)
        << ")=" << (crossing ? std::to_string(*crossing) : std::string("none"))
        << " final_D=" << oppshuffle::detail::fmt_double(ks.aggregate.back()) << "\n";
    return success;
}

/// Extracts proximity events from a trace CSV into an event cache and prints
/// a histogram of events per pair.
inline int cmd_traces_extract(const std::string& input, const std::string& output, const proximity_options& opt,
                              std::ostream& out, std::ostream& err) {
    auto in = open_input(input);
    const gps_trace trace = read_trace_csv(in);
    if (trace.fixes.empty())
        err << "warning: '" << input << "' contains no GPS fixes; writing an empty event cache\n";
    const auto events = extract_proximity_events(trace, opt);
    {
        std::ostringstream s;
        write_event_cache(s, events);
        write_text_file(output, s.str());
    }
    validate_csv(output, "user_a,user_b,timestamp,day");

    std::map<std::pair<user_id, user_id>, std::uint64_t> per_pair;
    for (const auto& e : events)
        ++per_pair[{e.first, e.second}];
    const std::vector<std::pair<std::uint64_t, std::uint64_t>> bins{{1, 1},   {2, 4},    {5, 9},
                                                                    {10, 19}, {20, 49}, {50, UINT64_MAX}};
    out << events.size() << " proximity events across " << per_pair.size() << " pairs\n";
    out << "events_per_pair,pairs\n";
    for (const auto& [lo, hi] : bins) {
        std::uint64_t c = 0;
        for (const auto& [pair, n] : per_pair)
            c += n >= lo && n <= hi;
        out << lo << (hi == UINT64_MAX ? "+" : (hi == lo ? "" : "-" + std::to_string(hi))) << ',' << c << "\n";
    }
    return success;
}

struct cohort_request {
    std::string events;
    std::string mode = "random";
    std::size_t n = 10;
    std::uint64_t seed = 1;
    std::size_t count = 1;
    std::uint64_t min_weight = 10;
    std::string output = "cohorts.json";
    std::string graph_output;
};

/// Draws `count` cohorts from the event cache's contact graph and writes them
/// as a JSON array.
inline int cmd_cohort(const cohort_request& req, std::ostream& out, std::ostream& err) {
    (void)err;
    if (req.mode != "random" && req.mode != "clique")
        throw invalid_parameter("mode must be 'random' or 'clique', got '" + req.mode + "'");
    if (req.n < 1 || req.count < 1)
        throw invalid_parameter("n and count must be >= 1");
    auto in = open_input(req.events);
    const auto events = read_event_cache(in);
    const auto graph = build_contact_graph(events, req.min_weight);
    if (!req.graph_output.empty()) {
        std::ostringstream s;
        write_graph_cache(s, graph);
        write_text_file(req.graph_output, s.str());
        validate_csv(req.graph_output, "user_a,user_b,weight");
    }
    std::vector<std::vector<user_id>> cliques;
    if (req.mode == "clique")
        cliques = maximal_cliques(graph);

    nlohmann::ordered_json manifest = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < req.count; ++k) {
        random_stream rng = random_stream::for_trial(req.seed, k);
        const cohort c = req.mode == "random" ? random_connected_cohort(graph, req.n, rng)
                                              : combine_cliques(cliques, req.n, graph, rng);
        manifest.push_back(cohort_to_json(c, mean_closeness(graph, c.members)));
    }
    write_text_file(req.output, manifest.dump(2) + "\n");
    out << "wrote " << req.count << " " << (req.mode == "random" ? "random-connected" : "clique-combined")
        << " cohort(s) of " << req.n << " users to " << req.output << " (graph: " << graph.size() << " users, "
        << graph.edge_count() << " edges with weight >= " << req.min_weight << ")\n";
    return success;
}

/// Runs each scenario and writes (mean closeness, rounds to threshold) rows.
inline int cmd_calibrate(const std::vector<experiment_spec>& specs, const std::string& output, unsigned threads,
                         std::ostream& out, std::ostream& err) {
    if (specs.size() < 2)
        throw invalid_parameter("calibrate needs at least two scenarios");
    std::ostringstream csv;
    csv << "centrality,rounds\n";
    for (const auto& spec : specs) {
        const trial_config cfg = resolve_spec(spec);
        const auto result = run_experiment(cfg, threads);
        const auto ks = ks_series(result.counts.tensor());
        const auto crossing = rounds_to_threshold(ks, spec.ks_threshold);
        const auto closeness = mean_trial_closeness(result.trials);
        if (!closeness)
            throw disconnected_graph(std::string("scenario '") + to_string(spec.kind) +
                                     "' has no connected exchange graph; closeness is undefined");
        if (!crossing)
            err << "warning: scenario '" << to_string(spec.kind) << "' did not reach D<"
                << oppshuffle::detail::fmt_double(spec.ks_threshold) << " within " << spec.rounds << " rounds\n";
        csv << oppshuffle::detail::fmt_double(*closeness) << ','
            << (crossing ? std::to_string(*crossing) : std::string("none")) << "\n";
        out << to_string(spec.kind) << ": mean closeness " << oppshuffle::detail::fmt_double(*closeness)
            << ", rounds " << (crossing ? std::to_string(*crossing) : std::string("none")) << "\n";
    }
    const std::filesystem::path path(output);
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    write_text_file(path, csv.str());
    validate_csv(path, "centrality,rounds", true);
    return success;
}

inline int exit_code_for(const error& e) {
    if (dynamic_cast<const infeasible_cohort*>(&e))
        return infeasible;
    if (dynamic_cast<const ingestion_error*>(&e) || dynamic_cast<const disconnected_graph*>(&e))
        return data_error;
    return config_error;
}

inline std::string version_string() {
    return std::string("oppshuffle ") + code_version + " (manifest schema " +
           std::to_string(manifest_schema_version) + ")";
}

namespace detail {

// Flags shared by simulate and calibrate. Values stay strings until applied
// so that only flags given on the command line override a config file.
struct spec_flags {
    std::map<std::string, std::string> values;

    void add(CLI::App& app) {
        const std::vector<std::pair<std::string, std::string>> keys{
            {"n", "number of nodes N"},
            {"m", "data items per node M"},
            {"rounds", "shuffling rounds R"},
            {"trials", "Monte-Carlo trials"},
            {"seed", "64-bit seed"},
            {"ks-threshold", "KS threshold for the convergence summary"},
            {"min-weight", "contact-graph edge threshold (trace scenarios)"},
            {"matrix", "transition matrix CSV (custom scenario)"},
            {"events", "proximity event cache CSV (trace scenarios)"},
        };
        for (const auto& [key, help] : keys)
            app.add_option_function<std::string>(
                "--" + key, [this, key = key](const std::string& v) { values[key] = v; }, help);
    }

    void apply(experiment_spec& spec) const {
        for (const auto& [key, v] : values) {
            std::string k = key;
            std::replace(k.begin(), k.end(), '-', '_');
            set_spec_value(spec, k, v);
        }
    }
};

} // namespace detail

/// Entry point. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Opportunistic peer-to-peer data shuffling simulator"};
    app.require_subcommand(0, 1);
    bool show_version = false;
    app.add_flag("--version", show_version, "print code and schema versions");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "run Monte-Carlo trials and write tensor/series CSVs");
    std::string sim_scenario, sim_config, sim_manifest, sim_out;
    unsigned threads = 0;
    detail::spec_flags sim_flags;
    simulate->add_option("--scenario", sim_scenario,
                         "best | intermediate | worst | trace-random | trace-clique | custom");
    simulate->add_option("--config", sim_config, "key = value config file");
    simulate->add_option("--from-manifest", sim_manifest, "re-run the configuration stored in a manifest.json");
    simulate->add_option("--out", sim_out, "output directory");
    simulate->add_option("--threads", threads, "worker threads (0 = all cores)");
    bool sim_desk = false;
    simulate->add_flag("--desk-scale", sim_desk, "use the quick trial count unless --trials is given");
    sim_flags.add(*simulate);

    // traces extract
    auto* traces = app.add_subcommand("traces", "GPS trace tooling");
    traces->require_subcommand(1);
    auto* extract = traces->add_subcommand("extract", "extract proximity events from a trace CSV");
    std::string trace_input, trace_output = "events.csv", radius = "50m", cooldown = "30min", staleness = "10min";
    extract->add_option("--input", trace_input, "trace CSV")->required();
    extract->add_option("--output", trace_output, "event cache CSV to write");
    extract->add_option("--radius", radius, "proximity radius, e.g. 50m");
    extract->add_option("--cooldown", cooldown, "per-pair cooldown, e.g. 30min");
    extract->add_option("--staleness", staleness, "max distance to a fix before a user counts as absent");

    // cohort
    auto* cohort_cmd = app.add_subcommand("cohort", "draw cohorts from an event cache");
    cohort_request creq;
    cohort_cmd->add_option("--events", creq.events, "event cache CSV")->required();
    cohort_cmd->add_option("--mode", creq.mode, "random | clique");
    cohort_cmd->add_option("--n", creq.n, "cohort size");
    cohort_cmd->add_option("--seed", creq.seed, "seed");
    cohort_cmd->add_option("--count", creq.count, "number of cohorts");
    cohort_cmd->add_option("--min-weight", creq.min_weight, "contact-graph edge threshold");
    cohort_cmd->add_option("--output", creq.output, "cohort manifest JSON");
    cohort_cmd->add_option("--graph-output", creq.graph_output, "also write the filtered contact graph CSV");

    // calibrate
    auto* calibrate = app.add_subcommand("calibrate", "pair mean closeness with rounds-to-threshold per scenario");
    std::vector<std::string> cal_scenarios;
    std::string cal_output = "calibration.csv";
    detail::spec_flags cal_flags;
    calibrate->add_option("--scenario", cal_scenarios, "scenario to include (repeat, at least two)");
    calibrate->add_option("--output", cal_output, "calibration CSV to write");
    calibrate->add_option("--threads", threads, "worker threads (0 = all cores)");
    bool cal_desk = false;
    calibrate->add_flag("--desk-scale", cal_desk, "use the quick trial count unless --trials is given");
    cal_flags.add(*calibrate);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return success;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return success;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return config_error;
    }

    try {
        if (show_version) {
            out << version_string() << "\n";
            return success;
        }
        if (*simulate) {
            experiment_spec spec;
            if (!sim_manifest.empty()) {
                auto in = open_input(sim_manifest);
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(in);
                } catch (const nlohmann::json::exception& e) {
                    throw ingestion_error(0, sim_manifest + ": " + e.what());
                }
                if (!j.contains("config"))
                    throw ingestion_error(0, sim_manifest + ": no 'config' object");
                spec = spec_from_json(j["config"]);
            }
            if (!sim_config.empty()) {
                auto in = open_input(sim_config);
                spec = read_spec_config(in, spec);
            }
            if (!sim_scenario.empty())
                spec.kind = parse_scenario(sim_scenario);
            if (sim_desk)
                spec.trials = desk_scale_trials;
            sim_flags.apply(spec);
            if (!sim_out.empty())
                spec.out = sim_out;
            return cmd_simulate(spec, threads, out, err);
        }
        if (*extract) {
            proximity_options opt;
            opt.radius_m = parse_length_m(radius);
            opt.cooldown_s = parse_duration_s(cooldown);
            opt.staleness_s = parse_duration_s(staleness);
            return cmd_traces_extract(trace_input, trace_output, opt, out, err);
        }
        if (*cohort_cmd)
            return cmd_cohort(creq, out, err);
        if (*calibrate) {
            std::vector<experiment_spec> specs;
            for (const auto& s : cal_scenarios) {
                experiment_spec spec;
                spec.kind = parse_scenario(s);
                if (cal_desk)
                    spec.trials = desk_scale_trials;
                cal_flags.apply(spec);
                specs.push_back(spec);
            }
            return cmd_calibrate(specs, cal_output, threads, out, err);
        }
        out << app.help();
        return config_error;
    } catch (const error& e) {
        err << "error (" << e.kind() << "): " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error (io): " << e.what() << "\n";
        return data_error;
    }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i)
        args.emplace_back(argv[i]);
    return run(args, out, err);
}

} // namespace oppshuffle::cli
