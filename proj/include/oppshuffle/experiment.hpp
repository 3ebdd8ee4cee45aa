#pragma once

// Experiment specifications (scenario presets, key=value config files) and
// the JSON manifests written next to simulation and cohort outputs.

#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cohort.hpp"
#include "errors.hpp"
#include "mobility.hpp"
#include "sim_engine.hpp"

namespace oppshuffle {

inline constexpr const char* code_version = "1.0.0";
inline constexpr int manifest_schema_version = 1;

/// Trial count of the quick preset (`--desk-scale`).
inline constexpr std::size_t desk_scale_trials = 3000;

enum class scenario { best, intermediate, worst, trace_random, trace_clique, custom };

inline const char* to_string(scenario s) {
    switch (s) {
    case scenario::best: return "best";
    case scenario::intermediate: return "intermediate";
    case scenario::worst: return "worst";
    case scenario::trace_random: return "trace-random";
    case scenario::trace_clique: return "trace-clique";
    case scenario::custom: return "custom";
    }
    return "?";
}

inline scenario parse_scenario(const std::string& s) {
    for (auto v : {scenario::best, scenario::intermediate, scenario::worst, scenario::trace_random,
                   scenario::trace_clique, scenario::custom})
        if (s == to_string(v))
            return v;
    throw invalid_parameter("unknown scenario '" + s +
                            "' (expected best, intermediate, worst, trace-random, trace-clique or custom)");
}

/// Everything that determines a simulation's output.
struct experiment_spec {
    scenario kind = scenario::best;
    std::size_t n = 10;
    std::size_t m = 6;
    std::size_t rounds = 100;
    std::size_t trials = 30000;
    std::uint64_t seed = 1;
    double ks_threshold = 0.035;
    std::uint64_t min_weight = 10; // contact-graph edge threshold, trace scenarios
    std::string matrix;            // custom scenario
    std::string events;            // trace scenarios: event cache CSV
    std::string out = ".";

    friend bool operator==(const experiment_spec&, const experiment_spec&) = default;
};

namespace detail {

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    if (v.empty() || v.front() == '-' || !parse_number(v, out))
        throw invalid_parameter("'" + key + "' expects a non-negative integer, got '" + v + "'");
    return out;
}

inline double parse_real(const std::string& key, const std::string& v) {
    double out = 0;
    if (!parse_number(v, out))
        throw invalid_parameter("'" + key + "' expects a number, got '" + v + "'");
    return out;
}

} // namespace detail

/// Applies one key=value setting. Unknown keys are rejected.
inline void set_spec_value(experiment_spec& spec, const std::string& key, const std::string& value) {
    if (key == "scenario")
        spec.kind = parse_scenario(value);
    else if (key == "n")
        spec.n = detail::parse_count(key, value);
    else if (key == "m")
        spec.m = detail::parse_count(key, value);
    else if (key == "rounds")
        spec.rounds = detail::parse_count(key, value);
    else if (key == "trials")
        spec.trials = detail::parse_count(key, value);
    else if (key == "seed")
        spec.seed = detail::parse_count(key, value);
    else if (key == "ks_threshold")
        spec.ks_threshold = detail::parse_real(key, value);
    else if (key == "min_weight")
        spec.min_weight = detail::parse_count(key, value);
    else if (key == "matrix")
        spec.matrix = value;
    else if (key == "events")
        spec.events = value;
    else if (key == "out")
        spec.out = value;
    else
        throw invalid_parameter("unknown config key '" + key + "'");
}

/// Reads `key = value` lines; '#' starts a comment line. Later keys override
/// earlier ones.
inline experiment_spec read_spec_config(std::istream& in, experiment_spec spec = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty() || line.front() == '#')
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw invalid_parameter("config line " + std::to_string(line_no) + ": expected key = value");
        try {
            set_spec_value(spec, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
        } catch (const invalid_parameter& e) {
            throw invalid_parameter("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return spec;
}

inline void write_spec_config(std::ostream& out, const experiment_spec& s) {
    out << "scenario = " << to_string(s.kind) << "\n"
        << "n = " << s.n << "\n"
        << "m = " << s.m << "\n"
        << "rounds = " << s.rounds << "\n"
        << "trials = " << s.trials << "\n"
        << "seed = " << s.seed << "\n"
        << "ks_threshold = " << detail::fmt_double(s.ks_threshold) << "\n"
        << "min_weight = " << s.min_weight << "\n";
    if (!s.matrix.empty())
        out << "matrix = " << s.matrix << "\n";
    if (!s.events.empty())
        out << "events = " << s.events << "\n";
    out << "out = " << s.out << "\n";
}

inline nlohmann::ordered_json spec_to_json(const experiment_spec& s) {
    nlohmann::ordered_json j;
    j["scenario"] = to_string(s.kind);
    j["n"] = s.n;
    j["m"] = s.m;
    j["rounds"] = s.rounds;
    j["trials"] = s.trials;
    j["seed"] = s.seed;
    j["ks_threshold"] = s.ks_threshold;
    j["min_weight"] = s.min_weight;
    j["matrix"] = s.matrix;
    j["events"] = s.events;
    j["out"] = s.out;
    return j;
}

inline experiment_spec spec_from_json(const nlohmann::json& j) {
    if (!j.is_object())
        throw invalid_parameter("manifest config must be a JSON object");
    experiment_spec s;
    for (const auto& [key, value] : j.items()) {
        std::string text;
        if (value.is_string())
            text = value.get<std::string>();
        else if (value.is_number_float())
            text = detail::fmt_double(value.get<double>());
        else if (value.is_number())
            text = value.dump();
        else
            throw invalid_parameter("manifest config key '" + key + "' has unsupported type");
        set_spec_value(s, key, text);
    }
    return s;
}

/// Checks the spec can become a trial_config, without touching files.
inline void validate_spec(const experiment_spec& s) {
    if (s.n < 2)
        throw invalid_parameter("n must be >= 2");
    if (s.m < 1)
        throw invalid_parameter("m must be >= 1");
    if (s.rounds < 1)
        throw invalid_parameter("rounds must be >= 1");
    if (s.trials < 1)
        throw invalid_parameter("trials must be >= 1");
    if (!(s.ks_threshold > 0.0))
        throw invalid_parameter("ks_threshold must be > 0");
    if (s.kind == scenario::custom && s.matrix.empty())
        throw invalid_parameter("scenario 'custom' needs a transition matrix file (matrix = <path>)");
    if ((s.kind == scenario::trace_random || s.kind == scenario::trace_clique) && s.events.empty())
        throw invalid_parameter(std::string("scenario '") + to_string(s.kind) +
                                "' needs a proximity event cache (events = <path>)");
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ingestion_error(0, "cannot open '" + path + "'");
    return in;
}

/// Builds the trial configuration, loading the matrix or event cache.
inline trial_config resolve_spec(const experiment_spec& s) {
    validate_spec(s);
    trial_config cfg;
    cfg.nodes = s.n;
    cfg.items_per_node = s.m;
    cfg.rounds = s.rounds;
    cfg.seed = s.seed;
    cfg.trial_count = s.trials;
    switch (s.kind) {
    case scenario::best:
        cfg.mobility = markov_mobility{markov_fully_connected(s.n)};
        break;
    case scenario::intermediate:
        cfg.mobility = markov_mobility{markov_line(s.n, 0.5, 0.0)};
        break;
    case scenario::worst:
        cfg.mobility = markov_mobility{markov_line(s.n, 0.8, 0.6)};
        break;
    case scenario::custom: {
        auto in = open_input(s.matrix);
        cfg.mobility = markov_mobility{read_transition_matrix(in)};
        break;
    }
    case scenario::trace_random:
    case scenario::trace_clique: {
        auto in = open_input(s.events);
        auto events = std::make_shared<const std::vector<contact_event>>(read_event_cache(in));
        auto graph = std::make_shared<const contact_graph>(build_contact_graph(*events, s.min_weight));
        sampled_trace_mobility t{events, graph,
                                 s.kind == scenario::trace_random ? cohort_mode::random_connected
                                                                  : cohort_mode::clique_combined,
                                 nullptr, true};
        if (t.mode == cohort_mode::clique_combined)
            t.cliques = std::make_shared<const std::vector<std::vector<user_id>>>(maximal_cliques(*graph));
        cfg.mobility = std::move(t);
        break;
    }
    }
    cfg.validate();
    return cfg;
}

/// Run manifest: configuration, node ordering and headline results.
inline nlohmann::ordered_json run_manifest(const experiment_spec& s, const ks_report& ks,
                                           std::optional<double> closeness) {
    nlohmann::ordered_json j;
    j["tool"] = "oppshuffle";
    j["code_version"] = code_version;
    j["schema_version"] = manifest_schema_version;
    j["config"] = spec_to_json(s);
    nlohmann::ordered_json order;
    if (s.kind == scenario::trace_random || s.kind == scenario::trace_clique) {
        order["rule"] = "per trial, node k is the k-th smallest user id of that trial's cohort";
    } else {
        order["rule"] = "node k is row k of the transition matrix";
        std::vector<std::size_t> nodes;
        for (std::size_t k = 1; k <= s.n; ++k)
            nodes.push_back(k);
        order["nodes"] = nodes;
    }
    j["node_order"] = order;
    j["ks_aggregation"] = "max over items of the per-item KS statistic";
    const auto crossing = rounds_to_threshold(ks, s.ks_threshold);
    nlohmann::ordered_json res;
    res["rounds_to_threshold"] = crossing ? nlohmann::ordered_json(*crossing) : nlohmann::ordered_json(nullptr);
    const auto maxdev_crossing = rounds_to_threshold(ks.maxdev, s.ks_threshold);
    res["maxdev_rounds_to_threshold"] =
        maxdev_crossing ? nlohmann::ordered_json(*maxdev_crossing) : nlohmann::ordered_json(nullptr);
    res["final_aggregate_D"] = ks.aggregate.back();
    res["mean_closeness"] = closeness ? nlohmann::ordered_json(*closeness) : nlohmann::ordered_json(nullptr);
    j["results"] = res;
    j["outputs"] = {"tensor.csv", "series.csv", "item_series.csv", "config.txt"};
    return j;
}

inline nlohmann::ordered_json cohort_to_json(const cohort& c, std::optional<double> closeness) {
    nlohmann::ordered_json j;
    std::vector<std::uint32_t> members;
    for (auto u : c.members)
        members.push_back(u.value);
    j["members"] = members;
    j["provenance"] = to_string(c.provenance);
    j["max_pair_hops"] = c.hops.max_hops;
    j["median_pair_hops"] = c.hops.median_hops;
    j["mean_closeness"] = closeness ? nlohmann::ordered_json(*closeness) : nlohmann::ordered_json(nullptr);
    return j;
}

/// Inverse of cohort_to_json (mean_closeness is not stored on cohort).
inline cohort cohort_from_json(const nlohmann::json& j) {
    cohort c;
    try {
        for (auto v : j.at("members"))
            c.members.push_back(user_id{v.get<std::uint32_t>()});
        const auto prov = j.at("provenance").get<std::string>();
        if (prov == "random-connected")
            c.provenance = cohort_provenance::random_connected;
        else if (prov == "clique-combined")
            c.provenance = cohort_provenance::clique_combined;
        else
            throw invalid_parameter("unknown provenance '" + prov + "'");
        c.hops.max_hops = j.at("max_pair_hops").get<std::uint32_t>();
        c.hops.median_hops = j.at("median_pair_hops").get<std::uint32_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ingestion_error(0, std::string("cohort manifest: ") + e.what());
    }
    return c;
}

} // namespace oppshuffle
