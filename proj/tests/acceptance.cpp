// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Every check runs the real pipeline end to end.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <oppshuffle/cli.hpp>

#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace oppshuffle;

namespace {

constexpr std::uint64_t seed = 1;
constexpr std::size_t trials = 3000;
constexpr double threshold = 0.035;

struct verdict {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::string crossing_text(std::optional<std::size_t> c) { return c ? std::to_string(*c) : std::string("none"); }

double seconds_since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

ks_report simulate(const transition_matrix& t, std::size_t m, std::size_t rounds, std::size_t n_trials = trials) {
    trial_config cfg;
    cfg.mobility = markov_mobility{t};
    cfg.nodes = t.size();
    cfg.items_per_node = m;
    cfg.rounds = rounds;
    cfg.seed = seed;
    cfg.trial_count = n_trials;
    return ks_series(run_experiment(cfg).counts.tensor());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct workspace {
    fs::path dir;
    workspace() {
        std::random_device rd;
        dir = fs::temp_directory_path() / ("oppshuffle-acceptance-" + std::to_string(rd()));
        fs::create_directories(dir);
    }
    ~workspace() { fs::remove_all(dir); }
};

// Runs the best case through the CLI, writing into `out`; returns the wall time.
double run_best_case_cli(const fs::path& out, std::optional<std::size_t>& crossing) {
    experiment_spec spec;
    spec.kind = scenario::best;
    spec.trials = trials;
    spec.seed = seed;
    spec.out = out.string();
    std::ostringstream sink, err;
    const auto t0 = std::chrono::steady_clock::now();
    if (cli::cmd_simulate(spec, 0, sink, err) != 0)
        throw std::runtime_error("simulate failed: " + err.str());
    const double elapsed = seconds_since(t0);
    std::ifstream in(out / "manifest.json");
    const auto j = nlohmann::json::parse(in);
    const auto& c = j["results"]["rounds_to_threshold"];
    crossing = c.is_null() ? std::nullopt : std::optional<std::size_t>(c.get<std::size_t>());
    return elapsed;
}

verdict best_case(const workspace& ws) {
    std::optional<std::size_t> c;
    const double s = run_best_case_cli(ws.dir / "best-1", c);
    const bool ok = c && *c >= 3 && *c <= 5 && s < 60.0;
    return {ok, fmt("crossing=%s (target 4+-1), %.2f s (limit 60 s)", crossing_text(c).c_str(), s)};
}

verdict intermediate_case() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto ks = simulate(markov_line(10, 0.5, 0.0), 6, 150);
    const double s = seconds_since(t0);
    const auto agg = rounds_to_threshold(ks, threshold);
    const auto dev = rounds_to_threshold(ks.maxdev, threshold);
    const auto item3 = rounds_to_threshold(ks.item_series(item_id{3}), threshold);
    const bool direct = agg && *agg >= 36 && *agg <= 56;
    bool bracket = false;
    if (dev && item3)
        bracket = std::min(*dev, *item3) <= 46 && std::max(*dev, *item3) >= 46;
    const bool ok = (direct || bracket) && s < 120.0;
    return {ok, fmt("max-over-items crossing=%s (target 46+-10); maxdev=%s, item 3=%s%s; %.2f s (limit 120 s)",
                    crossing_text(agg).c_str(), crossing_text(dev).c_str(), crossing_text(item3).c_str(),
                    direct ? "" : (bracket ? " bracket 46" : " do not bracket 46"), s)};
}

verdict worst_case() {
    const auto ks = simulate(markov_line(10, 0.8, 0.6), 6, 120);
    const auto c = rounds_to_threshold(ks, threshold);
    const double d100 = ks.aggregate[100];
    const bool crossed_in_band = c && *c >= 80 && *c <= 120;
    const bool near_miss = (!c || *c > 100) && d100 <= threshold + 0.02;
    return {crossed_in_band || near_miss,
            fmt("crossing=%s (target 100+-20); D(100)=%.4f (near-miss limit %.3f)", crossing_text(c).c_str(), d100,
                threshold + 0.02)};
}

// "Later" treats a missing crossing as later than any crossing.
bool strictly_later(std::optional<std::size_t> a, std::optional<std::size_t> b) {
    if (!b)
        return false;
    return !a || *a > *b;
}

verdict parameter_insensitivity() {
    bool ok = true;
    std::string detail;
    {
        const auto base = rounds_to_threshold(simulate(markov_fully_connected(10), 6, 30), threshold);
        const auto wide = rounds_to_threshold(simulate(markov_fully_connected(30), 6, 30), threshold);
        const auto deep = rounds_to_threshold(simulate(markov_fully_connected(10), 20, 30), threshold);
        const auto close = [&](auto x) { return base && x && std::abs(double(*x) - double(*base)) <= 1.0; };
        ok &= close(wide) && close(deep);
        detail += fmt("best (10,6)=%s (30,6)=%s (10,20)=%s", crossing_text(base).c_str(), crossing_text(wide).c_str(),
                      crossing_text(deep).c_str());
    }
    for (const auto& [name, edge, inner, rounds] :
         {std::tuple{"intermediate", 0.5, 0.0, std::size_t{150}}, std::tuple{"worst", 0.8, 0.6, std::size_t{300}}}) {
        const auto base = rounds_to_threshold(simulate(markov_line(10, edge, inner), 6, rounds), threshold);
        const auto wide = rounds_to_threshold(simulate(markov_line(30, edge, inner), 6, rounds), threshold);
        const auto deep = rounds_to_threshold(simulate(markov_line(10, edge, inner), 20, rounds), threshold);
        const bool later = strictly_later(wide, base);
        const bool similar = base && deep && std::abs(double(*deep) - double(*base)) <= 0.15 * double(*base);
        ok &= later && similar;
        detail += fmt("; %s (10,6)=%s (30,6)=%s (10,20)=%s", name, crossing_text(base).c_str(),
                      crossing_text(wide).c_str(), crossing_text(deep).c_str());
    }
    return {ok, detail};
}

verdict trace_ordering(const workspace& ws) {
    const fs::path events = ws.dir / "fixture-events.csv";
    std::ostringstream sink, err;
    if (cli::cmd_traces_extract(OPPSHUFFLE_FIXTURE, events.string(), proximity_options{}, sink, err) != 0)
        return {false, "extraction failed: " + err.str()};

    const auto run = [&](scenario kind) {
        experiment_spec spec;
        spec.kind = kind;
        spec.trials = trials;
        spec.seed = seed;
        spec.events = events.string();
        const auto res = run_experiment(resolve_spec(spec));
        return std::pair{ks_series(res.counts.tensor()), mean_trial_closeness(res.trials)};
    };
    const auto [random_ks, random_c] = run(scenario::trace_random);
    const auto [clique_ks, clique_c] = run(scenario::trace_clique);

    const double noise = 3.0 / std::sqrt(double(trials));
    const auto well_behaved = [&](const ks_report& k) {
        double running_min = k.aggregate[1];
        for (std::size_t r = 0; r < k.rounds(); ++r) {
            if (!(k.aggregate[r] > 0.0))
                return false;
            if (r >= 1) {
                if (k.aggregate[r] > running_min + noise)
                    return false;
                running_min = std::min(running_min, k.aggregate[r]);
            }
        }
        return true;
    };
    const auto rc = rounds_to_threshold(random_ks, threshold);
    const auto cc = rounds_to_threshold(clique_ks, threshold);
    const bool ok = strictly_later(rc, cc) && well_behaved(random_ks) && well_behaved(clique_ks);
    return {ok, fmt("trace-random crossing=%s (closeness %.3f), trace-clique crossing=%s (closeness %.3f); "
                    "positive and non-increasing within %.3f: %s/%s",
                    crossing_text(rc).c_str(), random_c.value_or(NAN), crossing_text(cc).c_str(),
                    clique_c.value_or(NAN), noise, well_behaved(random_ks) ? "yes" : "no",
                    well_behaved(clique_ks) ? "yes" : "no")};
}

verdict oracle_equivalence() {
    const std::size_t n_trials = 30000;
    const auto exact = oracle::exact_fully_connected(3, 2, 2);
    trial_config cfg;
    cfg.mobility = markov_mobility{markov_fully_connected(3)};
    cfg.nodes = 3;
    cfg.items_per_node = 2;
    cfg.rounds = 2;
    cfg.seed = seed;
    cfg.trial_count = n_trials;
    const auto t = run_experiment(cfg).counts.tensor();
    double worst = 0.0;
    for (std::size_t r = 0; r <= 2; ++r)
        for (std::size_t d = 0; d < 6; ++d)
            for (std::size_t i = 0; i < 3; ++i) {
                const double p = exact[r][d][i];
                const double se = std::sqrt(p * (1 - p) / double(n_trials));
                const double gap = std::abs(t.at(r, item_id::from_index(d), node_id::from_index(i)) - p);
                if (gap > 0)
                    worst = std::max(worst, se > 0 ? gap / se : INFINITY);
            }
    return {worst <= 3.0, fmt("largest deviation %.2f standard errors over 54 cells", worst)};
}

verdict property_suites() {
    std::map<std::string, bool> ok;
    std::mt19937_64 gen(seed);

    // conservation and normalization
    {
        bool conserved = true, normalized = true;
        for (auto t : {markov_fully_connected(10), markov_line(10, 0.5, 0.0), markov_line(10, 0.8, 0.6)}) {
            trial_config cfg;
            cfg.mobility = markov_mobility{t};
            cfg.nodes = 10;
            cfg.items_per_node = 6;
            cfg.rounds = 50;
            cfg.seed = seed;
            cfg.trial_count = 200;
            for (std::size_t k = 0; k < 20; ++k)
                run_trial(cfg, k, [&](std::size_t, const possession_ledger& l) { conserved &= l.conserved(); });
            const auto tensor = run_experiment(cfg).counts.tensor();
            for (std::size_t r = 0; r < tensor.rounds(); ++r)
                for (std::size_t d = 0; d < tensor.items(); ++d) {
                    double sum = 0;
                    for (double p : tensor.distribution(r, item_id::from_index(d)))
                        sum += p;
                    normalized &= std::abs(sum - 1.0) <= 1e-9;
                }
        }
        ok["conservation"] = conserved;
        ok["normalization"] = normalized;
    }

    // merge semilattice laws
    {
        const auto random_adj = [&](std::size_t n) {
            personal_adjacency a(node_id::from_index(gen() % n), n);
            for (std::uint32_t k = 1; k <= n; ++k)
                for (std::uint32_t l = k + 1; l <= n; ++l)
                    if (gen() % 3)
                        a.set(node_id{k}, node_id{l}, gen() % 10);
            return a;
        };
        const auto same = [](const personal_adjacency& x, const personal_adjacency& y) {
            for (std::uint32_t k = 1; k <= x.size(); ++k)
                for (std::uint32_t l = 1; l <= x.size(); ++l)
                    if (x.at(node_id{k}, node_id{l}) != y.at(node_id{k}, node_id{l}))
                        return false;
            return true;
        };
        bool laws = true;
        for (int t = 0; t < 1000; ++t) {
            const std::size_t n = 2 + gen() % 7;
            const auto a = random_adj(n), b = random_adj(n), c = random_adj(n);
            laws &= same(merge_adjacency(a, b), merge_adjacency(b, a));
            laws &= same(merge_adjacency(merge_adjacency(a, b), c), merge_adjacency(a, merge_adjacency(b, c)));
            laws &= same(merge_adjacency(a, a), a);
        }
        ok["merge laws"] = laws;
    }

    // shortest paths against simple-path enumeration
    {
        bool match = true;
        for (int t = 0; t < 200; ++t) {
            const int n = 2 + static_cast<int>(gen() % 6);
            const auto g = oracle::random_graph(n, 0.35, gen);
            personal_adjacency a(node_id{1}, static_cast<std::size_t>(n));
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (g[i][j])
                        a.set(node_id::from_index(i), node_id::from_index(j), 1);
            const auto expect = oracle::all_simple_path_distances(g);
            const auto d = shortest_paths(a);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const auto got = d.at(node_id::from_index(i), node_id::from_index(j));
                    match &= expect[i][j] < 0 ? !got.has_value() : got == double(expect[i][j]);
                }
        }
        ok["shortest paths"] = match;
    }

    // maximal cliques against subset enumeration
    {
        bool match = true;
        for (int t = 0; t < 100; ++t) {
            const int v = 1 + static_cast<int>(gen() % 12);
            const auto adj = oracle::random_graph(v, 0.4, gen);
            std::vector<user_id> users;
            for (int u = 1; u <= v; ++u)
                users.push_back(user_id{static_cast<std::uint32_t>(u)});
            contact_graph g(users);
            for (int i = 0; i < v; ++i)
                for (int j = i + 1; j < v; ++j)
                    if (adj[i][j])
                        g.set_weight(i, j, 1);
            std::set<std::vector<int>> got;
            for (const auto& c : maximal_cliques(g)) {
                std::vector<int> x;
                for (auto u : c)
                    x.push_back(static_cast<int>(u.value) - 1);
                got.insert(x);
            }
            match &= got == oracle::maximal_cliques_by_subsets(adj);
        }
        ok["maximal cliques"] = match;
    }

    // proximity cooldown
    {
        bool cooldown = true;
        const proximity_options opt;
        for (int t = 0; t < 100; ++t) {
            gps_trace trace;
            trace.coords = coordinate_system::planar;
            const std::uint32_t users = 2 + gen() % 4;
            std::uniform_real_distribution<double> step(-15.0, 15.0);
            for (std::uint32_t u = 1; u <= users; ++u) {
                double x = 40.0 * u, y = 0.0;
                for (std::int64_t ts = gen() % 300; ts < 6 * 3600; ts += 30 + gen() % 240) {
                    trace.fixes.push_back(gps_fix{user_id{u}, ts, x, y});
                    x += step(gen);
                    y += step(gen);
                }
            }
            std::map<std::pair<user_id, user_id>, std::int64_t> last;
            for (const auto& e : extract_proximity_events(trace, opt)) {
                const auto key = std::pair{e.first, e.second};
                if (auto it = last.find(key); it != last.end())
                    cooldown &= e.timestamp - it->second >= opt.cooldown_s;
                last[key] = e.timestamp;
            }
        }
        ok["proximity cooldown"] = cooldown;
    }

    bool all = true;
    std::string detail;
    for (const auto& [name, pass] : ok) {
        all &= pass;
        detail += (detail.empty() ? "" : ", ") + name + (pass ? " ok" : " FAILED");
    }
    return {all, detail};
}

verdict trial_count_formula() {
    const auto n = required_trials(0.00015, 0.01);
    const std::string readme = slurp(OPPSHUFFLE_README);
    const bool documented = readme.find("30,699") != std::string::npos && readme.find("30,000") != std::string::npos;
    return {n == 30699 && documented,
            fmt("required_trials(0.00015, 0.01)=%llu; README notes 30,699 vs 30,000: %s",
                static_cast<unsigned long long>(n), documented ? "yes" : "no")};
}

verdict determinism(const workspace& ws) {
    std::optional<std::size_t> c;
    run_best_case_cli(ws.dir / "best-2", c);
    bool same = true;
    std::string files;
    for (const char* f : {"tensor.csv", "series.csv", "item_series.csv"}) {
        const auto a = slurp(ws.dir / "best-1" / f), b = slurp(ws.dir / "best-2" / f);
        same &= !a.empty() && a == b;
        files += fmt(" %s=%zu bytes", f, a.size());
    }
    return {same, std::string(same ? "byte-identical:" : "differ:") + files};
}

} // namespace

int main() {
    workspace ws;
    const std::vector<std::pair<std::string, std::function<verdict()>>> criteria{
        {"best-case convergence", [&] { return best_case(ws); }},
        {"intermediate-case convergence", intermediate_case},
        {"worst-case convergence", worst_case},
        {"parameter insensitivity", parameter_insensitivity},
        {"trace cohorts: random crosses later than clique", [&] { return trace_ordering(ws); }},
        {"exhaustive-enumeration equivalence", oracle_equivalence},
        {"property suites", property_suites},
        {"required trial count", trial_count_formula},
        {"determinism", [&] { return determinism(ws); }},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        verdict v;
        try {
            v = criteria[k].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failed += !v.pass;
        std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), v.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed ? 1 : 0;
}
