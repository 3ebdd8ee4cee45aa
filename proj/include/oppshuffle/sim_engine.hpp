#pragma once

// Monte-Carlo trial runner, probability aggregation and the
// Kolmogorov-Smirnov convergence series.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

#include "cohort.hpp"
#include "errors.hpp"
#include "graph_knowledge.hpp"
#include "mobility.hpp"
#include "random.hpp"
#include "shuffle_core.hpp"

namespace oppshuffle {

/// Smallest n with n >= log(alpha) / log(1 - p): trials needed to observe an
/// event of probability p at least once with confidence 1 - alpha.
inline std::uint64_t required_trials(double p, double alpha) {
    if (!(p > 0.0 && p < 1.0) || !(alpha > 0.0 && alpha < 1.0))
        throw invalid_parameter("required_trials: p and alpha must lie strictly inside (0, 1)");
    return static_cast<std::uint64_t>(std::ceil(std::log(alpha) / std::log1p(-p)));
}

// ---------------------------------------------------------------------------
// Trial configuration

struct markov_mobility {
    transition_matrix matrix;
};

/// Fixed cohort; days[k] holds the exchanges of round k+1 in time order.
/// Rounds beyond the schedule have no exchanges.
struct trace_schedule {
    std::vector<std::vector<std::pair<node_id, node_id>>> days;
};

enum class cohort_mode { random_connected, clique_combined };

/// A fresh cohort per trial drawn from the contact graph, then the cohort's
/// most active window of events (one day per round).
struct sampled_trace_mobility {
    std::shared_ptr<const std::vector<contact_event>> events;
    std::shared_ptr<const contact_graph> graph;
    cohort_mode mode = cohort_mode::random_connected;
    // only used for clique_combined; computed from `graph` when empty
    std::shared_ptr<const std::vector<std::vector<user_id>>> cliques;
    bool min_fill_rule = true;
};

// Defaults to an empty schedule, i.e. no exchanges at all.
using mobility_model = std::variant<trace_schedule, markov_mobility, sampled_trace_mobility>;

struct trial_config {
    mobility_model mobility;
    std::size_t nodes = 10;          // N
    std::size_t items_per_node = 6;  // M
    std::size_t rounds = 100;        // R
    std::uint64_t seed = 0;
    std::size_t trial_count = 30000;

    void validate() const {
        if (nodes < 1 || items_per_node < 1)
            throw invalid_parameter("trial_config: nodes and items_per_node must be >= 1");
        if (rounds < 1)
            throw invalid_parameter("trial_config: rounds must be >= 1");
        if (trial_count < 1)
            throw invalid_parameter("trial_config: trial_count must be >= 1");
        if (const auto* m = std::get_if<markov_mobility>(&mobility); m && m->matrix.size() != nodes)
            throw invalid_parameter("trial_config: transition matrix is " + std::to_string(m->matrix.size()) +
                                    "x" + std::to_string(m->matrix.size()) + " but nodes=" +
                                    std::to_string(nodes));
        if (const auto* s = std::get_if<trace_schedule>(&mobility)) {
            for (const auto& day : s->days)
                for (const auto& [a, b] : day)
                    if (a.value < 1 || b.value < 1 || a.index() >= nodes || b.index() >= nodes || a == b)
                        throw invalid_parameter("trial_config: schedule pair (" + std::to_string(a.value) + "," +
                                                std::to_string(b.value) + ") invalid for " +
                                                std::to_string(nodes) + " nodes");
        }
        if (const auto* s = std::get_if<sampled_trace_mobility>(&mobility)) {
            if (!s->events || !s->graph)
                throw invalid_parameter("trial_config: trace mobility needs events and a contact graph");
        }
    }
};

/// Turns cohort-local events into a per-round schedule: members map to nodes
/// in order, day d feeds round d+1.
inline trace_schedule schedule_for_cohort(std::span<const contact_event> events, std::span<const user_id> members,
                                          std::size_t rounds) {
    trace_schedule s;
    s.days.resize(rounds);
    const auto node_of = [&](user_id u) -> std::optional<node_id> {
        const auto it = std::find(members.begin(), members.end(), u);
        if (it == members.end())
            return std::nullopt;
        return node_id::from_index(static_cast<std::size_t>(it - members.begin()));
    };
    std::vector<contact_event> sorted(events.begin(), events.end());
    std::sort(sorted.begin(), sorted.end(), [](const contact_event& p, const contact_event& q) {
        return std::tie(p.day, p.timestamp, p.first, p.second) < std::tie(q.day, q.timestamp, q.first, q.second);
    });
    for (const auto& e : sorted) {
        if (e.day >= rounds)
            continue;
        const auto a = node_of(e.first), b = node_of(e.second);
        if (a && b)
            s.days[e.day].emplace_back(*a, *b);
    }
    return s;
}

/// Mean closeness centrality with unit edge costs of the graph on which
/// exchanges may happen.
inline double mean_closeness(const transition_matrix& t) {
    personal_adjacency a(node_id{1}, t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        for (std::size_t j = i + 1; j < t.size(); ++j)
            if (t.linked(node_id::from_index(i), node_id::from_index(j)))
                a.set(node_id::from_index(i), node_id::from_index(j), 1);
    return closeness_report(shortest_paths(a)).mean;
}

inline double mean_closeness(const contact_graph& g, std::span<const user_id> members) {
    personal_adjacency a(node_id{1}, members.size());
    for (std::size_t i = 0; i < members.size(); ++i)
        for (std::size_t j = i + 1; j < members.size(); ++j)
            if (const auto w = g.weight(members[i], members[j]); w > 0)
                a.set(node_id::from_index(i), node_id::from_index(j), w);
    return closeness_report(shortest_paths(a)).mean;
}

/// What a trial did besides moving items.
struct trial_info {
    std::vector<user_id> cohort;   // empty for Markov and fixed-schedule trials
    std::uint32_t window_start = 0;
    double mean_closeness = 0.0;   // NaN when the exchange graph is disconnected
    std::uint64_t exchanges = 0;
};

namespace detail {

inline double safe_closeness(auto&& compute) {
    try {
        return compute();
    } catch (const disconnected_graph&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

} // namespace detail

/// Runs trial `trial_index`, calling `on_round(r, ledger)` for r = 0..R
/// (0 being the initial layout). Fully determined by (cfg.seed, trial_index).
template <class RoundSink>
trial_info run_trial(const trial_config& cfg, std::uint64_t trial_index, RoundSink&& on_round) {
    cfg.validate();
    const random_stream base = random_stream::for_trial(cfg.seed, trial_index);
    random_stream cohort_rng = base.split(1);
    random_stream rng = base.split(2);

    trial_info info;
    possession_ledger ledger = init_cohort(cfg.nodes, cfg.items_per_node);
    on_round(std::size_t{0}, std::as_const(ledger));

    const auto apply = [&](std::span<const std::pair<node_id, node_id>> pairs) {
        for (const auto& [a, b] : pairs)
            ledger.exchange(a, b, rng);
        info.exchanges += pairs.size();
    };

    if (const auto* m = std::get_if<markov_mobility>(&cfg.mobility)) {
        info.mean_closeness = detail::safe_closeness([&] { return mean_closeness(m->matrix); });
        for (std::size_t r = 1; r <= cfg.rounds; ++r) {
            apply(sample_round_markov(m->matrix, rng));
            on_round(r, std::as_const(ledger));
        }
        return info;
    }

    trace_schedule sampled;
    const trace_schedule* schedule = std::get_if<trace_schedule>(&cfg.mobility);
    if (const auto* s = std::get_if<sampled_trace_mobility>(&cfg.mobility)) {
        cohort c;
        if (s->mode == cohort_mode::random_connected) {
            c = random_connected_cohort(*s->graph, cfg.nodes, cohort_rng);
        } else {
            const auto cliques = s->cliques ? *s->cliques : maximal_cliques(*s->graph);
            c = combine_cliques(cliques, cfg.nodes, *s->graph, cohort_rng, s->min_fill_rule);
        }
        std::vector<contact_event> own;
        for (const auto& e : *s->events)
            if (std::binary_search(c.members.begin(), c.members.end(), e.first) &&
                std::binary_search(c.members.begin(), c.members.end(), e.second))
                own.push_back(e);
        auto window = select_active_window(own, static_cast<std::uint32_t>(cfg.rounds), c.members);
        sampled = schedule_for_cohort(window.events, c.members, cfg.rounds);
        schedule = &sampled;
        info.window_start = window.start_day;
        info.mean_closeness = detail::safe_closeness([&] { return mean_closeness(*s->graph, c.members); });
        info.cohort = std::move(c.members);
    }
    for (std::size_t r = 1; r <= cfg.rounds; ++r) {
        if (r - 1 < schedule->days.size())
            apply(schedule->days[r - 1]);
        on_round(r, std::as_const(ledger));
    }
    return info;
}

/// Holder of every item after every round; row 0 is the initial layout.
struct possession_history {
    std::size_t nodes = 0;
    std::vector<std::vector<node_id>> per_round;

    friend bool operator==(const possession_history&, const possession_history&) = default;
};

inline possession_history run_trial(const trial_config& cfg, std::uint64_t trial_index) {
    possession_history h;
    h.nodes = cfg.nodes;
    h.per_round.reserve(cfg.rounds + 1);
    run_trial(cfg, trial_index, [&](std::size_t, const possession_ledger& l) {
        h.per_round.emplace_back(l.owners().begin(), l.owners().end());
    });
    return h;
}

// ---------------------------------------------------------------------------
// Aggregation

/// p[r][d][i]: fraction of trials in which node i holds item d after round r.
class probability_tensor {
public:
    probability_tensor(std::size_t rounds, std::size_t items, std::size_t nodes)
        : rounds_(rounds), items_(items), nodes_(nodes), p_(rounds * items * nodes, 0.0) {}

    std::size_t rounds() const noexcept { return rounds_; } // including round 0
    std::size_t items() const noexcept { return items_; }
    std::size_t nodes() const noexcept { return nodes_; }

    double at(std::size_t r, item_id d, node_id i) const { return p_[offset(r, d.index()) + i.index()]; }
    double& at(std::size_t r, item_id d, node_id i) { return p_[offset(r, d.index()) + i.index()]; }

    std::span<const double> distribution(std::size_t r, item_id d) const {
        return std::span(p_).subspan(offset(r, d.index()), nodes_);
    }

private:
    std::size_t offset(std::size_t r, std::size_t d) const {
        if (r >= rounds_ || d >= items_)
            throw invalid_parameter("probability_tensor: index out of range");
        return (r * items_ + d) * nodes_;
    }

    std::size_t rounds_, items_, nodes_;
    std::vector<double> p_;
};

/// Streaming per-(round, item, node) holder counts. Merging is exact, so
/// partial accumulators combine in any order to the same result.
class probability_accumulator {
public:
    probability_accumulator(std::size_t rounds, std::size_t items, std::size_t nodes)
        : rounds_(rounds), items_(items), nodes_(nodes), counts_(rounds * items * nodes, 0) {}

    void observe(std::size_t round, std::span<const node_id> owners) {
        if (round >= rounds_ || owners.size() != items_)
            throw invalid_parameter("probability_accumulator: observation does not match dimensions");
        std::uint64_t* row = counts_.data() + round * items_ * nodes_;
        for (std::size_t d = 0; d < items_; ++d) {
            if (owners[d].value < 1 || owners[d].index() >= nodes_)
                throw invalid_parameter("probability_accumulator: holder outside cohort");
            ++row[d * nodes_ + owners[d].index()];
        }
        if (round == 0)
            ++trials_;
    }

    void add(const possession_history& h) {
        if (h.per_round.size() != rounds_ || h.nodes != nodes_)
            throw invalid_parameter("probability_accumulator: history has " + std::to_string(h.per_round.size()) +
                                    " rounds x " + std::to_string(h.nodes) + " nodes, expected " +
                                    std::to_string(rounds_) + " x " + std::to_string(nodes_));
        for (std::size_t r = 0; r < h.per_round.size(); ++r)
            observe(r, h.per_round[r]);
    }

    void merge(const probability_accumulator& other) {
        if (other.rounds_ != rounds_ || other.items_ != items_ || other.nodes_ != nodes_)
            throw invalid_parameter("probability_accumulator: merging mismatched dimensions");
        for (std::size_t k = 0; k < counts_.size(); ++k)
            counts_[k] += other.counts_[k];
        trials_ += other.trials_;
    }

    std::uint64_t trials() const noexcept { return trials_; }
    std::uint64_t count(std::size_t r, item_id d, node_id i) const {
        return counts_[(r * items_ + d.index()) * nodes_ + i.index()];
    }

    probability_tensor tensor() const {
        if (trials_ == 0)
            throw insufficient_data("probability_accumulator: no trials observed");
        probability_tensor t(rounds_, items_, nodes_);
        const double scale = 1.0 / static_cast<double>(trials_);
        for (std::size_t r = 0; r < rounds_; ++r)
            for (std::size_t d = 0; d < items_; ++d)
                for (std::size_t i = 0; i < nodes_; ++i)
                    t.at(r, item_id::from_index(d), node_id::from_index(i)) =
                        static_cast<double>(counts_[(r * items_ + d) * nodes_ + i]) * scale;
        return t;
    }

private:
    std::size_t rounds_, items_, nodes_;
    std::vector<std::uint64_t> counts_;
    std::uint64_t trials_ = 0;
};

inline probability_tensor aggregate_trials(std::span<const possession_history> histories) {
    if (histories.empty())
        throw insufficient_data("aggregate_trials: no histories");
    const auto& first = histories.front();
    const std::size_t items = first.per_round.empty() ? 0 : first.per_round.front().size();
    probability_accumulator acc(first.per_round.size(), items, first.nodes);
    for (const auto& h : histories) {
        for (const auto& row : h.per_round)
            if (row.size() != items)
                throw invalid_parameter("aggregate_trials: histories disagree on item count");
        acc.add(h);
    }
    return acc.tensor();
}

struct experiment_result {
    probability_accumulator counts;
    std::vector<trial_info> trials; // indexed by trial
};

/// Runs cfg.trial_count trials on up to `threads` worker threads (0 = all
/// cores). The result does not depend on the thread count.
inline experiment_result run_experiment(const trial_config& cfg, unsigned threads = 0) {
    cfg.validate();
    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.trial_count));
    const std::size_t items = cfg.nodes * cfg.items_per_node;

    std::vector<probability_accumulator> partial(threads, probability_accumulator(cfg.rounds + 1, items, cfg.nodes));
    std::vector<trial_info> infos(cfg.trial_count);
    std::vector<std::exception_ptr> failures(threads);

    const auto worker = [&](unsigned w) {
        try {
            const std::size_t begin = cfg.trial_count * w / threads;
            const std::size_t end = cfg.trial_count * (w + 1) / threads;
            for (std::size_t t = begin; t < end; ++t)
                infos[t] = run_trial(cfg, t, [&](std::size_t r, const possession_ledger& l) {
                    partial[w].observe(r, l.owners());
                });
        } catch (...) {
            failures[w] = std::current_exception();
        }
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back(worker, w);
        for (auto& t : pool)
            t.join();
    }
    for (const auto& f : failures)
        if (f)
            std::rethrow_exception(f);

    experiment_result result{partial.front(), std::move(infos)};
    for (unsigned w = 1; w < threads; ++w)
        result.counts.merge(partial[w]);
    return result;
}

/// Mean of the per-trial closeness values, skipping disconnected trials.
inline std::optional<double> mean_trial_closeness(std::span<const trial_info> trials) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : trials)
        if (!std::isnan(t.mean_closeness)) {
            sum += t.mean_closeness;
            ++n;
        }
    if (n == 0)
        return std::nullopt;
    return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

/// Largest gap between the CDF of `dist` (over node order) and the uniform
/// CDF k/N.
inline double ks_statistic(std::span<const double> dist) {
    if (dist.empty())
        throw invalid_parameter("ks_statistic: empty distribution");
    double sum = 0.0;
    for (double v : dist)
        sum += v;
    if (std::abs(sum - 1.0) > 1e-9)
        throw invalid_parameter("ks_statistic: distribution sums to " + std::to_string(sum));
    const double n = static_cast<double>(dist.size());
    double cumulative = 0.0, d = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        cumulative += dist[k];
        d = std::max(d, std::abs(cumulative - static_cast<double>(k + 1) / n));
    }
    return d;
}

/// max_i |p_i - 1/N|; unlike the KS statistic this does not depend on node order.
inline double max_deviation(std::span<const double> dist) {
    const double u = 1.0 / static_cast<double>(dist.size());
    double d = 0.0;
    for (double v : dist)
        d = std::max(d, std::abs(v - u));
    return d;
}

struct ks_report {
    std::size_t items = 0;
    std::vector<double> per_item;  // [r * items + d]
    std::vector<double> aggregate; // max over items per round
    std::vector<double> maxdev;    // max over items of max_deviation

    double item(std::size_t r, item_id d) const { return per_item[r * items + d.index()]; }
    std::size_t rounds() const noexcept { return aggregate.size(); }

    /// KS series of a single item across rounds.
    std::vector<double> item_series(item_id d) const {
        std::vector<double> s;
        for (std::size_t r = 0; r < rounds(); ++r)
            s.push_back(item(r, d));
        return s;
    }
};

inline ks_report ks_series(const probability_tensor& t) {
    ks_report k;
    k.items = t.items();
    k.per_item.resize(t.rounds() * t.items());
    k.aggregate.assign(t.rounds(), 0.0);
    k.maxdev.assign(t.rounds(), 0.0);
    for (std::size_t r = 0; r < t.rounds(); ++r) {
        for (std::size_t d = 0; d < t.items(); ++d) {
            const auto dist = t.distribution(r, item_id::from_index(d));
            const double v = ks_statistic(dist);
            k.per_item[r * t.items() + d] = v;
            k.aggregate[r] = std::max(k.aggregate[r], v);
            k.maxdev[r] = std::max(k.maxdev[r], max_deviation(dist));
        }
    }
    return k;
}

/// First round whose value is strictly below `threshold`.
inline std::optional<std::size_t> rounds_to_threshold(std::span<const double> series, double threshold = 0.035) {
    for (std::size_t r = 0; r < series.size(); ++r)
        if (series[r] < threshold)
            return r;
    return std::nullopt;
}

inline std::optional<std::size_t> rounds_to_threshold(const ks_report& k, double threshold = 0.035) {
    return rounds_to_threshold(k.aggregate, threshold);
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

} // namespace detail

/// `round,item,node,probability`
inline void write_tensor_csv(std::ostream& out, const probability_tensor& t) {
    out << "round,item,node,probability\n";
    for (std::size_t r = 0; r < t.rounds(); ++r)
        for (std::size_t d = 0; d < t.items(); ++d)
            for (std::size_t i = 0; i < t.nodes(); ++i)
                out << r << ',' << d + 1 << ',' << i + 1 << ','
                    << detail::fmt_double(t.at(r, item_id::from_index(d), node_id::from_index(i))) << '\n';
}

/// `round,aggregate_D,maxdev`
inline void write_series_csv(std::ostream& out, const ks_report& k) {
    out << "round,aggregate_D,maxdev\n";
    for (std::size_t r = 0; r < k.rounds(); ++r)
        out << r << ',' << detail::fmt_double(k.aggregate[r]) << ',' << detail::fmt_double(k.maxdev[r]) << '\n';
}

/// `round,item,D`
inline void write_item_series_csv(std::ostream& out, const ks_report& k) {
    out << "round,item,D\n";
    for (std::size_t r = 0; r < k.rounds(); ++r)
        for (std::size_t d = 0; d < k.items; ++d)
            out << r << ',' << d + 1 << ',' << detail::fmt_double(k.per_item[r * k.items + d]) << '\n';
}

} // namespace oppshuffle
