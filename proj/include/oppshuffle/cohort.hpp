#pragma once

// Building experiment cohorts out of a weighted contact graph.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "mobility.hpp"
#include "random.hpp"

namespace oppshuffle {

/// Undirected graph over trace users. An edge's weight is the number of
/// proximity events between its ends over the whole trace; only edges at or
/// above the construction threshold are present.
class contact_graph {
public:
    contact_graph() = default;

    /// `nodes` must be sorted and unique.
    explicit contact_graph(std::vector<user_id> nodes)
        : nodes_(std::move(nodes)), w_(nodes_.size() * nodes_.size(), 0) {}

    std::size_t size() const noexcept { return nodes_.size(); }
    std::span<const user_id> nodes() const noexcept { return nodes_; }
    user_id node(std::size_t i) const { return nodes_.at(i); }

    std::optional<std::size_t> index_of(user_id u) const {
        const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), u);
        if (it == nodes_.end() || *it != u)
            return std::nullopt;
        return static_cast<std::size_t>(it - nodes_.begin());
    }

    std::uint64_t weight(std::size_t i, std::size_t j) const { return w_[i * size() + j]; }
    bool adjacent(std::size_t i, std::size_t j) const { return i != j && weight(i, j) > 0; }

    std::uint64_t weight(user_id a, user_id b) const {
        const auto i = index_of(a), j = index_of(b);
        return i && j ? weight(*i, *j) : 0;
    }

    void set_weight(std::size_t i, std::size_t j, std::uint64_t w) {
        if (i == j)
            throw invalid_parameter("contact_graph: self loops are not allowed");
        w_[i * size() + j] = w;
        w_[j * size() + i] = w;
    }

    /// True for nodes that have no edge left.
    bool isolated(std::size_t i) const {
        for (std::size_t j = 0; j < size(); ++j)
            if (adjacent(i, j))
                return false;
        return true;
    }

    std::size_t edge_count() const {
        std::size_t c = 0;
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j)
                c += adjacent(i, j);
        return c;
    }

    std::vector<std::size_t> neighbors(std::size_t i) const {
        std::vector<std::size_t> out;
        for (std::size_t j = 0; j < size(); ++j)
            if (adjacent(i, j))
                out.push_back(j);
        return out;
    }

    /// Connected components as sorted index lists, ordered by smallest member.
    std::vector<std::vector<std::size_t>> components() const {
        std::vector<std::vector<std::size_t>> out;
        std::vector<char> seen(size(), 0);
        for (std::size_t s = 0; s < size(); ++s) {
            if (seen[s])
                continue;
            std::vector<std::size_t> comp{s};
            seen[s] = 1;
            for (std::size_t k = 0; k < comp.size(); ++k)
                for (std::size_t v : neighbors(comp[k]))
                    if (!seen[v]) {
                        seen[v] = 1;
                        comp.push_back(v);
                    }
            std::sort(comp.begin(), comp.end());
            out.push_back(std::move(comp));
        }
        return out;
    }

    /// Whether the subgraph induced by `members` (node indices) is connected.
    bool induced_connected(std::span<const std::size_t> members) const {
        if (members.empty())
            return true;
        std::vector<char> in(size(), 0), seen(size(), 0);
        for (std::size_t m : members)
            in[m] = 1;
        std::vector<std::size_t> stack{members.front()};
        seen[members.front()] = 1;
        std::size_t reached = 1;
        while (!stack.empty()) {
            const std::size_t u = stack.back();
            stack.pop_back();
            for (std::size_t v = 0; v < size(); ++v)
                if (in[v] && !seen[v] && adjacent(u, v)) {
                    seen[v] = 1;
                    ++reached;
                    stack.push_back(v);
                }
        }
        return reached == members.size();
    }

private:
    std::vector<user_id> nodes_;
    std::vector<std::uint64_t> w_;
};

/// Sums events per pair and keeps pairs with at least `min_weight` events.
/// Every user seen in `events` is a node, including ones left isolated.
inline contact_graph build_contact_graph(std::span<const contact_event> events, std::uint64_t min_weight = 10) {
    std::vector<user_id> users;
    for (const auto& e : events) {
        users.push_back(e.first);
        users.push_back(e.second);
    }
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    contact_graph g(users);
    std::vector<std::uint64_t> counts(users.size() * users.size(), 0);
    for (const auto& e : events) {
        const std::size_t i = *g.index_of(e.first), j = *g.index_of(e.second);
        ++counts[std::min(i, j) * users.size() + std::max(i, j)];
    }
    for (std::size_t i = 0; i < users.size(); ++i)
        for (std::size_t j = i + 1; j < users.size(); ++j)
            if (const auto c = counts[i * users.size() + j]; c >= min_weight && c > 0)
                g.set_weight(i, j, c);
    return g;
}

struct hop_stats {
    std::uint32_t max_hops = 0;
    std::uint32_t median_hops = 0; // lower median over unordered pairs
    friend bool operator==(const hop_stats&, const hop_stats&) = default;
};

/// BFS hop counts inside the subgraph induced by `members`.
inline hop_stats hop_statistics(const contact_graph& g, std::span<const user_id> members) {
    std::vector<std::size_t> idx;
    for (user_id u : members) {
        const auto i = g.index_of(u);
        if (!i)
            throw invalid_parameter("hop_statistics: user " + std::to_string(u.value) + " not in graph");
        idx.push_back(*i);
    }
    const std::size_t n = idx.size();
    std::vector<std::uint32_t> dists;
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<std::int64_t> d(n, -1);
        d[s] = 0;
        std::queue<std::size_t> q;
        q.push(s);
        while (!q.empty()) {
            const std::size_t u = q.front();
            q.pop();
            for (std::size_t v = 0; v < n; ++v)
                if (d[v] < 0 && g.adjacent(idx[u], idx[v])) {
                    d[v] = d[u] + 1;
                    q.push(v);
                }
        }
        for (std::size_t t = s + 1; t < n; ++t) {
            if (d[t] < 0)
                throw disconnected_graph("hop_statistics: users " + std::to_string(members[s].value) + " and " +
                                         std::to_string(members[t].value) + " are not connected");
            dists.push_back(static_cast<std::uint32_t>(d[t]));
        }
    }
    hop_stats h;
    if (dists.empty())
        return h;
    std::sort(dists.begin(), dists.end());
    h.max_hops = dists.back();
    h.median_hops = dists[(dists.size() - 1) / 2];
    return h;
}

enum class cohort_provenance { random_connected, clique_combined };

inline const char* to_string(cohort_provenance p) {
    return p == cohort_provenance::random_connected ? "random-connected" : "clique-combined";
}

/// The users taking part in one trial. Members are sorted by user id; member
/// k becomes node k+1 in the simulation.
struct cohort {
    std::vector<user_id> members;
    cohort_provenance provenance = cohort_provenance::random_connected;
    hop_stats hops;
};

/// Grows a connected cohort from a uniformly chosen seed by repeatedly adding
/// the far end of a uniformly chosen frontier edge. Not uniform over connected
/// subsets.
inline cohort random_connected_cohort(const contact_graph& g, std::size_t n, random_stream& rng) {
    if (n < 1)
        throw invalid_parameter("random_connected_cohort: n must be >= 1");
    std::vector<std::size_t> eligible;
    for (const auto& comp : g.components())
        if (comp.size() >= n)
            eligible.insert(eligible.end(), comp.begin(), comp.end());
    if (eligible.empty())
        throw infeasible_cohort("no connected component with at least " + std::to_string(n) + " users (graph has " +
                                std::to_string(g.size()) + " users)");
    std::sort(eligible.begin(), eligible.end());

    std::vector<std::size_t> chosen{eligible[rng.below(eligible.size())]};
    std::vector<char> in(g.size(), 0);
    in[chosen.front()] = 1;
    std::vector<std::pair<std::size_t, std::size_t>> frontier;
    while (chosen.size() < n) {
        frontier.clear();
        for (std::size_t u : chosen)
            for (std::size_t v = 0; v < g.size(); ++v)
                if (!in[v] && g.adjacent(u, v))
                    frontier.emplace_back(u, v);
        // the seed's component has >= n nodes, so the frontier cannot run dry
        const std::size_t v = frontier[rng.below(frontier.size())].second;
        in[v] = 1;
        chosen.push_back(v);
    }
    cohort c;
    c.provenance = cohort_provenance::random_connected;
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t i : chosen)
        c.members.push_back(g.node(i));
    c.hops = hop_statistics(g, c.members);
    return c;
}

namespace detail {

// Bron-Kerbosch with Tomita pivoting over node indices.
inline void bron_kerbosch(const contact_graph& g, std::vector<std::size_t>& r, std::vector<std::size_t> p,
                          std::vector<std::size_t> x, std::vector<std::vector<std::size_t>>& out) {
    if (p.empty() && x.empty()) {
        auto clique = r;
        std::sort(clique.begin(), clique.end());
        out.push_back(std::move(clique));
        return;
    }
    std::size_t pivot = 0, best = 0;
    bool have_pivot = false;
    for (const auto* set : {&p, &x})
        for (std::size_t u : *set) {
            std::size_t deg = 0;
            for (std::size_t v : p)
                deg += g.adjacent(u, v);
            if (!have_pivot || deg > best) {
                pivot = u;
                best = deg;
                have_pivot = true;
            }
        }
    std::vector<std::size_t> candidates;
    for (std::size_t v : p)
        if (!g.adjacent(pivot, v))
            candidates.push_back(v);
    for (std::size_t v : candidates) {
        std::vector<std::size_t> p2, x2;
        for (std::size_t w : p)
            if (g.adjacent(v, w))
                p2.push_back(w);
        for (std::size_t w : x)
            if (g.adjacent(v, w))
                x2.push_back(w);
        r.push_back(v);
        bron_kerbosch(g, r, std::move(p2), std::move(x2), out);
        r.pop_back();
        p.erase(std::find(p.begin(), p.end(), v));
        x.push_back(v);
    }
}

} // namespace detail

/// Every maximal clique, each sorted by user id, the list sorted
/// lexicographically. Isolated users are maximal cliques of size one.
inline std::vector<std::vector<user_id>> maximal_cliques(const contact_graph& g) {
    std::vector<std::vector<std::size_t>> found;
    std::vector<std::size_t> r, p(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        p[i] = i;
    if (!p.empty())
        detail::bron_kerbosch(g, r, std::move(p), {}, found);
    std::sort(found.begin(), found.end());
    std::vector<std::vector<user_id>> out;
    out.reserve(found.size());
    for (const auto& c : found) {
        std::vector<user_id> users;
        for (std::size_t i : c)
            users.push_back(g.node(i));
        out.push_back(std::move(users));
    }
    return out;
}

inline constexpr std::size_t clique_combination_restart_cap = 10000;

/// Unions randomly drawn cliques until exactly n users are collected, then
/// starts over unless they form a connected subgraph of g.
///
/// With `min_fill_rule`, a drawn clique smaller than half of the users still
/// missing is put back and another one drawn. When the union overshoots n,
/// n of its users are kept uniformly at random.
inline cohort combine_cliques(std::span<const std::vector<user_id>> cliques, std::size_t n, const contact_graph& g,
                              random_stream& rng, bool min_fill_rule = true) {
    if (cliques.empty())
        throw invalid_parameter("combine_cliques: no cliques to draw from");
    if (n < 1)
        throw invalid_parameter("combine_cliques: n must be >= 1");
    std::vector<std::size_t> universe;
    std::size_t largest = 0;
    std::vector<std::vector<std::size_t>> as_index;
    for (const auto& c : cliques) {
        std::vector<std::size_t> idx;
        for (user_id u : c) {
            const auto i = g.index_of(u);
            if (!i)
                throw invalid_parameter("combine_cliques: user " + std::to_string(u.value) + " not in graph");
            idx.push_back(*i);
        }
        std::sort(idx.begin(), idx.end());
        idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
        universe.insert(universe.end(), idx.begin(), idx.end());
        largest = std::max(largest, idx.size());
        as_index.push_back(std::move(idx));
    }
    std::sort(universe.begin(), universe.end());
    universe.erase(std::unique(universe.begin(), universe.end()), universe.end());
    if (universe.size() < n)
        throw infeasible_cohort("cliques cover only " + std::to_string(universe.size()) + " users, need " +
                                std::to_string(n));
    if (min_fill_rule && 2 * largest < n)
        throw infeasible_cohort("largest clique has " + std::to_string(largest) +
                                " users; the minimum-fill rule needs at least half of " + std::to_string(n));

    for (std::size_t attempt = 0; attempt < clique_combination_restart_cap; ++attempt) {
        std::vector<std::size_t> users;
        while (users.size() < n) {
            const auto& cliq = as_index[rng.below(as_index.size())];
            if (min_fill_rule && 2 * cliq.size() < n - users.size())
                continue;
            std::vector<std::size_t> merged;
            std::set_union(users.begin(), users.end(), cliq.begin(), cliq.end(), std::back_inserter(merged));
            users = std::move(merged);
            if (users.size() > n) {
                for (std::size_t i = 0; i < n; ++i)
                    std::swap(users[i], users[i + rng.below(users.size() - i)]);
                users.resize(n);
                std::sort(users.begin(), users.end());
            }
        }
        if (!g.induced_connected(users))
            continue;
        cohort c;
        c.provenance = cohort_provenance::clique_combined;
        for (std::size_t i : users)
            c.members.push_back(g.node(i));
        c.hops = hop_statistics(g, c.members);
        return c;
    }
    throw infeasible_cohort("no connected combination of cliques found after " +
                            std::to_string(clique_combination_restart_cap) + " restarts");
}

/// `user_a,user_b,weight`, one row per present edge.
inline void write_graph_cache(std::ostream& out, const contact_graph& g) {
    out << "user_a,user_b,weight\n";
    for (std::size_t i = 0; i < g.size(); ++i)
        for (std::size_t j = i + 1; j < g.size(); ++j)
            if (g.adjacent(i, j))
                out << g.node(i).value << ',' << g.node(j).value << ',' << g.weight(i, j) << '\n';
}

inline contact_graph read_graph_cache(std::istream& in) {
    struct row {
        user_id a, b;
        std::uint64_t w;
    };
    std::vector<row> rows;
    std::vector<user_id> users;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line.front() == '#')
            continue;
        if (!header_seen) {
            if (line != "user_a,user_b,weight")
                throw ingestion_error(line_no, "expected header 'user_a,user_b,weight'");
            header_seen = true;
            continue;
        }
        const auto cells = detail::split_csv(line);
        std::int64_t a = 0, b = 0, w = 0;
        if (cells.size() != 3 || !detail::parse_number(cells[0], a) || !detail::parse_number(cells[1], b) ||
            !detail::parse_number(cells[2], w) || a < 1 || b < 1 || a > UINT32_MAX || b > UINT32_MAX || a == b ||
            w < 1)
            throw ingestion_error(line_no, "malformed edge row");
        rows.push_back({user_id{static_cast<std::uint32_t>(a)}, user_id{static_cast<std::uint32_t>(b)},
                        static_cast<std::uint64_t>(w)});
        users.push_back(rows.back().a);
        users.push_back(rows.back().b);
    }
    if (!header_seen)
        throw ingestion_error(0, "graph cache is empty");
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    contact_graph g(std::move(users));
    for (const auto& r : rows)
        g.set_weight(*g.index_of(r.a), *g.index_of(r.b), r.w);
    return g;
}

} // namespace oppshuffle
