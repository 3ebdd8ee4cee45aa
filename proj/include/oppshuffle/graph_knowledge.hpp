#pragma once

// Node-local knowledge of the contact graph and the two stopping rules built
// on top of it: an observed-uniformity check and a centrality-calibrated
// round estimate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "shuffle_core.hpp"

namespace oppshuffle {

/// A node's partial, symmetric view of who has met whom and how often.
/// Unknown entries are std::nullopt, which is distinct from zero.
class personal_adjacency {
public:
    using weight_type = std::uint64_t;

    personal_adjacency(node_id owner, std::size_t n) : owner_(owner), n_(n), w_(n * n) {
        if (owner.value < 1 || owner.index() >= n)
            throw invalid_parameter("personal_adjacency: owner outside [1, n]");
    }

    node_id owner() const noexcept { return owner_; }
    std::size_t size() const noexcept { return n_; }

    std::optional<weight_type> at(node_id k, node_id l) const { return w_[offset(k, l)]; }

    /// Sets both (k,l) and (l,k). Diagonal entries may only be set to zero.
    void set(node_id k, node_id l, weight_type value) {
        if (k == l && value != 0)
            throw invalid_parameter("personal_adjacency: diagonal must be absent or zero");
        w_[offset(k, l)] = value;
        w_[offset(l, k)] = value;
    }

    void clear(node_id k, node_id l) {
        w_[offset(k, l)].reset();
        w_[offset(l, k)].reset();
    }

    friend bool operator==(const personal_adjacency&, const personal_adjacency&) = default;

private:
    std::size_t offset(node_id k, node_id l) const {
        if (k.value < 1 || l.value < 1 || k.index() >= n_ || l.index() >= n_)
            throw invalid_parameter("personal_adjacency: index outside [1, " + std::to_string(n_) + "]");
        return k.index() * n_ + l.index();
    }

    node_id owner_;
    std::size_t n_;
    std::vector<std::optional<weight_type>> w_;
};

/// Counts one more direct encounter between the owner and `peer`.
inline personal_adjacency record_encounter(personal_adjacency a, node_id peer) {
    if (peer == a.owner())
        throw invalid_parameter("record_encounter: a node cannot encounter itself");
    const auto current = a.at(a.owner(), peer);
    a.set(a.owner(), peer, current.value_or(0) + 1);
    return a;
}

/// Combines a_j into a_i: absent entries are filled from a_j, entries known to
/// both take the minimum. The result belongs to a_i's owner.
inline personal_adjacency merge_adjacency(personal_adjacency a_i, const personal_adjacency& a_j) {
    if (a_i.size() != a_j.size())
        throw invalid_parameter("merge_adjacency: dimension mismatch (" + std::to_string(a_i.size()) +
                                " vs " + std::to_string(a_j.size()) + ")");
    const std::size_t n = a_i.size();
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = k; l < n; ++l) {
            const node_id nk = node_id::from_index(k), nl = node_id::from_index(l);
            const auto theirs = a_j.at(nk, nl);
            if (!theirs)
                continue;
            const auto mine = a_i.at(nk, nl);
            a_i.set(nk, nl, mine ? std::min(*mine, *theirs) : *theirs);
        }
    }
    return a_i;
}

/// How a known adjacency entry is turned into a path cost.
enum class edge_cost_rule {
    hops,           // every known edge costs 1
    inverse_weight, // cost = 1 / encounter count; zero-weight entries are not edges
};

/// All-pairs path costs. Entries reached only through intermediate nodes are
/// tagged as inferred.
class distance_matrix {
public:
    enum class derivation : std::uint8_t { none, measured, inferred };

    explicit distance_matrix(std::size_t n)
        : n_(n), d_(n * n, std::numeric_limits<double>::infinity()), tag_(n * n, derivation::none) {
        for (std::size_t k = 0; k < n; ++k) {
            d_[k * n + k] = 0.0;
            tag_[k * n + k] = derivation::measured;
        }
    }

    std::size_t size() const noexcept { return n_; }

    std::optional<double> at(node_id k, node_id l) const {
        const double v = d_[offset(k, l)];
        return std::isinf(v) ? std::nullopt : std::optional<double>(v);
    }
    derivation tag(node_id k, node_id l) const { return tag_[offset(k, l)]; }

    void set(node_id k, node_id l, double v, derivation how) {
        d_[offset(k, l)] = v;
        tag_[offset(k, l)] = how;
    }

    // raw access for the closure loop; infinity marks "unreachable"
    double raw(std::size_t k, std::size_t l) const noexcept { return d_[k * n_ + l]; }
    double& raw(std::size_t k, std::size_t l) noexcept { return d_[k * n_ + l]; }
    derivation& raw_tag(std::size_t k, std::size_t l) noexcept { return tag_[k * n_ + l]; }

    friend bool operator==(const distance_matrix&, const distance_matrix&) = default;

private:
    std::size_t offset(node_id k, node_id l) const {
        if (k.value < 1 || l.value < 1 || k.index() >= n_ || l.index() >= n_)
            throw invalid_parameter("distance_matrix: index outside [1, " + std::to_string(n_) + "]");
        return k.index() * n_ + l.index();
    }

    std::size_t n_;
    std::vector<double> d_;
    std::vector<derivation> tag_;
};

/// Floyd-Warshall closure of the known edges under `rule`.
inline distance_matrix shortest_paths(const personal_adjacency& a, edge_cost_rule rule = edge_cost_rule::hops) {
    const std::size_t n = a.size();
    distance_matrix d(n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t l = 0; l < n; ++l) {
            if (k == l)
                continue;
            const auto w = a.at(node_id::from_index(k), node_id::from_index(l));
            if (!w)
                continue;
            if (rule == edge_cost_rule::hops) {
                d.raw(k, l) = 1.0;
            } else {
                if (*w == 0)
                    continue;
                d.raw(k, l) = 1.0 / static_cast<double>(*w);
            }
            d.raw_tag(k, l) = distance_matrix::derivation::measured;
        }
    }
    for (std::size_t via = 0; via < n; ++via) {
        for (std::size_t k = 0; k < n; ++k) {
            const double dk = d.raw(k, via);
            if (std::isinf(dk))
                continue;
            for (std::size_t l = 0; l < n; ++l) {
                const double candidate = dk + d.raw(via, l);
                if (candidate < d.raw(k, l)) {
                    d.raw(k, l) = candidate;
                    d.raw_tag(k, l) = distance_matrix::derivation::inferred;
                }
            }
        }
    }
    return d;
}

/// (N-1) / sum of distances from `node` to every other node.
inline double closeness_centrality(const distance_matrix& d, node_id node) {
    const std::size_t n = d.size();
    if (node.value < 1 || node.index() >= n)
        throw invalid_parameter("closeness_centrality: node outside matrix");
    if (n < 2)
        throw invalid_parameter("closeness_centrality: need at least two nodes");
    double total = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        if (l == node.index())
            continue;
        const double v = d.raw(node.index(), l);
        if (std::isinf(v))
            throw disconnected_graph("closeness_centrality: node " + std::to_string(node.value) +
                                     " cannot reach node " + std::to_string(l + 1));
        total += v;
    }
    return static_cast<double>(n - 1) / total;
}

struct centrality_report {
    std::vector<double> per_node; // indexed by node_id::index()
    double mean = 0.0;
};

inline centrality_report closeness_report(const distance_matrix& d) {
    centrality_report r;
    r.per_node.reserve(d.size());
    for (std::size_t k = 0; k < d.size(); ++k)
        r.per_node.push_back(closeness_centrality(d, node_id::from_index(k)));
    double sum = 0.0;
    for (double v : r.per_node)
        sum += v;
    r.mean = r.per_node.empty() ? 0.0 : sum / static_cast<double>(r.per_node.size());
    return r;
}

/// True when every label seen so far has been observed with frequency within
/// `epsilon` of 1/D, D being the number of distinct labels seen.
inline bool uniformity_stop_check(const std::map<item_id, std::uint64_t>& counts, double epsilon) {
    std::uint64_t total = 0;
    for (const auto& [label, c] : counts)
        total += c;
    if (total == 0)
        throw insufficient_data("uniformity_stop_check: no observations");
    std::size_t distinct = 0;
    for (const auto& [label, c] : counts)
        distinct += c > 0;
    const double target = 1.0 / static_cast<double>(distinct);
    for (const auto& [label, c] : counts) {
        if (c == 0)
            continue;
        const double freq = static_cast<double>(c) / static_cast<double>(total);
        if (std::abs(freq - target) > epsilon)
            return false;
    }
    return true;
}

/// Per-node sighting counts feeding uniformity_stop_check.
///
/// A node sights its own items once at start, then at every exchange it takes
/// part in it sights every item it held beforehand plus every item it received.
class sighting_tracker {
public:
    void observe_initial(std::span<const item_id> holding) {
        for (item_id d : holding)
            ++counts_[d];
    }

    /// `before` is the node's holding prior to the exchange.
    void observe_exchange(std::span<const item_id> before, std::span<const item_id> received) {
        for (item_id d : before)
            ++counts_[d];
        for (item_id d : received)
            ++counts_[d];
    }

    const std::map<item_id, std::uint64_t>& counts() const noexcept { return counts_; }
    bool near_uniform(double epsilon) const { return uniformity_stop_check(counts_, epsilon); }

private:
    std::map<item_id, std::uint64_t> counts_;
};

/// (mean closeness centrality, rounds to near-uniform mix) pairs.
struct calibration_point {
    double centrality = 0.0;
    std::uint64_t rounds = 0;
};

using calibration_table = std::vector<calibration_point>;

/// Shipped calibration: a fully connected 10-node cohort mixes in 4 rounds,
/// a 10-node line (reported centrality 0.3430) needs 100.
inline calibration_table default_calibration() { return {{0.3430, 100}, {1.0, 4}}; }

/// Piecewise-linear interpolation on the table, rounded up and clamped to the
/// table's end points.
inline std::uint64_t estimate_required_rounds(double mean_centrality, calibration_table table) {
    if (table.empty())
        throw invalid_parameter("estimate_required_rounds: empty calibration table");
    if (!(mean_centrality > 0.0 && mean_centrality <= 1.0))
        throw invalid_parameter("estimate_required_rounds: centrality must lie in (0, 1]");
    std::sort(table.begin(), table.end(),
              [](const calibration_point& a, const calibration_point& b) { return a.centrality < b.centrality; });
    if (mean_centrality <= table.front().centrality)
        return table.front().rounds;
    if (mean_centrality >= table.back().centrality)
        return table.back().rounds;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const auto& lo = table[i - 1];
        const auto& hi = table[i];
        if (mean_centrality > hi.centrality)
            continue;
        const double t = (mean_centrality - lo.centrality) / (hi.centrality - lo.centrality);
        const double r = static_cast<double>(lo.rounds) +
                         t * (static_cast<double>(hi.rounds) - static_cast<double>(lo.rounds));
        // guard against 4.0000000001 becoming 5
        return static_cast<std::uint64_t>(std::ceil(r - 1e-9));
    }
    return table.back().rounds;
}

/// Reads `centrality,rounds` CSV. Rows whose rounds field is "none" (a
/// scenario that never crossed the threshold) are skipped.
inline calibration_table read_calibration_csv(std::istream& in) {
    calibration_table table;
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
            if (line != "centrality,rounds")
                throw ingestion_error(line_no, "expected header 'centrality,rounds'");
            header_seen = true;
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
            throw ingestion_error(line_no, "expected 2 columns");
        const std::string c = line.substr(0, comma), r = line.substr(comma + 1);
        if (r == "none")
            continue;
        try {
            std::size_t used = 0;
            calibration_point p;
            p.centrality = std::stod(c, &used);
            if (used != c.size())
                throw std::invalid_argument(c);
            p.rounds = std::stoull(r, &used);
            if (used != r.size())
                throw std::invalid_argument(r);
            table.push_back(p);
        } catch (const std::logic_error&) {
            throw ingestion_error(line_no, "malformed number");
        }
    }
    if (!header_seen)
        throw ingestion_error(0, "calibration file is empty");
    return table;
}

} // namespace oppshuffle
