#pragma once

// Labeled-data bookkeeping and the pairwise half-swap exchange.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "random.hpp"

namespace oppshuffle {

/// 1-based node index inside a cohort.
struct node_id {
    std::uint32_t value = 0;

    constexpr std::size_t index() const noexcept { return value - 1; }
    static constexpr node_id from_index(std::size_t i) noexcept {
        return node_id{static_cast<std::uint32_t>(i + 1)};
    }
    friend constexpr auto operator<=>(node_id, node_id) = default;
};

/// 1-based label of a data item. Node i starts with ((i-1)M, iM].
struct item_id {
    std::uint32_t value = 0;

    constexpr std::size_t index() const noexcept { return value - 1; }
    static constexpr item_id from_index(std::size_t i) noexcept {
        return item_id{static_cast<std::uint32_t>(i + 1)};
    }
    friend constexpr auto operator<=>(item_id, item_id) = default;
};

/// C(m, k) in exact 64-bit arithmetic. Throws overflow_error rather than wrap.
inline std::uint64_t binomial(std::uint64_t m, std::uint64_t k) {
    if (k > m)
        throw invalid_parameter("binomial: k=" + std::to_string(k) + " exceeds m=" + std::to_string(m));
    k = std::min(k, m - k);
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= k; ++i) {
        // result * (m-k+i) / i stays integral at every step; split by the gcd
        // so the intermediate product is as small as possible.
        std::uint64_t num = m - k + i;
        std::uint64_t den = i;
        const std::uint64_t g1 = std::gcd(result, den);
        result /= g1;
        den /= g1;
        const std::uint64_t g2 = std::gcd(num, den);
        num /= g2;
        den /= g2;
        if (result > std::numeric_limits<std::uint64_t>::max() / num)
            throw overflow_error("binomial(" + std::to_string(m) + ", " + std::to_string(k) +
                                 ") does not fit in 64 bits");
        result = result * num / den;
    }
    return result;
}

/// Number of items to trade out of a holding of size m: the k maximizing
/// C(m, k), with the tie at odd m going to floor(m/2).
inline std::uint64_t optimal_exchange_count(std::uint64_t m) {
    if (m < 1)
        throw invalid_parameter("optimal_exchange_count: m must be >= 1");
    return m / 2;
}

/// Uniformly random subset of size floor(|holding|/2). An empty holding gives
/// an empty selection.
inline std::vector<item_id> select_half(std::span<const item_id> holding, random_stream& rng) {
    std::vector<item_id> pool(holding.begin(), holding.end());
    const std::size_t k = pool.size() / 2;
    // partial Fisher-Yates: the first k slots become a uniform k-subset
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + rng.below(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

/// Items that moved in one exchange, in selection order.
struct exchange_record {
    node_id first;
    node_id second;
    std::vector<item_id> first_to_second;
    std::vector<item_id> second_to_first;
};

/// Which node holds which item.
///
/// Holds both directions of the mapping (node -> items, item -> node). Within
/// a node, item order is an implementation detail but is deterministic, which
/// is what makes a trial reproducible from its random stream.
class possession_ledger {
public:
    possession_ledger() = default;

    std::size_t node_count() const noexcept { return holdings_.size(); }
    std::size_t items_per_node() const noexcept { return items_per_node_; }
    std::size_t item_count() const noexcept { return owner_.size(); }

    std::span<const item_id> holding(node_id n) const {
        check_node(n);
        return holdings_[n.index()];
    }

    node_id owner(item_id d) const {
        if (d.value < 1 || d.index() >= owner_.size())
            throw invalid_parameter("item " + std::to_string(d.value) + " out of range");
        return owner_[d.index()];
    }

    /// Current holder of every item, indexed by item_id::index().
    std::span<const node_id> owners() const noexcept { return owner_; }

    /// Initial holder of an item under the labeling scheme.
    node_id initial_owner(item_id d) const noexcept {
        return node_id::from_index(d.index() / items_per_node_);
    }

    /// Swaps a uniformly chosen half of each party's holding. Both selections
    /// are drawn from the pre-exchange holdings (i first, then j) and applied
    /// together.
    exchange_record exchange(node_id i, node_id j, random_stream& rng) {
        check_node(i);
        check_node(j);
        if (i == j)
            throw invalid_pair("exchange: node " + std::to_string(i.value) + " paired with itself");
        auto& hi = holdings_[i.index()];
        auto& hj = holdings_[j.index()];
        const std::size_t ki = move_half_to_front(hi, rng);
        const std::size_t kj = move_half_to_front(hj, rng);

        exchange_record rec{i, j, {hi.begin(), hi.begin() + static_cast<std::ptrdiff_t>(ki)},
                            {hj.begin(), hj.begin() + static_cast<std::ptrdiff_t>(kj)}};
        if (ki == kj) {
            std::swap_ranges(hi.begin(), hi.begin() + static_cast<std::ptrdiff_t>(ki), hj.begin());
        } else {
            hi.erase(hi.begin(), hi.begin() + static_cast<std::ptrdiff_t>(ki));
            hj.erase(hj.begin(), hj.begin() + static_cast<std::ptrdiff_t>(kj));
            hi.insert(hi.end(), rec.second_to_first.begin(), rec.second_to_first.end());
            hj.insert(hj.end(), rec.first_to_second.begin(), rec.first_to_second.end());
        }
        for (item_id d : rec.first_to_second)
            owner_[d.index()] = j;
        for (item_id d : rec.second_to_first)
            owner_[d.index()] = i;
        return rec;
    }

    /// True iff holdings partition the full item set and agree with owners().
    bool conserved() const {
        std::vector<char> seen(owner_.size(), 0);
        for (std::size_t n = 0; n < holdings_.size(); ++n) {
            for (item_id d : holdings_[n]) {
                if (d.value < 1 || d.index() >= owner_.size() || seen[d.index()])
                    return false;
                if (owner_[d.index()] != node_id::from_index(n))
                    return false;
                seen[d.index()] = 1;
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    }

private:
    friend possession_ledger init_cohort(std::size_t n, std::size_t m);

    void check_node(node_id n) const {
        if (n.value < 1 || n.index() >= holdings_.size())
            throw invalid_parameter("node " + std::to_string(n.value) + " out of range [1, " +
                                    std::to_string(holdings_.size()) + "]");
    }

    // Partial Fisher-Yates over the holding; returns the selection size.
    static std::size_t move_half_to_front(std::vector<item_id>& h, random_stream& rng) {
        const std::size_t k = h.size() / 2;
        for (std::size_t a = 0; a < k; ++a) {
            const std::size_t b = a + rng.below(h.size() - a);
            std::swap(h[a], h[b]);
        }
        return k;
    }

    std::vector<std::vector<item_id>> holdings_;
    std::vector<node_id> owner_;
    std::size_t items_per_node_ = 0;
};

/// Ledger with node i holding items (i-1)m+1 .. im.
inline possession_ledger init_cohort(std::size_t n, std::size_t m) {
    if (n < 1 || m < 1)
        throw invalid_parameter("init_cohort: need n >= 1 and m >= 1 (got n=" + std::to_string(n) +
                                ", m=" + std::to_string(m) + ")");
    if (n * m > std::numeric_limits<std::uint32_t>::max() || n * m / m != n)
        throw invalid_parameter("init_cohort: n*m too large");
    possession_ledger ledger;
    ledger.items_per_node_ = m;
    ledger.holdings_.resize(n);
    ledger.owner_.resize(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        auto& h = ledger.holdings_[i];
        h.reserve(m);
        for (std::size_t k = 0; k < m; ++k) {
            const item_id d = item_id::from_index(i * m + k);
            h.push_back(d);
            ledger.owner_[d.index()] = node_id::from_index(i);
        }
    }
    return ledger;
}

/// Free-function form of possession_ledger::exchange.
inline exchange_record exchange(possession_ledger& ledger, node_id i, node_id j, random_stream& rng) {
    return ledger.exchange(i, j, rng);
}

} // namespace oppshuffle
