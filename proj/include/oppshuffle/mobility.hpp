#pragma once

// Where exchange opportunities come from: Markov transition matrices for the
// synthetic scenarios, proximity events extracted from GPS traces for the
// trace-driven ones.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <iterator>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "random.hpp"
#include "shuffle_core.hpp"

namespace oppshuffle {

// ---------------------------------------------------------------------------
// Markov mobility

/// Row-stochastic N x N matrix. Row i is node i's per-step distribution over
/// "exchange with j" (j != i) and "no transaction" (the diagonal).
class transition_matrix {
public:
    static constexpr double row_tolerance = 1e-9;

    transition_matrix(std::size_t n, std::vector<double> p) : n_(n), p_(std::move(p)) {
        if (n_ < 1 || p_.size() != n_ * n_)
            throw invalid_parameter("transition_matrix: expected " + std::to_string(n_ * n_) + " entries, got " +
                                    std::to_string(p_.size()));
        for (std::size_t i = 0; i < n_; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n_; ++j) {
                const double v = p_[i * n_ + j];
                if (!(v >= 0.0 && v <= 1.0))
                    throw invalid_parameter("transition_matrix: entry (" + std::to_string(i + 1) + "," +
                                            std::to_string(j + 1) + ") outside [0,1]");
                sum += v;
            }
            if (std::abs(sum - 1.0) > row_tolerance)
                throw invalid_parameter("transition_matrix: row " + std::to_string(i + 1) + " sums to " +
                                        std::to_string(sum));
        }
    }

    std::size_t size() const noexcept { return n_; }
    double operator()(node_id i, node_id j) const { return p_[i.index() * n_ + j.index()]; }
    std::span<const double> row(node_id i) const { return std::span(p_).subspan(i.index() * n_, n_); }

    /// Whether i and j can ever exchange (either direction).
    bool linked(node_id i, node_id j) const { return i != j && ((*this)(i, j) > 0.0 || (*this)(j, i) > 0.0); }

private:
    std::size_t n_;
    std::vector<double> p_;
};

/// No idling; each of the other n-1 nodes equally likely.
inline transition_matrix markov_fully_connected(std::size_t n) {
    if (n < 2)
        throw invalid_parameter("markov_fully_connected: n must be >= 2");
    std::vector<double> p(n * n, 1.0 / static_cast<double>(n - 1));
    for (std::size_t i = 0; i < n; ++i)
        p[i * n + i] = 0.0;
    return transition_matrix(n, std::move(p));
}

/// Line 1-2-...-n. End nodes idle with `edge_idle` and otherwise talk to their
/// only neighbour; inner nodes idle with `inner_idle` and split the rest
/// evenly between both neighbours.
inline transition_matrix markov_line(std::size_t n, double edge_idle, double inner_idle) {
    if (n < 2)
        throw invalid_parameter("markov_line: n must be >= 2");
    const auto valid = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!valid(edge_idle) || !valid(inner_idle))
        throw invalid_parameter("markov_line: idle probabilities must lie in [0,1]");
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        if (i == 0 || i == n - 1) {
            p[i * n + i] = edge_idle;
            p[i * n + (i == 0 ? 1 : n - 2)] = 1.0 - edge_idle;
        } else {
            p[i * n + i] = inner_idle;
            p[i * n + i - 1] = (1.0 - inner_idle) / 2.0;
            p[i * n + i + 1] = (1.0 - inner_idle) / 2.0;
        }
    }
    return transition_matrix(n, std::move(p));
}

/// One round: every node, in a uniformly random order, takes one step from
/// its row. Steps that land off the diagonal become (initiator, partner)
/// pairs, in visiting order.
inline std::vector<std::pair<node_id, node_id>> sample_round_markov(const transition_matrix& t, random_stream& rng) {
    const std::size_t n = t.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = i;
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.below(i)]);

    std::vector<std::pair<node_id, node_id>> pairs;
    for (std::size_t i : order) {
        const node_id self = node_id::from_index(i);
        const auto row = t.row(self);
        const double u = rng.unit();
        double cumulative = 0.0;
        std::size_t pick = n;
        std::size_t last_positive = i;
        for (std::size_t j = 0; j < n; ++j) {
            if (row[j] <= 0.0)
                continue;
            last_positive = j;
            cumulative += row[j];
            if (u < cumulative) {
                pick = j;
                break;
            }
        }
        if (pick == n)
            pick = last_positive; // u landed in the rounding slack of the row sum
        if (pick != i)
            pairs.emplace_back(self, node_id::from_index(pick));
    }
    return pairs;
}

/// Parses a square matrix, one comma-separated row per line. Blank lines and
/// '#' comments are skipped.
inline transition_matrix read_transition_matrix(std::istream& in) {
    std::vector<double> values;
    std::size_t width = 0, rows = 0, line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty() || line.front() == '#')
            continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t cols = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                values.push_back(std::stod(cell, &used));
                while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
                    ++used;
                if (used != cell.size())
                    throw std::invalid_argument(cell);
            } catch (const std::logic_error&) {
                throw ingestion_error(line_no, "not a number: '" + cell + "'");
            }
            ++cols;
        }
        if (rows == 0)
            width = cols;
        else if (cols != width)
            throw ingestion_error(line_no, "expected " + std::to_string(width) + " columns, got " +
                                               std::to_string(cols));
        ++rows;
    }
    if (rows == 0)
        throw ingestion_error(0, "transition matrix file is empty");
    if (rows != width)
        throw ingestion_error(0, "transition matrix is " + std::to_string(rows) + "x" + std::to_string(width) +
                                     ", expected square");
    return transition_matrix(rows, std::move(values));
}

// ---------------------------------------------------------------------------
// Trace-driven mobility

/// Identifier of a user in a GPS trace. Not necessarily dense.
struct user_id {
    std::uint32_t value = 0;
    friend constexpr auto operator<=>(user_id, user_id) = default;
};

enum class coordinate_system { geographic, planar };

struct gps_fix {
    user_id user;
    std::int64_t timestamp = 0; // Unix seconds, UTC
    double a = 0.0;             // latitude (deg) or x (m)
    double b = 0.0;             // longitude (deg) or y (m)
};

struct gps_trace {
    coordinate_system coords = coordinate_system::geographic;
    std::vector<gps_fix> fixes;
};

/// An exchange opportunity between two users. `first < second` always.
struct contact_event {
    user_id first;
    user_id second;
    std::int64_t timestamp = 0;
    std::uint32_t day = 0;

    friend constexpr auto operator<=>(const contact_event&, const contact_event&) = default;
};

inline constexpr double earth_mean_radius_m = 6371008.8;

inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * rad;
    const double dlon = (lon2 - lon1) * rad;
    const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
    return 2.0 * earth_mean_radius_m * std::asin(std::min(1.0, std::sqrt(h)));
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    return cells;
}

template <class T>
bool parse_number(const std::string& s, T& out) {
    std::istringstream is(s);
    is >> out;
    return !is.fail() && (is >> std::ws).eof();
}

inline std::string trim(std::string s) {
    const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && ws(static_cast<unsigned char>(s.back())))
        s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && ws(static_cast<unsigned char>(s[i])))
        ++i;
    return s.substr(i);
}

constexpr std::int64_t seconds_per_day = 86400;

constexpr std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    return a / b - ((a % b != 0) && ((a < 0) != (b < 0)));
}

} // namespace detail

/// Reads `user,timestamp,lat,lon` (or `user,timestamp,x,y`, optionally
/// announced by a `# coords=xy` comment). All malformed rows are reported in
/// one ingestion_error whose line() is the first of them.
inline gps_trace read_trace_csv(std::istream& in) {
    gps_trace trace;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::vector<std::size_t> bad;
    std::string first_problem;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (detail::trim(line).empty())
            continue;
        if (line.front() == '#') {
            std::string body = line.substr(1);
            body.erase(std::remove_if(body.begin(), body.end(), [](unsigned char c) { return std::isspace(c); }),
                       body.end());
            if (body == "coords=xy")
                trace.coords = coordinate_system::planar;
            else if (body == "coords=latlon")
                trace.coords = coordinate_system::geographic;
            continue;
        }
        if (!header_seen) {
            if (line == "user,timestamp,x,y")
                trace.coords = coordinate_system::planar;
            else if (line != "user,timestamp,lat,lon")
                throw ingestion_error(line_no, "expected header 'user,timestamp,lat,lon' or 'user,timestamp,x,y'");
            header_seen = true;
            continue;
        }
        const auto cells = detail::split_csv(line);
        gps_fix fix;
        std::string problem;
        if (cells.size() != 4) {
            problem = "expected 4 columns, got " + std::to_string(cells.size());
        } else if (std::int64_t u = 0; !detail::parse_number(cells[0], u) || u < 1 || u > UINT32_MAX) {
            problem = "bad user id '" + cells[0] + "'";
        } else if (!detail::parse_number(cells[1], fix.timestamp)) {
            problem = "bad timestamp '" + cells[1] + "'";
        } else if (!detail::parse_number(cells[2], fix.a) || !detail::parse_number(cells[3], fix.b) ||
                   !std::isfinite(fix.a) || !std::isfinite(fix.b)) {
            problem = "bad coordinate";
        } else {
            fix.user = user_id{static_cast<std::uint32_t>(u)};
        }
        if (!problem.empty()) {
            if (bad.empty())
                first_problem = problem;
            bad.push_back(line_no);
            continue;
        }
        trace.fixes.push_back(fix);
    }
    if (!bad.empty()) {
        std::string lines;
        for (std::size_t i = 0; i < bad.size(); ++i)
            lines += (i ? ", " : "") + std::to_string(bad[i]);
        throw ingestion_error(bad.front(), first_problem + " (malformed rows at lines " + lines + ")");
    }
    if (trace.coords == coordinate_system::geographic) {
        for (const auto& f : trace.fixes)
            if (std::abs(f.a) > 90.0 || std::abs(f.b) > 180.0)
                throw ingestion_error(0, "latitude/longitude out of range for user " + std::to_string(f.user.value));
    }
    std::stable_sort(trace.fixes.begin(), trace.fixes.end(), [](const gps_fix& x, const gps_fix& y) {
        return std::tie(x.user, x.timestamp) < std::tie(y.user, y.timestamp);
    });
    return trace;
}

struct proximity_options {
    double radius_m = 50.0;
    std::int64_t cooldown_s = 1800;
    // a user with no fix this close to the evaluation time is absent
    std::int64_t staleness_s = 600;
};

namespace detail {

struct position {
    double a, b;
};

// Linear interpolation of one user's (time-sorted) fixes, or nullopt when the
// nearest fix is more than `staleness` away.
inline std::optional<position> position_at(std::span<const gps_fix> fixes, std::int64_t t, std::int64_t staleness) {
    const auto it = std::lower_bound(fixes.begin(), fixes.end(), t,
                                     [](const gps_fix& f, std::int64_t v) { return f.timestamp < v; });
    const gps_fix* next = it != fixes.end() ? &*it : nullptr;
    const gps_fix* prev = it != fixes.begin() ? &*std::prev(it) : nullptr;
    if (next && next->timestamp == t)
        return position{next->a, next->b};
    const std::int64_t gap_prev = prev ? t - prev->timestamp : INT64_MAX;
    const std::int64_t gap_next = next ? next->timestamp - t : INT64_MAX;
    if (std::min(gap_prev, gap_next) > staleness)
        return std::nullopt;
    if (!prev)
        return position{next->a, next->b};
    if (!next)
        return position{prev->a, prev->b};
    const double w = static_cast<double>(gap_prev) / static_cast<double>(next->timestamp - prev->timestamp);
    return position{prev->a + w * (next->a - prev->a), prev->b + w * (next->b - prev->b)};
}

inline double distance_m(coordinate_system cs, position p, position q) {
    if (cs == coordinate_system::planar)
        return std::hypot(p.a - q.a, p.b - q.b);
    return haversine_m(p.a, p.b, q.a, q.b);
}

} // namespace detail

/// Proximity events for every pair of users in the trace.
///
/// Each pair is evaluated at the union of both users' fix times using
/// interpolated positions. An event fires when both are present and within
/// the radius, and the pair's previous event is at least `cooldown_s` ago.
/// Days are counted in UTC from the calendar day of the earliest fix.
inline std::vector<contact_event> extract_proximity_events(const gps_trace& trace,
                                                           const proximity_options& opt = {}) {
    std::vector<contact_event> events;
    if (trace.fixes.empty())
        return events;
    std::vector<gps_fix> fixes = trace.fixes;
    std::stable_sort(fixes.begin(), fixes.end(), [](const gps_fix& x, const gps_fix& y) {
        return std::tie(x.user, x.timestamp) < std::tie(y.user, y.timestamp);
    });
    std::int64_t t0 = fixes.front().timestamp;
    for (const auto& f : fixes)
        t0 = std::min(t0, f.timestamp);
    const std::int64_t day0 = detail::floor_div(t0, detail::seconds_per_day);

    // per-user ranges into the sorted fix list
    std::vector<std::pair<user_id, std::span<const gps_fix>>> users;
    for (std::size_t begin = 0; begin < fixes.size();) {
        std::size_t end = begin;
        while (end < fixes.size() && fixes[end].user == fixes[begin].user)
            ++end;
        users.emplace_back(fixes[begin].user, std::span<const gps_fix>(fixes).subspan(begin, end - begin));
        begin = end;
    }

    std::vector<std::int64_t> times;
    for (std::size_t x = 0; x < users.size(); ++x) {
        for (std::size_t y = x + 1; y < users.size(); ++y) {
            const auto& fa = users[x].second;
            const auto& fb = users[y].second;
            times.clear();
            for (const auto& f : fa)
                times.push_back(f.timestamp);
            for (const auto& f : fb)
                times.push_back(f.timestamp);
            std::sort(times.begin(), times.end());
            times.erase(std::unique(times.begin(), times.end()), times.end());

            std::optional<std::int64_t> last;
            for (std::int64_t t : times) {
                if (last && t - *last < opt.cooldown_s)
                    continue;
                const auto pa = detail::position_at(fa, t, opt.staleness_s);
                if (!pa)
                    continue;
                const auto pb = detail::position_at(fb, t, opt.staleness_s);
                if (!pb)
                    continue;
                if (detail::distance_m(trace.coords, *pa, *pb) > opt.radius_m)
                    continue;
                events.push_back(contact_event{
                    users[x].first, users[y].first, t,
                    static_cast<std::uint32_t>(detail::floor_div(t, detail::seconds_per_day) - day0)});
                last = t;
            }
        }
    }
    std::sort(events.begin(), events.end(), [](const contact_event& p, const contact_event& q) {
        return std::tie(p.timestamp, p.first, p.second) < std::tie(q.timestamp, q.first, q.second);
    });
    return events;
}

/// Repeats days 0..available_days-1 until `required_days` days exist. Copies
/// of day d placed at day k are shifted by (k-d) days in time. Events at or
/// beyond available_days are dropped.
inline std::vector<contact_event> cycle_days(std::span<const contact_event> events, std::uint32_t available_days,
                                             std::uint32_t required_days = 100) {
    if (available_days < 1)
        throw invalid_parameter("cycle_days: available_days must be >= 1");
    std::vector<std::vector<contact_event>> by_day(available_days);
    for (const auto& e : events)
        if (e.day < available_days)
            by_day[e.day].push_back(e);
    std::vector<contact_event> out;
    for (std::uint32_t k = 0; k < required_days; ++k) {
        const std::uint32_t src = k % available_days;
        const std::int64_t shift = static_cast<std::int64_t>(k - src) * detail::seconds_per_day;
        for (auto e : by_day[src]) {
            e.day = k;
            e.timestamp += shift;
            out.push_back(e);
        }
    }
    return out;
}

struct active_window {
    std::uint32_t start_day = 0;
    std::vector<contact_event> events; // re-indexed to days 0..window-1
};

namespace detail {

// Median of a count list (mean of the two middle values for even sizes).
inline double median_of(std::vector<std::uint64_t> v) {
    if (v.empty())
        return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    if (v.size() % 2)
        return static_cast<double>(v[h]);
    return (static_cast<double>(v[h - 1]) + static_cast<double>(v[h])) / 2.0;
}

} // namespace detail

/// Picks the `window_days` contiguous days in which the user set is most
/// active: highest median per-pair event count, then highest total, then
/// earliest start. The median runs over all pairs of `members` (all users
/// seen in `events` when empty), including pairs that never met.
/// A trace shorter than the window is returned whole, cycled to length.
inline active_window select_active_window(std::span<const contact_event> events, std::uint32_t window_days = 100,
                                          std::span<const user_id> members = {}) {
    if (window_days < 1)
        throw invalid_parameter("select_active_window: window_days must be >= 1");
    active_window result;
    if (events.empty())
        return result;
    std::uint32_t span_days = 0;
    for (const auto& e : events)
        span_days = std::max(span_days, e.day + 1);
    if (span_days < window_days) {
        result.events = cycle_days(events, span_days, window_days);
        return result;
    }

    std::vector<user_id> users(members.begin(), members.end());
    if (users.empty()) {
        for (const auto& e : events) {
            users.push_back(e.first);
            users.push_back(e.second);
        }
    }
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    const auto index_of = [&](user_id u) -> std::optional<std::size_t> {
        const auto it = std::lower_bound(users.begin(), users.end(), u);
        if (it == users.end() || *it != u)
            return std::nullopt;
        return static_cast<std::size_t>(it - users.begin());
    };
    const std::size_t nu = users.size();
    const std::size_t pair_count = nu * (nu - 1) / 2;
    const auto pair_index = [nu](std::size_t i, std::size_t j) { return i * nu - i * (i + 1) / 2 + (j - i - 1); };

    // per_day[d][p]: events of pair p on day d
    std::vector<std::vector<std::uint64_t>> per_day(span_days, std::vector<std::uint64_t>(pair_count, 0));
    for (const auto& e : events) {
        const auto i = index_of(e.first), j = index_of(e.second);
        if (!i || !j)
            continue;
        ++per_day[e.day][pair_index(std::min(*i, *j), std::max(*i, *j))];
    }

    std::vector<std::uint64_t> window(pair_count, 0);
    for (std::uint32_t d = 0; d < window_days; ++d)
        for (std::size_t p = 0; p < pair_count; ++p)
            window[p] += per_day[d][p];
    std::uint32_t best_start = 0;
    double best_median = -1.0;
    std::uint64_t best_total = 0;
    for (std::uint32_t s = 0;; ++s) {
        std::uint64_t total = 0;
        for (auto c : window)
            total += c;
        const double med = detail::median_of(window);
        if (med > best_median || (med == best_median && total > best_total)) {
            best_start = s;
            best_median = med;
            best_total = total;
        }
        if (s + window_days >= span_days)
            break;
        for (std::size_t p = 0; p < pair_count; ++p)
            window[p] = window[p] - per_day[s][p] + per_day[s + window_days][p];
    }

    result.start_day = best_start;
    for (auto e : events) {
        if (e.day < best_start || e.day >= best_start + window_days)
            continue;
        e.day -= best_start;
        result.events.push_back(e);
    }
    return result;
}

/// `user_a,user_b,timestamp,day`
inline void write_event_cache(std::ostream& out, std::span<const contact_event> events) {
    out << "user_a,user_b,timestamp,day\n";
    for (const auto& e : events)
        out << e.first.value << ',' << e.second.value << ',' << e.timestamp << ',' << e.day << '\n';
}

inline std::vector<contact_event> read_event_cache(std::istream& in) {
    std::vector<contact_event> events;
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
            if (line != "user_a,user_b,timestamp,day")
                throw ingestion_error(line_no, "expected header 'user_a,user_b,timestamp,day'");
            header_seen = true;
            continue;
        }
        const auto cells = detail::split_csv(line);
        if (cells.size() != 4)
            throw ingestion_error(line_no, "expected 4 columns, got " + std::to_string(cells.size()));
        std::int64_t a = 0, b = 0, day = 0;
        contact_event e;
        if (!detail::parse_number(cells[0], a) || !detail::parse_number(cells[1], b) ||
            !detail::parse_number(cells[2], e.timestamp) || !detail::parse_number(cells[3], day) || a < 1 ||
            b < 1 || a > UINT32_MAX || b > UINT32_MAX || day < 0 || day > UINT32_MAX)
            throw ingestion_error(line_no, "malformed event row");
        if (a == b)
            throw ingestion_error(line_no, "event pairs a user with itself");
        e.first = user_id{static_cast<std::uint32_t>(std::min(a, b))};
        e.second = user_id{static_cast<std::uint32_t>(std::max(a, b))};
        e.day = static_cast<std::uint32_t>(day);
        events.push_back(e);
    }
    if (!header_seen)
        throw ingestion_error(0, "event cache is empty");
    return events;
}

} // namespace oppshuffle
