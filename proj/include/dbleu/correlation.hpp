#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dbleu/error.hpp"

namespace dbleu {

/// One observation unit of a system pair: metric-score difference `m` and
/// mean-rating difference `q` (A minus B).
struct PairedObservation {
    double m = 0.0;
    double q = 0.0;
};

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct CorrelationSummary {
    double spearman_rho = 0.0;
    double kendall_tau = 0.0;
    Interval rho_ci;
    Interval tau_ci;
    std::size_t assignments = 0;             ///< assignments with a defined correlation
    std::size_t degenerate_assignments = 0;  ///< skipped: constant m or q
    std::size_t unit_size = 0;
    std::size_t observations_per_assignment = 0;
};

namespace detail {

inline void check_pairs(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw UsageError("correlation inputs differ in length");
    if (x.size() < 2)
        throw DegenerateError("correlation needs at least 2 observations");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
            throw DataError("non-finite value in correlation input");
}

inline void split(std::span<const PairedObservation> obs, std::vector<double> &m, std::vector<double> &q) {
    m.resize(obs.size());
    q.resize(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
        m[i] = obs[i].m;
        q[i] = obs[i].q;
    }
}

} // namespace detail

/// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i + 1;
        while (j < order.size() && v[order[j]] == v[order[i]])
            ++j;
        // positions i..j-1 hold ranks i+1..j
        double r = static_cast<double>(i + 1 + j) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            ranks[order[k]] = r;
        i = j;
    }
    return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    detail::check_pairs(x, y);
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw DegenerateError("correlation undefined: constant input vector");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// Spearman's rho: Pearson correlation of the fractional rank vectors.
inline double spearman_rho(std::span<const double> x, std::span<const double> y) {
    detail::check_pairs(x, y);
    auto rx = fractional_ranks(x);
    auto ry = fractional_ranks(y);
    return pearson(rx, ry);
}

inline double spearman_rho(std::span<const PairedObservation> obs) {
    std::vector<double> m, q;
    detail::split(obs, m, q);
    return spearman_rho(m, q);
}

/// Pair counts behind Kendall's tau-b.
struct KendallCounts {
    std::int64_t pairs = 0;          ///< n(n-1)/2
    std::int64_t x_ties = 0;         ///< pairs tied in x
    std::int64_t y_ties = 0;         ///< pairs tied in y
    std::int64_t joint_ties = 0;     ///< pairs tied in both
    std::int64_t concordant_minus_discordant = 0;
};

/// O(n log n) pair counting (Knight's merge-sort method).
inline KendallCounts kendall_counts(std::span<const double> x, std::span<const double> y) {
    detail::check_pairs(x, y);
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return x[a] < x[b] || (x[a] == x[b] && y[a] < y[b]);
    });

    auto tie_pairs = [](std::int64_t run) { return run * (run - 1) / 2; };

    KendallCounts c;
    c.pairs = tie_pairs(static_cast<std::int64_t>(n));
    std::int64_t run_x = 1, run_xy = 1;
    for (std::size_t i = 1; i < n; ++i) {
        if (x[idx[i]] == x[idx[i - 1]]) {
            ++run_x;
            if (y[idx[i]] == y[idx[i - 1]]) {
                ++run_xy;
            } else {
                c.joint_ties += tie_pairs(run_xy);
                run_xy = 1;
            }
        } else {
            c.x_ties += tie_pairs(run_x);
            c.joint_ties += tie_pairs(run_xy);
            run_x = run_xy = 1;
        }
    }
    c.x_ties += tie_pairs(run_x);
    c.joint_ties += tie_pairs(run_xy);

    // Count strict inversions of y along the x-sorted order.
    std::vector<double> ys(n), buf(n);
    for (std::size_t i = 0; i < n; ++i)
        ys[i] = y[idx[i]];
    std::int64_t swaps = 0;
    for (std::size_t width = 1; width < n; width *= 2) {
        for (std::size_t lo = 0; lo < n; lo += 2 * width) {
            const std::size_t mid = std::min(lo + width, n), hi = std::min(lo + 2 * width, n);
            std::size_t i = lo, j = mid, k = lo;
            while (i < mid && j < hi) {
                if (ys[j] < ys[i]) {
                    swaps += static_cast<std::int64_t>(mid - i);
                    buf[k++] = ys[j++];
                } else {
                    buf[k++] = ys[i++];
                }
            }
            while (i < mid)
                buf[k++] = ys[i++];
            while (j < hi)
                buf[k++] = ys[j++];
        }
        std::swap(ys, buf);
    }

    std::int64_t run_y = 1;
    for (std::size_t i = 1; i < n; ++i) {
        if (ys[i] == ys[i - 1]) {
            ++run_y;
        } else {
            c.y_ties += tie_pairs(run_y);
            run_y = 1;
        }
    }
    c.y_ties += tie_pairs(run_y);

    c.concordant_minus_discordant = c.pairs - c.x_ties - c.y_ties + c.joint_ties - 2 * swaps;
    return c;
}

/// tau-b from pair counts: (C - D) / sqrt((n0 - n_x)(n0 - n_y)).
inline double tau_b(const KendallCounts &c) {
    const std::int64_t dx = c.pairs - c.x_ties, dy = c.pairs - c.y_ties;
    if (dx == 0 || dy == 0)
        throw DegenerateError("Kendall's tau undefined: every pair is tied in one vector");
    const double t = static_cast<double>(c.concordant_minus_discordant) /
                     std::sqrt(static_cast<double>(dx) * static_cast<double>(dy));
    return std::clamp(t, -1.0, 1.0);
}

inline double kendall_tau(std::span<const double> x, std::span<const double> y) {
    return tau_b(kendall_counts(x, y));
}

inline double kendall_tau(std::span<const PairedObservation> obs) {
    std::vector<double> m, q;
    detail::split(obs, m, q);
    return kendall_tau(m, q);
}

// ---------------------------------------------------------------------------
// Seeded sampling

/// splitmix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Independent RNG stream seed for (seed, stream, index). Streams are
/// distinguished so sampling and bootstrap never share random numbers.
enum class Stream : std::uint64_t { assignment = 1, bootstrap = 2, synthetic = 3 };

inline std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return mix64(mix64(mix64(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

/// Unbiased integer in [0, bound). Spelled out instead of using
/// std::uniform_int_distribution so draws are identical across standard
/// libraries.
inline std::uint64_t uniform_below(std::mt19937_64 &rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % bound;
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform_unit(std::mt19937_64 &rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <class T>
void shuffle(std::vector<T> &v, std::mt19937_64 &rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[uniform_below(rng, i)]);
}

/// Indices of the segments in one observation unit, ascending.
using Unit = std::vector<std::size_t>;
/// One random partition of the test set into disjoint units.
using Assignment = std::vector<Unit>;

/// K random partitions of {0..item_count-1} into floor(I/M) units of exactly
/// M items; leftovers are dropped. Assignment k depends only on (seed, k).
inline std::vector<Assignment> sample_assignments(std::size_t item_count, std::size_t unit_size,
                                                  std::size_t count, std::uint64_t seed) {
    if (unit_size == 0)
        throw UsageError("unit size must be at least 1");
    if (unit_size > item_count)
        throw UsageError("unit size " + std::to_string(unit_size) + " exceeds the " + std::to_string(item_count) +
                         " available segments");
    std::vector<Assignment> out(count);
    const std::size_t units = item_count / unit_size;
    for (std::size_t k = 0; k < count; ++k) {
        std::mt19937_64 rng(stream_seed(seed, Stream::assignment, k));
        std::vector<std::size_t> perm(item_count);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        shuffle(perm, rng);
        Assignment &a = out[k];
        a.resize(units);
        for (std::size_t u = 0; u < units; ++u) {
            a[u].assign(perm.begin() + static_cast<std::ptrdiff_t>(u * unit_size),
                        perm.begin() + static_cast<std::ptrdiff_t>((u + 1) * unit_size));
            std::sort(a[u].begin(), a[u].end());
        }
    }
    return out;
}

/// Same partitions expressed as segment ids.
inline std::vector<std::vector<std::vector<std::string>>>
sample_assignments(std::span<const std::string> ids, std::size_t unit_size, std::size_t count, std::uint64_t seed) {
    auto idx = sample_assignments(ids.size(), unit_size, count, seed);
    std::vector<std::vector<std::vector<std::string>>> out(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k)
        for (const auto &unit : idx[k]) {
            auto &u = out[k].emplace_back();
            for (std::size_t i : unit)
                u.push_back(ids[i]);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Observations

/// Score of one system on one unit of segment indices.
using UnitMetric = std::function<double(std::size_t system, std::span<const std::size_t> unit)>;

/// Ratings of one system, segment id -> mean rating.
struct SystemRatings {
    std::string system_id;
    std::map<std::string, double> ratings;
};

/// Dense ratings, [system][segment]; NaN marks a missing rating.
struct RatingTable {
    std::vector<std::vector<double>> values;

    static RatingTable build(std::span<const std::string> systems, std::span<const std::string> segment_ids,
                             std::span<const SystemRatings> ratings) {
        std::map<std::string_view, const SystemRatings *> by_system;
        for (const auto &r : ratings)
            by_system.emplace(r.system_id, &r);
        RatingTable t;
        t.values.assign(systems.size(),
                        std::vector<double>(segment_ids.size(), std::numeric_limits<double>::quiet_NaN()));
        for (std::size_t s = 0; s < systems.size(); ++s) {
            auto it = by_system.find(systems[s]);
            if (it == by_system.end())
                continue;
            for (std::size_t i = 0; i < segment_ids.size(); ++i) {
                auto r = it->second->ratings.find(segment_ids[i]);
                if (r != it->second->ratings.end())
                    t.values[s][i] = r->second;
            }
        }
        return t;
    }
};

/// Macro average of a per-segment table over a unit; also the rating mean.
inline double unit_mean(std::span<const double> per_segment, std::span<const std::size_t> unit) {
    double sum = 0.0;
    for (std::size_t i : unit)
        sum += per_segment[i];
    return sum / static_cast<double>(unit.size());
}

/// Per-unit values of one assignment, [system][unit].
using UnitScores = std::vector<std::vector<double>>;

inline UnitScores score_units(const Assignment &a, std::size_t systems, const UnitMetric &metric,
                              std::span<const std::size_t> needed) {
    UnitScores out(systems);
    for (std::size_t s : needed) {
        out[s].resize(a.size());
        for (std::size_t u = 0; u < a.size(); ++u)
            out[s][u] = metric(s, a[u]);
    }
    return out;
}

inline UnitScores rate_units(const Assignment &a, const RatingTable &ratings, std::span<const std::size_t> needed,
                             std::span<const std::string> segment_ids = {}) {
    UnitScores out(ratings.values.size());
    for (std::size_t s : needed) {
        out[s].resize(a.size());
        for (std::size_t u = 0; u < a.size(); ++u) {
            for (std::size_t i : a[u])
                if (std::isnan(ratings.values[s][i]))
                    throw DataError("missing rating for segment '" +
                                    (segment_ids.empty() ? std::to_string(i) : segment_ids[i]) + "'");
            out[s][u] = unit_mean(ratings.values[s], a[u]);
        }
    }
    return out;
}

using SystemPair = std::pair<std::size_t, std::size_t>;

/// One observation per unit: metric and rating differences, A minus B.
inline std::vector<PairedObservation> build_observations(SystemPair pair, const UnitScores &metric,
                                                         const UnitScores &ratings) {
    const auto &ma = metric.at(pair.first), &mb = metric.at(pair.second);
    const auto &qa = ratings.at(pair.first), &qb = ratings.at(pair.second);
    if (ma.size() != mb.size() || ma.size() != qa.size() || qa.size() != qb.size())
        throw DataError("unit scores missing for a system of the pair");
    std::vector<PairedObservation> obs(ma.size());
    for (std::size_t u = 0; u < ma.size(); ++u)
        obs[u] = {ma[u] - mb[u], qa[u] - qb[u]};
    return obs;
}

// ---------------------------------------------------------------------------
// Study

struct StudyConfig {
    std::size_t unit_size = 100;
    std::size_t assignments = 1000;
    std::size_t bootstrap = 1000;  ///< total resamples pooled across assignments; 0 disables CIs
    std::uint64_t seed = 0;
    unsigned threads = 1;

    void validate() const {
        if (unit_size == 0)
            throw UsageError("unit size must be at least 1");
        if (assignments == 0)
            throw UsageError("assignment count must be at least 1");
        if (threads == 0)
            throw UsageError("thread count must be at least 1");
    }
};

/// Type-7 (linear interpolation) quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty())
        throw DegenerateError("quantile of an empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace detail {

struct AssignmentResult {
    bool defined = false;
    double rho = 0.0;
    double tau = 0.0;
    std::size_t observations = 0;
    std::vector<double> boot_rho;
    std::vector<double> boot_tau;
};

inline AssignmentResult evaluate_assignment(const Assignment &a, std::size_t k, std::span<const SystemPair> pairs,
                                            std::size_t systems, const UnitMetric &metric,
                                            const RatingTable &ratings, const StudyConfig &cfg,
                                            std::span<const std::size_t> needed) {
    AssignmentResult r;
    UnitScores ms = score_units(a, systems, metric, needed);
    UnitScores qs = rate_units(a, ratings, needed);
    std::vector<PairedObservation> pooled;
    for (const auto &p : pairs) {
        auto obs = build_observations(p, ms, qs);
        pooled.insert(pooled.end(), obs.begin(), obs.end());
    }
    r.observations = pooled.size();
    std::vector<double> m, q;
    detail::split(pooled, m, q);
    try {
        r.rho = spearman_rho(m, q);
        r.tau = kendall_tau(m, q);
        r.defined = true;
    } catch (const DegenerateError &) {
        return r;
    }

    if (cfg.bootstrap == 0)
        return r;
    const std::size_t reps = (cfg.bootstrap + cfg.assignments - 1) / cfg.assignments;
    std::mt19937_64 rng(stream_seed(cfg.seed, Stream::bootstrap, k));
    std::vector<double> bm(m.size()), bq(q.size());
    for (std::size_t b = 0; b < reps; ++b) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            std::size_t j = uniform_below(rng, m.size());
            bm[i] = m[j];
            bq[i] = q[j];
        }
        try {
            double rho = spearman_rho(bm, bq);
            double tau = kendall_tau(bm, bq);
            r.boot_rho.push_back(rho);
            r.boot_tau.push_back(tau);
        } catch (const DegenerateError &) {
        }
    }
    return r;
}

inline Interval percentile_interval(std::vector<double> values, double point) {
    if (values.empty())
        return {point, point};
    std::sort(values.begin(), values.end());
    Interval ci{quantile_sorted(values, 0.025), quantile_sorted(values, 0.975)};
    ci.lo = std::min(ci.lo, point);
    ci.hi = std::max(ci.hi, point);
    return ci;
}

} // namespace detail

/// Mean Spearman/Kendall over the given assignments, pooling observations of
/// all pairs within an assignment, with a 95% percentile bootstrap interval.
/// Results do not depend on `cfg.threads`.
inline CorrelationSummary correlate(std::span<const Assignment> assignments, std::span<const SystemPair> pairs,
                                    std::size_t systems, const UnitMetric &metric, const RatingTable &ratings,
                                    const StudyConfig &cfg) {
    cfg.validate();
    if (pairs.empty())
        throw UsageError("a correlation study needs at least one system pair");
    if (assignments.empty())
        throw UsageError("a correlation study needs at least one assignment");
    std::vector<std::size_t> needed;
    for (const auto &p : pairs) {
        if (p.first >= systems || p.second >= systems)
            throw UsageError("system pair refers to an unknown system");
        needed.push_back(p.first);
        needed.push_back(p.second);
    }
    std::sort(needed.begin(), needed.end());
    needed.erase(std::unique(needed.begin(), needed.end()), needed.end());

    StudyConfig local = cfg;
    local.assignments = assignments.size();
    std::vector<detail::AssignmentResult> results(assignments.size());
    const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, static_cast<unsigned>(assignments.size())));
    auto work = [&](unsigned t, std::exception_ptr &err) {
        try {
            for (std::size_t k = t; k < assignments.size(); k += threads)
                results[k] = detail::evaluate_assignment(assignments[k], k, pairs, systems, metric, ratings, local,
                                                         needed);
        } catch (...) {
            err = std::current_exception();
        }
    };
    std::vector<std::exception_ptr> errors(threads);
    if (threads == 1) {
        work(0, errors[0]);
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t)
            pool.emplace_back(work, t, std::ref(errors[t]));
        for (auto &th : pool)
            th.join();
    }
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);

    CorrelationSummary s;
    s.unit_size = assignments.front().empty() ? 0 : assignments.front().front().size();
    std::vector<double> boot_rho, boot_tau;
    double rho_sum = 0.0, tau_sum = 0.0;
    for (const auto &r : results) {
        s.observations_per_assignment = r.observations;
        if (!r.defined) {
            ++s.degenerate_assignments;
            continue;
        }
        ++s.assignments;
        rho_sum += r.rho;
        tau_sum += r.tau;
        boot_rho.insert(boot_rho.end(), r.boot_rho.begin(), r.boot_rho.end());
        boot_tau.insert(boot_tau.end(), r.boot_tau.begin(), r.boot_tau.end());
    }
    if (s.assignments == 0)
        throw DegenerateError("correlation undefined on every sampled assignment");
    s.spearman_rho = rho_sum / static_cast<double>(s.assignments);
    s.kendall_tau = tau_sum / static_cast<double>(s.assignments);
    s.rho_ci = detail::percentile_interval(std::move(boot_rho), s.spearman_rho);
    s.tau_ci = detail::percentile_interval(std::move(boot_tau), s.kendall_tau);
    return s;
}

} // namespace dbleu
