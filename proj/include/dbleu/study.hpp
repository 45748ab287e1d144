#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dbleu/corpus_io.hpp"
#include "dbleu/correlation.hpp"
#include "dbleu/error.hpp"
#include "dbleu/metrics.hpp"

namespace dbleu {

/// A metric configuration evaluated under one reference-selection mode.
struct MetricVariant {
    MetricConfig config;
    RefMode ref_mode;
};

/// Everything a correlation study needs, indexed densely: segments in id
/// order, systems in id order, ratings as [system][segment].
struct StudyData {
    std::vector<Segment> segments;
    std::vector<std::string> segment_ids;
    std::vector<std::string> systems;
    SystemHypotheses hypotheses;
    RatingTable ratings;
    std::vector<SystemPair> pairs;

    std::size_t system_index(std::string_view id) const {
        auto it = std::lower_bound(systems.begin(), systems.end(), id);
        if (it == systems.end() || *it != id)
            throw DataError("unknown system '" + std::string(id) + "'");
        return static_cast<std::size_t>(it - systems.begin());
    }

    /// `pair_names` lists (A, B) system ids; empty means every unordered
    /// pair of systems in id order.
    static StudyData build(std::vector<Segment> segments, SystemHypotheses hyps,
                           std::span<const SystemRatings> ratings,
                           std::span<const std::pair<std::string, std::string>> pair_names = {}) {
        StudyData d;
        std::sort(segments.begin(), segments.end(), [](const Segment &a, const Segment &b) { return a.id < b.id; });
        for (std::size_t i = 1; i < segments.size(); ++i)
            if (segments[i].id == segments[i - 1].id)
                throw DataError("duplicate segment id '" + segments[i].id + "'");
        d.segments = std::move(segments);
        for (const auto &s : d.segments)
            d.segment_ids.push_back(s.id);
        d.hypotheses = std::move(hyps);
        for (const auto &[system, set] : d.hypotheses)
            d.systems.push_back(system);

        std::set<std::string_view> known(d.segment_ids.begin(), d.segment_ids.end());
        for (const auto &sr : ratings)
            for (const auto &[seg, v] : sr.ratings)
                if (!known.contains(seg))
                    throw DataError("system '" + sr.system_id + "' has a rating for unknown segment '" + seg + "'");
        for (const auto &[system, set] : d.hypotheses)
            for (const auto &[seg, tokens] : set)
                if (!known.contains(seg))
                    throw DataError("system '" + system + "' has a hypothesis for unknown segment '" + seg + "'");

        d.ratings = RatingTable::build(d.systems, d.segment_ids, ratings);
        if (pair_names.empty()) {
            for (std::size_t a = 0; a < d.systems.size(); ++a)
                for (std::size_t b = a + 1; b < d.systems.size(); ++b)
                    d.pairs.emplace_back(a, b);
        } else {
            for (const auto &[a, b] : pair_names) {
                if (a == b)
                    throw UsageError("system pair '" + a + ":" + b + "' compares a system with itself");
                d.pairs.emplace_back(d.system_index(a), d.system_index(b));
            }
        }
        if (d.pairs.empty())
            throw UsageError("a correlation study needs at least two systems");
        return d;
    }

    /// Throws DataError unless every paired system has a hypothesis and a
    /// rating for every segment.
    void check_complete() const {
        for (std::size_t s : paired_systems()) {
            const auto &set = hypotheses.at(systems[s]);
            for (std::size_t i = 0; i < segment_ids.size(); ++i) {
                if (!set.contains(segment_ids[i]))
                    throw DataError("system '" + systems[s] + "' has no hypothesis for segment '" + segment_ids[i] +
                                    "'");
                if (std::isnan(ratings.values[s][i]))
                    throw DataError("system '" + systems[s] + "' has no rating for segment '" + segment_ids[i] + "'");
            }
        }
    }

    std::vector<std::size_t> paired_systems() const {
        std::vector<std::size_t> out;
        for (const auto &[a, b] : pairs) {
            out.push_back(a);
            out.push_back(b);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

namespace detail {

[[noreturn]] inline void missing_hypothesis(const StudyData &d, std::size_t system, std::size_t segment) {
    throw DataError("system '" + d.systems[system] + "' has no hypothesis for segment '" + d.segment_ids[segment] +
                    "'");
}

} // namespace detail

/// Scores units with `variant`. Per-segment statistics are computed once;
/// a unit's corpus-level score sums them in segment-id order, so it equals
/// scoring the unit's sub-corpus directly.
inline UnitMetric make_unit_metric(const StudyData &d, const MetricVariant &variant) {
    const MetricConfig cfg = variant.config;
    cfg.validate();
    FilteredCorpus filtered = variant.ref_mode.apply(d.segments);
    if (cfg.kind == MetricKind::dbleu && !filtered.without_positive.empty())
        throw DataError("dBLEU with ref mode '" + variant.ref_mode.label() + "': " +
                        std::to_string(filtered.without_positive.size()) +
                        " segment(s) have no positive-weight reference: " +
                        detail::id_list(filtered.without_positive));

    const auto systems = d.paired_systems();
    const std::size_t n_seg = d.segments.size();
    auto present = std::make_shared<std::vector<std::vector<char>>>(d.systems.size());

    if (cfg.kind == MetricKind::sbleu) {
        auto scores = std::make_shared<std::vector<std::vector<double>>>(d.systems.size());
        for (std::size_t s : systems) {
            const auto &set = d.hypotheses.at(d.systems[s]);
            (*scores)[s].assign(n_seg, 0.0);
            (*present)[s].assign(n_seg, 0);
            for (std::size_t i = 0; i < n_seg; ++i) {
                auto it = set.find(d.segment_ids[i]);
                if (it == set.end())
                    continue;
                (*present)[s][i] = 1;
                (*scores)[s][i] = sentence_bleu(it->second, filtered.segments[i], cfg);
            }
        }
        return [scores, present, &d](std::size_t s, std::span<const std::size_t> unit) {
            for (std::size_t i : unit)
                if (!(*present)[s][i])
                    detail::missing_hypothesis(d, s, i);
            return unit_mean((*scores)[s], unit);
        };
    }

    auto stats = std::make_shared<std::vector<std::vector<SegmentStats>>>(d.systems.size());
    for (std::size_t s : systems) {
        const auto &set = d.hypotheses.at(d.systems[s]);
        (*stats)[s].assign(n_seg, SegmentStats(cfg.max_order));
        (*present)[s].assign(n_seg, 0);
        for (std::size_t i = 0; i < n_seg; ++i) {
            auto it = set.find(d.segment_ids[i]);
            if (it == set.end())
                continue;
            (*present)[s][i] = 1;
            (*stats)[s][i] = segment_stats(it->second, filtered.segments[i], cfg);
        }
    }
    return [stats, present, cfg, &d](std::size_t s, std::span<const std::size_t> unit) {
        SegmentStats total(cfg.max_order);
        for (std::size_t i : unit) {
            if (!(*present)[s][i])
                detail::missing_hypothesis(d, s, i);
            total += (*stats)[s][i];
        }
        return report_from_stats(total, unit.size(), cfg).score;
    };
}

/// The mean human rating itself, used as a metric for sanity checks.
inline UnitMetric rating_unit_metric(const StudyData &d) {
    return [&d](std::size_t s, std::span<const std::size_t> unit) { return unit_mean(d.ratings.values[s], unit); };
}

struct StudyRow {
    MetricVariant variant;
    CorrelationSummary summary;
};

inline std::vector<Assignment> sample_study_assignments(const StudyData &d, const StudyConfig &cfg) {
    cfg.validate();
    return sample_assignments(d.segments.size(), cfg.unit_size, cfg.assignments, cfg.seed);
}

/// Evaluates every variant on the same sampled assignments.
inline std::vector<StudyRow> run_study(const StudyData &d, std::span<const MetricVariant> variants,
                                       const StudyConfig &cfg) {
    d.check_complete();
    auto assignments = sample_study_assignments(d, cfg);
    std::vector<StudyRow> rows;
    for (const auto &v : variants) {
        UnitMetric metric = make_unit_metric(d, v);
        rows.push_back({v, correlate(assignments, d.pairs, d.systems.size(), metric, d.ratings, cfg)});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepAxis { threshold, unit_size, max_n };

inline SweepAxis parse_sweep_axis(std::string_view s) {
    if (s == "threshold")
        return SweepAxis::threshold;
    if (s == "unit-size")
        return SweepAxis::unit_size;
    if (s == "max-n")
        return SweepAxis::max_n;
    throw UsageError("unknown sweep axis '" + std::string(s) + "' (expected threshold, unit-size or max-n)");
}

inline std::string_view to_string(SweepAxis a) {
    switch (a) {
    case SweepAxis::threshold:
        return "threshold";
    case SweepAxis::unit_size:
        return "unit-size";
    case SweepAxis::max_n:
        return "max-n";
    }
    return "?";
}

/// Default axis values: observed weights in descending order, or fixed grids.
inline std::vector<double> default_sweep_values(SweepAxis axis, std::span<const Segment> segments) {
    switch (axis) {
    case SweepAxis::threshold: {
        std::set<double, std::greater<>> weights;
        for (const auto &s : segments)
            for (const auto &r : s.references)
                weights.insert(r.weight);
        return {weights.begin(), weights.end()};
    }
    case SweepAxis::unit_size:
        return {1, 10, 25, 50, 100};
    case SweepAxis::max_n:
        return {1, 2, 3, 4};
    }
    return {};
}

inline void validate_sweep_values(SweepAxis axis, std::span<const double> values) {
    for (double v : values) {
        if (axis == SweepAxis::threshold) {
            if (!(v >= -1.0 && v <= 1.0))
                throw UsageError("threshold sweep value " + shortest(v) + " outside [-1, 1]");
        } else if (!(v >= 1.0) || v != std::floor(v)) {
            throw UsageError(std::string(to_string(axis)) + " sweep value " + shortest(v) +
                             " must be a positive integer");
        } else if (axis == SweepAxis::max_n && v > static_cast<double>(MetricConfig::kMaxOrderLimit)) {
            throw UsageError("max-n sweep value " + shortest(v) + " exceeds 9");
        }
    }
}

struct SweepRow {
    double value = 0.0;
    MetricVariant variant;
    CorrelationSummary summary;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<std::string> warnings;  ///< skipped (value, metric) combinations
};

/// One summary per axis value per base variant. Threshold and max-n values
/// share one set of assignments; each unit size samples its own.
/// Combinations that are undefined on the data are skipped with a warning.
inline SweepResult run_sweep(const StudyData &d, std::span<const MetricVariant> base, SweepAxis axis,
                             std::span<const double> values, const StudyConfig &cfg) {
    validate_sweep_values(axis, values);
    d.check_complete();
    SweepResult out;
    std::vector<Assignment> shared;
    if (axis != SweepAxis::unit_size)
        shared = sample_study_assignments(d, cfg);
    for (double v : values) {
        StudyConfig c = cfg;
        std::vector<Assignment> own;
        if (axis == SweepAxis::unit_size) {
            c.unit_size = static_cast<std::size_t>(v);
            if (c.unit_size > d.segments.size()) {
                out.warnings.push_back("unit size " + shortest(v) + " exceeds the corpus size; skipped");
                continue;
            }
            own = sample_study_assignments(d, c);
        }
        const auto &assignments = axis == SweepAxis::unit_size ? own : shared;
        for (const auto &b : base) {
            MetricVariant variant = b;
            if (axis == SweepAxis::threshold)
                variant.ref_mode = RefMode::at_least(v);
            else if (axis == SweepAxis::max_n)
                variant.config.max_order = static_cast<std::size_t>(v);
            try {
                UnitMetric metric = make_unit_metric(d, variant);
                out.rows.push_back(
                    {v, variant, correlate(assignments, d.pairs, d.systems.size(), metric, d.ratings, c)});
            } catch (const DegenerateError &e) {
                out.warnings.push_back(std::string(to_string(axis)) + "=" + shortest(v) + " " +
                                       variant.config.label() + ": " + e.what() + "; skipped");
            } catch (const DataError &e) {
                out.warnings.push_back(std::string(to_string(axis)) + "=" + shortest(v) + " " +
                                       variant.config.label() + ": " + e.what() + "; skipped");
            }
        }
    }
    return out;
}

} // namespace dbleu
