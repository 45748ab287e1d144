#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdlib>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dbleu/error.hpp"
#include "dbleu/format.hpp"
#include "dbleu/text.hpp"

namespace dbleu {

struct WeightedReference {
    std::string ref_id;
    TokenSequence tokens;
    double weight = 1.0;
    bool is_original = false;
};

struct Segment {
    std::string id;
    std::vector<WeightedReference> references;

    /// -infinity when the segment has no references.
    double max_weight() const {
        double m = -std::numeric_limits<double>::infinity();
        for (const auto &r : references)
            m = std::max(m, r.weight);
        return m;
    }

    bool dbleu_eligible() const { return max_weight() > 0.0; }
};

/// Hypotheses of one system keyed by segment id. The ordered map fixes the
/// summation order of every corpus-level reduction.
using HypothesisSet = std::map<std::string, TokenSequence>;

enum class MetricKind { bleu, dbleu, sbleu };

/// `add_one` smooths numerator and denominator of p_n for n >= 2 only.
enum class Smoothing { none, add_one };

inline std::string_view to_string(MetricKind k) {
    switch (k) {
    case MetricKind::bleu:
        return "bleu";
    case MetricKind::dbleu:
        return "dbleu";
    case MetricKind::sbleu:
        return "sbleu";
    }
    return "?";
}

inline std::string_view to_string(Smoothing s) { return s == Smoothing::none ? "none" : "add-one"; }

inline MetricKind parse_metric_kind(std::string_view s) {
    if (s == "bleu")
        return MetricKind::bleu;
    if (s == "dbleu")
        return MetricKind::dbleu;
    if (s == "sbleu")
        return MetricKind::sbleu;
    throw UsageError("unknown metric '" + std::string(s) + "' (expected bleu, dbleu or sbleu)");
}

inline Smoothing parse_smoothing(std::string_view s) {
    if (s == "none")
        return Smoothing::none;
    if (s == "add-one")
        return Smoothing::add_one;
    throw UsageError("unknown smoothing '" + std::string(s) + "' (expected none or add-one)");
}

struct MetricConfig {
    static constexpr std::size_t kMaxOrderLimit = 9;

    std::size_t max_order = 2;
    MetricKind kind = MetricKind::bleu;
    Smoothing smoothing = Smoothing::none;
    bool normalize = false;

    static MetricConfig defaults_for(MetricKind kind, std::size_t max_order = 2) {
        MetricConfig cfg;
        cfg.kind = kind;
        cfg.max_order = max_order;
        cfg.smoothing = kind == MetricKind::sbleu ? Smoothing::add_one : Smoothing::none;
        return cfg;
    }

    void validate() const {
        if (max_order < 1 || max_order > kMaxOrderLimit)
            throw UsageError("max n-gram order must be in [1, 9], got " + std::to_string(max_order));
    }

    /// e.g. "dBLEU-2".
    std::string label() const {
        std::string name = kind == MetricKind::bleu ? "BLEU" : kind == MetricKind::dbleu ? "dBLEU" : "sBLEU";
        return name + "-" + std::to_string(max_order);
    }
};

/// Additive sufficient statistics of one hypothesis against its references.
/// `matched[n-1]` and `candidates[n-1]` are the numerator and denominator
/// terms of p_n; for ΔBLEU they are weight-scaled.
struct SegmentStats {
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;
    std::vector<double> matched;
    std::vector<double> candidates;

    explicit SegmentStats(std::size_t max_order = 0) : matched(max_order, 0.0), candidates(max_order, 0.0) {}

    SegmentStats &operator+=(const SegmentStats &o) {
        hyp_length += o.hyp_length;
        ref_length += o.ref_length;
        for (std::size_t n = 0; n < matched.size(); ++n) {
            matched[n] += o.matched[n];
            candidates[n] += o.candidates[n];
        }
        return *this;
    }
};

struct MetricReport {
    MetricConfig config;
    double score = 0.0;
    std::vector<double> precisions;
    double brevity_penalty = 1.0;
    std::size_t hyp_length = 0;
    std::size_t ref_length = 0;
    std::size_t segments_scored = 0;
    /// 1-based orders whose precision was <= 0, forcing the score to 0.
    std::vector<std::size_t> nonpositive_orders;
};

/// Penalizes hypotheses shorter than the reference: 1 if hyp >= ref, else
/// exp(1 - ref/hyp).
inline double brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
    if (hyp_len == 0 || ref_len == 0)
        throw UsageError("brevity penalty needs nonzero hypothesis and reference lengths");
    if (hyp_len >= ref_len)
        return 1.0;
    return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

/// Reference length closest to `hyp_len`; ties go to the shorter reference.
inline std::size_t closest_ref_length(std::size_t hyp_len, std::span<const std::size_t> ref_lens) {
    if (ref_lens.empty())
        throw UsageError("closest_ref_length needs at least one reference");
    std::size_t best = ref_lens[0];
    auto dist = [hyp_len](std::size_t len) { return len > hyp_len ? len - hyp_len : hyp_len - len; };
    for (std::size_t len : ref_lens.subspan(1)) {
        if (dist(len) < dist(best) || (dist(len) == dist(best) && len < best))
            best = len;
    }
    return best;
}

namespace detail {

inline std::size_t segment_ref_length(std::size_t hyp_len, const Segment &seg) {
    if (seg.references.empty())
        return 0;
    std::vector<std::size_t> lens;
    lens.reserve(seg.references.size());
    for (const auto &r : seg.references)
        lens.push_back(r.tokens.length());
    return closest_ref_length(hyp_len, lens);
}

// Corpus brevity penalty, total over degenerate totals: an empty hypothesis
// corpus gets 0 against a nonempty reference side.
inline double corpus_brevity_penalty(std::size_t hyp_len, std::size_t ref_len) {
    if (hyp_len >= ref_len)
        return 1.0;
    if (hyp_len == 0)
        return 0.0;
    return brevity_penalty(hyp_len, ref_len);
}

} // namespace detail

/// IBM BLEU statistics: per distinct n-gram type of `hyp`, the count clipped
/// by the best single reference. Reference weights are ignored.
inline SegmentStats bleu_segment_stats(const TokenSequence &hyp, const Segment &seg, std::size_t max_order) {
    SegmentStats st(max_order);
    st.hyp_length = hyp.length();
    st.ref_length = detail::segment_ref_length(hyp.length(), seg);
    for (std::size_t n = 1; n <= max_order; ++n) {
        NGramCounts h = extract_ngrams(hyp, n);
        if (h.counts.empty())
            continue;
        std::vector<NGramCounts> refs;
        refs.reserve(seg.references.size());
        for (const auto &r : seg.references)
            refs.push_back(extract_ngrams(r.tokens, n));
        double matched = 0.0;
        double candidates = 0.0;
        for (const auto &[g, count] : h.counts) {
            std::size_t best = 0;
            for (const auto &r : refs)
                best = std::max(best, clipped_count(g, h, r));
            matched += static_cast<double>(best);
            candidates += static_cast<double>(count);
        }
        st.matched[n - 1] = matched;
        st.candidates[n - 1] = candidates;
    }
    return st;
}

/// ΔBLEU statistics. Each n-gram match is credited with the largest
/// w·clipped_count over references containing it (0 if none does); the
/// candidate term is (max_j w)·#g(hyp). Requires a positive-weight reference.
inline SegmentStats dbleu_segment_stats(const TokenSequence &hyp, const Segment &seg, std::size_t max_order) {
    if (!seg.dbleu_eligible())
        throw DataError("segment '" + seg.id + "' has no reference with positive weight; dBLEU is undefined");
    const double top = seg.max_weight();
    SegmentStats st(max_order);
    st.hyp_length = hyp.length();
    st.ref_length = detail::segment_ref_length(hyp.length(), seg);
    for (std::size_t n = 1; n <= max_order; ++n) {
        NGramCounts h = extract_ngrams(hyp, n);
        if (h.counts.empty())
            continue;
        std::vector<NGramCounts> refs;
        refs.reserve(seg.references.size());
        for (const auto &r : seg.references)
            refs.push_back(extract_ngrams(r.tokens, n));
        double matched = 0.0;
        double candidates = 0.0;
        for (const auto &[g, count] : h.counts) {
            bool found = false;
            double best = 0.0;
            for (std::size_t j = 0; j < refs.size(); ++j) {
                std::size_t c = clipped_count(g, h, refs[j]);
                if (c == 0)
                    continue;
                double v = seg.references[j].weight * static_cast<double>(c);
                if (!found || v > best)
                    best = v;
                found = true;
            }
            matched += best;
            candidates += top * static_cast<double>(count);
        }
        st.matched[n - 1] = matched;
        st.candidates[n - 1] = candidates;
    }
    return st;
}

/// Statistics for one segment under `cfg.kind` (sBLEU uses the BLEU counts).
inline SegmentStats segment_stats(const TokenSequence &hyp, const Segment &seg, const MetricConfig &cfg) {
    return cfg.kind == MetricKind::dbleu ? dbleu_segment_stats(hyp, seg, cfg.max_order)
                                         : bleu_segment_stats(hyp, seg, cfg.max_order);
}

/// BP · exp(Σ_n (1/N) log p_n) from accumulated statistics.
inline MetricReport report_from_stats(const SegmentStats &totals, std::size_t segments, const MetricConfig &cfg) {
    MetricReport rep;
    rep.config = cfg;
    rep.hyp_length = totals.hyp_length;
    rep.ref_length = totals.ref_length;
    rep.segments_scored = segments;
    rep.brevity_penalty = detail::corpus_brevity_penalty(totals.hyp_length, totals.ref_length);

    const std::size_t order = totals.matched.size();
    double log_sum = 0.0;
    for (std::size_t n = 1; n <= order; ++n) {
        double num = totals.matched[n - 1];
        double den = totals.candidates[n - 1];
        if (cfg.smoothing == Smoothing::add_one && n >= 2) {
            num += 1.0;
            den += 1.0;
        }
        double p = den > 0.0 ? num / den : 0.0;
        rep.precisions.push_back(p);
        if (p <= 0.0)
            rep.nonpositive_orders.push_back(n);
        else
            log_sum += std::log(p);
    }
    if (rep.nonpositive_orders.empty() && rep.brevity_penalty > 0.0 && order > 0)
        rep.score = rep.brevity_penalty * std::exp(log_sum / static_cast<double>(order));
    return rep;
}

namespace detail {

inline std::map<std::string_view, const Segment *> index_segments(std::span<const Segment> segments) {
    std::map<std::string_view, const Segment *> index;
    for (const auto &s : segments) {
        if (!index.emplace(s.id, &s).second)
            throw DataError("duplicate segment id '" + s.id + "'");
    }
    return index;
}

inline const Segment &lookup(const std::map<std::string_view, const Segment *> &index, const std::string &id) {
    auto it = index.find(id);
    if (it == index.end())
        throw DataError("hypothesis for unknown segment id '" + id + "'");
    return *it->second;
}

inline MetricReport corpus_score(const HypothesisSet &hyps, std::span<const Segment> segments, MetricConfig cfg,
                                 MetricKind kind) {
    cfg.validate();
    cfg.kind = kind;
    if (hyps.empty())
        throw DataError("empty hypothesis set");
    auto index = index_segments(segments);
    SegmentStats totals(cfg.max_order);
    for (const auto &[id, hyp] : hyps)
        totals += segment_stats(hyp, lookup(index, id), cfg);
    return report_from_stats(totals, hyps.size(), cfg);
}

} // namespace detail

/// Corpus-level IBM BLEU; reference weights are ignored.
inline MetricReport corpus_bleu(const HypothesisSet &hyps, std::span<const Segment> segments,
                                const MetricConfig &cfg) {
    return detail::corpus_score(hyps, segments, cfg, MetricKind::bleu);
}

/// Corpus-level ΔBLEU. Throws DataError naming the first segment without a
/// positive-weight reference.
inline MetricReport corpus_dbleu(const HypothesisSet &hyps, std::span<const Segment> segments,
                                 const MetricConfig &cfg) {
    return detail::corpus_score(hyps, segments, cfg, MetricKind::dbleu);
}

inline MetricReport sentence_report(const TokenSequence &hyp, const Segment &seg, const MetricConfig &cfg) {
    cfg.validate();
    MetricConfig c = cfg;
    c.kind = MetricKind::sbleu;
    MetricReport rep = report_from_stats(bleu_segment_stats(hyp, seg, c.max_order), 1, c);
    if (hyp.empty())
        rep.score = 0.0;
    return rep;
}

/// Smoothed single-sentence BLEU; an empty hypothesis scores 0.
inline double sentence_bleu(const TokenSequence &hyp, const Segment &seg, const MetricConfig &cfg) {
    return sentence_report(hyp, seg, cfg).score;
}

/// Arithmetic mean of sentence_bleu over the hypotheses. Precisions and BP
/// are unweighted means of the per-sentence values; lengths are totals.
inline MetricReport macro_sbleu(const HypothesisSet &hyps, std::span<const Segment> segments,
                                const MetricConfig &cfg) {
    cfg.validate();
    if (hyps.empty())
        throw DataError("empty hypothesis set");
    auto index = detail::index_segments(segments);
    MetricReport rep;
    rep.config = cfg;
    rep.config.kind = MetricKind::sbleu;
    rep.precisions.assign(cfg.max_order, 0.0);
    rep.brevity_penalty = 0.0;
    for (const auto &[id, hyp] : hyps) {
        MetricReport s = sentence_report(hyp, detail::lookup(index, id), cfg);
        rep.score += s.score;
        rep.brevity_penalty += s.brevity_penalty;
        for (std::size_t n = 0; n < cfg.max_order; ++n)
            rep.precisions[n] += s.precisions[n];
        rep.hyp_length += s.hyp_length;
        rep.ref_length += s.ref_length;
    }
    const double count = static_cast<double>(hyps.size());
    rep.score /= count;
    rep.brevity_penalty /= count;
    for (auto &p : rep.precisions)
        p /= count;
    rep.segments_scored = hyps.size();
    return rep;
}

/// Dispatches on `cfg.kind`.
inline MetricReport score_corpus(const HypothesisSet &hyps, std::span<const Segment> segments,
                                 const MetricConfig &cfg) {
    switch (cfg.kind) {
    case MetricKind::bleu:
        return corpus_bleu(hyps, segments, cfg);
    case MetricKind::dbleu:
        return corpus_dbleu(hyps, segments, cfg);
    case MetricKind::sbleu:
        return macro_sbleu(hyps, segments, cfg);
    }
    throw UsageError("unknown metric kind");
}

/// Segments after a reference filter, plus ids of segments left without a
/// positive-weight reference (kept; they only fail under ΔBLEU).
struct FilteredCorpus {
    std::vector<Segment> segments;
    std::vector<std::string> without_positive;
};

namespace detail {

template <class Keep>
FilteredCorpus filter_segments(std::span<const Segment> segments, Keep keep) {
    FilteredCorpus out;
    out.segments.reserve(segments.size());
    for (const auto &s : segments) {
        Segment f{s.id, {}};
        for (const auto &r : s.references)
            if (keep(r))
                f.references.push_back(r);
        if (!f.dbleu_eligible())
            out.without_positive.push_back(f.id);
        out.segments.push_back(std::move(f));
    }
    return out;
}

} // namespace detail

/// Keeps references with weight >= threshold; threshold must lie in [-1, 1].
inline FilteredCorpus filter_references(std::span<const Segment> segments, double threshold) {
    if (!(threshold >= -1.0 && threshold <= 1.0))
        throw UsageError("reference weight threshold must be in [-1, 1], got " + shortest(threshold));
    return detail::filter_segments(segments, [threshold](const WeightedReference &r) { return r.weight >= threshold; });
}

/// Keeps only the original (seed) reference of each segment.
inline FilteredCorpus keep_original_references(std::span<const Segment> segments) {
    return detail::filter_segments(segments, [](const WeightedReference &r) { return r.is_original; });
}

/// Which references take part in scoring: the original only, those above a
/// weight threshold, or all of them.
struct RefMode {
    enum class Kind { all, single, threshold };

    Kind kind = Kind::all;
    double threshold = -1.0;

    static RefMode all() { return {}; }
    static RefMode single() { return {Kind::single, -1.0}; }
    static RefMode at_least(double w) {
        if (!(w >= -1.0 && w <= 1.0))
            throw UsageError("reference weight threshold must be in [-1, 1], got " + shortest(w));
        return {Kind::threshold, w};
    }

    /// Accepts "all", "single" or "threshold:<w>".
    static RefMode parse(std::string_view s) {
        if (s == "all")
            return all();
        if (s == "single")
            return single();
        constexpr std::string_view prefix = "threshold:";
        if (s.starts_with(prefix)) {
            std::string num(s.substr(prefix.size()));
            char *end = nullptr;
            double w = std::strtod(num.c_str(), &end);
            if (num.empty() || end != num.c_str() + num.size() || !std::isfinite(w))
                throw UsageError("bad threshold in ref mode '" + std::string(s) + "'");
            return at_least(w);
        }
        throw UsageError("unknown ref mode '" + std::string(s) + "' (expected single, threshold:<w> or all)");
    }

    /// "single", "w>=0.6" or "all".
    std::string label() const {
        switch (kind) {
        case Kind::all:
            return "all";
        case Kind::single:
            return "single";
        case Kind::threshold:
            return "w>=" + shortest(threshold);
        }
        return "?";
    }

    FilteredCorpus apply(std::span<const Segment> segments) const {
        switch (kind) {
        case Kind::single:
            return keep_original_references(segments);
        case Kind::threshold:
            return filter_references(segments, threshold);
        case Kind::all:
            break;
        }
        return filter_references(segments, -1.0);
    }
};

} // namespace dbleu
