#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dbleu/correlation.hpp"
#include "dbleu/error.hpp"
#include "dbleu/format.hpp"
#include "dbleu/metrics.hpp"
#include "dbleu/text.hpp"

namespace dbleu {

enum class Format { tsv, jsonl };

inline Format parse_format(std::string_view s) {
    if (s == "tsv")
        return Format::tsv;
    if (s == "jsonl" || s == "json-lines")
        return Format::jsonl;
    throw UsageError("unknown file format '" + std::string(s) + "' (expected tsv or jsonl)");
}

struct LoadOptions {
    Format format = Format::tsv;
    bool header = false;     ///< skip the first line
    bool normalize = false;  ///< lowercase while tokenizing
};

/// Raw 1..5 Likert-type scale by default; `rescale` maps it affinely onto
/// [-1, +1], e.g. (x - 3) / 2.
struct RatingScale {
    double min = 1.0;
    double max = 5.0;

    void validate() const {
        if (!(std::isfinite(min) && std::isfinite(max) && min < max))
            throw UsageError("rating scale needs finite min < max");
    }
    double rescale(double x) const { return (x - (min + max) / 2.0) / ((max - min) / 2.0); }
};

struct ReferenceRecord {
    std::string segment_id;
    std::string ref_id;
    double weight = 0.0;
    bool is_original = false;
    std::string text;
};

struct HypothesisRecord {
    std::string segment_id;
    std::string system_id;
    std::string text;
};

struct RatingRecord {
    std::string segment_id;
    std::string system_id;
    double rating = 0.0;
};

struct LoadedReferences {
    std::vector<Segment> segments;            ///< sorted by id, references by ref id
    std::vector<std::string> without_positive;  ///< ΔBLEU-ineligible segment ids
    std::vector<std::string> warnings;
};

/// system id -> hypotheses keyed by segment id
using SystemHypotheses = std::map<std::string, HypothesisSet>;

namespace detail {

/// Calls `fn(line_number, line)` for every non-blank line, CR stripped.
template <class Fn>
void for_each_line(std::istream &in, const LoadOptions &opts, Fn fn) {
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (no == 1 && opts.header)
            continue;
        if (line.empty())
            continue;
        fn(no, line);
    }
}

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

struct LineContext {
    const std::string &file;
    std::size_t line;

    [[noreturn]] void fail(const std::string &what) const { throw DataError(file, line, what); }
};

inline double parse_real(std::string_view s, const LineContext &ctx, const char *what) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size() || !std::isfinite(v))
        ctx.fail(std::string("malformed ") + what + " '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> tsv_fields(std::string_view line, std::size_t expected, const LineContext &ctx) {
    auto f = split_tabs(line);
    if (f.size() != expected)
        ctx.fail("expected " + std::to_string(expected) + " tab-separated fields, found " + std::to_string(f.size()));
    return f;
}

inline nlohmann::json parse_json_line(const std::string &line, const LineContext &ctx) {
    try {
        auto j = nlohmann::json::parse(line);
        if (!j.is_object())
            ctx.fail("expected a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error &e) {
        ctx.fail(std::string("malformed JSON: ") + e.what());
    }
}

template <class T>
T json_field(const nlohmann::json &j, const char *key, const LineContext &ctx) {
    auto it = j.find(key);
    if (it == j.end())
        ctx.fail(std::string("missing field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const nlohmann::json::exception &) {
        ctx.fail(std::string("field '") + key + "' has the wrong type");
    }
}

inline void require_id(const std::string &id, const LineContext &ctx, const char *what) {
    if (id.empty())
        ctx.fail(std::string("empty ") + what);
}

inline std::ifstream open(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open '" + path + "'");
    return in;
}

} // namespace detail

inline ReferenceRecord parse_reference_line(const std::string &line, const LoadOptions &opts,
                                            const detail::LineContext &ctx) {
    ReferenceRecord r;
    if (opts.format == Format::tsv) {
        auto f = detail::tsv_fields(line, 5, ctx);
        r.segment_id = f[0];
        r.ref_id = f[1];
        r.weight = detail::parse_real(f[2], ctx, "weight");
        if (f[3] == "1")
            r.is_original = true;
        else if (f[3] != "0")
            ctx.fail("is_original must be 0 or 1, got '" + std::string(f[3]) + "'");
        r.text = f[4];
    } else {
        auto j = detail::parse_json_line(line, ctx);
        r.segment_id = detail::json_field<std::string>(j, "segment_id", ctx);
        r.ref_id = detail::json_field<std::string>(j, "ref_id", ctx);
        r.weight = detail::json_field<double>(j, "weight", ctx);
        r.is_original = j.contains("is_original") ? detail::json_field<bool>(j, "is_original", ctx) : false;
        r.text = detail::json_field<std::string>(j, "text", ctx);
    }
    detail::require_id(r.segment_id, ctx, "segment id");
    detail::require_id(r.ref_id, ctx, "reference id");
    if (!(r.weight >= -1.0 && r.weight <= 1.0))
        ctx.fail("weight " + shortest(r.weight) + " outside [-1, 1]");
    return r;
}

/// One Segment per distinct segment id. Segments without a positive-weight
/// reference are reported, not rejected.
inline LoadedReferences load_references(std::istream &in, const std::string &name, const LoadOptions &opts = {}) {
    std::map<std::string, std::map<std::string, WeightedReference>> grouped;
    detail::for_each_line(in, opts, [&](std::size_t no, const std::string &line) {
        detail::LineContext ctx{name, no};
        ReferenceRecord r = parse_reference_line(line, opts, ctx);
        WeightedReference ref{r.ref_id, tokenize(r.text, opts.normalize), r.weight, r.is_original};
        if (!grouped[r.segment_id].emplace(r.ref_id, std::move(ref)).second)
            ctx.fail("duplicate reference '" + r.ref_id + "' for segment '" + r.segment_id + "'");
    });
    LoadedReferences out;
    if (grouped.empty())
        out.warnings.push_back(name + ": no references (empty corpus)");
    for (auto &[id, refs] : grouped) {
        Segment seg{id, {}};
        for (auto &[rid, ref] : refs)
            seg.references.push_back(std::move(ref));
        if (!seg.dbleu_eligible())
            out.without_positive.push_back(id);
        out.segments.push_back(std::move(seg));
    }
    return out;
}

inline LoadedReferences load_references(const std::string &path, const LoadOptions &opts = {}) {
    auto in = detail::open(path);
    return load_references(in, path, opts);
}

inline HypothesisRecord parse_hypothesis_line(const std::string &line, const LoadOptions &opts,
                                              const detail::LineContext &ctx) {
    HypothesisRecord h;
    if (opts.format == Format::tsv) {
        auto f = detail::tsv_fields(line, 3, ctx);
        h.segment_id = f[0];
        h.system_id = f[1];
        h.text = f[2];
    } else {
        auto j = detail::parse_json_line(line, ctx);
        h.segment_id = detail::json_field<std::string>(j, "segment_id", ctx);
        h.system_id = detail::json_field<std::string>(j, "system_id", ctx);
        h.text = detail::json_field<std::string>(j, "text", ctx);
    }
    detail::require_id(h.segment_id, ctx, "segment id");
    detail::require_id(h.system_id, ctx, "system id");
    return h;
}

inline SystemHypotheses load_hypotheses(std::istream &in, const std::string &name, const LoadOptions &opts = {}) {
    SystemHypotheses out;
    detail::for_each_line(in, opts, [&](std::size_t no, const std::string &line) {
        detail::LineContext ctx{name, no};
        HypothesisRecord h = parse_hypothesis_line(line, opts, ctx);
        if (!out[h.system_id].emplace(h.segment_id, tokenize(h.text, opts.normalize)).second)
            ctx.fail("duplicate hypothesis for segment '" + h.segment_id + "', system '" + h.system_id + "'");
    });
    return out;
}

inline SystemHypotheses load_hypotheses(const std::string &path, const LoadOptions &opts = {}) {
    auto in = detail::open(path);
    return load_hypotheses(in, path, opts);
}

/// Averages repeated (segment, system) rows; optionally rescales the means
/// onto [-1, +1].
inline std::vector<SystemRatings> load_ratings(std::istream &in, const std::string &name,
                                               const RatingScale &scale = {}, bool rescale = true,
                                               const LoadOptions &opts = {}) {
    scale.validate();
    std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> sums;
    detail::for_each_line(in, opts, [&](std::size_t no, const std::string &line) {
        detail::LineContext ctx{name, no};
        RatingRecord r;
        if (opts.format == Format::tsv) {
            auto f = detail::tsv_fields(line, 3, ctx);
            r.segment_id = f[0];
            r.system_id = f[1];
            r.rating = detail::parse_real(f[2], ctx, "rating");
        } else {
            auto j = detail::parse_json_line(line, ctx);
            r.segment_id = detail::json_field<std::string>(j, "segment_id", ctx);
            r.system_id = detail::json_field<std::string>(j, "system_id", ctx);
            r.rating = detail::json_field<double>(j, "rating", ctx);
        }
        detail::require_id(r.segment_id, ctx, "segment id");
        detail::require_id(r.system_id, ctx, "system id");
        if (!(r.rating >= scale.min && r.rating <= scale.max))
            ctx.fail("rating " + shortest(r.rating) + " outside scale [" + shortest(scale.min) + ", " +
                     shortest(scale.max) + "]");
        auto &acc = sums[r.system_id][r.segment_id];
        acc.first += r.rating;
        acc.second += 1;
    });
    std::vector<SystemRatings> out;
    for (const auto &[system, per_segment] : sums) {
        SystemRatings sr{system, {}};
        for (const auto &[seg, acc] : per_segment) {
            double mean = acc.first / static_cast<double>(acc.second);
            sr.ratings.emplace(seg, rescale ? scale.rescale(mean) : mean);
        }
        out.push_back(std::move(sr));
    }
    return out;
}

inline std::vector<SystemRatings> load_ratings(const std::string &path, const RatingScale &scale = {},
                                               bool rescale = true, const LoadOptions &opts = {}) {
    auto in = detail::open(path);
    return load_ratings(in, path, scale, rescale, opts);
}

/// Canonical TSV: segments and references in id order, LF line endings,
/// shortest round-trip weights, tokens joined by single spaces.
inline void write_references(std::ostream &out, std::span<const Segment> segments) {
    std::vector<const Segment *> sorted;
    for (const auto &s : segments)
        sorted.push_back(&s);
    std::sort(sorted.begin(), sorted.end(), [](const Segment *a, const Segment *b) { return a->id < b->id; });
    for (const Segment *s : sorted) {
        std::vector<const WeightedReference *> refs;
        for (const auto &r : s->references)
            refs.push_back(&r);
        std::sort(refs.begin(), refs.end(),
                  [](const WeightedReference *a, const WeightedReference *b) { return a->ref_id < b->ref_id; });
        for (const auto *r : refs)
            out << s->id << '\t' << r->ref_id << '\t' << shortest(r->weight) << '\t' << (r->is_original ? 1 : 0)
                << '\t' << join(r->tokens) << '\n';
    }
}

inline void write_hypotheses(std::ostream &out, const SystemHypotheses &hyps) {
    std::map<std::pair<std::string_view, std::string_view>, const TokenSequence *> rows;
    for (const auto &[system, set] : hyps)
        for (const auto &[seg, tokens] : set)
            rows.emplace(std::pair<std::string_view, std::string_view>{seg, system}, &tokens);
    for (const auto &[key, tokens] : rows)
        out << key.first << '\t' << key.second << '\t' << join(*tokens) << '\n';
}

// ---------------------------------------------------------------------------
// Validation

enum class Severity { warning, error };

struct Issue {
    Severity severity = Severity::warning;
    std::string category;  ///< coverage, dbleu-eligibility, corpus
    std::string message;
};

struct ValidationReport {
    std::vector<Issue> issues;
    std::size_t segments = 0;
    std::size_t references = 0;
    std::size_t min_refs_per_segment = 0;
    std::size_t max_refs_per_segment = 0;
    std::size_t systems = 0;
    std::size_t rated_systems = 0;
    std::size_t dbleu_ineligible = 0;
    /// Reference count per weight value, ascending.
    std::map<double, std::size_t> weight_counts;

    bool has_errors() const {
        return std::any_of(issues.begin(), issues.end(), [](const Issue &i) { return i.severity == Severity::error; });
    }
    bool empty() const { return issues.empty(); }
};

namespace detail {

inline std::string id_list(const std::vector<std::string> &ids, std::size_t limit = 5) {
    std::string out;
    for (std::size_t i = 0; i < ids.size() && i < limit; ++i) {
        if (i)
            out += ", ";
        out += "'" + ids[i] + "'";
    }
    if (ids.size() > limit)
        out += ", ... (" + std::to_string(ids.size()) + " total)";
    return out;
}

} // namespace detail

/// Cross-checks id coverage between the three inputs and summarizes the
/// reference sets. Never throws on inconsistent data.
inline ValidationReport validate_study(std::span<const Segment> segments, const SystemHypotheses &hyps,
                                       std::span<const SystemRatings> ratings) {
    ValidationReport rep;
    rep.segments = segments.size();
    rep.systems = hyps.size();
    rep.rated_systems = ratings.size();
    std::set<std::string_view> ids;
    std::vector<std::string> ineligible;
    for (const auto &s : segments) {
        ids.insert(s.id);
        rep.references += s.references.size();
        if (rep.min_refs_per_segment == 0 || s.references.size() < rep.min_refs_per_segment)
            rep.min_refs_per_segment = s.references.size();
        rep.max_refs_per_segment = std::max(rep.max_refs_per_segment, s.references.size());
        for (const auto &r : s.references)
            ++rep.weight_counts[r.weight];
        if (!s.dbleu_eligible())
            ineligible.push_back(s.id);
    }
    rep.dbleu_ineligible = ineligible.size();
    if (segments.empty())
        rep.issues.push_back({Severity::warning, "corpus", "reference corpus is empty"});
    if (!ineligible.empty())
        rep.issues.push_back({Severity::warning, "dbleu-eligibility",
                              std::to_string(ineligible.size()) +
                                  " segment(s) have no positive-weight reference: " + detail::id_list(ineligible)});

    for (const auto &[system, set] : hyps) {
        std::vector<std::string> unknown, missing;
        for (const auto &[seg, tokens] : set)
            if (!ids.contains(seg))
                unknown.push_back(seg);
        for (const auto &s : segments)
            if (!set.contains(s.id))
                missing.push_back(s.id);
        if (!unknown.empty())
            rep.issues.push_back({Severity::error, "coverage",
                                  "system '" + system + "' has hypotheses for unknown segment(s): " +
                                      detail::id_list(unknown)});
        if (!missing.empty())
            rep.issues.push_back({Severity::error, "coverage",
                                  "system '" + system + "' lacks hypotheses for segment(s): " +
                                      detail::id_list(missing)});
    }

    for (const auto &sr : ratings) {
        std::vector<std::string> unknown, missing;
        for (const auto &[seg, value] : sr.ratings)
            if (!ids.contains(seg))
                unknown.push_back(seg);
        if (!hyps.contains(sr.system_id)) {
            rep.issues.push_back(
                {Severity::warning, "coverage", "ratings given for system '" + sr.system_id + "' without hypotheses"});
        } else {
            for (const auto &s : segments)
                if (!sr.ratings.contains(s.id))
                    missing.push_back(s.id);
        }
        if (!unknown.empty())
            rep.issues.push_back({Severity::error, "coverage",
                                  "system '" + sr.system_id + "' has ratings for unknown segment(s): " +
                                      detail::id_list(unknown)});
        if (!missing.empty())
            rep.issues.push_back({Severity::error, "coverage",
                                  "system '" + sr.system_id + "' lacks ratings for segment(s): " +
                                      detail::id_list(missing)});
    }
    if (!ratings.empty())
        for (const auto &[system, set] : hyps)
            if (std::none_of(ratings.begin(), ratings.end(),
                             [&](const SystemRatings &r) { return r.system_id == system; }))
                rep.issues.push_back({Severity::warning, "coverage", "system '" + system + "' has no ratings"});
    return rep;
}

} // namespace dbleu
