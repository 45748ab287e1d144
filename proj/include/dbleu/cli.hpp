#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dbleu/corpus_io.hpp"
#include "dbleu/correlation.hpp"
#include "dbleu/error.hpp"
#include "dbleu/format.hpp"
#include "dbleu/metrics.hpp"
#include "dbleu/study.hpp"

namespace dbleu::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDegenerate = 3 };

using Json = nlohmann::ordered_json;

/// Thread count from DBLEU_THREADS, 1 when unset or invalid.
inline unsigned default_threads() {
    if (const char *env = std::getenv("DBLEU_THREADS")) {
        char *end = nullptr;
        long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1 && v <= 1024)
            return static_cast<unsigned>(v);
    }
    return 1;
}

struct Options {
    std::string command;

    std::string refs, hyps, ratings;
    std::string format = "tsv";
    bool header = false;
    bool normalize = false;

    std::vector<std::string> metrics;
    std::size_t max_n = 2;
    std::string smoothing;  ///< empty: per-metric default
    std::vector<std::string> ref_modes;
    std::string system;

    std::size_t unit_size = 100;
    std::size_t assignments = 1000;
    std::size_t bootstrap = 1000;
    std::uint64_t seed = 0;
    unsigned threads = default_threads();
    std::vector<std::string> pairs;
    std::string rating_scale = "1:5";
    bool no_rescale = false;

    std::string axis;
    std::vector<double> values;

    bool strict = false;
    bool json = false;
    std::string out;
};

/// Options after validation, before any file is read.
struct Plan {
    LoadOptions load;
    std::vector<MetricVariant> variants;
    StudyConfig study;
    RatingScale scale;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::optional<SweepAxis> axis;
};

inline RatingScale parse_rating_scale(const std::string &s) {
    auto colon = s.find(':');
    if (colon == std::string::npos)
        throw UsageError("rating scale must look like MIN:MAX, got '" + s + "'");
    RatingScale r;
    try {
        std::size_t used = 0;
        r.min = std::stod(s.substr(0, colon), &used);
        if (used != colon)
            throw std::invalid_argument(s);
        std::string hi = s.substr(colon + 1);
        r.max = std::stod(hi, &used);
        if (used != hi.size())
            throw std::invalid_argument(s);
    } catch (const std::logic_error &) {
        throw UsageError("rating scale must look like MIN:MAX, got '" + s + "'");
    }
    r.validate();
    return r;
}

inline Plan make_plan(const Options &o) {
    Plan p;
    p.load.format = parse_format(o.format);
    p.load.header = o.header;
    p.load.normalize = o.normalize;

    std::vector<std::string> metrics = o.metrics;
    std::vector<std::string> modes = o.ref_modes;
    if (o.command == "score") {
        if (metrics.empty())
            metrics = {"bleu"};
        if (modes.empty())
            modes = {"all"};
        if (metrics.size() != 1 || modes.size() != 1)
            throw UsageError("score takes exactly one --metric and one --ref-mode");
        if (o.hyps.empty())
            throw UsageError("score needs --hyps");
    } else if (o.command == "correlate" || o.command == "sweep") {
        if (metrics.empty())
            metrics = {"bleu", "sbleu", "dbleu"};
        if (modes.empty())
            modes = o.command == "correlate" ? std::vector<std::string>{"single", "threshold:0.6", "all"}
                                             : std::vector<std::string>{"all"};
        if (o.hyps.empty() || o.ratings.empty())
            throw UsageError(o.command + " needs --hyps and --ratings");
        p.study.unit_size = o.unit_size;
        p.study.assignments = o.assignments;
        p.study.bootstrap = o.bootstrap;
        p.study.seed = o.seed;
        p.study.threads = o.threads;
        p.study.validate();
        for (const auto &pair : o.pairs) {
            auto colon = pair.find(':');
            if (colon == std::string::npos || colon == 0 || colon + 1 == pair.size())
                throw UsageError("system pair must look like A:B, got '" + pair + "'");
            p.pairs.emplace_back(pair.substr(0, colon), pair.substr(colon + 1));
        }
        if (o.command == "sweep") {
            p.axis = parse_sweep_axis(o.axis);
            if (modes.size() != 1)
                throw UsageError("sweep takes a single --ref-mode");
            validate_sweep_values(*p.axis, o.values);
        }
    }
    p.scale = parse_rating_scale(o.rating_scale);

    for (const auto &m : metrics) {
        MetricKind kind = parse_metric_kind(m);
        MetricConfig cfg = MetricConfig::defaults_for(kind, o.max_n);
        cfg.normalize = o.normalize;
        if (!o.smoothing.empty())
            cfg.smoothing = parse_smoothing(o.smoothing);
        cfg.validate();
        for (const auto &mode : modes)
            p.variants.push_back({cfg, RefMode::parse(mode)});
    }
    // correlate rows: metric-major, ref-mode-minor
    return p;
}

// ---------------------------------------------------------------------------
// Rendering

inline std::string render_score_text(const MetricReport &r, const RefMode &mode) {
    std::ostringstream os;
    os << "metric: " << r.config.label() << '\n';
    os << "ref-mode: " << mode.label() << '\n';
    os << "score: " << fixed(r.score, 4) << '\n';
    for (std::size_t n = 0; n < r.precisions.size(); ++n)
        os << "p" << n + 1 << ": " << fixed(r.precisions[n], 4) << '\n';
    os << "brevity-penalty: " << fixed(r.brevity_penalty, 4) << '\n';
    os << "hyp-length: " << r.hyp_length << '\n';
    os << "ref-length: " << r.ref_length << '\n';
    os << "segments: " << r.segments_scored << '\n';
    for (std::size_t n : r.nonpositive_orders)
        os << "note: p" << n << " <= 0, score forced to 0\n";
    return os.str();
}

inline Json score_json(const MetricReport &r, const RefMode &mode) {
    Json j;
    j["metric"] = r.config.label();
    j["kind"] = std::string(to_string(r.config.kind));
    j["max_n"] = r.config.max_order;
    j["smoothing"] = std::string(to_string(r.config.smoothing));
    j["ref_mode"] = mode.label();
    j["score"] = rounded(r.score, 4);
    Json p = Json::array();
    for (double x : r.precisions)
        p.push_back(rounded(x, 4));
    j["precisions"] = p;
    j["brevity_penalty"] = rounded(r.brevity_penalty, 4);
    j["hyp_length"] = r.hyp_length;
    j["ref_length"] = r.ref_length;
    j["segments"] = r.segments_scored;
    j["nonpositive_orders"] = r.nonpositive_orders;
    return j;
}

inline std::string dump(const Json &j) { return j.dump(2) + "\n"; }

inline std::string ci_text(const Interval &ci) { return "(" + fixed(ci.lo, 3) + ", " + fixed(ci.hi, 3) + ")"; }

inline std::string render_correlation_tsv(const std::vector<StudyRow> &rows) {
    std::ostringstream os;
    os << "metric\tref-mode\trho\trho-ci\ttau\ttau-ci\tassignments\tunit-size\tobservations\n";
    for (const auto &r : rows) {
        const auto &s = r.summary;
        os << r.variant.config.label() << '\t' << r.variant.ref_mode.label() << '\t' << fixed(s.spearman_rho, 3)
           << '\t' << ci_text(s.rho_ci) << '\t' << fixed(s.kendall_tau, 3) << '\t' << ci_text(s.tau_ci) << '\t'
           << s.assignments << '\t' << s.unit_size << '\t' << s.observations_per_assignment << '\n';
    }
    return os.str();
}

inline Json summary_json(const MetricVariant &v, const CorrelationSummary &s) {
    Json j;
    j["metric"] = v.config.label();
    j["ref_mode"] = v.ref_mode.label();
    j["rho"] = rounded(s.spearman_rho, 3);
    j["rho_ci"] = {rounded(s.rho_ci.lo, 3), rounded(s.rho_ci.hi, 3)};
    j["tau"] = rounded(s.kendall_tau, 3);
    j["tau_ci"] = {rounded(s.tau_ci.lo, 3), rounded(s.tau_ci.hi, 3)};
    j["assignments"] = s.assignments;
    j["degenerate_assignments"] = s.degenerate_assignments;
    j["unit_size"] = s.unit_size;
    j["observations"] = s.observations_per_assignment;
    return j;
}

inline Json correlation_json(const std::vector<StudyRow> &rows, const StudyConfig &cfg) {
    Json j;
    j["seed"] = cfg.seed;
    j["bootstrap"] = cfg.bootstrap;
    Json arr = Json::array();
    for (const auto &r : rows)
        arr.push_back(summary_json(r.variant, r.summary));
    j["rows"] = arr;
    return j;
}

inline std::string render_sweep_tsv(SweepAxis axis, const SweepResult &res) {
    std::ostringstream os;
    os << "axis\tvalue\tmetric\tref-mode\trho\trho-lo\trho-hi\ttau\ttau-lo\ttau-hi\tassignments\tunit-size\t"
          "observations\n";
    for (const auto &r : res.rows) {
        const auto &s = r.summary;
        os << to_string(axis) << '\t' << shortest(r.value) << '\t' << r.variant.config.label() << '\t'
           << r.variant.ref_mode.label() << '\t' << fixed(s.spearman_rho, 3) << '\t' << fixed(s.rho_ci.lo, 3) << '\t'
           << fixed(s.rho_ci.hi, 3) << '\t' << fixed(s.kendall_tau, 3) << '\t' << fixed(s.tau_ci.lo, 3) << '\t'
           << fixed(s.tau_ci.hi, 3) << '\t' << s.assignments << '\t' << s.unit_size << '\t'
           << s.observations_per_assignment << '\n';
    }
    return os.str();
}

inline Json sweep_json(SweepAxis axis, const SweepResult &res, const StudyConfig &cfg) {
    Json j;
    j["axis"] = std::string(to_string(axis));
    j["seed"] = cfg.seed;
    Json arr = Json::array();
    for (const auto &r : res.rows) {
        Json row;
        row["value"] = r.value;
        Json summary = summary_json(r.variant, r.summary);
        for (auto &[k, v] : summary.items())
            row[k] = v;
        arr.push_back(row);
    }
    j["rows"] = arr;
    j["skipped"] = res.warnings;
    return j;
}

inline std::string render_validation_text(const ValidationReport &r) {
    std::ostringstream os;
    os << "segments: " << r.segments << '\n';
    os << "references: " << r.references << '\n';
    os << "references-per-segment: " << r.min_refs_per_segment << ".." << r.max_refs_per_segment << '\n';
    os << "systems: " << r.systems << '\n';
    os << "rated-systems: " << r.rated_systems << '\n';
    os << "dbleu-ineligible: " << r.dbleu_ineligible << '\n';
    os << "weights:";
    for (const auto &[w, c] : r.weight_counts)
        os << ' ' << shortest(w) << '=' << c;
    os << '\n';
    for (const auto &i : r.issues)
        os << (i.severity == Severity::error ? "error" : "warning") << " [" << i.category << "] " << i.message << '\n';
    if (r.issues.empty())
        os << "ok\n";
    return os.str();
}

inline Json validation_json(const ValidationReport &r) {
    Json j;
    j["segments"] = r.segments;
    j["references"] = r.references;
    j["min_refs_per_segment"] = r.min_refs_per_segment;
    j["max_refs_per_segment"] = r.max_refs_per_segment;
    j["systems"] = r.systems;
    j["rated_systems"] = r.rated_systems;
    j["dbleu_ineligible"] = r.dbleu_ineligible;
    Json w = Json::array();
    for (const auto &[weight, count] : r.weight_counts)
        w.push_back({{"weight", weight}, {"count", count}});
    j["weights"] = w;
    Json issues = Json::array();
    for (const auto &i : r.issues)
        issues.push_back({{"severity", i.severity == Severity::error ? "error" : "warning"},
                          {"category", i.category},
                          {"message", i.message}});
    j["issues"] = issues;
    return j;
}

// ---------------------------------------------------------------------------
// Commands

namespace detail {

inline void warn_all(std::ostream &err, const std::vector<std::string> &warnings) {
    for (const auto &w : warnings)
        err << "warning: " << w << '\n';
}

inline LoadedReferences load_refs(const Options &o, const Plan &p, std::ostream &err) {
    LoadedReferences refs = load_references(o.refs, p.load);
    warn_all(err, refs.warnings);
    return refs;
}

inline StudyData load_study(const Options &o, const Plan &p, std::ostream &err) {
    LoadedReferences refs = load_refs(o, p, err);
    SystemHypotheses hyps = load_hypotheses(o.hyps, p.load);
    auto ratings = load_ratings(o.ratings, p.scale, !o.no_rescale, p.load);
    return StudyData::build(std::move(refs.segments), std::move(hyps), ratings, p.pairs);
}

} // namespace detail

inline std::string cmd_score(const Options &o, const Plan &p, std::ostream &err) {
    const MetricVariant &v = p.variants.front();
    LoadedReferences refs = detail::load_refs(o, p, err);
    SystemHypotheses hyps = load_hypotheses(o.hyps, p.load);
    if (hyps.empty())
        throw DataError(o.hyps + ": no hypotheses");
    std::string system = o.system;
    if (system.empty()) {
        if (hyps.size() != 1)
            throw UsageError("hypothesis file holds " + std::to_string(hyps.size()) +
                             " systems; choose one with --system");
        system = hyps.begin()->first;
    }
    auto it = hyps.find(system);
    if (it == hyps.end())
        throw DataError("no hypotheses for system '" + system + "'");

    FilteredCorpus filtered = v.ref_mode.apply(refs.segments);
    if (v.config.kind == MetricKind::dbleu && !filtered.without_positive.empty())
        throw DataError("dBLEU undefined: " + std::to_string(filtered.without_positive.size()) +
                        " segment(s) have no positive-weight reference: " +
                        dbleu::detail::id_list(filtered.without_positive));
    std::size_t unscored = 0;
    for (const auto &s : filtered.segments)
        if (!it->second.contains(s.id))
            ++unscored;
    if (unscored)
        err << "warning: " << unscored << " segment(s) without a hypothesis from '" << system
            << "' were not scored\n";

    MetricReport r = score_corpus(it->second, filtered.segments, v.config);
    return o.json ? dump(score_json(r, v.ref_mode)) : render_score_text(r, v.ref_mode);
}

inline std::string cmd_correlate(const Options &o, const Plan &p, std::ostream &err) {
    StudyData d = detail::load_study(o, p, err);
    auto rows = run_study(d, p.variants, p.study);
    return o.json ? dump(correlation_json(rows, p.study)) : render_correlation_tsv(rows);
}

inline std::string cmd_sweep(const Options &o, const Plan &p, std::ostream &err) {
    StudyData d = detail::load_study(o, p, err);
    // one base variant per metric; the axis overrides ref mode, order or unit size
    std::vector<double> values = o.values.empty() ? default_sweep_values(*p.axis, d.segments) : o.values;
    SweepResult res = run_sweep(d, p.variants, *p.axis, values, p.study);
    detail::warn_all(err, res.warnings);
    if (res.rows.empty())
        throw DegenerateError("every sweep point was skipped");
    return o.json ? dump(sweep_json(*p.axis, res, p.study)) : render_sweep_tsv(*p.axis, res);
}

inline std::pair<std::string, int> cmd_validate(const Options &o, const Plan &p, std::ostream &err) {
    LoadedReferences refs = detail::load_refs(o, p, err);
    SystemHypotheses hyps;
    if (!o.hyps.empty())
        hyps = load_hypotheses(o.hyps, p.load);
    std::vector<SystemRatings> ratings;
    if (!o.ratings.empty())
        ratings = load_ratings(o.ratings, p.scale, !o.no_rescale, p.load);
    ValidationReport r = validate_study(refs.segments, hyps, ratings);
    int code = r.has_errors() || (o.strict && !r.empty()) ? kData : kOk;
    return {o.json ? dump(validation_json(r)) : render_validation_text(r), code};
}

inline void add_input_options(CLI::App *cmd, Options &o, bool need_hyps) {
    cmd->add_option("--refs", o.refs, "weighted reference file")->required();
    auto *h = cmd->add_option("--hyps", o.hyps, "system hypothesis file");
    if (need_hyps)
        h->required();
    cmd->add_option("--format", o.format, "input format: tsv or jsonl")->capture_default_str();
    cmd->add_flag("--header", o.header, "skip the first line of each input file");
    cmd->add_flag("--normalize", o.normalize, "lowercase text before tokenizing");
    cmd->add_flag("--json", o.json, "emit JSON instead of text");
    cmd->add_option("--out", o.out, "write output to this file");
}

inline void add_metric_options(CLI::App *cmd, Options &o) {
    cmd->add_option("--metric", o.metrics, "bleu, dbleu or sbleu (repeatable)")->delimiter(',');
    cmd->add_option("--max-n", o.max_n, "maximum n-gram order")->capture_default_str();
    cmd->add_option("--smoothing", o.smoothing, "none or add-one (default: add-one for sbleu, none otherwise)");
    cmd->add_option("--ref-mode", o.ref_modes, "single, threshold:<w> or all (repeatable)")->delimiter(',');
}

inline void add_study_options(CLI::App *cmd, Options &o) {
    cmd->add_option("--ratings", o.ratings, "human rating file")->required();
    cmd->add_option("--unit-size", o.unit_size, "segments per observation unit")->capture_default_str();
    cmd->add_option("--assignments", o.assignments, "sampled assignments")->capture_default_str();
    cmd->add_option("--bootstrap", o.bootstrap, "bootstrap resamples pooled over assignments (0 = none)")
        ->capture_default_str();
    cmd->add_option("--seed", o.seed, "random seed")->capture_default_str();
    cmd->add_option("--threads", o.threads, "worker threads (default from DBLEU_THREADS)")->capture_default_str();
    cmd->add_option("--pair", o.pairs, "system pair A:B (repeatable; default all pairs)");
    cmd->add_option("--rating-scale", o.rating_scale, "raw rating scale MIN:MAX")->capture_default_str();
    cmd->add_flag("--no-rescale", o.no_rescale, "keep raw ratings instead of mapping them to [-1, 1]");
}

} // namespace dbleu::cli

namespace dbleu::cli {

/// Full CLI: parses `args` (without the program name), writes results to
/// `out` (or --out) and diagnostics to `err`, returns the exit code.
inline int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    Options o;
    CLI::App app{"Discriminative BLEU scoring and metric correlation studies", "dbleu"};
    app.require_subcommand(1);

    auto *score = app.add_subcommand("score", "score one system's hypotheses");
    add_input_options(score, o, true);
    add_metric_options(score, o);
    score->add_option("--system", o.system, "system id to score (needed when the file holds several)");

    auto *correlate = app.add_subcommand("correlate", "correlate metrics with human ratings");
    add_input_options(correlate, o, true);
    add_metric_options(correlate, o);
    add_study_options(correlate, o);

    auto *sweep = app.add_subcommand("sweep", "correlations along one parameter axis");
    add_input_options(sweep, o, true);
    add_metric_options(sweep, o);
    add_study_options(sweep, o);
    sweep->add_option("--axis", o.axis, "threshold, unit-size or max-n")->required();
    sweep->add_option("--values", o.values, "axis values (comma separated)")->delimiter(',');

    auto *validate = app.add_subcommand("validate", "cross-check study inputs");
    add_input_options(validate, o, false);
    validate->add_option("--ratings", o.ratings, "human rating file");
    validate->add_option("--rating-scale", o.rating_scale, "raw rating scale MIN:MAX")->capture_default_str();
    validate->add_flag("--no-rescale", o.no_rescale, "keep raw ratings");
    validate->add_flag("--strict", o.strict, "treat warnings as failures");

    std::vector<const char *> argv{"dbleu"};
    for (const auto &a : args)
        argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }
    o.command = app.get_subcommands().front()->get_name();

    try {
        Plan plan = make_plan(o);
        std::string text;
        int code = kOk;
        if (o.command == "score") {
            text = cmd_score(o, plan, err);
        } else if (o.command == "correlate") {
            text = cmd_correlate(o, plan, err);
        } else if (o.command == "sweep") {
            text = cmd_sweep(o, plan, err);
        } else {
            std::tie(text, code) = cmd_validate(o, plan, err);
        }
        if (o.out.empty()) {
            out << text;
        } else {
            std::ofstream f(o.out, std::ios::binary);
            if (!(f << text))
                throw DataError("cannot write '" + o.out + "'");
        }
        return code;
    } catch (const UsageError &e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError &e) {
        err << "error: " << e.what() << '\n';
        return kData;
    } catch (const DegenerateError &e) {
        err << "error: " << e.what() << '\n';
        return kDegenerate;
    }
}

} // namespace dbleu::cli
