#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "dbleu/correlation.hpp"
#include "oracle.hpp"

using namespace dbleu;

namespace {

std::vector<double> random_ints(std::mt19937_64 &rng, std::size_t n, int range) {
    std::vector<double> v(n);
    for (auto &x : v)
        x = static_cast<double>(rng() % static_cast<std::uint64_t>(range));
    return v;
}

} // namespace

TEST(Spearman, Examples) {
    std::vector<double> a{1, 2, 3}, b{3, 2, 1};
    EXPECT_DOUBLE_EQ(spearman_rho(a, a), 1.0);
    EXPECT_DOUBLE_EQ(spearman_rho(a, b), -1.0);
    std::vector<double> m{1, 2, 3, 4}, q{1, 3, 2, 4};
    EXPECT_NEAR(spearman_rho(m, q), 0.8, 1e-15);
}

TEST(Spearman, Degenerate) {
    std::vector<double> c{2, 2, 2}, a{1, 2, 3}, one{1};
    EXPECT_THROW(spearman_rho(c, a), DegenerateError);
    EXPECT_THROW(spearman_rho(a, c), DegenerateError);
    EXPECT_THROW(spearman_rho(one, one), DegenerateError);
}

TEST(Kendall, Examples) {
    std::vector<double> a{1, 2, 3}, b{3, 2, 1};
    EXPECT_DOUBLE_EQ(kendall_tau(a, a), 1.0);
    EXPECT_DOUBLE_EQ(kendall_tau(a, b), -1.0);
    std::vector<double> m{1, 2, 3, 4}, q{1, 3, 2, 4};
    EXPECT_NEAR(kendall_tau(m, q), 4.0 / 6.0, 1e-15);
}

TEST(Kendall, Degenerate) {
    std::vector<double> c{5, 5, 5, 5}, a{1, 2, 3, 4};
    EXPECT_THROW(kendall_tau(c, a), DegenerateError);
    EXPECT_THROW(kendall_tau(a, c), DegenerateError);
}

TEST(Kendall, PairedObservationOverloads) {
    std::vector<PairedObservation> obs{{1, 1}, {2, 3}, {3, 2}, {4, 4}};
    EXPECT_NEAR(kendall_tau(obs), 4.0 / 6.0, 1e-15);
    EXPECT_NEAR(spearman_rho(obs), 0.8, 1e-15);
}

TEST(RankCorrelation, MatchesBruteForceWithTies) {
    std::mt19937_64 rng(99);
    for (int t = 0; t < 2000; ++t) {
        std::size_t n = 3 + rng() % 48;
        auto x = random_ints(rng, n, 1 + static_cast<int>(rng() % 8));
        auto y = random_ints(rng, n, 1 + static_cast<int>(rng() % 8));
        ASSERT_EQ(fractional_ranks(x), oracle::ranks(x));
        auto pc = oracle::pair_counts(x, y);
        bool degenerate = pc.x_ties == pc.pairs || pc.y_ties == pc.pairs;
        if (degenerate) {
            ASSERT_THROW(kendall_tau(x, y), DegenerateError);
            ASSERT_THROW(spearman_rho(x, y), DegenerateError);
            continue;
        }
        auto kc = kendall_counts(x, y);
        ASSERT_EQ(kc.concordant_minus_discordant, pc.concordant - pc.discordant);
        ASSERT_EQ(kc.x_ties, pc.x_ties);
        ASSERT_EQ(kc.y_ties, pc.y_ties);
        ASSERT_EQ(kendall_tau(x, y), oracle::kendall_b(x, y));
        ASSERT_NEAR(spearman_rho(x, y), oracle::spearman(x, y), 1e-12);
    }
}

TEST(RankCorrelation, InvariantUnderMonotoneTransformAndPairSwap) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int t = 0; t < 300; ++t) {
        std::size_t n = 3 + rng() % 40;
        std::vector<double> m(n), q(n);
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = g(rng);
            q[i] = m[i] + g(rng);
        }
        std::vector<double> fm(n), nm(n), nq(n);
        for (std::size_t i = 0; i < n; ++i) {
            fm[i] = std::exp(m[i]) * 3 + 1;
            nm[i] = -m[i];
            nq[i] = -q[i];
        }
        const double rho = spearman_rho(m, q), tau = kendall_tau(m, q);
        ASSERT_NEAR(spearman_rho(fm, q), rho, 1e-12);
        ASSERT_NEAR(kendall_tau(fm, q), tau, 1e-12);
        ASSERT_NEAR(spearman_rho(nm, nq), rho, 1e-12);
        ASSERT_NEAR(kendall_tau(nm, nq), tau, 1e-12);
        ASSERT_LE(std::abs(rho), 1.0);
        ASSERT_LE(std::abs(tau), 1.0);
        // no ties: tau-b equals tau-a
        auto pc = oracle::pair_counts(m, q);
        ASSERT_NEAR(tau, static_cast<double>(pc.concordant - pc.discordant) / static_cast<double>(pc.pairs), 1e-12);
    }
}

TEST(SampleAssignments, PartitionShape) {
    auto a = sample_assignments(4, 2, 10, 1);
    ASSERT_EQ(a.size(), 10u);
    for (const auto &asg : a) {
        ASSERT_EQ(asg.size(), 2u);
        std::set<std::size_t> all;
        for (const auto &u : asg) {
            ASSERT_EQ(u.size(), 2u);
            ASSERT_TRUE(std::is_sorted(u.begin(), u.end()));
            all.insert(u.begin(), u.end());
        }
        EXPECT_EQ(all, (std::set<std::size_t>{0, 1, 2, 3}));
    }
    auto b = sample_assignments(5, 2, 20, 1);
    for (const auto &asg : b) {
        ASSERT_EQ(asg.size(), 2u);
        std::set<std::size_t> used;
        for (const auto &u : asg)
            used.insert(u.begin(), u.end());
        EXPECT_EQ(used.size(), 4u);
    }
}

TEST(SampleAssignments, DeterministicPerSeed) {
    auto a = sample_assignments(2114, 100, 5, 42);
    auto b = sample_assignments(2114, 100, 5, 42);
    auto c = sample_assignments(2114, 100, 5, 43);
    ASSERT_EQ(a.front().size(), 21u);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
    EXPECT_NE(a[0], a[1]);
    // assignment k depends only on (seed, k)
    auto longer = sample_assignments(2114, 100, 8, 42);
    EXPECT_TRUE(std::equal(a.begin(), a.end(), longer.begin()));
}

TEST(SampleAssignments, Errors) {
    EXPECT_THROW(sample_assignments(3, 4, 1, 0), UsageError);
    EXPECT_THROW(sample_assignments(3, 0, 1, 0), UsageError);
}

TEST(SampleAssignments, IdOverload) {
    std::vector<std::string> ids{"a", "b", "c", "d"};
    auto a = sample_assignments(ids, 2, 3, 5);
    auto idx = sample_assignments(ids.size(), 2, 3, 5);
    for (std::size_t k = 0; k < a.size(); ++k)
        for (std::size_t u = 0; u < a[k].size(); ++u)
            for (std::size_t i = 0; i < 2; ++i)
                EXPECT_EQ(a[k][u][i], ids[idx[k][u][i]]);
}

TEST(BuildObservations, IdenticalSystemsGiveZeros) {
    RatingTable r{{{0.5, -0.25, 1.0, 0.0}, {0.5, -0.25, 1.0, 0.0}}};
    std::vector<double> per_seg{0.3, 0.1, 0.9, 0.4};
    UnitMetric metric = [&](std::size_t, std::span<const std::size_t> u) { return unit_mean(per_seg, u); };
    Assignment a{{0, 3}, {1, 2}};
    std::vector<std::size_t> systems{0, 1};
    auto ms = score_units(a, 2, metric, systems);
    auto qs = rate_units(a, r, systems);
    for (const auto &o : build_observations({0, 1}, ms, qs)) {
        EXPECT_EQ(o.m, 0.0);
        EXPECT_EQ(o.q, 0.0);
    }
}

TEST(BuildObservations, DifferencesPerUnit) {
    RatingTable r{{{1.0, 0.0, 0.5}, {0.0, 0.0, -0.5}}};
    std::vector<std::vector<double>> score{{1.0, 0.2, 0.4}, {0.0, 0.2, 0.1}};
    UnitMetric metric = [&](std::size_t s, std::span<const std::size_t> u) { return unit_mean(score[s], u); };
    Assignment a{{0}, {1, 2}};
    std::vector<std::size_t> systems{0, 1};
    auto obs = build_observations({0, 1}, score_units(a, 2, metric, systems), rate_units(a, r, systems));
    ASSERT_EQ(obs.size(), 2u);
    EXPECT_EQ(obs[0].m, 1.0);
    EXPECT_EQ(obs[0].q, 1.0);
    EXPECT_NEAR(obs[1].m, 0.15, 1e-15);
    EXPECT_NEAR(obs[1].q, 0.5, 1e-15);
}

TEST(BuildObservations, MissingRating) {
    RatingTable r{{{1.0, std::nan("")}, {0.0, 0.0}}};
    Assignment a{{0, 1}};
    std::vector<std::size_t> systems{0, 1};
    EXPECT_THROW(rate_units(a, r, systems), DataError);
}

namespace {

// Two systems over `n` segments with independent random ratings.
struct Toy {
    std::size_t n;
    RatingTable ratings;
    std::vector<SystemPair> pairs{{0, 1}};

    explicit Toy(std::size_t n_, std::uint64_t seed) : n(n_) {
        std::mt19937_64 rng(seed);
        ratings.values.assign(2, std::vector<double>(n));
        for (auto &sys : ratings.values)
            for (auto &v : sys)
                v = static_cast<double>(rng() % 5) / 2.0 - 1.0;
    }
};

} // namespace

TEST(Correlate, SelfCorrelationIsOne) {
    Toy toy(400, 1);
    UnitMetric rating = [&](std::size_t s, std::span<const std::size_t> u) {
        return unit_mean(toy.ratings.values[s], u);
    };
    StudyConfig cfg;
    cfg.unit_size = 10;
    cfg.assignments = 50;
    cfg.bootstrap = 200;
    auto a = sample_assignments(toy.n, cfg.unit_size, cfg.assignments, cfg.seed);
    auto s = correlate(a, toy.pairs, 2, rating, toy.ratings, cfg);
    EXPECT_EQ(s.spearman_rho, 1.0);
    EXPECT_EQ(s.kendall_tau, 1.0);
    EXPECT_EQ(s.rho_ci.lo, 1.0);
    EXPECT_EQ(s.assignments, 50u);
    EXPECT_EQ(s.observations_per_assignment, 40u);
    EXPECT_EQ(s.unit_size, 10u);
}

TEST(Correlate, SingleAssignmentEqualsDirectCoefficients) {
    RatingTable r{{{1.0, 0.5, -0.5, 0.0}, {0.0, 0.0, 0.0, 0.0}}};
    std::vector<std::vector<double>> score{{0.4, 0.9, 0.1, 0.3}, {0.2, 0.2, 0.2, 0.2}};
    UnitMetric metric = [&](std::size_t s, std::span<const std::size_t> u) { return unit_mean(score[s], u); };
    std::vector<Assignment> a{{{0}, {1}, {2}, {3}}};
    std::vector<SystemPair> pairs{{0, 1}};
    StudyConfig cfg;
    cfg.bootstrap = 0;
    auto s = correlate(a, pairs, 2, metric, r, cfg);
    std::vector<double> m{0.2, 0.7, -0.1, 0.1}, q{1.0, 0.5, -0.5, 0.0};
    for (std::size_t i = 0; i < 4; ++i)
        m[i] = score[0][i] - score[1][i];
    EXPECT_EQ(s.spearman_rho, spearman_rho(m, q));
    EXPECT_EQ(s.kendall_tau, kendall_tau(m, q));
    EXPECT_EQ(s.rho_ci.lo, s.spearman_rho);
    EXPECT_EQ(s.rho_ci.hi, s.spearman_rho);
}

TEST(Correlate, RandomMetricIsNearZero) {
    Toy toy(600, 2);
    UnitMetric noise = [](std::size_t s, std::span<const std::size_t> u) {
        std::uint64_t h = mix64(s * 1000003ULL);
        for (std::size_t i : u)
            h = mix64(h ^ i);
        return static_cast<double>(h >> 11) * 0x1.0p-53;
    };
    StudyConfig cfg;
    cfg.unit_size = 10;
    cfg.assignments = 300;
    cfg.bootstrap = 300;
    auto a = sample_assignments(toy.n, cfg.unit_size, cfg.assignments, 9);
    auto s = correlate(a, toy.pairs, 2, noise, toy.ratings, cfg);
    EXPECT_LT(std::abs(s.spearman_rho), 0.1);
    EXPECT_LT(std::abs(s.kendall_tau), 0.1);
    EXPECT_LT(s.rho_ci.lo, 0.0);
    EXPECT_GT(s.rho_ci.hi, 0.0);
    EXPECT_LE(s.tau_ci.lo, s.kendall_tau);
    EXPECT_GE(s.tau_ci.hi, s.kendall_tau);
}

TEST(Correlate, ThreadCountDoesNotChangeResults) {
    Toy toy(300, 3);
    std::vector<double> quality(300);
    for (std::size_t i = 0; i < quality.size(); ++i)
        quality[i] = std::sin(static_cast<double>(i));
    UnitMetric metric = [&](std::size_t s, std::span<const std::size_t> u) {
        return unit_mean(toy.ratings.values[s], u) + 0.3 * unit_mean(quality, u) * (s == 0 ? 1 : -1);
    };
    StudyConfig cfg;
    cfg.unit_size = 5;
    cfg.assignments = 64;
    cfg.bootstrap = 128;
    auto a = sample_assignments(toy.n, cfg.unit_size, cfg.assignments, 4);
    cfg.threads = 1;
    auto s1 = correlate(a, toy.pairs, 2, metric, toy.ratings, cfg);
    cfg.threads = 8;
    auto s8 = correlate(a, toy.pairs, 2, metric, toy.ratings, cfg);
    EXPECT_EQ(s1.spearman_rho, s8.spearman_rho);
    EXPECT_EQ(s1.kendall_tau, s8.kendall_tau);
    EXPECT_EQ(s1.rho_ci.lo, s8.rho_ci.lo);
    EXPECT_EQ(s1.rho_ci.hi, s8.rho_ci.hi);
    EXPECT_EQ(s1.tau_ci.lo, s8.tau_ci.lo);
    EXPECT_EQ(s1.tau_ci.hi, s8.tau_ci.hi);
}

TEST(Correlate, AllDegenerateIsAnError) {
    RatingTable r{{{0.0, 0.0}, {0.0, 0.0}}};
    UnitMetric metric = [](std::size_t, std::span<const std::size_t>) { return 0.5; };
    std::vector<Assignment> a{{{0}, {1}}};
    std::vector<SystemPair> pairs{{0, 1}};
    EXPECT_THROW(correlate(a, pairs, 2, metric, r, StudyConfig{}), DegenerateError);
}

TEST(Quantile, Type7) {
    std::vector<double> v{1, 2, 3, 4};
    EXPECT_EQ(quantile_sorted(v, 0.0), 1.0);
    EXPECT_EQ(quantile_sorted(v, 1.0), 4.0);
    EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.5), 2.5);
    EXPECT_DOUBLE_EQ(quantile_sorted(v, 0.025), 1.075);
}
