#include <gtest/gtest.h>

#include "excel_surv/metrics.hpp"
#include "oracles.hpp"

using namespace excel_surv;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.begin(), static_cast<Eigen::Index>(v.size()));
}

Eigen::VectorXd random_vector(excel_surv::Rng& rng, std::size_t n)
{
    Eigen::VectorXd s(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        s(i) = rng.normal();
    }
    return s;
}

ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::Io;
}

} // namespace

TEST(Concordance, Anchors)
{
    const std::vector<double> t{1, 2, 3};
    const std::vector<bool> e{true, true, true};
    EXPECT_EQ(concordance_index(t, e, vec({3, 2, 1})), 1.0);
    EXPECT_EQ(concordance_index(t, e, vec({1, 2, 3})), 0.0);
    EXPECT_EQ(concordance_index(t, e, vec({2, 2, 2})), 0.5);
    EXPECT_EQ(code_of([] {
                  const std::vector<double> tt{1, 2};
                  concordance_index(tt, {false, false}, vec({1, 2}));
              }),
              ErrorCode::NoComparablePairs);
}

TEST(Concordance, SixSubjectsExact)
{
    const std::vector<double> t{2, 5, 3, 8, 1, 6};
    const std::vector<bool> e{true, false, true, true, false, true};
    const auto s = vec({0.5, -0.1, 0.9, 0.5, 2.0, -1.0});
    EXPECT_EQ(concordance_index(t, e, s), oracle::concordance(t, e, s));
}

TEST(Concordance, MatchesAllPairs)
{
    excel_surv::Rng rng(31);
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const std::size_t n = 2 + seed % 49;
        const auto ds = oracle::random_dataset(seed, n, 1, 0.4, seed % 2 == 0);
        Eigen::VectorXd s = random_vector(rng, n);
        if (seed % 3 == 0) {
            s = s.array().round(); // score ties
        }
        double expected = 0.0;
        try {
            expected = oracle::concordance(ds.times, ds.events, s);
        } catch (...) {
        }
        if (!std::isfinite(expected)) {
            continue;
        }
        EXPECT_NEAR(concordance_index(ds.times, ds.events, s), expected, 1e-10) << "seed " << seed;
    }
}

TEST(Concordance, Antisymmetry)
{
    excel_surv::Rng rng(4);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto ds = oracle::random_dataset(seed, 40, 1, 0.3, seed % 2 == 0);
        const auto s = random_vector(rng, 40);
        EXPECT_NEAR(concordance_index(ds.times, ds.events, s) + concordance_index(ds.times, ds.events, -s), 1.0, 1e-12);
    }
}

TEST(Concordance, RandomScoresNearHalf)
{
    excel_surv::Rng rng(2024);
    std::vector<double> t(1000);
    for (auto& v : t) {
        v = 0.01 + rng.uniform();
    }
    const auto s = random_vector(rng, 1000);
    EXPECT_NEAR(concordance_index(t, std::vector<bool>(1000, true), s), 0.5, 0.03);
}

TEST(KaplanMeier, ClosedForms)
{
    const std::vector<double> t{1, 2, 3};
    auto curve = km_estimator(t, {true, true, true});
    EXPECT_EQ(curve.distinct_times, (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(curve.survival, (std::vector<double>{2.0 / 3.0, 1.0 / 3.0, 0.0}));
    EXPECT_EQ(curve.at_risk, (std::vector<std::size_t>{3, 2, 1}));

    curve = km_estimator(t, {true, false, true});
    EXPECT_EQ(curve.distinct_times, (std::vector<double>{1, 3}));
    EXPECT_DOUBLE_EQ(curve.value_at(1.0), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(curve.value_at(2.5), 2.0 / 3.0);
    EXPECT_EQ(curve.value_at(3.0), 0.0);
    EXPECT_EQ(curve.value_at(0.5), 1.0);
    EXPECT_DOUBLE_EQ(curve.left_limit(3.0), 2.0 / 3.0);

    curve = km_estimator(t, {false, false, false});
    EXPECT_TRUE(curve.distinct_times.empty());
    EXPECT_EQ(curve.value_at(10.0), 1.0);
}

TEST(KaplanMeier, EmpiricalSurvivorWithoutCensoring)
{
    excel_surv::Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 1 + rng.index(200);
        std::vector<double> t(n);
        for (auto& v : t) {
            v = 1.0 + static_cast<double>(rng.index(n));
        }
        const auto curve = km_estimator(t, std::vector<bool>(n, true));
        for (std::size_t g = 0; g < curve.distinct_times.size(); ++g) {
            const auto beyond = std::count_if(t.begin(), t.end(), [&](double v) { return v > curve.distinct_times[g]; });
            EXPECT_EQ(curve.survival[g], static_cast<double>(beyond) / static_cast<double>(n));
        }
    }
}

TEST(KaplanMeier, MatchesProductLimit)
{
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const std::size_t n = 2 + seed % 49;
        const auto ds = oracle::random_dataset(seed, n, 1, 0.4, seed % 2 == 0);
        const auto curve = km_estimator(ds.times, ds.events);
        double prev = 1.0;
        for (std::size_t g = 0; g < curve.distinct_times.size(); ++g) {
            EXPECT_NEAR(curve.survival[g], oracle::km_at(ds.times, ds.events, curve.distinct_times[g]), 1e-10);
            EXPECT_LE(curve.survival[g], prev);
            prev = curve.survival[g];
        }
        for (double probe : ds.times) {
            EXPECT_NEAR(curve.value_at(probe), oracle::km_at(ds.times, ds.events, probe), 1e-10);
            EXPECT_NEAR(curve.left_limit(probe), oracle::km_before(ds.times, ds.events, probe), 1e-10);
        }
    }
}

TEST(CensoringKm, Rules)
{
    const std::vector<double> t{1, 2, 3, 4};
    EXPECT_TRUE(censoring_km(t, {true, true, true, true}).distinct_times.empty());
    const auto all_censored = censoring_km(t, {false, false, false, false});
    const auto plain = km_estimator(t, {true, true, true, true});
    EXPECT_EQ(all_censored.survival, plain.survival);

    const auto ds = oracle::random_dataset(12, 30, 1, 0.5, true);
    const auto flipped = oracle::flipped(ds.events);
    EXPECT_EQ(censoring_km(ds.times, ds.events).survival, km_estimator(ds.times, flipped).survival);
}

TEST(Breslow, HandComputation)
{
    const std::vector<double> t{1, 2};
    const auto h = breslow_baseline(vec({0, 0}), t, {true, true});
    EXPECT_EQ(h.event_times, (std::vector<double>{1, 2}));
    EXPECT_DOUBLE_EQ(h.value_at(1.0), 0.5);
    EXPECT_DOUBLE_EQ(h.value_at(2.0), 1.5);
    EXPECT_EQ(h.value_at(0.5), 0.0);
    EXPECT_NEAR(h.survival(1.0, vec({0}))(0), std::exp(-0.5), 1e-15);
}

TEST(Brier, Anchors)
{
    const std::vector<double> t{2, 3, 4};
    const std::vector<bool> e{true, true, true};
    const auto g = censoring_km(t, e);
    EXPECT_EQ(brier_score(1.0, Eigen::VectorXd::Ones(3), t, e, g), 0.0);
    EXPECT_DOUBLE_EQ(brier_score(5.0, Eigen::VectorXd::Constant(3, 0.5), t, e, g), 0.25);
}

TEST(Brier, MatchesPerSubjectSum)
{
    excel_surv::Rng rng(77);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const std::size_t n = 3 + seed % 48;
        const auto train = oracle::random_dataset(seed, n, 1, 0.3, seed % 2 == 0);
        const auto test = oracle::random_dataset(seed + 7777, n, 1, 0.3, seed % 2 == 0);
        const auto g = censoring_km(train.times, train.events);
        Eigen::VectorXd surv(static_cast<Eigen::Index>(n));
        for (Eigen::Index i = 0; i < surv.size(); ++i) {
            surv(i) = rng.uniform();
        }
        const double at = quantile(test.times, 0.5);
        double expected = 0.0;
        bool zero_weight = false;
        try {
            expected = oracle::brier(at, surv, test.times, test.events, train.times, train.events);
            zero_weight = !std::isfinite(expected);
        } catch (...) {
            zero_weight = true;
        }
        if (zero_weight) {
            EXPECT_THROW(brier_score(at, surv, test.times, test.events, g), Error);
            continue;
        }
        EXPECT_NEAR(brier_score(at, surv, test.times, test.events, g), expected, 1e-10) << "seed " << seed;
    }
}

TEST(Brier, UncensoredReducesToSquaredError)
{
    excel_surv::Rng rng(8);
    const auto ds = oracle::random_dataset(3, 40, 1, 0.0);
    const auto g = censoring_km(ds.times, ds.events);
    Eigen::VectorXd surv(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
        surv(i) = rng.uniform();
    }
    const double at = 5.0;
    double plain = 0.0;
    for (Eigen::Index i = 0; i < 40; ++i) {
        const double alive = ds.times[i] > at ? 1.0 : 0.0;
        plain += (alive - surv(i)) * (alive - surv(i));
    }
    EXPECT_NEAR(brier_score(at, surv, ds.times, ds.events, g), plain / 40.0, 1e-12);
}

TEST(Ibs, BaseCases)
{
    const std::vector<double> t{2, 3, 4, 5};
    const std::vector<bool> e{true, true, true, true};
    const auto g = censoring_km(t, e);
    // Constant predictions after every event give a constant Brier score.
    const std::vector<double> late{6, 7, 9};
    const auto c = ibs([](double) { return Eigen::VectorXd::Constant(4, 0.3); }, t, e, g, late);
    EXPECT_NEAR(c, 0.09, 1e-15);

    const std::vector<double> two{2.5, 4.5};
    const auto pred = [](double at) { return Eigen::VectorXd::Constant(4, std::exp(-at / 4.0)); };
    const double bs_a = brier_score(2.5, pred(2.5), t, e, g);
    const double bs_b = brier_score(4.5, pred(4.5), t, e, g);
    EXPECT_NEAR(ibs(pred, t, e, g, two), 0.5 * (bs_a + bs_b), 1e-15);

    const std::vector<double> one{3.0};
    EXPECT_THROW(ibs(pred, t, e, g, one), Error);
}

TEST(Ibs, GridRefinementMatchesFineIntegration)
{
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto train = oracle::random_dataset(seed, 50, 1, 0.3);
        const auto test = oracle::random_dataset(seed + 100, 50, 1, 0.3);
        const auto g = censoring_km(train.times, train.events);
        const double lo = quantile(test.times, 0.1);
        const double hi = quantile(test.times, 0.6);
        const auto pred = [&](double at) {
            Eigen::VectorXd s(50);
            for (Eigen::Index i = 0; i < 50; ++i) {
                s(i) = std::exp(-at * (0.05 + 0.002 * static_cast<double>(i)));
            }
            return s;
        };
        std::vector<double> grid(500);
        for (int k = 0; k < 500; ++k) {
            grid[k] = lo + (hi - lo) * k / 499.0;
        }
        const double fine = oracle::trapezoid([&](double at) { return oracle::brier(at, pred(at), test.times, test.events, train.times, train.events); },
                                              lo, hi, 1000);
        EXPECT_NEAR(ibs(pred, test.times, test.events, g, grid), fine, 1e-3) << "seed " << seed;
    }
}

TEST(Ibs, DefaultGridWithinQuantiles)
{
    const auto ds = oracle::random_dataset(5, 100, 1, 0.3);
    const auto grid = default_ibs_grid(ds.times, ds.events);
    const double lo = quantile(ds.times, 0.1);
    const double hi = quantile(ds.times, 0.9);
    ASSERT_GE(grid.size(), 2u);
    EXPECT_TRUE(std::is_sorted(grid.begin(), grid.end()));
    EXPECT_GE(grid.front(), lo);
    EXPECT_LE(grid.back(), hi);
    EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4}, 0.5), 2.5);
}

TEST(LogRank, IdenticalGroups)
{
    const std::vector<double> t{1, 2, 3, 4};
    const std::vector<bool> e{true, false, true, true};
    const auto r = log_rank(t, e, t, e);
    EXPECT_NEAR(r.chi_square, 0.0, 1e-15);
    EXPECT_NEAR(r.p_value, 1.0, 1e-15);
}

TEST(LogRank, ChiSquareTail)
{
    EXPECT_NEAR(chi_square_sf(3.84), 0.05, 5e-4);
    for (double x : {0.001, 0.1, 0.5, 1.0, 2.0, 3.84, 6.63, 10.0, 20.0, 50.0}) {
        EXPECT_NEAR(chi_square_sf(x), oracle::chi_square_1_sf(x), 5e-4 * oracle::chi_square_1_sf(x) + 1e-15) << x;
    }
    EXPECT_NEAR(chi_square_sf(4.0, 2.0), std::exp(-2.0), 1e-14);
}

TEST(LogRank, MatchesDirectCounting)
{
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const std::size_t n1 = 2 + seed % 24;
        const std::size_t n2 = 2 + (seed * 7) % 24;
        const auto a = oracle::random_dataset(seed, n1, 1, 0.3, seed % 2 == 0);
        const auto b = oracle::random_dataset(seed + 999, n2, 1, 0.3, seed % 2 == 0);
        const auto expected = oracle::log_rank(a.times, a.events, b.times, b.events);
        if (!(expected.variance > 0.0)) {
            continue;
        }
        const auto r = log_rank(a.times, a.events, b.times, b.events);
        EXPECT_NEAR(r.observed1, expected.observed1, 1e-10);
        EXPECT_NEAR(r.expected1, expected.expected1, 1e-10);
        EXPECT_NEAR(r.variance, expected.variance, 1e-10);
        EXPECT_NEAR(r.chi_square, expected.chi_square, 1e-10 * std::max(1.0, expected.chi_square));
        EXPECT_NEAR(r.p_value, oracle::chi_square_1_sf(expected.chi_square), 5e-4);
    }
}

TEST(LogRank, Invariances)
{
    const auto a = oracle::random_dataset(1, 20, 1, 0.3);
    const auto b = oracle::random_dataset(2, 25, 1, 0.3);
    const auto r = log_rank(a.times, a.events, b.times, b.events);
    const auto swapped = log_rank(b.times, b.events, a.times, a.events);
    EXPECT_NEAR(r.chi_square, swapped.chi_square, 1e-12);

    auto a_times = a.times;
    auto a_events = a.events;
    a_times.push_back(0.001);
    a_events.push_back(false);
    a_times.push_back(0.002);
    a_events.push_back(false);
    EXPECT_NEAR(log_rank(a_times, a_events, b.times, b.events).chi_square, r.chi_square, 1e-12);
}

TEST(LogRank, Degenerate)
{
    const std::vector<double> t{1, 2};
    const std::vector<double> none;
    EXPECT_EQ(code_of([&] { log_rank(t, {true, true}, none, {}); }), ErrorCode::DegenerateGroups);
    EXPECT_EQ(code_of([&] { log_rank(t, {false, false}, t, {false, false}); }), ErrorCode::DegenerateGroups);
}

TEST(KMeans, Anchors)
{
    Eigen::MatrixXd X(8, 1);
    X << 0, 0.5, 1, 0.2, 100, 100.5, 99.7, 101;
    const auto two = kmeans(X, 2, 3);
    for (int i = 1; i < 4; ++i) {
        EXPECT_EQ(two.labels[i], two.labels[0]);
        EXPECT_EQ(two.labels[4 + i], two.labels[4]);
    }
    EXPECT_NE(two.labels[0], two.labels[4]);

    const auto one = kmeans(X, 1, 3);
    EXPECT_TRUE(std::all_of(one.labels.begin(), one.labels.end(), [](std::size_t l) { return l == 0; }));

    const auto each = kmeans(X, 8, 3);
    EXPECT_EQ(each.inertia(), 0.0);
    std::set<std::size_t> distinct(each.labels.begin(), each.labels.end());
    EXPECT_EQ(distinct.size(), 8u);
}

TEST(KMeans, InertiaNonIncreasingAndDeterministic)
{
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto ds = oracle::random_dataset(seed, 120, 3);
        const auto r = kmeans(ds.features, 4, seed);
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
            EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-9);
        }
        EXPECT_EQ(kmeans(ds.features, 4, seed).labels, r.labels);
    }
}

TEST(ValidateGroups, PairCounts)
{
    SynthSpec spec;
    spec.n_subjects = 200;
    spec.seed = 4;
    const auto ds = generate_synthetic(spec);
    std::vector<std::string> names;
    for (auto j : ds.informative_indices) {
        names.push_back(ds.dataset.feature_names[j]);
    }
    const auto two = validate_groups(ds.dataset, names, 2, 1);
    EXPECT_EQ(two.pairwise.size(), 1u);
    EXPECT_EQ(two.curves.size(), 2u);
    const auto four = validate_groups(ds.dataset, names, 4, 1);
    EXPECT_EQ(four.pairwise.size(), 6u);
    std::size_t total = 0;
    for (auto s : four.group_sizes) {
        total += s;
    }
    EXPECT_EQ(total, 200u);
}

TEST(ValidateGroups, ConstantFeatureIsDegenerate)
{
    auto ds = oracle::random_dataset(3, 30, 2);
    ds.features.col(0).setConstant(7.0);
    EXPECT_EQ(code_of([&] { validate_groups(ds, {"f0"}, 2, 0); }), ErrorCode::DegenerateGroups);
}
