#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "excel_surv/data.hpp"

using namespace excel_surv;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& contents)
{
    const auto path = std::filesystem::temp_directory_path() / ("excel_surv_test_" + name);
    std::ofstream(path) << contents;
    return path;
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

SurvivalDataset tiny(const std::vector<double>& column)
{
    SurvivalDataset ds;
    ds.features = Eigen::Map<const Eigen::VectorXd>(column.data(), static_cast<Eigen::Index>(column.size()));
    ds.feature_names = {"a"};
    for (std::size_t i = 0; i < column.size(); ++i) {
        ds.times.push_back(1.0 + static_cast<double>(i));
        ds.events.push_back(true);
    }
    return ds;
}

} // namespace

TEST(LoadCsv, MinimalFile)
{
    const auto path = temp_file("min.csv", "x,time,event\n0.5,1.0,1\n-2,2.0,0\n");
    const auto ds = load_csv(path.string(), "time", "event");
    EXPECT_EQ(ds.n_subjects(), 2u);
    EXPECT_EQ(ds.n_features(), 1u);
    EXPECT_EQ(ds.times, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(ds.events, (std::vector<bool>{true, false}));
    EXPECT_DOUBLE_EQ(ds.features(1, 0), -2.0);
    EXPECT_DOUBLE_EQ(ds.censored_fraction(), 0.5);
}

TEST(LoadCsv, ColumnOrderAndQuotes)
{
    const auto path = temp_file("quoted.csv", "\"event\", time ,\"b\",a\r\n1,3,4,5\r\n0,2,6,7\r\n");
    const auto ds = load_csv(path.string(), "time", "event");
    EXPECT_EQ(ds.feature_names, (std::vector<std::string>{"b", "a"}));
    EXPECT_DOUBLE_EQ(ds.features(0, 1), 5.0);
    EXPECT_DOUBLE_EQ(ds.times[1], 2.0);
}

TEST(LoadCsv, Errors)
{
    EXPECT_EQ(code_of([] { load_csv(temp_file("e1.csv", "x,time,event\n1,1,2\n2,2,1\n").string(), "time", "event"); }),
              ErrorCode::BadEventValue);
    EXPECT_EQ(code_of([] { load_csv(temp_file("e2.csv", "x,time\n1,1\n2,2\n").string(), "time", "event"); }), ErrorCode::MissingColumn);
    EXPECT_EQ(code_of([] { load_csv(temp_file("e3.csv", "x,time,event\nabc,1,1\n2,2,1\n").string(), "time", "event"); }),
              ErrorCode::NonNumericCell);
    EXPECT_EQ(code_of([] { load_csv(temp_file("e4.csv", "x,time,event\n1,0,1\n2,2,1\n").string(), "time", "event"); }),
              ErrorCode::NonPositiveTime);
    EXPECT_EQ(code_of([] { load_csv(temp_file("e5.csv", "x,time,event\n1,1,1\n").string(), "time", "event"); }),
              ErrorCode::InvalidDataset);
    EXPECT_EQ(code_of([] { load_csv(temp_file("e6.csv", "x,time,event\n1,1,1\n2,2\n").string(), "time", "event"); }),
              ErrorCode::InvalidDataset);
    EXPECT_EQ(code_of([] { load_csv("/nonexistent/dir/file.csv", "time", "event"); }), ErrorCode::Io);
}

TEST(LoadCsv, RoundTripThroughWriter)
{
    SynthSpec spec;
    spec.n_subjects = 30;
    spec.n_features = 4;
    spec.n_informative = 2;
    spec.seed = 11;
    const auto ds = generate_synthetic(spec).dataset;
    const auto path = std::filesystem::temp_directory_path() / "excel_surv_test_roundtrip.csv";
    write_csv(ds, path.string());
    const auto back = load_csv(path.string(), "time", "event");
    EXPECT_EQ(back.feature_names, ds.feature_names);
    EXPECT_EQ(back.times, ds.times);
    EXPECT_EQ(back.events, ds.events);
    EXPECT_TRUE(back.features == ds.features);
}

TEST(OneHot, ThreeLevels)
{
    auto ds = tiny({2, 1, 3, 1});
    ds.feature_names = {"grade"};
    const auto out = one_hot_encode(ds, {"grade"});
    EXPECT_EQ(out.feature_names, (std::vector<std::string>{"grade_1", "grade_2", "grade_3"}));
    EXPECT_EQ(out.features.row(0), Eigen::RowVector3d(0, 1, 0));
    EXPECT_EQ(out.features.row(3), Eigen::RowVector3d(1, 0, 0));
    EXPECT_EQ(out.features.rowwise().sum(), Eigen::VectorXd::Ones(4));
}

TEST(OneHot, ConstantColumnGivesOnesAndUnknownNameFails)
{
    const auto out = one_hot_encode(tiny({4, 4, 4}), {"a"});
    EXPECT_EQ(out.feature_names, (std::vector<std::string>{"a_4"}));
    EXPECT_EQ(out.features.col(0), Eigen::VectorXd::Ones(3));
    EXPECT_EQ(code_of([] { one_hot_encode(tiny({1, 2}), {"zzz"}); }), ErrorCode::UnknownFeature);
}

TEST(Standardize, ClosedForm)
{
    const auto [out, table] = standardize(tiny({1, 2, 3}));
    EXPECT_NEAR(out.features(0, 0), -std::sqrt(1.5), 1e-15);
    EXPECT_NEAR(out.features(1, 0), 0.0, 1e-15);
    EXPECT_NEAR(out.features(2, 0), std::sqrt(1.5), 1e-15);
    EXPECT_NEAR(out.features(2, 0), 1.2247, 1e-4);
    const auto constant = standardize(tiny({5, 5, 5})).first;
    EXPECT_EQ(constant.features.col(0), Eigen::VectorXd::Zero(3));
}

TEST(Standardize, Idempotent)
{
    SynthSpec spec;
    spec.n_subjects = 50;
    spec.n_features = 6;
    spec.seed = 3;
    const auto once = standardize(generate_synthetic(spec).dataset).first;
    const auto twice = standardize(once).first;
    EXPECT_LT((once.features - twice.features).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Split, Cardinality)
{
    const auto [train, test] = split_indices(10, {0.8, 7});
    EXPECT_EQ(train.size(), 8u);
    EXPECT_EQ(test.size(), 2u);
    const auto [train2, test2] = split_indices(10, {0.8, 7});
    EXPECT_EQ(train, train2);
    EXPECT_EQ(test, test2);
    EXPECT_EQ(train_size(9105, 0.8), 7284u);
    EXPECT_EQ(split_indices(9105, {0.8, 1}).second.size(), 1821u);
}

TEST(Split, PartitionProperty)
{
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const std::size_t n = 6 + seed * 7;
        const auto [train, test] = split_indices(n, {0.5 + 0.008 * static_cast<double>(seed), seed});
        std::set<std::size_t> all(train.begin(), train.end());
        all.insert(test.begin(), test.end());
        EXPECT_EQ(all.size(), n);
        EXPECT_EQ(train.size() + test.size(), n);
        EXPECT_EQ(*all.rbegin(), n - 1);
    }
}

TEST(Split, Errors)
{
    EXPECT_EQ(code_of([] { split_indices(2, {0.8, 1}); }), ErrorCode::TooFewSubjects);
    EXPECT_EQ(code_of([] { split_indices(10, {1.0, 1}); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { split_indices(10, {0.0, 1}); }), ErrorCode::InvalidArgument);
}

TEST(Synthetic, ShapeAndNames)
{
    SynthSpec spec;
    spec.seed = 1;
    spec.noise_pad = 80;
    const auto data = generate_synthetic(spec);
    EXPECT_EQ(data.dataset.n_subjects(), 400u);
    EXPECT_EQ(data.dataset.n_features(), 100u);
    EXPECT_EQ(data.dataset.feature_names[20], "noise_0");
    EXPECT_EQ(data.dataset.feature_names[99], "noise_79");
    EXPECT_EQ(data.informative_indices.size(), 5u);
    for (auto j : data.informative_indices) {
        EXPECT_LT(j, 20u);
        EXPECT_NE(data.true_weights[j], 0.0);
    }
    EXPECT_GE(data.dataset.features.minCoeff(), 0.0);
    EXPECT_LT(data.dataset.features.maxCoeff(), 1.0);
}

TEST(Synthetic, CensoringAndRiskOrdering)
{
    SynthSpec spec;
    spec.seed = 5;
    const auto data = generate_synthetic(spec);
    const auto& ds = data.dataset;
    EXPECT_NEAR(ds.censored_fraction(), 0.3, 0.02);

    std::vector<std::pair<double, double>> risk_time;
    for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < ds.n_features(); ++j) {
            r += data.true_weights[j] * ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        risk_time.emplace_back(r, ds.times[i]);
    }
    std::sort(risk_time.begin(), risk_time.end());
    const std::size_t decile = ds.n_subjects() / 10;
    double low = 0.0, high = 0.0;
    for (std::size_t i = 0; i < decile; ++i) {
        low += risk_time[i].second;
        high += risk_time[ds.n_subjects() - 1 - i].second;
    }
    EXPECT_LT(high, low);
}

TEST(Synthetic, NoCensoringAndIdentityCase)
{
    SynthSpec spec;
    spec.n_subjects = 60;
    spec.n_features = 4;
    spec.n_informative = 4;
    spec.censor_fraction = 0.0;
    spec.seed = 9;
    const auto data = generate_synthetic(spec);
    EXPECT_EQ(data.dataset.n_events(), 60u);
    EXPECT_EQ(data.informative_indices, (std::vector<std::size_t>{0, 1, 2, 3}));

    // Same draws with censoring: censored times are truncations of the event times.
    spec.censor_fraction = 0.5;
    const auto censored = generate_synthetic(spec);
    for (std::size_t i = 0; i < 60; ++i) {
        if (censored.dataset.events[i]) {
            EXPECT_EQ(censored.dataset.times[i], data.dataset.times[i]);
        } else {
            EXPECT_LT(censored.dataset.times[i], data.dataset.times[i]);
        }
    }
}

TEST(Synthetic, Deterministic)
{
    SynthSpec spec;
    spec.seed = 42;
    spec.noise_pad = 3;
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    EXPECT_TRUE(a.dataset.features == b.dataset.features);
    EXPECT_EQ(a.dataset.times, b.dataset.times);
    EXPECT_EQ(a.dataset.events, b.dataset.events);
    EXPECT_EQ(a.true_weights, b.true_weights);
    spec.seed = 43;
    EXPECT_NE(generate_synthetic(spec).dataset.times, a.dataset.times);
}

TEST(Synthetic, InvalidSpec)
{
    SynthSpec spec;
    spec.n_informative = 21;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidArgument);
    spec = {};
    spec.censor_fraction = 1.0;
    EXPECT_EQ(code_of([&] { generate_synthetic(spec); }), ErrorCode::InvalidArgument);
}
