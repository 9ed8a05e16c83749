#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "excel_surv/bounds.hpp"
#include "excel_surv/data.hpp"
#include "excel_surv/metrics.hpp"
#include "excel_surv/model.hpp"
#include "excel_surv/parallel.hpp"
#include "excel_surv/random.hpp"

namespace excel_surv {

inline constexpr const char* kVersion = "0.1.0";

// Stream ids used with derive_seed so that splits, initializations and
// validation splits never share a random stream.
namespace streams {
inline constexpr std::uint64_t split = 0;
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t validation = 2;
inline constexpr std::uint64_t baseline = 3;
inline constexpr std::uint64_t data = 4;
inline constexpr std::uint64_t full_fit = 5;
inline constexpr std::uint64_t bounds = 6;
} // namespace streams

inline std::uint64_t split_seed(std::uint64_t seed, std::size_t split) { return derive_seed(seed, 1000 + split); }

struct MeanSd {
    double mean = 0.0;
    std::optional<double> sd; // sample standard deviation, only with >= 2 values
};

inline MeanSd mean_sd(const std::vector<double>& values)
{
    MeanSd out;
    out.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - out.mean) * (v - out.mean);
        }
        out.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

inline double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b)
{
    const std::set<std::size_t> sa(a.begin(), a.end());
    const std::set<std::size_t> sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (auto x : sa) {
        inter += sb.contains(x) ? 1 : 0;
    }
    const auto uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct JaccardSummary {
    std::vector<std::vector<double>> matrix;
    double mean = 1.0; // over distinct pairs
};

inline JaccardSummary pairwise_jaccard(const std::vector<std::vector<std::size_t>>& sets)
{
    JaccardSummary out;
    const auto n = sets.size();
    out.matrix.assign(n, std::vector<double>(n, 1.0));
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const double j = jaccard(sets[a], sets[b]);
            out.matrix[a][b] = out.matrix[b][a] = j;
            total += j;
            ++pairs;
        }
    }
    if (pairs > 0) {
        out.mean = total / static_cast<double>(pairs);
    }
    return out;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    TrainConfig config;
    bool grid_search = false;
    // Adds a bound report for the linear surrogate on the full standardized data.
    bool bounds = false;
    GridSpec grid;
    double validation_fraction = 0.2;
    std::size_t splits = 10;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct SplitEvaluation {
    std::uint64_t seed = 0;
    double ci_full = 0.0;
    double ci_masked = 0.0;
    double ibs_full = 0.0;
    double ibs_masked = 0.0;
    std::vector<std::size_t> mask;
    std::vector<double> ibs_grid;
    LossWeights weights;
    std::vector<double> loss_history;
};

/// CI and IBS of a trained model on held-out data. The baseline hazard and
/// the censoring distribution are estimated on the training data.
inline void evaluate_model(const TrainedModel& model, const SurvivalDataset& train_set, const SurvivalDataset& test_set, SplitEvaluation& out)
{
    const auto censor = censoring_km(train_set.times, train_set.events);
    out.ibs_grid = default_ibs_grid(test_set.times, test_set.events);
    for (bool masked : {false, true}) {
        const Eigen::VectorXd train_scores = forward(model, train_set.features, masked);
        const Eigen::VectorXd test_scores = forward(model, test_set.features, masked);
        const double ci = concordance_index(test_set.times, test_set.events, test_scores);
        const auto baseline = breslow_baseline(train_scores, train_set.times, train_set.events);
        const double score = ibs([&](double t) { return baseline.survival(t, test_scores); }, test_set.times, test_set.events, censor,
                                 out.ibs_grid);
        (masked ? out.ci_masked : out.ci_full) = ci;
        (masked ? out.ibs_masked : out.ibs_full) = score;
    }
}

inline nlohmann::json loss_summary(const std::vector<double>& history)
{
    if (history.empty()) {
        return nlohmann::json::object();
    }
    const bool descended = history.back() < history.front();
    return {{"epochs", history.size()},
            {"initial", history.front()},
            {"final", history.back()},
            {"min", *std::min_element(history.begin(), history.end())},
            {"descended", descended}};
}

inline nlohmann::json ranked_json(const TrainedModel& model)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& f : rank_features(model)) {
        out.push_back({{"name", f.name}, {"index", f.index}, {"weight", f.weight}});
    }
    return out;
}

inline nlohmann::json run_train(const SurvivalDataset& ds, const TrainOptions& options)
{
    ds.validate();
    options.config.validate(ds.n_features());
    if (options.splits < 1) {
        throw Error(ErrorCode::InvalidArgument, "splits must be at least 1");
    }

    std::vector<SplitEvaluation> results(options.splits);
    parallel_for(options.splits, [&](std::size_t s) {
        auto& r = results[s];
        r.seed = split_seed(options.seed, s);
        const auto [raw_train, raw_test] = train_test_split(ds, {options.train_fraction, derive_seed(r.seed, streams::split)});
        const auto [train_set, table] = standardize(raw_train);
        const auto test_set = apply_standardization(raw_test, table);

        TrainConfig cfg = options.config;
        cfg.seed = derive_seed(r.seed, streams::init);
        if (options.grid_search) {
            // With several splits the outer loop owns the threads.
            const std::size_t threads = options.splits > 1 ? 1 : thread_limit();
            cfg = grid_search(train_set, options.validation_fraction, options.grid, cfg, derive_seed(r.seed, streams::validation), threads)
                      .best;
        }
        const auto model = train(train_set, cfg);
        r.weights = cfg.weights;
        r.mask = model.mask;
        r.loss_history = model.loss_history;
        evaluate_model(model, train_set, test_set, r);
    });

    // Feature ranking reported from a fit on the whole standardized dataset.
    TrainConfig full_cfg = options.config;
    full_cfg.weights = results.front().weights;
    full_cfg.seed = derive_seed(options.seed, streams::full_fit);
    const auto full_model = train(standardize(ds).first, full_cfg);

    nlohmann::json report;
    report["version"] = kVersion;
    report["command"] = "train";
    nlohmann::json config = to_json(options.config);
    config["grid_search"] = options.grid_search;
    config["bounds"] = options.bounds;
    config["splits"] = options.splits;
    config["train_fraction"] = options.train_fraction;
    config["seed"] = options.seed;
    report["config"] = config;

    nlohmann::json splits = nlohmann::json::array();
    std::vector<double> ci_full, ci_masked, ibs_full, ibs_masked;
    for (const auto& r : results) {
        splits.push_back({{"seed", r.seed},
                          {"ci_full", r.ci_full},
                          {"ci_masked", r.ci_masked},
                          {"ibs_full", r.ibs_full},
                          {"ibs_masked", r.ibs_masked},
                          {"mask", r.mask},
                          {"weights", to_json(r.weights)},
                          {"ibs_grid", r.ibs_grid},
                          {"loss", loss_summary(r.loss_history)}});
        ci_full.push_back(r.ci_full);
        ci_masked.push_back(r.ci_masked);
        ibs_full.push_back(r.ibs_full);
        ibs_masked.push_back(r.ibs_masked);
    }
    report["splits"] = splits;

    nlohmann::json aggregate;
    const auto put = [&](const std::string& name, const std::vector<double>& values) {
        const auto stats = mean_sd(values);
        aggregate[name + "_mean"] = stats.mean;
        if (stats.sd) {
            aggregate[name + "_sd"] = *stats.sd;
        }
    };
    put("ci_full", ci_full);
    put("ci_masked", ci_masked);
    put("ibs_full", ibs_full);
    put("ibs_masked", ibs_masked);
    aggregate["n_splits"] = options.splits;
    aggregate["dispersion"] = "sample standard deviation";
    report["aggregate"] = aggregate;

    report["ranked_features"] = ranked_json(full_model);
    report["mask"] = full_model.mask;
    nlohmann::json mask_names = nlohmann::json::array();
    for (auto j : full_model.mask) {
        mask_names.push_back(ds.feature_names[j]);
    }
    report["mask_features"] = mask_names;
    report["n_features"] = ds.n_features();
    report["n_used_features"] = full_model.mask.size();
    report["variable_reduction_percent"] = variable_reduction_percent(ds.n_features(), full_model.mask.size());
    report["loss"] = loss_summary(full_model.loss_history);
    report["model"] = to_json(full_model);
    if (options.bounds) {
        const auto& w = full_cfg.weights;
        const BoundConfig bound_cfg{w.lambda2, w.lambda3, full_cfg.k, derive_seed(options.seed, streams::bounds)};
        report["bounds"] = to_json(verify_bounds(standardize(ds).first, bound_cfg));
    }
    return report;
}

// ---------------------------------------------------------------------------
// stability

struct StabilityOptions {
    TrainConfig config;
    std::size_t splits = 10;
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct StabilityResult {
    std::vector<std::vector<std::size_t>> excel_sets;
    std::vector<std::vector<std::size_t>> baseline_sets;
    JaccardSummary excel;
    JaccardSummary baseline;
};

/// Selected sets of EXCEL and of a magnitude-ranked plain Cox fit across
/// seeded splits, trained with the same epochs and learning rate.
inline StabilityResult stability_study(const SurvivalDataset& ds, const StabilityOptions& options)
{
    ds.validate();
    options.config.validate(ds.n_features());
    StabilityResult out;
    out.excel_sets.resize(options.splits);
    out.baseline_sets.resize(options.splits);
    parallel_for(options.splits, [&](std::size_t s) {
        const auto seed = split_seed(options.seed, s);
        const auto [train_rows, test_rows] = split_indices(ds.n_subjects(), {options.train_fraction, derive_seed(seed, streams::split)});
        const auto train_set = standardize(ds.subset(train_rows)).first;
        TrainConfig cfg = options.config;
        cfg.seed = derive_seed(seed, streams::init);
        out.excel_sets[s] = train(train_set, cfg).mask;
        const auto beta = fit_plain_cox(train_set, cfg.epochs, cfg.learning_rate, cfg.weights.lambda1, derive_seed(seed, streams::baseline));
        out.baseline_sets[s] = top_k_by_magnitude(beta, cfg.k);
    });
    out.excel = pairwise_jaccard(out.excel_sets);
    out.baseline = pairwise_jaccard(out.baseline_sets);
    return out;
}

inline nlohmann::json run_stability(const SurvivalDataset& ds, const StabilityOptions& options)
{
    const auto result = stability_study(ds, options);
    nlohmann::json config = to_json(options.config);
    config["splits"] = options.splits;
    config["train_fraction"] = options.train_fraction;
    config["seed"] = options.seed;
    return {{"version", kVersion},
            {"command", "stability"},
            {"config", config},
            {"excel", {{"selected", result.excel_sets}, {"jaccard", result.excel.matrix}, {"mean_jaccard", result.excel.mean}}},
            {"baseline",
             {{"method", "plain Cox, top-k by |coefficient|"},
              {"selected", result.baseline_sets},
              {"jaccard", result.baseline.matrix},
              {"mean_jaccard", result.baseline.mean}}}};
}

// ---------------------------------------------------------------------------
// validate

inline nlohmann::json to_json(const KmCurve& curve)
{
    return {{"times", curve.distinct_times}, {"survival", curve.survival}, {"at_risk", curve.at_risk}, {"events", curve.events_at}};
}

inline nlohmann::json to_json(const LogRankResult& r)
{
    return {{"chi_square", r.chi_square}, {"p_value", r.p_value},     {"observed1", r.observed1}, {"expected1", r.expected1},
            {"observed2", r.observed2},   {"expected2", r.expected2}, {"variance", r.variance}};
}

inline void write_km_csv(const KmCurve& curve, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    }
    out << "time,survival,at_risk,events\n";
    for (std::size_t i = 0; i < curve.distinct_times.size(); ++i) {
        out << format_number(curve.distinct_times[i]) << ',' << format_number(curve.survival[i]) << ',' << curve.at_risk[i] << ','
            << curve.events_at[i] << '\n';
    }
}

inline nlohmann::json run_validate(const SurvivalDataset& ds, const std::vector<std::string>& features, std::size_t clusters,
                                   std::uint64_t seed)
{
    const auto v = validate_groups(ds, features, clusters, seed);
    nlohmann::json groups = nlohmann::json::array();
    for (std::size_t g = 0; g < v.curves.size(); ++g) {
        groups.push_back({{"group", g}, {"size", v.group_sizes[g]}, {"km", to_json(v.curves[g])}});
    }
    nlohmann::json pairwise = nlohmann::json::array();
    for (const auto& p : v.pairwise) {
        auto entry = to_json(p.result);
        entry["group_a"] = p.group_a;
        entry["group_b"] = p.group_b;
        pairwise.push_back(entry);
    }
    return {{"version", kVersion},
            {"command", "validate"},
            {"config", {{"features", features}, {"clusters", clusters}, {"seed", seed}}},
            {"labels", v.labels},
            {"groups", groups},
            {"pairwise", pairwise}};
}

// ---------------------------------------------------------------------------
// bounds

struct BoundsOptions {
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    std::size_t k = 5;
    std::size_t seeds = 20;
    std::uint64_t seed = 0;
    std::optional<double> c0_cap;
    std::size_t max_iter = 200000;
    // Synthetic suite used when no dataset is supplied.
    SynthSpec synth{50, 10, 5, 0.3, 1.0, 0, 0};
};

/// One bound report per seed. With a dataset, each seed uses a seeded 80%
/// subsample; without one, each seed draws a fresh synthetic instance.
inline std::vector<BoundReport> bound_study(const SurvivalDataset* ds, const BoundsOptions& options)
{
    std::vector<BoundReport> reports(options.seeds);
    parallel_for(options.seeds, [&](std::size_t s) {
        const auto seed = split_seed(options.seed, s);
        SurvivalDataset instance;
        if (ds != nullptr) {
            const auto [rows, rest] = split_indices(ds->n_subjects(), {0.8, derive_seed(seed, streams::split)});
            instance = standardize(ds->subset(rows)).first;
        } else {
            SynthSpec spec = options.synth;
            spec.seed = derive_seed(seed, streams::data);
            instance = standardize(generate_synthetic(spec).dataset).first;
        }
        BoundConfig cfg{options.lambda2, options.lambda3, options.k, derive_seed(seed, streams::init), options.max_iter, 1e-6, options.c0_cap};
        reports[s] = verify_bounds(instance, cfg);
    });
    return reports;
}

inline nlohmann::json run_bounds(const SurvivalDataset* ds, const BoundsOptions& options)
{
    strong_convexity_mu(options.lambda2, options.lambda3);
    if (options.seeds < 1) {
        throw Error(ErrorCode::InvalidArgument, "seeds must be at least 1");
    }
    const auto reports = bound_study(ds, options);
    nlohmann::json arr = nlohmann::json::array();
    double thm1 = 0, thm2 = 0, cor1 = 0, conv = 0, lhs = 0;
    for (const auto& r : reports) {
        arr.push_back(to_json(r));
        thm1 += r.holds_thm1;
        thm2 += r.holds_thm2;
        cor1 += r.holds_cor1;
        conv += r.converged;
        lhs += r.lhs;
    }
    const double n = static_cast<double>(reports.size());
    nlohmann::json config = {{"lambda2", options.lambda2}, {"lambda3", options.lambda3}, {"k", options.k},
                             {"seeds", options.seeds},     {"seed", options.seed},       {"source", ds ? "data" : "synthetic"}};
    if (!ds) {
        config["n"] = options.synth.n_subjects;
        config["d"] = options.synth.n_features;
    }
    return {{"version", kVersion},
            {"command", "bounds"},
            {"config", config},
            {"bounds", arr},
            {"summary",
             {{"holds_thm1_frequency", thm1 / n},
              {"holds_thm2_frequency", thm2 / n},
              {"holds_cor1_frequency", cor1 / n},
              {"converged_frequency", conv / n},
              {"mean_lhs", lhs / n}}}};
}

} // namespace excel_surv
