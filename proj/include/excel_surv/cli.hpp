#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "excel_surv/data.hpp"
#include "excel_surv/error.hpp"
#include "excel_surv/experiments.hpp"
#include "excel_surv/model.hpp"

// Command-line front end. Exit codes: 0 success, 1 internal failure,
// 2 invalid input. Failures print {"error": {"code", "message"}} on stderr.

namespace excel_surv::cli {

enum ExitCode : int { kOk = 0, kFatal = 1, kInvalidInput = 2 };

namespace detail {

inline nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open '" + path + "'");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::InvalidArgument, "'" + path + "' is not valid JSON: " + e.what());
    }
}

inline void write_json(const nlohmann::json& doc, const std::string& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    }
    out << doc.dump(2) << '\n';
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for '" + path + "'");
    }
}

inline std::string scalar_text(const nlohmann::json& v)
{
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_float()) {
        return format_number(v.get<double>());
    }
    return v.dump();
}

// Turns a JSON config document into flag tokens. Keys mirror flag names
// (underscores are accepted for dashes); arrays become repeated values.
inline std::vector<std::string> config_tokens(const nlohmann::json& config)
{
    if (!config.is_object()) {
        throw Error(ErrorCode::InvalidArgument, "--config document must be a JSON object");
    }
    std::vector<std::string> tokens;
    for (const auto& [key, value] : config.items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (value.is_boolean()) {
            if (value.get<bool>()) {
                tokens.push_back(flag);
            }
        } else if (value.is_array()) {
            tokens.push_back(flag);
            for (const auto& item : value) {
                tokens.push_back(scalar_text(item));
            }
        } else if (!value.is_null()) {
            tokens.push_back(flag);
            tokens.push_back(scalar_text(value));
        }
    }
    return tokens;
}

inline std::vector<std::string> expand_config(std::vector<std::string> args)
{
    for (std::size_t i = 0; i + 1 < args.size(); ++i) {
        if (args[i] == "--config") {
            const auto tokens = config_tokens(read_json(args[i + 1]));
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            // Config values go first so explicit flags (last one wins) override them.
            const std::size_t insert_at = args.empty() ? 0 : 1;
            args.insert(args.begin() + static_cast<std::ptrdiff_t>(insert_at), tokens.begin(), tokens.end());
            return args;
        }
    }
    return args;
}

inline std::string sibling_path(const std::string& path, const std::string& suffix)
{
    std::filesystem::path p(path);
    return (p.parent_path() / (p.stem().string() + suffix)).string();
}

inline void print_error(std::ostream& err, const std::string& code, const std::string& message)
{
    err << nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump() << '\n';
}

} // namespace detail

struct DataFlags {
    std::string path;
    std::string time_column = "time";
    std::string event_column = "event";
    std::vector<std::string> categorical;

    void add_to(CLI::App& cmd, bool required = true)
    {
        auto* opt = cmd.add_option("--data", path, "Input CSV");
        if (required) {
            opt->required();
        }
        cmd.add_option("--time-col", time_column, "Name of the time column")->capture_default_str();
        cmd.add_option("--event-col", event_column, "Name of the event column (0/1)")->capture_default_str();
        cmd.add_option("--categorical", categorical, "Feature columns to one-hot encode");
    }

    [[nodiscard]] SurvivalDataset load() const
    {
        auto ds = load_csv(path, time_column, event_column);
        if (!categorical.empty()) {
            ds = one_hot_encode(ds, categorical);
        }
        return ds;
    }
};

struct ModelFlags {
    std::string head = "linear";
    std::vector<std::size_t> hidden{32};
    std::size_t k = 1;
    double lambda0 = 1.0;
    double lambda1 = 0.0001;
    double lambda2 = 1.0;
    double lambda3 = 0.0001;
    std::size_t epochs = 1000;
    double learning_rate = 1e-4;

    void add_to(CLI::App& cmd)
    {
        cmd.add_option("--head", head, "Scoring head: linear or mlp")->check(CLI::IsMember({"linear", "mlp"}))->capture_default_str();
        cmd.add_option("--hidden", hidden, "Hidden layer widths of the mlp head")->capture_default_str();
        cmd.add_option("--k", k, "Number of features kept by the top-k mask")->required();
        cmd.add_option("--lambda0", lambda0, "Weight of the full-model partial likelihood")->capture_default_str();
        cmd.add_option("--lambda1", lambda1, "Weight of the head L2 regularizer")->capture_default_str();
        cmd.add_option("--lambda2", lambda2, "Weight of the masked-model partial likelihood")->capture_default_str();
        cmd.add_option("--lambda3", lambda3, "Weight of the L1 penalty on selection weights")->capture_default_str();
        cmd.add_option("--epochs", epochs, "Full-batch Adam steps")->capture_default_str();
        cmd.add_option("--lr", learning_rate, "Adam learning rate")->capture_default_str();
    }

    [[nodiscard]] TrainConfig config() const
    {
        TrainConfig c;
        c.weights = {lambda0, lambda1, lambda2, lambda3};
        c.k = k;
        c.epochs = epochs;
        c.learning_rate = learning_rate;
        c.head = head == "mlp" ? HeadArchitecture::mlp(hidden) : HeadArchitecture::linear();
        return c;
    }
};

/// Runs one CLI invocation; `args` excludes the program name.
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    const auto started = std::chrono::steady_clock::now();
    const auto finish = [&](nlohmann::json report, const std::string& path) {
        report["wall_clock_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        detail::write_json(report, path);
        out << path << '\n';
    };

    CLI::App app{"Survival models with embedded top-k feature selection", "excel_surv"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    app.add_option("--config", "JSON document of flag values; explicit flags override it");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic survival dataset and its ground truth");
    SynthSpec synth_spec;
    std::string synth_out;
    synth->add_option("--n", synth_spec.n_subjects, "Subjects")->capture_default_str();
    synth->add_option("--d", synth_spec.n_features, "Base features")->capture_default_str();
    synth->add_option("--informative", synth_spec.n_informative, "Informative features")->capture_default_str();
    synth->add_option("--censor", synth_spec.censor_fraction, "Censored fraction")->capture_default_str();
    synth->add_option("--mean-scale", synth_spec.mean_scale, "Mean of the baseline exponential time")->capture_default_str();
    synth->add_option("--noise-pad", synth_spec.noise_pad, "Appended uniform-noise columns")->capture_default_str();
    synth->add_option("--seed", synth_spec.seed, "Random seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output CSV; ground truth goes to <stem>.truth.json")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "Train and evaluate over random train/test splits");
    DataFlags train_data;
    ModelFlags train_model;
    TrainOptions train_opts;
    std::string train_out;
    std::string model_out;
    train_data.add_to(*train_cmd);
    train_model.add_to(*train_cmd);
    train_cmd->add_flag("--grid-search", train_opts.grid_search, "Pick lambdas by validation CI over the default grid");
    train_cmd->add_flag("--bounds", train_opts.bounds, "Add the top-k truncation bound report (linear surrogate)");
    train_cmd->add_option("--splits", train_opts.splits, "Number of random 80:20 splits")->capture_default_str();
    train_cmd->add_option("--seed", train_opts.seed, "Random seed")->capture_default_str();
    train_cmd->add_option("--out", train_out, "Report JSON")->required();
    train_cmd->add_option("--model-out", model_out, "Also write the full-data model JSON");

    // stability
    auto* stab_cmd = app.add_subcommand("stability", "Selection stability across random splits");
    DataFlags stab_data;
    ModelFlags stab_model;
    StabilityOptions stab_opts;
    std::string stab_out;
    stab_data.add_to(*stab_cmd);
    stab_model.add_to(*stab_cmd);
    stab_cmd->add_option("--splits", stab_opts.splits, "Number of random splits")->capture_default_str();
    stab_cmd->add_option("--seed", stab_opts.seed, "Random seed")->capture_default_str();
    stab_cmd->add_option("--out", stab_out, "Report JSON")->required();

    // validate
    auto* val_cmd = app.add_subcommand("validate", "Cluster subjects on selected features; KM curves and log-rank tests");
    DataFlags val_data;
    std::string val_model;
    std::vector<std::string> val_features;
    std::size_t val_clusters = 2;
    std::uint64_t val_seed = 0;
    std::string val_out;
    val_data.add_to(*val_cmd);
    auto* model_opt = val_cmd->add_option("--model", val_model, "Model JSON whose mask names the features");
    auto* feat_opt = val_cmd->add_option("--features", val_features, "Explicit feature names");
    model_opt->excludes(feat_opt);
    val_cmd->add_option("--clusters", val_clusters, "Number of k-means clusters")->capture_default_str();
    val_cmd->add_option("--seed", val_seed, "Random seed")->capture_default_str();
    val_cmd->add_option("--out", val_out, "Report JSON; KM curves go to <stem>_km_group<g>.csv")->required();

    // bounds
    auto* bounds_cmd = app.add_subcommand("bounds", "Check the top-k truncation error bounds on linear fits");
    DataFlags bounds_data;
    BoundsOptions bounds_opts;
    std::string bounds_out;
    double c0_cap = 0.0;
    bounds_data.add_to(*bounds_cmd, false);
    bounds_cmd->add_option("--k", bounds_opts.k, "Top-k size")->capture_default_str();
    bounds_cmd->add_option("--lambda2", bounds_opts.lambda2, "Masked-term weight")->capture_default_str();
    bounds_cmd->add_option("--lambda3", bounds_opts.lambda3, "L2 weight on w")->capture_default_str();
    bounds_cmd->add_option("--seeds", bounds_opts.seeds, "Number of seeded instances")->capture_default_str();
    bounds_cmd->add_option("--seed", bounds_opts.seed, "Base random seed")->capture_default_str();
    bounds_cmd->add_option("--n", bounds_opts.synth.n_subjects, "Synthetic suite: subjects")->capture_default_str();
    bounds_cmd->add_option("--d", bounds_opts.synth.n_features, "Synthetic suite: features")->capture_default_str();
    bounds_cmd->add_option("--informative", bounds_opts.synth.n_informative, "Synthetic suite: informative features")
        ->capture_default_str();
    auto* cap_opt = bounds_cmd->add_option("--c0-cap", c0_cap, "A-priori bound on ||w||_2 for an extra corollary value");
    bounds_cmd->add_option("--out", bounds_out, "Report JSON")->required();

    try {
        args = detail::expand_config(std::move(args));
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        detail::print_error(err, "InvalidArgument", e.what());
        return kInvalidInput;
    } catch (const Error& e) {
        detail::print_error(err, std::string(to_string(e.code())), e.what());
        return is_input_error(e.code()) ? kInvalidInput : kFatal;
    }

    try {
        if (*synth) {
            const auto data = generate_synthetic(synth_spec);
            write_csv(data.dataset, synth_out);
            detail::write_json(truth_to_json(data), detail::sibling_path(synth_out, ".truth.json"));
            out << synth_out << '\n';
        } else if (*train_cmd) {
            train_opts.config = train_model.config();
            auto report = run_train(train_data.load(), train_opts);
            if (!model_out.empty()) {
                detail::write_json(report["model"], model_out);
            }
            finish(std::move(report), train_out);
        } else if (*stab_cmd) {
            stab_opts.config = stab_model.config();
            finish(run_stability(stab_data.load(), stab_opts), stab_out);
        } else if (*val_cmd) {
            const auto ds = val_data.load();
            std::vector<std::string> features = val_features;
            if (!val_model.empty()) {
                const auto model = model_from_json(detail::read_json(val_model));
                for (auto j : model.mask) {
                    if (j >= model.feature_names.size()) {
                        throw Error(ErrorCode::InvalidArgument, "model mask index out of range");
                    }
                    features.push_back(model.feature_names[j]);
                }
            }
            if (features.empty()) {
                throw Error(ErrorCode::InvalidArgument, "validate needs --model or --features");
            }
            auto report = run_validate(ds, features, val_clusters, val_seed);
            nlohmann::json csvs = nlohmann::json::array();
            for (const auto& group : report["groups"]) {
                KmCurve curve;
                curve.distinct_times = group["km"]["times"].get<std::vector<double>>();
                curve.survival = group["km"]["survival"].get<std::vector<double>>();
                curve.at_risk = group["km"]["at_risk"].get<std::vector<std::size_t>>();
                curve.events_at = group["km"]["events"].get<std::vector<std::size_t>>();
                const auto path = detail::sibling_path(val_out, "_km_group" + std::to_string(group["group"].get<std::size_t>()) + ".csv");
                write_km_csv(curve, path);
                csvs.push_back(std::filesystem::path(path).filename().string());
            }
            report["km_csv"] = csvs;
            finish(std::move(report), val_out);
        } else if (*bounds_cmd) {
            if (cap_opt->count() > 0) {
                bounds_opts.c0_cap = c0_cap;
            }
            if (bounds_data.path.empty()) {
                finish(run_bounds(nullptr, bounds_opts), bounds_out);
            } else {
                const auto ds = bounds_data.load();
                finish(run_bounds(&ds, bounds_opts), bounds_out);
            }
        }
    } catch (const Error& e) {
        detail::print_error(err, std::string(to_string(e.code())), e.what());
        return is_input_error(e.code()) ? kInvalidInput : kFatal;
    } catch (const std::exception& e) {
        detail::print_error(err, "Internal", e.what());
        return kFatal;
    }
    return kOk;
}

} // namespace excel_surv::cli
