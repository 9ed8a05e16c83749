#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "excel_surv/error.hpp"
#include "excel_surv/random.hpp"

namespace excel_surv {

/// Right-censored survival data: one row of features per subject, the
/// observed time, and whether the event was observed (false = censored).
struct SurvivalDataset {
    Eigen::MatrixXd features;
    std::vector<double> times;
    std::vector<bool> events;
    std::vector<std::string> feature_names;

    [[nodiscard]] std::size_t n_subjects() const noexcept { return times.size(); }
    [[nodiscard]] std::size_t n_features() const noexcept { return feature_names.size(); }

    [[nodiscard]] std::size_t n_events() const noexcept
    {
        return static_cast<std::size_t>(std::count(events.begin(), events.end(), true));
    }

    [[nodiscard]] double censored_fraction() const noexcept
    {
        return times.empty() ? 0.0 : 1.0 - static_cast<double>(n_events()) / static_cast<double>(times.size());
    }

    // Throws InvalidDataset when any structural invariant is broken.
    void validate() const
    {
        const auto n = times.size();
        if (n < 2) {
            throw Error(ErrorCode::InvalidDataset, "need at least 2 subjects, got " + std::to_string(n));
        }
        if (feature_names.empty()) {
            throw Error(ErrorCode::InvalidDataset, "need at least 1 feature");
        }
        if (events.size() != n || static_cast<std::size_t>(features.rows()) != n
            || static_cast<std::size_t>(features.cols()) != feature_names.size()) {
            throw Error(ErrorCode::InvalidDataset, "features, times and events disagree on shape");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(times[i]) || times[i] <= 0.0) {
                throw Error(ErrorCode::NonPositiveTime, "row " + std::to_string(i));
            }
        }
        if (!features.allFinite()) {
            throw Error(ErrorCode::InvalidDataset, "non-finite feature value");
        }
        std::set<std::string_view> seen;
        for (const auto& name : feature_names) {
            if (!seen.insert(name).second) {
                throw Error(ErrorCode::InvalidDataset, "duplicate feature name '" + name + "'");
            }
        }
    }

    [[nodiscard]] SurvivalDataset subset(const std::vector<std::size_t>& rows) const
    {
        SurvivalDataset out;
        out.feature_names = feature_names;
        out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
        out.times.reserve(rows.size());
        out.events.reserve(rows.size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            out.features.row(static_cast<Eigen::Index>(r)) = features.row(static_cast<Eigen::Index>(rows[r]));
            out.times.push_back(times[rows[r]]);
            out.events.push_back(events[rows[r]]);
        }
        return out;
    }

    [[nodiscard]] std::size_t feature_index(std::string_view name) const
    {
        const auto it = std::find(feature_names.begin(), feature_names.end(), name);
        if (it == feature_names.end()) {
            throw Error(ErrorCode::UnknownFeature, std::string(name));
        }
        return static_cast<std::size_t>(it - feature_names.begin());
    }

    [[nodiscard]] SurvivalDataset select_features(const std::vector<std::string>& names) const
    {
        SurvivalDataset out;
        out.times = times;
        out.events = events;
        out.feature_names = names;
        out.features.resize(features.rows(), static_cast<Eigen::Index>(names.size()));
        for (std::size_t c = 0; c < names.size(); ++c) {
            out.features.col(static_cast<Eigen::Index>(c)) = features.col(static_cast<Eigen::Index>(feature_index(names[c])));
        }
        return out;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line)
{
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

inline std::string unquote(std::string_view s)
{
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') {
        s = s.substr(1, s.size() - 2);
    }
    return std::string(s);
}

// Strict parse: the whole cell must be a finite decimal number.
inline bool parse_double(std::string_view cell, double& out)
{
    if (cell.empty()) {
        return false;
    }
    if (cell.front() == '+') {
        cell.remove_prefix(1);
    }
    const auto* end = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(cell.data(), end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

} // namespace detail

/// Shortest decimal text that round-trips to the same double.
inline std::string format_number(double value)
{
    char buffer[32];
    const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, ptr);
}

/// Reads a comma-separated file with a header row. The named time and event
/// columns are pulled out; every other column becomes a feature, in header
/// order. Row numbers in errors are 1-based data rows (header excluded).
inline SurvivalDataset load_csv(const std::string& path, std::string_view time_column, std::string_view event_column)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::InvalidDataset, "'" + path + "' has no header row");
    }
    std::vector<std::string> header;
    for (auto cell : detail::split_csv_line(line)) {
        header.push_back(detail::unquote(cell));
    }
    const auto find_column = [&](std::string_view name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw Error(ErrorCode::MissingColumn, std::string(name));
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const auto time_col = find_column(time_column);
    const auto event_col = find_column(event_column);

    SurvivalDataset ds;
    std::vector<std::size_t> feature_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c != time_col && c != event_col) {
            feature_cols.push_back(c);
            ds.feature_names.push_back(header[c]);
        }
    }

    std::vector<double> values;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) {
            continue;
        }
        ++row;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorCode::InvalidDataset, "row " + std::to_string(row) + " has " + std::to_string(cells.size())
                                                       + " cells, header has " + std::to_string(header.size()));
        }
        for (std::size_t c = 0; c < cells.size(); ++c) {
            double v = 0.0;
            if (!detail::parse_double(cells[c], v)) {
                throw Error(ErrorCode::NonNumericCell, "row " + std::to_string(row) + ", column '" + header[c] + "'");
            }
            if (c == time_col) {
                if (v <= 0.0) {
                    throw Error(ErrorCode::NonPositiveTime, "row " + std::to_string(row));
                }
                ds.times.push_back(v);
            } else if (c == event_col) {
                if (v != 0.0 && v != 1.0) {
                    throw Error(ErrorCode::BadEventValue, "row " + std::to_string(row));
                }
                ds.events.push_back(v == 1.0);
            }
        }
        for (auto c : feature_cols) {
            double v = 0.0;
            detail::parse_double(cells[c], v);
            values.push_back(v);
        }
    }
    const auto n = static_cast<Eigen::Index>(ds.times.size());
    const auto d = static_cast<Eigen::Index>(feature_cols.size());
    ds.features = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), n, d);
    ds.validate();
    return ds;
}

inline void write_csv(const SurvivalDataset& ds, const std::string& path, std::string_view time_column = "time",
                      std::string_view event_column = "event")
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write '" + path + "'");
    }
    for (const auto& name : ds.feature_names) {
        out << name << ',';
    }
    out << time_column << ',' << event_column << '\n';
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
            out << format_number(ds.features(i, j)) << ',';
        }
        out << format_number(ds.times[static_cast<std::size_t>(i)]) << ',' << (ds.events[static_cast<std::size_t>(i)] ? 1 : 0)
            << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::Io, "write failed for '" + path + "'");
    }
}

/// Replaces each named column by one indicator column per distinct value,
/// named `<name>_<value>`. Indicators appear at the original column's
/// position, ordered by the lexicographic order of the value text.
inline SurvivalDataset one_hot_encode(const SurvivalDataset& ds, const std::vector<std::string>& categorical)
{
    std::set<std::size_t> cat_cols;
    for (const auto& name : categorical) {
        cat_cols.insert(ds.feature_index(name));
    }
    const auto n = ds.features.rows();
    std::vector<Eigen::VectorXd> columns;
    SurvivalDataset out;
    out.times = ds.times;
    out.events = ds.events;
    for (std::size_t c = 0; c < ds.n_features(); ++c) {
        const auto col = ds.features.col(static_cast<Eigen::Index>(c));
        if (!cat_cols.contains(c)) {
            columns.emplace_back(col);
            out.feature_names.push_back(ds.feature_names[c]);
            continue;
        }
        std::map<std::string, std::vector<Eigen::Index>> levels;
        for (Eigen::Index i = 0; i < n; ++i) {
            levels[format_number(col(i))].push_back(i);
        }
        for (const auto& [label, rows] : levels) {
            Eigen::VectorXd indicator = Eigen::VectorXd::Zero(n);
            for (auto i : rows) {
                indicator(i) = 1.0;
            }
            columns.push_back(std::move(indicator));
            out.feature_names.push_back(ds.feature_names[c] + "_" + label);
        }
    }
    out.features.resize(n, static_cast<Eigen::Index>(columns.size()));
    for (std::size_t c = 0; c < columns.size(); ++c) {
        out.features.col(static_cast<Eigen::Index>(c)) = columns[c];
    }
    out.validate();
    return out;
}

struct StandardizationTable {
    std::vector<double> means;
    std::vector<double> stdevs;
};

inline SurvivalDataset apply_standardization(const SurvivalDataset& ds, const StandardizationTable& table)
{
    if (table.means.size() != ds.n_features() || table.stdevs.size() != ds.n_features()) {
        throw Error(ErrorCode::ShapeMismatch, "standardization table does not match feature count");
    }
    SurvivalDataset out = ds;
    for (std::size_t c = 0; c < ds.n_features(); ++c) {
        auto col = out.features.col(static_cast<Eigen::Index>(c));
        col = (col.array() - table.means[c]) / table.stdevs[c];
    }
    return out;
}

/// Z-scores every column using the population standard deviation. Constant
/// columns are centered and keep a recorded stdev of 1.
inline std::pair<SurvivalDataset, StandardizationTable> standardize(const SurvivalDataset& ds)
{
    StandardizationTable table;
    const auto n = static_cast<double>(ds.features.rows());
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) {
        const auto col = ds.features.col(c);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / n;
        const double sd = std::sqrt(var);
        table.means.push_back(mean);
        table.stdevs.push_back(sd > 0.0 ? sd : 1.0);
    }
    return {apply_standardization(ds, table), std::move(table)};
}

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

inline std::size_t train_size(std::size_t n, double train_fraction)
{
    return static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction));
}

/// Row-index partition by a seeded uniform shuffle; the first
/// floor(N * fraction) shuffled rows train.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, const SplitSpec& spec)
{
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");
    }
    const auto n_train = train_size(n, spec.train_fraction);
    if (n_train < 2 || n - n_train < 1) {
        throw Error(ErrorCode::TooFewSubjects,
                    "split of " + std::to_string(n) + " subjects leaves " + std::to_string(n_train) + " train rows");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(spec.seed);
    rng.shuffle(order);
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    return {std::move(train), std::move(test)};
}

inline std::pair<SurvivalDataset, SurvivalDataset> train_test_split(const SurvivalDataset& ds, const SplitSpec& spec)
{
    const auto [train, test] = split_indices(ds.n_subjects(), spec);
    return {ds.subset(train), ds.subset(test)};
}

struct SynthSpec {
    std::size_t n_subjects = 400;
    std::size_t n_features = 20;
    std::size_t n_informative = 5;
    double censor_fraction = 0.3;
    double mean_scale = 1.0;
    std::size_t noise_pad = 0;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (n_subjects < 2 || n_features < 1) {
            throw Error(ErrorCode::InvalidArgument, "synthetic data needs n >= 2 and d >= 1");
        }
        if (n_informative < 1 || n_informative > n_features) {
            throw Error(ErrorCode::InvalidArgument, "n_informative must lie in [1, n_features]");
        }
        if (!(censor_fraction >= 0.0 && censor_fraction < 1.0)) {
            throw Error(ErrorCode::InvalidArgument, "censor_fraction must lie in [0, 1)");
        }
        if (!(mean_scale > 0.0) || !std::isfinite(mean_scale)) {
            throw Error(ErrorCode::InvalidArgument, "mean_scale must be positive");
        }
    }
};

struct SyntheticData {
    SurvivalDataset dataset;
    std::vector<std::size_t> informative_indices;
    std::vector<double> true_weights; // one per output column; zero off the informative set
};

/// Uniform [0,1] features, a sparse linear risk score, exponential survival
/// times with mean `mean_scale * exp(-risk)`, and a uniformly chosen set of
/// subjects censored at a time drawn uniformly before their event.
/// `noise_pad` pure-noise columns are appended after the base features.
inline SyntheticData generate_synthetic(const SynthSpec& spec)
{
    spec.validate();
    const auto n = spec.n_subjects;
    const auto d = spec.n_features;
    const auto d_total = d + spec.noise_pad;
    Rng rng(spec.seed);

    SyntheticData out;
    auto& ds = out.dataset;
    ds.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d_total));
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(d); ++j) {
            ds.features(i, j) = rng.uniform();
        }
    }

    std::vector<std::size_t> coords(d);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    rng.shuffle(coords);
    out.informative_indices.assign(coords.begin(), coords.begin() + static_cast<std::ptrdiff_t>(spec.n_informative));
    std::sort(out.informative_indices.begin(), out.informative_indices.end());
    out.true_weights.assign(d_total, 0.0);
    for (auto j : out.informative_indices) {
        const double magnitude = rng.uniform(0.5, 1.5);
        out.true_weights[j] = rng.uniform() < 0.5 ? -magnitude : magnitude;
    }

    ds.times.resize(n);
    ds.events.assign(n, true);
    for (std::size_t i = 0; i < n; ++i) {
        double risk = 0.0;
        for (auto j : out.informative_indices) {
            risk += out.true_weights[j] * ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        const double mean = spec.mean_scale * std::exp(-risk);
        ds.times[i] = -mean * std::log(rng.uniform_open());
    }

    const auto n_censored = static_cast<std::size_t>(std::llround(spec.censor_fraction * static_cast<double>(n)));
    std::vector<std::size_t> subjects(n);
    std::iota(subjects.begin(), subjects.end(), std::size_t{0});
    rng.shuffle(subjects);
    for (std::size_t c = 0; c < n_censored; ++c) {
        const auto i = subjects[c];
        ds.times[i] *= rng.uniform_open();
        ds.events[i] = false;
    }

    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
        for (auto j = static_cast<Eigen::Index>(d); j < static_cast<Eigen::Index>(d_total); ++j) {
            ds.features(i, j) = rng.uniform();
        }
    }

    for (std::size_t j = 0; j < d; ++j) {
        ds.feature_names.push_back("x_" + std::to_string(j));
    }
    for (std::size_t j = 0; j < spec.noise_pad; ++j) {
        ds.feature_names.push_back("noise_" + std::to_string(j));
    }
    ds.validate();
    return out;
}

inline nlohmann::json truth_to_json(const SyntheticData& data)
{
    return {{"informative_indices", data.informative_indices}, {"true_weights", data.true_weights}};
}

} // namespace excel_surv
