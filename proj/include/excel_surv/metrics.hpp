#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "excel_surv/data.hpp"
#include "excel_surv/error.hpp"
#include "excel_surv/loss.hpp"
#include "excel_surv/random.hpp"

namespace excel_surv {

namespace detail {

class Fenwick {
public:
    explicit Fenwick(std::size_t n)
        : tree_(n + 1, 0)
    {
    }

    void add(std::size_t i, std::int64_t v)
    {
        for (++i; i < tree_.size(); i += i & (~i + 1)) {
            tree_[i] += v;
        }
    }

    // Sum over [0, i).
    [[nodiscard]] std::int64_t prefix(std::size_t i) const
    {
        std::int64_t s = 0;
        for (; i > 0; i -= i & (~i + 1)) {
            s += tree_[i];
        }
        return s;
    }

private:
    std::vector<std::int64_t> tree_;
};

inline void check_lengths(std::size_t a, std::size_t b, std::size_t c)
{
    if (a != b || a != c) {
        throw Error(ErrorCode::ShapeMismatch, "times, events and scores differ in length");
    }
}

} // namespace detail

/// Harrell's C. A pair (i, j) is comparable when T_i < T_j and subject i had
/// the event; it is concordant when score_i > score_j and counts one half on
/// a score tie. Higher scores mean higher risk.
inline double concordance_index(std::span<const double> times, const std::vector<bool>& events, const Eigen::VectorXd& scores)
{
    const auto n = times.size();
    detail::check_lengths(n, events.size(), static_cast<std::size_t>(scores.size()));

    std::vector<double> distinct(scores.data(), scores.data() + scores.size());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<std::size_t> rank(n);
    for (std::size_t i = 0; i < n; ++i) {
        rank[i] = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), scores(static_cast<Eigen::Index>(i)))
                                           - distinct.begin());
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });

    // Walk time groups from the latest; the tree holds subjects with strictly
    // later times than the current group.
    detail::Fenwick tree(distinct.size());
    std::int64_t in_tree = 0;
    std::int64_t comparable = 0;
    std::int64_t twice_concordant = 0;
    for (std::size_t p = 0; p < n;) {
        std::size_t q = p;
        while (q < n && times[order[q]] == times[order[p]]) {
            ++q;
        }
        for (auto r = p; r < q; ++r) {
            const auto i = order[r];
            if (!events[i]) {
                continue;
            }
            const auto lower = tree.prefix(rank[i]);
            const auto equal = tree.prefix(rank[i] + 1) - lower;
            comparable += in_tree;
            twice_concordant += 2 * lower + equal;
        }
        for (auto r = p; r < q; ++r) {
            tree.add(rank[order[r]], 1);
            ++in_tree;
        }
        p = q;
    }
    if (comparable == 0) {
        throw Error(ErrorCode::NoComparablePairs, "no comparable pairs");
    }
    return static_cast<double>(twice_concordant) / (2.0 * static_cast<double>(comparable));
}

/// Product-limit survival estimate at each distinct event time.
struct KmCurve {
    std::vector<double> distinct_times;
    std::vector<double> survival;
    std::vector<std::size_t> at_risk;
    std::vector<std::size_t> events_at;

    // Right-continuous value S(t).
    [[nodiscard]] double value_at(double t) const
    {
        const auto it = std::upper_bound(distinct_times.begin(), distinct_times.end(), t);
        return it == distinct_times.begin() ? 1.0 : survival[static_cast<std::size_t>(it - distinct_times.begin()) - 1];
    }

    // Left limit S(t-).
    [[nodiscard]] double left_limit(double t) const
    {
        const auto it = std::lower_bound(distinct_times.begin(), distinct_times.end(), t);
        return it == distinct_times.begin() ? 1.0 : survival[static_cast<std::size_t>(it - distinct_times.begin()) - 1];
    }
};

inline KmCurve km_estimator(std::span<const double> times, const std::vector<bool>& events)
{
    const auto n = times.size();
    if (events.size() != n) {
        throw Error(ErrorCode::ShapeMismatch, "times and events differ in length");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return times[a] < times[b]; });

    // The product of (n_i - d_i) / n_i telescopes between censorings, so it is
    // carried as anchor * survivors / anchor_n and only rebased after a
    // censoring. Without censoring this is exactly (N - failed) / N.
    KmCurve curve;
    std::size_t at_risk = n;
    double anchor = 1.0;
    std::size_t anchor_n = n;
    std::size_t failed_since_anchor = 0;
    double current = 1.0;
    for (std::size_t p = 0; p < n;) {
        std::size_t q = p;
        std::size_t deaths = 0;
        while (q < n && times[order[q]] == times[order[p]]) {
            deaths += events[order[q]] ? 1 : 0;
            ++q;
        }
        const std::size_t removed = q - p;
        if (deaths > 0) {
            failed_since_anchor += deaths;
            current = anchor * static_cast<double>(anchor_n - failed_since_anchor) / static_cast<double>(anchor_n);
            curve.distinct_times.push_back(times[order[p]]);
            curve.survival.push_back(current);
            curve.at_risk.push_back(at_risk);
            curve.events_at.push_back(deaths);
        }
        at_risk -= removed;
        if (removed > deaths) {
            anchor = current;
            anchor_n = at_risk;
            failed_since_anchor = 0;
        }
        p = q;
    }
    return curve;
}

/// Kaplan-Meier of the censoring distribution, G(t).
inline KmCurve censoring_km(std::span<const double> times, const std::vector<bool>& events)
{
    std::vector<bool> flipped(events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        flipped[i] = !events[i];
    }
    return km_estimator(times, flipped);
}

struct BaselineHazard {
    std::vector<double> event_times;
    std::vector<double> cumulative_hazard;

    [[nodiscard]] double value_at(double t) const
    {
        const auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
        return it == event_times.begin() ? 0.0 : cumulative_hazard[static_cast<std::size_t>(it - event_times.begin()) - 1];
    }

    /// S(t | x) = exp(-H0(t) exp(score)) for each score.
    [[nodiscard]] Eigen::VectorXd survival(double t, const Eigen::VectorXd& scores) const
    {
        const double h = value_at(t);
        return (-h * scores.array().exp()).exp().matrix();
    }
};

/// Breslow estimator H0(t) = sum_{t_i <= t} d_i / sum_{T_j >= t_i} exp(s_j).
inline BaselineHazard breslow_baseline(const Eigen::VectorXd& scores, std::span<const double> times, const std::vector<bool>& events)
{
    detail::check_lengths(times.size(), events.size(), static_cast<std::size_t>(scores.size()));
    const auto order = build_risk_order(times, events);
    const auto lse = detail::risk_set_log_sums(scores, order);

    BaselineHazard out;
    // Walk tie groups from the earliest time backwards through the order.
    for (std::size_t end = order.size(); end > 0;) {
        std::size_t begin = end - 1;
        while (begin > 0 && order.group_end[begin - 1] == end) {
            --begin;
        }
        std::size_t deaths = 0;
        for (auto r = begin; r < end; ++r) {
            deaths += order.sorted_events[r] ? 1 : 0;
        }
        if (deaths > 0) {
            const double increment = static_cast<double>(deaths) * std::exp(-lse[begin]);
            out.event_times.push_back(times[order.sorted_indices[begin]]);
            out.cumulative_hazard.push_back((out.cumulative_hazard.empty() ? 0.0 : out.cumulative_hazard.back()) + increment);
        }
        end = begin;
    }
    return out;
}

/// IPCW Brier score at time t (Graf et al. weighting). Events at or before t
/// are weighted by 1/G(T_i-), subjects still at risk after t by 1/G(t);
/// subjects censored by t contribute zero.
inline double brier_score(double t, const Eigen::VectorXd& predicted_survival, std::span<const double> test_times,
                          const std::vector<bool>& test_events, const KmCurve& censor_curve)
{
    const auto n = test_times.size();
    detail::check_lengths(n, test_events.size(), static_cast<std::size_t>(predicted_survival.size()));
    double total = 0.0;
    const double g_t = censor_curve.value_at(t);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = predicted_survival(static_cast<Eigen::Index>(i));
        if (test_times[i] <= t && test_events[i]) {
            const double g = censor_curve.left_limit(test_times[i]);
            if (!(g > 0.0)) {
                throw Error(ErrorCode::ZeroCensorWeight, "G(T-) = 0 at t=" + format_number(test_times[i]));
            }
            total += s * s / g;
        } else if (test_times[i] > t) {
            if (!(g_t > 0.0)) {
                throw Error(ErrorCode::ZeroCensorWeight, "G(t) = 0 at t=" + format_number(t));
            }
            total += (1.0 - s) * (1.0 - s) / g_t;
        }
    }
    return total / static_cast<double>(n);
}

/// Linearly interpolated quantile of a sample (q in [0, 1]).
inline double quantile(std::vector<double> values, double q)
{
    if (values.empty()) {
        throw Error(ErrorCode::InvalidArgument, "quantile of empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Distinct event times of the test set, restricted to the 10%-90% quantile
/// range of all observed test times.
inline std::vector<double> default_ibs_grid(std::span<const double> test_times, const std::vector<bool>& test_events)
{
    const std::vector<double> all(test_times.begin(), test_times.end());
    const double lo = quantile(all, 0.1);
    const double hi = quantile(all, 0.9);
    std::vector<double> grid;
    for (std::size_t i = 0; i < test_times.size(); ++i) {
        if (test_events[i] && test_times[i] >= lo && test_times[i] <= hi) {
            grid.push_back(test_times[i]);
        }
    }
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    return grid;
}

/// Trapezoidal integral of BS(t) over the grid, divided by its span.
/// `predict(t)` returns the predicted survival of every test subject at t.
template <typename Predict>
double ibs(Predict&& predict, std::span<const double> test_times, const std::vector<bool>& test_events, const KmCurve& censor_curve,
           std::span<const double> grid)
{
    if (grid.size() < 2) {
        throw Error(ErrorCode::InvalidArgument, "integrated Brier score needs at least 2 grid points");
    }
    if (!std::is_sorted(grid.begin(), grid.end()) || grid.front() == grid.back()) {
        throw Error(ErrorCode::InvalidArgument, "grid must be ascending with positive span");
    }
    std::vector<double> bs(grid.size());
    for (std::size_t g = 0; g < grid.size(); ++g) {
        bs[g] = brier_score(grid[g], predict(grid[g]), test_times, test_events, censor_curve);
    }
    double area = 0.0;
    for (std::size_t g = 1; g < grid.size(); ++g) {
        area += 0.5 * (bs[g] + bs[g - 1]) * (grid[g] - grid[g - 1]);
    }
    return area / (grid.back() - grid.front());
}

/// Regularized upper incomplete gamma Q(a, x): power series for x < a + 1,
/// Lentz continued fraction otherwise.
inline double regularized_gamma_q(double a, double x)
{
    if (!(a > 0.0) || x < 0.0) {
        throw Error(ErrorCode::InvalidArgument, "incomplete gamma needs a > 0 and x >= 0");
    }
    if (x == 0.0) {
        return 1.0;
    }
    const double log_prefactor = a * std::log(x) - x - std::lgamma(a);
    constexpr int max_iter = 1000;
    constexpr double eps = 1e-16;
    if (x < a + 1.0) {
        double term = 1.0 / a;
        double sum = term;
        for (int n = 1; n < max_iter; ++n) {
            term *= x / (a + n);
            sum += term;
            if (std::abs(term) < std::abs(sum) * eps) {
                break;
            }
        }
        return 1.0 - sum * std::exp(log_prefactor);
    }
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < max_iter; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) {
            d = tiny;
        }
        c = b + an / c;
        if (std::abs(c) < tiny) {
            c = tiny;
        }
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < eps) {
            break;
        }
    }
    return std::exp(log_prefactor) * h;
}

/// Upper tail of the chi-square distribution.
inline double chi_square_sf(double x, double dof = 1.0)
{
    return regularized_gamma_q(0.5 * dof, 0.5 * x);
}

struct LogRankResult {
    double chi_square = 0.0;
    double p_value = 1.0;
    double observed1 = 0.0;
    double expected1 = 0.0;
    double observed2 = 0.0;
    double expected2 = 0.0;
    double variance = 0.0;
};

/// Two-group log-rank test with hypergeometric variance, 1 degree of freedom.
inline LogRankResult log_rank(std::span<const double> times1, const std::vector<bool>& events1, std::span<const double> times2,
                              const std::vector<bool>& events2)
{
    if (times1.empty() || times2.empty()) {
        throw Error(ErrorCode::DegenerateGroups, "a group is empty");
    }
    if (times1.size() != events1.size() || times2.size() != events2.size()) {
        throw Error(ErrorCode::ShapeMismatch, "times and events differ in length");
    }
    struct Obs {
        double t;
        bool event;
        bool first;
    };
    std::vector<Obs> pooled;
    for (std::size_t i = 0; i < times1.size(); ++i) {
        pooled.push_back({times1[i], events1[i], true});
    }
    for (std::size_t i = 0; i < times2.size(); ++i) {
        pooled.push_back({times2[i], events2[i], false});
    }
    std::sort(pooled.begin(), pooled.end(), [](const Obs& a, const Obs& b) { return a.t < b.t; });

    LogRankResult out;
    double n1 = static_cast<double>(times1.size());
    double n2 = static_cast<double>(times2.size());
    for (std::size_t p = 0; p < pooled.size();) {
        std::size_t q = p;
        double d1 = 0.0;
        double d2 = 0.0;
        double r1 = 0.0;
        double r2 = 0.0;
        while (q < pooled.size() && pooled[q].t == pooled[p].t) {
            (pooled[q].first ? r1 : r2) += 1.0;
            if (pooled[q].event) {
                (pooled[q].first ? d1 : d2) += 1.0;
            }
            ++q;
        }
        const double d = d1 + d2;
        const double n = n1 + n2;
        if (d > 0.0) {
            out.observed1 += d1;
            out.observed2 += d2;
            out.expected1 += d * n1 / n;
            out.expected2 += d * n2 / n;
            if (n > 1.0) {
                out.variance += n1 * n2 * d * (n - d) / (n * n * (n - 1.0));
            }
        }
        n1 -= r1;
        n2 -= r2;
        p = q;
    }
    if (out.observed1 + out.observed2 == 0.0) {
        throw Error(ErrorCode::DegenerateGroups, "no events in either group");
    }
    if (!(out.variance > 0.0)) {
        throw Error(ErrorCode::DegenerateGroups, "log-rank variance is zero");
    }
    const double diff = out.observed1 - out.expected1;
    out.chi_square = diff * diff / out.variance;
    out.p_value = chi_square_sf(out.chi_square, 1.0);
    return out;
}

struct KMeansResult {
    std::vector<std::size_t> labels;
    Eigen::MatrixXd centers;
    std::vector<double> inertia_history; // after each assignment step
    std::size_t iterations = 0;

    [[nodiscard]] double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

/// Lloyd's algorithm on squared Euclidean distance with k-means++ seeding.
/// Stops when assignments stop changing or after max_iter rounds. Empty
/// clusters keep their previous center; distance ties go to the lower label.
inline KMeansResult kmeans(const Eigen::MatrixXd& X, std::size_t n_clusters, std::uint64_t seed, std::size_t max_iter = 300)
{
    const auto n = static_cast<std::size_t>(X.rows());
    if (n_clusters < 1 || n_clusters > n) {
        throw Error(ErrorCode::InvalidArgument, "need 1 <= clusters <= rows");
    }
    Rng rng(seed);
    KMeansResult out;
    out.centers.resize(static_cast<Eigen::Index>(n_clusters), X.cols());

    std::vector<bool> chosen(n, false);
    std::size_t first = rng.index(n);
    chosen[first] = true;
    out.centers.row(0) = X.row(static_cast<Eigen::Index>(first));
    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) {
        nearest[i] = (X.row(static_cast<Eigen::Index>(i)) - out.centers.row(0)).squaredNorm();
    }
    for (std::size_t c = 1; c < n_clusters; ++c) {
        const double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
        std::size_t pick = n;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (nearest[i] <= 0.0) {
                    continue;
                }
                pick = i;
                target -= nearest[i];
                if (target < 0.0) {
                    break;
                }
            }
        } else {
            for (std::size_t i = 0; i < n && pick == n; ++i) {
                if (!chosen[i]) {
                    pick = i;
                }
            }
        }
        chosen[pick] = true;
        out.centers.row(static_cast<Eigen::Index>(c)) = X.row(static_cast<Eigen::Index>(pick));
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], (X.row(static_cast<Eigen::Index>(i)) - out.centers.row(static_cast<Eigen::Index>(c))).squaredNorm());
        }
    }

    out.labels.assign(n, n_clusters);
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < n_clusters; ++c) {
                const double dist = (X.row(static_cast<Eigen::Index>(i)) - out.centers.row(static_cast<Eigen::Index>(c))).squaredNorm();
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            inertia += best_d;
            if (out.labels[i] != best) {
                out.labels[i] = best;
                changed = true;
            }
        }
        out.inertia_history.push_back(inertia);
        out.iterations = iter + 1;
        if (!changed) {
            break;
        }
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(out.centers.rows(), out.centers.cols());
        std::vector<std::size_t> counts(n_clusters, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums.row(static_cast<Eigen::Index>(out.labels[i])) += X.row(static_cast<Eigen::Index>(i));
            ++counts[out.labels[i]];
        }
        for (std::size_t c = 0; c < n_clusters; ++c) {
            if (counts[c] > 0) {
                out.centers.row(static_cast<Eigen::Index>(c)) = sums.row(static_cast<Eigen::Index>(c)) / static_cast<double>(counts[c]);
            }
        }
    }
    return out;
}

struct PairwiseLogRank {
    std::size_t group_a = 0;
    std::size_t group_b = 0;
    LogRankResult result;
};

struct GroupValidation {
    std::vector<std::size_t> labels;
    std::vector<KmCurve> curves; // one per cluster
    std::vector<std::size_t> group_sizes;
    std::vector<PairwiseLogRank> pairwise;
};

/// Clusters subjects on the standardized named columns, then compares the
/// clusters' survival with Kaplan-Meier curves and pairwise log-rank tests.
inline GroupValidation validate_groups(const SurvivalDataset& ds, const std::vector<std::string>& features, std::size_t n_clusters,
                                       std::uint64_t seed)
{
    if (features.empty()) {
        throw Error(ErrorCode::InvalidArgument, "feature subset is empty");
    }
    const auto standardized = standardize(ds.select_features(features)).first;
    const auto clusters = kmeans(standardized.features, n_clusters, seed);

    GroupValidation out;
    out.labels = clusters.labels;
    std::vector<std::vector<double>> times(n_clusters);
    std::vector<std::vector<bool>> events(n_clusters);
    for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
        times[out.labels[i]].push_back(ds.times[i]);
        events[out.labels[i]].push_back(ds.events[i]);
    }
    for (std::size_t c = 0; c < n_clusters; ++c) {
        if (times[c].empty()) {
            throw Error(ErrorCode::DegenerateGroups, "cluster " + std::to_string(c) + " is empty");
        }
        out.group_sizes.push_back(times[c].size());
        out.curves.push_back(km_estimator(times[c], events[c]));
    }
    for (std::size_t a = 0; a < n_clusters; ++a) {
        for (std::size_t b = a + 1; b < n_clusters; ++b) {
            out.pairwise.push_back({a, b, log_rank(times[a], events[a], times[b], events[b])});
        }
    }
    return out;
}

} // namespace excel_surv
