#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "excel_surv/data.hpp"
#include "excel_surv/error.hpp"
#include "excel_surv/loss.hpp"
#include "excel_surv/random.hpp"

// Generalization bounds for the linear model whose weights double as the
// selection scores:
//   L(w) = nlpl(Xw) + lambda2 * nlpl(X max_k(w)) + lambda3/2 * |w|^2,  w >= 0,
// comparing the minimizer w_hat with its top-k truncation.

namespace excel_surv {

inline double strong_convexity_mu(double lambda2, double lambda3)
{
    const double mu = std::max(lambda2, lambda3);
    if (!(mu > 0.0)) {
        throw Error(ErrorCode::ZeroMu, "max(lambda2, lambda3) must be positive");
    }
    return mu;
}

/// (1 + lambda2) * max ||x_j|| + lambda3, the max taken over subjects that
/// belong to at least one risk set (T_j >= earliest event time).
inline double lipschitz_constant(const SurvivalDataset& ds, double lambda2, double lambda3)
{
    double earliest = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
        if (ds.events[i]) {
            earliest = std::min(earliest, ds.times[i]);
        }
    }
    const bool any_event = std::isfinite(earliest);
    double max_norm = 0.0;
    for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
        if (!any_event || ds.times[i] >= earliest) {
            max_norm = std::max(max_norm, ds.features.row(static_cast<Eigen::Index>(i)).norm());
        }
    }
    return (1.0 + lambda2) * max_norm + lambda3;
}

/// sum_i ||x_i||_2 over the whole dataset.
inline double feature_norm_sum(const SurvivalDataset& ds) { return ds.features.rowwise().norm().sum(); }

/// sum_{i: E_i=1} ( x_i - softmax-weighted mean of x over the risk set of i ),
/// with weights exp(x_j . w_top).
inline Eigen::VectorXd risk_set_contrast(const Eigen::VectorXd& w_top, const SurvivalDataset& ds)
{
    const auto order = build_risk_order(ds.times, ds.events);
    const Eigen::VectorXd scores = ds.features * w_top;
    const auto d = ds.features.cols();

    Eigen::VectorXd total = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd weighted = Eigen::VectorXd::Zero(d);
    double mass = 0.0;
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < order.size();) {
        const auto end = order.group_end[p];
        for (auto r = p; r < end; ++r) {
            const auto j = static_cast<Eigen::Index>(order.sorted_indices[r]);
            if (scores(j) > shift) {
                const double rescale = std::isfinite(shift) ? std::exp(shift - scores(j)) : 0.0;
                weighted *= rescale;
                mass *= rescale;
                shift = scores(j);
            }
            const double e = std::exp(scores(j) - shift);
            weighted += e * ds.features.row(j).transpose();
            mass += e;
        }
        for (auto r = p; r < end; ++r) {
            if (order.sorted_events[r]) {
                total += ds.features.row(static_cast<Eigen::Index>(order.sorted_indices[r])).transpose() - weighted / mass;
            }
        }
        p = end;
    }
    return total;
}

namespace detail {

// w_hat^T (I - I_d(k)) v: the inner product restricted to coordinates outside
// the top-k support of w_hat.
inline double off_mask_product(const Eigen::VectorXd& w_hat, std::size_t k, const Eigen::VectorXd& contrast)
{
    const auto top = max_k(w_hat, k);
    return (w_hat - top.values).dot(contrast);
}

} // namespace detail

/// Upper bound on ||w_hat - max_k(w_hat)||^2:
/// 2 / (mu N_events) * w_hat^T (I - I_d(k)) * contrast, mu = max(lambda2, lambda3).
inline double thm1_upper(const Eigen::VectorXd& w_hat, const SurvivalDataset& ds, double lambda2, double lambda3, std::size_t k)
{
    const double mu = strong_convexity_mu(lambda2, lambda3);
    const auto top = max_k(w_hat, k);
    const auto contrast = risk_set_contrast(top.values, ds);
    return 2.0 * detail::off_mask_product(w_hat, k, contrast) / (mu * static_cast<double>(ds.n_events()));
}

/// Lower bound on ||w_hat - max_k(w_hat)||^2 with denominator
/// ((1 + lambda2) C1 + lambda3) N_events.
inline double thm2_lower(const Eigen::VectorXd& w_hat, const SurvivalDataset& ds, double lambda2, double lambda3, std::size_t k,
                         double c1)
{
    const auto top = max_k(w_hat, k);
    const auto contrast = risk_set_contrast(top.values, ds);
    return detail::off_mask_product(w_hat, k, contrast) / (((1.0 + lambda2) * c1 + lambda3) * static_cast<double>(ds.n_events()));
}

/// 4 C0 C1 sqrt(d - k) / max(lambda2, lambda3).
inline double cor1_upper(double c0, double c1, std::size_t d, std::size_t k, double lambda2, double lambda3)
{
    if (k > d) {
        throw Error(ErrorCode::InvalidArgument, "k exceeds d");
    }
    return 4.0 * c0 * c1 * std::sqrt(static_cast<double>(d - k)) / strong_convexity_mu(lambda2, lambda3);
}

struct BoundConfig {
    double lambda2 = 1.0;
    double lambda3 = 1.0;
    std::size_t k = 1;
    std::uint64_t seed = 0;
    std::size_t max_iter = 200000;
    double tolerance = 1e-6;
    std::optional<double> c0_cap;
};

struct BoundFit {
    Eigen::VectorXd w;
    bool converged = false;
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
};

/// Gradient of the bound objective with the mask held fixed.
inline Eigen::VectorXd bound_objective_gradient(const Eigen::VectorXd& w, const std::vector<std::size_t>& mask, const SurvivalDataset& ds,
                                                const RiskOrder& order, double lambda2, double lambda3)
{
    Eigen::VectorXd top = Eigen::VectorXd::Zero(w.size());
    for (auto j : mask) {
        top(static_cast<Eigen::Index>(j)) = w(static_cast<Eigen::Index>(j));
    }
    Eigen::VectorXd grad = ds.features.transpose() * nlpl_grad(ds.features * w, order) + lambda3 * w;
    if (lambda2 != 0.0) {
        const Eigen::VectorXd masked = ds.features.transpose() * nlpl_grad(ds.features * top, order);
        for (auto j : mask) {
            grad(static_cast<Eigen::Index>(j)) += lambda2 * masked(static_cast<Eigen::Index>(j));
        }
    }
    return grad;
}

inline double bound_objective(const Eigen::VectorXd& w, std::size_t k, const SurvivalDataset& ds, const RiskOrder& order, double lambda2,
                              double lambda3)
{
    return nlpl(ds.features * w, order) + lambda2 * nlpl(ds.features * max_k(w, k).values, order) + 0.5 * lambda3 * w.squaredNorm();
}

/// Projected gradient descent on w >= 0 with step 1 / (smoothness bound),
/// recomputing the top-k mask each iteration. Stops when the projected
/// gradient norm drops below the tolerance.
inline BoundFit fit_bound_model(const SurvivalDataset& ds, const BoundConfig& cfg)
{
    const auto order = build_risk_order(ds.times, ds.events);
    const auto d = ds.features.cols();
    if (cfg.k < 1 || cfg.k > static_cast<std::size_t>(d)) {
        throw Error(ErrorCode::InvalidArgument, "k must lie in [1, d]");
    }
    // The partial-likelihood Hessian is a mixture of risk-set covariances,
    // bounded by max ||x||^2.
    const double max_sq = ds.features.rowwise().squaredNorm().maxCoeff();
    const double smoothness = (1.0 + cfg.lambda2) * max_sq + cfg.lambda3;
    const double step = 1.0 / std::max(smoothness, 1e-12);

    Rng rng(cfg.seed);
    BoundFit fit;
    fit.w.resize(d);
    for (Eigen::Index j = 0; j < d; ++j) {
        fit.w(j) = rng.uniform(0.999999, 0.9999999);
    }
    for (std::size_t iter = 0; iter < cfg.max_iter; ++iter) {
        const auto mask = max_k(fit.w, cfg.k).mask;
        const Eigen::VectorXd grad = bound_objective_gradient(fit.w, mask, ds, order, cfg.lambda2, cfg.lambda3);
        if (!grad.allFinite()) {
            throw Error(ErrorCode::NonFiniteLoss, "bound model diverged at iteration " + std::to_string(iter));
        }
        Eigen::VectorXd projected = grad;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (fit.w(j) <= 0.0 && projected(j) > 0.0) {
                projected(j) = 0.0;
            }
        }
        fit.gradient_norm = projected.norm();
        fit.iterations = iter;
        if (fit.gradient_norm < cfg.tolerance) {
            fit.converged = true;
            return fit;
        }
        fit.w = (fit.w - step * grad).cwiseMax(0.0);
    }
    fit.iterations = cfg.max_iter;
    return fit;
}

struct BoundReport {
    std::size_t d = 0;
    std::size_t k = 0;
    std::size_t n_events = 0;
    double lambda2 = 0.0;
    double lambda3 = 0.0;
    double lhs = 0.0;
    double thm1_upper = 0.0;
    double thm2_lower = 0.0;
    double cor1_upper = 0.0;
    std::optional<double> cor1_upper_cap;
    double mu = 0.0;
    double lipschitz_L = 0.0;
    double C0 = 0.0;
    std::optional<double> C0_cap;
    double C1 = 0.0;
    bool holds_thm1 = false;
    bool holds_thm2 = false;
    bool holds_cor1 = false;
    bool converged = false;
    std::size_t iterations = 0;
    double gradient_norm = 0.0;
    std::vector<double> w_hat;
    std::vector<std::size_t> mask;
};

inline BoundReport bound_report(const Eigen::VectorXd& w_hat, const SurvivalDataset& ds, const BoundConfig& cfg)
{
    BoundReport r;
    r.d = static_cast<std::size_t>(w_hat.size());
    r.k = cfg.k;
    r.n_events = ds.n_events();
    r.lambda2 = cfg.lambda2;
    r.lambda3 = cfg.lambda3;
    r.mu = strong_convexity_mu(cfg.lambda2, cfg.lambda3);
    const auto top = max_k(w_hat, cfg.k);
    r.lhs = (w_hat - top.values).squaredNorm();
    r.C0 = w_hat.norm();
    r.C1 = feature_norm_sum(ds);
    r.lipschitz_L = lipschitz_constant(ds, cfg.lambda2, cfg.lambda3);
    r.thm1_upper = thm1_upper(w_hat, ds, cfg.lambda2, cfg.lambda3, cfg.k);
    r.thm2_lower = thm2_lower(w_hat, ds, cfg.lambda2, cfg.lambda3, cfg.k, r.C1);
    r.cor1_upper = cor1_upper(r.C0, r.C1, r.d, cfg.k, cfg.lambda2, cfg.lambda3);
    if (cfg.c0_cap) {
        r.C0_cap = cfg.c0_cap;
        r.cor1_upper_cap = cor1_upper(*cfg.c0_cap, r.C1, r.d, cfg.k, cfg.lambda2, cfg.lambda3);
    }
    r.holds_thm1 = r.lhs <= r.thm1_upper;
    r.holds_thm2 = r.lhs >= r.thm2_lower;
    r.holds_cor1 = r.lhs <= r.cor1_upper;
    r.w_hat = {w_hat.data(), w_hat.data() + w_hat.size()};
    r.mask = top.mask;
    return r;
}

/// Fits w_hat and evaluates every bound against ||w_hat - max_k(w_hat)||^2.
/// A fit that hits the iteration cap still yields a report, with
/// `converged` cleared.
inline BoundReport verify_bounds(const SurvivalDataset& ds, const BoundConfig& cfg)
{
    strong_convexity_mu(cfg.lambda2, cfg.lambda3);
    const auto fit = fit_bound_model(ds, cfg);
    auto report = bound_report(fit.w, ds, cfg);
    report.converged = fit.converged;
    report.iterations = fit.iterations;
    report.gradient_norm = fit.gradient_norm;
    return report;
}

inline nlohmann::json to_json(const BoundReport& r)
{
    nlohmann::json j = {{"d", r.d},
                        {"k", r.k},
                        {"n_events", r.n_events},
                        {"lambda2", r.lambda2},
                        {"lambda3", r.lambda3},
                        {"lhs", r.lhs},
                        {"thm1_upper", r.thm1_upper},
                        {"thm2_lower", r.thm2_lower},
                        {"cor1_upper", r.cor1_upper},
                        {"mu", r.mu},
                        {"lipschitz_L", r.lipschitz_L},
                        {"C0", r.C0},
                        {"C1", r.C1},
                        {"holds_thm1", r.holds_thm1},
                        {"holds_thm2", r.holds_thm2},
                        {"holds_cor1", r.holds_cor1},
                        {"converged", r.converged},
                        {"iterations", r.iterations},
                        {"gradient_norm", r.gradient_norm},
                        {"w_hat", r.w_hat},
                        {"mask", r.mask}};
    if (r.C0_cap) {
        j["C0_cap"] = *r.C0_cap;
        j["cor1_upper_cap"] = *r.cor1_upper_cap;
    }
    return j;
}

inline BoundReport bound_report_from_json(const nlohmann::json& j)
{
    BoundReport r;
    r.d = j.at("d").get<std::size_t>();
    r.k = j.at("k").get<std::size_t>();
    r.n_events = j.at("n_events").get<std::size_t>();
    r.lambda2 = j.at("lambda2").get<double>();
    r.lambda3 = j.at("lambda3").get<double>();
    r.lhs = j.at("lhs").get<double>();
    r.thm1_upper = j.at("thm1_upper").get<double>();
    r.thm2_lower = j.at("thm2_lower").get<double>();
    r.cor1_upper = j.at("cor1_upper").get<double>();
    r.mu = j.at("mu").get<double>();
    r.lipschitz_L = j.at("lipschitz_L").get<double>();
    r.C0 = j.at("C0").get<double>();
    r.C1 = j.at("C1").get<double>();
    r.holds_thm1 = j.at("holds_thm1").get<bool>();
    r.holds_thm2 = j.at("holds_thm2").get<bool>();
    r.holds_cor1 = j.at("holds_cor1").get<bool>();
    r.converged = j.at("converged").get<bool>();
    r.iterations = j.at("iterations").get<std::size_t>();
    r.gradient_norm = j.at("gradient_norm").get<double>();
    r.w_hat = j.at("w_hat").get<std::vector<double>>();
    r.mask = j.at("mask").get<std::vector<std::size_t>>();
    if (j.contains("C0_cap")) {
        r.C0_cap = j.at("C0_cap").get<double>();
        r.cor1_upper_cap = j.at("cor1_upper_cap").get<double>();
    }
    return r;
}

} // namespace excel_surv
