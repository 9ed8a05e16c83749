#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "excel_surv/error.hpp"

namespace excel_surv {

/// Subjects ordered by descending time, grouped by tied times. The risk set
/// {j : T_j >= T_i} of the subject at sorted position p is the prefix
/// [0, group_end[p]), so tied subjects share a risk set.
struct RiskOrder {
    std::vector<std::size_t> sorted_indices;
    std::vector<std::size_t> event_positions;
    std::vector<std::size_t> group_end;
    std::vector<bool> sorted_events;
    std::size_t n_events = 0;

    [[nodiscard]] std::size_t size() const noexcept { return sorted_indices.size(); }
};

inline RiskOrder build_risk_order(std::span<const double> times, const std::vector<bool>& events)
{
    if (times.size() != events.size()) {
        throw Error(ErrorCode::ShapeMismatch, "times and events differ in length");
    }
    RiskOrder order;
    const auto n = times.size();
    order.sorted_indices.resize(n);
    std::iota(order.sorted_indices.begin(), order.sorted_indices.end(), std::size_t{0});
    std::stable_sort(order.sorted_indices.begin(), order.sorted_indices.end(),
                     [&](std::size_t a, std::size_t b) { return times[a] > times[b]; });
    order.group_end.resize(n);
    order.sorted_events.resize(n);
    for (std::size_t p = 0; p < n;) {
        std::size_t q = p;
        while (q < n && times[order.sorted_indices[q]] == times[order.sorted_indices[p]]) {
            ++q;
        }
        for (std::size_t r = p; r < q; ++r) {
            order.group_end[r] = q;
        }
        p = q;
    }
    for (std::size_t p = 0; p < n; ++p) {
        order.sorted_events[p] = events[order.sorted_indices[p]];
        if (order.sorted_events[p]) {
            order.event_positions.push_back(p);
        }
    }
    order.n_events = order.event_positions.size();
    if (order.n_events == 0) {
        throw Error(ErrorCode::NoEvents, "no observed events");
    }
    return order;
}

namespace detail {

// Log-sum-exp accumulator that never exponentiates a positive number.
class RunningLogSumExp {
public:
    void add(double x)
    {
        if (x <= max_) {
            sum_ += std::exp(x - max_);
        } else {
            sum_ = sum_ * std::exp(max_ - x) + 1.0;
            max_ = x;
        }
    }

    [[nodiscard]] double value() const { return max_ + std::log(sum_); }

private:
    double max_ = -std::numeric_limits<double>::infinity();
    double sum_ = 0.0;
};

// log sum_{j in risk set} exp(s_j), evaluated once per tie group and
// indexed by sorted position.
inline std::vector<double> risk_set_log_sums(const Eigen::VectorXd& scores, const RiskOrder& order)
{
    const auto n = order.size();
    std::vector<double> lse(n);
    RunningLogSumExp acc;
    for (std::size_t p = 0; p < n;) {
        const auto end = order.group_end[p];
        for (auto r = p; r < end; ++r) {
            acc.add(scores(static_cast<Eigen::Index>(order.sorted_indices[r])));
        }
        const double value = acc.value();
        for (auto r = p; r < end; ++r) {
            lse[r] = value;
        }
        p = end;
    }
    return lse;
}

} // namespace detail

/// Average negative log partial likelihood (Breslow ties):
/// -(1/N_events) * sum_{i: E_i=1} [ s_i - log sum_{T_j >= T_i} exp(s_j) ].
inline double nlpl(const Eigen::VectorXd& scores, const RiskOrder& order)
{
    if (static_cast<std::size_t>(scores.size()) != order.size()) {
        throw Error(ErrorCode::ShapeMismatch, "score vector does not match risk order");
    }
    const auto lse = detail::risk_set_log_sums(scores, order);
    double total = 0.0;
    for (auto p : order.event_positions) {
        total += scores(static_cast<Eigen::Index>(order.sorted_indices[p])) - lse[p];
    }
    return -total / static_cast<double>(order.n_events);
}

/// Gradient of nlpl with respect to the scores.
inline Eigen::VectorXd nlpl_grad(const Eigen::VectorXd& scores, const RiskOrder& order)
{
    const auto n = order.size();
    if (static_cast<std::size_t>(scores.size()) != n) {
        throw Error(ErrorCode::ShapeMismatch, "score vector does not match risk order");
    }
    const auto lse = detail::risk_set_log_sums(scores, order);

    // For the tie group at sorted position p, log sum over events i whose risk
    // set contains the group of exp(-lse_i); accumulated from the back.
    std::vector<double> log_weight(n, -std::numeric_limits<double>::infinity());
    detail::RunningLogSumExp acc;
    bool any = false;
    for (std::size_t end = n; end > 0;) {
        std::size_t begin = end - 1;
        while (begin > 0 && order.group_end[begin - 1] == end) {
            --begin;
        }
        for (auto r = begin; r < end; ++r) {
            if (order.sorted_events[r]) {
                acc.add(-lse[r]);
                any = true;
            }
        }
        if (any) {
            for (auto r = begin; r < end; ++r) {
                log_weight[r] = acc.value();
            }
        }
        end = begin;
    }

    Eigen::VectorXd grad(static_cast<Eigen::Index>(n));
    const double scale = -1.0 / static_cast<double>(order.n_events);
    for (std::size_t p = 0; p < n; ++p) {
        const auto j = static_cast<Eigen::Index>(order.sorted_indices[p]);
        const double share = any ? std::exp(scores(j) + log_weight[p]) : 0.0;
        grad(j) = scale * ((order.sorted_events[p] ? 1.0 : 0.0) - share);
    }
    return grad;
}

/// Non-negative slack weights of the selection layer and the number of
/// features kept by the top-k operator.
struct SelectionWeights {
    Eigen::VectorXd w;
    std::size_t k = 1;
};

/// Result of the top-k operator: the sparsified vector and its support,
/// in ascending index order.
struct TopK {
    Eigen::VectorXd values;
    std::vector<std::size_t> mask;

    [[nodiscard]] Eigen::VectorXd indicator() const
    {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(values.size());
        for (auto j : mask) {
            out(static_cast<Eigen::Index>(j)) = 1.0;
        }
        return out;
    }
};

/// Indices sorted by value descending, ties by lower index.
inline std::vector<std::size_t> rank_descending(const Eigen::VectorXd& w)
{
    std::vector<std::size_t> idx(static_cast<std::size_t>(w.size()));
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return w(static_cast<Eigen::Index>(a)) > w(static_cast<Eigen::Index>(b));
    });
    return idx;
}

/// Keeps the k largest entries of w and zeroes the rest. Ties go to the
/// lowest index. The mask holds the retained entries that are nonzero.
inline TopK max_k(const Eigen::VectorXd& w, std::size_t k)
{
    const auto d = static_cast<std::size_t>(w.size());
    if (k < 1 || k > d) {
        throw Error(ErrorCode::InvalidArgument, "k must lie in [1, " + std::to_string(d) + "], got " + std::to_string(k));
    }
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), [&](std::size_t a, std::size_t b) {
        const double va = w(static_cast<Eigen::Index>(a));
        const double vb = w(static_cast<Eigen::Index>(b));
        return va > vb || (va == vb && a < b);
    });
    TopK out{Eigen::VectorXd::Zero(w.size()), {}};
    for (std::size_t r = 0; r < k; ++r) {
        const auto j = static_cast<Eigen::Index>(idx[r]);
        if (w(j) != 0.0) {
            out.values(j) = w(j);
            out.mask.push_back(idx[r]);
        }
    }
    std::sort(out.mask.begin(), out.mask.end());
    return out;
}

inline TopK max_k(const SelectionWeights& sel) { return max_k(sel.w, sel.k); }

struct LossWeights {
    double lambda0 = 1.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double lambda3 = 0.0;

    void validate() const
    {
        for (double v : {lambda0, lambda1, lambda2, lambda3}) {
            if (!std::isfinite(v) || v < 0.0) {
                throw Error(ErrorCode::InvalidArgument, "loss weights must be finite and non-negative");
            }
        }
    }
};

/// lambda0 * nlpl(full) + lambda2 * nlpl(masked) + lambda1 * reg_f + lambda3 * reg_w,
/// where reg_f is the squared L2 norm of the head and reg_w the L1 norm of w.
inline double excel_loss(const Eigen::VectorXd& head_scores_full, const Eigen::VectorXd& head_scores_masked,
                         const RiskOrder& order, const LossWeights& weights, double reg_f, double reg_w)
{
    double loss = weights.lambda1 * reg_f + weights.lambda3 * reg_w;
    if (weights.lambda0 != 0.0) {
        loss += weights.lambda0 * nlpl(head_scores_full, order);
    }
    if (weights.lambda2 != 0.0) {
        loss += weights.lambda2 * nlpl(head_scores_masked, order);
    }
    return loss;
}

/// Gradient for the selection weights. `input_grad_full` and
/// `input_grad_masked` are the per-sample gradients of the two nlpl terms
/// with respect to the head input z = w' * x (N x d). The masked term only
/// reaches coordinates inside the mask; the top-k operator is otherwise
/// treated as constant. The L1 term contributes +lambda3 everywhere, since
/// w is kept non-negative.
inline Eigen::VectorXd excel_grad_selection(const Eigen::MatrixXd& input_grad_full, const Eigen::MatrixXd& input_grad_masked,
                                            const Eigen::MatrixXd& inputs, const std::vector<std::size_t>& mask,
                                            const LossWeights& weights)
{
    const auto d = inputs.cols();
    Eigen::VectorXd grad = Eigen::VectorXd::Constant(d, weights.lambda3);
    if (weights.lambda0 != 0.0) {
        grad += weights.lambda0 * input_grad_full.cwiseProduct(inputs).colwise().sum().transpose();
    }
    if (weights.lambda2 != 0.0) {
        for (auto j : mask) {
            const auto c = static_cast<Eigen::Index>(j);
            grad(c) += weights.lambda2 * input_grad_masked.col(c).dot(inputs.col(c));
        }
    }
    return grad;
}

} // namespace excel_surv
