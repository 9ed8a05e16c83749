#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "excel_surv/data.hpp"
#include "excel_surv/error.hpp"
#include "excel_surv/loss.hpp"
#include "excel_surv/metrics.hpp"
#include "excel_surv/parallel.hpp"
#include "excel_surv/random.hpp"

namespace excel_surv {

enum class HeadKind { Linear, Mlp };

struct HeadArchitecture {
    HeadKind kind = HeadKind::Linear;
    std::vector<std::size_t> hidden_sizes;

    static HeadArchitecture linear() { return {HeadKind::Linear, {}}; }
    static HeadArchitecture mlp(std::vector<std::size_t> hidden = {32}) { return {HeadKind::Mlp, std::move(hidden)}; }

    friend bool operator==(const HeadArchitecture&, const HeadArchitecture&) = default;
};

// Bias of size 0 means the layer has no bias.
struct DenseLayer {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;
};

/// Scoring function f. Hidden layers use tanh; the last layer is a single
/// linear output without bias (a constant shift cancels in the partial
/// likelihood). The linear head is the 1 x d output layer alone.
struct HeadParams {
    HeadArchitecture architecture;
    std::vector<DenseLayer> layers;

    [[nodiscard]] std::size_t input_dim() const { return static_cast<std::size_t>(layers.front().weight.cols()); }

    [[nodiscard]] double squared_norm() const
    {
        double total = 0.0;
        for (const auto& layer : layers) {
            total += layer.weight.squaredNorm() + layer.bias.squaredNorm();
        }
        return total;
    }

    [[nodiscard]] std::size_t parameter_count() const
    {
        std::size_t total = 0;
        for (const auto& layer : layers) {
            total += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
        }
        return total;
    }

    [[nodiscard]] Eigen::VectorXd pack() const
    {
        Eigen::VectorXd flat(static_cast<Eigen::Index>(parameter_count()));
        Eigen::Index pos = 0;
        for (const auto& layer : layers) {
            flat.segment(pos, layer.weight.size()) = layer.weight.reshaped();
            pos += layer.weight.size();
            flat.segment(pos, layer.bias.size()) = layer.bias;
            pos += layer.bias.size();
        }
        return flat;
    }

    void unpack(const Eigen::VectorXd& flat)
    {
        Eigen::Index pos = 0;
        for (auto& layer : layers) {
            layer.weight.reshaped() = flat.segment(pos, layer.weight.size());
            pos += layer.weight.size();
            layer.bias = flat.segment(pos, layer.bias.size());
            pos += layer.bias.size();
        }
    }
};

struct ForwardPass {
    std::vector<Eigen::MatrixXd> activations; // activations[0] is the head input
    Eigen::VectorXd scores;
};

inline ForwardPass forward_pass(const HeadParams& head, const Eigen::MatrixXd& inputs)
{
    ForwardPass pass;
    pass.activations.push_back(inputs);
    for (std::size_t l = 0; l < head.layers.size(); ++l) {
        const auto& layer = head.layers[l];
        Eigen::MatrixXd out = pass.activations.back() * layer.weight.transpose();
        if (layer.bias.size() > 0) {
            out.rowwise() += layer.bias.transpose();
        }
        if (l + 1 < head.layers.size()) {
            pass.activations.push_back(out.array().tanh().matrix());
        } else {
            pass.scores = out.col(0);
        }
    }
    return pass;
}

struct HeadGradient {
    std::vector<DenseLayer> layers;
    Eigen::MatrixXd input_grad; // N x d, d(loss)/d(head input)
};

/// Backpropagates d(loss)/d(scores) through the head.
inline HeadGradient backward_pass(const HeadParams& head, const ForwardPass& pass, const Eigen::VectorXd& score_grad)
{
    HeadGradient grad;
    grad.layers.resize(head.layers.size());
    Eigen::MatrixXd delta = score_grad;
    for (std::size_t l = head.layers.size(); l-- > 0;) {
        const auto& layer = head.layers[l];
        const auto& input = pass.activations[l];
        grad.layers[l].weight = delta.transpose() * input;
        if (layer.bias.size() > 0) {
            grad.layers[l].bias = delta.colwise().sum().transpose();
        } else {
            grad.layers[l].bias.resize(0);
        }
        delta = delta * layer.weight;
        if (l > 0) {
            delta.array() *= 1.0 - input.array().square();
        }
    }
    grad.input_grad = std::move(delta);
    return grad;
}

struct TrainConfig {
    LossWeights weights{1.0, 0.0001, 1.0, 0.0001};
    std::size_t k = 1;
    std::size_t epochs = 1000;
    double learning_rate = 1e-4;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    HeadArchitecture head = HeadArchitecture::linear();

    void validate(std::size_t d) const
    {
        weights.validate();
        if (k < 1 || k > d) {
            throw Error(ErrorCode::InvalidArgument, "k must lie in [1, " + std::to_string(d) + "], got " + std::to_string(k));
        }
        if (epochs < 1) {
            throw Error(ErrorCode::InvalidArgument, "epochs must be at least 1");
        }
        if (!(learning_rate > 0.0)) {
            throw Error(ErrorCode::InvalidArgument, "learning_rate must be positive");
        }
        for (auto h : head.hidden_sizes) {
            if (h == 0) {
                throw Error(ErrorCode::InvalidArgument, "hidden sizes must be positive");
            }
        }
    }
};

struct TrainedModel {
    HeadParams head;
    SelectionWeights selection;
    std::vector<std::size_t> mask;
    std::vector<double> loss_history;
    TrainConfig config;
    std::vector<std::string> feature_names;

    [[nodiscard]] std::size_t n_features() const { return static_cast<std::size_t>(selection.w.size()); }
};

namespace detail {

inline DenseLayer xavier_layer(Rng& rng, std::size_t fan_in, std::size_t fan_out, bool with_bias)
{
    const double sd = std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer;
    layer.weight.resize(static_cast<Eigen::Index>(fan_out), static_cast<Eigen::Index>(fan_in));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
        for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
            layer.weight(r, c) = sd * rng.normal();
        }
    }
    layer.bias = with_bias ? Eigen::VectorXd::Zero(static_cast<Eigen::Index>(fan_out)) : Eigen::VectorXd();
    return layer;
}

} // namespace detail

inline HeadParams init_head(std::size_t d, const HeadArchitecture& architecture, Rng& rng)
{
    HeadParams head{architecture, {}};
    std::size_t fan_in = d;
    if (architecture.kind == HeadKind::Mlp) {
        for (auto width : architecture.hidden_sizes) {
            head.layers.push_back(detail::xavier_layer(rng, fan_in, width, true));
            fan_in = width;
        }
    }
    head.layers.push_back(detail::xavier_layer(rng, fan_in, 1, false));
    return head;
}

/// Untrained model: selection weights uniform on [0.999999, 0.9999999],
/// head weights Xavier normal, biases zero.
inline TrainedModel init_model(std::size_t d, const TrainConfig& config)
{
    if (d < 1) {
        throw Error(ErrorCode::InvalidArgument, "need at least one feature");
    }
    Rng rng(config.seed);
    TrainedModel model;
    model.config = config;
    model.selection.k = config.k;
    model.selection.w.resize(static_cast<Eigen::Index>(d));
    for (Eigen::Index j = 0; j < model.selection.w.size(); ++j) {
        model.selection.w(j) = rng.uniform(0.999999, 0.9999999);
    }
    model.head = init_head(d, config.head, rng);
    model.mask = max_k(model.selection).mask;
    return model;
}

inline Eigen::MatrixXd scale_columns(const Eigen::MatrixXd& X, const Eigen::VectorXd& w)
{
    return X * w.asDiagonal();
}

/// Scores f(diag(w') x) with w' = w, or the top-k of w when use_mask is set.
inline Eigen::VectorXd forward(const TrainedModel& model, const Eigen::MatrixXd& X, bool use_mask)
{
    if (static_cast<std::size_t>(X.cols()) != model.n_features()) {
        throw Error(ErrorCode::ShapeMismatch,
                    "model expects " + std::to_string(model.n_features()) + " features, got " + std::to_string(X.cols()));
    }
    const Eigen::VectorXd w = use_mask ? max_k(model.selection).values : model.selection.w;
    return forward_pass(model.head, scale_columns(X, w)).scores;
}

/// Loss value and gradients of the full objective with a frozen mask.
struct ObjectiveGradient {
    double loss = 0.0;
    double nlpl_full = 0.0;
    double nlpl_masked = 0.0;
    Eigen::VectorXd head;      // packed like HeadParams::pack
    Eigen::VectorXd selection; // d
};

inline TopK frozen_top_k(const Eigen::VectorXd& w, const std::vector<std::size_t>& mask)
{
    TopK top{Eigen::VectorXd::Zero(w.size()), mask};
    for (auto j : mask) {
        top.values(static_cast<Eigen::Index>(j)) = w(static_cast<Eigen::Index>(j));
    }
    return top;
}

inline ObjectiveGradient excel_objective(const HeadParams& head, const Eigen::VectorXd& w, const std::vector<std::size_t>& mask,
                                         const Eigen::MatrixXd& X, const RiskOrder& order, const LossWeights& weights,
                                         bool with_gradient = true)
{
    const auto top = frozen_top_k(w, mask);
    const auto full = forward_pass(head, scale_columns(X, w));
    const auto masked = forward_pass(head, scale_columns(X, top.values));

    ObjectiveGradient out;
    out.nlpl_full = nlpl(full.scores, order);
    out.nlpl_masked = nlpl(masked.scores, order);
    out.loss = excel_loss(full.scores, masked.scores, order, weights, head.squared_norm(), w.lpNorm<1>());
    if (!with_gradient) {
        return out;
    }

    const auto grad_full = backward_pass(head, full, nlpl_grad(full.scores, order));
    const auto grad_masked = backward_pass(head, masked, nlpl_grad(masked.scores, order));

    HeadParams combined = head;
    for (std::size_t l = 0; l < head.layers.size(); ++l) {
        combined.layers[l].weight = weights.lambda0 * grad_full.layers[l].weight + weights.lambda2 * grad_masked.layers[l].weight
                                    + 2.0 * weights.lambda1 * head.layers[l].weight;
        if (head.layers[l].bias.size() > 0) {
            combined.layers[l].bias = weights.lambda0 * grad_full.layers[l].bias + weights.lambda2 * grad_masked.layers[l].bias
                                      + 2.0 * weights.lambda1 * head.layers[l].bias;
        }
    }
    out.head = combined.pack();

    // The head sees z = w' * x, so d(loss)/dz_ij times the scale on x_ij.
    out.selection = excel_grad_selection(grad_full.input_grad, grad_masked.input_grad, X, mask, weights);
    return out;
}

/// Adam over a flat parameter vector.
class Adam {
public:
    Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon)
        : lr_(learning_rate)
        , beta1_(beta1)
        , beta2_(beta2)
        , epsilon_(epsilon)
        , m_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size)))
        , v_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size)))
    {
    }

    void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad)
    {
        ++t_;
        m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
        v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + epsilon_);
    }

private:
    double lr_;
    double beta1_;
    double beta2_;
    double epsilon_;
    std::size_t t_ = 0;
    Eigen::VectorXd m_;
    Eigen::VectorXd v_;
};

/// Full-batch Adam on the EXCEL objective. The top-k mask is recomputed from
/// the current selection weights at the start of every epoch and held fixed
/// for that epoch's gradient; after each step the selection weights are
/// clipped at zero.
inline TrainedModel train(const SurvivalDataset& ds, const TrainConfig& config)
{
    const auto d = ds.n_features();
    config.validate(d);
    const auto order = build_risk_order(ds.times, ds.events);
    auto model = init_model(d, config);
    model.feature_names = ds.feature_names;

    const auto n_head = static_cast<Eigen::Index>(model.head.parameter_count());
    Eigen::VectorXd params(n_head + static_cast<Eigen::Index>(d));
    params << model.head.pack(), model.selection.w;
    Adam adam(static_cast<std::size_t>(params.size()), config.learning_rate, config.adam_beta1, config.adam_beta2,
              config.adam_epsilon);

    Eigen::VectorXd grad(params.size());
    model.loss_history.reserve(config.epochs);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto mask = max_k(model.selection).mask;
        const auto obj = excel_objective(model.head, model.selection.w, mask, ds.features, order, config.weights);
        if (!std::isfinite(obj.loss) || !obj.head.allFinite() || !obj.selection.allFinite()) {
            throw Error(ErrorCode::NonFiniteLoss, "training diverged at epoch " + std::to_string(epoch));
        }
        model.loss_history.push_back(obj.loss);
        grad << obj.head, obj.selection;
        adam.step(params, grad);
        params.tail(static_cast<Eigen::Index>(d)) = params.tail(static_cast<Eigen::Index>(d)).cwiseMax(0.0);
        model.head.unpack(params.head(n_head));
        model.selection.w = params.tail(static_cast<Eigen::Index>(d));
    }
    model.mask = max_k(model.selection).mask;
    return model;
}

/// Value of the masked term, lambda2 * nlpl(f(diag(max_k(w)) x)).
inline double masked_term(const TrainedModel& model, const SurvivalDataset& ds)
{
    const auto order = build_risk_order(ds.times, ds.events);
    return model.config.weights.lambda2 * nlpl(forward(model, ds.features, true), order);
}

struct RankedFeature {
    std::string name;
    std::size_t index = 0;
    double weight = 0.0;
};

/// Features by selection weight, largest first, ties by index.
inline std::vector<RankedFeature> rank_features(const TrainedModel& model)
{
    std::vector<RankedFeature> out;
    for (auto j : rank_descending(model.selection.w)) {
        out.push_back({j < model.feature_names.size() ? model.feature_names[j] : std::to_string(j), j,
                       model.selection.w(static_cast<Eigen::Index>(j))});
    }
    return out;
}

/// Percentage of input variables the masked model drops, 100 * (d - used) / d.
inline double variable_reduction_percent(std::size_t d, std::size_t used)
{
    return 100.0 * static_cast<double>(d - used) / static_cast<double>(d);
}

struct RefitOptions {
    std::optional<std::size_t> epochs;
    std::optional<double> learning_rate;
};

struct RefitResult {
    TrainedModel model;
    double masked_loss_before = 0.0; // B = lambda2 * masked nlpl
    double masked_loss_after = 0.0;
};

/// Freezes the mask and selection weights and retrains only the head on the
/// masked inputs, minimizing the masked partial likelihood plus the head
/// regularizer. The iterate with the lowest masked term is returned, so the
/// masked term never increases.
inline RefitResult refit_on_selected(const TrainedModel& model, const SurvivalDataset& ds, const RefitOptions& options = {})
{
    if (model.mask.empty()) {
        throw Error(ErrorCode::InvalidArgument, "model has an empty mask");
    }
    if (ds.n_features() != model.n_features()) {
        throw Error(ErrorCode::ShapeMismatch, "dataset does not match model width");
    }
    const auto order = build_risk_order(ds.times, ds.events);
    const auto& cfg = model.config;
    const double lambda2 = cfg.weights.lambda2;
    const double term_weight = lambda2 > 0.0 ? lambda2 : 1.0;
    const auto epochs = options.epochs.value_or(cfg.epochs);
    const auto lr = options.learning_rate.value_or(cfg.learning_rate);

    const Eigen::MatrixXd inputs = scale_columns(ds.features, frozen_top_k(model.selection.w, model.mask).values);
    auto evaluate = [&](const HeadParams& head) { return nlpl(forward_pass(head, inputs).scores, order); };

    RefitResult result{model, 0.0, 0.0};
    HeadParams head = model.head;
    double best = evaluate(head);
    const double before = best;
    HeadParams best_head = head;

    Eigen::VectorXd params = head.pack();
    Adam adam(static_cast<std::size_t>(params.size()), lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const auto pass = forward_pass(head, inputs);
        const auto g = backward_pass(head, pass, nlpl_grad(pass.scores, order));
        HeadParams grad_head = head;
        for (std::size_t l = 0; l < head.layers.size(); ++l) {
            grad_head.layers[l].weight = term_weight * g.layers[l].weight + 2.0 * cfg.weights.lambda1 * head.layers[l].weight;
            grad_head.layers[l].bias = term_weight * g.layers[l].bias + 2.0 * cfg.weights.lambda1 * head.layers[l].bias;
        }
        const Eigen::VectorXd grad = grad_head.pack();
        if (!grad.allFinite()) {
            throw Error(ErrorCode::NonFiniteLoss, "refit diverged at epoch " + std::to_string(epoch));
        }
        adam.step(params, grad);
        head.unpack(params);
        const double value = evaluate(head);
        if (value < best) {
            best = value;
            best_head = head;
        }
    }
    result.model.head = best_head;
    result.masked_loss_before = lambda2 * before;
    result.masked_loss_after = lambda2 * best;
    return result;
}

struct GridSpec {
    std::vector<double> lambda0{0.4, 0.8, 1.2, 1.6};
    std::vector<double> lambda1{0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5};
    std::vector<double> lambda2{0.4, 0.8, 1.2, 1.6};
    std::vector<double> lambda3{0.0001, 0.0005, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5};

    [[nodiscard]] std::vector<LossWeights> points() const
    {
        std::vector<LossWeights> out;
        for (double l0 : lambda0) {
            for (double l2 : lambda2) {
                for (double l1 : lambda1) {
                    for (double l3 : lambda3) {
                        out.push_back({l0, l1, l2, l3});
                    }
                }
            }
        }
        return out;
    }
};

struct GridPointResult {
    LossWeights weights;
    std::optional<double> validation_ci;
    std::string error;
};

struct GridSearchResult {
    TrainConfig best;
    std::vector<GridPointResult> points;
};

/// Trains every grid point on a seeded split of the training set and keeps
/// the one whose masked model has the highest validation concordance. Ties go
/// to the smaller lambda1 + lambda3, then to enumeration order. A failing
/// point is recorded and skipped.
inline GridSearchResult grid_search(const SurvivalDataset& train_set, double validation_fraction, const GridSpec& grid,
                                    const TrainConfig& config_template, std::uint64_t split_seed,
                                    std::size_t threads = thread_limit())
{
    const auto [fit_rows, val_rows] = split_indices(train_set.n_subjects(), {1.0 - validation_fraction, split_seed});
    const auto fit_set = train_set.subset(fit_rows);
    const auto val_set = train_set.subset(val_rows);

    GridSearchResult result;
    for (const auto& w : grid.points()) {
        result.points.push_back({w, std::nullopt, {}});
    }
    if (result.points.empty()) {
        throw Error(ErrorCode::InvalidArgument, "empty hyper-parameter grid");
    }
    parallel_for(result.points.size(), [&](std::size_t i) {
        auto& point = result.points[i];
        TrainConfig cfg = config_template;
        cfg.weights = point.weights;
        try {
            const auto model = train(fit_set, cfg);
            point.validation_ci = concordance_index(val_set.times, val_set.events, forward(model, val_set.features, true));
        } catch (const Error& e) {
            point.error = e.what();
        }
    }, threads);

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < result.points.size(); ++i) {
        const auto& p = result.points[i];
        if (!p.validation_ci) {
            continue;
        }
        if (!best) {
            best = i;
            continue;
        }
        const auto& b = result.points[*best];
        const double reg_p = p.weights.lambda1 + p.weights.lambda3;
        const double reg_b = b.weights.lambda1 + b.weights.lambda3;
        if (*p.validation_ci > *b.validation_ci || (*p.validation_ci == *b.validation_ci && reg_p < reg_b)) {
            best = i;
        }
    }
    if (!best) {
        throw Error(ErrorCode::NonFiniteLoss, "every grid point failed");
    }
    result.best = config_template;
    result.best.weights = result.points[*best].weights;
    return result;
}

/// Plain linear Cox fit (no selection layer) by full-batch Adam; returns the
/// coefficient vector.
inline Eigen::VectorXd fit_plain_cox(const SurvivalDataset& ds, std::size_t epochs, double learning_rate, double lambda1,
                                     std::uint64_t seed)
{
    const auto order = build_risk_order(ds.times, ds.events);
    Rng rng(seed);
    Eigen::VectorXd beta = detail::xavier_layer(rng, ds.n_features(), 1, false).weight.row(0).transpose();
    Adam adam(static_cast<std::size_t>(beta.size()), learning_rate, 0.9, 0.999, 1e-8);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const Eigen::VectorXd grad =
            ds.features.transpose() * nlpl_grad(ds.features * beta, order) + 2.0 * lambda1 * beta;
        if (!grad.allFinite()) {
            throw Error(ErrorCode::NonFiniteLoss, "plain Cox fit diverged at epoch " + std::to_string(epoch));
        }
        adam.step(beta, grad);
    }
    return beta;
}

/// The k coordinates of largest absolute value, ascending.
inline std::vector<std::size_t> top_k_by_magnitude(const Eigen::VectorXd& coefficients, std::size_t k)
{
    return max_k(Eigen::VectorXd(coefficients.cwiseAbs()), k).mask;
}

// JSON

inline nlohmann::json to_json(const HeadArchitecture& a)
{
    return {{"kind", a.kind == HeadKind::Linear ? "linear" : "mlp"}, {"hidden_sizes", a.hidden_sizes}};
}

inline nlohmann::json to_json(const LossWeights& w)
{
    return {{"lambda0", w.lambda0}, {"lambda1", w.lambda1}, {"lambda2", w.lambda2}, {"lambda3", w.lambda3}};
}

inline nlohmann::json to_json(const TrainConfig& c)
{
    return {{"weights", to_json(c.weights)},     {"k", c.k},
            {"epochs", c.epochs},                {"learning_rate", c.learning_rate},
            {"adam_beta1", c.adam_beta1},        {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},    {"seed", c.seed},
            {"head", to_json(c.head)}};
}

inline std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline nlohmann::json to_json(const TrainedModel& m)
{
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : m.head.layers) {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
            rows.push_back(to_vector(layer.weight.row(r).transpose()));
        }
        layers.push_back({{"weight", rows}, {"bias", to_vector(layer.bias)}});
    }
    return {{"config", to_json(m.config)},
            {"feature_names", m.feature_names},
            {"selection_weights", to_vector(m.selection.w)},
            {"mask", m.mask},
            {"head_layers", layers},
            {"loss_history", m.loss_history}};
}

inline TrainedModel model_from_json(const nlohmann::json& j)
{
    try {
        TrainedModel m;
        const auto& c = j.at("config");
        const auto& w = c.at("weights");
        m.config.weights = {w.at("lambda0").get<double>(), w.at("lambda1").get<double>(), w.at("lambda2").get<double>(),
                            w.at("lambda3").get<double>()};
        m.config.k = c.at("k").get<std::size_t>();
        m.config.epochs = c.at("epochs").get<std::size_t>();
        m.config.learning_rate = c.at("learning_rate").get<double>();
        m.config.adam_beta1 = c.at("adam_beta1").get<double>();
        m.config.adam_beta2 = c.at("adam_beta2").get<double>();
        m.config.adam_epsilon = c.at("adam_epsilon").get<double>();
        m.config.seed = c.at("seed").get<std::uint64_t>();
        const auto& h = c.at("head");
        m.config.head.kind = h.at("kind").get<std::string>() == "linear" ? HeadKind::Linear : HeadKind::Mlp;
        m.config.head.hidden_sizes = h.at("hidden_sizes").get<std::vector<std::size_t>>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        const auto w_values = j.at("selection_weights").get<std::vector<double>>();
        m.selection.w = Eigen::Map<const Eigen::VectorXd>(w_values.data(), static_cast<Eigen::Index>(w_values.size()));
        m.selection.k = m.config.k;
        m.mask = j.at("mask").get<std::vector<std::size_t>>();
        m.loss_history = j.at("loss_history").get<std::vector<double>>();
        m.head.architecture = m.config.head;
        for (const auto& layer : j.at("head_layers")) {
            const auto rows = layer.at("weight").get<std::vector<std::vector<double>>>();
            const auto bias = layer.at("bias").get<std::vector<double>>();
            DenseLayer dense;
            dense.weight.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (rows[r].size() != static_cast<std::size_t>(dense.weight.cols())) {
                    throw Error(ErrorCode::ShapeMismatch, "ragged head layer");
                }
                for (std::size_t c2 = 0; c2 < rows[r].size(); ++c2) {
                    dense.weight(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c2)) = rows[r][c2];
                }
            }
            dense.bias = Eigen::Map<const Eigen::VectorXd>(bias.data(), static_cast<Eigen::Index>(bias.size()));
            m.head.layers.push_back(std::move(dense));
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed model document: ") + e.what());
    }
}

} // namespace excel_surv
