#pragma once

// k-n-m feed-forward regressor: dense ReLU hidden layer, linear output,
// trained with mini-batch Adam on mean squared error.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace cogeval {

struct NetworkSpec {
    std::size_t input_dim = 0;     // k
    std::size_t hidden_units = 0;  // n
    std::size_t output_dim = 0;    // m

    void validate() const
    {
        if (input_dim == 0 || hidden_units == 0 || output_dim == 0)
            throw Error("network dimensions must all be >= 1");
    }

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct TrainConfig {
    double learning_rate = 0.001;
    std::size_t epochs = 100;
    std::size_t batch_size = 32;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    Seed seed = 0;
    // Stop when the epoch loss has not improved by min_delta for this many
    // epochs. 0 disables early stopping.
    std::size_t patience = 0;
    double min_delta = 0.0;

    void validate() const
    {
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw Error("learning_rate must be a finite non-negative number");
        if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0) || !(adam_beta2 > 0.0 && adam_beta2 < 1.0))
            throw Error("adam betas must lie in (0, 1)");
        if (!(adam_epsilon > 0.0))
            throw Error("adam_epsilon must be positive");
        if (epochs == 0 || batch_size == 0)
            throw Error("epochs and batch_size must be positive");
    }
};

class TrainingError : public Error {
public:
    using Error::Error;
};

struct Mlp {
    NetworkSpec spec;
    Eigen::MatrixXd hidden_weights;  // n x k
    Eigen::VectorXd hidden_bias;     // n
    Eigen::MatrixXd output_weights;  // m x n
    Eigen::VectorXd output_bias;     // m
    std::vector<double> loss_curve;  // mean training loss per epoch

    std::size_t parameter_count() const
    {
        return static_cast<std::size_t>(hidden_weights.size() + hidden_bias.size() +
                                        output_weights.size() + output_bias.size());
    }
};

/// Same layout as the model parameters.
struct MlpGradient {
    Eigen::MatrixXd hidden_weights;
    Eigen::VectorXd hidden_bias;
    Eigen::MatrixXd output_weights;
    Eigen::VectorXd output_bias;
};

/// Glorot-uniform weights, zero biases.
inline Mlp init_network(const NetworkSpec& spec, Seed seed)
{
    spec.validate();
    const auto k = static_cast<Eigen::Index>(spec.input_dim);
    const auto n = static_cast<Eigen::Index>(spec.hidden_units);
    const auto m = static_cast<Eigen::Index>(spec.output_dim);
    Rng rng(derive_seed(seed, "init-network"));
    const auto fill = [&rng](Eigen::MatrixXd& w, double fan_in, double fan_out) {
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                w(i, j) = rng.uniform(-limit, limit);
    };
    Mlp model;
    model.spec = spec;
    model.hidden_weights.resize(n, k);
    model.output_weights.resize(m, n);
    fill(model.hidden_weights, double(k), double(n));
    fill(model.output_weights, double(n), double(m));
    model.hidden_bias = Eigen::VectorXd::Zero(n);
    model.output_bias = Eigen::VectorXd::Zero(m);
    return model;
}

/// Row-wise prediction for a batch (rows are samples).
inline Eigen::MatrixXd predict(const Mlp& model, const Eigen::MatrixXd& inputs)
{
    if (static_cast<std::size_t>(inputs.cols()) != model.spec.input_dim)
        throw Error("predict: input has " + std::to_string(inputs.cols()) +
                    " columns, network expects " + std::to_string(model.spec.input_dim));
    Eigen::MatrixXd hidden = (inputs * model.hidden_weights.transpose()).rowwise() +
                             model.hidden_bias.transpose();
    hidden = hidden.cwiseMax(0.0);
    return (hidden * model.output_weights.transpose()).rowwise() + model.output_bias.transpose();
}

/// y = W2 relu(W1 x + b1) + b2
inline Eigen::VectorXd forward(const Mlp& model, const Eigen::VectorXd& x)
{
    if (static_cast<std::size_t>(x.size()) != model.spec.input_dim)
        throw Error("forward: input has length " + std::to_string(x.size()) +
                    ", network expects " + std::to_string(model.spec.input_dim));
    const Eigen::VectorXd h = (model.hidden_weights * x + model.hidden_bias).cwiseMax(0.0);
    return model.output_weights * h + model.output_bias;
}

/// Mean over all B*m entries of the squared error, and its exact gradient.
inline double loss_and_gradient(const Mlp& model, const Eigen::MatrixXd& inputs,
                                const Eigen::MatrixXd& targets, MlpGradient& grad)
{
    const Eigen::MatrixXd pre =
        (inputs * model.hidden_weights.transpose()).rowwise() + model.hidden_bias.transpose();
    const Eigen::MatrixXd hidden = pre.cwiseMax(0.0);
    const Eigen::MatrixXd out =
        (hidden * model.output_weights.transpose()).rowwise() + model.output_bias.transpose();
    const Eigen::MatrixXd diff = out - targets;
    const double scale = 1.0 / static_cast<double>(diff.size());
    const double loss = diff.squaredNorm() * scale;

    const Eigen::MatrixXd d_out = (2.0 * scale) * diff;           // B x m
    grad.output_weights = d_out.transpose() * hidden;             // m x n
    grad.output_bias = d_out.colwise().sum().transpose();         // m
    Eigen::MatrixXd d_pre = d_out * model.output_weights;         // B x n
    d_pre = (pre.array() > 0.0).select(d_pre, 0.0);
    grad.hidden_weights = d_pre.transpose() * inputs;             // n x k
    grad.hidden_bias = d_pre.colwise().sum().transpose();         // n
    return loss;
}

inline double loss_only(const Mlp& model, const Eigen::MatrixXd& inputs,
                        const Eigen::MatrixXd& targets)
{
    return (predict(model, inputs) - targets).squaredNorm() / static_cast<double>(targets.size());
}

namespace detail {

struct AdamParam {
    Eigen::MatrixXd first;
    Eigen::MatrixXd second;

    void reset(Eigen::Index rows, Eigen::Index cols)
    {
        first = Eigen::MatrixXd::Zero(rows, cols);
        second = Eigen::MatrixXd::Zero(rows, cols);
    }

    template <typename Param, typename Grad>
    void step(Param& param, const Grad& g, const TrainConfig& cfg, double correction1,
              double correction2)
    {
        first = cfg.adam_beta1 * first + (1.0 - cfg.adam_beta1) * g;
        second = cfg.adam_beta2 * second + (1.0 - cfg.adam_beta2) * g.cwiseAbs2();
        param.array() -= cfg.learning_rate * (first.array() / correction1) /
                         ((second.array() / correction2).sqrt() + cfg.adam_epsilon);
    }
};

}  // namespace detail

/// Mini-batch Adam with bias-corrected moments over a seeded shuffle per
/// epoch. Deterministic in (model, data, config).
inline Mlp train(Mlp model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                 const TrainConfig& config)
{
    config.validate();
    const auto rows = inputs.rows();
    if (rows == 0 || targets.rows() != rows)
        throw Error("train: need at least one row and matching input/target row counts");
    if (static_cast<std::size_t>(inputs.cols()) != model.spec.input_dim ||
        static_cast<std::size_t>(targets.cols()) != model.spec.output_dim)
        throw Error("train: data shape does not match the network spec");
    if (!inputs.allFinite() || !targets.allFinite())
        throw Error("train: non-finite training data");

    detail::AdamParam w1, b1, w2, b2;
    w1.reset(model.hidden_weights.rows(), model.hidden_weights.cols());
    b1.reset(model.hidden_bias.rows(), 1);
    w2.reset(model.output_weights.rows(), model.output_weights.cols());
    b2.reset(model.output_bias.rows(), 1);

    Rng rng(derive_seed(config.seed, "train-shuffle"));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    const auto batch = static_cast<Eigen::Index>(config.batch_size);
    MlpGradient grad;
    Eigen::MatrixXd xb, tb;
    double beta1_pow = 1.0, beta2_pow = 1.0;
    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    model.loss_curve.clear();
    model.loss_curve.reserve(config.epochs);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<Eigen::Index>(order));
        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (Eigen::Index start = 0; start < rows; start += batch, ++batch_index) {
            const Eigen::Index len = std::min(batch, rows - start);
            const std::vector<Eigen::Index> idx(order.begin() + start,
                                                order.begin() + start + len);
            xb = inputs(idx, Eigen::all);
            tb = targets(idx, Eigen::all);
            const double loss = loss_and_gradient(model, xb, tb, grad);
            if (!std::isfinite(loss) || !grad.hidden_weights.allFinite() ||
                !grad.output_weights.allFinite())
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch_index));
            epoch_loss += loss * static_cast<double>(len);

            beta1_pow *= config.adam_beta1;
            beta2_pow *= config.adam_beta2;
            const double c1 = 1.0 - beta1_pow;
            const double c2 = 1.0 - beta2_pow;
            w1.step(model.hidden_weights, grad.hidden_weights, config, c1, c2);
            b1.step(model.hidden_bias, grad.hidden_bias, config, c1, c2);
            w2.step(model.output_weights, grad.output_weights, config, c1, c2);
            b2.step(model.output_bias, grad.output_bias, config, c1, c2);
        }
        epoch_loss /= static_cast<double>(rows);
        model.loss_curve.push_back(epoch_loss);

        if (config.patience > 0) {
            if (epoch_loss < best - config.min_delta) {
                best = epoch_loss;
                stale = 0;
            } else if (++stale >= config.patience) {
                break;
            }
        }
    }
    return model;
}

}  // namespace cogeval
