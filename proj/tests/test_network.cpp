#include <gtest/gtest.h>

#include "support/synthetic.hpp"

using namespace cogeval;
using namespace cogeval::testing;

namespace {

Mlp zero_model(std::size_t k, std::size_t n, std::size_t m)
{
    auto model = init_network({k, n, m}, 1);
    model.hidden_weights.setZero();
    model.output_weights.setZero();
    return model;
}

double max_relative_error(const std::vector<double>& a, const std::vector<double>& b)
{
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-6}));
    return worst;
}

}  // namespace

TEST(Network, InitIsDeterministicAndGlorotBounded)
{
    const auto a = init_network({3, 2, 1}, 9);
    const auto b = init_network({3, 2, 1}, 9);
    EXPECT_EQ(a.hidden_weights, b.hidden_weights);
    EXPECT_EQ(a.output_weights, b.output_weights);
    EXPECT_NE(a.hidden_weights, init_network({3, 2, 1}, 10).hidden_weights);
    EXPECT_LE(a.hidden_weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 5.0));
    EXPECT_TRUE(a.hidden_bias.isZero());
    EXPECT_EQ(a.parameter_count(), 3u * 2 + 2 + 2 + 1);
}

TEST(Network, InvalidSpecs)
{
    EXPECT_THROW(init_network({0, 2, 1}, 1), Error);
    EXPECT_THROW(init_network({2, 0, 1}, 1), Error);
    EXPECT_THROW(init_network({2, 2, 0}, 1), Error);
}

TEST(Forward, ZeroModelGivesZeros)
{
    const auto model = zero_model(3, 4, 2);
    EXPECT_TRUE(forward(model, Eigen::Vector3d(1, -5, 7)).isZero());
}

TEST(Forward, IdentityWeightsApplyRelu)
{
    auto model = zero_model(2, 2, 2);
    model.hidden_weights.setIdentity();
    model.output_weights.setIdentity();
    EXPECT_EQ(forward(model, Eigen::Vector2d(-1, 2)), Eigen::Vector2d(0, 2));
}

TEST(Forward, ScalarComposition)
{
    auto model = zero_model(1, 1, 1);
    model.hidden_weights(0, 0) = 2;
    model.hidden_bias(0) = 1;
    model.output_weights(0, 0) = 3;
    model.output_bias(0) = -1;
    EXPECT_EQ(forward(model, Eigen::VectorXd::Constant(1, 1.0))(0), 8.0);
}

TEST(Forward, DimensionMismatch)
{
    const auto model = init_network({3, 2, 1}, 1);
    EXPECT_THROW(forward(model, Eigen::Vector2d(1, 2)), Error);
    EXPECT_THROW(predict(model, Eigen::MatrixXd::Zero(4, 2)), Error);
}

TEST(Forward, BatchPredictMatchesForward)
{
    Rng rng(3);
    const auto model = init_network({5, 7, 3}, 4);
    const Eigen::MatrixXd X = gaussian_matrix(10, 5, rng);
    const Eigen::MatrixXd P = predict(model, X);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        EXPECT_TRUE(P.row(i).transpose().isApprox(forward(model, X.row(i).transpose()), 1e-14));
}

TEST(Forward, PositivelyHomogeneousWithoutBiases)
{
    Rng rng(8);
    auto model = init_network({4, 6, 2}, 2);
    model.hidden_weights = model.hidden_weights.cwiseAbs();  // all pre-activations >= 0 for x >= 0
    Eigen::VectorXd x(4);
    for (int i = 0; i < 4; ++i)
        x(i) = rng.uniform01();
    const Eigen::VectorXd y = forward(model, x);
    for (double alpha : {0.5, 2.0, 13.0})
        EXPECT_TRUE(forward(model, alpha * x).isApprox(alpha * y, 1e-13));
}

TEST(Gradient, MatchesCentralDifferencesOn342)
{
    Rng rng(31);
    auto model = init_network({3, 4, 2}, 5);
    const Eigen::MatrixXd X = gaussian_matrix(1, 3, rng);
    const Eigen::MatrixXd T = gaussian_matrix(1, 2, rng);
    MlpGradient grad;
    const double loss = loss_and_gradient(model, X, T, grad);
    EXPECT_NEAR(loss, loss_only(model, X, T), 1e-15);
    EXPECT_LT(max_relative_error(flatten(grad), numeric_gradient(model, X, T)), 1e-4);
}

TEST(Gradient, MatchesCentralDifferencesOnRandomSmallNetworks)
{
    Rng rng(77);
    for (int net = 0; net < 25; ++net) {
        const NetworkSpec spec{1 + rng.below(8), 1 + rng.below(8), 1 + rng.below(4)};
        auto model = init_network(spec, derive_seed(1, net));
        model.hidden_bias.setConstant(0.05);
        const Eigen::MatrixXd X = gaussian_matrix(8, Eigen::Index(spec.input_dim), rng);
        const Eigen::MatrixXd T = gaussian_matrix(8, Eigen::Index(spec.output_dim), rng);
        MlpGradient grad;
        loss_and_gradient(model, X, T, grad);
        EXPECT_LT(max_relative_error(flatten(grad), numeric_gradient(model, X, T)), 1e-4) << "net " << net;
    }
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged)
{
    Rng rng(2);
    const auto model = init_network({3, 5, 2}, 6);
    const Eigen::MatrixXd X = gaussian_matrix(50, 3, rng);
    const Eigen::MatrixXd T = gaussian_matrix(50, 2, rng);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 5;
    const auto trained = train(model, X, T, cfg);
    EXPECT_EQ(trained.hidden_weights, model.hidden_weights);
    EXPECT_EQ(trained.hidden_bias, model.hidden_bias);
    EXPECT_EQ(trained.output_weights, model.output_weights);
    EXPECT_EQ(trained.output_bias, model.output_bias);
    EXPECT_EQ(trained.loss_curve.size(), 5u);
}

TEST(Train, LearnsOneDimensionalIdentityWithDefaults)
{
    Rng rng(17);
    Eigen::MatrixXd X(500, 1);
    for (int i = 0; i < 500; ++i)
        X(i, 0) = rng.uniform01();
    const Seed seed = 4;
    const auto model = init_network({1, 1, 1}, seed);
    // a dead unit at init cannot recover; this seed starts in the live region
    ASSERT_GT(model.hidden_weights(0, 0), 0.0);
    TrainConfig cfg;
    cfg.seed = seed;
    const auto trained = train(model, X, X, cfg);
    EXPECT_LT(mse(predict(trained, X), X).aggregate, 1e-3);
    EXPECT_LT(trained.loss_curve.back(), trained.loss_curve.front());
}

TEST(Train, DeterministicForSameConfig)
{
    Rng rng(1);
    const Eigen::MatrixXd X = gaussian_matrix(70, 4, rng);
    const Eigen::MatrixXd T = gaussian_matrix(70, 2, rng);
    TrainConfig cfg;
    cfg.epochs = 7;
    cfg.seed = 99;
    const auto a = train(init_network({4, 3, 2}, 1), X, T, cfg);
    const auto b = train(init_network({4, 3, 2}, 1), X, T, cfg);
    EXPECT_EQ(a.hidden_weights, b.hidden_weights);
    EXPECT_EQ(a.loss_curve, b.loss_curve);
}

TEST(Train, EarlyStoppingOnPlateau)
{
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(20, 2);
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(20, 1);
    auto model = init_network({2, 2, 1}, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 50;
    cfg.patience = 3;
    EXPECT_EQ(train(model, X, T, cfg).loss_curve.size(), 4u);
}

TEST(Train, NonFiniteLossNamesEpochAndBatch)
{
    Eigen::MatrixXd X = Eigen::MatrixXd::Constant(4, 1, 1e200);
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(4, 1);
    auto model = init_network({1, 1, 1}, 4);
    model.hidden_bias.setConstant(1e200);
    model.output_weights.setConstant(1e200);
    try {
        train(model, X, T, TrainConfig{});
        FAIL();
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 0, batch 0"), std::string::npos) << e.what();
    }
}

TEST(Train, ConfigValidation)
{
    const Eigen::MatrixXd X = Eigen::MatrixXd::Zero(3, 1);
    const auto model = init_network({1, 1, 1}, 1);
    TrainConfig bad;
    bad.adam_beta1 = 1.0;
    EXPECT_THROW(train(model, X, X, bad), Error);
    bad = {};
    bad.batch_size = 0;
    EXPECT_THROW(train(model, X, X, bad), Error);
    bad = {};
    bad.learning_rate = -1;
    EXPECT_THROW(train(model, X, X, bad), Error);
}
