#include <gtest/gtest.h>

#include <numeric>

#include "support/synthetic.hpp"

using namespace cogeval;
using namespace cogeval::testing;

namespace {

// targets = A x + eps with x ~ N(0, I_16), eps ~ N(0, 0.1^2), m = 4
struct LinearTask {
    WordVectorTable table{"emb", 16};
    CognitiveDataset raw;
};

LinearTask linear_task(Seed seed, double signal_sd, bool informative = true)
{
    Rng rng(seed);
    const auto words = make_words(500);
    const Eigen::MatrixXd X = gaussian_matrix(500, 16, rng);
    const Eigen::MatrixXd A = gaussian_matrix(4, 16, rng, signal_sd / 4.0);
    Eigen::MatrixXd T = informative ? Eigen::MatrixXd(X * A.transpose()) : gaussian_matrix(500, 4, rng, signal_sd);
    T += gaussian_matrix(500, 4, rng, 0.1);
    LinearTask task;
    task.table = table_from_matrix("emb", words, X);
    task.raw.name = "synthetic";
    task.raw.modality = Modality::eeg;
    task.raw.feature_labels = {"a", "b", "c", "d"};
    for (std::size_t i = 0; i < words.size(); ++i)
        task.raw.targets[words[i]] = {T(Eigen::Index(i), 0), T(Eigen::Index(i), 1), T(Eigen::Index(i), 2),
                                      T(Eigen::Index(i), 3)};
    return task;
}

ExperimentOptions options(Seed seed, std::vector<std::size_t> grid = {8, 3})
{
    ExperimentOptions o;
    o.grid.candidates = std::move(grid);
    o.train.seed = seed;
    return o;
}

}  // namespace

TEST(Mse, Examples)
{
    const Eigen::MatrixXd a = Eigen::MatrixXd::Random(3, 2);
    EXPECT_EQ(mse(a, a).aggregate, 0.0);
    EXPECT_EQ(mse(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1)).aggregate, 1.0);
    Eigen::MatrixXd t(1, 2);
    t << 1, 3;
    const auto r = mse(Eigen::MatrixXd::Zero(1, 2), t);
    EXPECT_EQ(r.per_row, std::vector<double>{5.0});
    EXPECT_EQ(r.aggregate, 5.0);
    EXPECT_THROW(mse(Eigen::MatrixXd::Zero(1, 2), Eigen::MatrixXd::Zero(2, 2)), Error);
}

TEST(KFold, EvenAndRemainderSizes)
{
    std::vector<std::size_t> sizes;
    for (const auto& f : kfold_split(10, 5, 1))
        sizes.push_back(f.test.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 2, 2, 2}));
    sizes.clear();
    for (const auto& f : kfold_split(11, 5, 1))
        sizes.push_back(f.test.size());
    std::sort(sizes.begin(), sizes.end());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{2, 2, 2, 2, 3}));
}

TEST(KFold, Errors)
{
    EXPECT_THROW(kfold_split(4, 5, 1), Error);
    EXPECT_THROW(kfold_split(10, 1, 1), Error);
}

TEST(KFold, PartitionLawsAndSeedDependence)
{
    Rng rng(4);
    for (int c = 0; c < 300; ++c) {
        const std::size_t n = 5 + rng.below(300);
        const std::size_t k = 2 + rng.below(4);
        const auto folds = kfold_split(n, k, c);
        std::vector<int> seen(n, 0);
        for (const auto& f : folds) {
            EXPECT_TRUE(std::is_sorted(f.test.begin(), f.test.end()));
            EXPECT_EQ(f.train.size() + f.test.size(), n);
            for (auto i : f.test)
                ++seen[i];
        }
        EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
    }
    EXPECT_NE(kfold_split(50, 5, 1)[0].test, kfold_split(50, 5, 2)[0].test);
    EXPECT_EQ(kfold_split(50, 5, 1)[0].test, kfold_split(50, 5, 1)[0].test);
}

TEST(GridSearch, SingleCandidateIsChosen)
{
    auto task = linear_task(1, 1.0);
    const auto pairs = build_supervision_pairs(task.table, min_max_scale(task.raw));
    TrainConfig cfg;
    cfg.epochs = 2;
    const auto r = grid_search_hidden_units(pairs.inputs, pairs.targets, {.candidates = {5}}, cfg);
    EXPECT_EQ(r.chosen, 5u);
    ASSERT_EQ(r.scores.size(), 1u);
    EXPECT_TRUE(std::isfinite(r.scores[0]));
}

TEST(GridSearch, TieGoesToSmallerCandidate)
{
    // zero learning rate and zero inputs: every candidate predicts 0
    const Eigen::MatrixXd X = Eigen::MatrixXd::Zero(40, 3);
    const Eigen::MatrixXd T = Eigen::MatrixXd::Ones(40, 1);
    TrainConfig cfg;
    cfg.learning_rate = 0;
    cfg.epochs = 1;
    const auto r = grid_search_hidden_units(X, T, {.candidates = {9, 4, 6}}, cfg);
    EXPECT_EQ(r.scores[0], r.scores[1]);
    EXPECT_EQ(r.chosen, 4u);
}

TEST(GridSearch, EveryCandidateFailingIsAnError)
{
    const Eigen::MatrixXd X = Eigen::MatrixXd::Constant(40, 1, 1e300);
    const Eigen::MatrixXd T = Eigen::MatrixXd::Zero(40, 1);
    ScopedWarningCapture cap;
    EXPECT_THROW(grid_search_hidden_units(X, T, {.candidates = {2, 3}}, TrainConfig{}), Error);
}

TEST(RunExperiment, LinearTaskReachesTheNoiseFloor)
{
    const auto task = linear_task(2024, 0.09);
    const auto scaled = min_max_scale(task.raw);
    // oracle: irreducible error of each column once scaled
    double floor = 0;
    for (std::size_t j = 0; j < 4; ++j) {
        double lo = 1e300, hi = -1e300;
        for (const auto& [w, t] : task.raw.targets) {
            lo = std::min(lo, t[j]);
            hi = std::max(hi, t[j]);
        }
        floor += 0.01 / ((hi - lo) * (hi - lo)) / 4.0;
    }
    const auto r = run_experiment(task.table, scaled, std::nullopt, options(7));
    EXPECT_GE(r.overall_mse, 0.01);
    EXPECT_LE(r.overall_mse, 0.04);
    EXPECT_GE(r.overall_mse, 0.8 * floor);
    EXPECT_LE(r.overall_mse, 2.0 * floor);
}

TEST(RunExperiment, FoldInvariants)
{
    const auto task = linear_task(3, 0.5);
    const auto scaled = min_max_scale(task.raw);
    const auto r = run_experiment(task.table, scaled, std::nullopt, options(11));
    ASSERT_EQ(r.folds.size(), 5u);
    std::size_t words = 0;
    double mean_of_folds = 0;
    for (const auto& f : r.folds) {
        words += f.per_word_errors.size();
        double sum = 0;
        for (const auto& [w, e] : f.per_word_errors) {
            EXPECT_GE(e, 0.0);
            sum += e;
        }
        EXPECT_NEAR(f.fold_mse, sum / double(f.per_word_errors.size()), 1e-15);
        EXPECT_EQ(f.validation_scores.size(), 2u);
        EXPECT_TRUE(f.chosen_hidden_units == 8 || f.chosen_hidden_units == 3);
        mean_of_folds += f.fold_mse / 5.0;
    }
    EXPECT_EQ(words, 500u);
    EXPECT_EQ(r.per_word_errors().size(), 500u);
    EXPECT_NEAR(r.overall_mse, mean_of_folds, 1e-15);
    EXPECT_EQ(r.feature_label, whole_vector_label);
    EXPECT_EQ(r.hypothesis_key(), "emb|synthetic|*");
}

TEST(RunExperiment, DeterministicAndSeedSensitive)
{
    const auto task = linear_task(5, 0.5);
    const auto scaled = min_max_scale(task.raw);
    auto o = options(13, {4});
    o.train.epochs = 10;
    o.record_per_dimension = true;
    const auto a = run_experiment(task.table, scaled, std::nullopt, o);
    EXPECT_EQ(a, run_experiment(task.table, scaled, std::nullopt, o));
    EXPECT_TRUE(a.folds[0].validation_scores.empty());
    o.train.seed = 14;
    EXPECT_NE(a.overall_mse, run_experiment(task.table, scaled, std::nullopt, o).overall_mse);
}

TEST(RunExperiment, SingleFeatureAndPerDimensionErrors)
{
    const auto task = linear_task(6, 0.5);
    const auto scaled = min_max_scale(task.raw);
    auto o = options(3, {4});
    o.train.epochs = 10;
    o.record_per_dimension = true;
    const auto one = run_experiment(task.table, scaled, std::string("c"), o);
    EXPECT_EQ(one.feature_label, "c");
    EXPECT_EQ(one.dimension_labels, std::vector<std::string>{"c"});
    EXPECT_NEAR(one.per_dimension_errors[0], one.overall_mse, 0.01);
    const auto all = run_experiment(task.table, scaled, std::nullopt, o);
    ASSERT_EQ(all.per_dimension_errors.size(), 4u);
    const double mean_dim = std::accumulate(all.per_dimension_errors.begin(), all.per_dimension_errors.end(), 0.0) / 4;
    // per-word errors average over m, so the two pooled means agree up to fold sizes
    EXPECT_NEAR(mean_dim, all.overall_mse, 1e-12);
    EXPECT_THROW(run_experiment(task.table, scaled, std::string("zz"), o), Error);
}

TEST(RunExperiment, PureNoiseIsNotLearned)
{
    // test MSE of a model fitted to targets independent of its inputs should
    // not fall below the variance of those targets
    std::vector<double> gaps;
    for (Seed s = 0; s < 10; ++s) {
        const auto task = linear_task(100 + s, 1.0, false);
        const auto scaled = min_max_scale(task.raw);
        auto o = options(s, {8});
        o.train.epochs = 30;
        const auto r = run_experiment(task.table, scaled, std::nullopt, o);
        double var = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            double mean = 0, sq = 0;
            for (const auto& [w, t] : scaled.targets) {
                mean += t[j];
                sq += t[j] * t[j];
            }
            mean /= 500;
            var += (sq / 500 - mean * mean) / 4;
        }
        gaps.push_back(r.overall_mse - var);
    }
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / 10;
    double ss = 0;
    for (double g : gaps)
        ss += (g - mean) * (g - mean);
    const double t = mean / std::sqrt(ss / 9 / 10);
    EXPECT_GT(t, -2.821);  // one-sided t_9 at 0.01
}
