#pragma once

// Cross-validated fitting of one (word-vector table, dataset, feature)
// combination: outer k-fold split, per-fold grid search over hidden-layer
// sizes, retraining of the chosen size, and per-word test errors.

#include <Eigen/Dense>

#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cognitive_data.hpp"
#include "common.hpp"
#include "embedding_store.hpp"
#include "network.hpp"
#include "rng.hpp"

namespace cogeval {

/// Feature label used when the whole target vector is predicted at once.
inline constexpr std::string_view whole_vector_label = "*";

struct MseResult {
    double aggregate = 0.0;
    std::vector<double> per_row;  // mean over the m components
};

inline MseResult mse(const Eigen::MatrixXd& predictions, const Eigen::MatrixXd& targets)
{
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols())
        throw Error("mse: shape mismatch (" + std::to_string(predictions.rows()) + "x" +
                    std::to_string(predictions.cols()) + " vs " +
                    std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()) + ")");
    if (predictions.rows() == 0 || predictions.cols() == 0)
        throw Error("mse: empty input");
    MseResult r;
    r.per_row.resize(static_cast<std::size_t>(predictions.rows()));
    const Eigen::VectorXd rows =
        (predictions - targets).array().square().rowwise().mean().matrix();
    for (Eigen::Index i = 0; i < rows.size(); ++i)
        r.per_row[static_cast<std::size_t>(i)] = rows(i);
    r.aggregate = std::accumulate(r.per_row.begin(), r.per_row.end(), 0.0) /
                  static_cast<double>(r.per_row.size());
    return r;
}

// ---------------------------------------------------------------------------

struct FoldSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded shuffle, then contiguous partition; the first N % folds test sets
/// get one extra row.
inline std::vector<FoldSplit> kfold_split(std::size_t n, std::size_t folds, Seed seed)
{
    if (folds < 2)
        throw Error("kfold_split: need at least 2 folds");
    if (n < folds)
        throw Error("kfold_split: " + std::to_string(n) + " rows cannot fill " +
                    std::to_string(folds) + " folds");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "kfold"));
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<FoldSplit> out(folds);
    const std::size_t base = n / folds, extra = n % folds;
    std::size_t start = 0;
    for (std::size_t f = 0; f < folds; ++f) {
        const std::size_t len = base + (f < extra ? 1 : 0);
        out[f].test.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(start + len));
        out[f].train.reserve(n - len);
        out[f].train.insert(out[f].train.end(), order.begin(),
                            order.begin() + static_cast<std::ptrdiff_t>(start));
        out[f].train.insert(out[f].train.end(),
                            order.begin() + static_cast<std::ptrdiff_t>(start + len),
                            order.end());
        std::sort(out[f].test.begin(), out[f].test.end());
        std::sort(out[f].train.begin(), out[f].train.end());
        start += len;
    }
    return out;
}

// ---------------------------------------------------------------------------

struct GridSearchConfig {
    std::vector<std::size_t> candidates;
    std::size_t repeats = 3;
    double validation_fraction = 0.2;
};

struct GridSearchResult {
    std::size_t chosen = 0;
    std::vector<double> scores;  // aligned with candidates; +inf when training failed
    std::vector<bool> failed;
};

namespace detail {
inline Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, const std::vector<std::size_t>& rows)
{
    std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    return m(idx, Eigen::all);
}
}  // namespace detail

/// Scores each candidate by mean validation MSE over `repeats` seeded
/// 80/20 splits of the given rows; the same splits serve every candidate.
/// Ties go to the smaller hidden size.
inline GridSearchResult grid_search_hidden_units(const Eigen::MatrixXd& inputs,
                                                 const Eigen::MatrixXd& targets,
                                                 const GridSearchConfig& grid,
                                                 const TrainConfig& config)
{
    if (grid.candidates.empty())
        throw Error("grid search: no candidate hidden sizes");
    if (grid.repeats == 0)
        throw Error("grid search: repeats must be positive");
    const auto n = static_cast<std::size_t>(inputs.rows());
    const auto n_val = static_cast<std::size_t>(
        std::llround(grid.validation_fraction * static_cast<double>(n)));
    if (n < 2 || n_val == 0 || n_val >= n)
        throw Error("grid search: " + std::to_string(n) + " rows are too few for a " +
                    "validation split");

    struct Split {
        Eigen::MatrixXd x_train, t_train, x_val, t_val;
    };
    std::vector<Split> splits;
    for (std::size_t r = 0; r < grid.repeats; ++r) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(config.seed, "grid-split", r));
        rng.shuffle(std::span<std::size_t>(order));
        std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
        std::vector<std::size_t> tr(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
        std::sort(val.begin(), val.end());
        std::sort(tr.begin(), tr.end());
        splits.push_back({detail::take_rows(inputs, tr), detail::take_rows(targets, tr),
                          detail::take_rows(inputs, val), detail::take_rows(targets, val)});
    }

    GridSearchResult result;
    result.scores.assign(grid.candidates.size(), std::numeric_limits<double>::infinity());
    result.failed.assign(grid.candidates.size(), false);
    const NetworkSpec base{static_cast<std::size_t>(inputs.cols()), 0,
                           static_cast<std::size_t>(targets.cols())};
    for (std::size_t c = 0; c < grid.candidates.size(); ++c) {
        NetworkSpec spec = base;
        spec.hidden_units = grid.candidates[c];
        double total = 0.0;
        try {
            for (std::size_t r = 0; r < splits.size(); ++r) {
                TrainConfig cfg = config;
                cfg.seed = derive_seed(config.seed, "grid-train", r, spec.hidden_units);
                auto model = train(init_network(spec, cfg.seed), splits[r].x_train,
                                   splits[r].t_train, cfg);
                total += mse(predict(model, splits[r].x_val), splits[r].t_val).aggregate;
            }
            result.scores[c] = total / static_cast<double>(splits.size());
            if (!std::isfinite(result.scores[c]))
                throw TrainingError("non-finite validation error");
        } catch (const TrainingError& e) {
            result.scores[c] = std::numeric_limits<double>::infinity();
            result.failed[c] = true;
            warn("grid search: hidden size " + std::to_string(spec.hidden_units) +
                 " failed: " + e.what());
        }
    }

    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < grid.candidates.size(); ++c) {
        if (result.failed[c])
            continue;
        if (!best || result.scores[c] < result.scores[*best] ||
            (result.scores[c] == result.scores[*best] &&
             grid.candidates[c] < grid.candidates[*best]))
            best = c;
    }
    if (!best)
        throw Error("grid search: every candidate hidden size failed to train");
    result.chosen = grid.candidates[*best];
    return result;
}

// ---------------------------------------------------------------------------

struct ExperimentOptions {
    GridSearchConfig grid;
    TrainConfig train;  // train.seed is the job seed
    std::size_t folds = 5;
    CasePolicy case_policy = CasePolicy::lowercase;
    bool record_per_dimension = false;
};

struct FoldOutcome {
    std::size_t fold_index = 0;
    std::map<std::string, double> per_word_errors;
    double fold_mse = 0.0;
    std::size_t chosen_hidden_units = 0;
    std::vector<double> validation_scores;  // empty when the grid had one candidate

    friend bool operator==(const FoldOutcome&, const FoldOutcome&) = default;
};

struct ExperimentResult {
    std::string job_id;
    std::string embedding_name;
    std::string dataset_name;
    std::string feature_label;
    Modality modality = Modality::eye_tracking;
    TableKind table_kind = TableKind::pretrained;
    // For baseline runs: the embedding the baseline is matched to, and the
    // baseline table index.
    std::string reference_embedding;
    std::size_t baseline_index = 0;
    std::vector<std::size_t> candidates;
    std::vector<FoldOutcome> folds;
    double overall_mse = 0.0;
    std::vector<std::string> dimension_labels;
    std::vector<double> per_dimension_errors;  // only when recorded

    /// Union of the fold maps; every word appears in exactly one fold.
    std::map<std::string, double> per_word_errors() const
    {
        std::map<std::string, double> all;
        for (const auto& f : folds)
            all.insert(f.per_word_errors.begin(), f.per_word_errors.end());
        return all;
    }

    /// Hypothesis identity shared by an embedding run and its baselines.
    std::string hypothesis_key() const
    {
        const auto& emb = table_kind == TableKind::baseline ? reference_embedding : embedding_name;
        return emb + "|" + dataset_name + "|" + feature_label;
    }

    friend bool operator==(const ExperimentResult&, const ExperimentResult&) = default;
};

/// Fits `table` to `dataset` (or to one of its features) with outer k-fold
/// cross-validation and a per-fold grid search.
inline ExperimentResult run_experiment(const WordVectorTable& table,
                                       const CognitiveDataset& dataset,
                                       std::optional<std::string> feature_label,
                                       const ExperimentOptions& options)
{
    const CognitiveDataset target =
        feature_label ? single_feature(dataset, *feature_label) : dataset;
    const auto pairs = build_supervision_pairs(table, target, options.case_policy);
    const Seed seed = options.train.seed;

    ExperimentResult result;
    result.embedding_name = table.name();
    result.dataset_name = dataset.name;
    result.feature_label = feature_label ? *feature_label : std::string(whole_vector_label);
    result.modality = dataset.modality;
    result.table_kind = table.kind();
    result.candidates = options.grid.candidates;
    if (options.record_per_dimension) {
        result.dimension_labels = target.feature_labels;
        result.per_dimension_errors.assign(target.dimension(), 0.0);
    }

    const auto splits = kfold_split(pairs.rows(), options.folds, seed);
    for (std::size_t f = 0; f < splits.size(); ++f) {
        const auto& split = splits[f];
        const auto x_train = detail::take_rows(pairs.inputs, split.train);
        const auto t_train = detail::take_rows(pairs.targets, split.train);
        const auto x_test = detail::take_rows(pairs.inputs, split.test);
        const auto t_test = detail::take_rows(pairs.targets, split.test);

        FoldOutcome outcome;
        outcome.fold_index = f;
        if (options.grid.candidates.size() == 1) {
            outcome.chosen_hidden_units = options.grid.candidates.front();
        } else {
            TrainConfig search_cfg = options.train;
            search_cfg.seed = derive_seed(seed, "grid", f);
            auto gs = grid_search_hidden_units(x_train, t_train, options.grid, search_cfg);
            outcome.chosen_hidden_units = gs.chosen;
            outcome.validation_scores = std::move(gs.scores);
        }

        TrainConfig final_cfg = options.train;
        final_cfg.seed = derive_seed(seed, "final", f);
        const NetworkSpec spec{table.dimension(), outcome.chosen_hidden_units, target.dimension()};
        const auto model = train(init_network(spec, final_cfg.seed), x_train, t_train, final_cfg);
        const Eigen::MatrixXd pred = predict(model, x_test);
        if (!pred.allFinite())
            throw TrainingError("non-finite predictions in fold " + std::to_string(f));
        const auto errors = mse(pred, t_test);
        for (std::size_t i = 0; i < split.test.size(); ++i)
            outcome.per_word_errors.emplace(pairs.words[split.test[i]], errors.per_row[i]);
        outcome.fold_mse = errors.aggregate;

        if (options.record_per_dimension) {
            const Eigen::VectorXd col = (pred - t_test).array().square().colwise().sum();
            for (Eigen::Index j = 0; j < col.size(); ++j)
                result.per_dimension_errors[static_cast<std::size_t>(j)] += col(j);
        }
        result.folds.push_back(std::move(outcome));
    }

    double total = 0.0;
    for (const auto& f : result.folds)
        total += f.fold_mse;
    result.overall_mse = total / static_cast<double>(result.folds.size());
    for (auto& v : result.per_dimension_errors)
        v /= static_cast<double>(pairs.rows());
    return result;
}

}  // namespace cogeval
