#pragma once

// Paired Wilcoxon signed-rank tests of embedding errors against matched
// random-baseline errors, with Bonferroni correction per hypothesis group.

#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cognitive_data.hpp"
#include "common.hpp"
#include "experiment.hpp"

namespace cogeval {

enum class Alternative {
    less,       // embedding errors below baseline errors (d = embedding - baseline < 0)
    two_sided,
};

inline std::string_view to_string(Alternative a) { return a == Alternative::less ? "less" : "two_sided"; }

inline Alternative parse_alternative(std::string_view s)
{
    const auto v = to_lower(trim(s));
    if (v == "less")
        return Alternative::less;
    if (v == "two_sided" || v == "two-sided")
        return Alternative::two_sided;
    throw Error("unknown alternative '" + std::string(s) + "' (expected less or two_sided)");
}

enum class TestMethod { exact, normal_approximation };

inline std::string_view to_string(TestMethod m)
{
    return m == TestMethod::exact ? "exact" : "normal_approximation";
}

struct TestResult {
    double w_statistic = 0.0;      // sum of ranks of positive differences
    std::size_t n_effective = 0;   // non-zero differences
    double p_value = 1.0;
    TestMethod method = TestMethod::exact;
    bool degenerate = false;       // every difference was zero

    friend bool operator==(const TestResult&, const TestResult&) = default;
};

/// Largest n_effective for which the null distribution is enumerated exactly.
inline constexpr std::size_t exact_wilcoxon_limit = 20;

struct SignedRanks {
    std::vector<double> ranks;     // average ranks of |d| over the non-zero d
    std::vector<bool> positive;
    std::vector<std::size_t> tie_sizes;
};

/// Drops zeros and ranks |d| ascending, averaging ranks within ties.
inline SignedRanks signed_ranks(std::span<const double> differences)
{
    std::vector<std::pair<double, bool>> items;
    for (double d : differences) {
        if (!std::isfinite(d))
            throw Error("wilcoxon: non-finite difference");
        if (d != 0.0)
            items.emplace_back(std::abs(d), d > 0.0);
    }
    std::sort(items.begin(), items.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    SignedRanks out;
    out.ranks.resize(items.size());
    out.positive.resize(items.size());
    for (std::size_t i = 0; i < items.size();) {
        std::size_t j = i;
        while (j < items.size() && items[j].first == items[i].first)
            ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t t = i; t < j; ++t) {
            out.ranks[t] = avg;
            out.positive[t] = items[t].second;
        }
        out.tie_sizes.push_back(j - i);
        i = j;
    }
    return out;
}

namespace detail {

inline double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Null distribution of twice the positive-rank sum. Average ranks are
/// multiples of 1/2, so doubled ranks are integers and the counts are exact.
inline std::vector<double> doubled_rank_sum_counts(const std::vector<double>& ranks)
{
    std::size_t total = 0;
    std::vector<std::size_t> doubled;
    for (double r : ranks) {
        doubled.push_back(static_cast<std::size_t>(std::llround(2.0 * r)));
        total += doubled.back();
    }
    std::vector<double> counts(total + 1, 0.0);
    counts[0] = 1.0;
    std::size_t reach = 0;
    for (auto r : doubled) {
        for (std::size_t s = reach + 1; s-- > 0;)
            if (counts[s] != 0.0)
                counts[s + r] += counts[s];
        reach += r;
    }
    return counts;
}

}  // namespace detail

/// Exact for n_effective <= exact_wilcoxon_limit, normal approximation above;
/// `method` forces one or the other.
inline TestResult wilcoxon_signed_rank(std::span<const double> differences,
                                       Alternative alternative = Alternative::less,
                                       std::optional<TestMethod> method = std::nullopt)
{
    if (differences.empty())
        throw Error("wilcoxon: need at least one difference");
    const auto sr = signed_ranks(differences);
    TestResult result;
    result.n_effective = sr.ranks.size();
    if (result.n_effective == 0) {
        result.degenerate = true;
        result.p_value = 1.0;
        return result;
    }
    for (std::size_t i = 0; i < sr.ranks.size(); ++i)
        if (sr.positive[i])
            result.w_statistic += sr.ranks[i];

    const double n = static_cast<double>(result.n_effective);
    const bool exact = method ? *method == TestMethod::exact
                              : result.n_effective <= exact_wilcoxon_limit;
    if (exact && result.n_effective > 60)
        throw Error("wilcoxon: exact test limited to 60 non-zero differences");
    if (exact) {
        result.method = TestMethod::exact;
        const auto counts = detail::doubled_rank_sum_counts(sr.ranks);
        const auto observed = static_cast<std::size_t>(std::llround(2.0 * result.w_statistic));
        double below = 0.0, above = 0.0;
        for (std::size_t s = 0; s < counts.size(); ++s) {
            if (s <= observed)
                below += counts[s];
            if (s >= observed)
                above += counts[s];
        }
        const double all = std::ldexp(1.0, static_cast<int>(result.n_effective));
        result.p_value = alternative == Alternative::less
                             ? below / all
                             : std::min(1.0, 2.0 * std::min(below, above) / all);
    } else {
        result.method = TestMethod::normal_approximation;
        const double mean = n * (n + 1.0) / 4.0;
        double tie_term = 0.0;
        for (auto t : sr.tie_sizes) {
            const double tt = static_cast<double>(t);
            tie_term += tt * tt * tt - tt;
        }
        const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
        const double sd = std::sqrt(var);
        if (alternative == Alternative::less) {
            result.p_value = detail::standard_normal_cdf((result.w_statistic - mean + 0.5) / sd);
        } else {
            const double z = (std::abs(result.w_statistic - mean) - 0.5) / sd;
            result.p_value = std::min(1.0, 2.0 * detail::standard_normal_cdf(-z));
        }
    }
    result.p_value = std::clamp(result.p_value, 0.0, 1.0);
    return result;
}

// ---------------------------------------------------------------------------

struct Hypothesis {
    std::string id;  // embedding|dataset|feature
    std::string embedding;
    std::string dataset;
    std::string feature;
    Modality modality = Modality::eye_tracking;
    std::map<std::string, double> embedding_errors;
    std::map<std::string, double> baseline_errors;  // mean over baseline runs

    /// embedding - baseline, in word order.
    std::vector<double> differences() const
    {
        std::vector<double> d;
        d.reserve(embedding_errors.size());
        for (const auto& [w, e] : embedding_errors)
            d.push_back(e - baseline_errors.at(w));
        return d;
    }
};

inline Hypothesis pair_errors(const ExperimentResult& experiment,
                              std::span<const ExperimentResult> baselines)
{
    if (baselines.empty())
        throw Error("hypothesis '" + experiment.hypothesis_key() + "': no baseline results");
    Hypothesis h;
    h.id = experiment.hypothesis_key();
    h.embedding = experiment.table_kind == TableKind::baseline ? experiment.reference_embedding
                                                               : experiment.embedding_name;
    h.dataset = experiment.dataset_name;
    h.feature = experiment.feature_label;
    h.modality = experiment.modality;
    h.embedding_errors = experiment.per_word_errors();

    std::map<std::string, double> sums;
    for (const auto& b : baselines) {
        const auto errors = b.per_word_errors();
        std::vector<std::string> mismatch;
        for (const auto& [w, _] : h.embedding_errors)
            if (!errors.contains(w))
                mismatch.push_back(w);
        for (const auto& [w, _] : errors)
            if (!h.embedding_errors.contains(w))
                mismatch.push_back(w);
        if (!mismatch.empty()) {
            if (mismatch.size() > 10) {
                mismatch.resize(10);
                mismatch.push_back("...");
            }
            throw Error("hypothesis '" + h.id + "': baseline '" + b.embedding_name +
                        "' word set differs; symmetric difference: " + join(mismatch, ", "));
        }
        for (const auto& [w, e] : errors)
            sums[w] += e;
    }
    for (auto& [w, s] : sums)
        h.baseline_errors.emplace(w, s / static_cast<double>(baselines.size()));
    return h;
}

// ---------------------------------------------------------------------------

struct CorrectionOutcome {
    double alpha = 0.01;
    std::size_t n_hypotheses = 0;
    double threshold = 0.0;
    std::map<std::string, bool> verdicts;
    std::size_t significant = 0;
    double ratio = 0.0;

    /// "significant/total"
    std::string label() const
    {
        return std::to_string(significant) + "/" + std::to_string(n_hypotheses);
    }

    friend bool operator==(const CorrectionOutcome&, const CorrectionOutcome&) = default;
};

inline double bonferroni_threshold(double alpha, std::size_t n_hypotheses)
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw Error("alpha must lie in (0, 1)");
    if (n_hypotheses == 0)
        throw Error("number of hypotheses must be positive");
    return alpha / static_cast<double>(n_hypotheses);
}

/// Rejects where p < alpha / N. N may exceed the number of results when it
/// counts planned hypotheses that were not run.
inline CorrectionOutcome bonferroni(const std::map<std::string, TestResult>& results, double alpha,
                                    std::size_t n_hypotheses)
{
    CorrectionOutcome out;
    out.alpha = alpha;
    out.n_hypotheses = n_hypotheses;
    out.threshold = bonferroni_threshold(alpha, n_hypotheses);
    if (results.size() > n_hypotheses)
        throw Error("bonferroni: " + std::to_string(results.size()) +
                    " results exceed N = " + std::to_string(n_hypotheses));
    for (const auto& [id, r] : results) {
        const bool sig = r.p_value < out.threshold;
        out.verdicts.emplace(id, sig);
        out.significant += sig ? 1 : 0;
    }
    out.ratio = static_cast<double>(out.significant) / static_cast<double>(n_hypotheses);
    return out;
}

struct BatteryOptions {
    double alpha = 0.01;
    Alternative alternative = Alternative::less;
    // dataset name -> hypothesis group; datasets not listed group by modality
    std::map<std::string, std::string> dataset_groups;
    // group -> planned N; groups not listed use the number of hypotheses run
    std::map<std::string, std::size_t> planned_hypotheses;
};

struct HypothesisRecord {
    Hypothesis hypothesis;
    std::string group;
    TestResult test;
};

struct BatteryResult {
    std::vector<HypothesisRecord> records;
    std::map<std::string, CorrectionOutcome> groups;
};

/// Pairs every non-baseline experiment with its baselines (matched by
/// hypothesis key), tests it, and applies Bonferroni within each group.
/// Groups without hypotheses are absent from the output.
inline BatteryResult significance_battery(std::span<const ExperimentResult> experiments,
                                          std::span<const ExperimentResult> baselines,
                                          const BatteryOptions& options)
{
    std::map<std::string, std::vector<ExperimentResult>> by_key;
    for (const auto& b : baselines)
        by_key[b.hypothesis_key()].push_back(b);

    BatteryResult out;
    std::map<std::string, std::map<std::string, TestResult>> grouped;
    std::vector<std::string> missing;
    for (const auto& e : experiments) {
        auto it = by_key.find(e.hypothesis_key());
        if (it == by_key.end()) {
            missing.push_back(e.hypothesis_key());
            continue;
        }
        HypothesisRecord rec;
        rec.hypothesis = pair_errors(e, it->second);
        auto g = options.dataset_groups.find(e.dataset_name);
        rec.group = g != options.dataset_groups.end() ? g->second : std::string(to_string(e.modality));
        const auto d = rec.hypothesis.differences();
        rec.test = wilcoxon_signed_rank(d, options.alternative);
        grouped[rec.group].emplace(rec.hypothesis.id, rec.test);
        out.records.push_back(std::move(rec));
    }
    if (!missing.empty())
        throw Error("missing baseline results for: " + join(missing, ", "));

    for (const auto& [group, results] : grouped) {
        auto planned = options.planned_hypotheses.find(group);
        const std::size_t n =
            planned != options.planned_hypotheses.end() ? planned->second : results.size();
        out.groups.emplace(group, bonferroni(results, options.alpha, n));
    }
    return out;
}

}  // namespace cogeval
