#pragma once

// Aggregate MSE tables, correlations between modalities, datasets and
// extrinsic task scores, output-dimension rankings, and report emission
// (JSON document plus a CSV bundle with plot-data series).

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cognitive_data.hpp"
#include "common.hpp"
#include "experiment.hpp"
#include "serialization.hpp"
#include "significance.hpp"

namespace cogeval {

inline constexpr int report_schema_version = 1;

enum class AggregateLevel { dataset, modality, global };
enum class Weighting { unweighted, word_count };

/// row (embedding) -> column (dataset / modality / "all") -> mean MSE
using MseTable = std::map<std::string, std::map<std::string, double>>;

inline constexpr std::string_view global_column = "all";

/// Baseline runs are pooled into one row per matched embedding.
inline std::string report_row_name(const ExperimentResult& r)
{
    return r.table_kind == TableKind::baseline ? "random(" + r.reference_embedding + ")"
                                               : r.embedding_name;
}

inline MseTable aggregate(std::span<const ExperimentResult> results, AggregateLevel level,
                          Weighting weighting = Weighting::unweighted)
{
    if (results.empty())
        throw Error("aggregate: no results");
    std::map<std::string, std::map<std::string, std::pair<double, double>>> acc;
    for (const auto& r : results) {
        std::string column;
        switch (level) {
        case AggregateLevel::dataset: column = r.dataset_name; break;
        case AggregateLevel::modality: column = std::string(to_string(r.modality)); break;
        case AggregateLevel::global: column = std::string(global_column); break;
        }
        double weight = 1.0;
        if (weighting == Weighting::word_count) {
            weight = 0.0;
            for (const auto& f : r.folds)
                weight += static_cast<double>(f.per_word_errors.size());
        }
        auto& [sum, wsum] = acc[report_row_name(r)][column];
        sum += weight * r.overall_mse;
        wsum += weight;
    }
    MseTable table;
    for (const auto& [row, cols] : acc)
        for (const auto& [col, sw] : cols)
            table[row][col] = sw.first / sw.second;
    return table;
}

// ---------------------------------------------------------------------------

struct PlotPoint {
    std::string label;
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const PlotPoint&, const PlotPoint&) = default;
};

struct CorrelationResult {
    std::string series_x;
    std::string series_y;
    std::size_t n = 0;
    std::optional<double> pearson_r;     // absent when a series is constant
    std::optional<double> spearman_rho;  // absent when a series is all-tied
    std::vector<PlotPoint> points;

    friend bool operator==(const CorrelationResult&, const CorrelationResult&) = default;
};

inline std::optional<double> pearson_coefficient(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2)
        throw Error("pearson: need at least 2 aligned pairs");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0)
        return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

/// 1-based ranks, ties averaged.
inline std::vector<double> average_ranks(std::span<const double> v)
{
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j < idx.size() && v[idx[j]] == v[idx[i]])
            ++j;
        for (std::size_t t = i; t < j; ++t)
            ranks[idx[t]] = 0.5 * static_cast<double>(i + 1 + j);
        i = j;
    }
    return ranks;
}

inline std::optional<double> spearman_coefficient(std::span<const double> x, std::span<const double> y)
{
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    return pearson_coefficient(rx, ry);
}

/// Correlates two embedding-keyed series over their shared keys.
inline CorrelationResult pearson(const std::map<std::string, double>& series_x,
                                 const std::map<std::string, double>& series_y,
                                 std::string name_x = "x", std::string name_y = "y")
{
    CorrelationResult r;
    r.series_x = std::move(name_x);
    r.series_y = std::move(name_y);
    std::vector<double> xs, ys;
    for (const auto& [label, x] : series_x) {
        auto it = series_y.find(label);
        if (it == series_y.end())
            continue;
        xs.push_back(x);
        ys.push_back(it->second);
        r.points.push_back({label, x, it->second});
    }
    r.n = xs.size();
    if (r.n < 2)
        throw Error("correlation " + r.series_x + " vs " + r.series_y +
                    ": fewer than 2 shared entries");
    r.pearson_r = pearson_coefficient(xs, ys);
    r.spearman_rho = spearman_coefficient(xs, ys);
    return r;
}

// ---------------------------------------------------------------------------

struct DimensionRanking {
    std::string dataset;
    std::string embedding;
    std::vector<std::pair<std::string, double>> ordered;  // ascending mean error

    std::vector<std::pair<std::string, double>> best(std::size_t k) const
    {
        return {ordered.begin(), ordered.begin() + static_cast<std::ptrdiff_t>(std::min(k, ordered.size()))};
    }
    std::vector<std::pair<std::string, double>> worst(std::size_t k) const
    {
        const auto n = std::min(k, ordered.size());
        return {ordered.rbegin(), ordered.rbegin() + static_cast<std::ptrdiff_t>(n)};
    }

    friend bool operator==(const DimensionRanking&, const DimensionRanking&) = default;
};

/// Mean per-dimension squared error over the given runs of one multi-output
/// dataset, sorted ascending with ties broken by label.
inline DimensionRanking rank_output_dimensions(std::span<const ExperimentResult> results)
{
    if (results.empty())
        throw Error("rank_output_dimensions: no results");
    DimensionRanking ranking;
    ranking.dataset = results.front().dataset_name;
    std::set<std::string> embeddings;
    const auto& labels = results.front().dimension_labels;
    if (labels.size() < 2)
        throw Error("rank_output_dimensions: dataset '" + ranking.dataset +
                    "' needs at least 2 output dimensions");
    std::vector<double> sums(labels.size(), 0.0);
    for (const auto& r : results) {
        if (r.per_dimension_errors.empty())
            throw Error("rank_output_dimensions: per-dimension errors were not recorded for '" +
                        r.embedding_name + "' on '" + r.dataset_name +
                        "'; re-run with per_dimension_errors = true");
        if (r.dimension_labels != labels || r.dataset_name != ranking.dataset)
            throw Error("rank_output_dimensions: results mix different datasets or labels");
        for (std::size_t j = 0; j < sums.size(); ++j)
            sums[j] += r.per_dimension_errors[j];
        embeddings.insert(report_row_name(r));
    }
    ranking.embedding = embeddings.size() == 1 ? *embeddings.begin() : std::string("(pooled)");
    for (std::size_t j = 0; j < labels.size(); ++j)
        ranking.ordered.emplace_back(labels[j], sums[j] / static_cast<double>(results.size()));
    std::sort(ranking.ordered.begin(), ranking.ordered.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    return ranking;
}

// ---------------------------------------------------------------------------

struct EvaluationReport {
    int schema_version = report_schema_version;
    MseTable mse_by_dataset;
    MseTable mse_by_modality;
    MseTable mse_global;
    std::set<std::string> baseline_rows;
    std::map<std::string, std::string> dataset_modality;
    std::map<std::string, CorrectionOutcome> significance;
    std::vector<CorrelationResult> correlations;
    std::vector<DimensionRanking> dimension_rankings;
    json config = json::object();
    std::map<std::string, std::string> provenance;
    std::vector<std::string> notes;

    /// Rows that correspond to real embeddings.
    std::vector<std::string> embeddings() const
    {
        std::vector<std::string> out;
        for (const auto& [row, _] : mse_global)
            if (!baseline_rows.contains(row))
                out.push_back(row);
        return out;
    }

    friend bool operator==(const EvaluationReport&, const EvaluationReport&) = default;
};

namespace detail {
inline std::map<std::string, double> column_series(const EvaluationReport& report,
                                                   const MseTable& table,
                                                   const std::string& column)
{
    std::map<std::string, double> s;
    for (const auto& [row, cols] : table) {
        if (report.baseline_rows.contains(row))
            continue;
        if (auto it = cols.find(column); it != cols.end())
            s.emplace(row, it->second);
    }
    return s;
}
}  // namespace detail

/// One correlation per pair of modalities present, over per-embedding
/// modality aggregates. Pairs with fewer than 2 shared embeddings are
/// skipped and noted.
inline std::vector<CorrelationResult> cross_modality_correlation(EvaluationReport& report)
{
    std::vector<std::string> present;
    for (auto m : all_modalities) {
        const std::string name(to_string(m));
        if (!detail::column_series(report, report.mse_by_modality, name).empty())
            present.push_back(name);
    }
    std::vector<CorrelationResult> out;
    for (std::size_t a = 0; a < present.size(); ++a)
        for (std::size_t b = a + 1; b < present.size(); ++b) {
            const auto x = detail::column_series(report, report.mse_by_modality, present[a]);
            const auto y = detail::column_series(report, report.mse_by_modality, present[b]);
            try {
                out.push_back(pearson(x, y, present[a], present[b]));
            } catch (const Error&) {
                report.notes.push_back("skipped correlation " + present[a] + " vs " +
                                       present[b] + ": fewer than 2 shared embeddings");
            }
        }
    return out;
}

/// Dataset-vs-dataset correlations within each modality.
inline std::vector<CorrelationResult> within_modality_correlation(EvaluationReport& report)
{
    std::map<std::string, std::vector<std::string>> by_modality;
    for (const auto& [ds, mod] : report.dataset_modality)
        by_modality[mod].push_back(ds);
    std::vector<CorrelationResult> out;
    for (const auto& [mod, datasets] : by_modality)
        for (std::size_t a = 0; a < datasets.size(); ++a)
            for (std::size_t b = a + 1; b < datasets.size(); ++b) {
                const auto x = detail::column_series(report, report.mse_by_dataset, datasets[a]);
                const auto y = detail::column_series(report, report.mse_by_dataset, datasets[b]);
                try {
                    out.push_back(pearson(x, y, datasets[a], datasets[b]));
                } catch (const Error&) {
                    report.notes.push_back("skipped correlation " + datasets[a] + " vs " +
                                           datasets[b] + ": fewer than 2 shared embeddings");
                }
            }
    return out;
}

/// Global aggregate MSE against externally supplied task scores. Embeddings
/// missing on either side are excluded and listed in `notes`.
inline CorrelationResult extrinsic_correlation(const EvaluationReport& report,
                                               const std::map<std::string, double>& task_scores,
                                               const std::string& task_name,
                                               std::vector<std::string>* notes = nullptr)
{
    const auto mse = detail::column_series(report, report.mse_global, std::string(global_column));
    if (notes) {
        for (const auto& [emb, _] : mse)
            if (!task_scores.contains(emb))
                notes->push_back("embedding '" + emb + "' has no " + task_name + " score");
        for (const auto& [emb, _] : task_scores)
            if (!mse.contains(emb))
                notes->push_back(task_name + " score for '" + emb + "' has no cognitive result");
    }
    return pearson(mse, task_scores, "cognitive_mse", task_name);
}

/// Assembles the report from experiment outputs alone (plus optional
/// significance results).
inline EvaluationReport build_report(std::span<const ExperimentResult> results,
                                     const BatteryResult* significance = nullptr,
                                     json config = json::object(),
                                     std::map<std::string, std::string> provenance = {},
                                     Weighting weighting = Weighting::unweighted)
{
    EvaluationReport report;
    report.mse_by_dataset = aggregate(results, AggregateLevel::dataset, weighting);
    report.mse_by_modality = aggregate(results, AggregateLevel::modality, weighting);
    report.mse_global = aggregate(results, AggregateLevel::global, weighting);
    for (const auto& r : results) {
        if (r.table_kind == TableKind::baseline)
            report.baseline_rows.insert(report_row_name(r));
        report.dataset_modality[r.dataset_name] = std::string(to_string(r.modality));
    }
    if (significance)
        report.significance = significance->groups;
    report.config = std::move(config);
    report.provenance = std::move(provenance);

    report.correlations = cross_modality_correlation(report);
    auto within = within_modality_correlation(report);
    report.correlations.insert(report.correlations.end(), within.begin(), within.end());

    std::map<std::pair<std::string, std::string>, std::vector<ExperimentResult>> dims;
    for (const auto& r : results)
        if (!r.per_dimension_errors.empty() && r.table_kind == TableKind::pretrained)
            dims[{r.dataset_name, r.embedding_name}].push_back(r);
    for (const auto& [key, rs] : dims)
        report.dimension_rankings.push_back(rank_output_dimensions(rs));
    return report;
}

// ---------------------------------------------------------------------------
// JSON

inline json as_json(const CorrectionOutcome& c)
{
    return json{{"alpha", c.alpha},         {"n_hypotheses", c.n_hypotheses},
                {"threshold", c.threshold}, {"verdicts", c.verdicts},
                {"significant", c.significant}, {"ratio", c.ratio},
                {"label", c.label()}};
}

inline CorrectionOutcome correction_from_json(const json& j)
{
    CorrectionOutcome c;
    c.alpha = j.at("alpha").get<double>();
    c.n_hypotheses = j.at("n_hypotheses").get<std::size_t>();
    c.threshold = j.at("threshold").get<double>();
    c.verdicts = j.at("verdicts").get<std::map<std::string, bool>>();
    c.significant = j.at("significant").get<std::size_t>();
    c.ratio = j.at("ratio").get<double>();
    return c;
}

inline json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
inline std::optional<double> optional_from_json(const json& j)
{
    return j.is_null() ? std::nullopt : std::optional<double>(j.get<double>());
}

inline json as_json(const CorrelationResult& c)
{
    json pts = json::array();
    for (const auto& p : c.points)
        pts.push_back({{"label", p.label}, {"x", p.x}, {"y", p.y}});
    return json{{"series_x", c.series_x},
                {"series_y", c.series_y},
                {"n", c.n},
                {"pearson_r", optional_to_json(c.pearson_r)},
                {"spearman_rho", optional_to_json(c.spearman_rho)},
                {"points", std::move(pts)}};
}

inline CorrelationResult correlation_from_json(const json& j)
{
    CorrelationResult c;
    c.series_x = j.at("series_x").get<std::string>();
    c.series_y = j.at("series_y").get<std::string>();
    c.n = j.at("n").get<std::size_t>();
    c.pearson_r = optional_from_json(j.at("pearson_r"));
    c.spearman_rho = optional_from_json(j.at("spearman_rho"));
    for (const auto& p : j.at("points"))
        c.points.push_back({p.at("label").get<std::string>(), p.at("x").get<double>(),
                            p.at("y").get<double>()});
    return c;
}

inline json as_json(const EvaluationReport& r)
{
    json sig = json::object();
    for (const auto& [g, c] : r.significance)
        sig[g] = as_json(c);
    json corr = json::array();
    for (const auto& c : r.correlations)
        corr.push_back(as_json(c));
    json ranks = json::array();
    for (const auto& d : r.dimension_rankings) {
        json ordered = json::array();
        for (const auto& [label, e] : d.ordered)
            ordered.push_back({{"label", label}, {"mean_error", e}});
        ranks.push_back({{"dataset", d.dataset}, {"embedding", d.embedding}, {"ordered", ordered}});
    }
    return json{{"schema_version", r.schema_version},
                {"mse_by_dataset", r.mse_by_dataset},
                {"mse_by_modality", r.mse_by_modality},
                {"mse_global", r.mse_global},
                {"baseline_rows", r.baseline_rows},
                {"dataset_modality", r.dataset_modality},
                {"significance", std::move(sig)},
                {"correlations", std::move(corr)},
                {"dimension_rankings", std::move(ranks)},
                {"config", r.config},
                {"provenance", r.provenance},
                {"notes", r.notes}};
}

inline EvaluationReport report_from_json(const json& j)
{
    EvaluationReport r;
    r.schema_version = j.at("schema_version").get<int>();
    if (r.schema_version != report_schema_version)
        throw Error("unsupported report schema_version " + std::to_string(r.schema_version));
    r.mse_by_dataset = j.at("mse_by_dataset").get<MseTable>();
    r.mse_by_modality = j.at("mse_by_modality").get<MseTable>();
    r.mse_global = j.at("mse_global").get<MseTable>();
    r.baseline_rows = j.at("baseline_rows").get<std::set<std::string>>();
    r.dataset_modality = j.at("dataset_modality").get<std::map<std::string, std::string>>();
    for (const auto& [g, c] : j.at("significance").items())
        r.significance.emplace(g, correction_from_json(c));
    for (const auto& c : j.at("correlations"))
        r.correlations.push_back(correlation_from_json(c));
    for (const auto& d : j.at("dimension_rankings")) {
        DimensionRanking dr;
        dr.dataset = d.at("dataset").get<std::string>();
        dr.embedding = d.at("embedding").get<std::string>();
        for (const auto& o : d.at("ordered"))
            dr.ordered.emplace_back(o.at("label").get<std::string>(), o.at("mean_error").get<double>());
        r.dimension_rankings.push_back(std::move(dr));
    }
    r.config = j.at("config");
    r.provenance = j.at("provenance").get<std::map<std::string, std::string>>();
    r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
}

// ---------------------------------------------------------------------------
// Files

namespace detail {
inline std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    return out;
}

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s)
        q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

inline std::string optional_cell(const std::optional<double>& v)
{
    return v ? format_double(*v) : std::string{"NA"};
}

inline std::string plot_file_name(const CorrelationResult& c)
{
    std::string s = c.series_x + "_vs_" + c.series_y;
    for (auto& ch : s)
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_')
            ch = '_';
    return s + ".csv";
}
}  // namespace detail

/// Rows are embeddings, columns the union of the table's columns.
inline void write_mse_table_csv(std::ostream& out, const MseTable& table)
{
    std::set<std::string> cols;
    for (const auto& [_, c] : table)
        for (const auto& [name, __] : c)
            cols.insert(name);
    out << "embedding";
    for (const auto& c : cols)
        out << ',' << detail::csv_field(c);
    out << '\n';
    for (const auto& [row, c] : table) {
        out << detail::csv_field(row);
        for (const auto& name : cols) {
            auto it = c.find(name);
            out << ',' << (it == c.end() ? std::string("NA") : format_double(it->second));
        }
        out << '\n';
    }
}

/// Columns x,y,label,series.
inline void write_plot_csv(std::ostream& out, const CorrelationResult& c)
{
    out << "x,y,label,series\n";
    const std::string series = detail::csv_field(c.series_x + " vs " + c.series_y);
    for (const auto& p : c.points)
        out << format_double(p.x) << ',' << format_double(p.y) << ','
            << detail::csv_field(p.label) << ',' << series << '\n';
}

inline void write_correlations_csv(std::ostream& out, std::span<const CorrelationResult> cs)
{
    out << "series_x,series_y,n,pearson_r,spearman_rho\n";
    for (const auto& c : cs)
        out << detail::csv_field(c.series_x) << ',' << detail::csv_field(c.series_y) << ','
            << c.n << ',' << detail::optional_cell(c.pearson_r) << ','
            << detail::optional_cell(c.spearman_rho) << '\n';
}

inline void write_significance_summary_csv(std::ostream& out,
                                           const std::map<std::string, CorrectionOutcome>& groups)
{
    out << "group,significant,total,label,alpha,threshold,ratio\n";
    for (const auto& [g, c] : groups)
        out << detail::csv_field(g) << ',' << c.significant << ',' << c.n_hypotheses << ','
            << c.label() << ',' << format_double(c.alpha) << ',' << format_double(c.threshold)
            << ',' << format_double(c.ratio) << '\n';
}

inline void write_significance_csv(std::ostream& out, const BatteryResult& battery)
{
    out << "hypothesis_id,modality,W,n,p,method,threshold,significant\n";
    for (const auto& rec : battery.records) {
        const auto& outcome = battery.groups.at(rec.group);
        out << detail::csv_field(rec.hypothesis.id) << ',' << to_string(rec.hypothesis.modality)
            << ',' << format_double(rec.test.w_statistic) << ',' << rec.test.n_effective << ','
            << format_double(rec.test.p_value) << ',' << to_string(rec.test.method) << ','
            << format_double(outcome.threshold) << ','
            << (outcome.verdicts.at(rec.hypothesis.id) ? "true" : "false") << '\n';
    }
}

inline void write_dimension_ranking_csv(std::ostream& out, const DimensionRanking& d)
{
    out << "rank,label,mean_error\n";
    for (std::size_t i = 0; i < d.ordered.size(); ++i)
        out << i + 1 << ',' << detail::csv_field(d.ordered[i].first) << ','
            << format_double(d.ordered[i].second) << '\n';
}

enum class ReportFormat { json, csv_bundle };

/// Writes report.json or a CSV bundle into `dir`.
inline void emit_report(const EvaluationReport& report, ReportFormat format,
                        const std::filesystem::path& dir)
{
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw Error("cannot create report directory " + dir.string() + ": " + ec.message());
    if (format == ReportFormat::json) {
        auto out = detail::open_output(dir / "report.json");
        out << as_json(report).dump(2) << '\n';
        return;
    }
    {
        auto out = detail::open_output(dir / "mse_by_dataset.csv");
        write_mse_table_csv(out, report.mse_by_dataset);
    }
    {
        auto out = detail::open_output(dir / "mse_by_modality.csv");
        write_mse_table_csv(out, report.mse_by_modality);
    }
    {
        auto out = detail::open_output(dir / "mse_global.csv");
        write_mse_table_csv(out, report.mse_global);
    }
    if (!report.significance.empty()) {
        auto out = detail::open_output(dir / "significance_summary.csv");
        write_significance_summary_csv(out, report.significance);
    }
    {
        auto out = detail::open_output(dir / "correlations.csv");
        write_correlations_csv(out, report.correlations);
    }
    fs::create_directories(dir / "plots");
    for (const auto& c : report.correlations) {
        auto out = detail::open_output(dir / "plots" / detail::plot_file_name(c));
        write_plot_csv(out, c);
    }
    for (const auto& d : report.dimension_rankings) {
        auto name = "dimension_ranking_" + d.dataset + "_" + d.embedding + ".csv";
        for (auto& ch : name)
            if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.')
                ch = '_';
        auto out = detail::open_output(dir / name);
        write_dimension_ranking_csv(out, d);
    }
}

inline EvaluationReport load_report(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open report " + path.string());
    return report_from_json(json::parse(in));
}

}  // namespace cogeval
