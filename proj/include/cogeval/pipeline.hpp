#pragma once

// End-to-end orchestration behind the command-line tool: data loading,
// bounded parallel job execution with resumable per-job records, the
// significance battery over a results directory, and report assembly.
//
// Output directory layout:
//
//     jobs/<id>.json          one result record per completed job
//     errors/<id>.csv         word,error for that job
//     results.jsonl           all records in plan order (rewritten after each run)
//     run_config.json         configuration echo and provenance
//     failures.txt            failed jobs of the last run, when any
//     significance.csv, significance_summary.csv, significance.json
//     report/                 report.json and the CSV bundle

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include "cognitive_data.hpp"
#include "common.hpp"
#include "embedding_store.hpp"
#include "experiment.hpp"
#include "manifest.hpp"
#include "reporting.hpp"
#include "serialization.hpp"
#include "significance.hpp"

namespace cogeval {

namespace fs = std::filesystem;

inline CognitiveDataset load_dataset(const DatasetEntry& entry)
{
    CognitiveDataset ds;
    if (entry.average_subjects) {
        std::vector<SubjectTable> subjects;
        for (const auto& p : entry.paths)
            subjects.push_back(load_subject_table(p));
        ds = average_over_subjects(subjects, entry.name, entry.modality);
    } else {
        ds = load_feature_table(entry.paths.front(), entry.modality, entry.name);
    }
    ds.stimulus = entry.stimulus;
    ds.provenance = entry.provenance;
    if (ds.targets.empty())
        throw Error("dataset '" + entry.name + "' has no rows");
    if (entry.scale)
        ds = min_max_scale(std::move(ds));
    if (entry.voxel_count)
        ds = select_output_dimensions(ds, *entry.voxel_count, entry.voxel_seed);
    ds.validate();
    return ds;
}

struct LoadedData {
    std::vector<CognitiveDataset> datasets;
    std::vector<std::shared_ptr<const WordVectorTable>> embeddings;
    // baselines[e][b]
    std::vector<std::vector<std::shared_ptr<const WordVectorTable>>> baselines;
};

/// Embedding files are filtered to words that occur in some dataset (under
/// the case policy); this does not change any result since baseline vectors
/// are seeded per word.
inline LoadedData load_data(const ExperimentManifest& m)
{
    LoadedData data;
    std::set<std::string> wanted;
    for (const auto& entry : m.datasets) {
        data.datasets.push_back(load_dataset(entry));
        for (const auto& w : normalized_vocabulary(data.datasets.back(), m.case_policy))
            wanted.insert(w);
    }
    for (const auto& e : m.embeddings) {
        VectorFileOptions opts;
        opts.name = e.name;
        opts.keep = [&](std::string_view w) {
            return wanted.contains(m.case_policy == CasePolicy::lowercase ? to_lower(w)
                                                                          : std::string(w));
        };
        auto table = parse_vector_file(e.path, opts);
        if (!e.provenance.empty())
            table.set_provenance(e.provenance);
        std::vector<std::shared_ptr<const WordVectorTable>> bases;
        if (m.baseline_count > 0 && !table.empty()) {
            const std::set<std::string> vocab(table.words().begin(), table.words().end());
            BaselineSpec spec{table.dimension(),
                              baseline_seed_for_dimension(m.master_seed, table.dimension()),
                              m.baseline_count, m.baseline_distribution};
            for (auto& b : generate_baselines(vocab, spec, e.name))
                bases.push_back(std::make_shared<const WordVectorTable>(std::move(b)));
        }
        data.embeddings.push_back(std::make_shared<const WordVectorTable>(std::move(table)));
        data.baselines.push_back(std::move(bases));
    }
    return data;
}

inline std::vector<std::vector<std::string>> feature_labels_of(const LoadedData& data)
{
    std::vector<std::vector<std::string>> out;
    for (const auto& d : data.datasets)
        out.push_back(d.feature_labels);
    return out;
}

inline json run_config_echo(const ExperimentManifest& m)
{
    json grids = json::object();
    for (const auto& e : m.embeddings)
        grids[e.name] = e.grid;
    return json{{"train", as_json(m.train)},
                {"grid", grids},
                {"grid_repeats", m.grid_repeats},
                {"validation_fraction", m.validation_fraction},
                {"folds", m.folds},
                {"case_policy", to_string(m.case_policy)},
                {"baseline", {{"count", m.baseline_count},
                              {"distribution", m.baseline_distribution == BaselineDistribution::uniform
                                                   ? "uniform" : "normal"}}},
                {"master_seed", m.master_seed},
                {"alpha", m.alpha},
                {"alternative", to_string(m.alternative)},
                {"weighting", m.weighting == Weighting::word_count ? "word_count" : "unweighted"}};
}

inline ExperimentOptions options_for(const ExperimentManifest& m, const Job& job)
{
    ExperimentOptions o;
    o.grid.candidates = m.embeddings[job.embedding_index].grid;
    o.grid.repeats = m.grid_repeats;
    o.grid.validation_fraction = m.validation_fraction;
    o.train = m.train;
    o.train.seed = job.seed;
    o.folds = m.folds;
    o.case_policy = m.case_policy;
    o.record_per_dimension = m.datasets[job.dataset_index].per_dimension_errors;
    return o;
}

inline ExperimentResult execute_job(const ExperimentManifest& m, const LoadedData& data,
                                    const Job& job)
{
    const auto& table = job.kind == TableKind::pretrained
                            ? *data.embeddings[job.embedding_index]
                            : *data.baselines[job.embedding_index][job.baseline_index];
    auto result = run_experiment(table, data.datasets[job.dataset_index], job.feature,
                                 options_for(m, job));
    result.job_id = job.id;
    result.reference_embedding = m.embeddings[job.embedding_index].name;
    result.baseline_index = job.baseline_index;
    return result;
}

namespace detail {

inline void write_atomically(const fs::path& path, const std::string& content)
{
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out << content;
        if (!out)
            throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

inline std::optional<std::string> read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

struct JobFailure {
    std::string job_id;
    std::string description;
    std::string message;
};

struct RunSummary {
    std::size_t planned = 0;
    std::size_t executed = 0;
    std::size_t skipped = 0;
    std::vector<JobFailure> failures;
    fs::path results_file;

    bool ok() const { return failures.empty(); }
};

using LogSink = std::function<void(const std::string&)>;

inline std::string describe(const ExperimentManifest& m, const Job& job)
{
    return job.table_name + " | " + m.datasets[job.dataset_index].name + " | " + job.feature_label();
}

/// Runs every job not already recorded under `m.output/jobs`, at most
/// `m.parallelism` at a time, then rewrites results.jsonl in plan order.
/// Record content is independent of scheduling.
inline RunSummary run_plan(const ExperimentManifest& m, const LoadedData& data, const JobPlan& plan,
                           const LogSink& log = {})
{
    const fs::path out = m.output;
    fs::create_directories(out / "jobs");
    fs::create_directories(out / "errors");
    const json config = run_config_echo(m);

    RunSummary summary;
    summary.planned = plan.jobs.size();
    std::mutex mutex;
    std::atomic<std::size_t> next{0};

    const auto emit = [&](const std::string& line) {
        std::lock_guard lock(mutex);
        if (log)
            log(line);
    };

    const auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= plan.jobs.size())
                return;
            const auto& job = plan.jobs[i];
            const fs::path record = out / "jobs" / (job.id + ".json");
            if (fs::exists(record)) {
                {
                    std::lock_guard lock(mutex);
                    ++summary.skipped;
                }
                emit("job=" + job.id + " status=skipped");
                continue;
            }
            const auto start = std::chrono::steady_clock::now();
            try {
                auto result = execute_job(m, data, job);
                std::ostringstream errs;
                write_word_errors_csv(errs, result.per_word_errors());
                detail::write_atomically(out / "errors" / (job.id + ".csv"), errs.str());
                detail::write_atomically(record, as_json(result, config).dump() + "\n");
                const double secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
                std::ostringstream line;
                line << "job=" << job.id << " status=ok wall=" << secs << "s"
                     << " table=" << job.table_name << " dataset=" << result.dataset_name
                     << " feature=" << result.feature_label
                     << " hidden=" << result.folds.front().chosen_hidden_units
                     << " mse=" << format_double(result.overall_mse);
                {
                    std::lock_guard lock(mutex);
                    ++summary.executed;
                }
                emit(line.str());
            } catch (const std::exception& e) {
                {
                    std::lock_guard lock(mutex);
                    summary.failures.push_back({job.id, describe(m, job), e.what()});
                }
                emit("job=" + job.id + " status=failed error=\"" + std::string(e.what()) + "\"");
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(m.parallelism, plan.jobs.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w)
            pool.emplace_back(worker);
        worker();
    }

    // plan order, so the file does not depend on completion order
    std::string combined;
    for (const auto& job : plan.jobs)
        if (auto content = detail::read_file(out / "jobs" / (job.id + ".json")))
            combined += *content;
    summary.results_file = out / "results.jsonl";
    detail::write_atomically(summary.results_file, combined);

    json cfg = config;
    json prov = json::object();
    for (std::size_t e = 0; e < m.embeddings.size(); ++e)
        if (!data.embeddings[e]->provenance().empty())
            prov[m.embeddings[e].name] = data.embeddings[e]->provenance();
    for (const auto& d : data.datasets)
        if (!d.provenance.empty())
            prov[d.name] = d.provenance;
    json groups = json::object();
    for (const auto& d : m.datasets)
        groups[d.name] = d.group;
    cfg["dataset_groups"] = groups;
    cfg["planned_hypotheses"] = m.planned_hypotheses;
    detail::write_atomically(out / "run_config.json",
                             json{{"config", cfg}, {"provenance", prov}}.dump(2) + "\n");

    std::sort(summary.failures.begin(), summary.failures.end(),
              [](const auto& a, const auto& b) { return a.job_id < b.job_id; });
    const fs::path failures = out / "failures.txt";
    if (summary.failures.empty()) {
        fs::remove(failures);
    } else {
        std::string text;
        for (const auto& f : summary.failures)
            text += f.job_id + "\t" + f.description + "\t" + f.message + "\n";
        detail::write_atomically(failures, text);
    }
    return summary;
}

inline RunSummary cmd_run(const ExperimentManifest& m, const LogSink& log = {})
{
    const auto data = load_data(m);
    const auto plan = make_job_plan(m, feature_labels_of(data));
    return run_plan(m, data, plan, log);
}

// ---------------------------------------------------------------------------

inline std::vector<ExperimentResult> load_results_dir(const fs::path& dir)
{
    const auto file = dir / "results.jsonl";
    if (!fs::exists(file))
        throw Error("no results.jsonl in " + dir.string() + " (run the pipeline first)");
    auto results = read_result_records(file);
    if (results.empty())
        throw Error("results directory " + dir.string() + " holds no result records");
    return results;
}

inline BatteryOptions battery_options(const ExperimentManifest& m)
{
    BatteryOptions o;
    o.alpha = m.alpha;
    o.alternative = m.alternative;
    o.planned_hypotheses = m.planned_hypotheses;
    for (const auto& d : m.datasets)
        o.dataset_groups[d.name] = d.group;
    return o;
}

/// Pair, test and correct everything in the results directory; writes
/// significance.csv, significance_summary.csv and significance.json there
/// (or into `out`).
inline BatteryResult cmd_significance(const fs::path& results_dir, const ExperimentManifest& m,
                                      std::optional<fs::path> out = std::nullopt)
{
    const auto results = load_results_dir(results_dir);
    std::vector<ExperimentResult> embeddings, baselines;
    for (const auto& r : results)
        (r.table_kind == TableKind::baseline ? baselines : embeddings).push_back(r);
    if (baselines.empty())
        throw Error("no baseline results in " + results_dir.string());

    // every planned embedding hypothesis must have its baselines
    std::set<std::string> with_baseline;
    for (const auto& b : baselines)
        with_baseline.insert(b.hypothesis_key());
    std::vector<std::string> missing;
    for (const auto& e : embeddings)
        if (!with_baseline.contains(e.hypothesis_key()))
            missing.push_back(e.hypothesis_key());
    if (!missing.empty())
        throw Error("missing baseline results for jobs: " + join(missing, ", "));

    auto battery = significance_battery(embeddings, baselines, battery_options(m));
    const fs::path dir = out.value_or(results_dir);
    fs::create_directories(dir);
    {
        std::ostringstream s;
        write_significance_csv(s, battery);
        detail::write_atomically(dir / "significance.csv", s.str());
    }
    {
        std::ostringstream s;
        write_significance_summary_csv(s, battery.groups);
        detail::write_atomically(dir / "significance_summary.csv", s.str());
    }
    json groups = json::object();
    for (const auto& [g, c] : battery.groups)
        groups[g] = as_json(c);
    detail::write_atomically(dir / "significance.json", groups.dump(2) + "\n");
    return battery;
}

/// Builds the report from results.jsonl plus run_config.json and
/// significance.json when present.
inline EvaluationReport cmd_report(const fs::path& results_dir, std::optional<fs::path> out = std::nullopt)
{
    const auto results = load_results_dir(results_dir);
    json config = json::object();
    std::map<std::string, std::string> provenance;
    Weighting weighting = Weighting::unweighted;
    if (auto text = detail::read_file(results_dir / "run_config.json")) {
        auto j = json::parse(*text);
        config = j.at("config");
        provenance = j.at("provenance").get<std::map<std::string, std::string>>();
        if (config.value("weighting", std::string{}) == "word_count")
            weighting = Weighting::word_count;
    }
    BatteryResult battery;
    const bool have_sig = fs::exists(results_dir / "significance.json");
    if (have_sig) {
        auto j = json::parse(*detail::read_file(results_dir / "significance.json"));
        for (const auto& [g, c] : j.items())
            battery.groups.emplace(g, correction_from_json(c));
    }
    auto report = build_report(results, have_sig ? &battery : nullptr, config, provenance, weighting);
    const fs::path dir = out.value_or(results_dir / "report");
    emit_report(report, ReportFormat::json, dir);
    emit_report(report, ReportFormat::csv_bundle, dir);
    return report;
}

/// `embedding,<task>[,<task>...]` with a header row.
inline std::map<std::string, std::map<std::string, double>> read_task_scores(const fs::path& path)
{
    auto table = read_feature_csv(path);
    std::map<std::string, std::map<std::string, double>> tasks;
    for (std::size_t j = 0; j < table.feature_labels.size(); ++j)
        for (const auto& [emb, v] : table.targets)
            tasks[table.feature_labels[j]][emb] = v[j];
    return tasks;
}

inline std::vector<CorrelationResult> cmd_correlate(const fs::path& results_dir,
                                                    const fs::path& task_csv,
                                                    std::optional<fs::path> out = std::nullopt)
{
    const auto results = load_results_dir(results_dir);
    const auto report = build_report(results);
    const auto tasks = read_task_scores(task_csv);
    const fs::path dir = out.value_or(results_dir / "report");
    fs::create_directories(dir / "plots");
    std::vector<CorrelationResult> out_corr;
    std::vector<std::string> notes;
    for (const auto& [task, scores] : tasks) {
        auto c = extrinsic_correlation(report, scores, task, &notes);
        std::ostringstream plot;
        write_plot_csv(plot, c);
        detail::write_atomically(dir / "plots" / ("extrinsic_" + detail::plot_file_name(c)),
                                 plot.str());
        out_corr.push_back(std::move(c));
    }
    std::ostringstream summary;
    write_correlations_csv(summary, out_corr);
    detail::write_atomically(dir / "extrinsic_correlations.csv", summary.str());
    std::string note_text;
    for (const auto& n : notes)
        note_text += n + "\n";
    detail::write_atomically(dir / "extrinsic_notes.txt", note_text);
    return out_corr;
}

/// Writes each embedding's baseline tables in the vector file format.
inline std::vector<fs::path> cmd_baseline_gen(const ExperimentManifest& m,
                                              std::optional<fs::path> out = std::nullopt)
{
    const auto data = load_data(m);
    const fs::path dir = out.value_or(m.output / "baselines");
    fs::create_directories(dir);
    std::vector<fs::path> written;
    for (std::size_t e = 0; e < m.embeddings.size(); ++e)
        for (std::size_t b = 0; b < data.baselines[e].size(); ++b) {
            auto path = dir / (m.embeddings[e].name + ".random" + std::to_string(b) + ".txt");
            write_vector_file(path, *data.baselines[e][b]);
            written.push_back(path);
        }
    return written;
}

}  // namespace cogeval
