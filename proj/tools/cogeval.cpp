// cogeval: evaluate word-vector tables against word-level cognitive data.
//
//   cogeval run          --manifest m.ini [--out DIR] [--jobs N] [--seed S]
//   cogeval significance --manifest m.ini [--results DIR] [--out DIR]
//   cogeval report       --results DIR [--out DIR]
//   cogeval correlate    --results DIR --scores tasks.csv [--out DIR]
//   cogeval baseline-gen --manifest m.ini [--out DIR] [--seed S]
//   cogeval validate     --manifest m.ini

#include <CLI11.hpp>

#include <iostream>

#include "cogeval/cogeval.hpp"

namespace {

using namespace cogeval;

struct CommonArgs {
    std::string manifest;
    std::string out;
    std::string results;
    std::size_t jobs = 0;
    std::optional<Seed> seed;
};

ExperimentManifest load_manifest(const CommonArgs& a, bool with_out = true)
{
    ManifestOverrides o;
    if (with_out && !a.out.empty())
        o.output = a.out;
    if (a.jobs > 0)
        o.parallelism = a.jobs;
    o.master_seed = a.seed;
    return parse_manifest(a.manifest, o);
}

int run(const CommonArgs& a)
{
    const auto m = load_manifest(a);
    const auto summary = cmd_run(m, [](const std::string& line) { std::cerr << line << '\n'; });
    std::cout << "planned=" << summary.planned << " executed=" << summary.executed
              << " skipped=" << summary.skipped << " failed=" << summary.failures.size()
              << " results=" << summary.results_file.string() << '\n';
    for (const auto& f : summary.failures)
        std::cout << "FAILED " << f.job_id << " " << f.description << ": " << f.message << '\n';
    return summary.ok() ? 0 : 1;
}

int significance(const CommonArgs& a)
{
    const auto m = load_manifest(a, false);
    const fs::path results = a.results.empty() ? m.output : fs::path(a.results);
    auto battery = cmd_significance(results, m,
                                    a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out));
    for (const auto& [group, c] : battery.groups)
        std::cout << group << " " << c.label() << " threshold=" << format_double(c.threshold) << '\n';
    return 0;
}

int report(const CommonArgs& a)
{
    auto r = cmd_report(a.results, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out));
    std::cout << "embeddings=" << r.embeddings().size() << " correlations=" << r.correlations.size()
              << '\n';
    for (const auto& n : r.notes)
        std::cout << "note: " << n << '\n';
    return 0;
}

int correlate(const CommonArgs& a, const std::string& scores)
{
    auto cs = cmd_correlate(a.results, scores,
                            a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out));
    for (const auto& c : cs) {
        std::cout << c.series_y << " n=" << c.n << " pearson="
                  << (c.pearson_r ? format_double(*c.pearson_r) : "NA") << " spearman="
                  << (c.spearman_rho ? format_double(*c.spearman_rho) : "NA") << '\n';
    }
    return 0;
}

int baseline_gen(const CommonArgs& a)
{
    const auto m = load_manifest(a, false);
    for (const auto& p : cmd_baseline_gen(m, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out)))
        std::cout << p.string() << '\n';
    return 0;
}

int validate(const CommonArgs& a)
{
    const auto m = load_manifest(a);
    std::vector<std::vector<std::string>> labels;
    for (const auto& d : m.datasets)
        labels.push_back(load_dataset(d).feature_labels);
    const auto plan = make_job_plan(m, labels);
    std::cout << "manifest ok: " << m.embeddings.size() << " embeddings, " << m.datasets.size()
              << " datasets, " << plan.jobs.size() << " jobs\n";
    for (const auto& e : m.embeddings) {
        std::cout << "  embedding " << e.name << " grid=[";
        for (std::size_t i = 0; i < e.grid.size(); ++i)
            std::cout << (i ? "," : "") << e.grid[i];
        std::cout << "]" << (e.grid_defaulted ? " (default)" : "") << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Evaluate word embeddings against cognitive language-processing data"};
    app.require_subcommand(1);

    CommonArgs args;
    std::string scores;
    std::uint64_t seed_value = 0;

    const auto add_manifest = [&](CLI::App* sub) {
        sub->add_option("--manifest", args.manifest, "Experiment manifest")->required()->check(CLI::ExistingFile);
    };
    const auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", seed_value, "Override the master seed");
    };

    auto* run_cmd = app.add_subcommand("run", "Train and evaluate every job in the manifest");
    add_manifest(run_cmd);
    run_cmd->add_option("--out", args.out, "Output directory");
    run_cmd->add_option("--jobs", args.jobs, "Maximum concurrent jobs");
    add_seed(run_cmd);

    auto* sig_cmd = app.add_subcommand("significance", "Wilcoxon tests with Bonferroni correction");
    add_manifest(sig_cmd);
    sig_cmd->add_option("--results", args.results, "Results directory (default: manifest output)");
    sig_cmd->add_option("--out", args.out, "Where to write significance files");

    auto* report_cmd = app.add_subcommand("report", "Aggregate tables, correlations and plot data");
    report_cmd->add_option("--results", args.results, "Results directory")->required();
    report_cmd->add_option("--out", args.out, "Report directory (default: <results>/report)");

    auto* corr_cmd = app.add_subcommand("correlate", "Correlate results with extrinsic task scores");
    corr_cmd->add_option("--results", args.results, "Results directory")->required();
    corr_cmd->add_option("--scores", scores, "CSV embedding,<task>...")->required()->check(CLI::ExistingFile);
    corr_cmd->add_option("--out", args.out, "Output directory (default: <results>/report)");

    auto* base_cmd = app.add_subcommand("baseline-gen", "Write the random baseline tables");
    add_manifest(base_cmd);
    base_cmd->add_option("--out", args.out, "Output directory");
    add_seed(base_cmd);

    auto* val_cmd = app.add_subcommand("validate", "Check the manifest and print the job plan size");
    add_manifest(val_cmd);

    CLI11_PARSE(app, argc, argv);
    for (auto* sub : {run_cmd, base_cmd})
        if (sub->parsed() && sub->count("--seed"))
            args.seed = seed_value;

    try {
        if (run_cmd->parsed()) return run(args);
        if (sig_cmd->parsed()) return significance(args);
        if (report_cmd->parsed()) return report(args);
        if (corr_cmd->parsed()) return correlate(args, scores);
        if (base_cmd->parsed()) return baseline_gen(args);
        if (val_cmd->parsed()) return validate(args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
