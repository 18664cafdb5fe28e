#pragma once

// Experiment manifest: an INI-style file with [section] headers and
// `key = value` entries. Named sections carry the name after the type:
//
//     [run]                 output, master_seed, jobs, case_policy, folds, weighting
//     [train]               learning_rate, epochs, batch_size, adam_beta1, adam_beta2,
//                           adam_epsilon, patience, min_delta, grid_repeats,
//                           validation_fraction
//     [baseline]            count, distribution
//     [significance]        alpha, alternative, n.<group> = planned N
//     [embedding <name>]    path, grid, provenance
//     [dataset <name>]      modality, path | subjects, stimulus, scale, voxel_count,
//                           voxel_seed, split_features, per_dimension_errors,
//                           group, provenance
//
// Relative paths resolve against the manifest's directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cognitive_data.hpp"
#include "common.hpp"
#include "embedding_store.hpp"
#include "experiment.hpp"
#include "network.hpp"
#include "reporting.hpp"
#include "significance.hpp"

namespace cogeval {

// ---------------------------------------------------------------------------
// INI reader

struct IniEntry {
    std::string value;
    std::size_t line = 0;
};

struct IniSection {
    std::string type;  // "run", "embedding", ...
    std::string name;  // empty for unnamed sections
    std::size_t line = 0;
    std::map<std::string, IniEntry> entries;
};

inline std::vector<IniSection> parse_ini(std::istream& in, const std::string& source)
{
    std::vector<IniSection> sections;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        auto line = trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';')
            continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ParseError(source, line_no, "unterminated section header");
            auto inner = trim(line.substr(1, line.size() - 2));
            if (inner.empty())
                throw ParseError(source, line_no, "empty section header");
            IniSection s;
            s.line = line_no;
            auto space = inner.find_first_of(" \t");
            s.type = to_lower(inner.substr(0, space));
            if (space != std::string_view::npos)
                s.name = std::string(trim(inner.substr(space)));
            sections.push_back(std::move(s));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ParseError(source, line_no, "expected 'key = value' or '[section]'");
        if (sections.empty())
            throw ParseError(source, line_no, "entry before the first section");
        auto key = to_lower(trim(line.substr(0, eq)));
        auto value = std::string(trim(line.substr(eq + 1)));
        if (key.empty())
            throw ParseError(source, line_no, "empty key");
        auto& entries = sections.back().entries;
        if (entries.contains(key))
            throw ParseError(source, line_no, "duplicate key '" + key + "'");
        entries.emplace(std::move(key), IniEntry{std::move(value), line_no});
    }
    return sections;
}

// ---------------------------------------------------------------------------

struct EmbeddingEntry {
    std::string name;
    std::filesystem::path path;
    std::vector<std::size_t> grid;  // hidden-unit candidates
    bool grid_defaulted = false;
    std::string provenance;
};

struct DatasetEntry {
    std::string name;
    Modality modality = Modality::eye_tracking;
    std::string stimulus = "text";
    std::vector<std::filesystem::path> paths;  // one table, or one per subject
    bool average_subjects = false;
    bool scale = true;
    std::optional<std::size_t> voxel_count;
    Seed voxel_seed = 0;
    bool split_features = false;
    bool per_dimension_errors = false;
    std::string group;  // hypothesis group for the Bonferroni correction
    std::string provenance;
};

struct ExperimentManifest {
    std::filesystem::path source;
    std::vector<EmbeddingEntry> embeddings;
    std::vector<DatasetEntry> datasets;
    TrainConfig train;
    std::size_t grid_repeats = 3;
    double validation_fraction = 0.2;
    std::size_t folds = 5;
    CasePolicy case_policy = CasePolicy::lowercase;
    Weighting weighting = Weighting::unweighted;
    std::size_t baseline_count = 5;
    BaselineDistribution baseline_distribution = BaselineDistribution::uniform;
    double alpha = 0.01;
    Alternative alternative = Alternative::less;
    std::map<std::string, std::size_t> planned_hypotheses;
    Seed master_seed = 42;
    std::filesystem::path output;
    std::size_t parallelism = 1;

    const EmbeddingEntry& embedding(std::string_view name) const
    {
        for (const auto& e : embeddings)
            if (e.name == name)
                return e;
        throw Error("manifest has no embedding '" + std::string(name) + "'");
    }
};

/// Hidden-layer candidates when the manifest gives none: [d/2, d/6] rounded
/// (300 -> [150, 50]), deduplicated, at least 1.
inline std::vector<std::size_t> default_grid(std::size_t dimension)
{
    std::vector<std::size_t> out;
    for (double div : {2.0, 6.0}) {
        auto v = static_cast<std::size_t>(std::llround(static_cast<double>(dimension) / div));
        v = std::max<std::size_t>(v, 1);
        if (std::find(out.begin(), out.end(), v) == out.end())
            out.push_back(v);
    }
    return out;
}

/// Reads the leading `V k` header or the first data line of a vector file.
inline std::size_t peek_vector_dimension(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open vector file " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.starts_with("#!"))
            continue;
        auto tokens = split_whitespace(line);
        if (tokens.empty())
            continue;
        if (tokens.size() == 2 && parse_integer<std::size_t>(tokens[0]) &&
            parse_integer<std::size_t>(tokens[1]))
            return *parse_integer<std::size_t>(tokens[1]);
        return tokens.size() - 1;
    }
    throw Error("vector file " + path.string() + " is empty");
}

namespace detail {

class SectionReader {
public:
    SectionReader(const IniSection& s, const std::string& source) : s_(s), source_(source) {}

    std::optional<std::string> get(const std::string& key)
    {
        used_.insert(key);
        auto it = s_.entries.find(key);
        if (it == s_.entries.end())
            return std::nullopt;
        return it->second.value;
    }

    std::string require(const std::string& key)
    {
        auto v = get(key);
        if (!v)
            throw ParseError(source_, s_.line,
                             "missing required key '" + key + "' in section [" + title() + "]");
        return *v;
    }

    template <typename Int>
    std::optional<Int> get_int(const std::string& key)
    {
        auto v = get(key);
        if (!v)
            return std::nullopt;
        auto parsed = parse_integer<Int>(*v);
        if (!parsed)
            fail(key, "expected an integer");
        return parsed;
    }

    std::optional<double> get_double(const std::string& key)
    {
        auto v = get(key);
        if (!v)
            return std::nullopt;
        auto parsed = parse_finite_double(*v);
        if (!parsed)
            fail(key, "expected a number");
        return parsed;
    }

    std::optional<bool> get_bool(const std::string& key)
    {
        auto v = get(key);
        if (!v)
            return std::nullopt;
        const auto s = to_lower(*v);
        if (s == "true" || s == "yes" || s == "1" || s == "on")
            return true;
        if (s == "false" || s == "no" || s == "0" || s == "off")
            return false;
        fail(key, "expected true or false");
    }

    std::vector<std::string> get_list(const std::string& key)
    {
        std::vector<std::string> out;
        auto v = get(key);
        if (!v)
            return out;
        std::string_view rest = *v;
        while (!rest.empty()) {
            auto comma = rest.find(',');
            auto item = trim(rest.substr(0, comma));
            if (!item.empty())
                out.emplace_back(item);
            if (comma == std::string_view::npos)
                break;
            rest.remove_prefix(comma + 1);
        }
        return out;
    }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const
    {
        auto it = s_.entries.find(key);
        throw ParseError(source_, it != s_.entries.end() ? it->second.line : s_.line,
                         "[" + title() + "] " + key + ": " + what);
    }

    /// Keys present but never read.
    void warn_unknown() const
    {
        for (const auto& [k, e] : s_.entries)
            if (!used_.contains(k) && !k.starts_with("n."))
                warn(source_ + ":" + std::to_string(e.line) + ": unknown key '" + k +
                     "' in section [" + title() + "]");
    }

    std::string title() const { return s_.name.empty() ? s_.type : s_.type + " " + s_.name; }

private:
    const IniSection& s_;
    const std::string& source_;
    std::set<std::string> used_;
};

}  // namespace detail

struct ManifestOverrides {
    std::optional<std::filesystem::path> output;
    std::optional<std::size_t> parallelism;
    std::optional<Seed> master_seed;
};

inline const char* output_root_env = "COGEVAL_OUTPUT_ROOT";

/// Parses and validates. Unknown keys warn; missing paths are all reported
/// in one error.
inline ExperimentManifest parse_manifest(std::istream& in, const std::filesystem::path& source,
                                         const ManifestOverrides& overrides = {})
{
    namespace fs = std::filesystem;
    const std::string src = source.string();
    const auto sections = parse_ini(in, src);
    const fs::path base = source.has_parent_path() ? source.parent_path() : fs::path(".");
    const auto resolve = [&](const std::string& p) {
        fs::path path(p);
        return path.is_absolute() ? path : base / path;
    };

    ExperimentManifest m;
    m.source = source;
    std::set<std::string> seen_singletons;
    std::set<std::string> embedding_names, dataset_names;
    std::optional<std::string> output;

    for (const auto& s : sections) {
        detail::SectionReader r(s, src);
        const bool named = s.type == "embedding" || s.type == "dataset";
        if (named && s.name.empty())
            throw ParseError(src, s.line, "[" + s.type + "] section needs a name");
        if (!named) {
            if (!s.name.empty())
                throw ParseError(src, s.line, "[" + s.type + "] section takes no name");
            if (!seen_singletons.insert(s.type).second)
                throw ParseError(src, s.line, "duplicate section [" + s.type + "]");
        }

        if (s.type == "run") {
            output = r.get("output");
            if (auto v = r.get_int<Seed>("master_seed")) m.master_seed = *v;
            if (auto v = r.get_int<std::size_t>("jobs")) m.parallelism = *v;
            if (auto v = r.get("case_policy")) m.case_policy = parse_case_policy(*v);
            if (auto v = r.get_int<std::size_t>("folds")) m.folds = *v;
            if (auto v = r.get("weighting")) {
                const auto w = to_lower(*v);
                if (w == "unweighted") m.weighting = Weighting::unweighted;
                else if (w == "word_count") m.weighting = Weighting::word_count;
                else r.fail("weighting", "expected unweighted or word_count");
            }
        } else if (s.type == "train") {
            if (auto v = r.get_double("learning_rate")) m.train.learning_rate = *v;
            if (auto v = r.get_int<std::size_t>("epochs")) m.train.epochs = *v;
            if (auto v = r.get_int<std::size_t>("batch_size")) m.train.batch_size = *v;
            if (auto v = r.get_double("adam_beta1")) m.train.adam_beta1 = *v;
            if (auto v = r.get_double("adam_beta2")) m.train.adam_beta2 = *v;
            if (auto v = r.get_double("adam_epsilon")) m.train.adam_epsilon = *v;
            if (auto v = r.get_int<std::size_t>("patience")) m.train.patience = *v;
            if (auto v = r.get_double("min_delta")) m.train.min_delta = *v;
            if (auto v = r.get_int<std::size_t>("grid_repeats")) m.grid_repeats = *v;
            if (auto v = r.get_double("validation_fraction")) m.validation_fraction = *v;
        } else if (s.type == "baseline") {
            if (auto v = r.get_int<std::size_t>("count")) m.baseline_count = *v;
            if (auto v = r.get("distribution")) {
                const auto d = to_lower(*v);
                if (d == "uniform") m.baseline_distribution = BaselineDistribution::uniform;
                else if (d == "normal") m.baseline_distribution = BaselineDistribution::normal;
                else r.fail("distribution", "expected uniform or normal");
            }
        } else if (s.type == "significance") {
            if (auto v = r.get_double("alpha")) m.alpha = *v;
            if (auto v = r.get("alternative")) m.alternative = parse_alternative(*v);
            for (const auto& [k, e] : s.entries) {
                if (!k.starts_with("n."))
                    continue;
                auto n = parse_integer<std::size_t>(e.value);
                if (!n || *n == 0)
                    throw ParseError(src, e.line, "[significance] " + k + ": expected a positive integer");
                m.planned_hypotheses[k.substr(2)] = *n;
            }
        } else if (s.type == "embedding") {
            if (!embedding_names.insert(s.name).second)
                throw ParseError(src, s.line, "duplicate embedding name '" + s.name + "'");
            EmbeddingEntry e;
            e.name = s.name;
            e.path = resolve(r.require("path"));
            for (const auto& g : r.get_list("grid")) {
                auto v = parse_integer<std::size_t>(g);
                if (!v || *v == 0)
                    r.fail("grid", "hidden sizes must be positive integers");
                e.grid.push_back(*v);
            }
            if (r.get("grid") && e.grid.empty())
                r.fail("grid", "candidate list is empty");
            e.provenance = r.get("provenance").value_or("");
            m.embeddings.push_back(std::move(e));
        } else if (s.type == "dataset") {
            if (!dataset_names.insert(s.name).second)
                throw ParseError(src, s.line, "duplicate dataset name '" + s.name + "'");
            DatasetEntry d;
            d.name = s.name;
            d.modality = parse_modality(r.require("modality"));
            d.stimulus = r.get("stimulus").value_or("text");
            const auto path = r.get("path");
            const auto subjects = r.get_list("subjects");
            if (path && !subjects.empty())
                throw ParseError(src, s.line, "[dataset " + s.name + "]: give either path or subjects");
            if (path)
                d.paths.push_back(resolve(*path));
            for (const auto& p : subjects)
                d.paths.push_back(resolve(p));
            if (d.paths.empty())
                throw ParseError(src, s.line,
                                 "missing required key 'path' (or 'subjects') in section [dataset " +
                                     s.name + "]");
            d.average_subjects = !subjects.empty();
            d.scale = r.get_bool("scale").value_or(true);
            if (auto v = r.get_int<std::size_t>("voxel_count")) {
                if (*v == 0)
                    r.fail("voxel_count", "must be positive");
                d.voxel_count = *v;
            }
            d.voxel_seed = r.get_int<Seed>("voxel_seed").value_or(derive_seed(0, "voxels", s.name));
            d.split_features = r.get_bool("split_features").value_or(d.modality == Modality::eye_tracking);
            d.per_dimension_errors = r.get_bool("per_dimension_errors").value_or(false);
            d.group = r.get("group").value_or(std::string(to_string(d.modality)));
            d.provenance = r.get("provenance").value_or("");
            m.datasets.push_back(std::move(d));
        } else {
            warn(src + ":" + std::to_string(s.line) + ": unknown section [" + s.type + "]");
            continue;
        }
        r.warn_unknown();
    }

    if (overrides.master_seed)
        m.master_seed = *overrides.master_seed;
    if (overrides.parallelism)
        m.parallelism = *overrides.parallelism;
    if (overrides.output)
        m.output = *overrides.output;
    else if (output)
        m.output = resolve(*output);
    else if (const char* root = std::getenv(output_root_env); root && *root)
        m.output = fs::path(root) / source.stem();
    else
        m.output = fs::path("cogeval-out") / source.stem();

    if (m.embeddings.empty())
        throw ParseError(src, 0, "manifest declares no [embedding ...] sections");
    if (m.datasets.empty())
        throw ParseError(src, 0, "manifest declares no [dataset ...] sections");
    if (m.parallelism == 0)
        throw ParseError(src, 0, "jobs must be >= 1");
    if (m.folds < 2)
        throw ParseError(src, 0, "folds must be >= 2");
    if (!(m.validation_fraction > 0.0 && m.validation_fraction < 1.0))
        throw ParseError(src, 0, "validation_fraction must lie in (0, 1)");
    m.train.validate();
    bonferroni_threshold(m.alpha, 1);

    std::vector<std::string> missing;
    for (const auto& e : m.embeddings)
        if (!fs::exists(e.path))
            missing.push_back("embedding '" + e.name + "': " + e.path.string());
    for (const auto& d : m.datasets)
        for (const auto& p : d.paths)
            if (!fs::exists(p))
                missing.push_back("dataset '" + d.name + "': " + p.string());
    if (!missing.empty())
        throw Error(src + ": missing files:\n  " + join(missing, "\n  "));

    for (auto& e : m.embeddings)
        if (e.grid.empty()) {
            e.grid = default_grid(peek_vector_dimension(e.path));
            e.grid_defaulted = true;
        }
    return m;
}

inline ExperimentManifest parse_manifest(const std::filesystem::path& path,
                                         const ManifestOverrides& overrides = {})
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open manifest " + path.string());
    return parse_manifest(in, path, overrides);
}

// ---------------------------------------------------------------------------
// Job plan

struct Job {
    std::string id;          // content hash, hex
    std::string table_name;  // embedding name or "<embedding>#random<i>"
    TableKind kind = TableKind::pretrained;
    std::size_t embedding_index = 0;
    std::size_t baseline_index = 0;
    std::size_t dataset_index = 0;
    std::optional<std::string> feature;  // nullopt: whole target vector
    Seed seed = 0;

    std::string feature_label() const
    {
        return feature ? *feature : std::string(whole_vector_label);
    }
};

struct JobPlan {
    std::vector<Job> jobs;
};

inline std::string to_hex(std::uint64_t v)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4)
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

/// Everything besides names that changes a job's result.
inline std::uint64_t config_digest(const ExperimentManifest& m)
{
    const auto& t = m.train;
    return derive_seed(m.master_seed, format_double(t.learning_rate), t.epochs, t.batch_size,
                       format_double(t.adam_beta1), format_double(t.adam_beta2),
                       format_double(t.adam_epsilon), t.patience, format_double(t.min_delta),
                       m.grid_repeats, format_double(m.validation_fraction), m.folds,
                       to_string(m.case_policy), m.baseline_count,
                       static_cast<int>(m.baseline_distribution));
}

inline Seed baseline_seed_for_dimension(Seed master_seed, std::size_t dimension)
{
    return derive_seed(master_seed, "baseline", dimension);
}

/// Every (dataset, feature, embedding) combination, each followed by its
/// baseline runs. Feature labels come from the loaded datasets.
inline JobPlan make_job_plan(const ExperimentManifest& m,
                             const std::vector<std::vector<std::string>>& feature_labels)
{
    if (feature_labels.size() != m.datasets.size())
        throw Error("make_job_plan: feature labels missing for some datasets");
    JobPlan plan;
    const auto digest = config_digest(m);
    for (std::size_t d = 0; d < m.datasets.size(); ++d) {
        const auto& ds = m.datasets[d];
        std::vector<std::optional<std::string>> features;
        if (ds.split_features)
            for (const auto& l : feature_labels[d])
                features.emplace_back(l);
        else
            features.emplace_back(std::nullopt);

        for (const auto& feature : features) {
            for (std::size_t e = 0; e < m.embeddings.size(); ++e) {
                const auto& emb = m.embeddings[e];
                const auto add = [&](TableKind kind, std::size_t b, std::string table) {
                    Job j;
                    j.table_name = std::move(table);
                    j.kind = kind;
                    j.embedding_index = e;
                    j.baseline_index = b;
                    j.dataset_index = d;
                    j.feature = feature;
                    const auto label = j.feature_label();
                    j.seed = derive_seed(m.master_seed, j.table_name, ds.name, label);
                    std::string grid;
                    for (auto g : emb.grid)
                        grid += std::to_string(g) + ",";
                    j.id = to_hex(derive_seed(digest, "job", j.table_name, emb.path.string(), ds.name,
                                              label, grid,
                                              ds.voxel_count ? *ds.voxel_count : 0, ds.voxel_seed,
                                              ds.scale, ds.per_dimension_errors));
                    plan.jobs.push_back(std::move(j));
                };
                add(TableKind::pretrained, 0, emb.name);
                for (std::size_t b = 0; b < m.baseline_count; ++b)
                    add(TableKind::baseline, b, baseline_table_name(emb.name, b));
            }
        }
    }
    return plan;
}

}  // namespace cogeval
