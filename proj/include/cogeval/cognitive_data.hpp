#pragma once

// Word-level cognitive datasets and their preprocessing: CSV loading with
// word-type aggregation, subject averaging, per-feature min-max scaling,
// random output-dimension (voxel) sampling, and the join against a
// word-vector table that produces supervision pairs.

#include <Eigen/Dense>

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "common.hpp"
#include "embedding_store.hpp"
#include "rng.hpp"

namespace cogeval {

enum class Modality { eye_tracking, eeg, fmri };

inline constexpr std::array all_modalities{Modality::eye_tracking, Modality::eeg, Modality::fmri};

inline std::string_view to_string(Modality m)
{
    switch (m) {
    case Modality::eye_tracking: return "eye_tracking";
    case Modality::eeg: return "eeg";
    case Modality::fmri: return "fmri";
    }
    return "?";
}

inline Modality parse_modality(std::string_view s)
{
    const std::string v = to_lower(trim(s));
    if (v == "eye_tracking" || v == "eye-tracking" || v == "eyetracking" || v == "gaze")
        return Modality::eye_tracking;
    if (v == "eeg")
        return Modality::eeg;
    if (v == "fmri")
        return Modality::fmri;
    throw Error("unknown modality '" + std::string(s) + "' (expected eye_tracking, eeg or fmri)");
}

using TargetMap = std::map<std::string, std::vector<double>>;

struct CognitiveDataset {
    std::string name;
    Modality modality = Modality::eye_tracking;
    std::string stimulus = "text";
    std::vector<std::string> feature_labels;
    TargetMap targets;
    std::size_t subject_count = 0;
    std::string provenance;

    std::size_t dimension() const noexcept { return feature_labels.size(); }
    std::size_t size() const noexcept { return targets.size(); }

    std::set<std::string> vocabulary() const
    {
        std::set<std::string> v;
        for (const auto& [w, _] : targets)
            v.insert(w);
        return v;
    }

    void validate() const
    {
        if (feature_labels.empty())
            throw Error("dataset '" + name + "': no feature labels");
        for (const auto& [w, t] : targets) {
            if (t.size() != feature_labels.size())
                throw Error("dataset '" + name + "': word '" + w + "' has " +
                            std::to_string(t.size()) + " values, expected " +
                            std::to_string(feature_labels.size()));
            for (double v : t)
                if (!std::isfinite(v))
                    throw Error("dataset '" + name + "': non-finite value for '" + w + "'");
        }
    }

    friend bool operator==(const CognitiveDataset&, const CognitiveDataset&) = default;
};

struct SubjectTable {
    std::string subject_id;
    std::vector<std::string> feature_labels;
    TargetMap targets;
};

// ---------------------------------------------------------------------------
// CSV

/// Splits one CSV record. Double-quoted fields may contain commas; "" is a
/// literal quote.
inline std::vector<std::string> split_csv_record(std::string_view line)
{
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::string(trim(cur)));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::string(trim(cur)));
    return fields;
}

struct FeatureTable {
    std::vector<std::string> feature_labels;
    TargetMap targets;
};

/// Reads `word,label1,...,labelm`; repeated words are averaged component-wise.
inline FeatureTable read_feature_csv(std::istream& in, const std::string& source)
{
    std::string line;
    std::size_t line_no = 0;
    FeatureTable table;
    bool have_header = false;
    std::map<std::string, std::pair<std::vector<double>, std::size_t>> sums;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (trim(line).empty())
            continue;
        auto fields = split_csv_record(line);
        if (!have_header) {
            if (fields.size() < 2 || std::any_of(fields.begin() + 1, fields.end(),
                                                 [](const auto& f) { return f.empty(); }))
                throw ParseError(source, line_no,
                                 "header must be word,label1,...,labelm with non-empty labels");
            table.feature_labels.assign(fields.begin() + 1, fields.end());
            have_header = true;
            continue;
        }
        const std::size_t m = table.feature_labels.size();
        if (fields.size() != m + 1)
            throw ParseError(source, line_no,
                             "ragged row: expected " + std::to_string(m) + " values, got " +
                                 std::to_string(fields.size() - 1));
        if (fields[0].empty())
            throw ParseError(source, line_no, "empty word");
        auto& [sum, count] = sums[fields[0]];
        if (sum.empty())
            sum.assign(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            auto v = parse_finite_double(fields[j + 1]);
            if (!v)
                throw ParseError(source, line_no,
                                 "non-numeric value '" + fields[j + 1] + "' in column '" +
                                     table.feature_labels[j] + "'");
            sum[j] += *v;
        }
        ++count;
    }
    if (!have_header)
        throw ParseError(source, 0, "empty file: missing header");
    for (auto& [word, entry] : sums) {
        auto& [sum, count] = entry;
        for (auto& v : sum)
            v /= static_cast<double>(count);
        table.targets.emplace(word, std::move(sum));
    }
    return table;
}

inline FeatureTable read_feature_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open feature table " + path.string());
    return read_feature_csv(in, path.string());
}

inline CognitiveDataset load_feature_table(const std::filesystem::path& path, Modality modality,
                                           std::string name = {})
{
    auto table = read_feature_csv(path);
    CognitiveDataset ds;
    ds.name = name.empty() ? path.stem().string() : std::move(name);
    ds.modality = modality;
    ds.feature_labels = std::move(table.feature_labels);
    ds.targets = std::move(table.targets);
    ds.subject_count = 1;
    return ds;
}

inline SubjectTable load_subject_table(const std::filesystem::path& path,
                                       std::string subject_id = {})
{
    auto table = read_feature_csv(path);
    return SubjectTable{subject_id.empty() ? path.stem().string() : std::move(subject_id),
                        std::move(table.feature_labels), std::move(table.targets)};
}

inline void write_feature_csv(std::ostream& out, const std::vector<std::string>& labels,
                              const TargetMap& targets)
{
    out << "word";
    for (const auto& l : labels)
        out << ',' << l;
    out << '\n';
    for (const auto& [w, t] : targets) {
        out << w;
        for (double v : t)
            out << ',' << format_double(v);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Preprocessing

/// Component-wise mean over the subjects in which each word appears.
inline CognitiveDataset average_over_subjects(std::span<const SubjectTable> subjects,
                                              std::string name, Modality modality)
{
    if (subjects.empty())
        throw Error("average_over_subjects: no subject tables");
    const auto& labels = subjects.front().feature_labels;
    for (const auto& s : subjects)
        if (s.feature_labels != labels)
            throw Error("average_over_subjects: subject '" + s.subject_id +
                        "' has feature labels [" + join(s.feature_labels, ",") +
                        "], expected [" + join(labels, ",") + "]");

    // Values are collected and summed in sorted order so the result does not
    // depend on subject order, down to the last bit.
    std::map<std::string, std::vector<std::vector<double>>> columns;
    for (const auto& s : subjects) {
        for (const auto& [w, t] : s.targets) {
            if (t.size() != labels.size())
                throw Error("subject '" + s.subject_id + "': word '" + w + "' has wrong length");
            auto& cols = columns[w];
            if (cols.empty())
                cols.resize(labels.size());
            for (std::size_t j = 0; j < t.size(); ++j)
                cols[j].push_back(t[j]);
        }
    }

    CognitiveDataset ds;
    ds.name = std::move(name);
    ds.modality = modality;
    ds.feature_labels = labels;
    ds.subject_count = subjects.size();
    for (auto& [w, cols] : columns) {
        std::vector<double> mean(cols.size());
        for (std::size_t j = 0; j < cols.size(); ++j) {
            std::sort(cols[j].begin(), cols[j].end());
            mean[j] = std::accumulate(cols[j].begin(), cols[j].end(), 0.0) /
                      static_cast<double>(cols[j].size());
        }
        ds.targets.emplace(w, std::move(mean));
    }
    return ds;
}

/// Maps each feature column to [0, 1]. Constant columns become 0.
inline CognitiveDataset min_max_scale(CognitiveDataset ds)
{
    if (ds.targets.empty())
        throw Error("min_max_scale: dataset '" + ds.name + "' is empty");
    const std::size_t m = ds.dimension();
    std::vector<double> lo(m, std::numeric_limits<double>::infinity());
    std::vector<double> hi(m, -std::numeric_limits<double>::infinity());
    for (const auto& [_, t] : ds.targets)
        for (std::size_t j = 0; j < m; ++j) {
            lo[j] = std::min(lo[j], t[j]);
            hi[j] = std::max(hi[j], t[j]);
        }
    for (std::size_t j = 0; j < m; ++j)
        if (!(hi[j] > lo[j]))
            warn("dataset '" + ds.name + "': feature '" + ds.feature_labels[j] +
                 "' is constant, scaled to 0");
    for (auto& [_, t] : ds.targets)
        for (std::size_t j = 0; j < m; ++j)
            t[j] = hi[j] > lo[j] ? (t[j] - lo[j]) / (hi[j] - lo[j]) : 0.0;
    return ds;
}

/// Indices of `count` columns out of `m`, uniform without replacement, ascending.
inline std::vector<std::size_t> sample_columns(std::size_t m, std::size_t count, Seed seed)
{
    if (count == 0 || count > m)
        throw Error("cannot select " + std::to_string(count) + " output dimensions from " +
                    std::to_string(m));
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(derive_seed(seed, "select-output-dimensions"));
    // partial Fisher-Yates: the first `count` slots are the sample
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(m - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline CognitiveDataset select_output_dimensions(const CognitiveDataset& ds, std::size_t count,
                                                 Seed seed)
{
    if (count > ds.dimension())
        throw Error("dataset '" + ds.name + "': requested " + std::to_string(count) +
                    " output dimensions but only " + std::to_string(ds.dimension()) +
                    " are available");
    const auto cols = sample_columns(ds.dimension(), count, seed);
    CognitiveDataset out;
    out.name = ds.name;
    out.modality = ds.modality;
    out.stimulus = ds.stimulus;
    out.subject_count = ds.subject_count;
    out.provenance = ds.provenance;
    for (auto c : cols)
        out.feature_labels.push_back(ds.feature_labels[c]);
    for (const auto& [w, t] : ds.targets) {
        std::vector<double> v;
        v.reserve(count);
        for (auto c : cols)
            v.push_back(t[c]);
        out.targets.emplace(w, std::move(v));
    }
    return out;
}

/// Single-feature view, used to split eye-tracking datasets into one
/// hypothesis per feature.
inline CognitiveDataset single_feature(const CognitiveDataset& ds, std::string_view label)
{
    auto it = std::find(ds.feature_labels.begin(), ds.feature_labels.end(), label);
    if (it == ds.feature_labels.end())
        throw Error("dataset '" + ds.name + "' has no feature '" + std::string(label) + "'");
    const auto j = static_cast<std::size_t>(it - ds.feature_labels.begin());
    CognitiveDataset out;
    out.name = ds.name;
    out.modality = ds.modality;
    out.stimulus = ds.stimulus;
    out.subject_count = ds.subject_count;
    out.provenance = ds.provenance;
    out.feature_labels = {std::string(label)};
    for (const auto& [w, t] : ds.targets)
        out.targets.emplace(w, std::vector<double>{t[j]});
    return out;
}

// ---------------------------------------------------------------------------
// Join

enum class CasePolicy { lowercase, exact };

inline CasePolicy parse_case_policy(std::string_view s)
{
    const auto v = to_lower(trim(s));
    if (v == "lowercase" || v == "lower")
        return CasePolicy::lowercase;
    if (v == "exact")
        return CasePolicy::exact;
    throw Error("unknown case policy '" + std::string(s) + "'");
}

inline std::string_view to_string(CasePolicy p)
{
    return p == CasePolicy::lowercase ? "lowercase" : "exact";
}

/// Normalized key -> original word. When several originals fold to the same
/// key, the one already equal to the key wins, else the smallest.
template <typename Range>
std::map<std::string, std::string> normalize_keys(const Range& words, CasePolicy policy)
{
    std::map<std::string, std::string> out;
    for (const std::string& w : words) {
        std::string key = policy == CasePolicy::lowercase ? to_lower(w) : w;
        auto [it, inserted] = out.try_emplace(key, w);
        if (!inserted) {
            const bool incumbent_exact = it->second == it->first;
            if (w == it->first || (!incumbent_exact && w < it->second))
                it->second = w;
        }
    }
    return out;
}

inline std::set<std::string> normalized_vocabulary(const CognitiveDataset& ds, CasePolicy policy)
{
    std::set<std::string> v;
    for (const auto& [w, _] : ds.targets)
        v.insert(policy == CasePolicy::lowercase ? to_lower(w) : w);
    return v;
}

struct SupervisionSet {
    Eigen::MatrixXd inputs;   // N x k
    Eigen::MatrixXd targets;  // N x m
    std::vector<std::string> words;

    std::size_t rows() const noexcept { return words.size(); }
};

/// Rows in lexicographic order of the normalized word.
inline SupervisionSet build_supervision_pairs(const WordVectorTable& table,
                                              const CognitiveDataset& ds,
                                              CasePolicy policy = CasePolicy::lowercase)
{
    std::vector<std::string> dataset_words;
    dataset_words.reserve(ds.targets.size());
    for (const auto& [w, _] : ds.targets)
        dataset_words.push_back(w);
    const auto dkeys = normalize_keys(dataset_words, policy);
    const auto tkeys = normalize_keys(table.words(), policy);

    SupervisionSet set;
    std::vector<std::pair<const std::string*, const std::string*>> rows;
    for (const auto& [key, original] : dkeys) {
        auto it = tkeys.find(key);
        if (it == tkeys.end())
            continue;
        set.words.push_back(key);
        rows.emplace_back(&it->second, &original);
    }
    if (rows.empty())
        throw Error("no shared words between embedding '" + table.name() + "' and dataset '" +
                    ds.name + "'");

    const auto n = static_cast<Eigen::Index>(rows.size());
    set.inputs.resize(n, static_cast<Eigen::Index>(table.dimension()));
    set.targets.resize(n, static_cast<Eigen::Index>(ds.dimension()));
    for (Eigen::Index i = 0; i < n; ++i) {
        auto x = table.at(*rows[static_cast<std::size_t>(i)].first);
        const auto& t = ds.targets.at(*rows[static_cast<std::size_t>(i)].second);
        for (std::size_t j = 0; j < x.size(); ++j)
            set.inputs(i, static_cast<Eigen::Index>(j)) = x[j];
        for (std::size_t j = 0; j < t.size(); ++j)
            set.targets(i, static_cast<Eigen::Index>(j)) = t[j];
    }
    return set;
}

}  // namespace cogeval
