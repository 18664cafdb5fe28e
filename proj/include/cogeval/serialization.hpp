#pragma once

// JSON records for experiment results and the per-word error CSV.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cognitive_data.hpp"
#include "common.hpp"
#include "embedding_store.hpp"
#include "experiment.hpp"
#include "network.hpp"

namespace cogeval {

using nlohmann::json;

inline TableKind parse_table_kind(std::string_view s)
{
    if (s == "pretrained")
        return TableKind::pretrained;
    if (s == "baseline")
        return TableKind::baseline;
    throw Error("unknown table kind '" + std::string(s) + "'");
}

inline json as_json(const TrainConfig& c)
{
    return json{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
                {"batch_size", c.batch_size},       {"adam_beta1", c.adam_beta1},
                {"adam_beta2", c.adam_beta2},       {"adam_epsilon", c.adam_epsilon},
                {"seed", c.seed},                   {"patience", c.patience},
                {"min_delta", c.min_delta}};
}

inline TrainConfig train_config_from_json(const json& j)
{
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.adam_beta1 = j.at("adam_beta1").get<double>();
    c.adam_beta2 = j.at("adam_beta2").get<double>();
    c.adam_epsilon = j.at("adam_epsilon").get<double>();
    c.seed = j.at("seed").get<Seed>();
    c.patience = j.value("patience", std::size_t{0});
    c.min_delta = j.value("min_delta", 0.0);
    return c;
}

inline json as_json(const FoldOutcome& f)
{
    json words = json::object();
    for (const auto& [w, e] : f.per_word_errors)
        words[w] = e;
    return json{{"fold_index", f.fold_index},
                {"fold_mse", f.fold_mse},
                {"chosen_hidden_units", f.chosen_hidden_units},
                {"validation_scores", f.validation_scores},
                {"per_word_errors", std::move(words)}};
}

inline FoldOutcome fold_from_json(const json& j)
{
    FoldOutcome f;
    f.fold_index = j.at("fold_index").get<std::size_t>();
    f.fold_mse = j.at("fold_mse").get<double>();
    f.chosen_hidden_units = j.at("chosen_hidden_units").get<std::size_t>();
    // +inf scores are written as null by the JSON library
    for (const auto& s : j.at("validation_scores"))
        f.validation_scores.push_back(s.is_null() ? std::numeric_limits<double>::infinity()
                                                  : s.get<double>());
    for (const auto& [w, e] : j.at("per_word_errors").items())
        f.per_word_errors.emplace(w, e.get<double>());
    return f;
}

inline json as_json(const ExperimentResult& r, const json& config_echo = json::object())
{
    json folds = json::array();
    for (const auto& f : r.folds)
        folds.push_back(as_json(f));
    json j{{"job_id", r.job_id},
           {"embedding", r.embedding_name},
           {"dataset", r.dataset_name},
           {"feature", r.feature_label},
           {"modality", to_string(r.modality)},
           {"kind", to_string(r.table_kind)},
           {"reference_embedding", r.reference_embedding},
           {"baseline_index", r.baseline_index},
           {"candidates", r.candidates},
           {"overall_mse", r.overall_mse},
           {"folds", std::move(folds)},
           {"config", config_echo}};
    if (!r.per_dimension_errors.empty()) {
        j["dimension_labels"] = r.dimension_labels;
        j["per_dimension_errors"] = r.per_dimension_errors;
    }
    return j;
}

inline ExperimentResult experiment_from_json(const json& j)
{
    ExperimentResult r;
    r.job_id = j.value("job_id", std::string{});
    r.embedding_name = j.at("embedding").get<std::string>();
    r.dataset_name = j.at("dataset").get<std::string>();
    r.feature_label = j.at("feature").get<std::string>();
    r.modality = parse_modality(j.at("modality").get<std::string>());
    r.table_kind = parse_table_kind(j.at("kind").get<std::string>());
    r.reference_embedding = j.value("reference_embedding", std::string{});
    r.baseline_index = j.value("baseline_index", std::size_t{0});
    r.candidates = j.at("candidates").get<std::vector<std::size_t>>();
    r.overall_mse = j.at("overall_mse").get<double>();
    for (const auto& f : j.at("folds"))
        r.folds.push_back(fold_from_json(f));
    if (j.contains("per_dimension_errors")) {
        r.dimension_labels = j.at("dimension_labels").get<std::vector<std::string>>();
        r.per_dimension_errors = j.at("per_dimension_errors").get<std::vector<double>>();
    }
    return r;
}

/// One JSON record per line.
inline std::vector<ExperimentResult> read_result_records(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open result records " + path.string());
    std::vector<ExperimentResult> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty())
            continue;
        try {
            out.push_back(experiment_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(path.string(), line_no, e.what());
        }
    }
    return out;
}

inline void write_word_errors_csv(std::ostream& out, const std::map<std::string, double>& errors)
{
    out << "word,error\n";
    for (const auto& [w, e] : errors) {
        if (w.find_first_of(",\"") != std::string::npos) {
            std::string q;
            for (char c : w)
                q += c == '"' ? std::string("\"\"") : std::string(1, c);
            out << '"' << q << '"';
        } else {
            out << w;
        }
        out << ',' << format_double(e) << '\n';
    }
}

inline std::map<std::string, double> read_word_errors_csv(std::istream& in,
                                                          const std::string& source)
{
    auto table = read_feature_csv(in, source);
    if (table.feature_labels.size() != 1)
        throw ParseError(source, 1, "expected header word,error");
    std::map<std::string, double> out;
    for (auto& [w, v] : table.targets)
        out.emplace(w, v.front());
    return out;
}

}  // namespace cogeval
