#pragma once

// Word-vector tables: text-format parsing and writing, random baselines,
// vocabulary coverage.
//
// File format, one entry per line:
//
//     #! provenance: free text            (optional, only before any data)
//     V k                                 (optional header: two integers)
//     word v1 v2 ... vk
//
// Tables are immutable once built and may be shared across threads.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "common.hpp"
#include "rng.hpp"

namespace cogeval {

enum class TableKind { pretrained, baseline };

inline std::string_view to_string(TableKind k)
{
    return k == TableKind::pretrained ? "pretrained" : "baseline";
}

class WordVectorTable {
public:
    WordVectorTable(std::string name, std::size_t dimension,
                    TableKind kind = TableKind::pretrained)
        : name_(std::move(name)), dimension_(dimension), kind_(kind)
    {
        if (dimension_ == 0)
            throw Error("word vector table '" + name_ + "': dimension must be >= 1");
    }

    const std::string& name() const noexcept { return name_; }
    std::size_t dimension() const noexcept { return dimension_; }
    TableKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return words_.size(); }
    bool empty() const noexcept { return words_.empty(); }

    const std::string& provenance() const noexcept { return provenance_; }
    void set_provenance(std::string p) { provenance_ = std::move(p); }

    /// Words in insertion order.
    const std::vector<std::string>& words() const noexcept { return words_; }

    bool contains(std::string_view word) const { return index_.contains(std::string(word)); }

    std::span<const double> at(std::string_view word) const
    {
        auto it = index_.find(std::string(word));
        if (it == index_.end())
            throw Error("word '" + std::string(word) + "' not in table '" + name_ + "'");
        return row(it->second);
    }

    std::span<const double> row(std::size_t i) const
    {
        return {data_.data() + i * dimension_, dimension_};
    }

    /// Adds or replaces a vector. Returns true when an existing entry was replaced.
    bool insert(std::string word, std::span<const double> values)
    {
        if (values.size() != dimension_)
            throw Error("word '" + word + "': expected " + std::to_string(dimension_) +
                        " components, got " + std::to_string(values.size()));
        if (word.empty() || std::any_of(word.begin(), word.end(), [](unsigned char c) {
                return std::isspace(c) != 0;
            }))
            throw Error("invalid word '" + word + "': empty or contains whitespace");
        for (double v : values)
            if (!std::isfinite(v))
                throw Error("word '" + word + "': non-finite component");

        if (auto it = index_.find(word); it != index_.end()) {
            std::copy(values.begin(), values.end(), data_.begin() + it->second * dimension_);
            return true;
        }
        index_.emplace(word, words_.size());
        words_.push_back(std::move(word));
        data_.insert(data_.end(), values.begin(), values.end());
        return false;
    }

    friend bool operator==(const WordVectorTable& a, const WordVectorTable& b)
    {
        if (a.name_ != b.name_ || a.dimension_ != b.dimension_ || a.kind_ != b.kind_ ||
            a.provenance_ != b.provenance_ || a.size() != b.size())
            return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            auto it = b.index_.find(a.words_[i]);
            if (it == b.index_.end())
                return false;
            auto ra = a.row(i);
            auto rb = b.row(it->second);
            if (!std::equal(ra.begin(), ra.end(), rb.begin()))
                return false;
        }
        return true;
    }

private:
    std::string name_;
    std::size_t dimension_;
    TableKind kind_;
    std::string provenance_;
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Parsing

struct VectorFileOptions {
    /// Table name; defaults to the file stem.
    std::string name;
    TableKind kind = TableKind::pretrained;
    /// When set, only words for which this returns true are stored. Every
    /// line is still validated.
    std::function<bool(std::string_view)> keep;
};

namespace detail {
inline constexpr std::string_view meta_prefix = "#!";

inline std::optional<std::pair<std::string, std::string>> parse_meta(std::string_view line)
{
    if (!line.starts_with(meta_prefix))
        return std::nullopt;
    line.remove_prefix(meta_prefix.size());
    auto colon = line.find(':');
    if (colon == std::string_view::npos)
        return std::pair{std::string(trim(line)), std::string{}};
    return std::pair{std::string(trim(line.substr(0, colon))),
                     std::string(trim(line.substr(colon + 1)))};
}
}  // namespace detail

inline WordVectorTable parse_vector_stream(std::istream& in, const std::string& source,
                                           const VectorFileOptions& options)
{
    std::optional<WordVectorTable> table;
    std::optional<std::size_t> declared_vocab;
    std::string provenance;
    std::string line;
    std::size_t line_no = 0;
    bool seen_content = false;
    std::vector<double> values;
    std::size_t data_lines = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (!seen_content) {
            if (auto meta = detail::parse_meta(line)) {
                if (meta->first == "provenance")
                    provenance = meta->second;
                continue;
            }
        }
        auto tokens = split_whitespace(line);
        if (tokens.empty())
            continue;

        if (!seen_content) {
            seen_content = true;
            if (tokens.size() == 2) {
                auto v = parse_integer<std::size_t>(tokens[0]);
                auto k = parse_integer<std::size_t>(tokens[1]);
                if (v && k) {
                    if (*k == 0)
                        throw ParseError(source, line_no, "header declares dimension 0");
                    declared_vocab = *v;
                    table.emplace(options.name, *k, options.kind);
                    continue;
                }
            }
        }
        if (tokens.size() < 2)
            throw ParseError(source, line_no, "expected a word followed by components");

        const std::size_t components = tokens.size() - 1;
        if (!table)
            table.emplace(options.name, components, options.kind);
        if (components != table->dimension())
            throw ParseError(source, line_no,
                             "dimension mismatch: expected " +
                                 std::to_string(table->dimension()) + " components, got " +
                                 std::to_string(components));
        values.resize(components);
        for (std::size_t i = 0; i < components; ++i) {
            auto v = parse_finite_double(tokens[i + 1]);
            if (!v)
                throw ParseError(source, line_no,
                                 "non-numeric component " + std::to_string(i + 1) + " '" +
                                     std::string(tokens[i + 1]) + "'");
            values[i] = *v;
        }
        ++data_lines;
        if (options.keep && !options.keep(tokens[0]))
            continue;
        if (table->insert(std::string(tokens[0]), values))
            warn(source + ":" + std::to_string(line_no) + ": duplicate word '" +
                 std::string(tokens[0]) + "', keeping last occurrence");
    }

    if (!table || data_lines == 0)
        throw ParseError(source, 0, "no word vectors found (empty file)");
    if (declared_vocab && *declared_vocab != data_lines)
        warn(source + ": header declares " + std::to_string(*declared_vocab) +
             " words but file has " + std::to_string(data_lines));
    table->set_provenance(std::move(provenance));
    return std::move(*table);
}

inline WordVectorTable parse_vector_file(const std::filesystem::path& path,
                                         VectorFileOptions options = {})
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open vector file " + path.string());
    if (options.name.empty())
        options.name = path.stem().string();
    return parse_vector_stream(in, path.string(), options);
}

// ---------------------------------------------------------------------------
// Writing

/// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double v)
{
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline void write_vector_stream(std::ostream& out, const WordVectorTable& table,
                                bool with_header = true)
{
    if (!table.provenance().empty())
        out << detail::meta_prefix << " provenance: " << table.provenance() << '\n';
    if (with_header)
        out << table.size() << ' ' << table.dimension() << '\n';
    for (std::size_t i = 0; i < table.size(); ++i) {
        out << table.words()[i];
        for (double v : table.row(i))
            out << ' ' << format_double(v);
        out << '\n';
    }
}

inline void write_vector_file(const std::filesystem::path& path, const WordVectorTable& table,
                              bool with_header = true)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write vector file " + path.string());
    write_vector_stream(out, table, with_header);
    if (!out)
        throw Error("write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Random baselines

enum class BaselineDistribution { uniform, normal };

struct BaselineSpec {
    std::size_t dimension = 0;
    Seed seed = 0;
    std::size_t count = 5;
    BaselineDistribution distribution = BaselineDistribution::uniform;
};

/// Seed of baseline table `index`; its words draw from derive_seed(this, word).
inline Seed baseline_table_seed(const BaselineSpec& spec, std::size_t index)
{
    return derive_seed(spec.seed, "baseline-table", index);
}

inline std::string baseline_table_name(std::string_view prefix, std::size_t index)
{
    return std::string(prefix) + "#random" + std::to_string(index);
}

/// `spec.count` tables with one vector per word, i.i.d. uniform on
/// [-0.5, 0.5] (or standard normal). A word's vector depends only on
/// (spec, table index, word), never on the rest of the vocabulary.
inline std::vector<WordVectorTable> generate_baselines(const std::set<std::string>& vocabulary,
                                                       const BaselineSpec& spec,
                                                       std::string_view name_prefix = "random")
{
    if (vocabulary.empty())
        throw Error("generate_baselines: empty vocabulary");
    if (spec.dimension == 0 || spec.count == 0)
        throw Error("generate_baselines: dimension and count must be positive");

    std::vector<WordVectorTable> tables;
    tables.reserve(spec.count);
    std::vector<double> values(spec.dimension);
    for (std::size_t t = 0; t < spec.count; ++t) {
        const Seed table_seed = baseline_table_seed(spec, t);
        WordVectorTable table(baseline_table_name(name_prefix, t), spec.dimension,
                              TableKind::baseline);
        for (const auto& word : vocabulary) {
            Rng rng(derive_seed(table_seed, word));
            for (auto& v : values)
                v = spec.distribution == BaselineDistribution::uniform ? rng.uniform(-0.5, 0.5)
                                                                       : rng.normal();
            table.insert(word, values);
        }
        tables.push_back(std::move(table));
    }
    return tables;
}

// ---------------------------------------------------------------------------

struct Coverage {
    double fraction = 0.0;
    std::set<std::string> covered;
};

inline Coverage coverage(const WordVectorTable& table, const std::set<std::string>& vocabulary)
{
    if (vocabulary.empty())
        throw Error("coverage: empty vocabulary");
    Coverage c;
    for (const auto& w : vocabulary)
        if (table.contains(w))
            c.covered.insert(w);
    c.fraction = static_cast<double>(c.covered.size()) / static_cast<double>(vocabulary.size());
    return c;
}

}  // namespace cogeval
