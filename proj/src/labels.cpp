#include "disagree/labels.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "csv.hpp"
#include "disagree/error.hpp"

namespace disagree {

std::string_view errc_name(Errc code) noexcept
{
    switch (code) {
    case Errc::EmptyAnnotations: return "EmptyAnnotations";
    case Errc::SchemaMismatch: return "SchemaMismatch";
    case Errc::MalformedRow: return "MalformedRow";
    case Errc::InvalidSchema: return "InvalidSchema";
    case Errc::InvalidDistribution: return "InvalidDistribution";
    case Errc::UnknownAnnotator: return "UnknownAnnotator";
    case Errc::ConditioningMismatch: return "ConditioningMismatch";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::InvalidSelection: return "InvalidSelection";
    case Errc::EmptyVotes: return "EmptyVotes";
    case Errc::TemplateError: return "TemplateError";
    case Errc::Unparseable: return "Unparseable";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::AlignmentError: return "AlignmentError";
    case Errc::DomainError: return "DomainError";
    case Errc::InvalidRequest: return "InvalidRequest";
    case Errc::DuplicateResponse: return "DuplicateResponse";
    case Errc::UnknownItem: return "UnknownItem";
    case Errc::IoError: return "IoError";
    case Errc::FormatError: return "FormatError";
    }
    return "Error";
}

// --- LabelSchema -----------------------------------------------------------

LabelSchema::LabelSchema(std::string task_id, std::vector<std::string> labels)
    : task_id_(std::move(task_id)), labels_(std::move(labels))
{
    if (labels_.empty()) throw Error(Errc::InvalidSchema, "schema '" + task_id_ + "' has no labels");
    std::set<std::string_view> seen;
    for (const auto& name : labels_) {
        if (name.empty()) throw Error(Errc::InvalidSchema, "empty label name in '" + task_id_ + "'");
        if (!seen.insert(name).second)
            throw Error(Errc::InvalidSchema, "duplicate label '" + name + "' in '" + task_id_ + "'");
    }
}

LabelSchema LabelSchema::hate_speech()
{
    return LabelSchema("hate_speech", {"Hate", "Offensive", "Normal"});
}

LabelSchema LabelSchema::abusive_conversation()
{
    return LabelSchema("abusive_conversation", {"Not abusive", "Ambiguous", "Mildly abusive",
                                                "Strongly abusive", "Very strongly abusive"});
}

LabelSchema LabelSchema::named(std::string_view task_id)
{
    if (task_id == "hate_speech") return hate_speech();
    if (task_id == "abusive_conversation") return abusive_conversation();
    throw Error(Errc::InvalidSchema, "unknown schema '" + std::string(task_id) + "'");
}

std::optional<LabelIndex> LabelSchema::find(std::string_view name) const noexcept
{
    const auto it = std::find(labels_.begin(), labels_.end(), name);
    if (it == labels_.end()) return std::nullopt;
    return static_cast<LabelIndex>(it - labels_.begin());
}

LabelIndex LabelSchema::index_of(std::string_view name) const
{
    if (auto index = find(name)) return *index;
    throw Error(Errc::SchemaMismatch,
                "label '" + std::string(name) + "' is not in schema '" + task_id_ + "'");
}

// --- Split -----------------------------------------------------------------

std::string_view to_string(Split split) noexcept
{
    switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
    }
    return "train";
}

Split parse_split(std::string_view token)
{
    if (token == "train") return Split::train;
    if (token == "validation" || token == "valid" || token == "dev") return Split::validation;
    if (token == "test") return Split::test;
    throw Error(Errc::FormatError, "unknown split '" + std::string(token) + "'");
}

// --- AnnotationDistribution ------------------------------------------------

AnnotationDistribution::AnnotationDistribution(std::vector<double> probs) : probs_(std::move(probs))
{
    if (probs_.empty()) throw Error(Errc::InvalidDistribution, "empty distribution");
    double sum = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0)
            throw Error(Errc::InvalidDistribution, "entry " + std::to_string(p) + " is not a probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance)
        throw Error(Errc::InvalidDistribution, "entries sum to " + std::to_string(sum));
}

AnnotationDistribution AnnotationDistribution::uniform(std::size_t size)
{
    return AnnotationDistribution(std::vector<double>(size, 1.0 / static_cast<double>(size)));
}

AnnotationDistribution AnnotationDistribution::one_hot(std::size_t size, LabelIndex index)
{
    std::vector<double> probs(size, 0.0);
    probs.at(index) = 1.0;
    return AnnotationDistribution(std::move(probs));
}

LabelIndex AnnotationDistribution::argmax() const noexcept
{
    // max_element returns the first maximum
    return static_cast<LabelIndex>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

// --- Corpus ----------------------------------------------------------------

Corpus::Corpus(LabelSchema schema, std::vector<AnnotatedSample> samples)
    : schema_(std::move(schema)), samples_(std::move(samples))
{
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        const auto& sample = samples_[i];
        if (!by_id_.emplace(sample.sample_id, i).second)
            throw Error(Errc::MalformedRow, "duplicate sample id '" + sample.sample_id + "'");
        if (sample.annotations.empty())
            throw Error(Errc::EmptyAnnotations, "sample '" + sample.sample_id + "' has no annotations");
        std::set<std::string_view> seen;
        for (const auto& a : sample.annotations) {
            if (a.label >= schema_.size())
                throw Error(Errc::SchemaMismatch, "sample '" + sample.sample_id + "': label index "
                                                      + std::to_string(a.label) + " out of range");
            if (!seen.insert(a.annotator_id).second)
                throw Error(Errc::MalformedRow, "sample '" + sample.sample_id + "': annotator '"
                                                    + a.annotator_id + "' appears twice");
            ++annotators_[a.annotator_id];
        }
    }
}

std::vector<const AnnotatedSample*> Corpus::split(Split which) const
{
    std::vector<const AnnotatedSample*> out;
    for (const auto& sample : samples_)
        if (sample.split == which) out.push_back(&sample);
    return out;
}

const AnnotatedSample* Corpus::find(std::string_view sample_id) const
{
    const auto it = by_id_.find(sample_id);
    return it == by_id_.end() ? nullptr : &samples_[it->second];
}

// --- aggregation -----------------------------------------------------------

namespace {

std::vector<std::size_t> label_counts(std::span<const Annotation> annotations, const LabelSchema& schema)
{
    if (annotations.empty()) throw Error(Errc::EmptyAnnotations, "no annotations to aggregate");
    std::vector<std::size_t> counts(schema.size(), 0);
    for (const auto& a : annotations) {
        if (a.label >= schema.size())
            throw Error(Errc::SchemaMismatch, "label index " + std::to_string(a.label) + " out of range");
        ++counts[a.label];
    }
    return counts;
}

}  // namespace

AnnotationDistribution build_distribution(std::span<const Annotation> annotations, const LabelSchema& schema)
{
    const auto counts = label_counts(annotations, schema);
    const double total = static_cast<double>(annotations.size());
    std::vector<double> probs(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i) probs[i] = static_cast<double>(counts[i]) / total;
    return AnnotationDistribution(std::move(probs));
}

LabelIndex majority_label(std::span<const Annotation> annotations, const LabelSchema& schema)
{
    const auto counts = label_counts(annotations, schema);
    return static_cast<LabelIndex>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

// --- ingestion -------------------------------------------------------------

CorpusShape parse_shape(std::string_view token)
{
    if (token == "slots") return CorpusShape::slots;
    if (token == "identified") return CorpusShape::identified;
    throw Error(Errc::FormatError, "unknown corpus shape '" + std::string(token) + "'");
}

namespace {

std::string row_context(const std::filesystem::path& path, std::size_t row)
{
    return path.string() + " row " + std::to_string(row);
}

bool is_blank_row(const csv::Row& row)
{
    return row.size() == 1 && row.front().empty();
}

constexpr std::string_view kSlotPrefix = "slot_";

}  // namespace

Corpus ingest(const std::filesystem::path& path, CorpusShape shape, const LabelSchema& schema,
              const IngestOptions& options)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());

    auto header = csv::read_row(in);
    if (!header) throw Error(Errc::MalformedRow, row_context(path, 1) + ": missing header");
    if (!header->empty() && header->front().starts_with("\xEF\xBB\xBF")) header->front().erase(0, 3);

    std::optional<std::size_t> id_col, text_col, split_col;
    std::vector<std::pair<std::size_t, std::string>> label_cols;  // column, annotator id
    for (std::size_t c = 0; c < header->size(); ++c) {
        const std::string& name = (*header)[c];
        if (name == "id") id_col = c;
        else if (name == "text") text_col = c;
        else if (name == "split") split_col = c;
        else if (shape == CorpusShape::slots) {
            if (!name.starts_with("label_"))
                throw Error(Errc::MalformedRow, row_context(path, 1) + ": unexpected column '" + name
                                                    + "' for slots shape");
            label_cols.emplace_back(c, "");
        } else {
            if (name.empty()) throw Error(Errc::MalformedRow, row_context(path, 1) + ": empty annotator column name");
            label_cols.emplace_back(c, name);
        }
    }
    if (!id_col || !text_col)
        throw Error(Errc::MalformedRow, row_context(path, 1) + ": header needs 'id' and 'text' columns");
    if (label_cols.empty())
        throw Error(Errc::MalformedRow, row_context(path, 1) + ": no label columns");
    if (shape == CorpusShape::slots) {
        for (std::size_t k = 0; k < label_cols.size(); ++k) {
            const std::string expected = "label_" + std::to_string(k + 1);
            if ((*header)[label_cols[k].first] != expected)
                throw Error(Errc::MalformedRow, row_context(path, 1) + ": expected column '" + expected + "'");
            label_cols[k].second = std::string(kSlotPrefix) + std::to_string(k);
        }
    }

    std::vector<AnnotatedSample> samples;
    std::size_t row_number = 1;
    while (auto row = csv::read_row(in)) {
        ++row_number;
        if (is_blank_row(*row)) continue;
        const auto where = row_context(path, row_number);
        if (row->size() != header->size())
            throw Error(Errc::MalformedRow, where + ": expected " + std::to_string(header->size())
                                                + " fields, found " + std::to_string(row->size()));
        AnnotatedSample sample;
        sample.sample_id = (*row)[*id_col];
        sample.text = (*row)[*text_col];
        if (sample.sample_id.empty()) throw Error(Errc::MalformedRow, where + ": missing id");
        if (sample.text.empty()) throw Error(Errc::MalformedRow, where + ": missing text");
        sample.split = options.default_split;
        if (split_col && !(*row)[*split_col].empty()) {
            try {
                sample.split = parse_split((*row)[*split_col]);
            } catch (const Error& e) {
                throw Error(Errc::MalformedRow, where + ": " + e.message());
            }
        }
        for (const auto& [col, annotator] : label_cols) {
            const std::string& token = (*row)[col];
            if (token.empty()) {
                if (shape == CorpusShape::slots)
                    throw Error(Errc::MalformedRow, where + ": empty label in slot column");
                continue;  // identified: absence means "not annotated"
            }
            const auto label = schema.find(token);
            if (!label)
                throw Error(Errc::SchemaMismatch, where + ": label '" + token + "' is not in schema '"
                                                      + schema.task_id() + "'");
            sample.annotations.push_back({annotator, *label});
        }
        if (sample.annotations.empty())
            throw Error(Errc::MalformedRow, where + ": sample has no annotations");
        samples.push_back(std::move(sample));
    }

    try {
        return Corpus(schema, std::move(samples));
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    }
}

void write_csv(const Corpus& corpus, CorpusShape shape, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());

    const auto& schema = corpus.schema();
    csv::Row header{"id", "text", "split"};
    std::vector<std::string> columns;
    if (shape == CorpusShape::slots) {
        std::size_t width = 0;
        for (const auto& s : corpus.samples()) width = std::max(width, s.annotations.size());
        for (std::size_t k = 0; k < width; ++k) header.push_back("label_" + std::to_string(k + 1));
    } else {
        for (const auto& [annotator, count] : corpus.annotators()) {
            header.push_back(annotator);
            columns.push_back(annotator);
        }
    }
    csv::write_row(out, header);

    for (const auto& s : corpus.samples()) {
        csv::Row row{s.sample_id, s.text, std::string(to_string(s.split))};
        if (shape == CorpusShape::slots) {
            if (s.annotations.size() + 3 != header.size())
                throw Error(Errc::FormatError, "sample '" + s.sample_id + "' has a different slot count");
            for (std::size_t k = 0; k < s.annotations.size(); ++k) {
                if (s.annotations[k].annotator_id != std::string(kSlotPrefix) + std::to_string(k))
                    throw Error(Errc::FormatError, "sample '" + s.sample_id + "' is not in slot order");
                row.push_back(schema.name(s.annotations[k].label));
            }
        } else {
            for (const auto& annotator : columns) {
                const auto it = std::find_if(s.annotations.begin(), s.annotations.end(),
                                             [&](const Annotation& a) { return a.annotator_id == annotator; });
                row.push_back(it == s.annotations.end() ? std::string() : schema.name(it->label));
            }
        }
        csv::write_row(out, row);
    }
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

void write_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    for (const auto& s : corpus.samples()) {
        nlohmann::ordered_json line;
        line["id"] = s.sample_id;
        line["text"] = s.text;
        line["split"] = to_string(s.split);
        auto& annotations = line["annotations"] = nlohmann::ordered_json::array();
        for (const auto& a : s.annotations)
            annotations.push_back({{"annotator", a.annotator_id}, {"label", corpus.schema().name(a.label)}});
        out << line.dump() << '\n';
    }
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

Corpus read_corpus_jsonl(const std::filesystem::path& path, const LabelSchema& schema)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());

    std::vector<AnnotatedSample> samples;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        const auto where = path.string() + " line " + std::to_string(line_number);
        try {
            const auto j = nlohmann::json::parse(line);
            AnnotatedSample s;
            s.sample_id = j.at("id").get<std::string>();
            s.text = j.at("text").get<std::string>();
            if (s.text.empty()) throw Error(Errc::MalformedRow, "missing text");
            s.split = parse_split(j.at("split").get<std::string>());
            for (const auto& a : j.at("annotations")) {
                const auto label = a.at("label").get<std::string>();
                const auto index = schema.find(label);
                if (!index) throw Error(Errc::SchemaMismatch, "label '" + label + "' is not in schema");
                s.annotations.push_back({a.at("annotator").get<std::string>(), *index});
            }
            samples.push_back(std::move(s));
        } catch (const Error& e) {
            throw Error(e.code(), where + ": " + e.message());
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::MalformedRow, where + ": " + e.what());
        }
    }
    return Corpus(schema, std::move(samples));
}

}  // namespace disagree
