#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace disagree {

using LabelIndex = std::size_t;

/// Ordered label set. The position of a name is its label index for the
/// lifetime of a run; indices appear in model files and reports.
class LabelSchema {
public:
    LabelSchema(std::string task_id, std::vector<std::string> labels);

    /// Built-in schemas for the two supported dataset shapes.
    static LabelSchema hate_speech();           // Hate, Offensive, Normal
    static LabelSchema abusive_conversation();  // 5-point abuse severity scale
    /// Looks up a built-in schema by task id.
    static LabelSchema named(std::string_view task_id);

    const std::string& task_id() const noexcept { return task_id_; }
    const std::vector<std::string>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }
    const std::string& name(LabelIndex index) const { return labels_.at(index); }

    /// Exact (case-sensitive) lookup.
    std::optional<LabelIndex> find(std::string_view name) const noexcept;
    /// Like find, but throws SchemaMismatch.
    LabelIndex index_of(std::string_view name) const;

    friend bool operator==(const LabelSchema&, const LabelSchema&) = default;

private:
    std::string task_id_;
    std::vector<std::string> labels_;
};

struct Annotation {
    std::string annotator_id;
    LabelIndex label = 0;

    friend bool operator==(const Annotation&, const Annotation&) = default;
};

enum class Split { train, validation, test };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view token);

struct AnnotatedSample {
    std::string sample_id;
    std::string text;
    std::vector<Annotation> annotations;
    Split split = Split::train;

    friend bool operator==(const AnnotatedSample&, const AnnotatedSample&) = default;
};

/// Normalized probability vector over a schema's labels. Used both as the
/// soft training target and as the output of every model.
class AnnotationDistribution {
public:
    static constexpr double kSumTolerance = 1e-9;

    /// Validates: entries finite and >= 0, sum within kSumTolerance of 1.
    explicit AnnotationDistribution(std::vector<double> probs);

    static AnnotationDistribution uniform(std::size_t size);
    static AnnotationDistribution one_hot(std::size_t size, LabelIndex index);

    std::span<const double> probs() const noexcept { return probs_; }
    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }

    /// Highest-probability index; ties go to the lowest index.
    LabelIndex argmax() const noexcept;

    friend bool operator==(const AnnotationDistribution&, const AnnotationDistribution&) = default;

private:
    std::vector<double> probs_;
};

/// A validated collection of samples over one schema, plus the registry of
/// every annotator id with its annotation count.
class Corpus {
public:
    Corpus(LabelSchema schema, std::vector<AnnotatedSample> samples);

    const LabelSchema& schema() const noexcept { return schema_; }
    const std::vector<AnnotatedSample>& samples() const noexcept { return samples_; }
    const std::map<std::string, std::size_t>& annotators() const noexcept { return annotators_; }

    std::vector<const AnnotatedSample*> split(Split which) const;
    const AnnotatedSample* find(std::string_view sample_id) const;

    friend bool operator==(const Corpus& a, const Corpus& b)
    {
        return a.schema_ == b.schema_ && a.samples_ == b.samples_;
    }

private:
    LabelSchema schema_;
    std::vector<AnnotatedSample> samples_;
    std::map<std::string, std::size_t> annotators_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// probs[i] = count(label == i) / |annotations|. Throws EmptyAnnotations.
AnnotationDistribution build_distribution(std::span<const Annotation> annotations,
                                          const LabelSchema& schema);

/// Most frequent label; ties broken by lowest schema index. Throws EmptyAnnotations.
LabelIndex majority_label(std::span<const Annotation> annotations, const LabelSchema& schema);

// --- ingestion -------------------------------------------------------------

enum class CorpusShape {
    slots,       // anonymous annotators, columns label_1..label_k
    identified,  // one column per named annotator, empty cell = not annotated
};

CorpusShape parse_shape(std::string_view token);

struct IngestOptions {
    /// Used when the file has no `split` column, or the cell is empty.
    Split default_split = Split::train;
};

/// Reads the CSV contract: header with `id,text[,split]` plus label columns.
/// Slots shape assigns synthetic ids slot_0..slot_{k-1} in column order.
Corpus ingest(const std::filesystem::path& path, CorpusShape shape, const LabelSchema& schema,
              const IngestOptions& options = {});

/// Writes the CSV contract ingest() accepts. Slots shape requires every
/// annotation id to be slot_<k>; identified shape writes one column per
/// registered annotator.
void write_csv(const Corpus& corpus, CorpusShape shape, const std::filesystem::path& path);

/// Canonical JSONL: one `{id, text, split, annotations:[{annotator, label}]}`
/// object per line, labels stored by name.
void write_corpus_jsonl(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus_jsonl(const std::filesystem::path& path, const LabelSchema& schema);

}  // namespace disagree
