#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "disagree/eval.hpp"
#include "disagree/features.hpp"
#include "disagree/labels.hpp"
#include "disagree/softmax.hpp"

namespace disagree {

/// Labels from one annotator (identified mode) or one annotation position
/// (slots mode).
struct LabelStream {
    struct Pair {
        std::string sample_id;
        LabelIndex label;
        Split split;
    };

    std::string stream_id;
    std::vector<Pair> pairs;

    std::size_t count(Split split) const noexcept;
};

enum class StreamMode { identified, slots };

StreamMode parse_stream_mode(std::string_view token);

/// identified: one stream per registered annotator with exactly the samples
/// that annotator labeled. slots: stream slot_k holds the k-th annotation of
/// every sample that has one. Streams with no train pairs are dropped and a
/// warning is appended to `warnings` (or printed to stderr when null).
std::vector<LabelStream> build_streams(const Corpus& corpus, StreamMode mode,
                                       std::vector<std::string>* warnings = nullptr);

/// A voter in the ensemble: either a standalone classifier, or a view into a
/// conditioned classifier fixed to one annotator.
class SubModel {
public:
    explicit SubModel(std::shared_ptr<const SoftmaxClassifier> model);
    SubModel(std::shared_ptr<const SoftmaxClassifier> conditioned, std::string annotator);

    LabelIndex predict_label(const FeatureVector& features) const;

    const SoftmaxClassifier& model() const noexcept { return *model_; }
    const std::shared_ptr<const SoftmaxClassifier>& shared_model() const noexcept { return model_; }
    bool is_virtual() const noexcept { return annotator_.has_value(); }
    const std::optional<std::string>& annotator() const noexcept { return annotator_; }

private:
    std::shared_ptr<const SoftmaxClassifier> model_;
    std::optional<std::string> annotator_;
};

struct SubModelRecord {
    std::string stream_id;
    SubModel model;
    double validation_accuracy = 0.0;
};

/// Accuracy is measured against each stream's own validation labels.
/// Streams without validation pairs score 0.
std::vector<SubModelRecord> train_ensemble(const Corpus& corpus, StreamMode mode, const FeatureSpace& space,
                                           const TrainConfig& config, std::vector<std::string>* warnings = nullptr);

/// One conditioned classifier over every annotator, exposed as one virtual
/// sub-model per annotator stream.
std::vector<SubModelRecord> train_conditioned_ensemble(const Corpus& corpus, const FeatureSpace& space,
                                                       const TrainConfig& config,
                                                       std::vector<std::string>* warnings = nullptr);

/// Seed for a stream's sub-model: base seed XOR FNV-1a-64(stream_id).
std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream_id) noexcept;

/// Fraction of the stream's pairs in `split` for which the sub-model
/// predicts the stream's label.
double stream_accuracy(const SubModel& model, const LabelStream& stream, const Corpus& corpus, Split split,
                       const FeatureSpace& space);

inline constexpr std::size_t kMinEnsembleSize = 3;

class EnsembleModel {
public:
    /// Throws InvalidSelection unless 3 <= n <= records.size() (records are
    /// the selected n).
    EnsembleModel(std::vector<SubModelRecord> selected, const FeatureSpace& space);

    const std::vector<SubModelRecord>& records() const noexcept { return records_; }
    std::size_t n() const noexcept { return records_.size(); }
    const FeatureSpace& space() const noexcept { return space_; }
    const LabelSchema& schema() const { return records_.front().model.model().schema(); }

private:
    std::vector<SubModelRecord> records_;
    FeatureSpace space_;
};

/// The n records with the highest validation accuracy, ties broken by the
/// lexicographically smaller stream id. Throws InvalidSelection.
EnsembleModel select_top_n(std::span<const SubModelRecord> records, std::size_t n, const FeatureSpace& space);

/// probs[i] = count(votes == i) / |votes|. Throws EmptyVotes.
AnnotationDistribution aggregate(std::span<const LabelIndex> votes, const LabelSchema& schema);

/// Hard argmax vote of every selected sub-model, aggregated.
AnnotationDistribution predict(const EnsembleModel& ensemble, std::string_view text);
AnnotationDistribution predict(const EnsembleModel& ensemble, const FeatureVector& features);

struct SweepRow {
    std::size_t n;
    double mean_cross_entropy;
};

/// Mean test-split cross entropy of the top-n ensemble for every n in
/// [n_min, n_max]. Throws InvalidSelection when the range leaves [3, |records|].
std::vector<SweepRow> sweep_top_n(std::span<const SubModelRecord> records, const Corpus& corpus,
                                  const FeatureSpace& space, std::size_t n_min, std::size_t n_max);

/// CSV with header `n,mean_cross_entropy`, values at 17 significant digits.
void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path);

// --- manifest --------------------------------------------------------------

/// JSON manifest: stream ids, per-stream model file paths (relative to the
/// manifest), validation accuracies and the selected n. Conditioned
/// ensembles list one shared model file plus the annotator per stream.
void save_manifest(std::span<const SubModelRecord> records, std::size_t selected_n,
                   const std::filesystem::path& manifest_path);

struct LoadedEnsemble {
    std::vector<SubModelRecord> records;
    std::size_t selected_n = 0;
    FeatureSpace space;
};

LoadedEnsemble load_manifest(const std::filesystem::path& manifest_path);

}  // namespace disagree
