#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "disagree/features.hpp"
#include "disagree/labels.hpp"

namespace disagree {

struct TrainConfig {
    double learning_rate = 0.1;
    std::size_t epochs = 20;
    std::size_t batch_size = 64;
    double l2 = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

enum class TargetKind {
    hard_majority,      // one-hot of the majority label
    soft_distribution,  // annotation distribution
    conditioned,        // one pair per annotation, annotator one-hot appended
};

std::string_view to_string(TargetKind kind) noexcept;
TargetKind parse_target_kind(std::string_view token);  // "hard" | "soft" | "conditioned"

/// Linear softmax classifier over hashed features, optionally conditioned on
/// the annotator. Inputs are `feature_dim` hashed features followed by one
/// indicator column per entry of `annotator_index`; weights are stored
/// row-major as classes x (feature_dim + annotators).
class SoftmaxClassifier {
public:
    SoftmaxClassifier(LabelSchema schema, FeatureSpace space, std::vector<std::string> annotator_index = {});
    /// Explicit input width, for models not tied to a hashed feature space
    /// (e.g. bias-only models with feature_dim = 0).
    SoftmaxClassifier(LabelSchema schema, FeatureSpace space, std::size_t feature_dim,
                      std::vector<std::string> annotator_index);

    const LabelSchema& schema() const noexcept { return schema_; }
    const FeatureSpace& space() const noexcept { return space_; }
    std::size_t num_classes() const noexcept { return schema_.size(); }
    std::size_t feature_dim() const noexcept { return feature_dim_; }
    std::size_t input_dim() const noexcept { return feature_dim_ + annotator_index_.size(); }
    bool conditioned() const noexcept { return !annotator_index_.empty(); }
    const std::vector<std::string>& annotator_index() const noexcept { return annotator_index_; }
    /// Column of the annotator's indicator input; throws UnknownAnnotator.
    std::size_t annotator_column(std::string_view annotator) const;

    std::span<double> weights() noexcept { return weights_; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::span<double> bias() noexcept { return bias_; }
    std::span<const double> bias() const noexcept { return bias_; }
    double& weight(std::size_t cls, std::size_t input) { return weights_[cls * input_dim() + input]; }
    double weight(std::size_t cls, std::size_t input) const { return weights_[cls * input_dim() + input]; }

    /// The config that produced the parameters, if trained.
    const std::optional<TrainConfig>& train_config() const noexcept { return train_config_; }
    void set_train_config(const TrainConfig& config) { train_config_ = config; }

    /// Features plus the annotator indicator when conditioned. Enforces
    /// "annotator given iff conditioned" (ConditioningMismatch) and
    /// membership in annotator_index (UnknownAnnotator).
    FeatureVector model_input(const FeatureVector& features, std::optional<std::string_view> annotator) const;

    /// Raw logits for an already-assembled model input.
    std::vector<double> logits(const FeatureVector& input) const;

    /// Writes the JSON model file: schema, feature space, annotator index,
    /// train config and the flattened parameters printed with 17
    /// significant digits.
    void save(const std::filesystem::path& path) const;
    static SoftmaxClassifier load(const std::filesystem::path& path);

    friend bool operator==(const SoftmaxClassifier&, const SoftmaxClassifier&) = default;

private:
    LabelSchema schema_;
    FeatureSpace space_;
    std::size_t feature_dim_;
    std::vector<std::string> annotator_index_;
    std::vector<double> weights_;
    std::vector<double> bias_;
    std::optional<TrainConfig> train_config_;
};

/// Numerically stable softmax (max-subtracted).
std::vector<double> softmax(std::span<const double> logits);

AnnotationDistribution predict_distribution(const SoftmaxClassifier& model, const FeatureVector& features,
                                            std::optional<std::string_view> annotator = std::nullopt);

/// Argmax of predict_distribution, ties to the lowest index.
LabelIndex predict_label(const SoftmaxClassifier& model, const FeatureVector& features,
                         std::optional<std::string_view> annotator = std::nullopt);

struct TrainingExample {
    FeatureVector features;
    AnnotationDistribution target;
    std::optional<std::string> annotator;
};

struct Gradient {
    std::vector<double> weights;  // same layout as SoftmaxClassifier::weights()
    std::vector<double> bias;
};

struct LossAndGradient {
    double loss = 0.0;  // nats
    Gradient gradient;
};

/// Probabilities are clamped to >= kProbabilityFloor inside the logarithm.
inline constexpr double kProbabilityFloor = 1e-12;

/// Mean over the batch of -sum_i p_i ln max(q_i, floor) plus
/// (l2 / 2) * ||weights||^2 (bias unregularized), with its exact gradient.
LossAndGradient loss_and_gradient(const SoftmaxClassifier& model, std::span<const TrainingExample> batch,
                                  double l2);

/// Mini-batch gradient descent with a constant learning rate. Each epoch
/// visits the examples in a SplitMix64-seeded Fisher-Yates permutation.
/// Throws EmptySplit on an empty example list.
void fit(SoftmaxClassifier& model, std::span<const TrainingExample> examples, const TrainConfig& config);

/// Expands the corpus train split into examples for the given target kind.
std::vector<TrainingExample> make_examples(const Corpus& corpus, Split split, const FeatureSpace& space,
                                           TargetKind kind);

/// Builds the examples for `kind`, sizes the model (the conditioned kind
/// indexes every annotator seen in the train split) and fits it.
SoftmaxClassifier train(const Corpus& corpus, const FeatureSpace& space, TargetKind kind,
                        const TrainConfig& config);

}  // namespace disagree
