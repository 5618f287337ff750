#include "disagree/softmax.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "disagree/error.hpp"
#include "disagree/rng.hpp"

namespace disagree {

void TrainConfig::validate() const
{
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        throw Error(Errc::InvalidConfig, "learning_rate must be > 0");
    if (epochs < 1) throw Error(Errc::InvalidConfig, "epochs must be >= 1");
    if (batch_size < 1) throw Error(Errc::InvalidConfig, "batch_size must be >= 1");
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw Error(Errc::InvalidConfig, "l2 must be >= 0");
}

std::string_view to_string(TargetKind kind) noexcept
{
    switch (kind) {
    case TargetKind::hard_majority: return "hard";
    case TargetKind::soft_distribution: return "soft";
    case TargetKind::conditioned: return "conditioned";
    }
    return "hard";
}

TargetKind parse_target_kind(std::string_view token)
{
    if (token == "hard") return TargetKind::hard_majority;
    if (token == "soft") return TargetKind::soft_distribution;
    if (token == "conditioned") return TargetKind::conditioned;
    throw Error(Errc::InvalidConfig, "unknown target kind '" + std::string(token) + "'");
}

// --- SoftmaxClassifier -----------------------------------------------------

SoftmaxClassifier::SoftmaxClassifier(LabelSchema schema, FeatureSpace space,
                                     std::vector<std::string> annotator_index)
    : SoftmaxClassifier(std::move(schema), space, space.dimension, std::move(annotator_index))
{
    space_.validate();
}

SoftmaxClassifier::SoftmaxClassifier(LabelSchema schema, FeatureSpace space, std::size_t feature_dim,
                                     std::vector<std::string> annotator_index)
    : schema_(std::move(schema)),
      space_(space),
      feature_dim_(feature_dim),
      annotator_index_(std::move(annotator_index)),
      weights_(schema_.size() * (feature_dim_ + annotator_index_.size()), 0.0),
      bias_(schema_.size(), 0.0)
{
    std::set<std::string_view> seen;
    for (const auto& id : annotator_index_)
        if (!seen.insert(id).second) throw Error(Errc::InvalidConfig, "duplicate annotator '" + id + "' in index");
}

std::size_t SoftmaxClassifier::annotator_column(std::string_view annotator) const
{
    const auto it = std::find(annotator_index_.begin(), annotator_index_.end(), annotator);
    if (it == annotator_index_.end())
        throw Error(Errc::UnknownAnnotator, "annotator '" + std::string(annotator) + "' is not known to the model");
    return feature_dim_ + static_cast<std::size_t>(it - annotator_index_.begin());
}

FeatureVector SoftmaxClassifier::model_input(const FeatureVector& features,
                                             std::optional<std::string_view> annotator) const
{
    if (annotator.has_value() != conditioned())
        throw Error(Errc::ConditioningMismatch, conditioned() ? "conditioned model needs an annotator"
                                                              : "unconditioned model given an annotator");
    if (!features.empty() && features.entries().back().first >= feature_dim_)
        throw Error(Errc::DimensionMismatch, "feature index " + std::to_string(features.entries().back().first)
                                                 + " exceeds model width " + std::to_string(feature_dim_));
    if (!annotator) return features;
    FeatureVector input = features;
    input.append(annotator_column(*annotator), 1.0);
    return input;
}

std::vector<double> SoftmaxClassifier::logits(const FeatureVector& input) const
{
    const std::size_t width = input_dim();
    std::vector<double> z(bias_.begin(), bias_.end());
    for (std::size_t c = 0; c < z.size(); ++c) {
        const double* row = weights_.data() + c * width;
        for (const auto& [index, value] : input.entries()) z[c] += row[index] * value;
    }
    return z;
}

// --- model file ------------------------------------------------------------

namespace {

constexpr std::string_view kModelFormat = "disagree.softmax.v1";

void write_double(std::ostream& out, double value)
{
    char buffer[32];
    const auto result = std::to_chars(buffer, buffer + sizeof buffer, value, std::chars_format::general, 17);
    out.write(buffer, result.ptr - buffer);
}

void write_array(std::ostream& out, std::span<const double> values)
{
    out << '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out << ',';
        write_double(out, values[i]);
    }
    out << ']';
}

nlohmann::ordered_json space_to_json(const FeatureSpace& space)
{
    nlohmann::ordered_json j;
    j["dimension"] = space.dimension;
    if (space.char_ngrams) j["char_ngrams"] = {{"min", space.char_ngrams->min}, {"max", space.char_ngrams->max}};
    else j["char_ngrams"] = nullptr;
    j["lowercase"] = space.lowercase;
    return j;
}

FeatureSpace space_from_json(const nlohmann::json& j)
{
    FeatureSpace space;
    space.dimension = j.at("dimension").get<std::size_t>();
    if (j.at("char_ngrams").is_null()) space.char_ngrams.reset();
    else space.char_ngrams = NgramRange{j["char_ngrams"].at("min").get<std::size_t>(),
                                        j["char_ngrams"].at("max").get<std::size_t>()};
    space.lowercase = j.at("lowercase").get<bool>();
    space.validate();
    return space;
}

nlohmann::ordered_json config_to_json(const TrainConfig& config)
{
    nlohmann::ordered_json j;
    j["learning_rate"] = config.learning_rate;
    j["epochs"] = config.epochs;
    j["batch_size"] = config.batch_size;
    j["l2"] = config.l2;
    j["seed"] = config.seed;
    return j;
}

TrainConfig config_from_json(const nlohmann::json& j)
{
    TrainConfig config;
    config.learning_rate = j.at("learning_rate").get<double>();
    config.epochs = j.at("epochs").get<std::size_t>();
    config.batch_size = j.at("batch_size").get<std::size_t>();
    config.l2 = j.at("l2").get<double>();
    config.seed = j.at("seed").get<std::uint64_t>();
    config.validate();
    return config;
}

}  // namespace

void SoftmaxClassifier::save(const std::filesystem::path& path) const
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());

    const nlohmann::ordered_json schema = {{"task_id", schema_.task_id()}, {"labels", schema_.labels()}};
    out << "{\n";
    out << "  \"format\": " << nlohmann::json(kModelFormat).dump() << ",\n";
    out << "  \"schema\": " << schema.dump() << ",\n";
    out << "  \"feature_space\": " << space_to_json(space_).dump() << ",\n";
    out << "  \"feature_dim\": " << feature_dim_ << ",\n";
    out << "  \"annotator_index\": " << nlohmann::json(annotator_index_).dump() << ",\n";
    out << "  \"train_config\": "
        << (train_config_ ? config_to_json(*train_config_).dump() : std::string("null")) << ",\n";
    out << "  \"classes\": " << num_classes() << ",\n";
    out << "  \"inputs\": " << input_dim() << ",\n";
    out << "  \"bias\": ";
    write_array(out, bias_);
    out << ",\n  \"weights\": [\n";
    const std::size_t width = input_dim();
    for (std::size_t c = 0; c < num_classes(); ++c) {
        out << "    ";
        write_array(out, std::span<const double>(weights_).subspan(c * width, width));
        out << (c + 1 < num_classes() ? ",\n" : "\n");
    }
    out << "  ]\n}\n";
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

SoftmaxClassifier SoftmaxClassifier::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format").get<std::string>() != kModelFormat)
            throw Error(Errc::FormatError, "unsupported model format");
        LabelSchema schema(j.at("schema").at("task_id").get<std::string>(),
                           j.at("schema").at("labels").get<std::vector<std::string>>());
        SoftmaxClassifier model(std::move(schema), space_from_json(j.at("feature_space")),
                                j.at("feature_dim").get<std::size_t>(),
                                j.at("annotator_index").get<std::vector<std::string>>());
        if (!j.at("train_config").is_null()) model.train_config_ = config_from_json(j["train_config"]);

        const auto& bias = j.at("bias");
        const auto& rows = j.at("weights");
        if (bias.size() != model.num_classes() || rows.size() != model.num_classes())
            throw Error(Errc::FormatError, "parameter shape does not match the schema");
        for (std::size_t c = 0; c < model.num_classes(); ++c) {
            model.bias_[c] = bias[c].get<double>();
            if (rows[c].size() != model.input_dim())
                throw Error(Errc::FormatError, "weight row " + std::to_string(c) + " has the wrong width");
            for (std::size_t i = 0; i < model.input_dim(); ++i) model.weight(c, i) = rows[c][i].get<double>();
        }
        for (double w : model.weights_)
            if (!std::isfinite(w)) throw Error(Errc::FormatError, "non-finite parameter");
        return model;
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::FormatError, path.string() + ": " + e.what());
    }
}

// --- inference -------------------------------------------------------------

std::vector<double> softmax(std::span<const double> logits)
{
    const double top = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) total += out[i] = std::exp(logits[i] - top);
    for (double& v : out) v /= total;
    return out;
}

AnnotationDistribution predict_distribution(const SoftmaxClassifier& model, const FeatureVector& features,
                                            std::optional<std::string_view> annotator)
{
    return AnnotationDistribution(softmax(model.logits(model.model_input(features, annotator))));
}

LabelIndex predict_label(const SoftmaxClassifier& model, const FeatureVector& features,
                         std::optional<std::string_view> annotator)
{
    return predict_distribution(model, features, annotator).argmax();
}

// --- objective -------------------------------------------------------------

namespace {

/// Per-example cross entropy and dLoss/dLogits. With S the target mass on
/// unclamped classes, dL/dz_j = q_j * S - p_j * [q_j unclamped].
double example_terms(const SoftmaxClassifier& model, const FeatureVector& input, const AnnotationDistribution& target,
                     std::vector<double>& dlogits)
{
    const auto q = softmax(model.logits(input));
    double loss = 0.0;
    double unclamped_mass = 0.0;
    dlogits.assign(q.size(), 0.0);
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double p = target[i];
        if (q[i] >= kProbabilityFloor) {
            loss -= p * std::log(q[i]);
            unclamped_mass += p;
            dlogits[i] = -p;
        } else {
            loss -= p * std::log(kProbabilityFloor);
        }
    }
    for (std::size_t i = 0; i < q.size(); ++i) dlogits[i] += q[i] * unclamped_mass;
    return loss;
}

void check_target(const SoftmaxClassifier& model, const TrainingExample& example)
{
    if (example.target.size() != model.num_classes())
        throw Error(Errc::DimensionMismatch, "target has " + std::to_string(example.target.size())
                                                 + " classes, model has " + std::to_string(model.num_classes()));
}

std::optional<std::string_view> annotator_of(const TrainingExample& example)
{
    if (!example.annotator) return std::nullopt;
    return std::string_view(*example.annotator);
}

}  // namespace

LossAndGradient loss_and_gradient(const SoftmaxClassifier& model, std::span<const TrainingExample> batch, double l2)
{
    if (batch.empty()) throw Error(Errc::EmptySplit, "empty batch");
    const std::size_t width = model.input_dim();
    const double scale = 1.0 / static_cast<double>(batch.size());

    LossAndGradient out;
    out.gradient.weights.assign(model.weights().size(), 0.0);
    out.gradient.bias.assign(model.num_classes(), 0.0);
    std::vector<double> dlogits;
    for (const auto& example : batch) {
        check_target(model, example);
        const auto input = model.model_input(example.features, annotator_of(example));
        out.loss += scale * example_terms(model, input, example.target, dlogits);
        for (std::size_t c = 0; c < dlogits.size(); ++c) {
            out.gradient.bias[c] += scale * dlogits[c];
            for (const auto& [index, value] : input.entries())
                out.gradient.weights[c * width + index] += scale * dlogits[c] * value;
        }
    }
    double sq = 0.0;
    const auto weights = model.weights();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        sq += weights[i] * weights[i];
        out.gradient.weights[i] += l2 * weights[i];
    }
    out.loss += 0.5 * l2 * sq;
    return out;
}

void fit(SoftmaxClassifier& model, std::span<const TrainingExample> examples, const TrainConfig& config)
{
    config.validate();
    if (examples.empty()) throw Error(Errc::EmptySplit, "no training examples");

    // Inputs are assembled once; conditioning errors surface before any update.
    std::vector<FeatureVector> inputs;
    inputs.reserve(examples.size());
    for (const auto& example : examples) {
        check_target(model, example);
        inputs.push_back(model.model_input(example.features, annotator_of(example)));
    }

    const std::size_t width = model.input_dim();
    const std::size_t classes = model.num_classes();
    const double decay = 1.0 - config.learning_rate * config.l2;
    auto weights = model.weights();
    auto bias = model.bias();

    SplitMix64 rng(config.seed);
    std::vector<std::size_t> order(examples.size());
    std::vector<double> dlogits;
    std::vector<double> batch_dlogits;
    std::vector<double> bias_step(classes);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        shuffle(std::span<std::size_t>(order), rng);

        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const double step = config.learning_rate / static_cast<double>(stop - start);

            // All dL/dz are taken at the pre-update parameters.
            batch_dlogits.clear();
            for (std::size_t k = start; k < stop; ++k) {
                example_terms(model, inputs[order[k]], examples[order[k]].target, dlogits);
                batch_dlogits.insert(batch_dlogits.end(), dlogits.begin(), dlogits.end());
            }

            if (config.l2 > 0.0)
                for (double& w : weights) w *= decay;
            std::fill(bias_step.begin(), bias_step.end(), 0.0);
            for (std::size_t k = start; k < stop; ++k) {
                const double* g = batch_dlogits.data() + (k - start) * classes;
                for (std::size_t c = 0; c < classes; ++c) {
                    bias_step[c] += g[c];
                    double* row = weights.data() + c * width;
                    for (const auto& [index, value] : inputs[order[k]].entries()) row[index] -= step * g[c] * value;
                }
            }
            for (std::size_t c = 0; c < classes; ++c) bias[c] -= step * bias_step[c];
        }
    }
    model.set_train_config(config);
}

std::vector<TrainingExample> make_examples(const Corpus& corpus, Split split, const FeatureSpace& space,
                                           TargetKind kind)
{
    const auto& schema = corpus.schema();
    std::vector<TrainingExample> examples;
    for (const AnnotatedSample* sample : corpus.split(split)) {
        FeatureVector features = featurize(sample->text, space);
        switch (kind) {
        case TargetKind::hard_majority:
            examples.push_back({std::move(features),
                                AnnotationDistribution::one_hot(schema.size(), majority_label(sample->annotations, schema)),
                                std::nullopt});
            break;
        case TargetKind::soft_distribution:
            examples.push_back({std::move(features), build_distribution(sample->annotations, schema), std::nullopt});
            break;
        case TargetKind::conditioned:
            for (const auto& a : sample->annotations)
                examples.push_back({features, AnnotationDistribution::one_hot(schema.size(), a.label), a.annotator_id});
            break;
        }
    }
    return examples;
}

SoftmaxClassifier train(const Corpus& corpus, const FeatureSpace& space, TargetKind kind, const TrainConfig& config)
{
    config.validate();
    space.validate();
    auto examples = make_examples(corpus, Split::train, space, kind);
    if (examples.empty()) throw Error(Errc::EmptySplit, "corpus has no train samples");

    std::vector<std::string> annotators;
    if (kind == TargetKind::conditioned) {
        std::set<std::string> seen;
        for (const auto& e : examples) seen.insert(*e.annotator);
        annotators.assign(seen.begin(), seen.end());
    }
    SoftmaxClassifier model(corpus.schema(), space, std::move(annotators));
    fit(model, examples, config);
    return model;
}

}  // namespace disagree
