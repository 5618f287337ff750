#include "disagree/ensemble.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <set>

#include <json.hpp>

#include "disagree/error.hpp"

namespace disagree {

std::size_t LabelStream::count(Split split) const noexcept
{
    return static_cast<std::size_t>(
        std::count_if(pairs.begin(), pairs.end(), [split](const Pair& p) { return p.split == split; }));
}

StreamMode parse_stream_mode(std::string_view token)
{
    if (token == "identified") return StreamMode::identified;
    if (token == "slots") return StreamMode::slots;
    throw Error(Errc::InvalidConfig, "unknown stream mode '" + std::string(token) + "'");
}

namespace {

void warn(std::vector<std::string>* warnings, std::string message)
{
    if (warnings) warnings->push_back(std::move(message));
    else std::cerr << "warning: " << message << '\n';
}

}  // namespace

std::vector<LabelStream> build_streams(const Corpus& corpus, StreamMode mode, std::vector<std::string>* warnings)
{
    std::vector<LabelStream> streams;
    if (mode == StreamMode::identified) {
        std::map<std::string, std::size_t> position;
        for (const auto& [annotator, count] : corpus.annotators()) {
            position.emplace(annotator, streams.size());
            streams.push_back({annotator, {}});
        }
        for (const auto& sample : corpus.samples())
            for (const auto& a : sample.annotations)
                streams[position.at(a.annotator_id)].pairs.push_back({sample.sample_id, a.label, sample.split});
    } else {
        std::size_t width = 0;
        for (const auto& sample : corpus.samples()) width = std::max(width, sample.annotations.size());
        for (std::size_t k = 0; k < width; ++k) streams.push_back({"slot_" + std::to_string(k), {}});
        for (const auto& sample : corpus.samples())
            for (std::size_t k = 0; k < sample.annotations.size(); ++k)
                streams[k].pairs.push_back({sample.sample_id, sample.annotations[k].label, sample.split});
    }

    std::vector<LabelStream> kept;
    for (auto& stream : streams) {
        if (stream.count(Split::train) == 0) {
            warn(warnings, "stream '" + stream.stream_id + "' has no training pairs and is excluded");
            continue;
        }
        kept.push_back(std::move(stream));
    }
    return kept;
}

// --- sub-models ------------------------------------------------------------

SubModel::SubModel(std::shared_ptr<const SoftmaxClassifier> model) : model_(std::move(model))
{
    if (!model_) throw Error(Errc::InvalidConfig, "null sub-model");
    if (model_->conditioned()) throw Error(Errc::ConditioningMismatch, "standalone sub-model must be unconditioned");
}

SubModel::SubModel(std::shared_ptr<const SoftmaxClassifier> conditioned, std::string annotator)
    : model_(std::move(conditioned)), annotator_(std::move(annotator))
{
    if (!model_) throw Error(Errc::InvalidConfig, "null sub-model");
    model_->annotator_column(*annotator_);  // UnknownAnnotator / mismatch surface here, not at predict time
}

LabelIndex SubModel::predict_label(const FeatureVector& features) const
{
    if (annotator_) return disagree::predict_label(*model_, features, std::string_view(*annotator_));
    return disagree::predict_label(*model_, features);
}

std::uint64_t stream_seed(std::uint64_t seed, std::string_view stream_id) noexcept
{
    return seed ^ fnv1a64(stream_id);
}

double stream_accuracy(const SubModel& model, const LabelStream& stream, const Corpus& corpus, Split split,
                       const FeatureSpace& space)
{
    std::size_t total = 0;
    std::size_t correct = 0;
    for (const auto& pair : stream.pairs) {
        if (pair.split != split) continue;
        ++total;
        if (model.predict_label(featurize(corpus.find(pair.sample_id)->text, space)) == pair.label) ++correct;
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

std::vector<TrainingExample> stream_examples(const LabelStream& stream, const Corpus& corpus, const FeatureSpace& space)
{
    std::vector<TrainingExample> examples;
    for (const auto& pair : stream.pairs) {
        if (pair.split != Split::train) continue;
        examples.push_back({featurize(corpus.find(pair.sample_id)->text, space),
                            AnnotationDistribution::one_hot(corpus.schema().size(), pair.label), std::nullopt});
    }
    return examples;
}

}  // namespace

std::vector<SubModelRecord> train_ensemble(const Corpus& corpus, StreamMode mode, const FeatureSpace& space,
                                           const TrainConfig& config, std::vector<std::string>* warnings)
{
    config.validate();
    space.validate();
    const auto streams = build_streams(corpus, mode, warnings);
    if (streams.empty()) throw Error(Errc::EmptySplit, "no label streams with training pairs");

    // Sub-models are independent; results are collected in stream order.
    std::vector<std::future<SubModelRecord>> jobs;
    for (const auto& stream : streams) {
        jobs.push_back(std::async(std::launch::async, [&corpus, &space, &config, &stream] {
            TrainConfig local = config;
            local.seed = stream_seed(config.seed, stream.stream_id);
            auto model = std::make_shared<SoftmaxClassifier>(corpus.schema(), space);
            fit(*model, stream_examples(stream, corpus, space), local);
            SubModel sub(std::move(model));
            const double accuracy = stream_accuracy(sub, stream, corpus, Split::validation, space);
            return SubModelRecord{stream.stream_id, std::move(sub), accuracy};
        }));
    }
    std::vector<SubModelRecord> records;
    for (auto& job : jobs) records.push_back(job.get());
    return records;
}

std::vector<SubModelRecord> train_conditioned_ensemble(const Corpus& corpus, const FeatureSpace& space,
                                                       const TrainConfig& config, std::vector<std::string>* warnings)
{
    const auto streams = build_streams(corpus, StreamMode::identified, warnings);
    if (streams.empty()) throw Error(Errc::EmptySplit, "no annotators with training pairs");
    auto model = std::make_shared<const SoftmaxClassifier>(train(corpus, space, TargetKind::conditioned, config));

    std::vector<SubModelRecord> records;
    for (const auto& stream : streams) {
        SubModel sub(model, stream.stream_id);
        const double accuracy = stream_accuracy(sub, stream, corpus, Split::validation, space);
        records.push_back({stream.stream_id, std::move(sub), accuracy});
    }
    return records;
}

// --- selection and voting --------------------------------------------------

EnsembleModel::EnsembleModel(std::vector<SubModelRecord> selected, const FeatureSpace& space)
    : records_(std::move(selected)), space_(space)
{
    if (records_.size() < kMinEnsembleSize)
        throw Error(Errc::InvalidSelection, "an ensemble needs at least " + std::to_string(kMinEnsembleSize)
                                                + " sub-models, got " + std::to_string(records_.size()));
    const auto& schema = records_.front().model.model().schema();
    for (const auto& r : records_)
        if (!(r.model.model().schema() == schema))
            throw Error(Errc::InvalidSelection, "sub-model '" + r.stream_id + "' uses a different schema");
}

EnsembleModel select_top_n(std::span<const SubModelRecord> records, std::size_t n, const FeatureSpace& space)
{
    if (n < kMinEnsembleSize || n > records.size())
        throw Error(Errc::InvalidSelection, "n = " + std::to_string(n) + " outside [" + std::to_string(kMinEnsembleSize)
                                                + ", " + std::to_string(records.size()) + "]");
    std::vector<const SubModelRecord*> ranked;
    for (const auto& r : records) ranked.push_back(&r);
    std::sort(ranked.begin(), ranked.end(), [](const SubModelRecord* a, const SubModelRecord* b) {
        if (a->validation_accuracy != b->validation_accuracy) return a->validation_accuracy > b->validation_accuracy;
        return a->stream_id < b->stream_id;
    });
    std::vector<SubModelRecord> selected;
    for (std::size_t i = 0; i < n; ++i) selected.push_back(*ranked[i]);
    return EnsembleModel(std::move(selected), space);
}

AnnotationDistribution aggregate(std::span<const LabelIndex> votes, const LabelSchema& schema)
{
    if (votes.empty()) throw Error(Errc::EmptyVotes, "no votes to aggregate");
    std::vector<double> counts(schema.size(), 0.0);
    for (LabelIndex v : votes) {
        if (v >= schema.size()) throw Error(Errc::SchemaMismatch, "vote " + std::to_string(v) + " out of range");
        counts[v] += 1.0;
    }
    const double total = static_cast<double>(votes.size());
    for (double& c : counts) c /= total;
    return AnnotationDistribution(std::move(counts));
}

AnnotationDistribution predict(const EnsembleModel& ensemble, const FeatureVector& features)
{
    std::vector<LabelIndex> votes;
    votes.reserve(ensemble.n());
    for (const auto& r : ensemble.records()) votes.push_back(r.model.predict_label(features));
    return aggregate(votes, ensemble.schema());
}

AnnotationDistribution predict(const EnsembleModel& ensemble, std::string_view text)
{
    return predict(ensemble, featurize(text, ensemble.space()));
}

std::vector<SweepRow> sweep_top_n(std::span<const SubModelRecord> records, const Corpus& corpus,
                                  const FeatureSpace& space, std::size_t n_min, std::size_t n_max)
{
    if (n_min < kMinEnsembleSize || n_max > records.size() || n_min > n_max)
        throw Error(Errc::InvalidSelection, "sweep range [" + std::to_string(n_min) + ", " + std::to_string(n_max)
                                                + "] outside [3, " + std::to_string(records.size()) + "]");
    const auto test = corpus.split(Split::test);
    std::vector<FeatureVector> features;
    features.reserve(test.size());
    for (const AnnotatedSample* s : test) features.push_back(featurize(s->text, space));

    std::vector<SweepRow> rows;
    for (std::size_t n = n_min; n <= n_max; ++n) {
        const auto ensemble = select_top_n(records, n, space);
        std::vector<Prediction> predictions;
        for (std::size_t i = 0; i < test.size(); ++i)
            predictions.push_back({test[i]->sample_id, predict(ensemble, features[i])});
        rows.push_back({n, evaluate(predictions, corpus, Split::test).mean});
    }
    return rows;
}

void write_sweep_csv(std::span<const SweepRow> rows, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out << "n,mean_cross_entropy\n";
    for (const auto& row : rows) {
        char buffer[32];
        const auto end = std::to_chars(buffer, buffer + sizeof buffer, row.mean_cross_entropy,
                                       std::chars_format::general, 17).ptr;
        out << row.n << ',' << std::string_view(buffer, end - buffer) << '\n';
    }
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

// --- manifest --------------------------------------------------------------

namespace {

constexpr std::string_view kManifestFormat = "disagree.ensemble.v1";

std::string file_stem_for(std::string_view stream_id)
{
    std::string out;
    for (unsigned char c : stream_id)
        out.push_back(std::isalnum(c) || c == '-' || c == '_' ? static_cast<char>(c) : '_');
    return out;
}

}  // namespace

void save_manifest(std::span<const SubModelRecord> records, std::size_t selected_n,
                   const std::filesystem::path& manifest_path)
{
    if (records.empty()) throw Error(Errc::InvalidSelection, "no records to save");
    if (selected_n < kMinEnsembleSize || selected_n > records.size())
        throw Error(Errc::InvalidSelection, "selected n = " + std::to_string(selected_n) + " out of range");
    const auto dir = manifest_path.parent_path();
    if (!dir.empty()) std::filesystem::create_directories(dir);

    const bool conditioned = records.front().model.is_virtual();
    nlohmann::ordered_json manifest;
    manifest["format"] = kManifestFormat;
    manifest["kind"] = conditioned ? "conditioned" : "per_stream";
    manifest["selected_n"] = selected_n;
    if (conditioned) {
        const std::string file = "conditioned.model.json";
        records.front().model.model().save(dir / file);
        manifest["model"] = file;
    }
    auto& streams = manifest["streams"] = nlohmann::ordered_json::array();
    std::set<std::string> used_files;
    for (const auto& r : records) {
        if (r.model.is_virtual() != conditioned)
            throw Error(Errc::InvalidSelection, "cannot mix virtual and standalone sub-models in one manifest");
        nlohmann::ordered_json entry;
        entry["stream_id"] = r.stream_id;
        if (conditioned) {
            if (r.model.shared_model() != records.front().model.shared_model())
                throw Error(Errc::InvalidSelection, "virtual sub-models must share one conditioned model");
            entry["annotator"] = *r.model.annotator();
        } else {
            std::string file = "submodel_" + file_stem_for(r.stream_id) + ".model.json";
            for (int suffix = 1; !used_files.insert(file).second; ++suffix)
                file = "submodel_" + file_stem_for(r.stream_id) + "_" + std::to_string(suffix) + ".model.json";
            r.model.model().save(dir / file);
            entry["model"] = file;
        }
        entry["validation_accuracy"] = r.validation_accuracy;
        streams.push_back(std::move(entry));
    }

    std::ofstream out(manifest_path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + manifest_path.string());
    out << manifest.dump(2) << '\n';
    if (!out) throw Error(Errc::IoError, "failed writing " + manifest_path.string());
}

LoadedEnsemble load_manifest(const std::filesystem::path& manifest_path)
{
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + manifest_path.string());
    const auto dir = manifest_path.parent_path();
    try {
        const auto j = nlohmann::json::parse(in);
        if (j.at("format").get<std::string>() != kManifestFormat)
            throw Error(Errc::FormatError, "unsupported manifest format");
        LoadedEnsemble loaded;
        loaded.selected_n = j.at("selected_n").get<std::size_t>();
        const bool conditioned = j.at("kind").get<std::string>() == "conditioned";
        std::shared_ptr<const SoftmaxClassifier> shared;
        if (conditioned)
            shared = std::make_shared<const SoftmaxClassifier>(
                SoftmaxClassifier::load(dir / j.at("model").get<std::string>()));
        for (const auto& entry : j.at("streams")) {
            const auto stream_id = entry.at("stream_id").get<std::string>();
            const double accuracy = entry.at("validation_accuracy").get<double>();
            if (conditioned) {
                loaded.records.push_back({stream_id, SubModel(shared, entry.at("annotator").get<std::string>()), accuracy});
            } else {
                auto model = std::make_shared<const SoftmaxClassifier>(
                    SoftmaxClassifier::load(dir / entry.at("model").get<std::string>()));
                loaded.records.push_back({stream_id, SubModel(std::move(model)), accuracy});
            }
        }
        if (loaded.records.empty()) throw Error(Errc::FormatError, "manifest lists no streams");
        loaded.space = loaded.records.front().model.model().space();
        for (const auto& r : loaded.records)
            if (!(r.model.model().space() == loaded.space))
                throw Error(Errc::FormatError, "sub-models disagree on the feature space");
        return loaded;
    } catch (const Error& e) {
        throw Error(e.code(), manifest_path.string() + ": " + e.message());
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::FormatError, manifest_path.string() + ": " + e.what());
    }
}

}  // namespace disagree
