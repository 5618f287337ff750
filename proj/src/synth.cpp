#include "disagree/synth.hpp"

#include <cmath>
#include <span>
#include <string>

#include "disagree/error.hpp"
#include "disagree/rng.hpp"

namespace disagree {

std::vector<std::vector<std::vector<double>>> SynthConfig::default_confusion()
{
    return {
        {{0.90, 0.07, 0.03}, {0.05, 0.90, 0.05}, {0.02, 0.08, 0.90}},  // careful
        {{0.60, 0.30, 0.10}, {0.05, 0.70, 0.25}, {0.01, 0.09, 0.90}},  // lenient
        {{0.95, 0.05, 0.00}, {0.25, 0.70, 0.05}, {0.05, 0.25, 0.70}},  // strict
        {{0.70, 0.15, 0.15}, {0.15, 0.70, 0.15}, {0.15, 0.15, 0.70}},  // noisy
        {{0.75, 0.20, 0.05}, {0.10, 0.80, 0.10}, {0.05, 0.20, 0.75}},  // middle-leaning
    };
}

namespace {

std::size_t draw(std::span<const double> weights, SplitMix64& rng)
{
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return i;
    }
    return weights.size() - 1;
}

void validate(const SynthConfig& config)
{
    constexpr std::size_t kClasses = 3;
    if (config.samples == 0) throw Error(Errc::InvalidConfig, "synthetic corpus needs samples");
    if (config.class_prior.size() != kClasses) throw Error(Errc::InvalidConfig, "class prior needs 3 entries");
    if (config.blend_levels.empty()) throw Error(Errc::InvalidConfig, "no blend levels");
    if (config.confusion.empty()) throw Error(Errc::InvalidConfig, "no annotators");
    if (config.vocabulary_per_class == 0 || config.content_words == 0)
        throw Error(Errc::InvalidConfig, "empty class vocabulary");
    if (config.train_fraction < 0 || config.validation_fraction < 0
        || config.train_fraction + config.validation_fraction > 1.0)
        throw Error(Errc::InvalidConfig, "split fractions must be non-negative and sum to at most 1");
    for (const auto& matrix : config.confusion) {
        if (matrix.size() != kClasses) throw Error(Errc::InvalidConfig, "confusion matrix must be 3x3");
        for (const auto& row : matrix) {
            double sum = 0.0;
            for (double v : row) sum += v;
            if (row.size() != kClasses || std::abs(sum - 1.0) > 1e-9)
                throw Error(Errc::InvalidConfig, "confusion rows must be 3 probabilities summing to 1");
        }
    }
}

}  // namespace

Corpus synthesize(const SynthConfig& config)
{
    validate(config);
    const auto schema = LabelSchema::hate_speech();
    SplitMix64 rng(config.seed);

    std::vector<AnnotatedSample> samples;
    samples.reserve(config.samples);
    const std::size_t width = std::to_string(config.samples - 1).size();
    for (std::size_t s = 0; s < config.samples; ++s) {
        const std::size_t cls = draw(config.class_prior, rng);
        const std::size_t partner = (cls + 1 + rng.below(2)) % 3;
        const double blend = config.blend_levels[rng.below(config.blend_levels.size())];

        std::string text;
        const auto add_word = [&text](const std::string& word) {
            if (!text.empty()) text.push_back(' ');
            text += word;
        };
        for (std::size_t w = 0; w < config.content_words; ++w) {
            const std::size_t source = rng.uniform() < blend ? partner : cls;
            add_word("c" + std::to_string(source) + "w" + std::to_string(rng.below(config.vocabulary_per_class)));
            if (config.neutral_vocabulary > 0 && w < config.neutral_words)
                add_word("n" + std::to_string(rng.below(config.neutral_vocabulary)));
        }

        AnnotatedSample sample;
        std::string id = std::to_string(s);
        sample.sample_id = "s" + std::string(width - id.size(), '0') + id;
        sample.text = std::move(text);
        for (std::size_t a = 0; a < config.confusion.size(); ++a) {
            const std::size_t perceived = rng.uniform() < blend ? partner : cls;
            sample.annotations.push_back({"ann_" + std::to_string(a), draw(config.confusion[a][perceived], rng)});
        }
        const double u = rng.uniform();
        sample.split = u < config.train_fraction                               ? Split::train
                     : u < config.train_fraction + config.validation_fraction ? Split::validation
                                                                               : Split::test;
        samples.push_back(std::move(sample));
    }
    return Corpus(schema, std::move(samples));
}

}  // namespace disagree
