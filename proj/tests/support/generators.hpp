#pragma once

// Hand-rolled generators for property tests, all driven by SplitMix64 so
// every failing case is reproducible from its seed.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "disagree/labels.hpp"
#include "disagree/rng.hpp"
#include "disagree/softmax.hpp"

namespace gen {

inline double uniform(disagree::SplitMix64& rng, double lo, double hi)
{
    return lo + (hi - lo) * rng.uniform();
}

inline std::vector<disagree::Annotation> annotations(disagree::SplitMix64& rng, std::size_t classes,
                                                     std::size_t max_count)
{
    const std::size_t count = 1 + rng.below(max_count);
    std::vector<disagree::Annotation> out;
    for (std::size_t i = 0; i < count; ++i)
        out.push_back({"a" + std::to_string(i), static_cast<disagree::LabelIndex>(rng.below(classes))});
    return out;
}

/// Random distribution; one in four is one-hot, some entries exactly zero.
inline disagree::AnnotationDistribution distribution(disagree::SplitMix64& rng, std::size_t classes)
{
    if (rng.below(4) == 0) return disagree::AnnotationDistribution::one_hot(classes, rng.below(classes));
    std::vector<double> raw(classes);
    double total = 0.0;
    for (auto& v : raw) {
        v = rng.below(5) == 0 ? 0.0 : rng.uniform() + 1e-3;
        total += v;
    }
    if (total == 0.0) return disagree::AnnotationDistribution::uniform(classes);
    for (auto& v : raw) v /= total;
    // fold rounding residue into the largest entry
    double sum = 0.0;
    for (double v : raw) sum += v;
    *std::max_element(raw.begin(), raw.end()) += 1.0 - sum;
    return disagree::AnnotationDistribution(raw);
}

inline disagree::LabelSchema schema(std::size_t classes)
{
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < classes; ++i) labels.push_back("L" + std::to_string(i));
    return disagree::LabelSchema("generated", labels);
}

struct GradientInstance {
    disagree::SoftmaxClassifier model;
    std::vector<disagree::TrainingExample> batch;
    double l2;
};

/// Dense random features over `feature_dim` inputs, parameters in [-1, 1].
/// With annotators > 0 the model is conditioned and every example names one.
inline GradientInstance gradient_instance(disagree::SplitMix64& rng, std::size_t feature_dim, std::size_t classes,
                                          std::size_t examples, std::size_t annotators)
{
    std::vector<std::string> index;
    for (std::size_t a = 0; a < annotators; ++a) index.push_back("ann" + std::to_string(a));
    disagree::SoftmaxClassifier model(schema(classes), disagree::FeatureSpace{}, feature_dim, index);
    for (double& w : model.weights()) w = uniform(rng, -1.0, 1.0);
    for (double& b : model.bias()) b = uniform(rng, -1.0, 1.0);

    std::vector<disagree::TrainingExample> batch;
    for (std::size_t e = 0; e < examples; ++e) {
        std::vector<disagree::FeatureVector::Entry> entries;
        for (std::size_t j = 0; j < feature_dim; ++j)
            if (rng.below(4) != 0) entries.emplace_back(j, uniform(rng, -1.0, 1.0));
        std::optional<std::string> annotator;
        if (annotators > 0) annotator = index[rng.below(annotators)];
        batch.push_back({disagree::FeatureVector(std::move(entries)), distribution(rng, classes), annotator});
    }
    const double l2_choices[] = {0.0, 1e-4, 0.05};
    return {std::move(model), std::move(batch), l2_choices[rng.below(3)]};
}

}  // namespace gen
