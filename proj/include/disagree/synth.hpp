#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "disagree/labels.hpp"

namespace disagree {

/// Seeded generator for a three-class (Hate, Offensive, Normal) corpus with
/// structured annotator disagreement.
///
/// Each sample has a latent class c and a blend partner c' != c with a blend
/// level m drawn from `blend_levels`. Its text mixes `content_words` words
/// from class-specific vocabularies (each word from c' with probability m)
/// with `neutral_words` words from a shared vocabulary. Every annotator first
/// perceives c' with probability m (c otherwise), then reports a label drawn
/// from its confusion-matrix row for the perceived class.
struct SynthConfig {
    std::size_t samples = 5000;
    std::uint64_t seed = 7;
    std::size_t vocabulary_per_class = 40;
    std::size_t neutral_vocabulary = 60;
    std::size_t content_words = 10;
    std::size_t neutral_words = 4;
    std::vector<double> class_prior = {0.25, 0.30, 0.45};
    std::vector<double> blend_levels = {0.0, 0.15, 0.3, 0.45};
    double train_fraction = 0.7;
    double validation_fraction = 0.15;
    /// One row-stochastic 3x3 matrix per annotator: confusion[a][perceived][reported].
    std::vector<std::vector<std::vector<double>>> confusion = default_confusion();

    /// Five annotators: careful, lenient, strict, noisy, middle-leaning.
    static std::vector<std::vector<std::vector<double>>> default_confusion();
};

/// Annotators are named ann_0..ann_{A-1}; every sample carries all of them.
Corpus synthesize(const SynthConfig& config);

}  // namespace disagree
