#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "disagree/labels.hpp"

namespace disagree {

/// -sum_i p_i ln max(q_i, 1e-12), in nats. Throws DimensionMismatch.
double cross_entropy(const AnnotationDistribution& p, const AnnotationDistribution& q);

/// -sum_i p_i ln p_i (0 ln 0 = 0).
double entropy(const AnnotationDistribution& p);

struct Prediction {
    std::string sample_id;
    AnnotationDistribution distribution;
};

struct EvalReport {
    struct Row {
        std::string sample_id;
        double cross_entropy;
    };
    std::vector<Row> per_sample;
    double mean = 0.0;
    double accuracy_vs_majority = 0.0;

    nlohmann::ordered_json to_json() const;
};

/// Scores predictions against the annotation distribution of every sample in
/// `split`, in corpus order. Each sample needs exactly one prediction
/// (AlignmentError otherwise).
EvalReport evaluate(std::span<const Prediction> predictions, const Corpus& corpus, Split split = Split::test);

// --- preference statistics -------------------------------------------------

/// Exact upper tail P(X >= k) for X ~ Binomial(n, p0). Terms are summed in
/// log space over whichever tail is shorter to reach from the mode; the
/// complement is used only when the upper tail is the larger one. Throws
/// DomainError unless k <= n and 0 < p0 < 1.
double binomial_pvalue(std::uint64_t k, std::uint64_t n, double p0);

/// Natural log of binomial_pvalue; stays finite where the tail underflows a double.
double log_binomial_pvalue(std::uint64_t k, std::uint64_t n, double p0);

struct PreferenceCounts {
    std::uint64_t baseline = 0;
    std::uint64_t multi_label = 0;
    std::uint64_t no_difference = 0;

    std::uint64_t total() const noexcept { return baseline + multi_label + no_difference; }

    friend bool operator==(const PreferenceCounts&, const PreferenceCounts&) = default;
};

struct TestResult {
    struct Category {
        std::string name;
        std::uint64_t count;
        double proportion;
        double p_value;
    };
    std::array<Category, 3> per_category;  // baseline, multi-label, no difference
    double null_prob = 1.0 / 3.0;

    nlohmann::ordered_json to_json() const;
    /// Plain-text table: Preference, Counts, Proportion (4 dp), P-value (4 dp).
    std::string to_table() const;
};

/// Per-category one-sided exact binomial test against `null_prob`.
/// Throws DomainError on a zero total.
TestResult preference_test(const PreferenceCounts& counts, double null_prob = 1.0 / 3.0);

/// Fixed 4-decimal rendering; values below 5e-5 print as 0.0000.
std::string format_p_value(double p);

}  // namespace disagree
