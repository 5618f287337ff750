#include <doctest.h>

#include <cmath>

#include "disagree/error.hpp"
#include "disagree/eval.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "test_paths.hpp"

using namespace disagree;

TEST_CASE("cross entropy and entropy")
{
    const AnnotationDistribution p({0.6, 0.2, 0.2});
    const AnnotationDistribution q({0.5, 0.25, 0.25});
    CHECK(cross_entropy(p, q) == doctest::Approx(-(0.6 * std::log(0.5) + 0.4 * std::log(0.25))));
    CHECK(cross_entropy(p, p) == doctest::Approx(entropy(p)));
    CHECK(entropy(AnnotationDistribution::one_hot(3, 1)) == 0.0);
    // clamped: a confident miss costs -ln(1e-12)
    CHECK(cross_entropy(AnnotationDistribution::one_hot(2, 0), AnnotationDistribution::one_hot(2, 1))
          == doctest::Approx(-std::log(1e-12)));
    CHECK_THROWS_AS(cross_entropy(p, AnnotationDistribution::uniform(2)), Error);
}

TEST_CASE("property: Gibbs inequality H(p, q) >= H(p)")
{
    SplitMix64 rng(4);
    for (int i = 0; i < 1000; ++i) {
        const std::size_t classes = 2 + rng.below(5);
        const auto p = gen::distribution(rng, classes);
        const auto q = gen::distribution(rng, classes);
        REQUIRE(cross_entropy(p, q) >= entropy(p) - 1e-12);
    }
}

TEST_CASE("evaluate aligns predictions with the split")
{
    const auto corpus = ingest(fixture("hate_speech_slots.csv"), CorpusShape::slots, LabelSchema::hate_speech());
    const AnnotationDistribution guess({0.2, 0.3, 0.5});
    const auto report = evaluate(std::vector<Prediction>{{"t4", guess}}, corpus, Split::test);
    REQUIRE(report.per_sample.size() == 1);
    const double expected = -(0.4 * std::log(0.3) + 0.6 * std::log(0.5));
    CHECK(report.mean == doctest::Approx(expected));
    CHECK(report.accuracy_vs_majority == 1.0);
    CHECK(report.to_json()["mean_cross_entropy"].get<double>() == doctest::Approx(expected));

    CHECK_THROWS_AS(evaluate(std::vector<Prediction>{}, corpus, Split::test), Error);
    CHECK_THROWS_AS(evaluate(std::vector<Prediction>{{"t4", guess}, {"t4", guess}}, corpus, Split::test), Error);
    CHECK_THROWS_AS(evaluate(std::vector<Prediction>{{"t1", guess}}, corpus, Split::test), Error);
}

TEST_CASE("binomial tail against a 50-digit oracle")
{
    const double p0s[] = {0.1, 1.0 / 3.0, 0.5};
    for (double p0 : p0s) {
        for (unsigned n : {1u, 7u, 60u, 360u}) {
            for (unsigned k = 0; k <= n; k += std::max(1u, n / 13)) {
                const auto exact = oracle::binomial_upper_tail(k, n, oracle::Decimal(p0));
                const double got = binomial_pvalue(k, n, p0);
                if (exact > oracle::Decimal(1e-300)) {
                    const double rel = static_cast<double>(abs(oracle::Decimal(got) - exact) / exact);
                    REQUIRE_MESSAGE(rel < 1e-10, "k=" << k << " n=" << n << " p0=" << p0);
                }
                const double log_exact = static_cast<double>(log(exact));
                REQUIRE(std::abs(log_binomial_pvalue(k, n, p0) - log_exact) <= 1e-10 * std::max(1.0, std::abs(log_exact)));
            }
        }
    }
    CHECK(binomial_pvalue(0, 10, 0.3) == 1.0);
    CHECK_THROWS_AS(binomial_pvalue(11, 10, 0.3), Error);
    CHECK_THROWS_AS(binomial_pvalue(1, 10, 0.0), Error);
    CHECK_THROWS_AS(binomial_pvalue(1, 10, 1.0), Error);
}

TEST_CASE("property: binomial tail is monotone in k")
{
    SplitMix64 rng(12);
    for (int i = 0; i < 100; ++i) {
        const std::uint64_t n = 1 + rng.below(400);
        const double p0 = 0.05 + 0.9 * rng.uniform();
        double previous = 1.0;
        for (std::uint64_t k = 0; k <= n; ++k) {
            const double p = binomial_pvalue(k, n, p0);
            REQUIRE(p <= previous * (1 + 1e-12));
            REQUIRE(p >= 0.0);
            previous = p;
        }
    }
}

TEST_CASE("preference tests on the reference survey counts")
{
    const auto hate = preference_test({118, 198, 44});
    CHECK(hate.per_category[0].name == "Baseline");
    CHECK(hate.per_category[0].proportion == doctest::Approx(0.3278).epsilon(5e-5 / 0.3278));
    CHECK(hate.per_category[1].proportion == 0.55);
    CHECK(hate.per_category[0].p_value == doctest::Approx(0.6078).epsilon(0.01 / 0.6078));
    CHECK(hate.per_category[1].p_value < 1e-6);
    CHECK(hate.per_category[2].p_value >= 0.999);

    const auto abuse = preference_test({152, 194, 14});
    CHECK(format_p_value(abuse.per_category[0].p_value) == "0.0003");
    CHECK(abuse.per_category[1].p_value < 1e-6);
    CHECK(abuse.per_category[2].p_value >= 0.999);

    const auto table = abuse.to_table();
    CHECK(table.find("Multi-label model") != std::string::npos);
    CHECK(table.find("0.5389") != std::string::npos);
    CHECK(abuse.to_json()["categories"].size() == 3);

    CHECK_THROWS_AS(preference_test({0, 0, 0}), Error);
    CHECK_THROWS_AS(preference_test({1, 1, 1}, 1.5), Error);
}

TEST_CASE("p-value formatting")
{
    CHECK(format_p_value(0.60783) == "0.6078");
    CHECK(format_p_value(4.9e-5) == "0.0000");
    CHECK(format_p_value(1.0) == "1.0000");
}
