#include "disagree/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "disagree/error.hpp"

namespace disagree {

double cross_entropy(const AnnotationDistribution& p, const AnnotationDistribution& q)
{
    if (p.size() != q.size())
        throw Error(Errc::DimensionMismatch,
                    "distributions of length " + std::to_string(p.size()) + " and " + std::to_string(q.size()));
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] == 0.0) continue;
        total -= p[i] * std::log(std::max(q[i], 1e-12));
    }
    return total;
}

double entropy(const AnnotationDistribution& p)
{
    double total = 0.0;
    for (double v : p.probs())
        if (v > 0.0) total -= v * std::log(v);
    return total;
}

nlohmann::ordered_json EvalReport::to_json() const
{
    nlohmann::ordered_json j;
    j["mean_cross_entropy"] = mean;
    j["accuracy_vs_majority"] = accuracy_vs_majority;
    j["samples"] = per_sample.size();
    auto& rows = j["per_sample"] = nlohmann::ordered_json::array();
    for (const auto& row : per_sample) rows.push_back({{"id", row.sample_id}, {"cross_entropy", row.cross_entropy}});
    return j;
}

EvalReport evaluate(std::span<const Prediction> predictions, const Corpus& corpus, Split split)
{
    std::map<std::string_view, const AnnotationDistribution*> by_id;
    for (const auto& p : predictions) {
        if (!by_id.emplace(p.sample_id, &p.distribution).second)
            throw Error(Errc::AlignmentError, "two predictions for sample '" + p.sample_id + "'");
    }

    const auto samples = corpus.split(split);
    if (samples.empty()) throw Error(Errc::EmptySplit, "no samples in the " + std::string(to_string(split)) + " split");
    if (predictions.size() != samples.size())
        throw Error(Errc::AlignmentError, std::to_string(predictions.size()) + " predictions for "
                                              + std::to_string(samples.size()) + " samples");

    EvalReport report;
    std::size_t correct = 0;
    double sum = 0.0;
    for (const AnnotatedSample* sample : samples) {
        const auto it = by_id.find(sample->sample_id);
        if (it == by_id.end()) throw Error(Errc::AlignmentError, "no prediction for sample '" + sample->sample_id + "'");
        const auto target = build_distribution(sample->annotations, corpus.schema());
        const double ce = cross_entropy(target, *it->second);
        report.per_sample.push_back({sample->sample_id, ce});
        sum += ce;
        if (it->second->argmax() == majority_label(sample->annotations, corpus.schema())) ++correct;
    }
    const double count = static_cast<double>(samples.size());
    report.mean = sum / count;
    report.accuracy_vs_majority = static_cast<double>(correct) / count;
    return report;
}

// --- binomial tail ---------------------------------------------------------

namespace {

double log_pmf(std::uint64_t i, std::uint64_t n, double log_p, double log_q)
{
    const double ni = static_cast<double>(n);
    const double ii = static_cast<double>(i);
    return std::lgamma(ni + 1.0) - std::lgamma(ii + 1.0) - std::lgamma(ni - ii + 1.0) + ii * log_p
         + (ni - ii) * log_q;
}

// log sum_{i in [lo, hi]} pmf(i), via log-sum-exp around the largest term.
double log_range_mass(std::uint64_t lo, std::uint64_t hi, std::uint64_t n, double log_p, double log_q)
{
    std::vector<double> terms;
    terms.reserve(hi - lo + 1);
    for (std::uint64_t i = lo; i <= hi; ++i) terms.push_back(log_pmf(i, n, log_p, log_q));
    const double top = *std::max_element(terms.begin(), terms.end());
    double sum = 0.0;
    for (double t : terms) sum += std::exp(t - top);
    return top + std::log(sum);
}

}  // namespace

double log_binomial_pvalue(std::uint64_t k, std::uint64_t n, double p0)
{
    if (!(p0 > 0.0 && p0 < 1.0)) throw Error(Errc::DomainError, "null probability must lie in (0, 1)");
    if (k > n) throw Error(Errc::DomainError, "k = " + std::to_string(k) + " exceeds n = " + std::to_string(n));
    if (k == 0) return 0.0;

    const double log_p = std::log(p0);
    const double log_q = std::log1p(-p0);
    if (static_cast<double>(k) >= static_cast<double>(n) * p0) {
        // Upper tail is the small one: sum it directly.
        return std::min(0.0, log_range_mass(k, n, n, log_p, log_q));
    }
    // Upper tail holds most of the mass: 1 - P(X <= k - 1).
    return std::log1p(-std::exp(log_range_mass(0, k - 1, n, log_p, log_q)));
}

double binomial_pvalue(std::uint64_t k, std::uint64_t n, double p0)
{
    return std::clamp(std::exp(log_binomial_pvalue(k, n, p0)), 0.0, 1.0);
}

// --- preference test -------------------------------------------------------

TestResult preference_test(const PreferenceCounts& counts, double null_prob)
{
    const std::uint64_t total = counts.total();
    if (total == 0) throw Error(Errc::DomainError, "no survey responses to test");

    TestResult result;
    result.null_prob = null_prob;
    const std::array<std::pair<const char*, std::uint64_t>, 3> categories{{
        {"Baseline", counts.baseline},
        {"Multi-label model", counts.multi_label},
        {"No difference", counts.no_difference},
    }};
    for (std::size_t i = 0; i < categories.size(); ++i) {
        const auto [name, count] = categories[i];
        result.per_category[i] = {name, count, static_cast<double>(count) / static_cast<double>(total),
                                  binomial_pvalue(count, total, null_prob)};
    }
    return result;
}

std::string format_p_value(double p)
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(4) << (p < 5e-5 ? 0.0 : p);
    return out.str();
}

nlohmann::ordered_json TestResult::to_json() const
{
    nlohmann::ordered_json j;
    j["null_prob"] = null_prob;
    auto& rows = j["categories"] = nlohmann::ordered_json::array();
    std::uint64_t total = 0;
    for (const auto& c : per_category) {
        total += c.count;
        rows.push_back({{"preference", c.name},
                        {"count", c.count},
                        {"proportion", c.proportion},
                        {"p_value", c.p_value},
                        {"p_value_rounded", format_p_value(c.p_value)}});
    }
    j["total"] = total;
    return j;
}

std::string TestResult::to_table() const
{
    std::ostringstream out;
    out << std::left << std::setw(20) << "Preference" << std::right << std::setw(8) << "Counts" << std::setw(12)
        << "Proportion" << std::setw(10) << "P-value" << '\n';
    for (const auto& c : per_category) {
        out << std::left << std::setw(20) << c.name << std::right << std::setw(8) << c.count << std::setw(12)
            << std::fixed << std::setprecision(4) << c.proportion << std::setw(10) << format_p_value(c.p_value)
            << '\n';
    }
    return out.str();
}

}  // namespace disagree
