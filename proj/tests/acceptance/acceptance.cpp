// Acceptance suite: one PASS/FAIL line per criterion. Exit status is nonzero
// when any primary criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "disagree/ensemble.hpp"
#include "disagree/eval.hpp"
#include "disagree/prompts.hpp"
#include "disagree/softmax.hpp"
#include "disagree/survey.hpp"
#include "disagree/synth.hpp"
#include "generators.hpp"
#include "oracles.hpp"
#include "survey_support.hpp"
#include "test_paths.hpp"

using namespace disagree;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    bool primary;
    double time_limit_s;  // 0: no limit
    std::function<Outcome()> check;
};

std::string fixed(double v, int digits)
{
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

std::string sci(double v)
{
    std::ostringstream out;
    out << std::scientific << std::setprecision(2) << v;
    return out.str();
}

PreferenceCounts read_counts(const fs::path& path)
{
    const auto j = nlohmann::json::parse(slurp(path));
    return {j.at("baseline").get<std::uint64_t>(), j.at("multi_label").get<std::uint64_t>(),
            j.at("no_difference").get<std::uint64_t>()};
}

// --- criteria --------------------------------------------------------------

Outcome preference_table()
{
    struct Expected {
        const char* file;
        double proportions[3];
        double baseline_p, baseline_tol;
    };
    const Expected cases[] = {
        {"survey_counts_hate_speech.json", {0.3278, 0.5500, 0.1222}, 0.6078, 0.01},
        {"survey_counts_abusive_conversation.json", {0.4222, 0.5389, 0.0389}, 0.0003, 0.0005},
    };
    Outcome out{true, ""};
    for (const auto& c : cases) {
        const auto result = preference_test(read_counts(fixture(c.file)));
        for (int i = 0; i < 3; ++i)
            if (fixed(result.per_category[i].proportion, 4) != fixed(c.proportions[i], 4)) out.pass = false;
        const auto& cat = result.per_category;
        if (std::abs(cat[0].p_value - c.baseline_p) > c.baseline_tol) out.pass = false;
        if (!(cat[1].p_value < 1e-6)) out.pass = false;
        if (!(cat[2].p_value >= 0.999)) out.pass = false;
        out.detail += std::string(out.detail.empty() ? "" : "; ") + "props " + fixed(cat[0].proportion, 4) + "/"
                    + fixed(cat[1].proportion, 4) + "/" + fixed(cat[2].proportion, 4) + " p " + fixed(cat[0].p_value, 4)
                    + "/" + sci(cat[1].p_value) + "/" + fixed(cat[2].p_value, 4);
    }
    return out;
}

Outcome exact_binomial()
{
    // 200 cases: edges plus seeded draws over n <= 500 for each null.
    struct Case {
        unsigned k, n;
        double p0;
    };
    std::vector<Case> grid;
    const double nulls[] = {0.1, 1.0 / 3.0, 0.5};
    SplitMix64 rng(2024);
    for (double p0 : nulls) {
        for (unsigned n : {1u, 360u, 500u}) {
            grid.push_back({0, n, p0});
            grid.push_back({n, n, p0});
        }
        grid.push_back({198, 360, p0});
        grid.push_back({118, 360, p0});
        grid.push_back({44, 360, p0});
        grid.push_back({14, 360, p0});
    }
    while (grid.size() < 200) {
        const unsigned n = 1 + static_cast<unsigned>(rng.below(500));
        grid.push_back({static_cast<unsigned>(rng.below(n + 1)), n, nulls[grid.size() % 3]});
    }

    double worst_direct = 0.0, worst_log = 0.0;
    std::size_t direct = 0, log_space = 0;
    for (const auto& c : grid) {
        const auto exact = oracle::binomial_upper_tail(c.k, c.n, oracle::Decimal(c.p0));
        if (exact >= oracle::Decimal(1e-290)) {
            const double got = binomial_pvalue(c.k, c.n, c.p0);
            worst_direct = std::max(worst_direct, static_cast<double>(abs(oracle::Decimal(got) - exact) / exact));
            ++direct;
        } else {
            // below the double range: compare the logarithm
            const double log_exact = static_cast<double>(log(exact));
            worst_log = std::max(worst_log, std::abs(log_binomial_pvalue(c.k, c.n, c.p0) - log_exact) / std::abs(log_exact));
            ++log_space;
        }
    }
    return {grid.size() == 200 && worst_direct < 1e-10 && worst_log < 1e-10,
            std::to_string(grid.size()) + " cases, max rel err " + sci(worst_direct) + " over " + std::to_string(direct)
                + " direct, " + sci(worst_log) + " in log space over " + std::to_string(log_space) + " underflowing tails"};
}

double norm_relative_error(std::span<const double> a, std::span<const double> b)
{
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

Outcome gradient_check()
{
    SplitMix64 rng(31337);
    double worst = 0.0;
    int conditioned = 0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t annotators = i % 2 == 0 ? 0 : 1 + rng.below(4);
        conditioned += annotators > 0;
        const auto inst = gen::gradient_instance(rng, 2 + rng.below(12), 2 + rng.below(4), 1 + rng.below(8), annotators);
        const auto analytic = loss_and_gradient(inst.model, inst.batch, inst.l2).gradient;
        const auto numeric = oracle::finite_difference(inst.model, inst.batch, inst.l2, 1e-5);
        worst = std::max({worst, norm_relative_error(analytic.weights, numeric.weights),
                          norm_relative_error(analytic.bias, numeric.bias)});
    }
    return {worst < 1e-5, "100 instances (" + std::to_string(conditioned) + " conditioned), max rel err " + sci(worst)};
}

const Corpus& synthetic_corpus()
{
    static const Corpus corpus = synthesize(SynthConfig{});
    return corpus;
}

Outcome soft_minimizer()
{
    const auto& corpus = synthetic_corpus();
    // Oracle: the mean annotation distribution, counted directly.
    std::vector<double> mean(3, 0.0);
    std::vector<TrainingExample> examples;
    const auto train = corpus.split(Split::train);
    for (const auto* s : train) {
        std::vector<double> counts(3, 0.0);
        for (const auto& a : s->annotations) counts[a.label] += 1.0;
        for (auto& c : counts) c /= static_cast<double>(s->annotations.size());
        for (std::size_t i = 0; i < 3; ++i) mean[i] += counts[i] / static_cast<double>(train.size());
        examples.push_back({FeatureVector(), build_distribution(s->annotations, corpus.schema()), std::nullopt});
    }
    const auto l1_after = [&](const TrainConfig& config) {
        SoftmaxClassifier model(corpus.schema(), FeatureSpace{}, 0, {});
        fit(model, examples, config);
        const auto q = predict_distribution(model, FeatureVector());
        double l1 = 0.0;
        for (std::size_t i = 0; i < 3; ++i) l1 += std::abs(q[i] - mean[i]);
        return l1;
    };
    TrainConfig full_batch;
    full_batch.learning_rate = 1.0;
    full_batch.epochs = 300;
    full_batch.batch_size = examples.size();
    full_batch.l2 = 0.0;
    const double exact = l1_after(full_batch);
    // reported only: constant-step mini-batch SGD hovers around the optimum
    const double defaults = l1_after(TrainConfig{});
    return {exact <= 1e-3, "L1 to mean target " + sci(exact) + " full batch"
                                                   + " (default mini-batch SGD, not gated: " + sci(defaults) + "), over "
                                                   + std::to_string(examples.size()) + " samples"};
}

Outcome disagreement_benefit()
{
    const auto& corpus = synthetic_corpus();
    TrainConfig config;
    config.seed = 1;
    const FeatureSpace space;
    const auto score = [&](TargetKind kind) {
        const auto model = train(corpus, space, kind, config);
        std::vector<Prediction> predictions;
        for (const auto* s : corpus.split(Split::test))
            predictions.push_back({s->sample_id, predict_distribution(model, featurize(s->text, space))});
        return evaluate(predictions, corpus, Split::test).mean;
    };
    const double hard = score(TargetKind::hard_majority);
    const double soft = score(TargetKind::soft_distribution);
    return {hard - soft >= 0.05, "hard " + fixed(hard, 4) + " soft " + fixed(soft, 4) + " nats, gap " + fixed(hard - soft, 4)};
}

Outcome ensemble_oracle()
{
    SplitMix64 rng(404);
    std::size_t vote_mismatches = 0, selection_mismatches = 0;
    FeatureSpace tiny;
    tiny.dimension = 16;
    auto model = std::make_shared<const SoftmaxClassifier>(LabelSchema::hate_speech(), tiny);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t classes = 2 + rng.below(6);
        std::vector<LabelIndex> votes(1 + rng.below(30));
        for (auto& v : votes) v = rng.below(classes);
        const auto d = aggregate(votes, gen::schema(classes));
        if (std::vector<double>(d.probs().begin(), d.probs().end()) != oracle::vote_shares(votes, classes))
            ++vote_mismatches;

        const std::size_t count = 3 + rng.below(12);
        std::vector<SubModelRecord> records;
        std::vector<std::pair<std::string, double>> flat;
        for (std::size_t i = 0; i < count; ++i) {
            // ids may repeat prefixes and accuracies tie often
            const std::string id = "a" + std::to_string(rng.below(3)) + "_" + std::to_string(i);
            const double accuracy = static_cast<double>(rng.below(5)) / 4.0;
            records.push_back({id, SubModel(model), accuracy});
            flat.emplace_back(id, accuracy);
        }
        const std::size_t n = 3 + rng.below(count - 2);
        std::vector<std::string> got;
        const auto chosen = select_top_n(records, n, tiny);
        for (const auto& r : chosen.records()) got.push_back(r.stream_id);
        if (got != oracle::top_n_ids(flat, n)) ++selection_mismatches;
    }

    SynthConfig small;
    small.samples = 400;
    small.seed = 19;
    const auto corpus = synthesize(small);
    FeatureSpace space;
    space.dimension = 1 << 12;
    TrainConfig config;
    config.epochs = 5;
    const auto records = train_ensemble(corpus, StreamMode::identified, space, config);
    const auto rows = sweep_top_n(records, corpus, space, kMinEnsembleSize, records.size());
    std::string ns;
    for (const auto& r : rows) ns += (ns.empty() ? "" : ",") + std::to_string(r.n);
    const bool sweep_ok = records.size() == 5 && ns == "3,4,5";
    return {vote_mismatches == 0 && selection_mismatches == 0 && sweep_ok,
            "1000 vote sets (" + std::to_string(vote_mismatches) + " mismatches), 1000 record lists ("
                + std::to_string(selection_mismatches) + " mismatches), sweep rows n=" + ns};
}

Outcome prompt_round_trip()
{
    std::size_t labels = 0, recovered = 0;
    const std::pair<LabelSchema, const char*> tasks[] = {{LabelSchema::hate_speech(), "hate_speech.txt"},
                                                          {LabelSchema::abusive_conversation(), "abusive_conversation.txt"}};
    for (const auto& [schema, file] : tasks) {
        const auto t = PromptTemplate::load(template_file(file));
        for (LabelIndex i = 0; i < schema.size(); ++i) {
            AnnotatedSample sample{"s", "example text", {{"slot_0", i}}, Split::train};
            ++labels;
            recovered += parse_response(build_record(sample, sample.annotations[0], t, schema).completion, schema) == i;
        }
    }

    const auto schema = LabelSchema::hate_speech();
    std::vector<AnnotatedSample> samples;
    for (int s = 0; s < 2; ++s) {
        AnnotatedSample sample{"p" + std::to_string(s), s == 0 ? "first \"quoted\" {text}" : "second, plain", {}, Split::train};
        for (std::size_t k = 0; k < 5; ++k) sample.annotations.push_back({"slot_" + std::to_string(k), (k + s) % 3});
        samples.push_back(sample);
    }
    const Corpus corpus(schema, samples);
    const auto t = PromptTemplate::load(template_file("hate_speech.txt"));
    const auto first = export_dataset(corpus, t, std::nullopt, scratch_path("prompts_a.jsonl"));
    const auto second = export_dataset(corpus, t, std::nullopt, scratch_path("prompts_b.jsonl"));
    const auto bytes = slurp(scratch_path("prompts_a.jsonl"));
    const auto lines = static_cast<std::size_t>(std::count(bytes.begin(), bytes.end(), '\n'));
    const bool stable = bytes == slurp(scratch_path("prompts_b.jsonl"));

    std::size_t parsed = 0;
    std::istringstream in(bytes);
    for (std::string line; std::getline(in, line);) {
        const auto j = nlohmann::json::parse(line);
        const auto* sample = corpus.find(j["sample_id"].get<std::string>());
        for (const auto& a : sample->annotations)
            if (a.annotator_id == j["annotator_id"].get<std::string>())
                parsed += parse_response(j["completion"].get<std::string>(), schema) == a.label;
    }
    return {recovered == labels && first == 10 && second == 10 && lines == 10 && stable && parsed == 10,
            std::to_string(recovered) + "/" + std::to_string(labels) + " labels recovered, " + std::to_string(lines)
                + " lines, " + (stable ? "byte-stable" : "NOT byte-stable")};
}

int run_shell(const std::string& command)
{
    const int raw = std::system(command.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Outcome determinism()
{
    const std::string cli = DISAGREE_CLI;
    const auto run_pipeline = [&](const fs::path& dir) {
        fs::remove_all(dir);
        fs::create_directories(dir);
        fs::copy_file(fixture("hate_speech_slots.csv"), dir / "input.csv");
        // relative paths so the embedded configs match across directories
        const std::string cd = "cd '" + dir.string() + "' && '" + cli + "' ";
        return run_shell(cd + "ingest --input input.csv --shape slots --out corpus.jsonl > /dev/null") == 0
            && run_shell(cd + "train --corpus corpus.jsonl --target soft --epochs 30 --batch-size 2 --seed 17 --out model.json > /dev/null") == 0
            && run_shell(cd + "eval --corpus corpus.jsonl --model model.json --split test --out report.json > /dev/null") == 0;
    };
    const auto a = scratch_path("pipeline_a"), b = scratch_path("pipeline_b");
    if (!run_pipeline(a) || !run_pipeline(b)) return {false, "pipeline command failed"};
    std::string detail;
    bool same = true;
    for (const char* file : {"corpus.jsonl", "model.json", "report.json"}) {
        const bool equal = slurp(a / file) == slurp(b / file) && !slurp(a / file).empty();
        same = same && equal;
        detail += std::string(detail.empty() ? "" : ", ") + file + (equal ? " identical" : " DIFFERS");
    }
    return {same, detail};
}

Outcome survey_end_to_end()
{
    const auto bundle = survey_support::make_bundle(10);
    const auto log_path = scratch_path("survey_log.jsonl");
    fs::remove(log_path);
    ResponseLog log(log_path);
    SurveyService service(bundle, log, {"acceptance-token", std::nullopt});
    const int port = service.start("127.0.0.1", 0);
    httplib::Client client("127.0.0.1", port);
    const auto script = survey_support::run_participants(client, bundle, 36);
    const auto results = client.Get("/api/results", httplib::Headers{{"X-Admin-Token", "acceptance-token"}});
    service.stop();

    const auto counts = tally(ResponseLog::read(log_path), bundle);
    const auto direct = preference_test(counts);
    const bool served = results && results->status == 200
                     && nlohmann::json::parse(results->body)["test"] == nlohmann::json::parse(direct.to_json().dump());
    const bool ok = script.all_accepted && script.payload_clean && counts.total() == 360 && counts == script.expected
                 && served;
    return {ok, "36 participants x 10 items, tally " + std::to_string(counts.total()) + " ("
                    + std::to_string(counts.baseline) + "/" + std::to_string(counts.multi_label) + "/"
                    + std::to_string(counts.no_difference) + "), served analysis "
                    + (served ? "matches" : "DIFFERS") + ", payload " + (script.payload_clean ? "clean" : "LEAKS")};
}

}  // namespace

int main()
{
    const std::vector<Criterion> criteria = {
        {"Preference table reproduction", true, 1.0, preference_table},
        {"Exact binomial correctness", true, 0.0, exact_binomial},
        {"Gradient check", true, 10.0, gradient_check},
        {"Soft-target minimizer", true, 0.0, soft_minimizer},
        {"Disagreement benefit", true, 120.0, disagreement_benefit},
        {"Ensemble oracle", true, 0.0, ensemble_oracle},
        {"Prompt round trip", true, 0.0, prompt_round_trip},
        {"Determinism", true, 0.0, determinism},
        {"Survey end-to-end", false, 0.0, survey_end_to_end},
    };

    int primary_failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = c.check();
        } catch (const std::exception& e) {
            outcome = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        bool pass = outcome.pass;
        std::string timing = fixed(seconds, 3) + " s";
        if (c.time_limit_s > 0) {
            timing += " (limit " + fixed(c.time_limit_s, 0) + " s)";
            if (seconds >= c.time_limit_s) pass = false;
        }
        std::cout << (pass ? "PASS" : "FAIL") << "  [" << (c.primary ? "PRIMARY" : "SECONDARY") << "] " << c.name
                  << ": " << outcome.detail << "; " << timing << std::endl;
        if (!pass && c.primary) ++primary_failures;
    }
    std::cout << (primary_failures == 0 ? "all primary criteria pass" : std::to_string(primary_failures) + " primary criteria failed")
              << std::endl;
    return primary_failures == 0 ? 0 : 1;
}
