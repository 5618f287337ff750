// disagree: command-line entry point for the disagreement-aware
// classification pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 data error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "disagree/ensemble.hpp"
#include "disagree/error.hpp"
#include "disagree/eval.hpp"
#include "disagree/labels.hpp"
#include "disagree/prompts.hpp"
#include "disagree/softmax.hpp"
#include "disagree/survey.hpp"
#include "disagree/synth.hpp"

namespace fs = std::filesystem;
using namespace disagree;

namespace {

constexpr int kUsageError = 1;
constexpr int kDataError = 2;
constexpr const char* kAdminTokenEnv = "DISAGREE_ADMIN_TOKEN";

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// --- shared option groups ----------------------------------------------------

struct FeatureOptions {
    std::size_t dimension = FeatureSpace{}.dimension;
    std::size_t ngram_min = 3;
    std::size_t ngram_max = 5;
    bool no_ngrams = false;
    bool no_lowercase = false;

    void attach(CLI::App* app)
    {
        app->add_option("--dim", dimension, "Hashed feature dimension (power of two)")->capture_default_str();
        app->add_option("--ngram-min", ngram_min, "Shortest character n-gram")->capture_default_str();
        app->add_option("--ngram-max", ngram_max, "Longest character n-gram")->capture_default_str();
        app->add_flag("--no-ngrams", no_ngrams, "Word features only");
        app->add_flag("--no-lowercase", no_lowercase, "Keep letter case");
    }

    FeatureSpace space() const
    {
        FeatureSpace space;
        space.dimension = dimension;
        if (no_ngrams) space.char_ngrams.reset();
        else space.char_ngrams = NgramRange{ngram_min, ngram_max};
        space.lowercase = !no_lowercase;
        space.validate();
        return space;
    }
};

struct TrainOptions {
    TrainConfig config;

    void attach(CLI::App* app)
    {
        app->add_option("--lr", config.learning_rate, "Learning rate")->capture_default_str();
        app->add_option("--epochs", config.epochs, "Training epochs")->capture_default_str();
        app->add_option("--batch-size", config.batch_size, "Mini-batch size")->capture_default_str();
        app->add_option("--l2", config.l2, "L2 penalty on weights")->capture_default_str();
    }
};

struct CorpusOptions {
    std::string corpus;
    std::string schema = "hate_speech";

    void attach(CLI::App* app, bool required = true)
    {
        auto* opt = app->add_option("--corpus", corpus, "Canonical corpus JSONL");
        if (required) opt->required();
        app->add_option("--schema", schema,
                        "Label schema: hate_speech, abusive_conversation, or a JSON file {task_id, labels}")
            ->capture_default_str();
    }
};

LabelSchema resolve_schema(const std::string& spec)
{
    if (spec == "hate_speech" || spec == "abusive_conversation") return LabelSchema::named(spec);
    std::ifstream in(spec, std::ios::binary);
    if (!in) throw UsageError("unknown schema '" + spec + "' (not a built-in name or readable file)");
    try {
        const auto j = nlohmann::json::parse(in);
        return LabelSchema(j.at("task_id").get<std::string>(), j.at("labels").get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::FormatError, spec + ": " + e.what());
    }
}

Corpus load_corpus(const CorpusOptions& options)
{
    return read_corpus_jsonl(options.corpus, resolve_schema(options.schema));
}

std::pair<std::size_t, std::size_t> parse_n_range(const std::string& text)
{
    const auto dots = text.find("..");
    try {
        if (dots == std::string::npos) {
            const auto n = static_cast<std::size_t>(std::stoul(text));
            return {n, n};
        }
        return {static_cast<std::size_t>(std::stoul(text.substr(0, dots))),
                static_cast<std::size_t>(std::stoul(text.substr(dots + 2)))};
    } catch (const std::exception&) {
        throw UsageError("--n expects N or LO..HI, got '" + text + "'");
    }
}

// --- config file -------------------------------------------------------------

/// Applies a JSON object of `long-option-name: value` pairs to the options of
/// `app` that were not given on the command line. Unknown keys are usage
/// errors.
void apply_config_file(CLI::App* app, const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open config file " + path);
    nlohmann::json config;
    try {
        config = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config file " + path + ": " + e.what());
    }
    if (!config.is_object()) throw UsageError("config file " + path + " must hold a JSON object");

    for (const auto& [key, value] : config.items()) {
        CLI::Option* opt = app->get_option_no_throw("--" + key);
        if (!opt || key == "config") throw UsageError("config file " + path + ": unknown key '" + key + "'");
        if (opt->count() > 0) continue;  // command line wins
        const auto as_text = [](const nlohmann::json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
        if (value.is_array()) {
            for (const auto& v : value) opt->add_result(as_text(v));
        } else {
            opt->add_result(as_text(value));
        }
        opt->run_callback();
    }
}

/// Every option of the subcommand with its effective value.
nlohmann::ordered_json resolved_config(const CLI::App* app)
{
    nlohmann::ordered_json out;
    out["command"] = app->get_parent() && app->get_parent()->get_parent()
                         ? app->get_parent()->get_name() + " " + app->get_name()
                         : app->get_name();
    for (const CLI::Option* opt : app->get_options()) {
        const std::string name = opt->get_single_name();
        if (name.empty() || name == "help" || name == "config") continue;
        if (opt->count() > 0) {
            const auto& results = opt->results();
            out[name] = results.size() == 1 ? nlohmann::ordered_json(results.front()) : nlohmann::ordered_json(results);
        } else if (opt->get_type_size() == 0) {
            out[name] = false;
        } else if (!opt->get_default_str().empty()) {
            out[name] = opt->get_default_str();
        } else {
            out[name] = nullptr;
        }
    }
    return out;
}

void write_json_file(const fs::path& path, const nlohmann::ordered_json& j)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
}

std::vector<Prediction> predict_split(const SoftmaxClassifier& model, const Corpus& corpus, Split split)
{
    std::vector<Prediction> predictions;
    for (const AnnotatedSample* s : corpus.split(split))
        predictions.push_back({s->sample_id, predict_distribution(model, featurize(s->text, model.space()))});
    return predictions;
}

std::vector<Prediction> predict_split(const EnsembleModel& ensemble, const Corpus& corpus, Split split)
{
    std::vector<Prediction> predictions;
    for (const AnnotatedSample* s : corpus.split(split)) predictions.push_back({s->sample_id, predict(ensemble, s->text)});
    return predictions;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Train and evaluate text classifiers on full annotator label distributions.", "disagree"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "disagree 1.0.0");

    std::uint64_t seed = 0;
    std::string config_path;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
        sub->add_option("--config", config_path, "JSON file of option values (flags take precedence)");
    };
    std::function<void()> action;
    CLI::App* active = nullptr;
    const auto on = [&](CLI::App* sub, std::function<void()> fn) {
        sub->callback([&, sub, fn = std::move(fn)] {
            active = sub;
            action = fn;
        });
    };

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Convert a CSV corpus into canonical JSONL");
    std::string ingest_input, ingest_shape = "slots", ingest_schema = "hate_speech", ingest_out,
                ingest_default_split = "train";
    ingest_cmd->add_option("--input", ingest_input, "CSV file: id,text[,split] + label columns")->required();
    ingest_cmd->add_option("--shape", ingest_shape, "slots (label_1..label_k) or identified (one column per annotator)")
        ->check(CLI::IsMember({"slots", "identified"}))
        ->capture_default_str();
    ingest_cmd->add_option("--schema", ingest_schema, "Label schema name or JSON file")->capture_default_str();
    ingest_cmd->add_option("--default-split", ingest_default_split, "Split for rows without a split value")
        ->check(CLI::IsMember({"train", "validation", "test"}))
        ->capture_default_str();
    ingest_cmd->add_option("--out", ingest_out, "Output corpus JSONL")->required();
    add_common(ingest_cmd);
    on(ingest_cmd, [&] {
        const auto corpus = ingest(ingest_input, parse_shape(ingest_shape), resolve_schema(ingest_schema),
                                   IngestOptions{parse_split(ingest_default_split)});
        write_corpus_jsonl(corpus, ingest_out);
        std::cout << "ingested " << corpus.samples().size() << " samples, " << corpus.annotators().size()
                  << " annotators -> " << ingest_out << '\n';
    });

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate the seeded synthetic disagreement corpus");
    SynthConfig synth_config;
    std::string synth_out;
    synth_cmd->add_option("--samples", synth_config.samples, "Number of samples")->capture_default_str();
    synth_cmd->add_option("--out", synth_out, "Output corpus JSONL")->required();
    add_common(synth_cmd);
    on(synth_cmd, [&] {
        synth_config.seed = seed;
        const auto corpus = synthesize(synth_config);
        write_corpus_jsonl(corpus, synth_out);
        std::cout << "generated " << corpus.samples().size() << " samples -> " << synth_out << '\n';
    });

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a softmax classifier");
    CorpusOptions train_corpus;
    FeatureOptions train_features;
    TrainOptions train_options;
    std::string train_target = "soft", train_out;
    train_corpus.attach(train_cmd);
    train_features.attach(train_cmd);
    train_options.attach(train_cmd);
    train_cmd->add_option("--target", train_target, "hard (majority), soft (distribution) or conditioned")
        ->check(CLI::IsMember({"hard", "soft", "conditioned"}))
        ->capture_default_str();
    train_cmd->add_option("--out", train_out, "Output model JSON")->required();
    add_common(train_cmd);
    on(train_cmd, [&] {
        auto config = train_options.config;
        config.seed = seed;
        const auto corpus = load_corpus(train_corpus);
        const auto model = train(corpus, train_features.space(), parse_target_kind(train_target), config);
        model.save(train_out);
        std::cout << "trained " << train_target << " model -> " << train_out << '\n';
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Mean cross entropy against annotation distributions");
    CorpusOptions eval_corpus;
    std::string eval_model, eval_manifest, eval_split = "test", eval_out;
    std::optional<std::size_t> eval_n;
    eval_corpus.attach(eval_cmd);
    auto* model_opt = eval_cmd->add_option("--model", eval_model, "Unconditioned model JSON");
    auto* manifest_opt = eval_cmd->add_option("--manifest", eval_manifest, "Ensemble manifest JSON");
    model_opt->excludes(manifest_opt);
    eval_cmd->add_option("--n", eval_n, "Top-n sub-models (default: the manifest's selected n)");
    eval_cmd->add_option("--split", eval_split, "Split to score")
        ->check(CLI::IsMember({"train", "validation", "test"}))
        ->capture_default_str();
    eval_cmd->add_option("--out", eval_out, "Output report JSON")->required();
    add_common(eval_cmd);
    on(eval_cmd, [&] {
        if (eval_model.empty() == eval_manifest.empty()) throw UsageError("eval needs exactly one of --model, --manifest");
        const auto corpus = load_corpus(eval_corpus);
        const Split split = parse_split(eval_split);
        std::vector<Prediction> predictions;
        if (!eval_model.empty()) {
            predictions = predict_split(SoftmaxClassifier::load(eval_model), corpus, split);
        } else {
            const auto loaded = load_manifest(eval_manifest);
            const auto ensemble = select_top_n(loaded.records, eval_n.value_or(loaded.selected_n), loaded.space);
            predictions = predict_split(ensemble, corpus, split);
        }
        const auto report = evaluate(predictions, corpus, split);
        auto j = report.to_json();
        j["config"] = resolved_config(eval_cmd);
        write_json_file(eval_out, j);
        std::cout << "mean cross entropy " << report.mean << " nats over " << report.per_sample.size()
                  << " samples -> " << eval_out << '\n';
    });

    // ensemble
    auto* ensemble_cmd = app.add_subcommand("ensemble", "Per-annotator sub-model ensembles");
    ensemble_cmd->require_subcommand(1);
    auto* ens_train_cmd = ensemble_cmd->add_subcommand("train", "Train one sub-model per annotator stream");
    CorpusOptions ens_corpus;
    FeatureOptions ens_features;
    TrainOptions ens_options;
    std::string ens_mode = "identified", ens_out_dir;
    std::size_t ens_n = 3;
    ens_corpus.attach(ens_train_cmd);
    ens_features.attach(ens_train_cmd);
    ens_options.attach(ens_train_cmd);
    ens_train_cmd->add_option("--mode", ens_mode,
                              "identified (one stream per annotator), slots (per position) or conditioned "
                              "(one annotator-conditioned model as virtual sub-models)")
        ->check(CLI::IsMember({"identified", "slots", "conditioned"}))
        ->capture_default_str();
    ens_train_cmd->add_option("--n", ens_n, "Selected top-n recorded in the manifest (>= 3)")->capture_default_str();
    ens_train_cmd->add_option("--out-dir", ens_out_dir, "Directory for manifest.json and model files")->required();
    add_common(ens_train_cmd);
    on(ens_train_cmd, [&] {
        auto config = ens_options.config;
        config.seed = seed;
        const auto corpus = load_corpus(ens_corpus);
        const auto space = ens_features.space();
        const auto records = ens_mode == "conditioned"
                               ? train_conditioned_ensemble(corpus, space, config)
                               : train_ensemble(corpus, parse_stream_mode(ens_mode), space, config);
        const fs::path manifest = fs::path(ens_out_dir) / "manifest.json";
        save_manifest(records, ens_n, manifest);
        for (const auto& r : records)
            std::cout << r.stream_id << " validation_accuracy " << r.validation_accuracy << '\n';
        std::cout << records.size() << " sub-models -> " << manifest.string() << '\n';
    });

    auto* sweep_cmd = ensemble_cmd->add_subcommand("sweep", "Mean test cross entropy for each top-n");
    CorpusOptions sweep_corpus;
    std::string sweep_manifest, sweep_range, sweep_out;
    sweep_corpus.attach(sweep_cmd);
    sweep_cmd->add_option("--manifest", sweep_manifest, "Ensemble manifest JSON")->required();
    sweep_cmd->add_option("--n", sweep_range, "Range LO..HI (default 3..number of sub-models)");
    sweep_cmd->add_option("--out", sweep_out, "Output CSV n,mean_cross_entropy")->required();
    add_common(sweep_cmd);
    on(sweep_cmd, [&] {
        const auto corpus = load_corpus(sweep_corpus);
        const auto loaded = load_manifest(sweep_manifest);
        auto [lo, hi] = sweep_range.empty() ? std::pair<std::size_t, std::size_t>{kMinEnsembleSize, loaded.records.size()}
                                            : parse_n_range(sweep_range);
        const auto rows = sweep_top_n(loaded.records, corpus, loaded.space, lo, hi);
        write_sweep_csv(rows, sweep_out);
        write_json_file(sweep_out + ".config.json", resolved_config(sweep_cmd));
        for (const auto& row : rows) std::cout << "top " << row.n << ": " << row.mean_cross_entropy << '\n';
    });

    // prompts
    auto* prompts_cmd = app.add_subcommand("prompts", "Instruction-tuning dataset export");
    prompts_cmd->require_subcommand(1);
    auto* export_cmd = prompts_cmd->add_subcommand("export", "Write prompt/completion JSONL");
    CorpusOptions export_corpus;
    std::string export_template, export_out;
    std::optional<std::string> export_annotator;
    export_corpus.attach(export_cmd);
    export_cmd->add_option("--template", export_template, "Template file (### scenario/instruction/input/response)")
        ->required();
    export_cmd->add_option("--annotator", export_annotator, "Only this annotator's labels");
    export_cmd->add_option("--out", export_out, "Output JSONL")->required();
    add_common(export_cmd);
    on(export_cmd, [&] {
        const auto corpus = load_corpus(export_corpus);
        const auto count = export_dataset(corpus, PromptTemplate::load(export_template), export_annotator, export_out);
        std::cout << count << " records -> " << export_out << '\n';
    });

    // survey
    auto* survey_cmd = app.add_subcommand("survey", "Blind preference survey between two models");
    survey_cmd->require_subcommand(1);
    auto* build_cmd = survey_cmd->add_subcommand("build", "Draw the survey bundle");
    CorpusOptions build_corpus;
    std::string build_baseline, build_multi, build_out;
    std::size_t build_k = 10;
    build_corpus.attach(build_cmd);
    build_cmd->add_option("--baseline", build_baseline, "Hard-label model JSON")->required();
    build_cmd->add_option("--multilabel", build_multi, "Soft-label model JSON")->required();
    build_cmd->add_option("--k", build_k, "Number of items")->capture_default_str();
    build_cmd->add_option("--out", build_out, "Output bundle JSON (server side, holds provenance)")->required();
    add_common(build_cmd);
    on(build_cmd, [&] {
        const auto corpus = load_corpus(build_corpus);
        const auto bundle = build_bundle(corpus, SoftmaxClassifier::load(build_baseline),
                                         SoftmaxClassifier::load(build_multi), build_k, seed);
        bundle.save(build_out);
        std::cout << bundle.items.size() << " items -> " << build_out << '\n';
    });

    auto* serve_cmd = survey_cmd->add_subcommand("serve", "Serve the survey over HTTP");
    std::string serve_bundle, serve_log, serve_host = "127.0.0.1";
    std::optional<std::string> serve_static;
    int serve_port = 8080;
    serve_cmd->add_option("--bundle", serve_bundle, "Bundle JSON")->required();
    serve_cmd->add_option("--log", serve_log, "Append-only response log (JSONL)")->required();
    serve_cmd->add_option("--host", serve_host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--port", serve_port, "Port")->capture_default_str();
    serve_cmd->add_option("--static-dir", serve_static, "Directory with the browser UI");
    add_common(serve_cmd);
    on(serve_cmd, [&] {
        ResponseLog log(serve_log);
        ServiceOptions options;
        if (const char* token = std::getenv(kAdminTokenEnv)) options.admin_token = token;
        if (serve_static) options.static_dir = fs::path(*serve_static);
        SurveyService service(SurveyBundle::load(serve_bundle), log, options);
        std::cout << "serving on http://" << serve_host << ':' << serve_port << " (" << log.size()
                  << " responses logged)" << std::endl;
        service.run(serve_host, serve_port);
    });

    auto* analyze_cmd = survey_cmd->add_subcommand("analyze", "Preference test on survey results");
    std::string analyze_bundle, analyze_log, analyze_counts, analyze_out;
    double analyze_null = 1.0 / 3.0;
    analyze_cmd->add_option("--bundle", analyze_bundle, "Bundle JSON (with --log)");
    analyze_cmd->add_option("--log", analyze_log, "Response log JSONL (with --bundle)");
    analyze_cmd->add_option("--counts", analyze_counts,
                            "JSON file {baseline, multi_label, no_difference} instead of a log");
    analyze_cmd->add_option("--null", analyze_null, "Null probability per category")->capture_default_str();
    analyze_cmd->add_option("--out", analyze_out, "Also write the report JSON here");
    add_common(analyze_cmd);
    on(analyze_cmd, [&] {
        PreferenceCounts counts;
        if (!analyze_counts.empty()) {
            if (!analyze_log.empty() || !analyze_bundle.empty())
                throw UsageError("--counts cannot be combined with --bundle/--log");
            std::ifstream in(analyze_counts, std::ios::binary);
            if (!in) throw Error(Errc::IoError, "cannot open " + analyze_counts);
            try {
                const auto j = nlohmann::json::parse(in);
                counts = {j.at("baseline").get<std::uint64_t>(), j.at("multi_label").get<std::uint64_t>(),
                          j.at("no_difference").get<std::uint64_t>()};
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::FormatError, analyze_counts + ": " + e.what());
            }
        } else {
            if (analyze_log.empty() || analyze_bundle.empty())
                throw UsageError("analyze needs --counts, or both --bundle and --log");
            counts = tally(ResponseLog::read(analyze_log), SurveyBundle::load(analyze_bundle));
        }
        const auto result = preference_test(counts, analyze_null);
        std::cout << result.to_table();
        if (!analyze_out.empty()) {
            auto j = result.to_json();
            j["config"] = resolved_config(analyze_cmd);
            write_json_file(analyze_out, j);
        }
    });

    try {
        app.parse(argc, argv);
        if (!config_path.empty()) apply_config_file(active, config_path);
        action();
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : kUsageError;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsageError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDataError;
    }
    return 0;
}
