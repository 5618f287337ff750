#include <doctest.h>

#include <json.hpp>

#include "disagree/error.hpp"
#include "disagree/prompts.hpp"
#include "test_paths.hpp"

using namespace disagree;

namespace {

PromptTemplate simple()
{
    return PromptTemplate("Scenario.", "Pick one of: {labels}.", "Text: {text}", "Answer: {label}");
}

Errc code_of(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::IoError;
}

}  // namespace

TEST_CASE("prompt renders four parts and stops before the label")
{
    const auto prompt = simple().render_prompt("hello", LabelSchema::hate_speech());
    CHECK(prompt == "Scenario.\n\nPick one of: Hate, Offensive, Normal.\n\nText: hello\n\nAnswer: ");
}

TEST_CASE("braces in sample text are not placeholders")
{
    const auto prompt = simple().render_prompt("{label} and {text} and {labels}", LabelSchema::hate_speech());
    CHECK(prompt.find("Text: {label} and {text} and {labels}\n") != std::string::npos);
}

TEST_CASE("template validation")
{
    CHECK(code_of([] { PromptTemplate("has {text}", "i", "{text}", "{label}"); }) == Errc::TemplateError);
    CHECK(code_of([] { PromptTemplate("s", "i", "no slot", "{label}"); }) == Errc::TemplateError);
    CHECK(code_of([] { PromptTemplate("s", "i", "{text} {text}", "{label}"); }) == Errc::TemplateError);
    CHECK(code_of([] { PromptTemplate("s", "i", "{text}", "{label} trailing"); }) == Errc::TemplateError);
    CHECK(code_of([] { PromptTemplate("s", "i", "{text}", "none"); }) == Errc::TemplateError);
    CHECK(code_of([] { PromptTemplate("s", "{label}", "{text}", "{label}"); }) == Errc::TemplateError);
    CHECK_NOTHROW(PromptTemplate("s", "i", "{text}", "{label}\n"));

    CHECK(code_of([] { PromptTemplate::parse("### scenario\ns\n### input\n{text}\n"); }) == Errc::TemplateError);
    CHECK(code_of([] { PromptTemplate::parse("junk\n### scenario\ns"); }) == Errc::TemplateError);
    CHECK(code_of([] { PromptTemplate::load(template_file("nope.txt")); }) == Errc::IoError);
}

TEST_CASE("shipped templates parse")
{
    for (const char* name : {"hate_speech.txt", "abusive_conversation.txt"}) {
        const auto t = PromptTemplate::load(template_file(name));
        CHECK(t.input_slot().find("{text}") != std::string::npos);
        CHECK(t.response_slot().ends_with("{label}"));
        CHECK(t.instruction().find("{labels}") != std::string::npos);
    }
}

TEST_CASE("response parsing: round trip for every label of both schemas")
{
    const struct {
        LabelSchema schema;
        const char* file;
    } cases[] = {{LabelSchema::hate_speech(), "hate_speech.txt"},
                 {LabelSchema::abusive_conversation(), "abusive_conversation.txt"}};
    for (const auto& c : cases) {
        const auto t = PromptTemplate::load(template_file(c.file));
        for (LabelIndex i = 0; i < c.schema.size(); ++i) {
            AnnotatedSample sample{"x", "some text", {{"ann", i}}, Split::train};
            const auto record = build_record(sample, sample.annotations[0], t, c.schema);
            CHECK(parse_response(record.completion, c.schema) == i);
            CHECK(record.prompt.find("some text") != std::string::npos);
        }
    }
}

TEST_CASE("response parsing is forgiving about case, spaces and trailing punctuation")
{
    const auto schema = LabelSchema::abusive_conversation();
    CHECK(parse_response("  mildly ABUSIVE. \n", schema) == 2);
    CHECK(parse_response("Not abusive!", schema) == 0);
    CHECK(code_of([&] { parse_response("abusive", schema); }) == Errc::Unparseable);
    CHECK(code_of([&] { parse_response("", schema); }) == Errc::Unparseable);
    const LabelSchema clash("clash", {"Yes", "yes"});
    CHECK(code_of([&] { parse_response("YES", clash); }) == Errc::Unparseable);
}

TEST_CASE("build_record rejects foreign annotations")
{
    AnnotatedSample sample{"x", "t", {{"a", 0}}, Split::train};
    CHECK(code_of([&] { build_record(sample, {"b", 0}, simple(), LabelSchema::hate_speech()); })
          == Errc::UnknownAnnotator);
}

TEST_CASE("export: one line per annotation, ordered and byte-stable")
{
    const auto corpus = ingest(fixture("hate_speech_slots.csv"), CorpusShape::slots, LabelSchema::hate_speech());
    const auto t = PromptTemplate::load(template_file("hate_speech.txt"));
    CHECK(export_dataset(corpus, t, std::nullopt, scratch_path("all.jsonl")) == 20);
    CHECK(export_dataset(corpus, t, std::nullopt, scratch_path("again.jsonl")) == 20);
    const auto bytes = slurp(scratch_path("all.jsonl"));
    CHECK(bytes == slurp(scratch_path("again.jsonl")));

    std::istringstream lines(bytes);
    std::string line, previous;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        const std::string key = j["sample_id"].get<std::string>() + "/" + j["annotator_id"].get<std::string>();
        CHECK(key > previous);
        previous = key;
        CHECK(j.size() == 4);
    }

    CHECK(export_dataset(corpus, t, std::string("slot_4"), scratch_path("one.jsonl")) == 4);
    CHECK(code_of([&] { build_dataset(corpus, t, std::string("nobody")); }) == Errc::UnknownAnnotator);

    // text with quotes and braces survives JSON escaping
    const auto records = build_dataset(corpus, t, std::string("slot_0"));
    CHECK(records.back().prompt.find("he said \"{whatever}\" again") != std::string::npos);
}
