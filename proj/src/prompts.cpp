#include "disagree/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "disagree/error.hpp"

namespace disagree {

namespace {

constexpr std::string_view kText = "{text}";
constexpr std::string_view kLabel = "{label}";
constexpr std::string_view kLabels = "{labels}";

std::size_t occurrences(std::string_view haystack, std::string_view needle)
{
    std::size_t count = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1))
        ++count;
    return count;
}

bool is_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::string replace_once(std::string_view source, std::string_view placeholder, std::string_view value)
{
    const auto pos = source.find(placeholder);
    std::string out(source.substr(0, pos));
    out += value;
    out += source.substr(pos + placeholder.size());
    return out;
}

std::string label_list(const LabelSchema& schema)
{
    std::string out;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (i) out += ", ";
        out += schema.name(i);
    }
    return out;
}

std::string ascii_lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

}  // namespace

PromptTemplate::PromptTemplate(std::string scenario, std::string instruction, std::string input_slot,
                               std::string response_slot)
    : scenario_(std::move(scenario)),
      instruction_(std::move(instruction)),
      input_slot_(std::move(input_slot)),
      response_slot_(std::move(response_slot))
{
    for (std::string_view placeholder : {kText, kLabel, kLabels})
        if (scenario_.find(placeholder) != std::string::npos)
            throw Error(Errc::TemplateError, "scenario must not contain " + std::string(placeholder));
    if (instruction_.find(kText) != std::string::npos || instruction_.find(kLabel) != std::string::npos)
        throw Error(Errc::TemplateError, "instruction may only use the {labels} placeholder");
    if (occurrences(instruction_, kLabels) > 1) throw Error(Errc::TemplateError, "instruction repeats {labels}");
    if (occurrences(input_slot_, kText) != 1)
        throw Error(Errc::TemplateError, "input section needs exactly one {text} placeholder");
    if (input_slot_.find(kLabel) != std::string::npos || input_slot_.find(kLabels) != std::string::npos)
        throw Error(Errc::TemplateError, "input section may only use {text}");
    if (occurrences(response_slot_, kLabel) != 1 || response_slot_.find(kText) != std::string::npos)
        throw Error(Errc::TemplateError, "response section needs exactly one {label} placeholder");
    if (!trim(std::string_view(response_slot_).substr(response_slot_.find(kLabel) + kLabel.size())).empty())
        throw Error(Errc::TemplateError, "{label} must end the response section");
    if (trim(scenario_).empty() || trim(instruction_).empty())
        throw Error(Errc::TemplateError, "scenario and instruction must not be empty");
}

PromptTemplate PromptTemplate::parse(std::string_view contents)
{
    static constexpr std::string_view kSections[] = {"scenario", "instruction", "input", "response"};
    std::vector<std::string> bodies;
    std::string current;
    bool in_section = false;

    std::istringstream lines{std::string(contents)};
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.starts_with("###")) {
            const auto name = trim(std::string_view(line).substr(3));
            if (bodies.size() + (in_section ? 1 : 0) >= std::size(kSections))
                throw Error(Errc::TemplateError, "unexpected extra section '" + std::string(name) + "'");
            const auto expected = kSections[bodies.size() + (in_section ? 1 : 0)];
            if (name != expected)
                throw Error(Errc::TemplateError,
                            "section '" + std::string(name) + "' found where '" + std::string(expected) + "' belongs");
            if (in_section) bodies.emplace_back(trim(current));
            current.clear();
            in_section = true;
            continue;
        }
        if (!in_section) {
            if (!trim(line).empty()) throw Error(Errc::TemplateError, "text before the first section header");
            continue;
        }
        current += line;
        current += '\n';
    }
    if (in_section) bodies.emplace_back(trim(current));
    if (bodies.size() != std::size(kSections))
        throw Error(Errc::TemplateError, "template needs scenario, instruction, input and response sections");
    return PromptTemplate(bodies[0], bodies[1], bodies[2], bodies[3]);
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::ostringstream contents;
    contents << in.rdbuf();
    try {
        return parse(contents.str());
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.message());
    }
}

std::string PromptTemplate::render_prompt(std::string_view text, const LabelSchema& schema) const
{
    std::string out = scenario_;
    out += "\n\n";
    out += instruction_.find(kLabels) == std::string::npos ? instruction_
                                                           : replace_once(instruction_, kLabels, label_list(schema));
    out += "\n\n";
    out += replace_once(input_slot_, kText, text);
    out += "\n\n";
    out += response_slot_.substr(0, response_slot_.find(kLabel));
    return out;
}

InstructionRecord build_record(const AnnotatedSample& sample, const Annotation& annotation,
                               const PromptTemplate& prompt_template, const LabelSchema& schema)
{
    const bool belongs = std::any_of(sample.annotations.begin(), sample.annotations.end(),
                                     [&](const Annotation& a) { return a == annotation; });
    if (!belongs)
        throw Error(Errc::UnknownAnnotator,
                    "annotation by '" + annotation.annotator_id + "' is not part of sample '" + sample.sample_id + "'");
    return {prompt_template.render_prompt(sample.text, schema), schema.name(annotation.label), sample.sample_id,
            annotation.annotator_id};
}

std::vector<InstructionRecord> build_dataset(const Corpus& corpus, const PromptTemplate& prompt_template,
                                             const std::optional<std::string>& annotator_filter)
{
    if (annotator_filter && !corpus.annotators().contains(*annotator_filter))
        throw Error(Errc::UnknownAnnotator, "annotator '" + *annotator_filter + "' is not in the corpus");

    std::vector<std::pair<const AnnotatedSample*, const Annotation*>> pairs;
    for (const auto& sample : corpus.samples())
        for (const auto& a : sample.annotations)
            if (!annotator_filter || a.annotator_id == *annotator_filter) pairs.emplace_back(&sample, &a);
    std::sort(pairs.begin(), pairs.end(), [](const auto& x, const auto& y) {
        if (x.first->sample_id != y.first->sample_id) return x.first->sample_id < y.first->sample_id;
        return x.second->annotator_id < y.second->annotator_id;
    });

    std::vector<InstructionRecord> records;
    records.reserve(pairs.size());
    for (const auto& [sample, annotation] : pairs)
        records.push_back(build_record(*sample, *annotation, prompt_template, corpus.schema()));
    return records;
}

std::size_t export_dataset(const Corpus& corpus, const PromptTemplate& prompt_template,
                           const std::optional<std::string>& annotator_filter, const std::filesystem::path& path)
{
    const auto records = build_dataset(corpus, prompt_template, annotator_filter);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    for (const auto& r : records) {
        nlohmann::ordered_json line;
        line["prompt"] = r.prompt;
        line["completion"] = r.completion;
        line["sample_id"] = r.sample_id;
        line["annotator_id"] = r.annotator_id;
        out << line.dump() << '\n';
    }
    if (!out) throw Error(Errc::IoError, "failed writing " + path.string());
    return records.size();
}

LabelIndex parse_response(std::string_view completion, const LabelSchema& schema)
{
    std::string_view s = trim(completion);
    while (!s.empty() && std::ispunct(static_cast<unsigned char>(s.back()))) {
        s.remove_suffix(1);
        s = trim(s);
    }
    const std::string wanted = ascii_lower(s);
    std::optional<LabelIndex> match;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (ascii_lower(schema.name(i)) != wanted) continue;
        if (match) throw Error(Errc::Unparseable, "'" + std::string(completion) + "' matches several labels");
        match = i;
    }
    if (!match) throw Error(Errc::Unparseable, "'" + std::string(completion) + "' is not a label");
    return *match;
}

}  // namespace disagree
