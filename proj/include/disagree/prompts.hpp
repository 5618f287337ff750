#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "disagree/labels.hpp"

namespace disagree {

/// Four-part instruction prompt: scenario, instruction, input, response.
///
/// Placeholders: `{text}` exactly once in the input part, `{label}` exactly
/// once at the end of the response part. The instruction may contain
/// `{labels}`, replaced by the schema's label names joined with ", ".
/// Substitution is single-pass, so braces inside sample text are emitted
/// verbatim.
class PromptTemplate {
public:
    /// Throws TemplateError when a placeholder is missing, repeated, misplaced
    /// or when the scenario contains any placeholder.
    PromptTemplate(std::string scenario, std::string instruction, std::string input_slot, std::string response_slot);

    /// Template file layout: four sections introduced by header lines
    /// `### scenario`, `### instruction`, `### input`, `### response`, in that
    /// order. Section bodies are trimmed of surrounding blank lines.
    static PromptTemplate load(const std::filesystem::path& path);
    static PromptTemplate parse(std::string_view contents);

    const std::string& scenario() const noexcept { return scenario_; }
    const std::string& instruction() const noexcept { return instruction_; }
    const std::string& input_slot() const noexcept { return input_slot_; }
    const std::string& response_slot() const noexcept { return response_slot_; }

    /// Scenario, instruction, input and the response part up to `{label}`,
    /// separated by blank lines.
    std::string render_prompt(std::string_view text, const LabelSchema& schema) const;

private:
    std::string scenario_;
    std::string instruction_;
    std::string input_slot_;
    std::string response_slot_;
};

struct InstructionRecord {
    std::string prompt;
    std::string completion;
    std::string sample_id;
    std::string annotator_id;
};

/// Prompt for the sample with one annotator's label as the completion.
/// Throws UnknownAnnotator if the annotation is not part of the sample.
InstructionRecord build_record(const AnnotatedSample& sample, const Annotation& annotation,
                               const PromptTemplate& prompt_template, const LabelSchema& schema);

/// Records for every (sample, annotation) pair passing the filter, ordered by
/// (sample_id, annotator_id). Throws UnknownAnnotator when the filter names
/// an annotator missing from the registry.
std::vector<InstructionRecord> build_dataset(const Corpus& corpus, const PromptTemplate& prompt_template,
                                             const std::optional<std::string>& annotator_filter = std::nullopt);

/// Writes build_dataset() as JSONL with fields prompt, completion, sample_id,
/// annotator_id. Returns the number of lines written.
std::size_t export_dataset(const Corpus& corpus, const PromptTemplate& prompt_template,
                           const std::optional<std::string>& annotator_filter, const std::filesystem::path& path);

/// Trims whitespace and trailing punctuation, then matches label names
/// case-insensitively. Throws Unparseable when no unique label matches.
LabelIndex parse_response(std::string_view completion, const LabelSchema& schema);

}  // namespace disagree
