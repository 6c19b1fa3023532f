#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace gae::annotation {

/// Prompt for one-sentence screenshot descriptions; sent verbatim with the
/// screenshot attached.
inline constexpr std::string_view kDescribeStatePrompt =
    "Generate a concise one-sentence description of the content and layout of the provided "
    "webpage screenshot.";

inline constexpr std::string_view kNerPromptPrefix =
    "You are a helpful AI assistant proficient in Named Entity Recognition (NER).";
inline constexpr std::string_view kAlternativesPromptPrefix =
    "You are an AI assistant skilled in generating alternatives.";
inline constexpr std::string_view kRewritePromptPrefix =
    "You are an AI assistant specialized in rewriting user queries.";
inline constexpr std::string_view kHtmlRenderPromptPrefix =
    "Your task is to convert the simplified HTML input provided by the user into a fully "
    "renderable, standard HTML format";

/// HTML completion prompt for sources that ship HTML instead of screenshots.
std::string build_html_render_prompt(std::string_view html, std::string_view id,
                                     std::string_view context);

/// Silver step 1: entity recognition over the instruction.
std::string build_ner_prompt(std::string_view instruction);

/// Silver step 2: five alternatives per entity. `ners_json` is the compact
/// JSON list of {surface, label} objects from step 1.
std::string build_alternatives_prompt(std::string_view instruction, std::string_view ners_json);

/// Silver step 3: polish the five entity-substituted queries.
std::string build_rewrite_prompt(const std::vector<std::string>& queries);

}  // namespace gae::annotation
