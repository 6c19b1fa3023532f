#include "gae/annotation/prompts.hpp"

#include "gae/common/error.hpp"

namespace gae::annotation {

std::string build_html_render_prompt(std::string_view html, std::string_view id,
                                     std::string_view context) {
  if (html.empty()) throw UserError("build_html_render_prompt: html must be non-empty");
  std::string p(kHtmlRenderPromptPrefix);
  p += " while preserving all original information intact. Enhance the HTML with appropriate "
       "styling to make it visually appealing and resemble a typical, functional website. Return "
       "only the HTML code without any additional text. HTML: ";
  p += html;
  p += ". Ensure that the returned HTML code includes the ID [";
  p += id;
  p += "] (mentioned in ";
  p += context;
  p += ") with the same element exactly as provided.";
  return p;
}

std::string build_ner_prompt(std::string_view instruction) {
  std::string p(kNerPromptPrefix);
  p += " Analyze the following sentence and provide the most comprehensive NER results for each "
       "noun in JSON format, using greedy matching. Labels should be specific contextual "
       "descriptions of the entity. Sentence: ";
  p += instruction;
  p += ".\nRespond with JSON only: {\"entities\": [{\"surface\": <text as it appears in the "
       "sentence>, \"label\": <label>}]}";
  return p;
}

std::string build_alternatives_prompt(std::string_view instruction, std::string_view ners_json) {
  std::string p(kAlternativesPromptPrefix);
  p += " Given a sentence and a list of named entities, generate five alternative texts for each "
       "entity that align with its semantic label while being entirely different in meaning from "
       "the original text. Ensure the alternatives fit naturally and consistently within the "
       "sentence, maintaining the original representation (e.g., text remains text, emojis remain "
       "emojis).\nSentence: ";
  p += instruction;
  p += ", Named Entities: ";
  p += ners_json;
  p += ".\nRespond with JSON only: {\"alternatives\": {<surface>: [five strings]}}";
  return p;
}

std::string build_rewrite_prompt(const std::vector<std::string>& queries) {
  std::string p(kRewritePromptPrefix);
  p += " Your task is to refine the following five queries to ensure they are consistent, "
       "natural, concise, logical, and human-like. Rewrite each query by varying the wording, "
       "structure, and style to ensure diversity in expression. Your response should align with "
       "real-world common sense and factual accuracy.\nQueries:";
  for (std::size_t k = 0; k < queries.size(); ++k) {
    p += "\n" + std::to_string(k + 1) + ". " + queries[k];
  }
  p += "\nRespond with JSON only: {\"rewrites\": [five strings, in the same order]}";
  return p;
}

}  // namespace gae::annotation
