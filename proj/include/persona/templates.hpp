#pragma once

#include <string>
#include <utility>
#include <vector>

#include "persona/provider.hpp"

// Prompt templates used to drive the generator, judge, and inference models.
// Text is reproduced exactly; slot values are substituted verbatim.
namespace persona::templates {

/// Sample personas for one axis (Step 1).
std::string persona_sampling(const std::string& axis);

/// Ask for `n` personal questions for one person (Step 2).
std::string personal_questions(const std::string& name, int n, const std::vector<std::string>& axes);

/// Ask for `n` questions shared by the named people of one axis (Step 2).
std::string divergent_questions(const std::vector<std::string>& names, const std::string& axis,
                                const std::vector<std::string>& person_categories, int n);

/// System message of the chain-of-thought response prompt (Step 3).
std::string cot_system();
/// System message with the axis and categories pinned (divergent questions).
std::string cot_system_constrained(const std::string& axis, const std::vector<std::string>& categories);
/// Assistant prefill that fixes axis, categories, and the target category so the
/// model continues with a response only.
std::string cot_prefill(const std::string& axis, const std::vector<std::string>& categories,
                        const std::string& chosen);

/// Judge preamble and the two worked examples, as chat messages (Step 4).
std::vector<Message> judge_preamble();
/// "Please simulate {NAME}'s preference over the answers for the questions below."
std::string judge_instruction(const std::string& name);

using Shot = std::pair<std::string, std::string>;  // (question, preferred response)

/// Infer a persona from preference shots.
std::string persona_from_shots(const std::vector<Shot>& shots);
/// Describe a named person (gold persona).
std::string persona_gold(const std::string& name);

/// Few-shot conditioning block; the question itself is appended by fewshot_query.
std::string fewshot_prefix(const std::vector<Shot>& shots);
std::string fewshot_query(const std::string& prefix, const std::string& question);
std::string with_name(const std::string& name, const std::string& question);
std::string with_tag(const std::string& tag, const std::string& question);
std::string with_persona(const std::string& persona, const std::string& question);

/// Fixed axis list named in the chain-of-thought prompt.
const std::vector<std::string>& cot_axes();

}  // namespace persona::templates
