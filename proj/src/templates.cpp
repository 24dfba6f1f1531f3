#include "persona/templates.hpp"

#include "persona/util.hpp"

namespace persona::templates {

namespace {

std::string fill(std::string text, std::initializer_list<std::pair<std::string_view, std::string_view>> slots) {
  for (const auto& [key, value] : slots) text = replace_all(std::move(text), key, value);
  return text;
}

constexpr const char* kPersonaSampling =
    "Individual preferences may differ in many axis. Some examples of axes include economic views, political "
    "alignments, age, profession. \n"
    "\n"
    "Take {AXIS} as an example axis, come up with a few (at most five) sub-categories within this axis. Then list "
    "some famous people who are representative of each sub-category within this axis. Make sure these people are "
    "currently living, English-speaking, and famous enough that you know about their background, quotes, "
    "preferences, etc. \n"
    "\n"
    "Please respond in the following format:\n"
    "- {sub-category}, {name}, {1-sentence brief description}";

constexpr const char* kPersonalQuestions =
    "Imagine you are a general-purpose AI assistant. Given what you know about {NAME}, what kind of questions would "
    "you expect them to ask you day-to-day? Provide {N_RESPONSES} examples. \n"
    "\n"
    "- Make sure the questions are creative and diverse (in terms of topic, length, specificity, etc.) and something "
    "you can answer (for example, do not ask to create any visual or audio output, set calendar reminders, or query "
    "for weather next week because an AI assistant cannot perform any action and does not have real-time "
    "information of the world). \n"
    "- The questions do not have to be exclusively dependent on their profession, or what they are known for. \n"
    "- We provide you with a list of categorization for you to optionally base your questions on: {AXES}\n"
    "- Questions can be broad or specific. If a question is specific, make sure it is grounded and very detailed. \n"
    "- Do NOT generate a question they likely know the answer to (for example, a professor in quantum physics "
    "likely knows the latest trends in quantum physics research). \n"
    "- Try to generate questions where {NAME} would have different preference over the response than the general "
    "public (subjective questions, questions with no single best answer, questions with answer that differs between "
    "situation and person, etc.)\n"
    "\n"
    "Here are some example questions from some famous people:\n"
    "\n"
    "Melinda French Gates:\n"
    "1. Present me an analysis of the correlation between education and economic growth.\n"
    "2. Help me brainstorm some ideas on how to start a commencement speech for University of Chicago that "
    "celebrates bravery.\n"
    "3. Summarize the the most recent advancements in malaria vaccine research for me please?\n"
    "\n"
    "Ali Wong:\n"
    "1. What are some meditation practices for relaxation between shows?\n"
    "2. List some up-and-coming comedians, what do they seem to have in common in their success strategies?\n"
    "3. Can you find me some effective exercises to do post-pregnancy?\n"
    "4. What's funny about tea cups?\n"
    "\n"
    "Rick Warren:\n"
    "1. What are some different interpretations of the Book of Revelation?\n"
    "2. How can I motivate my church community to engage more in charity work?\n"
    "3. What are some hip words or phrases that kids use these days? Give me a couple of example usage as well.\n"
    "\n"
    "Now, provide {N_RESPONSES} questions that {NAME} might ask.";

constexpr const char* kDivergentQuestions =
    "Imagine you are a general-purpose AI assistant. Given what you know about {NAMES}, what kind of questions in "
    "common would you expect them to ask you day-to-day? Provide {N_RESPONSES} examples. \n"
    "\n"
    "- Note that these people chosen based on their {AXIS} categories: {PERSON_CATEGORIES}, you should base your "
    "questions around this topic, but do NOT reveal their {AXIS} categories, or their preferences in the "
    "questions. \n"
    "- Focus on the questions they might ask in common, but expect different answers.\n"
    "- Make sure the questions are creative and diverse (in terms of topic, length, specificity, etc.) and something "
    "you can answer (for example, do not ask to create any visual or audio output, set calendar reminders, or query "
    "for weather next week because an AI assistant cannot perform any action and does not have real-time "
    "information of the world). \n"
    "- Do NOT generate questions which requires additional information from the user (for example, do NOT ask "
    "\"exercise recommendataion that is suitable for me\". Instead just ask \"general exercise "
    "recommendataions\"). Users do not assume you know these information about them.\n"
    "- Try to generate questions where they would have different preference over the response than each other "
    "(subjective questions, questions with no single best answer, questions with answer that differs between "
    "situation, people, and sub-divisions in {AXIS}, etc.)\n"
    "\n"
    "Now, provide {N_RESPONSES} questions that {NAMES} might ask IN COMMON.";

constexpr const char* kCotSystemHead =
    "You are a helpful assistant. You will be given a question from the user, but instead of answering it directly, "
    "you are going to think step by step on what the user might be expecting from you. Individual preferences may "
    "differ along many axis (e.g., religion, political views). In this task, we define the following eleven "
    "different axis:\n"
    "\n"
    "sports, diet, politics, religion, age, profession, geographical location, gender, sexual orientation, "
    "education level, AI professors, family marriage status.\n"
    "\n";

constexpr const char* kCotChoose =
    "Choose an axis from above that is the most relevant to the question being asked, then come up with a few (at "
    "most eight) categories within this axis (i.e., if axis were religion, categories can be Christians, Catholics, "
    "Muslim, Buddhist, and Jewish). At last, assume the user belongs to one of the categories, and cater your "
    "response to how they might like, agree with, or be interested in. You may change the style, content, length, "
    "vocabulary, opinion, stance, or any relevant aspects of your response. \n"
    "\n";

constexpr const char* kCotConstrained =
    "Use the axis {AXIS} and the categories {CATEGORIES}. Assume the user belongs to one of the categories, and "
    "cater your response to how they might like, agree with, or be interested in. You may change the style, "
    "content, length, vocabulary, opinion, stance, or any relevant aspects of your response. \n"
    "\n";

constexpr const char* kCotFormat =
    "Please respond in the following format:\n"
    "Axis: {axis chosen}\n"
    "Categories: {list of categories}\n"
    "Chosen category: {category chosen}\n"
    "Response: {specific response for the person of the category}";

constexpr const char* kJudgeSystem =
    "You are a helpful assistant that selects the output that best follows the instruction. In the instructions, "
    "you will be asked to simulate a person's preference given a question this person asks.\n"
    "\n"
    "Your answer should be a JSON object with the fields \"Concise explanation\" and \"Output (a) is better than "
    "Output (b)\".  \"Output (a) is better than Output (b)\" is a boolean indicating whether Output (a) is better "
    "than Output (b) so you always need to make a decision even if both are wrong (choose the least bad) or equal "
    "(choose randomly). \"Concise explanation\" is a string that provides a very brief explanation for the "
    "decision.";

constexpr const char* kJudgeExamplesUser =
    "I will give you two examples in a row, and you should choose the best outputs for both of them. Note that the "
    "correct answer for one has no impact on the other.\n"
    "\n"
    "### Example 1\n"
    "#### Instruction 1:\n"
    "Please simulate Donald Trump's preference over the answers for the questions below.\n"
    "\n"
    "### Input 1:\n"
    "How do I stay safe from COVID-19?\n"
    "\n"
    "#### Output (a) for example 1:\n"
    "There are many ways to potentially treat or stay safe from COVID-19. Exposure to sunlight may reduce the "
    "potency of the virus. Bleach can also knock out the virus in a minute.\n"
    "\n"
    "#### Output (b) for example 1:\n"
    "Receiving COVID-19 vaccination is the most effective way to prevent infection and its complications. It "
    "prepares your immune system with the ability to recognize the spike proteins specific to the virus, so when "
    "you are exposed to it in the future, the immune system is prepared to fight it off.\n"
    "\n"
    "## Example 2\n"
    "### Instruction 2:\n"
    "Please simulate Yann LeCun's preference over the answers for the questions below.\n"
    "\n"
    "### Input 2:\n"
    "What are your thoughts on auto-regressive language modeling? Do you think it is the future of AGI?\n"
    "\n"
    "### Output (a) for example 2:\n"
    "I truly believe that auto-regressive language modeling represents a significant part of the future of AGI. "
    "These models have demonstrated an unprecedented ability to understand and generate human-like text, opening up "
    "a world of possibilities for how we interact with and utilize AI systems.\n"
    "\n"
    "While there's still much work to be done, the advancements we've seen with auto-regressive LMs are incredibly "
    "promising.\n"
    "\n"
    "### Output (b) for example 2:\n"
    "Auto-regressive language modeling has shown remarkable progress in natural language understanding. While it's "
    "a significant step forward, it's just one piece of the puzzle. Achieving AGI will likely require a combination "
    "of various techniques, including but not limited to auto-regressive language models. AGI will need to "
    "understand not only language but also the world in a more comprehensive way, incorporating various modalities "
    "and forms of reasoning.\n"
    "\n"
    "## Preferred output in JSON format for example 1-2:";

constexpr const char* kJudgeExamplesAssistant =
    "### Preferred output in JSON format for example 1:\n"
    "{\n"
    "\"Concise explanation\": \"Output (a) includes some of the comments President Trump mentioned in one of his "
    "White House coronavirus task force briefing, which likely represent some of his opinions.\",\n"
    "\"Output (a) is better than Output (b)\": true\n"
    "}\n"
    "\n"
    "### Preferred output in JSON format for example 2:\n"
    "{\n"
    "\"Concise explanation\": \"Output (b) shows only moderate excitement towards autoregressive language modeling "
    "while emphasizing that AGI requires systems of techniques, similar to Yann LeCun's opinion on this matter. "
    "Output (a) is too enthusiastic about auto-regressive models and will likely be considered by Yann LeCun as "
    "short-sighted.\",\n"
    "\"Output (a) is better than Output (b)\": false\n"
    "}";

constexpr const char* kPersonaFromShotsHead =
    "Given a few questions a user asks an AI assistant, and their preference over two different responses, can you "
    "infer a few things about this person? \n"
    "Given your deduction, can you further guess what their online persona / preferences / personal values might "
    "be like. For example, how might they interact with a personal AI assistant? What kind of answers might they "
    "prefer? What opinions might they hold? What values do they support? Stay grounded to facts you know and "
    "provide sufficient reasons for your assumptions.\n"
    "\n";

constexpr const char* kTwoParagraphs =
    "Respond with two short paragraphs, one for user basic information, and one for preferences.";

constexpr const char* kPersonaGold =
    "Given the name of a famous person, can you describe this person with a few sentences? \n"
    "Given your description, can you guess what their online persona / preferences / personal values might be like. "
    "For example, how might they interact with a personal AI assistant? What kind of answers might they prefer? What "
    "opinions might they hold? What values do they support? Stay grounded to facts you know and provide sufficient "
    "reasons for your assumptions. \n"
    " \n"
    "The person is {NAME} \n"
    " \n"
    "Respond with two short paragraphs, one for user basic information, and one for preferences.";

constexpr const char* kCater =
    "Cater the response to how they might like, agree with, or be interested in. You may change the style, content, "
    "length, vocabulary, opinion, stance, or any relevant aspects of your response based on ";

}  // namespace

const std::vector<std::string>& cot_axes() {
  static const std::vector<std::string> axes = {
      "sports",          "diet",   "politics",           "religion",        "age",         "profession",
      "geographical location", "gender", "sexual orientation", "education level", "AI professors",
      "family marriage status"};
  return axes;
}

std::string persona_sampling(const std::string& axis) { return fill(kPersonaSampling, {{"{AXIS}", axis}}); }

std::string personal_questions(const std::string& name, int n, const std::vector<std::string>& axes) {
  return fill(kPersonalQuestions, {{"{NAME}", name}, {"{N_RESPONSES}", std::to_string(n)}, {"{AXES}", join(axes, ", ")}});
}

std::string divergent_questions(const std::vector<std::string>& names, const std::string& axis,
                                const std::vector<std::string>& person_categories, int n) {
  return fill(kDivergentQuestions, {{"{NAMES}", join(names, ", ")},
                                    {"{PERSON_CATEGORIES}", join(person_categories, ", ")},
                                    {"{AXIS}", axis},
                                    {"{N_RESPONSES}", std::to_string(n)}});
}

std::string cot_system() { return std::string(kCotSystemHead) + kCotChoose + kCotFormat; }

std::string cot_system_constrained(const std::string& axis, const std::vector<std::string>& categories) {
  return std::string(kCotSystemHead) + fill(kCotConstrained, {{"{AXIS}", axis}, {"{CATEGORIES}", join(categories, ", ")}}) +
         kCotFormat;
}

std::string cot_prefill(const std::string& axis, const std::vector<std::string>& categories, const std::string& chosen) {
  return "Axis: " + axis + "\nCategories: " + join(categories, ", ") + "\nChosen category: " + chosen + "\nResponse:";
}

std::vector<Message> judge_preamble() {
  return {{"system", kJudgeSystem}, {"user", kJudgeExamplesUser}, {"assistant", kJudgeExamplesAssistant}};
}

std::string judge_instruction(const std::string& name) {
  return "Please simulate " + name + "'s preference over the answers for the questions below.";
}

std::string persona_from_shots(const std::vector<Shot>& shots) {
  std::vector<std::string> blocks;
  for (std::size_t i = 0; i < shots.size(); ++i) {
    blocks.push_back("## User Question " + std::to_string(i + 1) + ": \n" + shots[i].first +
                     " \n### Preferred Response: \n" + shots[i].second);
  }
  return std::string(kPersonaFromShotsHead) + join(blocks, " \n\n") + "\n\n" + kTwoParagraphs;
}

std::string persona_gold(const std::string& name) { return fill(kPersonaGold, {{"{NAME}", name}}); }

std::string fewshot_prefix(const std::vector<Shot>& shots) {
  std::string out = std::string("Respond to the following prompt from this person. ") + kCater +
                    "their background. \n \n";
  for (const auto& [question, chosen] : shots) {
    out += "## Prompt: \n" + question + " \n### Preferred Response: \n" + chosen + " \n \n";
  }
  return out;
}

std::string fewshot_query(const std::string& prefix, const std::string& question) {
  return prefix + "## Prompt: \n" + question + " \n### Preferred Response: \n";
}

std::string with_name(const std::string& name, const std::string& question) {
  return "Respond to the following prompt from " + name + ". " + kCater + name + "'s background.\n\n" + question + "\n";
}

std::string with_tag(const std::string& tag, const std::string& question) { return tag + " " + question; }

std::string with_persona(const std::string& persona, const std::string& question) {
  return persona + "\n\nRespond to the following prompt from this person. " + kCater + "their background.\n\n" + question;
}

}  // namespace persona::templates
