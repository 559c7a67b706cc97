#pragma once

#include <json.hpp>

#include "dualplay/grading.hpp"

namespace dualplay::detail {

using nlohmann::ordered_json;

inline ordered_json qa_to_json(const QAPair& qa) {
  ordered_json j;
  j["question"] = qa.question;
  j["gold_answer"] = qa.gold_answer;
  j["raw_completion"] = qa.raw_completion;
  j["knowledge_id"] = qa.knowledge_id ? ordered_json(*qa.knowledge_id) : ordered_json(nullptr);
  j["format_ok"] = qa.format_ok;
  return j;
}

inline QAPair qa_from_json(const ordered_json& j) {
  QAPair qa;
  qa.question = j.at("question").get<std::string>();
  qa.gold_answer = j.at("gold_answer").get<std::string>();
  qa.raw_completion = j.at("raw_completion").get<std::string>();
  if (!j.at("knowledge_id").is_null()) qa.knowledge_id = j.at("knowledge_id").get<KnowledgeId>();
  qa.format_ok = j.at("format_ok").get<bool>();
  return qa;
}

}  // namespace dualplay::detail
