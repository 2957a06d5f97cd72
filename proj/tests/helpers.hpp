#pragma once

// Shared fixtures: the 4-paper toy corpus used across module tests.
// P1@2000 (ACL); P2@2001 (ACL) cites P1; P3@2002 (COLING) cites P1,P2;
// P4@2002 (EMNLP) cites nothing.

#include <sstream>
#include <string>

#include "citeflow/corpus.hpp"

inline std::string toy_jsonl() {
  return
      R"({"id":"P1","year":2000,"venue":"ACL","authors":["A1"],"abstract":"alpha beta","outCitations":[]}
{"id":"P2","year":2001,"venue":"ACL","authors":["A1","A2"],"abstract":"beta gamma","outCitations":["P1"]}
{"id":"P3","year":2002,"venue":"COLING","authors":["A3"],"abstract":"gamma delta","outCitations":["P1","P2"]}
{"id":"P4","year":2002,"venue":"EMNLP","authors":["A2"],"abstract":"","outCitations":[]}
)";
}

inline citeflow::Corpus toy_corpus() {
  std::istringstream in(toy_jsonl());
  return citeflow::parse_corpus(in, citeflow::AliasTable::identity({"ACL", "COLING", "EMNLP"}));
}
