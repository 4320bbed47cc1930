// Synthetic goal-oriented dialogues for tests and desk-scale experiments.
//
// Under kRepeatDaDissatisfied satisfaction is a function of the DA sequence:
// an immediately repeated DA -> dissatisfied, otherwise "accept" in the final
// turn -> satisfied, otherwise neutral. Utterances are drawn from per-DA word
// lists with an entity the system echoes back.

#pragma once

#include "usda/corpus.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace usda::synthetic {

enum class Rule { kRepeatDaDissatisfied, kRandom };

const char* rule_name(Rule r);
Rule rule_from_name(const std::string& name);

/// Fixed DA inventory; kAccept is the designated closing act.
const DaVocab& da_inventory();
inline constexpr int kAccept = 5;

struct SyntheticOptions {
  std::size_t dialogues = 700;
  std::uint64_t seed = 0;
  Rule rule = Rule::kRepeatDaDissatisfied;
  int min_turns = 3;
  int max_turns = 7;
  std::array<double, 3> class_weights{1.0, 1.0, 1.0};  // dissatisfied, neutral, satisfied
  double confusion = 0.25;  // chance a user signature word comes from another DA
  bool final_system = false;  // give the final exchange a system response too
  int user_fillers = 3;
  int system_fillers = 2;
};

Satisfaction satisfaction_rule(const std::vector<int>& da_sequence, int accept = kAccept);

/// Dialogue ids are "syn-NNNNN"; every dialogue carries DA labels.
std::vector<Dialogue> generate(const SyntheticOptions& options);

}  // namespace usda::synthetic
