#include "usda/synthetic.hpp"

#include "usda/error.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

namespace usda::synthetic {

namespace {

using Rng = std::mt19937_64;

// Per-DA user words.
const std::vector<std::vector<std::string>>& user_words() {
  static const std::vector<std::vector<std::string>> words = {
      {"want", "looking", "need", "prefer", "like", "find"},
      {"what", "which", "address", "phone", "tell", "number"},
      {"sure", "right", "correct", "exactly", "confirm", "so"},
      {"no", "not", "wrong", "never", "nope", "dont"},
      {"else", "another", "other", "different", "alternative", "instead"},
      {"thanks", "great", "perfect", "book", "good", "done"},
  };
  return words;
}

// Per-DA system response words.
const std::vector<std::vector<std::string>>& system_words() {
  static const std::vector<std::vector<std::string>> words = {
      {"found", "options", "available", "matches"},
      {"located", "reachable", "listed", "details"},
      {"confirmed", "noted", "yes", "indeed"},
      {"sorry", "apologies", "understood", "updated"},
      {"alternatively", "also", "try", "suggest"},
      {"booked", "welcome", "reference", "enjoy"},
  };
  return words;
}

const std::vector<std::string>& entities() {
  static const std::vector<std::string> e = {
      "cambridge", "norwich", "ely",     "stevenage", "leicester", "peterborough", "bishops",
      "kings",     "london",  "oxford",  "birmingham", "broxbourne", "curry",      "pizza",
      "sushi",     "tapas",   "noodles", "museum",    "college",    "theatre",     "park",
      "hotel",     "hostel",  "guesthouse", "taxi",   "train",      "cinema",      "gallery",
      "pool",      "church"};
  return e;
}

const std::vector<std::string>& fillers() {
  static const std::vector<std::string> f = {"the", "a",    "please", "for",  "at",  "in",
                                             "to",  "of",   "and",    "that", "it",  "is",
                                             "on",  "with", "my",     "i",    "you", "this"};
  return f;
}

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

int random_act_except(int avoid, Rng& rng, bool allow_accept) {
  const int n = allow_accept ? 6 : 5;
  while (true) {
    const int a = std::uniform_int_distribution<int>(0, n - 1)(rng);
    if (a != avoid) return a;
  }
}

// A DA sequence whose rule outcome is `target`.
std::vector<int> sequence_for(Satisfaction target, int turns, Rng& rng) {
  std::vector<int> seq(static_cast<std::size_t>(turns));
  for (;;) {
    int prev = -1;
    for (int t = 0; t < turns; ++t) {
      const bool last = t == turns - 1;
      int a;
      if (last && target == Satisfaction::kSatisfied) {
        a = kAccept;
        if (prev == kAccept) break;
      } else if (last && target == Satisfaction::kNeutral) {
        a = random_act_except(prev, rng, false);
      } else {
        a = random_act_except(prev, rng, true);
      }
      seq[static_cast<std::size_t>(t)] = a;
      prev = a;
    }
    if (target == Satisfaction::kDissatisfied) {
      const int pos = std::uniform_int_distribution<int>(1, turns - 1)(rng);
      seq[static_cast<std::size_t>(pos)] = seq[static_cast<std::size_t>(pos - 1)];
    }
    if (satisfaction_rule(seq) == target) return seq;
  }
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::string user_text(int act, const std::string& entity, double confusion, int fillers_n,
                      Rng& rng) {
  std::vector<std::string> words;
  std::bernoulli_distribution confuse(confusion);
  for (int i = 0; i < 2; ++i) {
    const int source = confuse(rng) ? random_act_except(act, rng, true) : act;
    words.push_back(pick(user_words()[static_cast<std::size_t>(source)], rng));
  }
  words.push_back(entity);
  for (int i = 0; i < fillers_n; ++i) words.push_back(pick(fillers(), rng));
  std::shuffle(words.begin(), words.end(), rng);
  return join(words);
}

std::string system_text(int act, const std::string& entity, int fillers_n, Rng& rng) {
  std::vector<std::string> words;
  for (int i = 0; i < 2; ++i) words.push_back(pick(system_words()[static_cast<std::size_t>(act)], rng));
  words.push_back(entity);
  for (int i = 0; i < fillers_n; ++i) words.push_back(pick(fillers(), rng));
  std::shuffle(words.begin(), words.end(), rng);
  return join(words);
}

}  // namespace

const char* rule_name(Rule r) {
  return r == Rule::kRandom ? "random" : "repeat-da-dissatisfied";
}

Rule rule_from_name(const std::string& name) {
  if (name == "repeat-da-dissatisfied") return Rule::kRepeatDaDissatisfied;
  if (name == "random") return Rule::kRandom;
  throw Error("unknown synthetic rule: " + name);
}

const DaVocab& da_inventory() {
  static const DaVocab v = {"inform", "request", "confirm", "negate", "reqalts", "accept"};
  return v;
}

Satisfaction satisfaction_rule(const std::vector<int>& seq, int accept) {
  for (std::size_t t = 1; t < seq.size(); ++t) {
    if (seq[t] == seq[t - 1]) return Satisfaction::kDissatisfied;
  }
  if (!seq.empty() && seq.back() == accept) return Satisfaction::kSatisfied;
  return Satisfaction::kNeutral;
}

std::vector<Dialogue> generate(const SyntheticOptions& options) {
  if (options.min_turns < 2 || options.max_turns < options.min_turns) {
    throw Error("synthetic turns must satisfy 2 <= min_turns <= max_turns");
  }
  if (options.user_fillers < 0 || options.system_fillers < 0) throw Error("filler counts must be non-negative");
  if (options.confusion < 0.0 || options.confusion > 1.0) throw Error("confusion must be in [0,1]");
  Rng rng(options.seed);
  std::discrete_distribution<int> klass(options.class_weights.begin(), options.class_weights.end());
  std::uniform_int_distribution<int> length(options.min_turns, options.max_turns);
  std::vector<Dialogue> out;
  out.reserve(options.dialogues);
  for (std::size_t i = 0; i < options.dialogues; ++i) {
    const int turns = length(rng);
    std::vector<int> seq;
    Satisfaction label;
    if (options.rule == Rule::kRepeatDaDissatisfied) {
      label = static_cast<Satisfaction>(klass(rng));
      seq = sequence_for(label, turns, rng);
    } else {
      for (int t = 0; t < turns; ++t) seq.push_back(std::uniform_int_distribution<int>(0, 5)(rng));
      label = static_cast<Satisfaction>(std::uniform_int_distribution<int>(0, 2)(rng));
    }
    Dialogue d;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", i);
    d.id = id;
    const std::string& entity = pick(entities(), rng);
    for (int t = 0; t < turns; ++t) {
      const int act = seq[static_cast<std::size_t>(t)];
      Exchange ex;
      ex.user = {Speaker::kUser, user_text(act, entity, options.confusion, options.user_fillers, rng), {}};
      if (t + 1 < turns || options.final_system) {
        ex.system = Utterance{Speaker::kSystem, system_text(act, entity, options.system_fillers, rng), {}};
      }
      d.exchanges.push_back(std::move(ex));
    }
    d.da_labels = seq;
    d.satisfaction = label;
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace usda::synthetic
