#ifndef NBSLU_SYNTHETIC_H_
#define NBSLU_SYNTHETIC_H_

// Template-driven restaurant-domain corpus with simulated N-best noise.
//
// Every sample renders one template: a clean user utterance (the transcript)
// and its gold triplets. Each of the N hypotheses is an independent noisy copy
// of the transcript in which every word is substituted with probability
// `substitution_prob`: two times in three by a near-miss spelling of the word,
// otherwise by a filler word. Context-dependent templates share their user
// wording across labels, so only the system prompt disambiguates them.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "nbslu/corpus.h"

namespace nbslu {

struct SynthTemplate {
  std::string name;
  // Specific prompts; empty means "draw from the generic prompt pool".
  std::vector<std::string> system;
  // Alternative user wordings; "{slot}" placeholders draw a value.
  std::vector<std::string> user;
  // Triplet values may be "{slot}" placeholders bound by the user wording.
  std::vector<SemanticTriplet> triplets;
  bool context_dependent = false;
  double weight = 1.0;
};

struct SynthSpec {
  std::map<std::string, std::vector<std::string>> values;  // slot -> value inventory
  std::vector<std::string> generic_prompts;
  std::vector<std::string> filler_words;
  std::vector<SynthTemplate> templates;
  double substitution_prob = 0.3;
  size_t n_min = 1;
  size_t n_max = 5;
  // Probability that a sample uses a context-dependent template.
  double context_fraction = 0.1;
  uint64_t seed = 7;

  // Throws std::invalid_argument on a broken invariant.
  void validate() const;
};

// Restaurant-domain inventory and templates.
SynthSpec default_synth_spec();

nlohmann::ordered_json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

// The two near-miss spellings used for substitutions of `word`.
std::vector<std::string> confusions(const std::string& word);

struct SynthCorpus {
  DatasetSplit train;
  DatasetSplit dev;
  DatasetSplit test;
};

SynthCorpus generate_synthetic(const SynthSpec& spec, size_t n_train, size_t n_dev, size_t n_test);
DatasetSplit generate_split(const SynthSpec& spec, size_t n, SplitName name);

}  // namespace nbslu

#endif  // NBSLU_SYNTHETIC_H_
