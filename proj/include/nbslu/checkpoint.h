#ifndef NBSLU_CHECKPOINT_H_
#define NBSLU_CHECKPOINT_H_

// Model directory layout:
//   manifest.json  encoder config, run config, label space, tensor table
//                  (name, shape, byte offset) and seed provenance
//   params.bin     every tensor as little-endian IEEE-754 doubles, in
//                  manifest order
//   vocab.tsv      token<TAB>id

#include <filesystem>

#include "json.hpp"
#include "nbslu/config.h"
#include "nbslu/corpus.h"
#include "nbslu/model.h"
#include "nbslu/representation.h"

namespace nbslu {

struct Checkpoint {
  SluModel model;
  Vocabulary vocab;
  LabelSpace labels;
  RunConfig config;
  nlohmann::json provenance;
};

nlohmann::ordered_json to_json(const LabelSpace& labels);
LabelSpace label_space_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& dir, const SluModel& model, const Vocabulary& vocab,
                     const LabelSpace& labels, const RunConfig& config, const nlohmann::json& provenance = {});

// Validates tensor names and shapes against the manifest's encoder config and
// label space, and the vocabulary size against the config.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace nbslu

#endif  // NBSLU_CHECKPOINT_H_
