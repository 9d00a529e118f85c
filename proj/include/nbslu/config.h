#ifndef NBSLU_CONFIG_H_
#define NBSLU_CONFIG_H_

// Run configuration: model / train / data sections, named profiles, and JSON
// (de)serialization. Resolution order is profile, then config file, then
// command-line overrides.

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "nbslu/encoder.h"
#include "nbslu/representation.h"

namespace nbslu {

struct TrainConfig {
  double lr = 5e-4;
  size_t batch_size = 16;
  double dropout = 0.1;
  double warmup_ratio = 0.1;
  double weight_decay = 0.01;
  size_t max_epochs = 50;
  size_t patience = 10;
  uint64_t seed = 13;
  double threshold = 0.5;
  double clip_norm = 1.0;  // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-6;
  // Also score the training split after each epoch (costs one extra pass).
  bool eval_train = false;

  // Throws std::invalid_argument on a broken invariant.
  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct DataConfig {
  InputOptions input;
  int min_freq = 1;

  void validate() const;
  friend bool operator==(const DataConfig& a, const DataConfig& b) {
    return a.min_freq == b.min_freq && a.input.max_len == b.input.max_len && a.input.n_cap == b.input.n_cap &&
           a.input.use_context == b.input.use_context && a.input.sep_after_context == b.input.sep_after_context;
  }
};

struct RunConfig {
  std::string profile = "desk";
  EncoderConfig model;  // vocab_size is filled in once the vocabulary exists
  TrainConfig train;
  DataConfig data;

  // Encoder config with vocab size and dropout resolved.
  EncoderConfig encoder_config(size_t vocab_size) const;
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// "desk": small encoder trained from scratch. "paper": the published
// fine-tuning hyperparameters on a BERT-base-shaped encoder.
RunConfig profile_config(const std::string& name);

nlohmann::ordered_json to_json(const EncoderConfig& c);
nlohmann::ordered_json to_json(const TrainConfig& c);
nlohmann::ordered_json to_json(const DataConfig& c);
nlohmann::ordered_json to_json(const RunConfig& c);

// Overlays the keys present in `j` onto `c`; unknown keys are rejected.
void apply_json(const nlohmann::json& j, EncoderConfig& c);
void apply_json(const nlohmann::json& j, TrainConfig& c);
void apply_json(const nlohmann::json& j, DataConfig& c);
void apply_json(const nlohmann::json& j, RunConfig& c);

RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace nbslu

#endif  // NBSLU_CONFIG_H_
