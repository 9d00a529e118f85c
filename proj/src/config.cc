#include "nbslu/config.h"

#include <fstream>
#include <set>
#include <stdexcept>

namespace nbslu {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw std::invalid_argument("config section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw std::invalid_argument("unknown config key '" + section + "." + k + "'");
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("train.lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("train.dropout must be in [0, 1)");
  if (!(warmup_ratio >= 0.0 && warmup_ratio < 1.0)) throw std::invalid_argument("train.warmup_ratio must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train.weight_decay must be >= 0");
  if (max_epochs < 1) throw std::invalid_argument("train.max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("train.patience must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("train.threshold must be in (0, 1)");
}

void DataConfig::validate() const {
  if (input.max_len < 8) throw std::invalid_argument("data.max_len must be >= 8");
  if (input.n_cap < 1 || input.n_cap > kMaxHypotheses) throw std::invalid_argument("data.n_cap must be in [1, 10]");
  if (min_freq < 1) throw std::invalid_argument("data.min_freq must be >= 1");
}

EncoderConfig RunConfig::encoder_config(size_t vocab_size) const {
  EncoderConfig c = model;
  c.vocab_size = vocab_size;
  c.dropout = train.dropout;
  return c;
}

void RunConfig::validate() const {
  train.validate();
  data.validate();
  EncoderConfig c = encoder_config(std::max<size_t>(model.vocab_size, kNumReserved));
  c.validate();
  if (model.max_positions < data.input.max_len)
    throw std::invalid_argument("model.max_positions must be >= data.max_len");
}

RunConfig profile_config(const std::string& name) {
  RunConfig c;
  c.profile = name;
  if (name == "desk") {
    c.model.d_model = 128;
    c.model.n_layers = 4;
    c.model.n_heads = 4;
    c.model.d_ff = 512;
    c.model.max_positions = 128;
    c.model.use_pooler = false;
    c.train.lr = 1e-3;
    c.train.dropout = 0.1;
  } else if (name == "paper") {
    c.model.d_model = 768;
    c.model.n_layers = 12;
    c.model.n_heads = 12;
    c.model.d_ff = 3072;
    c.model.max_positions = 512;
    c.train.lr = 3e-5;
    c.train.dropout = 0.3;
  } else {
    throw std::invalid_argument("unknown profile '" + name + "' (expected desk or paper)");
  }
  c.train.batch_size = 16;
  c.train.warmup_ratio = 0.1;
  c.train.weight_decay = 0.01;
  c.train.max_epochs = 50;
  c.train.patience = 10;
  c.data.input.max_len = 128;
  c.data.input.n_cap = 10;
  return c;
}

ordered_json to_json(const EncoderConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},          {"n_layers", c.n_layers},
          {"n_heads", c.n_heads},       {"d_ff", c.d_ff},                {"max_positions", c.max_positions},
          {"dropout", c.dropout},       {"layernorm_eps", c.layernorm_eps}, {"use_pooler", c.use_pooler}};
}

ordered_json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"dropout", c.dropout},
          {"warmup_ratio", c.warmup_ratio},
          {"weight_decay", c.weight_decay},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"seed", c.seed},
          {"threshold", c.threshold},
          {"clip_norm", c.clip_norm},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"eval_train", c.eval_train}};
}

ordered_json to_json(const DataConfig& c) {
  return {{"max_len", c.input.max_len},
          {"n_cap", c.input.n_cap},
          {"use_context", c.input.use_context},
          {"sep_after_context", c.input.sep_after_context},
          {"min_freq", c.min_freq}};
}

ordered_json to_json(const RunConfig& c) {
  ordered_json model = to_json(c.model);
  model.erase("vocab_size");
  model.erase("dropout");
  return {{"profile", c.profile}, {"model", model}, {"train", to_json(c.train)}, {"data", to_json(c.data)}};
}

void apply_json(const json& j, EncoderConfig& c) {
  reject_unknown(j, {"vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_positions", "dropout",
                     "layernorm_eps", "use_pooler"},
                 "model");
  take(j, "vocab_size", c.vocab_size);
  take(j, "d_model", c.d_model);
  take(j, "n_layers", c.n_layers);
  take(j, "n_heads", c.n_heads);
  take(j, "d_ff", c.d_ff);
  take(j, "max_positions", c.max_positions);
  take(j, "dropout", c.dropout);
  take(j, "layernorm_eps", c.layernorm_eps);
  take(j, "use_pooler", c.use_pooler);
}

void apply_json(const json& j, TrainConfig& c) {
  reject_unknown(j, {"lr", "batch_size", "dropout", "warmup_ratio", "weight_decay", "max_epochs", "patience", "seed",
                     "threshold", "clip_norm", "beta1", "beta2", "adam_eps", "eval_train"},
                 "train");
  take(j, "lr", c.lr);
  take(j, "batch_size", c.batch_size);
  take(j, "dropout", c.dropout);
  take(j, "warmup_ratio", c.warmup_ratio);
  take(j, "weight_decay", c.weight_decay);
  take(j, "max_epochs", c.max_epochs);
  take(j, "patience", c.patience);
  take(j, "seed", c.seed);
  take(j, "threshold", c.threshold);
  take(j, "clip_norm", c.clip_norm);
  take(j, "beta1", c.beta1);
  take(j, "beta2", c.beta2);
  take(j, "adam_eps", c.adam_eps);
  take(j, "eval_train", c.eval_train);
}

void apply_json(const json& j, DataConfig& c) {
  reject_unknown(j, {"max_len", "n_cap", "use_context", "sep_after_context", "min_freq"}, "data");
  take(j, "max_len", c.input.max_len);
  take(j, "n_cap", c.input.n_cap);
  take(j, "use_context", c.input.use_context);
  take(j, "sep_after_context", c.input.sep_after_context);
  take(j, "min_freq", c.min_freq);
}

void apply_json(const json& j, RunConfig& c) {
  reject_unknown(j, {"profile", "model", "train", "data"}, "");
  if (j.contains("profile") && j["profile"].get<std::string>() != c.profile) {
    c = profile_config(j["profile"].get<std::string>());
  }
  if (j.contains("model")) apply_json(j["model"], c.model);
  if (j.contains("train")) apply_json(j["train"], c.train);
  if (j.contains("data")) apply_json(j["data"], c.data);
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c = profile_config(j.value("profile", std::string("desk")));
  apply_json(j, c);
  return c;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace nbslu
