#include "nbslu/synthetic.h"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "nbslu/random.h"
#include "nbslu/representation.h"

namespace nbslu {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

SemanticTriplet tri(std::string act, std::string slot = "", std::string value = "") {
  return {std::move(act), std::move(slot), std::move(value)};
}

SynthTemplate ctx_free(std::string name, std::vector<std::string> user, std::vector<SemanticTriplet> triplets,
                       double weight = 1.0) {
  return {std::move(name), {}, std::move(user), std::move(triplets), false, weight};
}

// Replaces every "{slot}" in `text` using `bound`.
std::string fill(const std::string& text, const std::map<std::string, std::string>& bound) {
  std::string out;
  for (size_t i = 0; i < text.size();) {
    if (text[i] == '{') {
      const size_t close = text.find('}', i);
      if (close == std::string::npos) throw std::invalid_argument("unterminated placeholder in '" + text + "'");
      out += bound.at(text.substr(i + 1, close - i - 1));
      i = close + 1;
    } else {
      out.push_back(text[i++]);
    }
  }
  return out;
}

std::vector<std::string> placeholders(const std::string& text) {
  std::vector<std::string> out;
  for (size_t i = text.find('{'); i != std::string::npos; i = text.find('{', i + 1))
    out.push_back(text.substr(i + 1, text.find('}', i) - i - 1));
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

Sample render(const SynthSpec& spec, Rng& rng, const std::vector<size_t>& free_idx, const std::vector<double>& free_w,
              const std::vector<size_t>& ctx_idx, const std::vector<double>& ctx_w) {
  auto pick_weighted = [&](const std::vector<size_t>& idx, const std::vector<double>& w) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = rng.uniform() * total;
    for (size_t i = 0; i < idx.size(); ++i) {
      if (u < w[i]) return idx[i];
      u -= w[i];
    }
    return idx.back();
  };
  const bool use_ctx = !ctx_idx.empty() && rng.bernoulli(spec.context_fraction);
  const SynthTemplate& t = spec.templates[use_ctx ? pick_weighted(ctx_idx, ctx_w) : pick_weighted(free_idx, free_w)];

  const std::string& user = t.user[rng.below(t.user.size())];
  std::map<std::string, std::string> bound;
  for (const auto& slot : placeholders(user)) {
    const auto& vals = spec.values.at(slot);
    bound[slot] = vals[rng.below(vals.size())];
  }
  for (const auto& tr : t.triplets)
    for (const auto& slot : placeholders(tr.value))
      if (!bound.contains(slot)) bound[slot] = spec.values.at(slot)[rng.below(spec.values.at(slot).size())];

  Sample s;
  const auto& prompts = t.system.empty() ? spec.generic_prompts : t.system;
  s.system_utterance = prompts.empty() ? "" : prompts[rng.below(prompts.size())];
  s.transcript = fill(user, bound);
  std::vector<SemanticTriplet> gold;
  for (const auto& tr : t.triplets) gold.push_back({tr.act, tr.slot, fill(tr.value, bound)});
  s.gold = make_triplet_set(std::move(gold));

  const auto words = split_words(*s.transcript);
  const auto n = static_cast<size_t>(rng.range(static_cast<int64_t>(spec.n_min), static_cast<int64_t>(spec.n_max)));
  struct Hyp {
    std::string text;
    size_t errors;
  };
  std::vector<Hyp> hyps;
  for (size_t j = 0; j < n; ++j) {
    std::vector<std::string> out = words;
    size_t errors = 0;
    for (auto& w : out) {
      if (!rng.bernoulli(spec.substitution_prob)) continue;
      ++errors;
      const uint64_t kind = rng.below(3);
      if (kind < 2 || spec.filler_words.empty())
        w = confusions(w)[kind % 2];
      else
        w = spec.filler_words[rng.below(spec.filler_words.size())];
    }
    hyps.push_back({join(out), errors});
  }
  // Cleaner hypotheses rank higher, like a recognizer's confidence order.
  std::stable_sort(hyps.begin(), hyps.end(), [](const Hyp& a, const Hyp& b) { return a.errors < b.errors; });
  for (size_t j = 0; j < hyps.size(); ++j)
    s.hypotheses.push_back({hyps[j].text, -0.1 * static_cast<double>(j) - 0.5 * static_cast<double>(hyps[j].errors)});
  return s;
}

}  // namespace

void SynthSpec::validate() const {
  if (templates.empty()) throw std::invalid_argument("synthetic spec has an empty template set");
  if (!(substitution_prob >= 0.0 && substitution_prob < 1.0))
    throw std::invalid_argument("substitution_prob must be in [0, 1)");
  if (n_min < 1 || n_max > kMaxHypotheses || n_min > n_max)
    throw std::invalid_argument("hypothesis count range must satisfy 1 <= n_min <= n_max <= 10");
  if (!(context_fraction >= 0.0 && context_fraction <= 1.0))
    throw std::invalid_argument("context_fraction must be in [0, 1]");
  const bool has_ctx = std::any_of(templates.begin(), templates.end(), [](const auto& t) { return t.context_dependent; });
  const bool has_free = std::any_of(templates.begin(), templates.end(), [](const auto& t) { return !t.context_dependent; });
  if (context_fraction > 0.0 && !has_ctx)
    throw std::invalid_argument("context_fraction > 0 needs at least one context-dependent template");
  if (context_fraction < 1.0 && !has_free) throw std::invalid_argument("no context-free templates");
  for (const auto& t : templates) {
    if (t.user.empty()) throw std::invalid_argument("template " + t.name + " has no user wording");
    if (t.weight <= 0.0) throw std::invalid_argument("template " + t.name + " has non-positive weight");
    if (t.context_dependent && t.system.empty())
      throw std::invalid_argument("context-dependent template " + t.name + " needs its own system prompts");
    for (const auto& u : t.user)
      for (const auto& slot : placeholders(u))
        if (!values.contains(slot) || values.at(slot).empty())
          throw std::invalid_argument("template " + t.name + " uses unknown slot {" + slot + "}");
    for (const auto& tr : t.triplets) {
      if (tr.act.empty()) throw std::invalid_argument("template " + t.name + " has a triplet without act");
      for (const auto& slot : placeholders(tr.value))
        if (!values.contains(slot)) throw std::invalid_argument("template " + t.name + " uses unknown slot {" + slot + "}");
    }
  }
}

std::vector<std::string> confusions(const std::string& word) {
  std::string a = word.size() >= 3 ? word.substr(0, word.size() - 1) : word + "h";
  return {a, word + "s"};
}

SynthSpec default_synth_spec() {
  SynthSpec s;
  s.values = {
      {"area", {"centre", "north", "south", "east", "west"}},
      {"pricerange", {"cheap", "moderate", "expensive"}},
      {"food", {"italian", "chinese", "indian", "thai", "french", "british", "spanish", "korean", "turkish",
                "vietnamese"}},
  };
  s.generic_prompts = {
      "hello welcome to the restaurant system how may i help you",
      "what part of town do you have in mind",
      "what kind of food would you like",
      "would you like something in the cheap moderate or expensive price range",
      "is there anything else i can help you with",
      "sorry i did not catch that could you repeat",
  };
  s.filler_words = {"uh", "um", "the", "a", "and", "i", "it", "of"};
  s.templates = {
      ctx_free("inform_price", {"i want a {pricerange} restaurant", "{pricerange} restaurant please"},
               {tri("inform", "pricerange", "{pricerange}")}),
      ctx_free("inform_food", {"{food} food", "im looking for {food} food"}, {tri("inform", "food", "{food}")}),
      ctx_free("inform_area", {"in the {area} part of town", "{area} part of town please"},
               {tri("inform", "area", "{area}")}),
      ctx_free("inform_price_area", {"i want a {pricerange} restaurant in the {area} part of town"},
               {tri("inform", "pricerange", "{pricerange}"), tri("inform", "area", "{area}")}),
      ctx_free("inform_price_food", {"{pricerange} {food} restaurant"},
               {tri("inform", "pricerange", "{pricerange}"), tri("inform", "food", "{food}")}),
      ctx_free("inform_food_area", {"{food} food in the {area} of town"},
               {tri("inform", "food", "{food}"), tri("inform", "area", "{area}")}),
      ctx_free("request_phone", {"what is the phone number", "can i have the phone number"},
               {tri("request", "phone")}),
      ctx_free("request_addr", {"whats the address", "what is their address"}, {tri("request", "addr")}),
      ctx_free("request_postcode", {"what is the post code"}, {tri("request", "postcode")}, 0.5),
      ctx_free("request_addr_phone", {"can i have the address and phone number"},
               {tri("request", "addr"), tri("request", "phone")}, 0.5),
      ctx_free("thankyou_bye", {"thank you good bye"}, {tri("thankyou"), tri("bye")}),
      ctx_free("thankyou", {"thank you"}, {tri("thankyou")}, 0.5),
      ctx_free("bye", {"good bye"}, {tri("bye")}, 0.5),
      ctx_free("affirm", {"yes", "yes please"}, {tri("affirm")}, 0.5),
      ctx_free("negate", {"no"}, {tri("negate")}, 0.5),
      ctx_free("negate_inform_food", {"no i want {food} food"}, {tri("negate"), tri("inform", "food", "{food}")}, 0.5),
      ctx_free("confirm_price", {"is it {pricerange}"}, {tri("confirm", "pricerange", "{pricerange}")}, 0.5),
      ctx_free("confirm_area", {"is it in the {area}"}, {tri("confirm", "area", "{area}")}, 0.5),
      ctx_free("reqalts", {"anything else", "is there anything else"}, {tri("reqalts")}, 0.5),
  };
  const std::vector<std::string> dontcare = {"i dont care", "it doesnt matter", "any"};
  s.templates.push_back({"dontcare_area", {"what part of town do you have in mind"}, dontcare,
                         {tri("inform", "area", "dontcare")}, true, 1.0});
  s.templates.push_back({"dontcare_food", {"what kind of food would you like"}, dontcare,
                         {tri("inform", "food", "dontcare")}, true, 1.0});
  s.templates.push_back({"dontcare_price",
                         {"would you like something in the cheap moderate or expensive price range"},
                         dontcare,
                         {tri("inform", "pricerange", "dontcare")},
                         true,
                         1.0});
  return s;
}

ordered_json to_json(const SynthSpec& spec) {
  ordered_json j;
  j["seed"] = spec.seed;
  j["substitution_prob"] = spec.substitution_prob;
  j["n_min"] = spec.n_min;
  j["n_max"] = spec.n_max;
  j["context_fraction"] = spec.context_fraction;
  j["values"] = spec.values;
  j["generic_prompts"] = spec.generic_prompts;
  j["filler_words"] = spec.filler_words;
  j["templates"] = ordered_json::array();
  for (const auto& t : spec.templates) {
    ordered_json tj;
    tj["name"] = t.name;
    tj["system"] = t.system;
    tj["user"] = t.user;
    tj["triplets"] = ordered_json::array();
    for (const auto& tr : t.triplets) tj["triplets"].push_back({{"act", tr.act}, {"slot", tr.slot}, {"value", tr.value}});
    tj["context_dependent"] = t.context_dependent;
    tj["weight"] = t.weight;
    j["templates"].push_back(tj);
  }
  return j;
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s = default_synth_spec();
  s.seed = j.value("seed", s.seed);
  s.substitution_prob = j.value("substitution_prob", s.substitution_prob);
  s.n_min = j.value("n_min", s.n_min);
  s.n_max = j.value("n_max", s.n_max);
  s.context_fraction = j.value("context_fraction", s.context_fraction);
  if (j.contains("values")) s.values = j["values"].get<std::map<std::string, std::vector<std::string>>>();
  if (j.contains("generic_prompts")) s.generic_prompts = j["generic_prompts"].get<std::vector<std::string>>();
  if (j.contains("filler_words")) s.filler_words = j["filler_words"].get<std::vector<std::string>>();
  if (j.contains("templates")) {
    s.templates.clear();
    for (const auto& tj : j["templates"]) {
      SynthTemplate t;
      t.name = tj.value("name", std::string());
      t.system = tj.value("system", std::vector<std::string>{});
      t.user = tj.at("user").get<std::vector<std::string>>();
      for (const auto& tr : tj.at("triplets"))
        t.triplets.push_back({tr.at("act").get<std::string>(), tr.value("slot", std::string()),
                              tr.value("value", std::string())});
      t.context_dependent = tj.value("context_dependent", false);
      t.weight = tj.value("weight", 1.0);
      s.templates.push_back(std::move(t));
    }
  }
  s.validate();
  return s;
}

DatasetSplit generate_split(const SynthSpec& spec, size_t n, SplitName name) {
  spec.validate();
  if (n < 1) throw std::invalid_argument("split size must be >= 1");
  std::vector<size_t> free_idx, ctx_idx;
  std::vector<double> free_w, ctx_w;
  for (size_t i = 0; i < spec.templates.size(); ++i) {
    if (spec.templates[i].context_dependent) {
      ctx_idx.push_back(i);
      ctx_w.push_back(spec.templates[i].weight);
    } else {
      free_idx.push_back(i);
      free_w.push_back(spec.templates[i].weight);
    }
  }
  if (spec.context_fraction <= 0.0) ctx_idx.clear();
  if (free_idx.empty()) {
    free_idx = ctx_idx;
    free_w = ctx_w;
  }
  Rng rng(derive_seed(spec.seed, to_string(name)));
  DatasetSplit split{name, {}};
  for (size_t i = 0; i < n; ++i) {
    Sample s = render(spec, rng, free_idx, free_w, ctx_idx, ctx_w);
    char id[32];
    std::snprintf(id, sizeof id, "%s-%05zu", to_string(name).c_str(), i);
    s.id = id;
    split.samples.push_back(std::move(s));
  }
  return split;
}

SynthCorpus generate_synthetic(const SynthSpec& spec, size_t n_train, size_t n_dev, size_t n_test) {
  return {generate_split(spec, n_train, SplitName::kTrain), generate_split(spec, n_dev, SplitName::kDev),
          generate_split(spec, n_test, SplitName::kTest)};
}

}  // namespace nbslu
