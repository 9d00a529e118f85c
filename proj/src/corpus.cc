#include "nbslu/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nbslu/random.h"

namespace nbslu {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string scalar_text(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "";
  return v.dump();
}

json read_json_file(const std::filesystem::path& p, const std::string& call_id) {
  std::ifstream in(p);
  if (!in) throw DataError("call " + call_id + ": cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("call " + call_id + ": cannot parse " + p.filename().string() + ": " + e.what());
  }
}

std::vector<SemanticTriplet> flatten_semantics(const json& acts) {
  std::vector<SemanticTriplet> out;
  if (!acts.is_array()) throw DataError("semantics list is not an array");
  for (const auto& entry : acts) {
    const std::string act = lower(entry.at("act").get<std::string>());
    if (act.empty()) throw DataError("semantics entry with empty act");
    const json slots = entry.contains("slots") ? entry.at("slots") : json::array();
    if (slots.empty()) {
      out.push_back({act, "", ""});
      continue;
    }
    for (const auto& binding : slots) {
      if (!binding.is_array() || binding.empty()) throw DataError("malformed slot binding in act " + act);
      std::string slot = lower(scalar_text(binding[0]));
      std::string value = binding.size() > 1 ? lower(scalar_text(binding[1])) : "";
      // request(slot=food) names the requested slot; fold it into the pair.
      if (act == "request" && slot == "slot") {
        slot = value;
        value.clear();
      }
      if (slot.empty()) value.clear();
      out.push_back({act, slot, value});
    }
  }
  return out;
}

}  // namespace

std::string to_string(const SemanticTriplet& t) {
  if (t.slot.empty()) return t.act + "()";
  if (t.value.empty()) return t.act + "(" + t.slot + ")";
  return t.act + "(" + t.slot + "=" + t.value + ")";
}

TripletSet make_triplet_set(std::vector<SemanticTriplet> triplets) {
  std::sort(triplets.begin(), triplets.end());
  triplets.erase(std::unique(triplets.begin(), triplets.end()), triplets.end());
  return triplets;
}

std::string to_string(SplitName n) {
  switch (n) {
    case SplitName::kTrain: return "train";
    case SplitName::kDev: return "dev";
    case SplitName::kTest: return "test";
  }
  return "?";
}

void validate_sample(const Sample& s) {
  if (s.id.empty()) throw DataError("sample with empty id");
  if (s.hypotheses.empty() || s.hypotheses.size() > kMaxHypotheses) {
    throw DataError("sample " + s.id + ": hypothesis count " + std::to_string(s.hypotheses.size()) +
                    " outside [1, " + std::to_string(kMaxHypotheses) + "]");
  }
  for (size_t i = 0; i < s.gold.size(); ++i) {
    const auto& t = s.gold[i];
    if (t.act.empty()) throw DataError("sample " + s.id + ": triplet with empty act");
    if (t.slot.empty() && !t.value.empty())
      throw DataError("sample " + s.id + ": triplet " + t.act + " has a value but no slot");
    if (i > 0 && !(s.gold[i - 1] < t)) throw DataError("sample " + s.id + ": gold set not canonical");
  }
}

// ---------------------------------------------------------------- LabelSpace

LabelSpace::LabelSpace(std::vector<ActSlot> pairs, std::vector<std::vector<std::string>> values)
    : pairs_(std::move(pairs)), values_(std::move(values)) {
  if (pairs_.size() != values_.size()) throw std::invalid_argument("LabelSpace: pairs/values size mismatch");
  for (size_t i = 1; i < pairs_.size(); ++i)
    if (!(pairs_[i - 1] < pairs_[i])) throw std::invalid_argument("LabelSpace: pairs must be sorted and unique");
  for (const auto& v : values_)
    if (!std::is_sorted(v.begin(), v.end()) || std::adjacent_find(v.begin(), v.end()) != v.end())
      throw std::invalid_argument("LabelSpace: value lists must be sorted and unique");
}

std::optional<size_t> LabelSpace::pair_index(const std::string& act, const std::string& slot) const {
  const ActSlot key{act, slot};
  auto it = std::lower_bound(pairs_.begin(), pairs_.end(), key);
  if (it == pairs_.end() || *it != key) return std::nullopt;
  return static_cast<size_t>(it - pairs_.begin());
}

std::optional<size_t> LabelSpace::value_index(size_t pair, const std::string& value) const {
  const auto& v = values_.at(pair);
  auto it = std::lower_bound(v.begin(), v.end(), value);
  if (it == v.end() || *it != value) return std::nullopt;
  return static_cast<size_t>(it - v.begin());
}

LabelSpace build_label_space(const DatasetSplit& train) {
  if (train.samples.empty()) throw DataError("no labels in training data: training split is empty");
  std::map<ActSlot, std::set<std::string>> seen;
  std::set<ActSlot> with_empty;
  for (const auto& s : train.samples) {
    for (const auto& t : s.gold) {
      auto& vals = seen[{t.act, t.slot}];
      if (t.value.empty())
        with_empty.insert({t.act, t.slot});
      else
        vals.insert(t.value);
    }
  }
  if (seen.empty()) throw DataError("no labels in training data");
  std::vector<ActSlot> pairs;
  std::vector<std::vector<std::string>> values;
  size_t mixed = 0;
  for (const auto& [pair, vals] : seen) {
    pairs.push_back(pair);
    values.emplace_back(vals.begin(), vals.end());
    if (!vals.empty() && with_empty.contains(pair)) {
      ++mixed;
      std::cerr << "warning: pair " << pair.first << "(" << pair.second
                << ") seen with and without a value; empty occurrences cannot be predicted\n";
    }
  }
  LabelSpace space(std::move(pairs), std::move(values));
  space.set_mixed_value_warnings(mixed);
  return space;
}

// ---------------------------------------------------------------- DSTC2

std::vector<SemanticTriplet> flatten_dstc2_semantics(const std::string& json_text) {
  return flatten_semantics(json::parse(json_text));
}

DatasetSplit import_dstc2(const std::filesystem::path& root_dir, const std::filesystem::path& flist,
                          SplitName name) {
  std::ifstream list(flist);
  if (!list) throw DataError("cannot open file list " + flist.string());
  DatasetSplit split{name, {}};
  std::set<std::string> ids;
  std::string call_id;
  while (std::getline(list, call_id)) {
    while (!call_id.empty() && std::isspace(static_cast<unsigned char>(call_id.back()))) call_id.pop_back();
    if (call_id.empty()) continue;
    const auto dir = root_dir / call_id;
    const json log = read_json_file(dir / "log.json", call_id);
    const json label = read_json_file(dir / "label.json", call_id);
    try {
      const auto& log_turns = log.at("turns");
      const auto& label_turns = label.at("turns");
      if (log_turns.size() != label_turns.size()) {
        throw DataError("call " + call_id + ": turn-count mismatch (log " + std::to_string(log_turns.size()) +
                        ", label " + std::to_string(label_turns.size()) + ")");
      }
      for (size_t t = 0; t < log_turns.size(); ++t) {
        const auto& lt = log_turns[t];
        const auto& bt = label_turns[t];
        Sample s;
        s.id = call_id + ":" + std::to_string(t);
        // The system prompt of a DSTC2 turn precedes the user's reply within it.
        if (lt.contains("output") && lt["output"].contains("transcript"))
          s.system_utterance = lower(scalar_text(lt["output"]["transcript"]));
        const auto& hyps = lt.at("input").at("live").at("asr-hyps");
        for (const auto& h : hyps) {
          if (s.hypotheses.size() == kMaxHypotheses) break;
          s.hypotheses.push_back({lower(h.at("asr-hyp").get<std::string>()), h.value("score", 0.0)});
        }
        if (s.hypotheses.empty()) s.hypotheses.push_back({"", 0.0});
        if (bt.contains("transcription")) s.transcript = lower(scalar_text(bt["transcription"]));
        s.gold = make_triplet_set(flatten_semantics(bt.at("semantics").at("json")));
        if (!ids.insert(s.id).second) throw DataError("duplicate sample id " + s.id);
        validate_sample(s);
        split.samples.push_back(std::move(s));
      }
    } catch (const json::exception& e) {
      throw DataError("call " + call_id + ": malformed record: " + e.what());
    } catch (const DataError& e) {
      const std::string msg = e.what();
      if (msg.find(call_id) != std::string::npos) throw;
      throw DataError("call " + call_id + ": " + msg);
    }
  }
  return split;
}

// ---------------------------------------------------------------- canonical

namespace {

Sample parse_canonical(const json& j) {
  Sample s;
  s.id = j.at("id").get<std::string>();
  s.system_utterance = j.value("system", std::string());
  for (const auto& h : j.at("asr_hyps")) s.hypotheses.push_back({h.at("text").get<std::string>(), h.value("score", 0.0)});
  if (j.contains("transcript") && !j["transcript"].is_null()) s.transcript = j["transcript"].get<std::string>();
  std::vector<SemanticTriplet> ts;
  for (const auto& t : j.at("triplets"))
    ts.push_back({t.at("act").get<std::string>(), t.value("slot", std::string()), t.value("value", std::string())});
  s.gold = make_triplet_set(std::move(ts));
  return s;
}

}  // namespace

DatasetSplit read_canonical(std::istream& in, SplitName name) {
  DatasetSplit split{name, {}};
  std::set<std::string> ids;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Sample s;
    try {
      s = parse_canonical(json::parse(line));
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    try {
      validate_sample(s);
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!ids.insert(s.id).second) throw DataError("line " + std::to_string(lineno) + ": duplicate id " + s.id);
    split.samples.push_back(std::move(s));
  }
  return split;
}

DatasetSplit read_canonical(const std::filesystem::path& path, SplitName name) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_canonical(in, name);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string to_canonical_line(const Sample& s) {
  ordered_json j;
  j["id"] = s.id;
  j["system"] = s.system_utterance;
  j["asr_hyps"] = ordered_json::array();
  for (const auto& h : s.hypotheses) j["asr_hyps"].push_back({{"text", h.text}, {"score", h.score}});
  if (s.transcript) j["transcript"] = *s.transcript;
  j["triplets"] = ordered_json::array();
  for (const auto& t : s.gold) j["triplets"].push_back({{"act", t.act}, {"slot", t.slot}, {"value", t.value}});
  return j.dump();
}

void write_canonical(const DatasetSplit& split, std::ostream& out) {
  for (const auto& s : split.samples) out << to_canonical_line(s) << '\n';
}

void write_canonical(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_canonical(split, out);
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------- subsampling

std::string label_signature(const Sample& s) {
  std::set<ActSlot> pairs;
  for (const auto& t : s.gold) pairs.insert({t.act, t.slot});
  std::string key;
  for (const auto& [a, sl] : pairs) {
    key += a;
    key += '(';
    key += sl;
    key += ");";
  }
  return key;
}

namespace {

std::map<std::string, std::vector<size_t>> strata_of(const DatasetSplit& train) {
  std::map<std::string, std::vector<size_t>> strata;
  for (size_t i = 0; i < train.samples.size(); ++i) strata[label_signature(train.samples[i])].push_back(i);
  return strata;
}

void check_percent(double percent) {
  if (!(percent > 0.0) || percent > 100.0)
    throw std::invalid_argument("subsample percentage must be in (0, 100], got " + std::to_string(percent));
}

std::vector<std::pair<std::string, size_t>> quotas_for(const std::map<std::string, std::vector<size_t>>& strata,
                                                       size_t total_size, double percent) {
  const auto total = static_cast<size_t>(std::llround(percent * static_cast<double>(total_size) / 100.0));
  struct Entry {
    std::string key;
    size_t quota;
    double remainder;
  };
  std::vector<Entry> entries;
  size_t assigned = 0;
  for (const auto& [key, members] : strata) {
    const double exact = percent * static_cast<double>(members.size()) / 100.0;
    const double fl = std::floor(exact);
    entries.push_back({key, static_cast<size_t>(fl), exact - fl});
    assigned += static_cast<size_t>(fl);
  }
  // Largest remainder; ties go to the lexicographically smaller key.
  std::vector<size_t> order(entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return entries[a].remainder > entries[b].remainder; });
  for (size_t i = 0; assigned < total && i < order.size(); ++i) {
    auto& e = entries[order[i]];
    if (e.quota < strata.at(e.key).size()) {
      ++e.quota;
      ++assigned;
    }
  }
  std::vector<std::pair<std::string, size_t>> out;
  for (auto& e : entries) out.emplace_back(std::move(e.key), e.quota);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, size_t>> stratum_quotas(const DatasetSplit& train, double percent) {
  check_percent(percent);
  return quotas_for(strata_of(train), train.samples.size(), percent);
}

DatasetSplit stratified_subsample(const DatasetSplit& train, double percent, uint64_t seed) {
  check_percent(percent);
  const auto strata = strata_of(train);
  const auto quotas = quotas_for(strata, train.samples.size(), percent);
  std::vector<size_t> chosen;
  for (const auto& [key, quota] : quotas) {
    std::vector<size_t> members = strata.at(key);
    Rng rng(derive_seed(seed, key));
    // Partial Fisher-Yates: the first `quota` slots are a uniform draw, and
    // smaller quotas under the same seed select a prefix of larger ones.
    for (size_t i = 0; i < quota; ++i) {
      const size_t j = i + static_cast<size_t>(rng.below(members.size() - i));
      std::swap(members[i], members[j]);
    }
    chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota));
  }
  std::sort(chosen.begin(), chosen.end());
  DatasetSplit out{train.name, {}};
  out.samples.reserve(chosen.size());
  for (size_t i : chosen) out.samples.push_back(train.samples[i]);
  return out;
}

}  // namespace nbslu
