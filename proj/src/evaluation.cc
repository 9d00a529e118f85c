#include "nbslu/evaluation.h"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>

namespace nbslu {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

void count(const TripletSet& pred, const TripletSet& gold, MetricsReport& m) {
  // Both sides are sorted and unique.
  size_t i = 0, j = 0, tp = 0;
  while (i < pred.size() && j < gold.size()) {
    if (pred[i] < gold[j]) {
      ++i;
    } else if (gold[j] < pred[i]) {
      ++j;
    } else {
      ++tp, ++i, ++j;
    }
  }
  m.tp += tp;
  m.fp += pred.size() - tp;
  m.fn += gold.size() - tp;
  m.exact_matches += (tp == pred.size() && tp == gold.size());
  ++m.n_samples;
}

}  // namespace

void finalize(MetricsReport& m) {
  const auto ratio = [](size_t num, size_t den) {
    return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.recall = ratio(m.tp, m.tp + m.fn);
  if (m.tp + m.fp + m.fn == 0)
    m.f1 = 1.0;
  else if (m.tp == 0)
    m.f1 = 0.0;
  else
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  m.accuracy = ratio(m.exact_matches, m.n_samples);
}

MetricsReport score_aligned(const std::vector<TripletSet>& predictions, const std::vector<TripletSet>& gold) {
  if (predictions.size() != gold.size()) throw std::invalid_argument("score_aligned: size mismatch");
  MetricsReport m;
  for (size_t i = 0; i < gold.size(); ++i) count(make_triplet_set(predictions[i]), make_triplet_set(gold[i]), m);
  finalize(m);
  return m;
}

MetricsReport score(const std::vector<LabeledSet>& predictions, const std::vector<LabeledSet>& gold) {
  std::map<std::string, const TripletSet*> pred_by_id;
  for (const auto& p : predictions)
    if (!pred_by_id.emplace(p.id, &p.triplets).second) throw DataError("duplicate prediction id " + p.id);
  std::vector<std::string> missing_pred;
  std::map<std::string, bool> gold_ids;
  for (const auto& g : gold) {
    if (!gold_ids.emplace(g.id, true).second) throw DataError("duplicate gold id " + g.id);
    if (!pred_by_id.contains(g.id)) missing_pred.push_back(g.id);
  }
  std::vector<std::string> missing_gold;
  for (const auto& p : predictions)
    if (!gold_ids.contains(p.id)) missing_gold.push_back(p.id);
  if (!missing_pred.empty() || !missing_gold.empty()) {
    std::string msg = "sample id mismatch;";
    if (!missing_pred.empty()) {
      msg += " missing predictions:";
      for (const auto& id : missing_pred) msg += " " + id;
      msg += ";";
    }
    if (!missing_gold.empty()) {
      msg += " missing gold:";
      for (const auto& id : missing_gold) msg += " " + id;
    }
    throw DataError(msg);
  }
  MetricsReport m;
  for (const auto& g : gold) count(make_triplet_set(*pred_by_id.at(g.id)), make_triplet_set(g.triplets), m);
  finalize(m);
  return m;
}

EvalResult evaluate(const SluModel& model, const DatasetSplit& split, const LabelSpace& labels, const Vocabulary& vocab,
                    double threshold, const InputOptions& input, size_t batch_size) {
  if (labels.num_pairs() != model.head.num_pairs())
    throw std::invalid_argument("label space does not match the model's presence heads");
  if (vocab.size() != model.config.vocab_size)
    throw std::invalid_argument("vocabulary does not match the model's embedding table");
  BatchOptions opts;
  opts.batch_size = batch_size;
  opts.input = input;
  EvalResult result;
  result.predictions.resize(split.size());
  std::vector<TripletSet> preds(split.size()), gold(split.size());
  for (const Batch& b : make_batches(split, labels, vocab, opts)) {
    const StcScores scores = score_batch(model, b);
    for (size_t r = 0; r < b.rows; ++r) {
      const Prediction p = prediction_at(scores, model.head, r);
      const size_t idx = b.sample_index[r];
      auto& rec = result.predictions[idx];
      rec.id = b.sample_ids[r];
      rec.triplets = decode(p, labels, threshold);
      rec.presence = p.presence;
      preds[idx] = rec.triplets;
      gold[idx] = b.gold[r];
    }
  }
  result.metrics = score_aligned(preds, gold);
  return result;
}

ordered_json to_json(const MetricsReport& m) {
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"exact_matches", m.exact_matches},
          {"n_samples", m.n_samples},
          {"precision", m.precision},
          {"recall", m.recall},
          {"f1", m.f1},
          {"accuracy", m.accuracy}};
}

MetricsReport metrics_from_json(const json& j) {
  MetricsReport m;
  m.tp = j.at("tp").get<size_t>();
  m.fp = j.at("fp").get<size_t>();
  m.fn = j.at("fn").get<size_t>();
  m.exact_matches = j.at("exact_matches").get<size_t>();
  m.n_samples = j.at("n_samples").get<size_t>();
  finalize(m);
  return m;
}

void write_metrics(const MetricsReport& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_json(m).dump(2) << '\n';
}

void write_predictions(const std::vector<PredictionRecord>& preds, std::ostream& out) {
  for (const auto& p : preds) {
    ordered_json j;
    j["id"] = p.id;
    j["triplets"] = ordered_json::array();
    for (const auto& t : p.triplets) j["triplets"].push_back({{"act", t.act}, {"slot", t.slot}, {"value", t.value}});
    j["presence"] = p.presence;
    out << j.dump() << '\n';
  }
}

void write_predictions(const std::vector<PredictionRecord>& preds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_predictions(preds, out);
}

std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      PredictionRecord p;
      p.id = j.at("id").get<std::string>();
      std::vector<SemanticTriplet> ts;
      for (const auto& t : j.at("triplets"))
        ts.push_back({t.at("act").get<std::string>(), t.at("slot").get<std::string>(), t.at("value").get<std::string>()});
      p.triplets = make_triplet_set(std::move(ts));
      p.presence = j.value("presence", std::vector<double>{});
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace nbslu
