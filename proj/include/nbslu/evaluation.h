#ifndef NBSLU_EVALUATION_H_
#define NBSLU_EVALUATION_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "nbslu/config.h"
#include "nbslu/corpus.h"
#include "nbslu/model.h"
#include "nbslu/representation.h"

namespace nbslu {

// Micro-averaged triplet precision/recall/F1 plus exact-set-match accuracy.
// Empty denominators resolve to 1.0: with nothing to find and nothing found
// the score is perfect.
struct MetricsReport {
  size_t tp = 0;
  size_t fp = 0;
  size_t fn = 0;
  size_t exact_matches = 0;
  size_t n_samples = 0;
  double precision = 1.0;
  double recall = 1.0;
  double f1 = 1.0;
  double accuracy = 1.0;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Fills the ratio fields from the counts.
void finalize(MetricsReport& m);

struct LabeledSet {
  std::string id;
  TripletSet triplets;
};

// Matches samples by id. Throws DataError listing ids missing on either side.
MetricsReport score(const std::vector<LabeledSet>& predictions, const std::vector<LabeledSet>& gold);
// Position-aligned variant; both vectors must have equal length.
MetricsReport score_aligned(const std::vector<TripletSet>& predictions, const std::vector<TripletSet>& gold);

struct PredictionRecord {
  std::string id;
  TripletSet triplets;
  std::vector<double> presence;
};

struct EvalResult {
  MetricsReport metrics;
  std::vector<PredictionRecord> predictions;  // split order
};

// Dropout-free decode of every sample followed by scoring against its gold.
EvalResult evaluate(const SluModel& model, const DatasetSplit& split, const LabelSpace& labels, const Vocabulary& vocab,
                    double threshold, const InputOptions& input, size_t batch_size = 32);

nlohmann::ordered_json to_json(const MetricsReport& m);
MetricsReport metrics_from_json(const nlohmann::json& j);
void write_metrics(const MetricsReport& m, const std::filesystem::path& path);

// One JSON record per line: {"id", "triplets": [...], "presence": [...]}.
void write_predictions(const std::vector<PredictionRecord>& preds, std::ostream& out);
void write_predictions(const std::vector<PredictionRecord>& preds, const std::filesystem::path& path);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

}  // namespace nbslu

#endif  // NBSLU_EVALUATION_H_
