#ifndef NBSLU_CORPUS_H_
#define NBSLU_CORPUS_H_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbslu {

// Raised when input data violates a corpus invariant (bad record, N out of
// range, inconsistent call files).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr size_t kMaxHypotheses = 10;

struct AsrHypothesis {
  std::string text;  // lowercase, may be empty
  double score = 0.0;

  friend bool operator==(const AsrHypothesis&, const AsrHypothesis&) = default;
};

// act(slot=value). An empty slot forces an empty value.
struct SemanticTriplet {
  std::string act;
  std::string slot;
  std::string value;

  friend auto operator<=>(const SemanticTriplet&, const SemanticTriplet&) = default;
  friend bool operator==(const SemanticTriplet&, const SemanticTriplet&) = default;
};

std::string to_string(const SemanticTriplet& t);

// Sorted, duplicate-free triplet set.
using TripletSet = std::vector<SemanticTriplet>;
TripletSet make_triplet_set(std::vector<SemanticTriplet> triplets);

struct Sample {
  std::string id;
  std::string system_utterance;
  std::vector<AsrHypothesis> hypotheses;  // best first, 1..10 entries
  std::optional<std::string> transcript;
  TripletSet gold;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Throws DataError if the sample breaks an invariant.
void validate_sample(const Sample& s);

enum class SplitName { kTrain, kDev, kTest };
std::string to_string(SplitName n);

struct DatasetSplit {
  SplitName name = SplitName::kTrain;
  std::vector<Sample> samples;

  size_t size() const { return samples.size(); }
};

using ActSlot = std::pair<std::string, std::string>;

// Enumerated act-slot pairs with their per-pair value vocabularies.
class LabelSpace {
 public:
  LabelSpace() = default;
  LabelSpace(std::vector<ActSlot> pairs, std::vector<std::vector<std::string>> values);

  size_t num_pairs() const { return pairs_.size(); }
  const std::vector<ActSlot>& pairs() const { return pairs_; }
  const std::vector<std::string>& values(size_t pair) const { return values_[pair]; }
  bool valueless(size_t pair) const { return values_[pair].empty(); }

  std::optional<size_t> pair_index(const std::string& act, const std::string& slot) const;
  std::optional<size_t> value_index(size_t pair, const std::string& value) const;

  // Pairs seen with both empty and nonempty values during construction.
  size_t mixed_value_warnings() const { return mixed_warnings_; }
  void set_mixed_value_warnings(size_t n) { mixed_warnings_ = n; }

  friend bool operator==(const LabelSpace& a, const LabelSpace& b) {
    return a.pairs_ == b.pairs_ && a.values_ == b.values_;
  }

 private:
  std::vector<ActSlot> pairs_;
  std::vector<std::vector<std::string>> values_;
  size_t mixed_warnings_ = 0;
};

// DSTC2 import. `flist` lists call directories relative to `root_dir`; each
// holds log.json and label.json.
DatasetSplit import_dstc2(const std::filesystem::path& root_dir, const std::filesystem::path& flist,
                          SplitName name = SplitName::kTrain);

// Normalizes one DSTC2 semantics list (the "json" array of act records) to
// triplets. Exposed for testing.
std::vector<SemanticTriplet> flatten_dstc2_semantics(const std::string& json_text);

// Canonical JSON-lines interchange.
DatasetSplit read_canonical(const std::filesystem::path& path, SplitName name = SplitName::kTrain);
DatasetSplit read_canonical(std::istream& in, SplitName name = SplitName::kTrain);
std::string to_canonical_line(const Sample& s);
void write_canonical(const DatasetSplit& split, std::ostream& out);
void write_canonical(const DatasetSplit& split, const std::filesystem::path& path);

// Throws DataError("no labels in training data") when the training gold is empty.
LabelSpace build_label_space(const DatasetSplit& train);

// Sorted distinct (act, slot) pairs of a sample's gold, joined into a key.
std::string label_signature(const Sample& s);

// Deterministic stratified p% subsample; strata are label signatures.
DatasetSplit stratified_subsample(const DatasetSplit& train, double percent, uint64_t seed);

// Per-stratum quotas used by stratified_subsample, keyed by signature.
std::vector<std::pair<std::string, size_t>> stratum_quotas(const DatasetSplit& train, double percent);

}  // namespace nbslu

#endif  // NBSLU_CORPUS_H_
