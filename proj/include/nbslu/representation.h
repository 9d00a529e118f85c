#ifndef NBSLU_REPRESENTATION_H_
#define NBSLU_REPRESENTATION_H_

// Input representation: the system utterance followed by every N-best
// hypothesis, each closed by [SEP], headed by [CLS]:
//
//   [CLS] tok(S) tok(U_1) [SEP] tok(U_2) [SEP] ... tok(U_N) [SEP]
//
// Segment 0 covers [CLS] and the system tokens; segment 1 covers every
// hypothesis token and its [SEP].

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nbslu/corpus.h"

namespace nbslu {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kSepId = 3;
inline constexpr int kNumReserved = 4;

class Vocabulary {
 public:
  // Reserved tokens only.
  Vocabulary();
  // `tokens` excludes the reserved entries; ids start at kNumReserved.
  Vocabulary(const std::vector<std::string>& tokens, int min_freq);

  int id(std::string_view token) const;  // kUnkId when absent
  const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  size_t size() const { return tokens_.size(); }
  int min_freq() const { return min_freq_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int min_freq_ = 1;
};

// Lowercased whitespace-separated words.
std::vector<std::string> split_words(std::string_view text);

Vocabulary build_vocab(const DatasetSplit& train, int min_freq);
std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab);
std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab);

struct TokenSequence {
  std::vector<int> token_ids;
  std::vector<int> segment_ids;
  std::vector<int> attention_mask;

  size_t size() const { return token_ids.size(); }
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

struct InputOptions {
  size_t max_len = 128;
  size_t n_cap = 10;
  bool use_context = true;
  // Inserts one [SEP] between the system tokens and the first hypothesis.
  bool sep_after_context = false;
};

// Throws std::invalid_argument for max_len < 8 or n_cap < 1, DataError for a
// sample without hypotheses. Over-long layouts lose whole hypothesis blocks
// from the worst-ranked end first, then system tokens from the right.
TokenSequence build_input(const Sample& sample, const Vocabulary& vocab, const InputOptions& opts);

// Padded mini-batch with encoded gold labels.
struct Batch {
  size_t rows = 0;
  size_t width = 0;
  std::vector<int> token_ids;       // rows x width
  std::vector<int> segment_ids;     // rows x width
  std::vector<int> attention_mask;  // rows x width
  std::vector<size_t> sample_index; // position in the source split
  std::vector<std::string> sample_ids;
  size_t num_pairs = 0;
  std::vector<double> presence;     // rows x num_pairs, 0/1
  std::vector<int> value_index;     // rows x num_pairs, kAbsentValue when none
  std::vector<TripletSet> gold;

  static constexpr int kAbsentValue = -1;

  int token(size_t r, size_t c) const { return token_ids[r * width + c]; }
  int segment(size_t r, size_t c) const { return segment_ids[r * width + c]; }
  int mask(size_t r, size_t c) const { return attention_mask[r * width + c]; }
  // Number of real (unmasked) tokens in row r.
  size_t length(size_t r) const;
};

// Pads `seqs` to their common max length.
Batch pad_batch(const std::vector<TokenSequence>& seqs);

struct BatchOptions {
  size_t batch_size = 16;
  bool shuffle = false;
  uint64_t shuffle_seed = 0;
  // Training batches reject gold triplets outside the label space; scoring
  // batches keep them in `gold` but cannot encode them.
  bool strict_labels = false;
  InputOptions input;
};

std::vector<Batch> make_batches(const DatasetSplit& split, const LabelSpace& labels, const Vocabulary& vocab,
                                const BatchOptions& opts);

}  // namespace nbslu

#endif  // NBSLU_REPRESENTATION_H_
