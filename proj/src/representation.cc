#include "nbslu/representation.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <numeric>
#include <stdexcept>

#include "nbslu/random.h"

namespace nbslu {
namespace {

const std::vector<std::string> kReserved = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

}  // namespace

// ---------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary() {
  for (const auto& t : kReserved) add(t);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens, int min_freq) : Vocabulary() {
  min_freq_ = min_freq;
  for (const auto& t : tokens) {
    if (index_.contains(t)) throw std::invalid_argument("duplicate vocabulary token '" + t + "'");
    add(t);
  }
}

void Vocabulary::add(const std::string& token) {
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  for (size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected token<TAB>id");
    const std::string token = line.substr(0, tab);
    const long id = std::stol(line.substr(tab + 1));
    if (id != static_cast<long>(lineno - 1))
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": ids must be contiguous from 0");
    if (lineno <= kReserved.size()) {
      if (token != kReserved[lineno - 1])
        throw std::runtime_error(path.string() + ": reserved id " + std::to_string(id) + " must be " +
                                 kReserved[lineno - 1]);
      continue;
    }
    tokens.push_back(token);
  }
  if (lineno < kReserved.size()) throw std::runtime_error(path.string() + ": missing reserved tokens");
  return Vocabulary(tokens, 1);
}

// ---------------------------------------------------------------- tokenization

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocabulary build_vocab(const DatasetSplit& train, int min_freq) {
  std::map<std::string, long> freq;
  for (const auto& s : train.samples) {
    for (auto& w : split_words(s.system_utterance)) ++freq[w];
    for (const auto& h : s.hypotheses)
      for (auto& w : split_words(h.text)) ++freq[w];
  }
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [w, f] : freq)
    if (f >= min_freq) kept.emplace_back(w, f);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [w, f] : kept) tokens.push_back(w);
  return Vocabulary(tokens, min_freq);
}

std::vector<int> tokenize(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(ids[i]);
  }
  return out;
}

// ---------------------------------------------------------------- inputs

TokenSequence build_input(const Sample& sample, const Vocabulary& vocab, const InputOptions& opts) {
  if (opts.max_len < 8) throw std::invalid_argument("max_len must be at least 8");
  if (opts.n_cap < 1) throw std::invalid_argument("n_cap must be at least 1");
  if (sample.hypotheses.empty()) throw DataError("sample " + sample.id + " has no hypotheses");

  std::vector<int> context;
  if (opts.use_context) context = tokenize(sample.system_utterance, vocab);
  const size_t context_sep = opts.sep_after_context ? 1 : 0;

  std::vector<std::vector<int>> blocks;
  const size_t n = std::min(sample.hypotheses.size(), opts.n_cap);
  for (size_t j = 0; j < n; ++j) {
    auto ids = tokenize(sample.hypotheses[j].text, vocab);
    ids.push_back(kSepId);
    blocks.push_back(std::move(ids));
  }

  auto total = [&] {
    size_t t = 1 + context.size() + context_sep;
    for (const auto& b : blocks) t += b.size();
    return t;
  };
  while (total() > opts.max_len && blocks.size() > 1) blocks.pop_back();
  if (total() > opts.max_len) {
    const size_t excess = total() - opts.max_len;
    context.resize(context.size() - std::min(excess, context.size()));
  }
  if (total() > opts.max_len) {
    // Only the best hypothesis is left; cut its words and keep the [SEP].
    auto& b = blocks.front();
    const size_t excess = total() - opts.max_len;
    b.erase(b.end() - 1 - static_cast<std::ptrdiff_t>(excess), b.end() - 1);
  }

  TokenSequence seq;
  seq.token_ids.push_back(kClsId);
  seq.segment_ids.push_back(0);
  for (int id : context) {
    seq.token_ids.push_back(id);
    seq.segment_ids.push_back(0);
  }
  if (context_sep) {
    seq.token_ids.push_back(kSepId);
    seq.segment_ids.push_back(0);
  }
  for (const auto& b : blocks)
    for (int id : b) {
      seq.token_ids.push_back(id);
      seq.segment_ids.push_back(1);
    }
  seq.attention_mask.assign(seq.token_ids.size(), 1);
  return seq;
}

// ---------------------------------------------------------------- batches

size_t Batch::length(size_t r) const {
  size_t n = 0;
  for (size_t c = 0; c < width; ++c) n += attention_mask[r * width + c] != 0;
  return n;
}

Batch pad_batch(const std::vector<TokenSequence>& seqs) {
  Batch b;
  b.rows = seqs.size();
  for (const auto& s : seqs) b.width = std::max(b.width, s.size());
  b.token_ids.assign(b.rows * b.width, kPadId);
  b.segment_ids.assign(b.rows * b.width, 0);
  b.attention_mask.assign(b.rows * b.width, 0);
  for (size_t r = 0; r < b.rows; ++r) {
    std::copy(seqs[r].token_ids.begin(), seqs[r].token_ids.end(), b.token_ids.begin() + r * b.width);
    std::copy(seqs[r].segment_ids.begin(), seqs[r].segment_ids.end(), b.segment_ids.begin() + r * b.width);
    std::copy(seqs[r].attention_mask.begin(), seqs[r].attention_mask.end(), b.attention_mask.begin() + r * b.width);
  }
  return b;
}

std::vector<Batch> make_batches(const DatasetSplit& split, const LabelSpace& labels, const Vocabulary& vocab,
                                const BatchOptions& opts) {
  if (opts.batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  std::vector<size_t> order(split.samples.size());
  std::iota(order.begin(), order.end(), 0);
  if (opts.shuffle) {
    Rng rng(opts.shuffle_seed);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }

  const size_t pairs = labels.num_pairs();
  std::vector<Batch> batches;
  for (size_t start = 0; start < order.size(); start += opts.batch_size) {
    const size_t end = std::min(order.size(), start + opts.batch_size);
    std::vector<TokenSequence> seqs;
    for (size_t i = start; i < end; ++i) seqs.push_back(build_input(split.samples[order[i]], vocab, opts.input));
    Batch b = pad_batch(seqs);
    b.num_pairs = pairs;
    b.presence.assign(b.rows * pairs, 0.0);
    b.value_index.assign(b.rows * pairs, Batch::kAbsentValue);
    for (size_t r = 0; r < b.rows; ++r) {
      const Sample& s = split.samples[order[start + r]];
      b.sample_index.push_back(order[start + r]);
      b.sample_ids.push_back(s.id);
      b.gold.push_back(s.gold);
      for (const auto& t : s.gold) {
        const auto p = labels.pair_index(t.act, t.slot);
        if (!p) {
          if (opts.strict_labels) throw DataError("sample " + s.id + ": pair " + to_string(t) + " not in label space");
          continue;
        }
        b.presence[r * pairs + *p] = 1.0;
        if (t.value.empty() || labels.valueless(*p)) continue;
        const auto v = labels.value_index(*p, t.value);
        if (!v) {
          if (opts.strict_labels)
            throw DataError("sample " + s.id + ": value of " + to_string(t) + " not in label space");
          continue;
        }
        b.value_index[r * pairs + *p] = static_cast<int>(*v);
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace nbslu
