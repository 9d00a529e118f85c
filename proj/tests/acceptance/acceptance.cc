// Acceptance suite. Each criterion prints exactly one line
//   [PASS] criterion N: <summary>   or   [FAIL] criterion N: <summary>
// with the measured quantity and the tolerance it was held to. Diagnostics go
// to stderr. Exit status is 0 when every requested criterion passes.
//
//   acceptance --criterion N [--work-dir DIR]     run one criterion
//   acceptance --all [--work-dir DIR]             run 1..10 in order

#include <sys/stat.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nbslu/cli.h"
#include "nbslu/evaluation.h"
#include "nbslu/experiments.h"
#include "nbslu/manifest.h"
#include "nbslu/model.h"
#include "nbslu/random.h"
#include "nbslu/representation.h"
#include "nbslu/synthetic.h"
#include "nbslu/training.h"

namespace fs = std::filesystem;
using namespace nbslu;

namespace {

// ---------------------------------------------------------------- tolerances

constexpr int kLayoutCases = 10000;
constexpr double kLayoutSeconds = 10.0;
constexpr int kGradParams = 500;
constexpr double kGradStep = 1e-4;
constexpr double kGradTolerance = 1e-3;
// Denominator floor for the relative error: below it the comparison is an
// absolute one, since central differences carry ~1e-12 of rounding noise.
constexpr double kGradFloor = 1e-6;
constexpr double kGradSeconds = 120.0;
constexpr double kAttentionSumTolerance = 1e-6;
constexpr double kPaddingTolerance = 1e-6;
constexpr int kMetricPairs = 1000;
constexpr size_t kOverfitSamples = 32;
constexpr size_t kOverfitEpochs = 300;
constexpr double kOverfitSeconds = 300.0;
constexpr double kEndToEndF1 = 0.90;
constexpr double kEndToEndSeconds = 1800.0;
constexpr double kLowDataSlack = 0.01;
constexpr double kAblationMargin = 0.02;
constexpr size_t kAblationSeeds = 3;
constexpr uint64_t kSeed = 13;

struct Outcome {
  bool pass = false;
  std::string summary;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream o;
  o.precision(prec);
  o << x;
  return o.str();
}

// ---------------------------------------------------------------- 1: layout

// Expected token layout written from the layout rules, independently of
// build_input: [CLS] context hyp_1 [SEP] ... hyp_n [SEP], truncated by
// dropping worst hypotheses, then context words from the right, then words
// of the best hypothesis (its [SEP] stays).
std::vector<int> expected_layout(const std::vector<int>& ctx_in, const std::vector<std::vector<int>>& hyps_in,
                                 size_t n_cap, size_t max_len, size_t* kept_hyps, size_t* kept_ctx) {
  std::vector<int> ctx = ctx_in;
  std::vector<std::vector<int>> hyps(hyps_in.begin(), hyps_in.begin() + std::min(n_cap, hyps_in.size()));
  auto length = [&] {
    size_t n = 1 + ctx.size();
    for (const auto& h : hyps) n += h.size() + 1;
    return n;
  };
  while (length() > max_len && hyps.size() > 1) hyps.pop_back();
  while (length() > max_len && !ctx.empty()) ctx.pop_back();
  while (length() > max_len && !hyps[0].empty()) hyps[0].pop_back();
  std::vector<int> out{kClsId};
  out.insert(out.end(), ctx.begin(), ctx.end());
  for (const auto& h : hyps) {
    out.insert(out.end(), h.begin(), h.end());
    out.push_back(kSepId);
  }
  *kept_hyps = hyps.size();
  *kept_ctx = ctx.size();
  return out;
}

Outcome criterion_layout() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::string> words;
  for (int i = 0; i < 60; ++i) words.push_back("w" + std::to_string(i));
  DatasetSplit vocab_src;
  Sample vs;
  vs.id = "v";
  vs.hypotheses.push_back({"", 0.0});
  for (const auto& w : words) vs.hypotheses[0].text += w + " ";
  vocab_src.samples.push_back(vs);
  const Vocabulary vocab = build_vocab(vocab_src, 1);

  Rng rng(kSeed);
  InputOptions opts;  // max_len 128, n_cap 10
  int failures = 0, truncated = 0;
  std::string first_failure;
  for (int c = 0; c < kLayoutCases; ++c) {
    Sample s;
    s.id = "case" + std::to_string(c);
    const size_t n = static_cast<size_t>(rng.range(1, 10));
    // Word counts are drawn wide enough that some cases overflow max_len.
    const size_t s_words = static_cast<size_t>(rng.range(0, 20));
    std::vector<int> ctx;
    for (size_t i = 0; i < s_words; ++i) {
      const auto& w = words[rng.below(words.size())];
      s.system_utterance += (i ? " " : "") + w;
      ctx.push_back(vocab.id(w));
    }
    std::vector<std::vector<int>> hyp_ids;
    for (size_t j = 0; j < n; ++j) {
      AsrHypothesis h;
      const size_t u_words = static_cast<size_t>(rng.range(0, 16));
      std::vector<int> ids;
      for (size_t i = 0; i < u_words; ++i) {
        // Occasional out-of-vocabulary words map to [UNK].
        const bool oov = rng.bernoulli(0.05);
        const std::string w = oov ? "zzz" + std::to_string(i) : words[rng.below(words.size())];
        h.text += (i ? " " : "") + w;
        ids.push_back(oov ? kUnkId : vocab.id(w));
      }
      s.hypotheses.push_back(h);
      hyp_ids.push_back(ids);
    }
    const TokenSequence seq = build_input(s, vocab, opts);
    size_t kept_hyps = 0, kept_ctx = 0;
    const auto want = expected_layout(ctx, hyp_ids, opts.n_cap, opts.max_len, &kept_hyps, &kept_ctx);
    const auto seps = static_cast<size_t>(std::count(seq.token_ids.begin(), seq.token_ids.end(), kSepId));
    size_t flips = 0, flip_at = 0;
    for (size_t i = 1; i < seq.segment_ids.size(); ++i)
      if (seq.segment_ids[i] != seq.segment_ids[i - 1]) {
        ++flips;
        flip_at = i;
      }
    const bool fits = 1 + ctx.size() + [&] {
      size_t t = 0;
      for (const auto& h : hyp_ids) t += h.size() + 1;
      return t;
    }() <= opts.max_len;
    truncated += !fits;
    const bool ok = !seq.token_ids.empty() && seq.token_ids[0] == kClsId && seq.segment_ids[0] == 0 &&
                    seq.token_ids == want && seps == kept_hyps && (!fits || kept_hyps == n) &&
                    seq.segment_ids.size() == seq.size() && seq.attention_mask.size() == seq.size() &&
                    std::all_of(seq.attention_mask.begin(), seq.attention_mask.end(), [](int m) { return m == 1; }) &&
                    flips == 1 && flip_at == 1 + kept_ctx && seq.segment_ids.back() == 1 &&
                    seq.size() <= opts.max_len && (!fits || kept_ctx == ctx.size());
    if (!ok && failures++ == 0) first_failure = s.id;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = failures == 0 && secs < kLayoutSeconds;
  o.summary = "input layout property suite: " + std::to_string(kLayoutCases) + " random cases (" +
              std::to_string(truncated) + " truncated), " + std::to_string(failures) + " violations" +
              (failures ? " (first: " + first_failure + ")" : "") + ", " + fmt(secs, 3) + " s (limit " +
              fmt(kLayoutSeconds) + " s)";
  return o;
}

// ---------------------------------------------------------------- 2: gradients

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  EncoderConfig cfg;
  cfg.vocab_size = 24;
  cfg.d_model = 16;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.max_positions = 32;
  cfg.dropout = 0.0;
  // Three act-slot pairs; one carries a four-way value head.
  const LabelSpace labels({{"affirm", ""}, {"inform", "area"}, {"thankyou", ""}},
                          {{}, {"east", "north", "south", "west"}, {}});
  SluModel model = SluModel::create(cfg, labels, kSeed);
  // Scale weights up from the 0.02 init so every sublayer carries signal.
  for (auto& t : tensors(model))
    if (t.kind == TensorKind::kWeight || t.kind == TensorKind::kEmbedding)
      for (double& x : t.tensor->data) x *= 10.0;

  Rng rng(kSeed + 1);
  Batch batch;
  batch.rows = 3;
  batch.width = 9;
  batch.num_pairs = 3;
  const size_t lengths[] = {9, 6, 4};
  for (size_t r = 0; r < batch.rows; ++r)
    for (size_t c = 0; c < batch.width; ++c) {
      const bool real = c < lengths[r];
      batch.token_ids.push_back(!real ? kPadId : c == 0 ? kClsId : 4 + static_cast<int>(rng.below(20)));
      batch.segment_ids.push_back(real && c > 2 ? 1 : 0);
      batch.attention_mask.push_back(real);
    }
  batch.presence = {1, 1, 0, 0, 1, 1, 0, 0, 0};
  batch.value_index = {-1, 2, -1, -1, 0, -1, -1, -1, -1};

  SluModel grads = model.zeros_like();
  loss_and_gradients(model, batch, false, 0, &grads);
  auto prefs = tensors(model);
  auto grefs = tensors(grads);

  double worst = 0.0;
  std::string worst_name;
  for (int trial = 0; trial < kGradParams; ++trial) {
    const size_t ti = rng.below(prefs.size());
    Matrix& t = *prefs[ti].tensor;
    size_t k = rng.below(t.size());
    if (prefs[ti].name == "embeddings.token") {
      // Restrict to rows that occur in the batch so the check is not vacuous.
      const int tok = batch.token_ids[rng.below(batch.token_ids.size())];
      k = static_cast<size_t>(tok) * t.cols + rng.below(t.cols);
    }
    const double saved = t.data[k];
    t.data[k] = saved + kGradStep;
    const double up = loss_and_gradients(model, batch, false, 0, nullptr);
    t.data[k] = saved - kGradStep;
    const double down = loss_and_gradients(model, batch, false, 0, nullptr);
    t.data[k] = saved;
    const double numeric = (up - down) / (2.0 * kGradStep);
    const double analytic = grefs[ti].tensor->data[k];
    const double rel = std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), kGradFloor});
    if (rel > worst) {
      worst = rel;
      worst_name = prefs[ti].name + "[" + std::to_string(k) + "]";
    }
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = worst < kGradTolerance && secs < kGradSeconds;
  o.summary = "finite-difference gradient check: " + std::to_string(kGradParams) +
              " parameters, h=" + fmt(kGradStep) + ", max relative error " + fmt(worst, 3) + " at " + worst_name +
              " (limit " + fmt(kGradTolerance) + "), " + fmt(secs, 3) + " s (limit " + fmt(kGradSeconds) + " s)";
  return o;
}

// ---------------------------------------------------------------- 3: attention

Outcome criterion_attention() {
  EncoderConfig cfg = profile_config("desk").encoder_config(60);
  const EncoderParams params = init_params(cfg, kSeed);
  Rng rng(kSeed);
  auto make = [&](size_t pad) {
    Batch b;
    const size_t lengths[] = {23, 7, 40, 1};
    b.rows = 4;
    b.width = 40 + pad;
    Rng r2(5);
    for (size_t r = 0; r < b.rows; ++r)
      for (size_t c = 0; c < b.width; ++c) {
        const bool real = c < lengths[r];
        b.token_ids.push_back(!real ? kPadId : c == 0 ? kClsId : 4 + static_cast<int>(r2.below(56)));
        b.segment_ids.push_back(real && c > 5 ? 1 : 0);
        b.attention_mask.push_back(real);
      }
    return b;
  };
  const Batch base = make(0), padded = make(8);
  EncoderCache cache;
  const EncoderOutput out = encoder_forward(base, params, cfg, false, 0, &cache);
  double worst_sum = 0.0;
  for (size_t li = 0; li < cfg.n_layers; ++li)
    for (size_t r = 0; r < base.rows; ++r)
      for (size_t h = 0; h < cfg.n_heads; ++h)
        for (size_t i = 0; i < base.length(r); ++i) {
          double s = 0.0;
          for (size_t j = 0; j < base.width; ++j) s += cache.attention(li, r, h, i, j, cfg.n_heads);
          worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
  const EncoderOutput out2 = encoder_forward(padded, params, cfg, false, 0);
  double worst_pad = 0.0;
  for (size_t i = 0; i < out.pooled.size(); ++i)
    worst_pad = std::max(worst_pad, std::abs(out.pooled.data[i] - out2.pooled.data[i]));
  Outcome o;
  o.pass = worst_sum <= kAttentionSumTolerance && worst_pad < kPaddingTolerance;
  o.summary = "attention rows sum to 1 (max deviation " + fmt(worst_sum, 3) + ", limit " + fmt(kAttentionSumTolerance) +
              "); +8 PAD tokens change pooled output by " + fmt(worst_pad, 3) + " (limit " + fmt(kPaddingTolerance) +
              ")";
  return o;
}

// ---------------------------------------------------------------- 4: metrics

Outcome criterion_metrics() {
  Rng rng(kSeed);
  const std::vector<SemanticTriplet> pool{{"inform", "area", "west"}, {"inform", "area", "east"},
                                          {"inform", "food", "thai"}, {"request", "phone", ""},
                                          {"thankyou", "", ""},       {"affirm", "", ""},
                                          {"negate", "", ""},         {"inform", "pricerange", "cheap"}};
  int mismatches = 0;
  for (int trial = 0; trial < kMetricPairs; ++trial) {
    const size_t n = 1 + rng.below(12);
    std::vector<LabeledSet> pred, gold;
    for (size_t i = 0; i < n; ++i) {
      std::vector<SemanticTriplet> p, g;
      const double density = rng.uniform();
      for (const auto& t : pool) {
        if (rng.bernoulli(density * 0.5)) p.push_back(t);
        if (rng.bernoulli(density * 0.5)) g.push_back(t);
      }
      pred.push_back({"s" + std::to_string(i), make_triplet_set(p)});
      gold.push_back({"s" + std::to_string(i), make_triplet_set(g)});
    }
    std::reverse(pred.begin(), pred.end());
    // Brute-force recount over string renderings.
    size_t tp = 0, fp = 0, fn = 0, exact = 0;
    for (const auto& g : gold) {
      const auto& p = *std::find_if(pred.begin(), pred.end(), [&](const LabeledSet& x) { return x.id == g.id; });
      std::set<std::string> ps, gs;
      for (const auto& t : p.triplets) ps.insert(to_string(t));
      for (const auto& t : g.triplets) gs.insert(to_string(t));
      for (const auto& t : ps) (gs.count(t) ? tp : fp)++;
      for (const auto& t : gs) fn += !ps.count(t);
      exact += ps == gs;
    }
    const double prec = tp + fp ? static_cast<double>(tp) / (tp + fp) : 1.0;
    const double rec = tp + fn ? static_cast<double>(tp) / (tp + fn) : 1.0;
    const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    const MetricsReport m = score(pred, gold);
    const bool same = m.tp == tp && m.fp == fp && m.fn == fn && m.exact_matches == exact && m.precision == prec &&
                      m.recall == rec && m.f1 == f1 && m.accuracy == static_cast<double>(exact) / n;
    mismatches += !same;
  }
  const SemanticTriplet A{"inform", "area", "west"}, B{"inform", "food", "thai"}, C{"thankyou", "", ""};
  const MetricsReport hand = score({{"1", {A}}, {"2", {C}}}, {{"1", make_triplet_set({A, B})}, {"2", {C}}});
  const bool hand_ok = hand.tp == 2 && hand.fp == 0 && hand.fn == 1 && hand.precision == 1.0 &&
                       std::abs(hand.recall - 2.0 / 3.0) < 1e-15 && std::abs(hand.f1 - 0.8) < 1e-15 &&
                       hand.accuracy == 0.5;
  Outcome o;
  o.pass = mismatches == 0 && hand_ok;
  o.summary = "metrics oracle: " + std::to_string(mismatches) + " mismatches over " + std::to_string(kMetricPairs) +
              " random prediction/gold sets (exact equality required); hand example tp=" + std::to_string(hand.tp) +
              " fp=" + std::to_string(hand.fp) + " fn=" + std::to_string(hand.fn) + " F1=" + fmt(hand.f1, 17) +
              " accuracy=" + fmt(hand.accuracy) + (hand_ok ? " (matches 2/0/1, 0.8, 0.5)" : " (expected 2/0/1, 0.8, 0.5)");
  return o;
}

// ---------------------------------------------------------------- 5: overfit

Outcome criterion_overfit() {
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetSplit data = generate_split(default_synth_spec(), kOverfitSamples, SplitName::kTrain);
  const Vocabulary vocab = build_vocab(data, 1);
  const LabelSpace labels = build_label_space(data);
  RunConfig cfg = profile_config("desk");
  cfg.train.max_epochs = kOverfitEpochs;
  cfg.train.patience = kOverfitEpochs;
  cfg.train.eval_train = true;
  cfg.train.seed = kSeed;
  TrainOptions opts;
  opts.progress = &std::cerr;
  opts.stop_when = [](const EpochRecord& r) { return r.train_accuracy && *r.train_accuracy == 1.0; };
  const TrainResult r = train(data, data, labels, vocab, cfg, opts);

  const size_t steps_per_epoch = (data.size() + cfg.train.batch_size - 1) / cfg.train.batch_size;
  const size_t warm = warmup_steps(steps_per_epoch * cfg.train.max_epochs, cfg.train.warmup_ratio);
  const size_t warm_epochs = (warm + steps_per_epoch - 1) / steps_per_epoch;
  size_t best_run = 0, run = 0, reached = 0;
  for (size_t i = 0; i < r.log.size(); ++i) {
    if (r.log[i].train_accuracy && *r.log[i].train_accuracy == 1.0 && !reached) reached = r.log[i].epoch;
    if (r.log[i].epoch <= warm_epochs) continue;
    const bool dec = i > 0 && r.log[i - 1].epoch > warm_epochs && r.log[i].train_loss < r.log[i - 1].train_loss;
    run = dec ? run + 1 : 0;
    best_run = std::max(best_run, run);
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = reached > 0 && best_run >= 3 && secs < kOverfitSeconds;
  o.summary = "overfit " + std::to_string(data.size()) + " samples (desk profile): training accuracy 1.0 " +
              (reached ? "reached at epoch " + std::to_string(reached) : "not reached") + " (limit " +
              std::to_string(kOverfitEpochs) + "); longest post-warmup run of strict loss decreases " +
              std::to_string(best_run) + " epochs (need 3); " + fmt(secs, 3) + " s (limit " + fmt(kOverfitSeconds) + " s)";
  return o;
}

// ---------------------------------------------------------------- 6 and 10: end to end

SynthCorpus end_to_end_corpus() {
  SynthSpec spec = default_synth_spec();
  spec.substitution_prob = 0.3;
  spec.n_min = 1;
  spec.n_max = 5;
  return generate_synthetic(spec, 2000, 400, 400);
}

RunConfig end_to_end_config() {
  RunConfig cfg = profile_config("desk");
  cfg.train.seed = kSeed;
  return cfg;
}

// Identifies the producing binary and inputs, so a stored report is only
// reused by the determinism check when nothing has changed since.
std::string run_stamp(const SynthCorpus& c, const RunConfig& cfg) {
  struct stat st {};
  stat("/proc/self/exe", &st);
  return to_json(cfg).dump() + "|" + content_hash(c.train) + content_hash(c.dev) + content_hash(c.test) + "|" +
         std::to_string(st.st_mtime) + "|" + std::to_string(st.st_size);
}

MetricsReport end_to_end_run(const fs::path& dir, double* seconds) {
  const SynthCorpus c = end_to_end_corpus();
  const RunConfig cfg = end_to_end_config();
  const auto t0 = std::chrono::steady_clock::now();
  JobSpec spec{cfg, 100.0, cfg.train.seed, {}};
  const JobResult r = run_job(c.train, c.dev, &c.test, spec, dir, &std::cerr);
  *seconds = seconds_since(t0);
  nlohmann::json stored = {{"stamp", run_stamp(c, cfg)}, {"metrics", to_json(*r.test)}};
  std::ofstream(dir / "acceptance_report.json") << stored.dump(2) << '\n';
  return *r.test;
}

Outcome criterion_end_to_end(const fs::path& work) {
  double secs = 0.0;
  const MetricsReport m = end_to_end_run(work / "end_to_end", &secs);
  Outcome o;
  o.pass = m.f1 >= kEndToEndF1 && secs < kEndToEndSeconds;
  o.summary = "synthetic end-to-end (2000/400/400, substitution 0.3, N in [1,5], desk profile): test F1 " + fmt(m.f1) +
              " (need >= " + fmt(kEndToEndF1) + "), accuracy " + fmt(m.accuracy) + ", " + fmt(secs, 4) + " s (limit " +
              fmt(kEndToEndSeconds) + " s)";
  return o;
}

Outcome criterion_determinism(const fs::path& work) {
  const SynthCorpus c = end_to_end_corpus();
  const RunConfig cfg = end_to_end_config();
  MetricsReport first;
  bool have_first = false;
  std::ifstream in(work / "end_to_end" / "acceptance_report.json");
  if (in) {
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_discarded() && j.value("stamp", "") == run_stamp(c, cfg)) {
      first = metrics_from_json(j.at("metrics"));
      have_first = true;
      std::cerr << "reusing the stored criterion-6 report as the first run\n";
    }
  }
  double secs = 0.0;
  if (!have_first) first = end_to_end_run(work / "end_to_end", &secs);
  const MetricsReport second = end_to_end_run(work / "end_to_end_repeat", &secs);
  Outcome o;
  o.pass = first == second;
  o.summary = std::string("determinism: two seeded runs of the end-to-end experiment give ") +
              (o.pass ? "identical" : "DIFFERENT") + " MetricsReports (F1 " + fmt(first.f1, 17) + " vs " +
              fmt(second.f1, 17) + ", tp/fp/fn " + std::to_string(first.tp) + "/" + std::to_string(first.fp) + "/" +
              std::to_string(first.fn) + " vs " + std::to_string(second.tp) + "/" + std::to_string(second.fp) + "/" +
              std::to_string(second.fn) + ")";
  return o;
}

// ---------------------------------------------------------------- 7: low data

Outcome criterion_lowdata(const fs::path& work) {
  const SynthCorpus c = end_to_end_corpus();
  const fs::path dir = work / "lowdata";
  fs::create_directories(dir);
  const DataSources src{dir / "train.jsonl", dir / "dev.jsonl", dir / "test.jsonl"};
  write_canonical(c.train, src.train);
  write_canonical(c.dev, src.dev);
  write_canonical(c.test, src.test);

  // Quotas: within one sample of the exact proportional share per stratum,
  // and realized exactly by the sampler.
  size_t quota_violations = 0, strata = 0;
  std::map<std::string, size_t> sizes;
  for (const auto& s : c.train.samples) ++sizes[label_signature(s)];
  for (double p : {5.0, 10.0, 20.0, 50.0}) {
    const auto sub = stratified_subsample(c.train, p, kSeed);
    std::map<std::string, size_t> got;
    for (const auto& s : sub.samples) ++got[label_signature(s)];
    for (const auto& [key, n] : sizes) {
      ++strata;
      if (std::abs(static_cast<double>(got[key]) - p * n / 100.0) > 1.0) ++quota_violations;
    }
  }

  const RunConfig cfg = end_to_end_config();
  const auto rows = run_lowdata(c.train, c.dev, c.test, {5.0, 50.0}, kSeed, cfg, 1, src, dir / "runs", &std::cerr);
  const double f5 = rows[0].f1, f50 = rows[1].f1;

  // Replay the p=5 run from its manifest.
  const fs::path manifest = dir / "runs" / "p5" / "seed0" / "run_manifest.json";
  const auto original = RunManifest::read(manifest).results.at("test");
  const auto replay = reproduce(manifest, dir / "replay_p5", &std::cerr).at("test");
  const bool reproducible = original == replay;

  Outcome o;
  o.pass = f50 >= f5 - kLowDataSlack && quota_violations == 0 && reproducible;
  o.summary = "low-data protocol: F1(p=50) " + fmt(f50) + " vs F1(p=5) " + fmt(f5) + " (need F1(50) >= F1(5) - " +
              fmt(kLowDataSlack) + "); quota deviations > 1: " + std::to_string(quota_violations) + " of " +
              std::to_string(strata) + " stratum checks; manifest replay " + (reproducible ? "identical" : "DIFFERS");
  return o;
}

// ---------------------------------------------------------------- 8: ablation

Outcome criterion_ablation(const fs::path& work) {
  SynthSpec spec = default_synth_spec();
  spec.context_fraction = 0.3;
  spec.seed = 21;
  const SynthCorpus c = generate_synthetic(spec, 1000, 200, 400);
  size_t ambiguous = 0;
  for (const auto& s : c.test.samples)
    for (const auto& t : s.gold) ambiguous += t.value == "dontcare";
  RunConfig cfg = end_to_end_config();
  cfg.train.max_epochs = 25;
  const AblationResult r = run_ablation(c.train, c.dev, c.test, cfg, kAblationSeeds, {}, work / "ablation", &std::cerr);
  Outcome o;
  o.pass = r.delta_f1 >= kAblationMargin;
  o.summary = "context ablation (" + fmt(100.0 * ambiguous / c.test.size(), 3) +
              "% context-dependent test samples, mean of " + std::to_string(kAblationSeeds) + " seeds): F1 with " +
              fmt(r.with_f1) + " / without " + fmt(r.without_f1) + ", delta " + fmt(r.delta_f1) + " (need >= " +
              fmt(kAblationMargin) + "); accuracy delta " + fmt(r.delta_accuracy);
  return o;
}

// ---------------------------------------------------------------- 9: DSTC2 pipeline

// Writes synthetic samples as DSTC2 call directories (log.json + label.json).
void write_dstc2_calls(const DatasetSplit& split, const fs::path& root, const fs::path& flist, size_t turns_per_call) {
  std::ofstream list(flist);
  for (size_t start = 0, call = 0; start < split.size(); start += turns_per_call, ++call) {
    const std::string id = "synth-call-" + std::to_string(call);
    nlohmann::json log = {{"session-id", id}, {"turns", nlohmann::json::array()}};
    nlohmann::json label = {{"session-id", id}, {"turns", nlohmann::json::array()}};
    for (size_t i = start; i < std::min(split.size(), start + turns_per_call); ++i) {
      const Sample& s = split.samples[i];
      nlohmann::json hyps = nlohmann::json::array();
      for (const auto& h : s.hypotheses) hyps.push_back({{"asr-hyp", h.text}, {"score", h.score}});
      log["turns"].push_back({{"output", {{"transcript", s.system_utterance}}}, {"input", {{"live", {{"asr-hyps", hyps}}}}}});
      std::map<std::string, nlohmann::json> acts;
      nlohmann::json sem = nlohmann::json::array();
      for (const auto& t : s.gold) {
        nlohmann::json slots = nlohmann::json::array();
        if (!t.slot.empty()) {
          if (t.value.empty())
            slots.push_back({"slot", t.slot});
          else
            slots.push_back({t.slot, t.value});
        }
        sem.push_back({{"act", t.act}, {"slots", slots}});
      }
      label["turns"].push_back({{"transcription", s.transcript.value_or("")}, {"semantics", {{"json", sem}}}});
    }
    fs::create_directories(root / id);
    std::ofstream(root / id / "log.json") << log.dump();
    std::ofstream(root / id / "label.json") << label.dump();
    list << id << '\n';
  }
}

Outcome criterion_dstc2(const fs::path& work) {
  const fs::path dir = work / "dstc2";
  fs::create_directories(dir);
  // A real corpus can be supplied through the environment; otherwise a
  // DSTC2-format fixture exercises the same path.
  const char* root_env = std::getenv("NBSLU_DSTC2_ROOT");
  std::string root, train_list, dev_list, test_list, source;
  if (root_env && std::getenv("NBSLU_DSTC2_TRAIN_FLIST") && std::getenv("NBSLU_DSTC2_DEV_FLIST") &&
      std::getenv("NBSLU_DSTC2_TEST_FLIST")) {
    root = root_env;
    train_list = std::getenv("NBSLU_DSTC2_TRAIN_FLIST");
    dev_list = std::getenv("NBSLU_DSTC2_DEV_FLIST");
    test_list = std::getenv("NBSLU_DSTC2_TEST_FLIST");
    source = "DSTC2 data at " + root;
  } else {
    const SynthCorpus c = generate_synthetic(default_synth_spec(), 120, 40, 40);
    root = (dir / "calls").string();
    train_list = (dir / "train.flist").string();
    dev_list = (dir / "dev.flist").string();
    test_list = (dir / "test.flist").string();
    fs::create_directories(root);
    write_dstc2_calls(c.train, root, train_list, 8);
    write_dstc2_calls(c.dev, fs::path(root) / "dev", dir / "dev_tmp.flist", 8);
    write_dstc2_calls(c.test, fs::path(root) / "test", dir / "test_tmp.flist", 8);
    // Dev/test call ids live in subdirectories of the root.
    for (const auto& [tmp, out, sub] : {std::tuple{dir / "dev_tmp.flist", dev_list, "dev/"},
                                        std::tuple{dir / "test_tmp.flist", test_list, "test/"}}) {
      std::ifstream in(tmp);
      std::ofstream o(out);
      for (std::string line; std::getline(in, line);) o << sub << line << '\n';
    }
    source = "DSTC2-format fixture (set NBSLU_DSTC2_ROOT and NBSLU_DSTC2_{TRAIN,DEV,TEST}_FLIST for real data)";
  }

  const std::string d = dir.string();
  auto cli = [](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    std::cerr << out.str() << err.str();
    return code;
  };
  std::ofstream(dir / "config.json") << R"({"profile":"desk","train":{"max_epochs":20}})";
  int code = cli({"import", "--dstc2-root", root, "--flist", train_list, "--out", d + "/train.jsonl"});
  if (!code) code = cli({"import", "--dstc2-root", root, "--flist", dev_list, "--out", d + "/dev.jsonl", "--split", "dev"});
  if (!code)
    code = cli({"import", "--dstc2-root", root, "--flist", test_list, "--out", d + "/test.jsonl", "--split", "test"});
  if (!code)
    code = cli({"train", "--config", d + "/config.json", "--train", d + "/train.jsonl", "--dev", d + "/dev.jsonl",
                "--out", d + "/run"});
  if (!code)
    code = cli({"eval", "--model", d + "/run/model", "--test", d + "/test.jsonl", "--out", d + "/metrics.json"});
  Outcome o;
  bool have_report = false;
  MetricsReport m;
  if (!code) {
    std::ifstream in(d + "/metrics.json");
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (!j.is_discarded()) {
      m = metrics_from_json(j);
      have_report = true;
    }
  }
  o.pass = code == 0 && have_report;
  o.summary = "DSTC2 pipeline import -> train -> eval on " + source + ": " +
              (o.pass ? "MetricsReport emitted (informational F1 " + fmt(m.f1) + ", accuracy " + fmt(m.accuracy) +
                            "; published BERT-based figures need a pretrained encoder and are not gated)"
                      : "pipeline failed with exit code " + std::to_string(code));
  return o;
}

const std::map<int, std::string> kNames = {
    {1, "input layout"}, {2, "gradient correctness"}, {3, "attention/padding"}, {4, "metrics oracle"},
    {5, "overfit sanity"}, {6, "synthetic end-to-end"}, {7, "low-data protocol"}, {8, "ablation direction"},
    {9, "DSTC2 pipeline"}, {10, "determinism"}};

Outcome run_criterion(int n, const fs::path& work) {
  switch (n) {
    case 1: return criterion_layout();
    case 2: return criterion_gradients();
    case 3: return criterion_attention();
    case 4: return criterion_metrics();
    case 5: return criterion_overfit();
    case 6: return criterion_end_to_end(work);
    case 7: return criterion_lowdata(work);
    case 8: return criterion_ablation(work);
    case 9: return criterion_dstc2(work);
    case 10: return criterion_determinism(work);
  }
  throw std::invalid_argument("no criterion " + std::to_string(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int criterion = 0;
  bool all = false;
  std::string work = (fs::temp_directory_path() / "nbslu-acceptance").string();
  app.add_option("--criterion", criterion, "Criterion number")->check(CLI::Range(1, 10));
  app.add_flag("--all", all, "Run every criterion");
  app.add_option("--work-dir", work, "Scratch directory for runs");
  CLI11_PARSE(app, argc, argv);
  if (!all && criterion == 0) {
    std::cerr << "acceptance: pass --criterion N or --all\n";
    return 2;
  }
  std::vector<int> todo;
  if (all)
    for (int i = 1; i <= 10; ++i) todo.push_back(i);
  else
    todo.push_back(criterion);

  fs::create_directories(work);
  bool ok = true;
  for (int n : todo) {
    Outcome o;
    try {
      o = run_criterion(n, work);
    } catch (const std::exception& e) {
      o.pass = false;
      o.summary = kNames.at(n) + ": error: " + e.what();
    }
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << n << ": " << o.summary << std::endl;
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
