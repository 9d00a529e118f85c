#include "nbslu/cli.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "nbslu/checkpoint.h"
#include "nbslu/config.h"
#include "nbslu/corpus.h"
#include "nbslu/evaluation.h"
#include "nbslu/experiments.h"
#include "nbslu/kernels.h"
#include "nbslu/manifest.h"
#include "nbslu/synthetic.h"

namespace nbslu {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Options shared by the commands that train.
struct TrainFlags {
  std::string config_file;
  std::string profile;
  bool no_context = false;
  std::optional<size_t> n_best;
  std::optional<uint64_t> seed;
  std::optional<size_t> max_epochs;
  std::optional<double> threshold;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--config", f.config_file, "JSON config with model/train/data sections")->check(CLI::ExistingFile);
  cmd->add_option("--profile", f.profile, "Hyperparameter profile")->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_flag("--no-context", f.no_context, "Drop the system utterance from the input");
  cmd->add_option("--n-best", f.n_best, "Number of ASR hypotheses to concatenate (1-10)")->check(CLI::Range(1, 10));
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--max-epochs", f.max_epochs, "Epoch cap")->check(CLI::PositiveNumber);
  cmd->add_option("--threshold", f.threshold, "Presence threshold")->check(CLI::Range(0.0, 1.0));
}

// Profile, then config file, then flags.
RunConfig resolve_config(const TrainFlags& f) {
  json file = json::object();
  if (!f.config_file.empty()) file = read_json(f.config_file);
  std::string profile = "desk";
  if (file.contains("profile")) profile = file["profile"].get<std::string>();
  if (!f.profile.empty()) profile = f.profile;
  RunConfig c = profile_config(profile);
  file.erase("profile");
  apply_json(file, c);
  if (f.no_context) c.data.input.use_context = false;
  if (f.n_best) c.data.input.n_cap = *f.n_best;
  if (f.seed) c.train.seed = *f.seed;
  if (f.max_epochs) c.train.max_epochs = *f.max_epochs;
  if (f.threshold) c.train.threshold = *f.threshold;
  c.validate();
  return c;
}

void echo_config(const RunConfig& c, std::ostream& out) {
  const auto& t = c.train;
  out << "profile=" << c.profile << " dropout=" << t.dropout << " lr=" << t.lr << " batch_size=" << t.batch_size
      << " warmup_ratio=" << t.warmup_ratio << " weight_decay=" << t.weight_decay << " max_epochs=" << t.max_epochs
      << " patience=" << t.patience << " seed=" << t.seed << '\n';
  out << "model: d_model=" << c.model.d_model << " layers=" << c.model.n_layers << " heads=" << c.model.n_heads
      << " d_ff=" << c.model.d_ff << " | input: n_best=" << c.data.input.n_cap << " max_len=" << c.data.input.max_len
      << " use_context=" << (c.data.input.use_context ? "true" : "false") << '\n';
}

std::vector<double> parse_percents(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw std::invalid_argument("--percents: '" + item + "' is not a number");
    if (!(v > 0.0) || v > 100.0) throw std::invalid_argument("--percents: " + item + " is outside (0, 100]");
    out.push_back(v);
  }
  if (out.empty()) throw std::invalid_argument("--percents: empty list");
  return out;
}

void apply_thread_env() {
  if (const char* v = std::getenv("NBEST_SLU_THREADS")) {
    const int n = std::atoi(v);
    if (n < 1) throw std::invalid_argument(std::string("NBEST_SLU_THREADS must be a positive integer, got '") + v + "'");
    kernels::set_num_threads(n);
  }
}

void print_metrics(const MetricsReport& m, std::ostream& out) {
  out << std::fixed << std::setprecision(4) << "F1=" << m.f1 << " P=" << m.precision << " R=" << m.recall
      << " accuracy=" << m.accuracy << " (tp=" << m.tp << " fp=" << m.fp << " fn=" << m.fn << " n=" << m.n_samples
      << ")\n"
      << std::defaultfloat;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"N-best ASR spoken language understanding toolkit", "nbslu"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolkitVersion);

  // import
  std::string dstc2_root, flist, import_out, import_split = "train";
  auto* import_cmd = app.add_subcommand("import", "Convert DSTC2 calls to the canonical JSON-lines format");
  import_cmd->add_option("--dstc2-root", dstc2_root, "DSTC2 data root")->required()->check(CLI::ExistingDirectory);
  import_cmd->add_option("--flist", flist, "File listing call directories")->required()->check(CLI::ExistingFile);
  import_cmd->add_option("--out", import_out, "Output JSON-lines file")->required();
  import_cmd->add_option("--split", import_split, "Split name")->check(CLI::IsMember({"train", "dev", "test"}));

  // build-vocab
  std::string vocab_train, vocab_out;
  int min_freq = 1;
  auto* vocab_cmd = app.add_subcommand("build-vocab", "Build a word vocabulary from training data");
  vocab_cmd->add_option("--train", vocab_train, "Training split")->required()->check(CLI::ExistingFile);
  vocab_cmd->add_option("--min-freq", min_freq, "Minimum token count")->check(CLI::PositiveNumber);
  vocab_cmd->add_option("--out", vocab_out, "Output vocabulary (token<TAB>id)")->required();

  // train
  TrainFlags train_flags;
  std::string train_path, dev_path, test_path, train_out;
  double percent = 100.0;
  auto* train_cmd = app.add_subcommand("train", "Train a model, keeping the best dev-F1 checkpoint");
  train_cmd->add_option("--train", train_path, "Training split")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--dev", dev_path, "Development split")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--test", test_path, "Optional test split scored with the best model")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_out, "Run directory")->required();
  train_cmd->add_option("--percent", percent, "Stratified training subset in percent")->check(CLI::Range(0.0, 100.0));
  add_train_flags(train_cmd, train_flags);

  // eval
  std::string model_dir, eval_test, eval_out, eval_preds;
  std::optional<double> eval_threshold;
  auto* eval_cmd = app.add_subcommand("eval", "Score a trained model on a split");
  eval_cmd->add_option("--model", model_dir, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--test", eval_test, "Split to score")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "Metrics file")->required();
  eval_cmd->add_option("--threshold", eval_threshold, "Presence threshold")->check(CLI::Range(0.0, 1.0));
  eval_cmd->add_option("--predictions", eval_preds, "Also write per-sample predictions here");

  // lowdata
  TrainFlags low_flags;
  std::string low_train, low_dev, low_test, low_out, percents_arg = "5,10,20,50";
  size_t low_repeats = 1;
  auto* low_cmd = app.add_subcommand("lowdata", "Sweep stratified training subsets");
  low_cmd->add_option("--train", low_train, "Training split")->required()->check(CLI::ExistingFile);
  low_cmd->add_option("--dev", low_dev, "Development split")->required()->check(CLI::ExistingFile);
  low_cmd->add_option("--test", low_test, "Test split")->required()->check(CLI::ExistingFile);
  low_cmd->add_option("--out", low_out, "Output directory")->required();
  low_cmd->add_option("--percents", percents_arg, "Comma-separated percentages");
  low_cmd->add_option("--repeats", low_repeats, "Seeds to average over")->check(CLI::PositiveNumber);
  add_train_flags(low_cmd, low_flags);

  // ablate
  TrainFlags abl_flags;
  std::string abl_train, abl_dev, abl_test, abl_out;
  size_t abl_repeats = 1;
  auto* abl_cmd = app.add_subcommand("ablate", "Train with and without the system utterance");
  abl_cmd->add_option("--train", abl_train, "Training split")->required()->check(CLI::ExistingFile);
  abl_cmd->add_option("--dev", abl_dev, "Development split")->required()->check(CLI::ExistingFile);
  abl_cmd->add_option("--test", abl_test, "Test split")->required()->check(CLI::ExistingFile);
  abl_cmd->add_option("--out", abl_out, "Output directory")->required();
  abl_cmd->add_option("--repeats", abl_repeats, "Seeds to average over")->check(CLI::PositiveNumber);
  add_train_flags(abl_cmd, abl_flags);

  // synth
  std::string synth_spec, synth_out;
  size_t n_train = 2000, n_dev = 400, n_test = 400;
  std::optional<uint64_t> synth_seed;
  std::optional<double> synth_sub, synth_ctx;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic restaurant-domain corpus");
  synth_cmd->add_option("--spec", synth_spec, "Generator spec (JSON); built-in default if omitted")
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth_out, "Output directory for train/dev/test.jsonl")->required();
  synth_cmd->add_option("--train-size", n_train, "Training samples")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--dev-size", n_dev, "Development samples")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--test-size", n_test, "Test samples")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");
  synth_cmd->add_option("--substitution", synth_sub, "Per-word substitution probability")->check(CLI::Range(0.0, 1.0));
  synth_cmd->add_option("--context-fraction", synth_ctx, "Share of context-dependent samples")
      ->check(CLI::Range(0.0, 1.0));

  // config
  TrainFlags show_flags;
  auto* config_cmd = app.add_subcommand("config", "Print the resolved configuration and exit");
  add_train_flags(config_cmd, show_flags);

  // reproduce
  std::string repro_manifest, repro_out;
  auto* repro_cmd = app.add_subcommand("reproduce", "Re-run a command from its run_manifest.json");
  repro_cmd->add_option("--manifest", repro_manifest, "Manifest to replay")->required()->check(CLI::ExistingFile);
  repro_cmd->add_option("--out", repro_out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolkitVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    if (msg.empty()) msg = "invalid arguments";
    err << "nbslu: " << msg << " (see --help)\n";
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    apply_thread_env();
    if (*import_cmd) {
      const SplitName name = import_split == "dev" ? SplitName::kDev : import_split == "test" ? SplitName::kTest : SplitName::kTrain;
      const DatasetSplit split = import_dstc2(dstc2_root, flist, name);
      write_canonical(split, fs::path(import_out));
      out << "imported " << split.size() << " turns to " << import_out << '\n';
    } else if (*vocab_cmd) {
      const Vocabulary vocab = build_vocab(read_canonical(vocab_train), min_freq);
      vocab.save(vocab_out);
      out << "vocabulary of " << vocab.size() << " tokens written to " << vocab_out << '\n';
    } else if (*train_cmd) {
      const RunConfig config = resolve_config(train_flags);
      echo_config(config, out);
      const DatasetSplit train = read_canonical(train_path, SplitName::kTrain);
      const DatasetSplit dev = read_canonical(dev_path, SplitName::kDev);
      std::optional<DatasetSplit> test;
      if (!test_path.empty()) test = read_canonical(test_path, SplitName::kTest);
      if (!(percent > 0.0)) throw std::invalid_argument("--percent must be in (0, 100]");
      JobSpec spec{config, percent, config.train.seed, {train_path, dev_path, test_path}};
      fs::create_directories(train_out);
      const JobResult r = run_job(train, dev, test ? &*test : nullptr, spec, fs::path(train_out), &out);
      out << "best dev F1 " << r.best_dev_f1 << " at epoch " << r.best_epoch << "; checkpoint in "
          << (fs::path(train_out) / "model").string() << '\n';
      if (r.test) {
        out << "test: ";
        print_metrics(*r.test, out);
      }
    } else if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(model_dir);
      const DatasetSplit test = read_canonical(eval_test, SplitName::kTest);
      const double threshold = eval_threshold.value_or(ckpt.config.train.threshold);
      const EvalResult r = evaluate(ckpt.model, test, ckpt.labels, ckpt.vocab, threshold, ckpt.config.data.input);
      write_metrics(r.metrics, eval_out);
      if (!eval_preds.empty()) write_predictions(r.predictions, fs::path(eval_preds));
      print_metrics(r.metrics, out);
    } else if (*low_cmd) {
      const RunConfig config = resolve_config(low_flags);
      echo_config(config, out);
      const std::vector<double> percents = parse_percents(percents_arg);
      const DatasetSplit train = read_canonical(low_train, SplitName::kTrain);
      const DatasetSplit dev = read_canonical(low_dev, SplitName::kDev);
      const DatasetSplit test = read_canonical(low_test, SplitName::kTest);
      fs::create_directories(low_out);
      const auto rows = run_lowdata(train, dev, test, percents, config.train.seed, config, low_repeats,
                                    {low_train, low_dev, low_test}, fs::path(low_out), &out);
      out << "percent\ttrain_size\tF1\taccuracy\n";
      for (const auto& r : rows) out << r.percent << '\t' << r.train_size << '\t' << r.f1 << '\t' << r.accuracy << '\n';
    } else if (*abl_cmd) {
      const RunConfig config = resolve_config(abl_flags);
      echo_config(config, out);
      const DatasetSplit train = read_canonical(abl_train, SplitName::kTrain);
      const DatasetSplit dev = read_canonical(abl_dev, SplitName::kDev);
      const DatasetSplit test = read_canonical(abl_test, SplitName::kTest);
      fs::create_directories(abl_out);
      const AblationResult r = run_ablation(train, dev, test, config, abl_repeats, {abl_train, abl_dev, abl_test},
                                            fs::path(abl_out), &out);
      out << "with context:    F1=" << r.with_f1 << " accuracy=" << r.with_accuracy << '\n'
          << "without context: F1=" << r.without_f1 << " accuracy=" << r.without_accuracy << '\n'
          << "delta:           F1=" << r.delta_f1 << " accuracy=" << r.delta_accuracy << '\n';
    } else if (*synth_cmd) {
      SynthSpec spec = synth_spec.empty() ? default_synth_spec() : synth_spec_from_json(read_json(synth_spec));
      if (synth_seed) spec.seed = *synth_seed;
      if (synth_sub) spec.substitution_prob = *synth_sub;
      if (synth_ctx) spec.context_fraction = *synth_ctx;
      const SynthCorpus corpus = generate_synthetic(spec, n_train, n_dev, n_test);
      const fs::path dir(synth_out);
      fs::create_directories(dir);
      write_canonical(corpus.train, dir / "train.jsonl");
      write_canonical(corpus.dev, dir / "dev.jsonl");
      write_canonical(corpus.test, dir / "test.jsonl");
      std::ofstream(dir / "synth_spec.json") << to_json(spec).dump(2) << '\n';
      out << "wrote " << n_train << "/" << n_dev << "/" << n_test << " samples to " << dir.string() << '\n';
    } else if (*config_cmd) {
      const RunConfig config = resolve_config(show_flags);
      echo_config(config, out);
      out << to_json(config).dump(2) << '\n';
    } else if (*repro_cmd) {
      fs::create_directories(repro_out);
      const auto results = reproduce(repro_manifest, repro_out, &out);
      out << results.dump(2) << '\n';
    }
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg)
      if (c == '\n') c = ' ';
    err << "nbslu: error: " << msg << '\n';
    return 1;
  }
  return 0;
}

}  // namespace nbslu
