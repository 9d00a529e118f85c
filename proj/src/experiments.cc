#include "nbslu/experiments.h"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "nbslu/manifest.h"
#include "nbslu/random.h"

namespace nbslu {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string percent_label(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

ordered_json sources_json(const DataSources& s) {
  return {{"train", s.train.string()}, {"dev", s.dev.string()}, {"test", s.test.string()}};
}

DatasetSplit load_checked(const RunManifest& m, const char* key, SplitName name) {
  const std::string path = m.inputs.at(key).get<std::string>();
  if (path.empty()) throw std::runtime_error(std::string("manifest has no path for the ") + key + " split");
  DatasetSplit split = read_canonical(path, name);
  if (m.data_hashes.contains(key) && m.data_hashes.at(key) != content_hash(split))
    throw std::runtime_error(std::string("content hash of ") + path + " differs from the manifest");
  return split;
}

}  // namespace

ordered_json to_json(const JobResult& r) {
  ordered_json j = {{"train_size", r.train_size}, {"best_epoch", r.best_epoch}, {"best_dev_f1", r.best_dev_f1}};
  if (r.test) j["test"] = to_json(*r.test);
  return j;
}

JobResult run_job(const DatasetSplit& train, const DatasetSplit& dev, const DatasetSplit* test, const JobSpec& spec,
                  const std::optional<std::filesystem::path>& out_dir, std::ostream* progress) {
  spec.config.validate();
  RunManifest manifest;
  manifest.subcommand = "train";
  manifest.config = to_json(spec.config);
  manifest.inputs = sources_json(spec.sources);
  manifest.inputs["percent"] = spec.percent;
  manifest.inputs["subsample_seed"] = spec.subsample_seed;
  manifest.data_hashes["train"] = content_hash(train);
  manifest.data_hashes["dev"] = content_hash(dev);
  if (test) manifest.data_hashes["test"] = content_hash(*test);
  manifest.seeds["train"] = spec.config.train.seed;
  manifest.seeds["subsample"] = spec.subsample_seed;
  manifest.started_at = utc_timestamp();
  if (out_dir) manifest.write(*out_dir / "run_manifest.json");

  const DatasetSplit subset = spec.percent < 100.0 ? stratified_subsample(train, spec.percent, spec.subsample_seed) : train;
  const Vocabulary vocab = build_vocab(subset, spec.config.data.min_freq);
  const LabelSpace labels = build_label_space(subset);

  TrainOptions topts;
  topts.out_dir = out_dir;
  topts.progress = progress;
  topts.provenance = {{"seed", spec.config.train.seed}, {"percent", spec.percent},
                      {"subsample_seed", spec.subsample_seed}, {"train_hash", manifest.data_hashes["train"]}};
  const TrainResult tr = nbslu::train(subset, dev, labels, vocab, spec.config, topts);

  JobResult result;
  result.train_size = subset.size();
  result.best_epoch = tr.best_epoch;
  result.best_dev_f1 = tr.best_dev_f1;
  result.log = tr.log;
  if (test) {
    const EvalResult ev =
        evaluate(tr.best, *test, labels, vocab, spec.config.train.threshold, spec.config.data.input);
    result.test = ev.metrics;
    if (out_dir) {
      write_metrics(ev.metrics, *out_dir / "test_metrics.json");
      write_predictions(ev.predictions, *out_dir / "test_predictions.jsonl");
    }
  }
  if (out_dir) {
    manifest.results = to_json(result);
    manifest.status = "finished";
    manifest.finished_at = utc_timestamp();
    manifest.write(*out_dir / "run_manifest.json");
  }
  return result;
}

uint64_t repeat_seed(uint64_t seed, size_t repeat) { return repeat == 0 ? seed : derive_seed(seed, repeat); }

std::vector<LowDataRow> run_lowdata(const DatasetSplit& train, const DatasetSplit& dev, const DatasetSplit& test,
                                    const std::vector<double>& percents, uint64_t seed, const RunConfig& config,
                                    size_t repeats, const DataSources& sources,
                                    const std::optional<std::filesystem::path>& out_dir, std::ostream* progress) {
  if (percents.empty()) throw std::invalid_argument("lowdata needs at least one percentage");
  for (double p : percents)
    if (!(p > 0.0) || p > 100.0) throw std::invalid_argument("lowdata percentage " + percent_label(p) + " outside (0, 100]");
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");

  RunManifest manifest;
  manifest.subcommand = "lowdata";
  manifest.config = to_json(config);
  manifest.inputs = sources_json(sources);
  manifest.inputs["percents"] = percents;
  manifest.inputs["seed"] = seed;
  manifest.inputs["repeats"] = repeats;
  manifest.data_hashes = {{"train", content_hash(train)}, {"dev", content_hash(dev)}, {"test", content_hash(test)}};
  manifest.seeds["base"] = seed;
  manifest.started_at = utc_timestamp();
  if (out_dir) manifest.write(*out_dir / "run_manifest.json");

  std::vector<LowDataRow> rows;
  for (double p : percents) {
    LowDataRow row;
    row.percent = p;
    for (size_t r = 0; r < repeats; ++r) {
      JobSpec spec;
      spec.config = config;
      spec.config.train.seed = repeat_seed(seed, r);
      spec.percent = p;
      spec.subsample_seed = spec.config.train.seed;
      spec.sources = sources;
      std::optional<std::filesystem::path> dir;
      if (out_dir) dir = *out_dir / ("p" + percent_label(p)) / ("seed" + std::to_string(r));
      if (progress) *progress << "== lowdata p=" << percent_label(p) << " repeat " << r << '\n';
      JobResult jr = run_job(train, dev, &test, spec, dir, progress);
      row.train_size = jr.train_size;
      row.f1 += jr.test->f1 / static_cast<double>(repeats);
      row.accuracy += jr.test->accuracy / static_cast<double>(repeats);
      row.runs.push_back(std::move(jr));
    }
    rows.push_back(std::move(row));
  }

  if (out_dir) {
    std::ofstream table(*out_dir / "lowdata.tsv");
    table << "percent\ttrain_size\tf1\taccuracy\n";
    ordered_json res = ordered_json::array();
    for (const auto& r : rows) {
      table << percent_label(r.percent) << '\t' << r.train_size << '\t' << r.f1 << '\t' << r.accuracy << '\n';
      res.push_back({{"percent", r.percent}, {"train_size", r.train_size}, {"f1", r.f1}, {"accuracy", r.accuracy}});
    }
    manifest.results = {{"rows", res}};
    manifest.status = "finished";
    manifest.finished_at = utc_timestamp();
    manifest.write(*out_dir / "run_manifest.json");
  }
  return rows;
}

AblationResult run_ablation(const DatasetSplit& train, const DatasetSplit& dev, const DatasetSplit& test,
                            const RunConfig& config, size_t repeats, const DataSources& sources,
                            const std::optional<std::filesystem::path>& out_dir, std::ostream* progress) {
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  RunManifest manifest;
  manifest.subcommand = "ablate";
  manifest.config = to_json(config);
  manifest.inputs = sources_json(sources);
  manifest.inputs["repeats"] = repeats;
  manifest.data_hashes = {{"train", content_hash(train)}, {"dev", content_hash(dev)}, {"test", content_hash(test)}};
  manifest.seeds["base"] = config.train.seed;
  manifest.started_at = utc_timestamp();
  if (out_dir) manifest.write(*out_dir / "run_manifest.json");

  AblationResult res;
  const double w = 1.0 / static_cast<double>(repeats);
  for (size_t r = 0; r < repeats; ++r) {
    for (bool ctx : {true, false}) {
      JobSpec spec;
      spec.config = config;
      spec.config.train.seed = repeat_seed(config.train.seed, r);
      spec.config.data.input.use_context = ctx;
      spec.sources = sources;
      std::optional<std::filesystem::path> dir;
      if (out_dir) dir = *out_dir / (ctx ? "with_context" : "without_context") / ("seed" + std::to_string(r));
      if (progress) *progress << "== ablation " << (ctx ? "with" : "without") << " context, repeat " << r << '\n';
      JobResult jr = run_job(train, dev, &test, spec, dir, progress);
      if (ctx) {
        res.with_f1 += w * jr.test->f1;
        res.with_accuracy += w * jr.test->accuracy;
        res.with_runs.push_back(std::move(jr));
      } else {
        res.without_f1 += w * jr.test->f1;
        res.without_accuracy += w * jr.test->accuracy;
        res.without_runs.push_back(std::move(jr));
      }
    }
  }
  res.delta_f1 = res.with_f1 - res.without_f1;
  res.delta_accuracy = res.with_accuracy - res.without_accuracy;

  if (out_dir) {
    manifest.results = {{"with_context", {{"f1", res.with_f1}, {"accuracy", res.with_accuracy}}},
                        {"without_context", {{"f1", res.without_f1}, {"accuracy", res.without_accuracy}}},
                        {"delta_f1", res.delta_f1},
                        {"delta_accuracy", res.delta_accuracy}};
    manifest.status = "finished";
    manifest.finished_at = utc_timestamp();
    manifest.write(*out_dir / "run_manifest.json");
  }
  return res;
}

ordered_json reproduce(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
                       std::ostream* progress) {
  const RunManifest m = RunManifest::read(manifest_path);
  const RunConfig config = run_config_from_json(m.config);
  const DataSources sources{m.inputs.value("train", std::string()), m.inputs.value("dev", std::string()),
                            m.inputs.value("test", std::string())};
  const DatasetSplit train = load_checked(m, "train", SplitName::kTrain);
  const DatasetSplit dev = load_checked(m, "dev", SplitName::kDev);

  if (m.subcommand == "train") {
    JobSpec spec{config, m.inputs.at("percent").get<double>(), m.inputs.at("subsample_seed").get<uint64_t>(), sources};
    std::optional<DatasetSplit> test;
    if (!sources.test.empty()) test = load_checked(m, "test", SplitName::kTest);
    run_job(train, dev, test ? &*test : nullptr, spec, out_dir, progress);
  } else if (m.subcommand == "lowdata") {
    const DatasetSplit test = load_checked(m, "test", SplitName::kTest);
    run_lowdata(train, dev, test, m.inputs.at("percents").get<std::vector<double>>(), m.inputs.at("seed").get<uint64_t>(),
                config, m.inputs.at("repeats").get<size_t>(), sources, out_dir, progress);
  } else if (m.subcommand == "ablate") {
    const DatasetSplit test = load_checked(m, "test", SplitName::kTest);
    run_ablation(train, dev, test, config, m.inputs.at("repeats").get<size_t>(), sources, out_dir, progress);
  } else {
    throw std::runtime_error("cannot reproduce subcommand '" + m.subcommand + "'");
  }
  return RunManifest::read(out_dir / "run_manifest.json").results;
}

}  // namespace nbslu
