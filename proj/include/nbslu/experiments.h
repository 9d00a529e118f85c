#ifndef NBSLU_EXPERIMENTS_H_
#define NBSLU_EXPERIMENTS_H_

// Experiment protocols: a single train+evaluate job, the low-data sweep over
// stratified training subsets, and the with/without system-utterance
// ablation. Every run directory receives a run_manifest.json from which
// `reproduce` re-executes the run.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "json.hpp"
#include "nbslu/config.h"
#include "nbslu/corpus.h"
#include "nbslu/evaluation.h"
#include "nbslu/training.h"

namespace nbslu {

// Where the splits came from; recorded in manifests so runs can be replayed.
struct DataSources {
  std::filesystem::path train;
  std::filesystem::path dev;
  std::filesystem::path test;
};

struct JobSpec {
  RunConfig config;
  double percent = 100.0;  // stratified training subset, 100 = all
  uint64_t subsample_seed = 0;
  DataSources sources;
};

struct JobResult {
  size_t train_size = 0;
  size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
  std::optional<MetricsReport> test;
  std::vector<EpochRecord> log;
};

nlohmann::ordered_json to_json(const JobResult& r);

// Subsample, build vocabulary and label space from the training data, train,
// and (when `test` is non-null) score the best model on the test split.
JobResult run_job(const DatasetSplit& train, const DatasetSplit& dev, const DatasetSplit* test, const JobSpec& spec,
                  const std::optional<std::filesystem::path>& out_dir, std::ostream* progress = nullptr);

struct LowDataRow {
  double percent = 0.0;
  size_t train_size = 0;
  double f1 = 0.0;        // mean over repeats
  double accuracy = 0.0;  // mean over repeats
  std::vector<JobResult> runs;
};

// Seed of repeat i: the base seed for i = 0, derived from it otherwise.
uint64_t repeat_seed(uint64_t seed, size_t repeat);

// For every p: stratified_subsample(train, p, seed) -> train -> test. Dev and
// test stay fixed across p. The seed drives both subsampling and training.
std::vector<LowDataRow> run_lowdata(const DatasetSplit& train, const DatasetSplit& dev, const DatasetSplit& test,
                                    const std::vector<double>& percents, uint64_t seed, const RunConfig& config,
                                    size_t repeats = 1, const DataSources& sources = {},
                                    const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                    std::ostream* progress = nullptr);

struct AblationResult {
  double with_f1 = 0.0;
  double with_accuracy = 0.0;
  double without_f1 = 0.0;
  double without_accuracy = 0.0;
  double delta_f1 = 0.0;        // with - without
  double delta_accuracy = 0.0;  // with - without
  std::vector<JobResult> with_runs;
  std::vector<JobResult> without_runs;
};

// Paired runs that differ only in data.use_context; means over `repeats` seeds.
AblationResult run_ablation(const DatasetSplit& train, const DatasetSplit& dev, const DatasetSplit& test,
                            const RunConfig& config, size_t repeats = 1, const DataSources& sources = {},
                            const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                            std::ostream* progress = nullptr);

// Re-executes the run described by a manifest into `out_dir` after checking
// the input hashes; returns the new manifest's results.
nlohmann::ordered_json reproduce(const std::filesystem::path& manifest_path, const std::filesystem::path& out_dir,
                                 std::ostream* progress = nullptr);

}  // namespace nbslu

#endif  // NBSLU_EXPERIMENTS_H_
