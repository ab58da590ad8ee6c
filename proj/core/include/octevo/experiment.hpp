#pragma once

#include <string>
#include <vector>

#include "octevo/data.hpp"
#include "octevo/metrics.hpp"
#include "octevo/model.hpp"
#include "octevo/preproc.hpp"
#include "octevo/train.hpp"

namespace octevo {

// One patient's visits after flatten+crop, rigidly aligned to the first
// visit via fundus registration. Surface grids are kept in window rows.
struct ProcessedSeries {
  std::vector<Cube> cubes;
  std::vector<SurfaceSet> surfaces;
};

ProcessedSeries preprocess_series(const std::vector<Cube>& cubes,
                                  const std::vector<SurfaceSet>& surfaces,
                                  int ref_row, int max_shift = 20);

// Runs preprocess_series per patient and writes cubes, surfaces, and a new
// manifest under out_dir. Returns the rewritten manifest rows.
std::vector<ManifestEntry> preprocess_manifest(
    const std::vector<ManifestEntry>& rows, const std::string& out_dir,
    int ref_row, int max_shift = 20);

// Slides over every slice of a preprocessed cube and decodes the next-visit
// B-scan for each; output slice count equals the input's.
Cube predict_cube(const Cube& cube_t1, const ModelParams& mp,
                  const ArchConfig& arch);

struct EvalResult {
  MetricsReport report;
  double mean_l1 = 0;  // on the [0,1] intensity scale
};

EvalResult evaluate_model(const std::vector<SeriesPair>& pairs,
                          const ModelParams& mp, const ArchConfig& arch);
// copy-forward baseline: the prediction is the input B-scan itself
EvalResult evaluate_identity(const std::vector<SeriesPair>& pairs);

struct FoldOutcome {
  EvalResult model;
  EvalResult baseline;
  uint64_t checksum = 0;  // final parameters
};

struct ExperimentResult {
  SplitScheme scheme = SplitScheme::P0;
  std::vector<FoldOutcome> folds;
  MetricsReport combined;  // model rows across all folds
  double model_mean_l1 = 0;
  double baseline_mean_l1 = 0;
};

// Executes a SplitPlan end to end: per fold, train (P-0/P-M) or load the
// matching P-0 fold checkpoint and fine-tune (P-1), then evaluate the fold's
// held-out pairs against the copy-forward baseline. Writes per-fold
// checkpoints, loss logs, and comparison grids plus summary.csv,
// per_bscan.csv, and checksums.txt under out_dir. Training batches are
// hash-audited: a held-out B-scan entering any batch is a protocol error.
ExperimentResult run_experiment(const std::vector<ManifestEntry>& rows,
                                const SplitPlan& plan, const ArchConfig& arch,
                                const TrainConfig& cfg,
                                const std::string& out_dir,
                                const std::string& warm_start_dir = "");

}  // namespace octevo
