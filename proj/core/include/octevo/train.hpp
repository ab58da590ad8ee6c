#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "octevo/data.hpp"
#include "octevo/model.hpp"
#include "octevo/objective.hpp"
#include "octevo/optim.hpp"

namespace octevo {

// which discriminators participate in training
enum class DiscMode { Quality, Pair, Both };
DiscMode parse_disc_mode(const std::string& s);  // "q" | "p" | "both"
std::string disc_mode_name(DiscMode m);

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 0.1;  // decoupled; deliberately large, tune with care
  int batch = 2;
  int epochs = 100;
  int finetune_epochs = 5;
  uint64_t seed = 42;
  LossWeights weights;
  bool use_erm = true;
  bool use_recon = true;
  bool augment = true;
  DiscMode disc = DiscMode::Both;

  void validate() const;  // throws ConfigError
};

struct TrainState {
  ArchConfig arch;
  TrainConfig cfg;
  ModelParams params;
  AdamState opt_g, opt_d;
  int64_t step = 0;
};

TrainState make_train_state(const ArchConfig& arch, const TrainConfig& cfg,
                            uint64_t init_seed);

struct StepSample {
  Tensor stack_t1;  // [2*delta_s+1, H, W]
  Tensor stack_t2;
  Tensor target;    // [1, H, W]
};

struct StepLosses {
  double d_total = 0;
  LossBreakdown g;
};

// One update of the discriminators against both branches' fakes (generators
// run without recording, so their parameters keep no gradients).
double train_discriminator_phase(TrainState& st,
                                 const std::vector<StepSample>& batch);
// One update of the shared generator side on fresh forward graphs. Only the
// generator optimizer runs; discriminator parameters are left untouched.
LossBreakdown train_generator_phase(TrainState& st,
                                    const std::vector<StepSample>& batch);
// one discriminator phase, then one generator phase, on the same batch
StepLosses train_step(TrainState& st, const std::vector<StepSample>& batch);

struct TrainRunOpts {
  int epochs = 1;
  std::string csv_path;   // per-step loss log; empty disables
  bool append_csv = false;
  std::string ckpt_path;  // rewritten after every epoch; empty disables
  // when set, an FNV hash of every raw (pre-augmentation) target B-scan
  // that enters a batch is recorded here
  std::set<uint64_t>* sample_hashes = nullptr;
};

void run_training(TrainState& st, const std::vector<SeriesPair>& pairs,
                  const TrainRunOpts& opts);

// order-stable digest of every parameter tensor (names and values)
uint64_t params_checksum(const ModelParams& mp);

uint64_t bscan_hash(const Cube& cube, int slice);

}  // namespace octevo
