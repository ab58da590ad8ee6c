#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "octevo/tensor.hpp"

namespace octevo {

struct ArchConfig {
  int64_t input_h = 512, input_w = 512;
  int delta_s = 1;                      // input stack spans 2*delta_s+1 B-scans
  std::vector<int64_t> enc_dims{128, 256, 512, 1024, 2048};
  std::vector<int64_t> gem_dims{1024, 1024, 1024};
  int heads = 5;
  int toy_scale = 1;                    // divisor on every channel width
  int cab_reduction = 16;
  int64_t proj_dim = 128;
  int use_gem = 1;  // 0 bypasses the latent evolution module

  int64_t in_channels() const { return 2 * int64_t(delta_s) + 1; }
  int64_t enc_dim(size_t i) const {
    return std::max<int64_t>(1, enc_dims[i] / toy_scale);
  }
  int64_t gem_dim(size_t i) const {
    return std::max<int64_t>(1, gem_dims[i] / toy_scale);
  }
  int64_t proj_out() const { return std::max<int64_t>(1, proj_dim / toy_scale); }
  int64_t latent_h() const { return input_h >> enc_dims.size(); }
  int64_t latent_w() const { return input_w >> enc_dims.size(); }
  int64_t vertices() const { return latent_h() * latent_w(); }

  void validate() const;  // throws ConfigError
  std::string serialize() const;
  static ArchConfig deserialize(const std::string& line);
};

using ParamMap = std::map<std::string, Tensor>;

struct ModelParams {
  ParamMap encoder, gem, decoder, projection, quality_disc, pair_disc;

  // stable iteration across the six collections, prefix-qualified names
  std::vector<std::pair<std::string, Tensor*>> all();
  std::vector<std::pair<std::string, const Tensor*>> all() const;
  // the generator side (everything the G optimizer updates)
  std::vector<std::pair<std::string, Tensor*>> generator_side();
  std::vector<std::pair<std::string, Tensor*>> discriminator_side();
};

// zero-mean normal sigma=0.02 weights, zero biases, requires_grad on
ModelParams init_model_params(const ArchConfig& cfg, uint64_t seed);

// ---------------- building blocks ----------------
// per-channel gate: f * sigmoid(w_excite . relu(w_squeeze . GAP(f)))
Tensor cab_forward(const Tensor& f, const Tensor& w_squeeze,
                   const Tensor& w_excite);

Tensor enc_block_forward(const Tensor& x, const ParamMap& p,
                         const std::string& prefix);
Tensor encoder_forward(const Tensor& x, const ParamMap& p,
                       const ArchConfig& cfg);

Tensor normalized_adjacency(int64_t p);  // all entries 1/P
// mish(A_norm . h . w) with the uniform fully-connected adjacency
Tensor gcn_propagate(const Tensor& h, const Tensor& w, int64_t p);
// attention rows softmax(leaky_relu(a^T [W h_p || W h_q]))
Tensor gat_attention(const Tensor& h, const Tensor& w, const Tensor& a);
Tensor gat_layer_forward(const Tensor& h, const ParamMap& p,
                         const std::string& prefix, int heads);
Tensor gem_forward(const Tensor& f, const ParamMap& p, const ArchConfig& cfg);

Tensor decoder_forward(const Tensor& f, const ParamMap& p,
                       const ArchConfig& cfg);

// z = w2 . relu(w1 . GAP(f)); no biases
Tensor projection_head(const Tensor& f, const Tensor& w1, const Tensor& w2);

struct PredictOut {
  Tensor image;   // [1,H,W] in [-1,1]
  Tensor f_in;    // encoder output (pre-GEM)
  Tensor f_pred;  // GEM output
};
struct ReconstructOut {
  Tensor image;
  Tensor f;
};

PredictOut generator_predict(const Tensor& x_stack, const ModelParams& mp,
                             const ArchConfig& cfg, bool use_gem = true);
ReconstructOut generator_reconstruct(const Tensor& x_stack,
                                     const ModelParams& mp,
                                     const ArchConfig& cfg);

// PatchGAN stack; channel count of the first conv decides 1- vs 2-channel use
Tensor discriminator_forward(const Tensor& img, const ParamMap& p);

// ---------------- checkpoints ----------------
void save_checkpoint(const std::string& path, const ArchConfig& cfg,
                     const ModelParams& mp);
std::pair<ArchConfig, ModelParams> load_checkpoint(const std::string& path);

}  // namespace octevo
