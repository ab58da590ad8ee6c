#include "octevo/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "octevo/errors.hpp"
#include "octevo/hash.hpp"
#include "octevo/rng.hpp"

namespace octevo {

DiscMode parse_disc_mode(const std::string& s) {
  if (s == "q") return DiscMode::Quality;
  if (s == "p") return DiscMode::Pair;
  if (s == "both") return DiscMode::Both;
  throw ConfigError("disc mode must be q, p, or both; got '" + s + "'");
}

std::string disc_mode_name(DiscMode m) {
  switch (m) {
    case DiscMode::Quality: return "q";
    case DiscMode::Pair: return "p";
    case DiscMode::Both: return "both";
  }
  throw ConfigError("bad disc mode value");
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("train: lr must be positive");
  if (!(weight_decay >= 0))
    throw ConfigError("train: weight decay must be non-negative");
  if (batch < 1) throw ConfigError("train: batch must be >= 1");
  if (epochs < 0 || finetune_epochs < 0)
    throw ConfigError("train: epoch counts must be non-negative");
  try {
    weights.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

TrainState make_train_state(const ArchConfig& arch, const TrainConfig& cfg,
                            uint64_t init_seed) {
  arch.validate();
  cfg.validate();
  TrainState st;
  st.arch = arch;
  st.cfg = cfg;
  st.params = init_model_params(arch, init_seed);
  return st;
}

namespace {

void clear_all_grads(ModelParams& mp) {
  for (auto& [name, t] : mp.all()) t->clear_grad();
}

Tensor acc_add(const Tensor& acc, const Tensor& term) {
  return acc.defined() ? add(acc, term) : term;
}

double item_or_zero(const Tensor& t) {
  return t.defined() ? double(t.item()) : 0.0;
}

std::string breakdown_snapshot(const LossBreakdown& b) {
  std::ostringstream os;
  os << "l1_p=" << b.l1_p << " l1_r=" << b.l1_r
     << " gan_pair_p=" << b.gan_pair_p << " gan_pair_r=" << b.gan_pair_r
     << " gan_qual_p=" << b.gan_qual_p << " gan_qual_r=" << b.gan_qual_r
     << " erm=" << b.erm;
  return os.str();
}

}  // namespace

double train_discriminator_phase(TrainState& st,
                                 const std::vector<StepSample>& batch) {
  check_arg(!batch.empty(), "train: empty batch");
  ModelParams& mp = st.params;
  const ArchConfig& arch = st.arch;
  const TrainConfig& cfg = st.cfg;
  clear_all_grads(mp);

  Tensor acc;
  for (const StepSample& s : batch) {
    Tensor fake_p, fake_r;
    {
      NoGradGuard ng;  // fakes are D-phase constants
      fake_p = generator_predict(s.stack_t1, mp, arch, arch.use_gem != 0).image;
      if (cfg.use_recon)
        fake_r = generator_reconstruct(s.stack_t2, mp, arch).image;
    }
    if (cfg.disc != DiscMode::Pair) {
      Tensor d_real = discriminator_forward(s.target, mp.quality_disc);
      acc = acc_add(acc, gan_quality_losses(
                             d_real, discriminator_forward(fake_p,
                                                           mp.quality_disc))
                             .d_loss);
      if (cfg.use_recon)
        acc = acc_add(acc, gan_quality_losses(
                               d_real, discriminator_forward(fake_r,
                                                             mp.quality_disc))
                               .d_loss);
    }
    if (cfg.disc != DiscMode::Quality) {
      Tensor cond = slice0(s.stack_t1, arch.delta_s, 1);
      Tensor d_real =
          discriminator_forward(concat0(cond, s.target), mp.pair_disc);
      acc = acc_add(
          acc, gan_pair_losses(d_real,
                               discriminator_forward(concat0(cond, fake_p),
                                                     mp.pair_disc))
                   .d_loss);
      if (cfg.use_recon)
        acc = acc_add(
            acc, gan_pair_losses(d_real,
                                 discriminator_forward(concat0(cond, fake_r),
                                                       mp.pair_disc))
                     .d_loss);
    }
  }
  acc = mul_scalar(acc, Real(1.0 / double(batch.size())));
  const double total = acc.item();
  if (!std::isfinite(total))
    throw TrainingError("non-finite discriminator loss");
  acc.backward();
  adam_step(mp.discriminator_side(), st.opt_d, cfg.lr, cfg.weight_decay);
  return total;
}

LossBreakdown train_generator_phase(TrainState& st,
                                    const std::vector<StepSample>& batch) {
  check_arg(!batch.empty(), "train: empty batch");
  ModelParams& mp = st.params;
  const ArchConfig& arch = st.arch;
  const TrainConfig& cfg = st.cfg;
  clear_all_grads(mp);

  const Tensor& proj_w1 = mp.projection.at("w1");
  const Tensor& proj_w2 = mp.projection.at("w2");

  Tensor l1_p, l1_r, gan_pp, gan_pr, gan_qp, gan_qr, erm;
  for (const StepSample& s : batch) {
    PredictOut po = generator_predict(s.stack_t1, mp, arch,
                                      arch.use_gem != 0);
    l1_p = acc_add(l1_p, l1_loss(po.image, s.target));

    ReconstructOut ro;
    if (cfg.use_recon) {
      ro = generator_reconstruct(s.stack_t2, mp, arch);
      l1_r = acc_add(l1_r, l1_loss(ro.image, s.target));
    }
    if (cfg.disc != DiscMode::Pair) {
      gan_qp = acc_add(gan_qp, gan_generator_loss(discriminator_forward(
                                   po.image, mp.quality_disc)));
      if (cfg.use_recon)
        gan_qr = acc_add(gan_qr, gan_generator_loss(discriminator_forward(
                                     ro.image, mp.quality_disc)));
    }
    if (cfg.disc != DiscMode::Quality) {
      Tensor cond = slice0(s.stack_t1, arch.delta_s, 1);
      gan_pp = acc_add(gan_pp, gan_generator_loss(discriminator_forward(
                                   concat0(cond, po.image), mp.pair_disc)));
      if (cfg.use_recon)
        gan_pr = acc_add(gan_pr, gan_generator_loss(discriminator_forward(
                                     concat0(cond, ro.image), mp.pair_disc)));
    }
    if (cfg.use_erm) {
      Tensor z_pred = projection_head(po.f_pred, proj_w1, proj_w2);
      Tensor z_neg = projection_head(po.f_in, proj_w1, proj_w2);
      Tensor f_pos =
          cfg.use_recon ? ro.f : encoder_forward(s.stack_t2, mp.encoder, arch);
      Tensor z_pos = projection_head(f_pos, proj_w1, proj_w2);
      erm = acc_add(erm, erm_loss(z_pred, z_pos, z_neg, cfg.weights.tau));
    }
  }

  const Real inv = Real(1.0 / double(batch.size()));
  for (Tensor* t : {&l1_p, &l1_r, &gan_pp, &gan_pr, &gan_qp, &gan_qr, &erm})
    if (t->defined()) *t = mul_scalar(*t, inv);

  LossBreakdown parts;
  parts.l1_p = item_or_zero(l1_p);
  parts.l1_r = item_or_zero(l1_r);
  parts.gan_pair_p = item_or_zero(gan_pp);
  parts.gan_pair_r = item_or_zero(gan_pr);
  parts.gan_qual_p = item_or_zero(gan_qp);
  parts.gan_qual_r = item_or_zero(gan_qr);
  parts.erm = item_or_zero(erm);
  LossBreakdown bd;
  try {
    bd = total_objective(parts, cfg.weights);
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(e.what()) + " | " +
                        breakdown_snapshot(parts));
  }

  Tensor total;
  for (Tensor* t : {&gan_pp, &gan_pr, &gan_qp, &gan_qr})
    if (t->defined()) total = acc_add(total, *t);
  Tensor l1_sum;
  for (Tensor* t : {&l1_p, &l1_r})
    if (t->defined()) l1_sum = acc_add(l1_sum, *t);
  if (l1_sum.defined())
    total = acc_add(total, mul_scalar(l1_sum, Real(cfg.weights.lambda)));
  if (erm.defined())
    total = acc_add(total, mul_scalar(erm, Real(cfg.weights.mu)));

  total.backward();
  adam_step(mp.generator_side(), st.opt_g, cfg.lr, cfg.weight_decay);
  return bd;
}

StepLosses train_step(TrainState& st, const std::vector<StepSample>& batch) {
  StepLosses out;
  out.d_total = train_discriminator_phase(st, batch);
  out.g = train_generator_phase(st, batch);
  ++st.step;
  return out;
}

uint64_t bscan_hash(const Cube& cube, int slice) {
  check_arg(slice >= 0 && slice < cube.hdr.slices, "bscan_hash: bad slice");
  const int64_t plane = int64_t(cube.hdr.depth) * cube.hdr.width;
  const int64_t dims[2] = {cube.hdr.depth, cube.hdr.width};
  uint64_t h = fnv1a64(dims, sizeof(dims));
  return fnv1a64(cube.voxels.data() + int64_t(slice) * plane, size_t(plane),
                 h);
}

void run_training(TrainState& st, const std::vector<SeriesPair>& pairs,
                  const TrainRunOpts& opts) {
  check_arg(!pairs.empty(), "train: no series pairs");
  check_arg(opts.epochs >= 0, "train: negative epoch count");
  const ArchConfig& arch = st.arch;
  const TrainConfig& cfg = st.cfg;

  std::vector<std::pair<int, int>> items;  // (pair index, slice)
  for (size_t pi = 0; pi < pairs.size(); ++pi) {
    const SeriesPair& pr = pairs[pi];
    pr.validate();
    check_dim(pr.x_t1.hdr.depth == arch.input_h &&
                  pr.x_t1.hdr.width == arch.input_w,
              "train: cube " + pr.patient_id + " does not match model input");
    for (int j = 1; j <= pr.x_t1.hdr.slices; ++j)
      items.emplace_back(int(pi), j);
  }

  std::ofstream csv;
  if (!opts.csv_path.empty()) {
    csv.open(opts.csv_path, opts.append_csv ? std::ios::app : std::ios::trunc);
    if (!csv) throw IoError("cannot open " + opts.csv_path + " for writing");
    if (!opts.append_csv)
      csv << "step,l1_p,l1_r,gan_pair_p,gan_pair_r,gan_qual_p,gan_qual_r,"
             "erm,total_g,total_d\n";
  }

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::vector<std::pair<int, int>> order = items;
    Rng shuffle_rng(mix_seed(cfg.seed, 0xE9Aull, uint64_t(epoch)));
    for (size_t i = order.size() - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(uint64_t(i) + 1)]);

    for (size_t start = 0; start < order.size();
         start += size_t(cfg.batch)) {
      const size_t stop = std::min(order.size(), start + size_t(cfg.batch));
      std::vector<StepSample> batch;
      for (size_t idx = start; idx < stop; ++idx) {
        const auto& [pi, j] = order[idx];
        const SeriesPair& pr = pairs[size_t(pi)];
        if (opts.sample_hashes) {
          for (int k = j - arch.delta_s; k <= j + arch.delta_s; ++k) {
            if (k < 1 || k > pr.x_t1.hdr.slices) continue;
            opts.sample_hashes->insert(bscan_hash(pr.x_t1, k - 1));
            opts.sample_hashes->insert(bscan_hash(pr.x_t2, k - 1));
          }
        }
        SampleTensors s = sample_tensors(pr, j, arch.delta_s);
        if (cfg.augment)
          augment_sample(s, mix_seed(mix_seed(cfg.seed, 0xA06ull),
                                     uint64_t(epoch), uint64_t(idx)));
        batch.push_back({s.stack_t1, s.stack_t2, s.target});
      }
      const StepLosses losses = train_step(st, batch);
      if (csv.is_open()) {
        const LossBreakdown& b = losses.g;
        csv << st.step << ',' << b.l1_p << ',' << b.l1_r << ','
            << b.gan_pair_p << ',' << b.gan_pair_r << ',' << b.gan_qual_p
            << ',' << b.gan_qual_r << ',' << b.erm << ',' << b.total << ','
            << losses.d_total << '\n';
      }
    }
    if (csv.is_open()) csv.flush();
    if (!opts.ckpt_path.empty())
      save_checkpoint(opts.ckpt_path, arch, st.params);
  }
}

uint64_t params_checksum(const ModelParams& mp) {
  uint64_t h = fnv1a64("octevo-params", 13);
  for (const auto& [name, t] : mp.all()) {
    h = fnv1a64(name.data(), name.size(), h);
    const auto& v = t->values();
    h = fnv1a64(v.data(), v.size() * sizeof(Real), h);
  }
  return h;
}

}  // namespace octevo
