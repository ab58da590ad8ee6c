#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "octevo/data.hpp"
#include "octevo/errors.hpp"
#include "octevo/experiment.hpp"
#include "octevo/metrics.hpp"
#include "octevo/model.hpp"
#include "octevo/train.hpp"

namespace fs = std::filesystem;
using namespace octevo;

namespace {

Tensor bscan_scaled(const Cube& cube, int64_t slice, double scale,
                    double offset) {
  Tensor out = Tensor::raw({cube.hdr.depth, cube.hdr.width});
  Real* p = out.data();
  for (int64_t r = 0; r < cube.hdr.depth; ++r)
    for (int64_t c = 0; c < cube.hdr.width; ++c)
      *p++ = Real(double(cube.at(slice, r, c)) * scale + offset);
  return out;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void add_config(CLI::App* sub, std::string& path) {
  sub->add_option("--config", path,
                  "key=value file; unknown keys are ignored");
}

std::string trimmed(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

// Splices `--key=value` arguments from the named subcommand's --config file
// into the argument list, right after the subcommand name. Keys already on
// the command line and keys the subcommand does not define are skipped, so
// one file can drive several subcommands and explicit flags always win.
std::vector<std::string> expand_config(const CLI::App& app,
                                       std::vector<std::string> args) {
  const CLI::App* sub = nullptr;
  size_t sub_pos = 0;
  for (size_t i = 0; i < args.size() && !sub; ++i) {
    sub = app.get_subcommand_no_throw(args[i]);
    sub_pos = i;
  }
  if (!sub) return args;

  std::string path;
  for (size_t i = sub_pos + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;

  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::vector<std::string> extra;
  std::string line;
  while (std::getline(f, line)) {
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line without '=': " + line);
    const std::string key = trimmed(line.substr(0, eq));
    const std::string val = trimmed(line.substr(eq + 1));
    const std::string flag = "--" + key;
    if (key.empty() || !sub->get_option_no_throw(flag)) continue;
    bool given = false;
    for (size_t i = sub_pos + 1; i < args.size(); ++i)
      given |= args[i] == flag || args[i].rfind(flag + "=", 0) == 0;
    if (!given) extra.push_back(flag + "=" + val);
  }
  args.insert(args.begin() + long(sub_pos) + 1, extra.begin(), extra.end());
  return args;
}

void print_aggregate(const char* tag, const MetricAggregate& a) {
  std::printf("%-9s n=%-4d psnr %.3f dB  ssim %.4f  1-lpips %.4f\n", tag,
              a.count, a.mean_psnr, a.mean_ssim, a.mean_olp);
}

struct SynthArgs {
  SynthDatasetConfig cfg;
  std::string out;
};

struct PreprocArgs {
  std::string manifest, out;
  int ref_row = 600;
  int max_shift = 20;
};

struct SplitArgs {
  std::string manifest, scheme = "p0", out;
  int folds = 5;
  uint64_t seed = 0;
};

struct TrainArgs {
  std::string manifest, plan, out, warm_start;
  int size = 512;
  int toy_scale = 1;
  int heads = 5;
  int delta_s = 1;
  TrainConfig cfg;
  std::string disc = "both";
  bool no_gem = false, no_erm = false, no_recon = false, no_augment = false;
};

struct PredictArgs {
  std::string ckpt, cube, out;
};

struct EvalArgs {
  std::string pred, truth, out;
};

void run_synth(const SynthArgs& a) {
  const auto rows = generate_synth_dataset(a.cfg, a.out);
  std::printf("wrote %zu cubes and %s/manifest.txt\n", rows.size(),
              a.out.c_str());
}

void run_preproc(const PreprocArgs& a) {
  const auto rows = read_manifest(a.manifest);
  const auto out = preprocess_manifest(rows, a.out, a.ref_row, a.max_shift);
  std::printf("preprocessed %zu cubes into %s\n", out.size(), a.out.c_str());
}

void run_split(const SplitArgs& a) {
  const auto rows = read_manifest(a.manifest);
  const SplitPlan plan =
      make_split(patients_in(rows), parse_scheme(a.scheme), a.folds, a.seed);
  write_split_plan(plan, a.out);
  std::printf("%s plan with %zu folds -> %s\n", scheme_name(plan.scheme).c_str(),
              plan.folds.size(), a.out.c_str());
}

void run_train(const TrainArgs& a) {
  ArchConfig arch;
  arch.input_h = arch.input_w = a.size;
  arch.delta_s = a.delta_s;
  arch.toy_scale = a.toy_scale;
  arch.heads = a.heads;
  arch.use_gem = a.no_gem ? 0 : 1;

  TrainConfig cfg = a.cfg;
  cfg.use_erm = !a.no_erm;
  cfg.use_recon = !a.no_recon;
  cfg.augment = !a.no_augment;
  cfg.disc = parse_disc_mode(a.disc);

  const auto rows = read_manifest(a.manifest);
  const SplitPlan plan = read_split_plan(a.plan);
  const ExperimentResult res =
      run_experiment(rows, plan, arch, cfg, a.out, a.warm_start);

  for (size_t k = 0; k < res.folds.size(); ++k)
    print_aggregate(("fold " + std::to_string(k)).c_str(),
                    res.folds[k].model.report.aggregate_all());
  print_aggregate("all", res.combined.aggregate_all());
  std::printf("mean L1: model %.6f vs copy-forward %.6f\n", res.model_mean_l1,
              res.baseline_mean_l1);
  std::printf("artifacts under %s\n", a.out.c_str());
}

void run_predict(const PredictArgs& a) {
  const auto [arch, params] = load_checkpoint(a.ckpt);
  const Cube in = read_cube(a.cube);
  const Cube out = predict_cube(in, params, arch);
  write_cube(out, a.out);
  std::printf("predicted %lld B-scans -> %s.raw\n",
              (long long)out.hdr.slices, a.out.c_str());
}

void run_eval(const EvalArgs& a) {
  std::vector<std::string> names;
  for (const auto& ent : fs::directory_iterator(a.truth))
    if (ent.path().extension() == ".hdr")
      names.push_back(ent.path().stem().string());
  std::sort(names.begin(), names.end());
  if (names.empty()) throw IoError("no .hdr cubes under " + a.truth);

  MetricsReport report;
  double abs_sum = 0;
  int64_t n_vox = 0;
  for (const std::string& name : names) {
    const Cube truth = read_cube((fs::path(a.truth) / name).string());
    const std::string pstem = (fs::path(a.pred) / name).string();
    if (!fs::exists(pstem + ".hdr"))
      throw IoError("no prediction for cube " + name + " under " + a.pred);
    const Cube pred = read_cube(pstem);
    if (pred.hdr.depth != truth.hdr.depth ||
        pred.hdr.width != truth.hdr.width ||
        pred.hdr.slices != truth.hdr.slices)
      throw DimensionError("prediction " + name +
                           " does not match the truth cube shape");
    for (int64_t j = 0; j < truth.hdr.slices; ++j) {
      Tensor p01 = bscan_scaled(pred, j, 1.0 / 255.0, 0.0);
      Tensor t01 = bscan_scaled(truth, j, 1.0 / 255.0, 0.0);
      BScanMetrics row;
      row.patient_id = truth.hdr.patient_id;
      row.time_index = truth.hdr.time_index;
      row.slice = int(j) + 1;
      row.psnr_db = psnr(p01, t01, 1.0);
      row.ssim = ssim(p01, t01, 1.0);
      row.one_minus_lpips =
          1.0 - perceptual_distance(bscan_scaled(pred, j, 1.0 / 127.5, -1.0),
                                    bscan_scaled(truth, j, 1.0 / 127.5, -1.0));
      report.add(std::move(row));
      for (int64_t i = 0; i < p01.numel(); ++i)
        abs_sum += std::fabs(double(p01.data()[i]) - double(t01.data()[i]));
      n_vox += p01.numel();
    }
  }

  fs::create_directories(a.out);
  {
    std::ofstream f(fs::path(a.out) / "per_bscan.csv");
    if (!f) throw IoError("cannot write per_bscan.csv under " + a.out);
    f << "patient,time_index,slice,psnr_db,ssim,one_minus_lpips\n";
    for (const BScanMetrics& r : report.per_bscan)
      f << r.patient_id << ',' << r.time_index << ',' << r.slice << ','
        << fmt6(r.psnr_db) << ',' << fmt6(r.ssim) << ','
        << fmt6(r.one_minus_lpips) << '\n';
  }
  const MetricAggregate agg = report.aggregate_all();
  {
    std::ofstream f(fs::path(a.out) / "summary.csv");
    if (!f) throw IoError("cannot write summary.csv under " + a.out);
    f << "n_bscans,psnr_db,ssim,one_minus_lpips,mean_l1\n"
      << agg.count << ',' << fmt6(agg.mean_psnr) << ',' << fmt6(agg.mean_ssim)
      << ',' << fmt6(agg.mean_olp) << ','
      << fmt6(n_vox ? abs_sum / double(n_vox) : 0.0) << '\n';
  }
  print_aggregate("eval", agg);
  std::printf("tables under %s\n", a.out.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"longitudinal OCT preprocessing, training, and evaluation"};
  app.require_subcommand(1);

  std::string config_path;

  SynthArgs sy;
  CLI::App* synth = app.add_subcommand(
      "synth", "generate a synthetic longitudinal dataset");
  synth->add_option("--patients", sy.cfg.patients, "number of patients");
  synth->add_option("--timepoints", sy.cfg.timepoints, "visits per patient");
  synth->add_option("--size", sy.cfg.size, "B-scan width in pixels");
  synth->add_option("--slices", sy.cfg.slices,
                    "B-scans per cube (0 means size/4)");
  synth->add_option("--seed", sy.cfg.seed, "master seed");
  synth->add_option("--speckle", sy.cfg.speckle_sigma,
                    "multiplicative noise sigma");
  synth->add_option("--jitter", sy.cfg.max_jitter_cols,
                    "max per-visit lateral shift, columns");
  synth->add_option("--out", sy.out, "output directory")->required();
  add_config(synth, config_path);
  synth->callback([&] { run_synth(sy); });

  PreprocArgs pp;
  CLI::App* prep = app.add_subcommand(
      "preprocess", "flatten, crop, and co-register manifest cubes");
  prep->add_option("--manifest", pp.manifest, "input manifest")->required();
  prep->add_option("--out", pp.out, "output directory")->required();
  prep->add_option("--ref-row", pp.ref_row, "flattening reference row");
  prep->add_option("--max-shift", pp.max_shift,
                   "registration search radius, pixels");
  add_config(prep, config_path);
  prep->callback([&] { run_preproc(pp); });

  SplitArgs sp;
  CLI::App* split =
      app.add_subcommand("split", "write a train/test protocol plan");
  split->add_option("--manifest", sp.manifest, "input manifest")->required();
  split->add_option("--scheme", sp.scheme, "p0 | p1 | pm");
  split->add_option("--folds", sp.folds, "number of folds");
  split->add_option("--seed", sp.seed, "shuffle seed");
  split->add_option("--out", sp.out, "plan file")->required();
  add_config(split, config_path);
  split->callback([&] { run_split(sp); });

  TrainArgs tr;
  CLI::App* train = app.add_subcommand(
      "train", "run a split plan end to end and write reports");
  train->add_option("--manifest", tr.manifest, "preprocessed manifest")
      ->required();
  train->add_option("--plan", tr.plan, "split plan file")->required();
  train->add_option("--out", tr.out, "artifact directory")->required();
  train->add_option("--warm-start", tr.warm_start,
                    "directory with per-fold checkpoints (p1 scheme)");
  train->add_option("--size", tr.size, "B-scan height/width");
  train->add_option("--toy-scale", tr.toy_scale, "channel-width divisor");
  train->add_option("--heads", tr.heads, "attention heads");
  train->add_option("--delta-s", tr.delta_s, "input stack half-width");
  train->add_option("--lr", tr.cfg.lr, "learning rate");
  train->add_option("--weight-decay", tr.cfg.weight_decay,
                    "decoupled weight decay");
  train->add_option("--batch", tr.cfg.batch, "batch size");
  train->add_option("--epochs", tr.cfg.epochs, "training epochs");
  train->add_option("--finetune-epochs", tr.cfg.finetune_epochs,
                    "p1 fine-tuning epochs");
  train->add_option("--seed", tr.cfg.seed, "training seed");
  train->add_option("--lambda", tr.cfg.weights.lambda, "L1 weight");
  train->add_option("--mu", tr.cfg.weights.mu, "latent regularizer weight");
  train->add_option("--tau", tr.cfg.weights.tau, "contrastive temperature");
  train->add_flag("--no-gem", tr.no_gem, "bypass the latent evolution module");
  train->add_flag("--no-erm", tr.no_erm, "drop the contrastive term");
  train->add_flag("--no-recon", tr.no_recon,
                  "positives from a second prediction-path pass");
  train->add_flag("--no-augment", tr.no_augment, "disable augmentation");
  train->add_option("--disc", tr.disc, "discriminators: q | p | both");
  add_config(train, config_path);
  train->callback([&] { run_train(tr); });

  PredictArgs pd;
  CLI::App* predict = app.add_subcommand(
      "predict", "decode the next visit for every B-scan of a cube");
  predict->add_option("--ckpt", pd.ckpt, "model checkpoint")->required();
  predict->add_option("--cube", pd.cube, "input cube stem")->required();
  predict->add_option("--out", pd.out, "output cube stem")->required();
  add_config(predict, config_path);
  predict->callback([&] { run_predict(pd); });

  EvalArgs ev;
  CLI::App* eval = app.add_subcommand(
      "eval", "compare predicted cubes against ground truth");
  eval->add_option("--pred", ev.pred, "directory of predicted cubes")
      ->required();
  eval->add_option("--truth", ev.truth, "directory of truth cubes")
      ->required();
  eval->add_option("--out", ev.out, "report directory")->required();
  add_config(eval, config_path);
  eval->callback([&] { run_eval(ev); });

  try {
    std::vector<std::string> args =
        expand_config(app, {argv + 1, argv + argc});
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
