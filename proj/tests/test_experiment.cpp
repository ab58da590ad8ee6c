#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "octevo/data.hpp"
#include "octevo/errors.hpp"
#include "octevo/experiment.hpp"
#include "octevo/metrics.hpp"
#include "octevo/model.hpp"
#include "octevo/rng.hpp"
#include "octevo/train.hpp"

using namespace octevo;
namespace fs = std::filesystem;

namespace {

ArchConfig micro_arch() {
  ArchConfig a;
  a.input_h = a.input_w = 32;
  a.toy_scale = 64;
  return a;
}

TrainConfig micro_cfg() {
  TrainConfig c;
  c.seed = 7;
  c.augment = false;
  c.epochs = 2;
  c.finetune_epochs = 1;
  return c;
}

SynthPatient micro_patient(const std::string& pid, int slices) {
  SynthPatient sp;
  sp.patient_id = pid;
  sp.response = 0.6;
  sp.bm_row = 40;
  sp.wave_amp = 2;
  sp.wave_phase = 0.7;
  sp.isos_offset = 10;
  sp.lesion_z = 34;
  sp.lesion_x = 16;
  sp.lesion_rz = 4;
  sp.lesion_rx = 5;
  sp.lesion_s = slices == 2 ? 0.5 : 1.5;
  sp.lesion_rs = slices == 2 ? 0.45 : 1.0;
  sp.speckle_sigma = 0.05;
  sp.max_jitter_cols = 0;
  return sp;
}

Cube micro_cube(const std::string& pid, int t, int slices, uint64_t seed) {
  Cube c;
  c.hdr.depth = 32;
  c.hdr.width = 32;
  c.hdr.slices = slices;
  c.hdr.mm_depth = 2.0;
  c.hdr.mm_width = 6.0;
  c.hdr.mm_slices = 6.0;
  c.hdr.patient_id = pid;
  c.hdr.time_index = t;
  c.voxels.resize(size_t(32 * 32 * slices));
  Rng r(seed);
  for (auto& v : c.voxels) v = uint8_t(r.uniform_int(256));
  return c;
}

// writes an already-preprocessed series plus flat window surfaces and
// returns the manifest rows
std::vector<ManifestEntry> write_series(const std::string& dir,
                                        const std::string& pid,
                                        const std::vector<Cube>& cubes) {
  std::vector<ManifestEntry> rows;
  for (size_t i = 0; i < cubes.size(); ++i) {
    const Cube& c = cubes[i];
    SurfaceSet win;
    win.slices = c.hdr.slices;
    win.width = c.hdr.width;
    win.bm.assign(size_t(win.slices * win.width), 24);
    win.isos.assign(size_t(win.slices * win.width), 14);
    const std::string stem =
        (fs::path(dir) / (pid + "_t" + std::to_string(i + 1))).string();
    write_cube(c, stem);
    write_surfaces(win, stem);
    rows.push_back({pid, int(i) + 1, stem, stem + ".bm.csv",
                    stem + ".isos.csv"});
  }
  return rows;
}

std::vector<ManifestEntry> micro_dataset(const std::string& dir,
                                         const std::vector<std::string>& pids,
                                         int timepoints) {
  fs::create_directories(dir);
  std::vector<ManifestEntry> rows;
  uint64_t seed = 300;
  for (const std::string& pid : pids) {
    SynthSeries ser =
        synth_series(micro_patient(pid, 2), timepoints, 32, seed++, 2);
    std::vector<Cube> proc;
    for (int t = 0; t < timepoints; ++t)
      proc.push_back(preprocess_cube(ser.cubes[size_t(t)],
                                     ser.surfaces[size_t(t)], 40));
    auto r = write_series(dir, pid, proc);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return {std::istreambuf_iterator<char>(f), {}};
}

int line_count(const std::string& path) {
  std::ifstream f(path);
  REQUIRE(bool(f));
  int n = 0;
  std::string line;
  while (std::getline(f, line)) ++n;
  return n;
}

uint32_t be32(const std::string& bytes, size_t off) {
  return (uint32_t(uint8_t(bytes[off])) << 24) |
         (uint32_t(uint8_t(bytes[off + 1])) << 16) |
         (uint32_t(uint8_t(bytes[off + 2])) << 8) |
         uint32_t(uint8_t(bytes[off + 3]));
}

}  // namespace

TEST_CASE("predict_cube slides over every slice") {
  const ArchConfig arch = micro_arch();
  const ModelParams mp = init_model_params(arch, 5);
  const Cube in = micro_cube("p", 3, 3, 77);

  const Cube out = predict_cube(in, mp, arch);
  CHECK(out.hdr.depth == in.hdr.depth);
  CHECK(out.hdr.width == in.hdr.width);
  CHECK(out.hdr.slices == in.hdr.slices);
  CHECK(out.hdr.patient_id == "p");
  CHECK(out.hdr.time_index == 4);

  const Cube again = predict_cube(in, mp, arch);
  CHECK(out.voxels == again.voxels);

  // a fully zero-padded stack still decodes to something
  CHECK(out.voxels != in.voxels);

  Cube bad = in;
  bad.hdr.width = 16;
  bad.voxels.resize(size_t(32 * 16 * 3));
  CHECK_THROWS_AS(predict_cube(bad, mp, arch), DimensionError);
}

TEST_CASE("identity evaluation of a static pair is perfect") {
  Cube a = micro_cube("p", 1, 2, 9);
  Cube b = a;
  b.hdr.time_index = 2;
  const SeriesPair pr = make_series_pair(a, b);

  const EvalResult res = evaluate_identity({pr});
  REQUIRE(res.report.per_bscan.size() == 2);
  CHECK(res.mean_l1 == 0.0);
  for (const BScanMetrics& r : res.report.per_bscan) {
    CHECK(r.psnr_db == kPsnrSentinel);
    CHECK(r.ssim == doctest::Approx(1.0));
    CHECK(r.one_minus_lpips == doctest::Approx(1.0));
    CHECK(r.time_index == 2);
  }
}

TEST_CASE("series preprocessing undoes a lateral acquisition shift") {
  SynthSeries ser = synth_series(micro_patient("q", 4), 2, 32, 901, 4);
  const Cube& base = ser.cubes[0];
  const SurfaceSet& surf = ser.surfaces[0];
  const int dx = 3;

  // second visit: the same anatomy scanned 3 columns to the right
  Cube moved = apply_transform_cube(base, {dx, 0, 0.0});
  moved.hdr.time_index = 2;
  SurfaceSet msurf = surf;
  for (int64_t s = 0; s < surf.slices; ++s)
    for (int64_t c = 0; c < surf.width; ++c) {
      const int64_t sc = std::max<int64_t>(0, c - dx);
      msurf.bm[size_t(s * surf.width + c)] = surf.bm_at(s, sc);
      msurf.isos[size_t(s * surf.width + c)] = surf.isos_at(s, sc);
    }

  const ProcessedSeries ps =
      preprocess_series({base, moved}, {surf, msurf}, 40, 5);
  REQUIRE(ps.cubes.size() == 2);
  const Cube& p0 = ps.cubes[0];
  const Cube& p1 = ps.cubes[1];
  REQUIRE(p0.hdr.depth == 32);

  // the first visit is the untouched flatten+crop result
  const Cube direct = preprocess_cube(base, surf, 40);
  CHECK(p0.voxels == direct.voxels);

  // columns that stayed inside the scan must realign exactly
  int64_t mismatches = 0;
  for (int64_t s = 0; s < p0.hdr.slices; ++s)
    for (int64_t r = 0; r < p0.hdr.depth; ++r)
      for (int64_t c = 0; c < p0.hdr.width - dx; ++c)
        mismatches += p1.at(s, r, c) != p0.at(s, r, c);
  CHECK(mismatches == 0);

  // surfaces moved with the voxels: constant lower boundary, matching upper
  for (int64_t i = 0; i < ps.surfaces[1].slices * ps.surfaces[1].width; ++i)
    CHECK(ps.surfaces[1].bm[size_t(i)] == 24);
  int64_t surf_mism = 0;
  for (int64_t s = 0; s < surf.slices; ++s)
    for (int64_t c = 0; c < surf.width - dx - 1; ++c)
      surf_mism += ps.surfaces[1].isos_at(s, c) != ps.surfaces[0].isos_at(s, c);
  CHECK(surf_mism == 0);
}

TEST_CASE("manifest preprocessing round trip") {
  fs::remove_all("tmp_exp_pre");
  SynthDatasetConfig cfg;
  cfg.patients = 2;
  cfg.timepoints = 2;
  cfg.size = 32;
  cfg.slices = 16;
  cfg.seed = 11;
  const auto raw_rows = generate_synth_dataset(cfg, "tmp_exp_pre/raw");

  const auto rows = preprocess_manifest(raw_rows, "tmp_exp_pre/proc", 40);
  CHECK(rows.size() == raw_rows.size());
  CHECK(rows == read_manifest("tmp_exp_pre/proc/manifest.txt"));

  for (const ManifestEntry& row : rows) {
    const Cube c = read_cube(row.cube_path);
    CHECK(c.hdr.depth == 32);  // 0.75 mm + 0.25 mm at 32 rows/mm
    CHECK(c.hdr.width == 32);
    CHECK(c.hdr.slices == 16);
    CHECK(c.hdr.patient_id == row.patient_id);
    CHECK(c.hdr.time_index == row.time_index);
    const SurfaceSet s = read_surface_pair(row.bm_path, row.isos_path);
    s.validate(c.hdr.depth);
    for (int v : s.bm) CHECK(v == 24);
  }
  fs::remove_all("tmp_exp_pre");
}

TEST_CASE("last-visit holdout experiment end to end") {
  fs::remove_all("tmp_exp_pm");
  const auto rows =
      micro_dataset("tmp_exp_pm/data", {"e01", "e02", "e03"}, 4);
  const auto pats = patients_in(rows);
  const SplitPlan plan = make_split(pats, SplitScheme::PM, 1, 0);
  const ArchConfig arch = micro_arch();
  const TrainConfig cfg = micro_cfg();

  const ExperimentResult res =
      run_experiment(rows, plan, arch, cfg, "tmp_exp_pm/run_a");
  REQUIRE(res.folds.size() == 1);
  CHECK(res.scheme == SplitScheme::PM);
  // 3 patients x 1 final pair x 2 slices
  REQUIRE(res.combined.per_bscan.size() == 6);
  for (const BScanMetrics& r : res.combined.per_bscan) {
    CHECK(r.time_index == 4);
    CHECK(std::isfinite(r.psnr_db));
    CHECK(r.psnr_db > 0);
    CHECK(r.ssim >= -1.0);
    CHECK(r.ssim <= 1.0);
    CHECK(r.one_minus_lpips <= 1.0);
  }
  CHECK(res.folds[0].checksum != 0);
  CHECK(res.model_mean_l1 > 0);
  CHECK(res.baseline_mean_l1 > 0);

  // artifacts: model, loss log, comparison grid, tables, checksums
  CHECK(fs::exists("tmp_exp_pm/run_a/fold_0.ckpt"));
  // 3 train pairs x 2 slices / batch 2 = 3 steps per epoch, 2 epochs
  CHECK(line_count("tmp_exp_pm/run_a/fold_0_train_log.csv") == 7);
  CHECK(line_count("tmp_exp_pm/run_a/summary.csv") == 4);
  CHECK(line_count("tmp_exp_pm/run_a/per_bscan.csv") == 13);
  CHECK(line_count("tmp_exp_pm/run_a/checksums.txt") == 1);

  const std::string png = slurp("tmp_exp_pm/run_a/fold_0_grid.png");
  REQUIRE(png.size() > 33);
  CHECK(uint8_t(png[0]) == 137);
  CHECK(png.substr(1, 3) == "PNG");
  CHECK(be32(png, 16) == 3 * 32 + 2 * 2);  // input | prediction | truth
  CHECK(be32(png, 20) == 32);

  const std::string head = slurp("tmp_exp_pm/run_a/summary.csv");
  CHECK(head.rfind("scheme,fold,psnr_db,ssim,one_minus_lpips\npm,0,", 0) == 0);
  CHECK(head.find("\npm,all,") != std::string::npos);
  CHECK(head.find("\nidentity,all,") != std::string::npos);

  // bit-for-bit reproducible
  const ExperimentResult re =
      run_experiment(rows, plan, arch, cfg, "tmp_exp_pm/run_b");
  CHECK(re.folds[0].checksum == res.folds[0].checksum);
  CHECK(slurp("tmp_exp_pm/run_b/summary.csv") ==
        slurp("tmp_exp_pm/run_a/summary.csv"));
  CHECK(slurp("tmp_exp_pm/run_b/fold_0.ckpt") ==
        slurp("tmp_exp_pm/run_a/fold_0.ckpt"));
  fs::remove_all("tmp_exp_pm");
}

TEST_CASE("fine-tuning protocol warm starts from the cold-start run") {
  fs::remove_all("tmp_exp_p1");
  const auto rows =
      micro_dataset("tmp_exp_p1/data", {"f01", "f02", "f03"}, 4);
  const auto pats = patients_in(rows);
  const ArchConfig arch = micro_arch();
  TrainConfig cfg = micro_cfg();
  cfg.epochs = 1;

  const SplitPlan plan1 = make_split(pats, SplitScheme::P1, 3, 1);
  CHECK_THROWS_AS(
      run_experiment(rows, plan1, arch, cfg, "tmp_exp_p1/no_warm"),
      ProtocolError);
  CHECK_THROWS_AS(run_experiment(rows, plan1, arch, cfg, "tmp_exp_p1/bad",
                                 "tmp_exp_p1/nonexistent"),
                  ProtocolError);

  const SplitPlan plan0 = make_split(pats, SplitScheme::P0, 3, 1);
  for (int k = 0; k < 3; ++k)  // same seed => same patient assignment
    REQUIRE(plan0.folds[size_t(k)].test_patients ==
            plan1.folds[size_t(k)].test_patients);
  const ExperimentResult res0 =
      run_experiment(rows, plan0, arch, cfg, "tmp_exp_p1/p0");
  REQUIRE(res0.folds.size() == 3);
  // every patient's 3 pairs evaluated once across the folds
  CHECK(res0.combined.per_bscan.size() == 18);

  // a checkpoint from a different architecture is rejected
  fs::create_directories("tmp_exp_p1/badwarm");
  ArchConfig other = arch;
  other.delta_s = 2;
  save_checkpoint("tmp_exp_p1/badwarm/fold_0.ckpt", other,
                  init_model_params(other, 1));
  CHECK_THROWS_AS(run_experiment(rows, plan1, arch, cfg, "tmp_exp_p1/bad2",
                                 "tmp_exp_p1/badwarm"),
                  ProtocolError);

  const ExperimentResult res1 = run_experiment(
      rows, plan1, arch, cfg, "tmp_exp_p1/p1", "tmp_exp_p1/p0");
  REQUIRE(res1.folds.size() == 3);
  REQUIRE(res1.combined.per_bscan.size() == 6);
  for (const BScanMetrics& r : res1.combined.per_bscan)
    CHECK(r.time_index == 3);  // test pair is always (2 -> 3)
  for (int k = 0; k < 3; ++k)  // fine-tuning moved the weights
    CHECK(res1.folds[size_t(k)].checksum != res0.folds[size_t(k)].checksum);
  fs::remove_all("tmp_exp_p1");
}

TEST_CASE("hash audit catches cross-id content duplication") {
  fs::remove_all("tmp_exp_leak");
  fs::create_directories("tmp_exp_leak/data");
  // g03 is a byte copy of g01 under a different id: the patient-level
  // split cannot see that, the content audit must
  std::vector<ManifestEntry> rows;
  for (const char* pid : {"g01", "g02", "g03"}) {
    const uint64_t seed = std::string(pid) == "g03" ? 300 : 300 + (pid[2] - '1');
    SynthSeries ser = synth_series(micro_patient(pid, 2), 4, 32, seed, 2);
    std::vector<Cube> proc;
    for (int t = 0; t < 4; ++t) {
      Cube c = preprocess_cube(ser.cubes[size_t(t)], ser.surfaces[size_t(t)], 40);
      c.hdr.patient_id = pid;
      proc.push_back(std::move(c));
    }
    auto r = write_series("tmp_exp_leak/data", pid, proc);
    rows.insert(rows.end(), r.begin(), r.end());
  }

  SplitPlan plan;
  plan.scheme = SplitScheme::P0;
  FoldPlan f0;
  f0.test_patients = {"g01"};
  for (int t = 1; t <= 3; ++t) {
    f0.train.push_back({"g02", t});
    f0.train.push_back({"g03", t});
    f0.test.push_back({"g01", t});
  }
  FoldPlan f1;
  f1.test_patients = {"g02", "g03"};
  for (int t = 1; t <= 3; ++t) {
    f1.train.push_back({"g01", t});
    f1.test.push_back({"g02", t});
    f1.test.push_back({"g03", t});
  }
  plan.folds = {f0, f1};
  plan.validate(patients_in(rows));  // structurally sound...

  TrainConfig cfg = micro_cfg();
  cfg.epochs = 1;
  CHECK_THROWS_WITH_AS(
      run_experiment(rows, plan, micro_arch(), cfg, "tmp_exp_leak/run"),
      doctest::Contains("held-out B-scan"), ProtocolError);
  fs::remove_all("tmp_exp_leak");
}
