#include "octevo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "octevo/errors.hpp"
#include "octevo/png.hpp"
#include "octevo/rng.hpp"

namespace fs = std::filesystem;

namespace octevo {
namespace {

// Surfaces expressed in the flatten+crop window: the lower boundary sits at
// a constant row, the upper one keeps its per-column distance to it.
SurfaceSet window_surfaces(const SurfaceSet& s, const CropGeometry& geo) {
  SurfaceSet out;
  out.slices = s.slices;
  out.width = s.width;
  out.bm.assign(size_t(s.slices * s.width), geo.rows_above);
  out.isos.resize(size_t(s.slices * s.width));
  for (int64_t i = 0; i < s.slices * s.width; ++i) {
    const int gap = s.bm[size_t(i)] - s.isos[size_t(i)];
    out.isos[size_t(i)] = std::clamp(geo.rows_above - gap, 0, geo.rows_above);
  }
  return out;
}

// same convention as the cube warp: out(s, c) = in(s - dz, c - dx)
SurfaceSet shift_surfaces(const SurfaceSet& s, int dz, int dx) {
  SurfaceSet out = s;
  for (int64_t z = 0; z < s.slices; ++z)
    for (int64_t c = 0; c < s.width; ++c) {
      const int64_t sz = std::clamp<int64_t>(z - dz, 0, s.slices - 1);
      const int64_t sc = std::clamp<int64_t>(c - dx, 0, s.width - 1);
      out.bm[size_t(z * s.width + c)] = s.bm_at(sz, sc);
      out.isos[size_t(z * s.width + c)] = s.isos_at(sz, sc);
    }
  return out;
}

Tensor bscan_scaled(const Cube& cube, int64_t slice, double scale,
                    double offset) {
  Tensor out = Tensor::raw({cube.hdr.depth, cube.hdr.width});
  Real* p = out.data();
  for (int64_t r = 0; r < cube.hdr.depth; ++r)
    for (int64_t c = 0; c < cube.hdr.width; ++c)
      *p++ = Real(double(cube.at(slice, r, c)) * scale + offset);
  return out;
}

uint8_t unit_to_u8(double v) {
  return uint8_t(std::clamp<long>(std::lround((v + 1.0) * 127.5), 0, 255));
}

std::vector<uint8_t> image_to_u8(const Tensor& img) {
  std::vector<uint8_t> out(size_t(img.numel()));
  for (int64_t i = 0; i < img.numel(); ++i)
    out[size_t(i)] = unit_to_u8(double(img.data()[i]));
  return out;
}

std::vector<uint8_t> bscan_u8(const Cube& cube, int64_t slice) {
  std::vector<uint8_t> out(size_t(cube.hdr.depth * cube.hdr.width));
  for (int64_t r = 0; r < cube.hdr.depth; ++r)
    for (int64_t c = 0; c < cube.hdr.width; ++c)
      out[size_t(r * cube.hdr.width + c)] = cube.at(slice, r, c);
  return out;
}

template <class PredictFn>
EvalResult evaluate_with(const std::vector<SeriesPair>& pairs,
                         PredictFn&& predict) {
  EvalResult res;
  double abs_sum = 0;
  int64_t n_vox = 0;
  for (const SeriesPair& pr : pairs) {
    const Cube pred = predict(pr);
    check_dim(pred.hdr.depth == pr.x_t2.hdr.depth &&
                  pred.hdr.width == pr.x_t2.hdr.width &&
                  pred.hdr.slices == pr.x_t2.hdr.slices,
              "evaluate: prediction shape differs from the target cube");
    for (int64_t j = 0; j < pred.hdr.slices; ++j) {
      Tensor p01 = bscan_scaled(pred, j, 1.0 / 255.0, 0.0);
      Tensor t01 = bscan_scaled(pr.x_t2, j, 1.0 / 255.0, 0.0);
      Tensor p11 = bscan_scaled(pred, j, 1.0 / 127.5, -1.0);
      Tensor t11 = bscan_scaled(pr.x_t2, j, 1.0 / 127.5, -1.0);
      BScanMetrics row;
      row.patient_id = pr.patient_id;
      row.time_index = pr.t1_index + 1;
      row.slice = int(j) + 1;
      row.psnr_db = psnr(p01, t01, 1.0);
      row.ssim = ssim(p01, t01, 1.0);
      row.one_minus_lpips = 1.0 - perceptual_distance(p11, t11);
      res.report.add(std::move(row));
      for (int64_t i = 0; i < p01.numel(); ++i)
        abs_sum += std::fabs(double(p01.data()[i]) - double(t01.data()[i]));
      n_vox += p01.numel();
    }
  }
  res.mean_l1 = n_vox ? abs_sum / double(n_vox) : 0.0;
  return res;
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fold_stem(const std::string& dir, int fold) {
  return (fs::path(dir) / ("fold_" + std::to_string(fold))).string();
}

}  // namespace

ProcessedSeries preprocess_series(const std::vector<Cube>& cubes,
                                  const std::vector<SurfaceSet>& surfaces,
                                  int ref_row, int max_shift) {
  check_arg(!cubes.empty(), "preprocess: empty series");
  check_dim(cubes.size() == surfaces.size(),
            "preprocess: cube/surface count mismatch");
  ProcessedSeries out;
  for (size_t t = 0; t < cubes.size(); ++t) {
    out.cubes.push_back(preprocess_cube(cubes[t], surfaces[t], ref_row));
    out.surfaces.push_back(
        window_surfaces(surfaces[t], crop_geometry(cubes[t].hdr)));
  }
  if (cubes.size() == 1) return out;

  const Tensor fixed = project_fundus(out.cubes[0], out.surfaces[0]);
  for (size_t t = 1; t < cubes.size(); ++t) {
    const Tensor moving = project_fundus(out.cubes[t], out.surfaces[t]);
    const RigidTransform2D tr = register_fundus(moving, fixed, max_shift);
    if (tr.dx == 0 && tr.dz == 0) continue;
    out.cubes[t] = apply_transform_cube(out.cubes[t], tr);
    out.surfaces[t] = shift_surfaces(out.surfaces[t], tr.dz, tr.dx);
  }
  return out;
}

std::vector<ManifestEntry> preprocess_manifest(
    const std::vector<ManifestEntry>& rows, const std::string& out_dir,
    int ref_row, int max_shift) {
  const auto pats = patients_in(rows);
  fs::create_directories(out_dir);
  std::vector<ManifestEntry> out_rows;
  for (const PatientInfo& p : pats) {
    std::vector<Cube> cubes;
    std::vector<SurfaceSet> surfs;
    for (int t = 1; t <= p.n_timepoints; ++t) {
      const ManifestEntry& row = find_entry(rows, p.id, t);
      cubes.push_back(read_cube(row.cube_path));
      surfs.push_back(read_surface_pair(row.bm_path, row.isos_path));
    }
    ProcessedSeries ps = preprocess_series(cubes, surfs, ref_row, max_shift);
    for (int t = 1; t <= p.n_timepoints; ++t) {
      const std::string stem =
          (fs::path(out_dir) / (p.id + "_t" + std::to_string(t))).string();
      write_cube(ps.cubes[size_t(t - 1)], stem);
      write_surfaces(ps.surfaces[size_t(t - 1)], stem);
      out_rows.push_back(
          {p.id, t, stem, stem + ".bm.csv", stem + ".isos.csv"});
    }
  }
  write_manifest(out_rows, (fs::path(out_dir) / "manifest.txt").string());
  return out_rows;
}

Cube predict_cube(const Cube& cube_t1, const ModelParams& mp,
                  const ArchConfig& arch) {
  cube_t1.validate();
  check_dim(cube_t1.hdr.depth == arch.input_h &&
                cube_t1.hdr.width == arch.input_w,
            "predict: cube does not match the model input size");
  Cube out = cube_t1;
  out.hdr.time_index = cube_t1.hdr.time_index + 1;
  NoGradGuard guard;
  for (int j = 1; j <= int(cube_t1.hdr.slices); ++j) {
    const Tensor stack = make_input_stack(cube_t1, j, arch.delta_s);
    const PredictOut po =
        generator_predict(stack, mp, arch, arch.use_gem != 0);
    const Real* v = po.image.data();
    for (int64_t r = 0; r < out.hdr.depth; ++r)
      for (int64_t c = 0; c < out.hdr.width; ++c)
        out.at(j - 1, r, c) = unit_to_u8(double(v[r * out.hdr.width + c]));
  }
  return out;
}

EvalResult evaluate_model(const std::vector<SeriesPair>& pairs,
                          const ModelParams& mp, const ArchConfig& arch) {
  return evaluate_with(
      pairs, [&](const SeriesPair& pr) { return predict_cube(pr.x_t1, mp, arch); });
}

EvalResult evaluate_identity(const std::vector<SeriesPair>& pairs) {
  return evaluate_with(pairs, [](const SeriesPair& pr) {
    Cube c = pr.x_t1;
    c.hdr.time_index = pr.x_t1.hdr.time_index + 1;
    return c;
  });
}

ExperimentResult run_experiment(const std::vector<ManifestEntry>& rows,
                                const SplitPlan& plan, const ArchConfig& arch,
                                const TrainConfig& cfg,
                                const std::string& out_dir,
                                const std::string& warm_start_dir) {
  const auto pats = patients_in(rows);
  plan.validate(pats);
  arch.validate();
  cfg.validate();
  fs::create_directories(out_dir);

  std::map<std::pair<std::string, int>, Cube> cache;
  auto cube_of = [&](const std::string& pid, int t) -> const Cube& {
    auto it = cache.find({pid, t});
    if (it == cache.end())
      it = cache.emplace(std::make_pair(pid, t),
                         read_cube(find_entry(rows, pid, t).cube_path))
               .first;
    return it->second;
  };
  auto pairs_of = [&](const std::vector<PairRef>& refs) {
    std::vector<SeriesPair> out;
    out.reserve(refs.size());
    for (const PairRef& r : refs)
      out.push_back(make_series_pair(cube_of(r.patient_id, r.t1_index),
                                     cube_of(r.patient_id, r.t1_index + 1)));
    return out;
  };
  auto add_cube_hashes = [&](const std::string& pid, int t,
                             std::set<uint64_t>& dst) {
    const Cube& c = cube_of(pid, t);
    for (int j = 0; j < int(c.hdr.slices); ++j) dst.insert(bscan_hash(c, j));
  };
  auto timepoints_of = [&](const std::string& pid) {
    for (const PatientInfo& p : pats)
      if (p.id == pid) return p.n_timepoints;
    throw ProtocolError("plan names unknown patient " + pid);
  };

  ExperimentResult res;
  res.scheme = plan.scheme;
  MetricsReport combined_baseline;
  double model_abs = 0, base_abs = 0, n_scans = 0;

  for (int k = 0; k < int(plan.folds.size()); ++k) {
    const FoldPlan& fold = plan.folds[size_t(k)];

    // B-scans that must never enter a training batch for this fold
    std::set<uint64_t> forbidden;
    switch (plan.scheme) {
      case SplitScheme::P0:
        for (const std::string& pid : fold.test_patients)
          for (int t = 1; t <= timepoints_of(pid); ++t)
            add_cube_hashes(pid, t, forbidden);
        break;
      case SplitScheme::P1:
        // fine-tuning sees the patient's early visits; only the test
        // target cube stays off limits
        for (const PairRef& r : fold.test)
          add_cube_hashes(r.patient_id, r.t1_index + 1, forbidden);
        break;
      case SplitScheme::PM:
        for (const PatientInfo& p : pats) {
          add_cube_hashes(p.id, p.n_timepoints - 1, forbidden);
          add_cube_hashes(p.id, p.n_timepoints, forbidden);
        }
        break;
    }

    TrainState st;
    std::vector<SeriesPair> fit_pairs;
    int epochs = 0;
    if (plan.scheme == SplitScheme::P1) {
      if (warm_start_dir.empty())
        throw ProtocolError(
            "scheme p1 fine-tunes a pretrained model: pass the directory "
            "holding per-fold checkpoints");
      const std::string wpath = fold_stem(warm_start_dir, k) + ".ckpt";
      if (!fs::exists(wpath))
        throw ProtocolError("missing warm-start checkpoint " + wpath);
      auto [warch, wparams] = load_checkpoint(wpath);
      if (warch.serialize() != arch.serialize())
        throw ProtocolError("warm-start checkpoint " + wpath +
                            " was trained with a different architecture");
      st.arch = arch;
      st.cfg = cfg;
      st.params = std::move(wparams);
      fit_pairs = pairs_of(fold.finetune);
      epochs = cfg.finetune_epochs;
    } else {
      st = make_train_state(arch, cfg, mix_seed(cfg.seed, 0xF01Dull, k));
      fit_pairs = pairs_of(fold.train);
      epochs = cfg.epochs;
    }

    std::set<uint64_t> seen;
    TrainRunOpts opts;
    opts.epochs = epochs;
    opts.csv_path = fold_stem(out_dir, k) + "_train_log.csv";
    opts.ckpt_path = fold_stem(out_dir, k) + ".ckpt";
    opts.sample_hashes = &seen;
    run_training(st, fit_pairs, opts);
    save_checkpoint(opts.ckpt_path, st.arch, st.params);

    for (uint64_t h : seen)
      if (forbidden.count(h))
        throw ProtocolError("scheme " + scheme_name(plan.scheme) + " fold " +
                            std::to_string(k) +
                            ": a held-out B-scan entered a training batch");

    const std::vector<SeriesPair> test_pairs = pairs_of(fold.test);
    FoldOutcome fo;
    fo.model = evaluate_model(test_pairs, st.params, st.arch);
    fo.baseline = evaluate_identity(test_pairs);
    fo.checksum = params_checksum(st.params);

    if (!test_pairs.empty()) {
      const SeriesPair& pr = test_pairs.front();
      const int c = int((pr.x_t1.hdr.slices + 1) / 2);
      NoGradGuard guard;
      const PredictOut po =
          generator_predict(make_input_stack(pr.x_t1, c, st.arch.delta_s),
                            st.params, st.arch, st.arch.use_gem != 0);
      write_tile_strip_png(fold_stem(out_dir, k) + "_grid.png",
                           {bscan_u8(pr.x_t1, c - 1), image_to_u8(po.image),
                            bscan_u8(pr.x_t2, c - 1)},
                           int(pr.x_t1.hdr.depth), int(pr.x_t1.hdr.width));
    }

    const double scans = double(fo.model.report.per_bscan.size());
    model_abs += fo.model.mean_l1 * scans;
    base_abs += fo.baseline.mean_l1 * scans;
    n_scans += scans;
    for (const BScanMetrics& r : fo.model.report.per_bscan)
      res.combined.add(r);
    for (const BScanMetrics& r : fo.baseline.report.per_bscan)
      combined_baseline.add(r);
    res.folds.push_back(std::move(fo));
  }
  res.model_mean_l1 = n_scans ? model_abs / n_scans : 0.0;
  res.baseline_mean_l1 = n_scans ? base_abs / n_scans : 0.0;

  const std::string sname = scheme_name(plan.scheme);
  {
    std::ofstream f(fs::path(out_dir) / "summary.csv");
    if (!f) throw IoError("cannot write summary.csv under " + out_dir);
    f << "scheme,fold,psnr_db,ssim,one_minus_lpips\n";
    auto line = [&](const std::string& sch, const std::string& fold,
                    const MetricAggregate& a) {
      f << sch << ',' << fold << ',' << fmt6(a.mean_psnr) << ','
        << fmt6(a.mean_ssim) << ',' << fmt6(a.mean_olp) << '\n';
    };
    for (size_t k = 0; k < res.folds.size(); ++k)
      line(sname, std::to_string(k),
           res.folds[k].model.report.aggregate_all());
    line(sname, "all", res.combined.aggregate_all());
    line("identity", "all", combined_baseline.aggregate_all());
  }
  {
    std::ofstream f(fs::path(out_dir) / "per_bscan.csv");
    if (!f) throw IoError("cannot write per_bscan.csv under " + out_dir);
    f << "scheme,fold,patient,time_index,slice,psnr_db,ssim,one_minus_lpips\n";
    auto rows_of = [&](const std::string& sch, size_t k,
                       const MetricsReport& rep) {
      for (const BScanMetrics& r : rep.per_bscan)
        f << sch << ',' << k << ',' << r.patient_id << ',' << r.time_index
          << ',' << r.slice << ',' << fmt6(r.psnr_db) << ',' << fmt6(r.ssim)
          << ',' << fmt6(r.one_minus_lpips) << '\n';
    };
    for (size_t k = 0; k < res.folds.size(); ++k) {
      rows_of(sname, k, res.folds[k].model.report);
      rows_of("identity", k, res.folds[k].baseline.report);
    }
  }
  {
    std::ofstream f(fs::path(out_dir) / "checksums.txt");
    if (!f) throw IoError("cannot write checksums.txt under " + out_dir);
    for (size_t k = 0; k < res.folds.size(); ++k) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%016llx",
                    (unsigned long long)res.folds[k].checksum);
      f << "fold " << k << ' ' << buf << '\n';
    }
  }
  return res;
}

}  // namespace octevo
