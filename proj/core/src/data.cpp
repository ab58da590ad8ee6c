#include "octevo/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "octevo/errors.hpp"
#include "octevo/rng.hpp"

namespace octevo {

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path);
  std::vector<ManifestEntry> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string extra;
    if (!(ss >> e.patient_id >> e.time_index >> e.cube_path >> e.bm_path >>
          e.isos_path) ||
        (ss >> extra)) {
      throw IoError("malformed manifest line " + std::to_string(lineno) +
                    " in " + path);
    }
    rows.push_back(std::move(e));
  }
  return rows;
}

void write_manifest(const std::vector<ManifestEntry>& rows,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path);
  for (const auto& e : rows) {
    out << e.patient_id << ' ' << e.time_index << ' ' << e.cube_path << ' '
        << e.bm_path << ' ' << e.isos_path << '\n';
  }
}

std::vector<PatientInfo> patients_in(const std::vector<ManifestEntry>& rows) {
  std::map<std::string, std::vector<int>> times;
  for (const auto& e : rows) times[e.patient_id].push_back(e.time_index);
  std::vector<PatientInfo> out;
  for (auto& [id, ts] : times) {
    std::sort(ts.begin(), ts.end());
    for (size_t i = 0; i < ts.size(); ++i) {
      if (ts[i] != int(i) + 1)
        throw ProtocolError("patient " + id +
                            ": time indices are not contiguous from 1");
    }
    out.push_back({id, int(ts.size())});
  }
  return out;
}

const ManifestEntry& find_entry(const std::vector<ManifestEntry>& rows,
                                const std::string& patient_id,
                                int time_index) {
  for (const auto& e : rows)
    if (e.patient_id == patient_id && e.time_index == time_index) return e;
  throw ProtocolError("manifest has no cube for patient " + patient_id +
                      " t" + std::to_string(time_index));
}

// ---------------------------------------------------------------------------
// input assembly
// ---------------------------------------------------------------------------

namespace {

void fill_normalized(const Cube& cube, int j, Real* dst) {
  const int64_t n = cube.hdr.depth * cube.hdr.width;
  const uint8_t* src = cube.voxels.data() + (int64_t(j) - 1) * n;
  for (int64_t i = 0; i < n; ++i)
    dst[i] = Real(src[i]) / Real(127.5) - Real(1);
}

}  // namespace

Tensor normalized_bscan(const Cube& cube, int j) {
  check_arg(j >= 1 && j <= cube.hdr.slices,
            "B-scan index " + std::to_string(j) + " outside 1.." +
                std::to_string(cube.hdr.slices));
  Tensor out = Tensor::zeros({1, cube.hdr.depth, cube.hdr.width});
  fill_normalized(cube, j, out.values().data());
  return out;
}

Tensor make_input_stack(const Cube& cube, int j, int delta_s) {
  check_arg(delta_s >= 0, "delta_s must be >= 0");
  check_arg(j >= 1 && j <= cube.hdr.slices,
            "stack center " + std::to_string(j) + " outside 1.." +
                std::to_string(cube.hdr.slices));
  const int64_t h = cube.hdr.depth, w = cube.hdr.width;
  const int channels = 2 * delta_s + 1;
  Tensor out = Tensor::zeros({channels, h, w});
  for (int c = 0; c < channels; ++c) {
    const int sj = j - delta_s + c;
    if (sj < 1 || sj > cube.hdr.slices) continue;  // zero image
    fill_normalized(cube, sj, out.values().data() + int64_t(c) * h * w);
  }
  return out;
}

void SeriesPair::validate() const {
  check_dim(x_t1.hdr.depth == x_t2.hdr.depth &&
                x_t1.hdr.width == x_t2.hdr.width &&
                x_t1.hdr.slices == x_t2.hdr.slices,
            "series pair cubes differ in shape");
  check_arg(x_t1.hdr.patient_id == x_t2.hdr.patient_id &&
                x_t1.hdr.patient_id == patient_id,
            "series pair mixes patients");
  check_arg(x_t2.hdr.time_index == x_t1.hdr.time_index + 1 &&
                x_t1.hdr.time_index == t1_index,
            "series pair timepoints are not consecutive");
  x_t1.validate();
  x_t2.validate();
}

SeriesPair make_series_pair(Cube a, Cube b) {
  SeriesPair pr;
  pr.patient_id = a.hdr.patient_id;
  pr.t1_index = a.hdr.time_index;
  pr.x_t1 = std::move(a);
  pr.x_t2 = std::move(b);
  pr.validate();
  return pr;
}

SampleTensors sample_tensors(const SeriesPair& pr, int j, int delta_s) {
  SampleTensors s;
  s.stack_t1 = make_input_stack(pr.x_t1, j, delta_s);
  s.stack_t2 = make_input_stack(pr.x_t2, j, delta_s);
  s.target = normalized_bscan(pr.x_t2, j);
  return s;
}

// ---------------------------------------------------------------------------
// augmentation
// ---------------------------------------------------------------------------

Tensor hflip_planes(const Tensor& t) {
  check_dim(!t.shape().empty(), "hflip needs rank >= 1");
  const int64_t w = t.shape().back();
  const int64_t rows = t.numel() / w;
  Tensor out = Tensor::zeros(t.shape());
  const Real* src = t.values().data();
  Real* dst = out.values().data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t x = 0; x < w; ++x) dst[r * w + x] = src[r * w + (w - 1 - x)];
  return out;
}

Tensor rotate_planes(const Tensor& t, double deg) {
  check_dim(t.shape().size() >= 2, "rotate needs rank >= 2");
  const int64_t w = t.shape().back();
  const int64_t h = t.shape()[t.shape().size() - 2];
  const int64_t planes = t.numel() / (h * w);
  const double th = deg * M_PI / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double cy = double(h - 1) / 2.0, cx = double(w - 1) / 2.0;
  Tensor out = Tensor::zeros(t.shape());
  const Real* src = t.values().data();
  Real* dst = out.values().data();
  for (int64_t p = 0; p < planes; ++p) {
    const Real* in = src + p * h * w;
    Real* o = dst + p * h * w;
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        // sample the source at the inverse-rotated position
        const double dy = double(y) - cy, dx = double(x) - cx;
        const double ys = cy + c * dy + s * dx;
        const double xs = cx - s * dy + c * dx;
        const int64_t y0 = int64_t(std::floor(ys));
        const int64_t x0 = int64_t(std::floor(xs));
        const double fy = ys - double(y0), fx = xs - double(x0);
        double acc = 0.0;
        for (int ky = 0; ky < 2; ++ky) {
          for (int kx = 0; kx < 2; ++kx) {
            const int64_t yy = y0 + ky, xx = x0 + kx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            const double wgt = (ky ? fy : 1.0 - fy) * (kx ? fx : 1.0 - fx);
            acc += wgt * double(in[yy * w + xx]);
          }
        }
        o[y * w + x] = Real(acc);
      }
    }
  }
  return out;
}

void augment_tensors(const std::vector<Tensor*>& ts, uint64_t seed) {
  Rng rng(seed);
  const bool flip = rng.uniform() < 0.5;
  const bool rot = rng.uniform() < 0.5;
  const double deg = rng.uniform(-5.0, 5.0);  // drawn unconditionally
  for (Tensor* t : ts) {
    if (flip) *t = hflip_planes(*t);
    if (rot) *t = rotate_planes(*t, deg);
  }
}

void augment_pair(Tensor& stack, Tensor& target, uint64_t seed) {
  augment_tensors({&stack, &target}, seed);
}

void augment_sample(SampleTensors& s, uint64_t seed) {
  augment_tensors({&s.stack_t1, &s.stack_t2, &s.target}, seed);
}

// ---------------------------------------------------------------------------
// synthetic series
// ---------------------------------------------------------------------------

namespace {

constexpr double kVitreous = 20.0;
constexpr double kBody = 75.0;
constexpr double kChoroid = 45.0;
constexpr double kIsosBand = 120.0;  // added on top of the local base
constexpr double kBmBand = 110.0;
constexpr double kLesion = 235.0;

}  // namespace

SynthSeries synth_series(const SynthPatient& sp, int n_timepoints, int size,
                         uint64_t seed, int slices) {
  check_arg(n_timepoints >= 2, "a series needs at least two timepoints");
  check_arg(size >= 8, "B-scan size too small");
  check_arg(sp.response > 0.0 && sp.response <= 1.0,
            "response must be in (0, 1]");
  check_arg(sp.speckle_sigma >= 0.0 && sp.max_jitter_cols >= 0,
            "noise and jitter must be non-negative");
  const int64_t depth = 2 * int64_t(size);
  const int64_t width = size;
  const int64_t nslices = slices > 0 ? slices : std::max(4, size / 4);

  const double reach = 1.5 * sp.wave_amp;
  if (sp.bm_row - reach - sp.isos_offset < 1.0 ||
      sp.bm_row + reach > double(depth) - 2.0 || sp.isos_offset < 1)
    throw ConfigError("band geometry does not fit inside the cube");
  if (sp.lesion_rz <= 0 || sp.lesion_rx <= 0 || sp.lesion_rs <= 0)
    throw ConfigError("lesion semi-axes must be positive");
  const double jm = sp.max_jitter_cols;
  if (sp.lesion_z - sp.lesion_rz < 0 ||
      sp.lesion_z + sp.lesion_rz > double(depth) - 1 ||
      sp.lesion_x - sp.lesion_rx - jm < 0 ||
      sp.lesion_x + sp.lesion_rx + jm > double(width) - 1 ||
      sp.lesion_s - sp.lesion_rs < 0 ||
      sp.lesion_s + sp.lesion_rs > double(nslices) - 1)
    throw ConfigError("lesion does not fit inside the cube");

  // time-invariant band depth per (slice, column)
  std::vector<double> band(nslices * width);
  for (int64_t s = 0; s < nslices; ++s) {
    for (int64_t c = 0; c < width; ++c) {
      band[s * width + c] =
          sp.bm_row +
          sp.wave_amp * std::sin(2.0 * M_PI * double(c) / double(width) +
                                 sp.wave_phase) +
          0.5 * sp.wave_amp *
              std::sin(2.0 * M_PI * double(s) / double(nslices) +
                       0.7 * sp.wave_phase + 1.1);
    }
  }
  const double band_sigma = std::max(1.0, double(depth) * 0.012);
  const double inv2s2 = 1.0 / (2.0 * band_sigma * band_sigma);

  SynthSeries out;
  for (int t = 1; t <= n_timepoints; ++t) {
    Rng rng(mix_seed(seed, uint64_t(t)));
    const int dx =
        t == 1 ? 0
               : int(rng.uniform_int(uint64_t(2 * sp.max_jitter_cols + 1))) -
                     sp.max_jitter_cols;
    const double scale = std::pow(sp.response, double(t - 1) / 2.0);
    const double rz = scale * sp.lesion_rz, rx = scale * sp.lesion_rx;

    Cube cube;
    cube.hdr = {depth, width,  nslices,      2.0, 6.0,
                6.0,   sp.patient_id, t};
    cube.voxels.resize(size_t(depth * width * nslices));
    SurfaceSet surf;
    surf.slices = nslices;
    surf.width = width;
    surf.bm.resize(nslices * width);
    surf.isos.resize(nslices * width);

    for (int64_t s = 0; s < nslices; ++s) {
      std::vector<double> row(width);
      for (int64_t c = 0; c < width; ++c) {
        const int64_t cc = std::clamp<int64_t>(c - dx, 0, width - 1);
        row[c] = band[s * width + cc];
        const int bm = int(std::lround(row[c]));
        surf.bm[s * width + c] = bm;
        surf.isos[s * width + c] = bm - sp.isos_offset;
      }
      const double ws = (double(s) - sp.lesion_s) / sp.lesion_rs;
      const double ws2 = ws * ws;
      for (int64_t z = 0; z < depth; ++z) {
        for (int64_t c = 0; c < width; ++c) {
          const double zb = row[c];
          const double zi = zb - double(sp.isos_offset);
          double val;
          if (double(z) < zi) val = kVitreous;
          else if (double(z) <= zb) val = kBody;
          else val = kChoroid;
          const double di = double(z) - zi, db = double(z) - zb;
          val += kIsosBand * std::exp(-di * di * inv2s2) +
                 kBmBand * std::exp(-db * db * inv2s2);
          if (ws2 <= 1.0) {
            const double wz = (double(z) - sp.lesion_z) / rz;
            const double wx = (double(c - dx) - sp.lesion_x) / rx;
            if (wz * wz + wx * wx + ws2 <= 1.0) val = kLesion;
          }
          double m = 1.0 + sp.speckle_sigma * rng.normal();
          if (m < 0.0) m = 0.0;
          const long q = std::lround(val * m);
          cube.at(s, z, c) = uint8_t(std::clamp(q, 0l, 255l));
        }
      }
    }
    surf.validate(depth);
    cube.validate();
    out.cubes.push_back(std::move(cube));
    out.surfaces.push_back(std::move(surf));
  }
  return out;
}

std::vector<ManifestEntry> generate_synth_dataset(const SynthDatasetConfig& cfg,
                                                  const std::string& out_dir) {
  check_arg(cfg.patients >= 1, "need at least one patient");
  std::filesystem::create_directories(out_dir);
  std::vector<ManifestEntry> rows;
  for (int i = 1; i <= cfg.patients; ++i) {
    Rng rng(mix_seed(cfg.seed, 0xA11CEull, uint64_t(i)));
    char idbuf[16];
    std::snprintf(idbuf, sizeof idbuf, "p%03d", i);
    const double depth = 2.0 * cfg.size;
    const double width = cfg.size;
    const double ns = cfg.slices > 0 ? cfg.slices : std::max(4, cfg.size / 4);
    SynthPatient sp;
    sp.patient_id = idbuf;
    sp.response = rng.uniform(0.45, 0.9);
    sp.bm_row = depth * rng.uniform(0.56, 0.60);
    sp.wave_amp = rng.uniform(2.0, 4.0);
    sp.wave_phase = rng.uniform(0.0, 2.0 * M_PI);
    sp.isos_offset = int(std::lround(depth * 0.16));
    sp.lesion_z = sp.bm_row - depth * rng.uniform(0.055, 0.11);
    sp.lesion_x = width * rng.uniform(0.38, 0.62);
    sp.lesion_s = ns * rng.uniform(0.38, 0.62);
    sp.lesion_rz = depth * rng.uniform(0.055, 0.08);
    sp.lesion_rx = width * rng.uniform(0.14, 0.2);
    sp.lesion_rs = ns * rng.uniform(0.22, 0.3);
    sp.speckle_sigma = cfg.speckle_sigma;
    sp.max_jitter_cols = cfg.max_jitter_cols;

    SynthSeries series =
        synth_series(sp, cfg.timepoints, cfg.size,
                     mix_seed(cfg.seed, 0xB0Bull, uint64_t(i)), cfg.slices);
    for (int t = 1; t <= cfg.timepoints; ++t) {
      const std::string stem =
          out_dir + "/" + sp.patient_id + "_t" + std::to_string(t);
      write_cube(series.cubes[t - 1], stem);
      write_surfaces(series.surfaces[t - 1], stem);
      rows.push_back({sp.patient_id, t, stem, stem + ".bm.csv",
                      stem + ".isos.csv"});
    }
  }
  write_manifest(rows, out_dir + "/manifest.txt");
  return rows;
}

// ---------------------------------------------------------------------------
// splits
// ---------------------------------------------------------------------------

SplitScheme parse_scheme(const std::string& s) {
  if (s == "p0" || s == "P0") return SplitScheme::P0;
  if (s == "p1" || s == "P1") return SplitScheme::P1;
  if (s == "pm" || s == "PM") return SplitScheme::PM;
  throw ParameterError("unknown scheme '" + s + "' (expected p0|p1|pm)");
}

std::string scheme_name(SplitScheme s) {
  switch (s) {
    case SplitScheme::P0: return "p0";
    case SplitScheme::P1: return "p1";
    case SplitScheme::PM: return "pm";
  }
  throw ParameterError("bad scheme value");
}

SplitPlan make_split(const std::vector<PatientInfo>& patients,
                     SplitScheme scheme, int n_folds, uint64_t seed) {
  check_arg(n_folds >= 1, "need at least one fold");
  check_arg(int(patients.size()) >= n_folds,
            "fewer patients than folds");
  std::vector<PatientInfo> roster = patients;
  std::sort(roster.begin(), roster.end(),
            [](const PatientInfo& a, const PatientInfo& b) {
              return a.id < b.id;
            });
  for (size_t i = 0; i + 1 < roster.size(); ++i)
    check_arg(roster[i].id != roster[i + 1].id,
              "duplicate patient id " + roster[i].id);
  for (const auto& p : roster)
    check_arg(p.n_timepoints >= 2,
              "patient " + p.id + " has fewer than two timepoints");

  // Fisher-Yates over the sorted roster, then contiguous near-equal chunks.
  std::vector<int> order(roster.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  Rng rng(mix_seed(seed, 0x5411ull));
  for (size_t i = order.size() - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(uint64_t(i) + 1)]);

  const int n = int(roster.size());
  const int base = n / n_folds, extra = n % n_folds;
  std::vector<std::vector<int>> folds(n_folds);
  int pos = 0;
  for (int k = 0; k < n_folds; ++k) {
    const int sz = base + (k < extra ? 1 : 0);
    for (int j = 0; j < sz; ++j) folds[k].push_back(order[pos++]);
  }

  SplitPlan plan;
  plan.scheme = scheme;
  for (int k = 0; k < n_folds; ++k) {
    FoldPlan fp;
    std::set<int> members(folds[k].begin(), folds[k].end());
    for (int idx : folds[k]) fp.test_patients.push_back(roster[idx].id);
    std::sort(fp.test_patients.begin(), fp.test_patients.end());

    for (int i = 0; i < n; ++i) {
      const auto& p = roster[i];
      const bool held_out = members.count(i) != 0;
      const int last_t1 = p.n_timepoints - 1;
      switch (scheme) {
        case SplitScheme::P0:
          for (int t = 1; t <= last_t1; ++t)
            (held_out ? fp.test : fp.train).push_back({p.id, t});
          break;
        case SplitScheme::P1:
          if (!held_out) {
            for (int t = 1; t <= last_t1; ++t) fp.train.push_back({p.id, t});
          } else {
            fp.finetune.push_back({p.id, 1});
            if (p.n_timepoints >= 3) fp.test.push_back({p.id, 2});
          }
          break;
        case SplitScheme::PM:
          for (int t = 1; t <= p.n_timepoints - 3; ++t)
            fp.train.push_back({p.id, t});
          if (held_out) fp.test.push_back({p.id, last_t1});
          break;
      }
    }
    plan.folds.push_back(std::move(fp));
  }
  return plan;
}

void SplitPlan::validate(const std::vector<PatientInfo>& patients) const {
  std::map<std::string, int> horizon;
  for (const auto& p : patients) horizon[p.id] = p.n_timepoints;
  auto fail = [](const std::string& msg) { throw ProtocolError(msg); };

  std::set<std::string> seen_test;
  for (size_t k = 0; k < folds.size(); ++k) {
    const FoldPlan& fp = folds[k];
    const std::string tag = "fold " + std::to_string(k) + ": ";
    std::set<std::string> held(fp.test_patients.begin(),
                               fp.test_patients.end());
    for (const auto& id : fp.test_patients) {
      if (!horizon.count(id)) fail(tag + "unknown patient " + id);
      if (!seen_test.insert(id).second)
        fail(tag + "patient " + id + " tested in more than one fold");
    }
    auto check_pairs = [&](const std::vector<PairRef>& list,
                           const std::string& role) {
      std::set<PairRef> uniq;
      for (const auto& pr : list) {
        auto it = horizon.find(pr.patient_id);
        if (it == horizon.end())
          fail(tag + role + " pair for unknown patient " + pr.patient_id);
        if (pr.t1_index < 1 || pr.t1_index >= it->second)
          fail(tag + role + " pair t" + std::to_string(pr.t1_index) +
               " out of range for " + pr.patient_id);
        if (!uniq.insert(pr).second)
          fail(tag + "duplicate " + role + " pair " + pr.patient_id + " t" +
               std::to_string(pr.t1_index));
      }
    };
    check_pairs(fp.train, "train");
    check_pairs(fp.finetune, "finetune");
    check_pairs(fp.test, "test");

    for (const auto& pr : fp.test)
      if (!held.count(pr.patient_id))
        fail(tag + "test pair for non-test patient " + pr.patient_id);

    if (scheme != SplitScheme::P1 && !fp.finetune.empty())
      fail(tag + "finetune pairs outside the p1 scheme");

    if (scheme == SplitScheme::P0 || scheme == SplitScheme::P1) {
      for (const auto& pr : fp.train)
        if (held.count(pr.patient_id))
          fail(tag + "training pair leaks test patient " + pr.patient_id);
    }
    if (scheme == SplitScheme::P1) {
      std::map<std::string, int> ft;
      for (const auto& pr : fp.finetune) {
        if (pr.t1_index != 1)
          fail(tag + "finetune pair must start the series");
        if (!held.count(pr.patient_id))
          fail(tag + "finetune pair for non-test patient " + pr.patient_id);
        ++ft[pr.patient_id];
      }
      for (const auto& id : fp.test_patients)
        if (ft[id] != 1)
          fail(tag + "patient " + id + " needs exactly one finetune pair");
      for (const auto& pr : fp.test)
        if (pr.t1_index < 2) fail(tag + "test pair overlaps finetune data");
    }
    if (scheme == SplitScheme::PM) {
      for (const auto& pr : fp.train)
        if (pr.t1_index + 1 > horizon[pr.patient_id] - 2)
          fail(tag + "training pair touches a held-out cube of " +
               pr.patient_id);
      for (const auto& pr : fp.test)
        if (pr.t1_index != horizon[pr.patient_id] - 1)
          fail(tag + "test pair is not the final pair of " + pr.patient_id);
    }
  }
  if (int(seen_test.size()) != int(horizon.size()))
    throw ProtocolError("some patients are never tested");
}

void write_split_plan(const SplitPlan& plan, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write split plan " + path);
  out << "scheme " << scheme_name(plan.scheme) << '\n';
  for (size_t k = 0; k < plan.folds.size(); ++k) {
    const FoldPlan& fp = plan.folds[k];
    const std::pair<const char*, const std::vector<PairRef>*> roles[] = {
        {"train", &fp.train}, {"finetune", &fp.finetune}, {"test", &fp.test}};
    for (const auto& [role, list] : roles)
      for (const auto& pr : *list)
        out << k << ' ' << role << ' ' << pr.patient_id << ' ' << pr.t1_index
            << '\n';
  }
}

SplitPlan read_split_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open split plan " + path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty split plan " + path);
  std::istringstream hs(line);
  std::string kw, name;
  if (!(hs >> kw >> name) || kw != "scheme")
    throw IoError("split plan " + path + " lacks a scheme header");
  SplitPlan plan;
  plan.scheme = parse_scheme(name);
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    int fold = -1;
    std::string role;
    PairRef pr;
    if (!(ss >> fold >> role >> pr.patient_id >> pr.t1_index) || fold < 0)
      throw IoError("malformed split plan line " + std::to_string(lineno) +
                    " in " + path);
    if (int(plan.folds.size()) <= fold) plan.folds.resize(fold + 1);
    FoldPlan& fp = plan.folds[fold];
    if (role == "train") fp.train.push_back(pr);
    else if (role == "finetune") fp.finetune.push_back(pr);
    else if (role == "test") fp.test.push_back(pr);
    else
      throw IoError("unknown role '" + role + "' in split plan " + path);
  }
  for (FoldPlan& fp : plan.folds) {
    std::set<std::string> held;
    for (const auto& pr : fp.finetune) held.insert(pr.patient_id);
    for (const auto& pr : fp.test) held.insert(pr.patient_id);
    fp.test_patients.assign(held.begin(), held.end());
  }
  return plan;
}

}  // namespace octevo
