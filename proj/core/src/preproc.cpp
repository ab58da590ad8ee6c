#include "octevo/preproc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "octevo/errors.hpp"

namespace octevo {

void Cube::validate() const {
  check_arg(hdr.depth > 0 && hdr.width > 0 && hdr.slices > 0,
            "cube: non-positive dimensions");
  check_arg(hdr.mm_depth > 0 && hdr.mm_width > 0 && hdr.mm_slices > 0,
            "cube: non-positive physical extents");
  check_dim(int64_t(voxels.size()) == hdr.depth * hdr.width * hdr.slices,
            "cube: voxel count does not match declared shape");
}

void SurfaceSet::validate(int64_t depth) const {
  check_dim(int64_t(bm.size()) == slices * width &&
                int64_t(isos.size()) == slices * width,
            "surfaces: entry count does not match slices x width");
  for (int64_t i = 0; i < slices * width; ++i) {
    if (!(0 <= isos[i] && isos[i] < bm[i] && bm[i] < depth))
      throw PreprocError("surfaces: require 0 <= isos < bm < depth at entry " +
                         std::to_string(i));
  }
}

CropGeometry crop_geometry(const CubeHeader& hdr) {
  const double rows_per_mm = double(hdr.depth) / hdr.mm_depth;
  CropGeometry g;
  g.rows_above = int(std::llround(0.75 * rows_per_mm));
  g.rows_below = int(std::llround(0.25 * rows_per_mm));
  return g;
}

Tensor bscan_tensor(const Cube& cube, int64_t slice) {
  check_arg(slice >= 0 && slice < cube.hdr.slices, "bscan: slice out of range");
  Tensor t = Tensor::raw({cube.hdr.depth, cube.hdr.width});
  const uint8_t* src = cube.voxels.data() + slice * cube.hdr.depth * cube.hdr.width;
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = Real(src[i]);
  return t;
}

Tensor flatten_bscan(const Tensor& bscan, const std::vector<int>& bm_row,
                     int ref_row) {
  check_dim(bscan.ndim() == 2, "flatten: expected a 2-D B-scan");
  const int64_t depth = bscan.shape()[0], width = bscan.shape()[1];
  check_arg(ref_row >= 0 && ref_row < depth, "flatten: ref_row out of range");
  check_dim(int64_t(bm_row.size()) == width,
            "flatten: one boundary row needed per column");
  for (int v : bm_row)
    check_arg(v >= 0 && v < depth, "flatten: boundary row out of range");

  Tensor out = Tensor::zeros({depth, width});
  for (int64_t c = 0; c < width; ++c) {
    const int64_t shift = ref_row - bm_row[c];  // content moves down by shift
    const int64_t r0 = std::max<int64_t>(0, shift);
    const int64_t r1 = std::min<int64_t>(depth, depth + shift);
    for (int64_t r = r0; r < r1; ++r)
      out.data()[r * width + c] = bscan.data()[(r - shift) * width + c];
  }
  return out;
}

Tensor crop_window(const Tensor& flattened, int ref_row,
                   const CropGeometry& geo, const std::string& context) {
  check_dim(flattened.ndim() == 2, "crop: expected a 2-D image");
  const int64_t depth = flattened.shape()[0], width = flattened.shape()[1];
  const int64_t top = ref_row - geo.rows_above;
  const int64_t bottom = ref_row + geo.rows_below;  // exclusive
  if (top < 0 || bottom > depth)
    throw PreprocError("crop: window [" + std::to_string(top) + ", " +
                       std::to_string(bottom) + ") exceeds depth " +
                       std::to_string(depth) +
                       (context.empty() ? "" : " (" + context + ")"));
  Tensor out = Tensor::raw({geo.height(), width});
  for (int64_t r = 0; r < geo.height(); ++r)
    for (int64_t c = 0; c < width; ++c)
      out.data()[r * width + c] = flattened.data()[(top + r) * width + c];
  return out;
}

Tensor project_fundus(const Cube& cube, const SurfaceSet& surfaces) {
  cube.validate();
  check_dim(surfaces.slices == cube.hdr.slices &&
                surfaces.width == cube.hdr.width,
            "fundus: surface grid does not match cube");
  surfaces.validate(cube.hdr.depth);
  Tensor out = Tensor::raw({cube.hdr.slices, cube.hdr.width});
  for (int64_t s = 0; s < cube.hdr.slices; ++s)
    for (int64_t c = 0; c < cube.hdr.width; ++c) {
      const int lo = surfaces.isos_at(s, c), hi = surfaces.bm_at(s, c);
      double acc = 0;
      for (int d = lo; d <= hi; ++d) acc += cube.at(s, d, c);
      out.data()[s * cube.hdr.width + c] = Real(acc / (hi - lo + 1));
    }
  return out;
}

namespace {

double plane_variance(const Tensor& t) {
  double mean = 0;
  for (int64_t i = 0; i < t.numel(); ++i) mean += t.data()[i];
  mean /= double(t.numel());
  double var = 0;
  for (int64_t i = 0; i < t.numel(); ++i) {
    const double d = double(t.data()[i]) - mean;
    var += d * d;
  }
  return var / double(t.numel());
}

// Warp with validity mask; theta rotates about the image centre, then the
// content translates by (dz, dx).
void warp_plane(const Tensor& in, const RigidTransform2D& t, Tensor& out,
                std::vector<uint8_t>& mask) {
  const int64_t h = in.shape()[0], w = in.shape()[1];
  out = Tensor::zeros({h, w});
  mask.assign(size_t(h * w), 0);
  const double cz = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double ct = std::cos(t.theta), st = std::sin(t.theta);
  for (int64_t z = 0; z < h; ++z)
    for (int64_t x = 0; x < w; ++x) {
      if (t.theta == 0.0) {
        const int64_t sz = z - t.dz, sx = x - t.dx;
        if (sz < 0 || sz >= h || sx < 0 || sx >= w) continue;
        out.data()[z * w + x] = in.data()[sz * w + sx];
        mask[z * w + x] = 1;
        continue;
      }
      const double rz = z - t.dz - cz, rx = x - t.dx - cx;
      const double sz = ct * rz + st * rx + cz;
      const double sx = -st * rz + ct * rx + cx;
      const int64_t z0 = int64_t(std::floor(sz)), x0 = int64_t(std::floor(sx));
      if (z0 < 0 || z0 + 1 >= h || x0 < 0 || x0 + 1 >= w) continue;
      const double fz = sz - z0, fx = sx - x0;
      const double v =
          (1 - fz) * ((1 - fx) * in.data()[z0 * w + x0] +
                      fx * in.data()[z0 * w + x0 + 1]) +
          fz * ((1 - fx) * in.data()[(z0 + 1) * w + x0] +
                fx * in.data()[(z0 + 1) * w + x0 + 1]);
      out.data()[z * w + x] = Real(v);
      mask[z * w + x] = 1;
    }
}

double ncc_masked(const Tensor& a, const Tensor& b,
                  const std::vector<uint8_t>& mask) {
  double ma = 0, mb = 0;
  int64_t n = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (!mask[i]) continue;
    ma += a.data()[i];
    mb += b.data()[i];
    ++n;
  }
  if (n < 16) return -2.0;  // overlap too small to be meaningful
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    if (!mask[i]) continue;
    const double da = a.data()[i] - ma, db = b.data()[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) return -2.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

RigidTransform2D register_fundus(const Tensor& moving, const Tensor& fixed,
                                 int max_shift, bool search_theta) {
  check_dim(moving.ndim() == 2 && moving.shape() == fixed.shape(),
            "register: images must share a 2-D shape");
  check_arg(max_shift >= 0, "register: negative search radius");
  if (plane_variance(moving) == 0 || plane_variance(fixed) == 0)
    throw PreprocError("register: constant image, correlation undefined");

  std::vector<double> thetas{0.0};
  if (search_theta)
    for (int deg : {-2, -1, 1, 2})
      thetas.push_back(deg * M_PI / 180.0);

  RigidTransform2D best;
  double best_score = -3.0;
  auto prefer = [](const RigidTransform2D& a, const RigidTransform2D& b) {
    // deterministic tie-break: mildest transform wins
    const auto key = [](const RigidTransform2D& t) {
      return std::tuple<double, int, double, int, int>(
          std::fabs(t.theta), std::abs(t.dx) + std::abs(t.dz), t.theta, t.dz,
          t.dx);
    };
    return key(a) < key(b);
  };
  Tensor warped;
  std::vector<uint8_t> mask;
  for (double th : thetas) {
    Tensor rotated;
    std::vector<uint8_t> rmask;
    if (th != 0.0)
      warp_plane(moving, RigidTransform2D{0, 0, th}, rotated, rmask);
    for (int dz = -max_shift; dz <= max_shift; ++dz)
      for (int dx = -max_shift; dx <= max_shift; ++dx) {
        RigidTransform2D cand{dx, dz, th};
        if (th == 0.0) {
          warp_plane(moving, cand, warped, mask);
        } else {
          // translate the pre-rotated image; combine masks
          warp_plane(rotated, RigidTransform2D{dx, dz, 0.0}, warped, mask);
          const int64_t h = moving.shape()[0], w = moving.shape()[1];
          for (int64_t z = 0; z < h; ++z)
            for (int64_t x = 0; x < w; ++x) {
              const int64_t sz = z - dz, sx = x - dx;
              if (sz < 0 || sz >= h || sx < 0 || sx >= w) continue;
              if (!rmask[sz * w + sx]) mask[z * w + x] = 0;
            }
        }
        const double score = ncc_masked(warped, fixed, mask);
        if (score > best_score ||
            (score == best_score && prefer(cand, best))) {
          best_score = score;
          best = cand;
        }
      }
  }
  if (best_score <= -2.0)
    throw PreprocError("register: no candidate produced a usable overlap");
  return best;
}

Tensor apply_transform_plane(const Tensor& plane, const RigidTransform2D& t) {
  Tensor out;
  std::vector<uint8_t> mask;
  warp_plane(plane, t, out, mask);
  return out;
}

Cube apply_transform_cube(const Cube& cube, const RigidTransform2D& t) {
  cube.validate();
  check_arg(std::abs(t.dx) < cube.hdr.width && std::abs(t.dz) < cube.hdr.slices,
            "transform: translation exceeds cube extent");
  Cube out = cube;
  Tensor plane = Tensor::raw({cube.hdr.slices, cube.hdr.width});
  Tensor warped;
  std::vector<uint8_t> mask;
  for (int64_t d = 0; d < cube.hdr.depth; ++d) {
    for (int64_t s = 0; s < cube.hdr.slices; ++s)
      for (int64_t c = 0; c < cube.hdr.width; ++c)
        plane.data()[s * cube.hdr.width + c] = Real(cube.at(s, d, c));
    warp_plane(plane, t, warped, mask);
    for (int64_t s = 0; s < cube.hdr.slices; ++s)
      for (int64_t c = 0; c < cube.hdr.width; ++c) {
        const double v = warped.data()[s * cube.hdr.width + c];
        out.at(s, d, c) =
            uint8_t(std::clamp<long>(std::lround(v), 0, 255));
      }
  }
  return out;
}

Cube preprocess_cube(const Cube& cube, const SurfaceSet& surfaces,
                     int ref_row) {
  cube.validate();
  check_dim(surfaces.slices == cube.hdr.slices &&
                surfaces.width == cube.hdr.width,
            "preprocess: surface grid does not match cube");
  surfaces.validate(cube.hdr.depth);
  const CropGeometry geo = crop_geometry(cube.hdr);

  Cube out;
  out.hdr = cube.hdr;
  out.hdr.depth = geo.height();
  out.hdr.mm_depth =
      cube.hdr.mm_depth * double(geo.height()) / double(cube.hdr.depth);
  out.voxels.assign(size_t(out.hdr.depth) * out.hdr.width * out.hdr.slices, 0);

  std::vector<int> bm_row(cube.hdr.width);
  for (int64_t s = 0; s < cube.hdr.slices; ++s) {
    for (int64_t c = 0; c < cube.hdr.width; ++c)
      bm_row[c] = surfaces.bm_at(s, c);
    const std::string ctx = "patient " + cube.hdr.patient_id + " t" +
                            std::to_string(cube.hdr.time_index) + " slice " +
                            std::to_string(s);
    Tensor flat = flatten_bscan(bscan_tensor(cube, s), bm_row, ref_row);
    Tensor crop = crop_window(flat, ref_row, geo, ctx);
    for (int64_t r = 0; r < out.hdr.depth; ++r)
      for (int64_t c = 0; c < out.hdr.width; ++c)
        out.at(s, r, c) =
            uint8_t(std::lround(double(crop.data()[r * out.hdr.width + c])));
  }
  return out;
}

Cube read_cube(const std::string& stem) {
  std::ifstream hdr(stem + ".hdr");
  if (!hdr) throw IoError("cannot open header " + stem + ".hdr");
  Cube cube;
  hdr >> cube.hdr.depth >> cube.hdr.width >> cube.hdr.slices >>
      cube.hdr.mm_depth >> cube.hdr.mm_width >> cube.hdr.mm_slices >>
      cube.hdr.patient_id >> cube.hdr.time_index;
  if (!hdr) throw IoError("malformed header " + stem + ".hdr");

  std::ifstream raw(stem + ".raw", std::ios::binary);
  if (!raw) throw IoError("cannot open voxels " + stem + ".raw");
  const int64_t n = cube.hdr.depth * cube.hdr.width * cube.hdr.slices;
  cube.voxels.resize(size_t(n));
  raw.read(reinterpret_cast<char*>(cube.voxels.data()), n);
  if (raw.gcount() != n)
    throw IoError("voxel file " + stem + ".raw shorter than declared shape");
  char extra;
  if (raw.read(&extra, 1))
    throw IoError("voxel file " + stem + ".raw longer than declared shape");
  cube.validate();
  return cube;
}

void write_cube(const Cube& cube, const std::string& stem) {
  cube.validate();
  std::ofstream hdr(stem + ".hdr");
  if (!hdr) throw IoError("cannot write header " + stem + ".hdr");
  hdr << cube.hdr.depth << ' ' << cube.hdr.width << ' ' << cube.hdr.slices
      << ' ' << cube.hdr.mm_depth << ' ' << cube.hdr.mm_width << ' '
      << cube.hdr.mm_slices << ' ' << cube.hdr.patient_id << ' '
      << cube.hdr.time_index << '\n';
  std::ofstream raw(stem + ".raw", std::ios::binary);
  if (!raw) throw IoError("cannot write voxels " + stem + ".raw");
  raw.write(reinterpret_cast<const char*>(cube.voxels.data()),
            int64_t(cube.voxels.size()));
  if (!raw) throw IoError("short write to " + stem + ".raw");
}

namespace {

std::vector<int> read_surface_csv(const std::string& path, int64_t& slices,
                                  int64_t& width) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open surface file " + path);
  std::vector<int> vals;
  std::string line;
  slices = 0;
  width = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int64_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      vals.push_back(std::stoi(cell));
      ++cols;
    }
    if (width < 0) width = cols;
    else if (cols != width)
      throw IoError("ragged surface file " + path);
    ++slices;
  }
  if (slices == 0) throw IoError("empty surface file " + path);
  return vals;
}

}  // namespace

SurfaceSet read_surface_pair(const std::string& bm_path,
                             const std::string& isos_path) {
  SurfaceSet s;
  int64_t s2 = 0, w2 = 0;
  s.bm = read_surface_csv(bm_path, s.slices, s.width);
  s.isos = read_surface_csv(isos_path, s2, w2);
  if (s2 != s.slices || w2 != s.width)
    throw IoError("surface files disagree on grid size: " + bm_path + " vs " +
                  isos_path);
  return s;
}

SurfaceSet read_surfaces(const std::string& prefix) {
  return read_surface_pair(prefix + ".bm.csv", prefix + ".isos.csv");
}

void write_surfaces(const SurfaceSet& s, const std::string& prefix) {
  const std::pair<std::string, const std::vector<int>*> files[] = {
      {".bm.csv", &s.bm}, {".isos.csv", &s.isos}};
  for (const auto& [name, vals] : files) {
    std::ofstream out(prefix + name);
    if (!out) throw IoError("cannot write surface file " + prefix + name);
    for (int64_t row = 0; row < s.slices; ++row) {
      for (int64_t c = 0; c < s.width; ++c) {
        if (c) out << ',';
        out << (*vals)[row * s.width + c];
      }
      out << '\n';
    }
  }
}

}  // namespace octevo
