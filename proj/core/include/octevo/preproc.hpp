#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "octevo/tensor.hpp"

namespace octevo {

struct CubeHeader {
  int64_t depth = 0, width = 0, slices = 0;
  double mm_depth = 0, mm_width = 0, mm_slices = 0;
  std::string patient_id;
  int time_index = 0;
};

// Voxel layout: slice-major, each B-scan stored row-major depth x width.
struct Cube {
  CubeHeader hdr;
  std::vector<uint8_t> voxels;

  uint8_t at(int64_t slice, int64_t depth, int64_t col) const {
    return voxels[(slice * hdr.depth + depth) * hdr.width + col];
  }
  uint8_t& at(int64_t slice, int64_t depth, int64_t col) {
    return voxels[(slice * hdr.depth + depth) * hdr.width + col];
  }
  void validate() const;
};

// Per-(slice, column) depth indices of two retinal boundaries.
struct SurfaceSet {
  int64_t slices = 0, width = 0;
  std::vector<int> bm, isos;

  int bm_at(int64_t s, int64_t c) const { return bm[s * width + c]; }
  int isos_at(int64_t s, int64_t c) const { return isos[s * width + c]; }
  void validate(int64_t depth) const;
};

struct RigidTransform2D {
  int dx = 0;           // width axis, pixels
  int dz = 0;           // slice axis, pixels
  double theta = 0.0;   // radians
};

struct CropGeometry {
  int rows_above = 0;  // kept above the reference row
  int rows_below = 0;  // kept below it
  int height() const { return rows_above + rows_below; }
};

// 0.75 mm above / 0.25 mm below the flattening reference, in rows
CropGeometry crop_geometry(const CubeHeader& hdr);

Tensor bscan_tensor(const Cube& cube, int64_t slice);  // raw 0..255 values

Tensor flatten_bscan(const Tensor& bscan, const std::vector<int>& bm_row,
                     int ref_row);

Tensor crop_window(const Tensor& flattened, int ref_row,
                   const CropGeometry& geo, const std::string& context = {});

Tensor project_fundus(const Cube& cube, const SurfaceSet& surfaces);

RigidTransform2D register_fundus(const Tensor& moving, const Tensor& fixed,
                                 int max_shift = 20,
                                 bool search_theta = false);

Tensor apply_transform_plane(const Tensor& plane, const RigidTransform2D& t);
Cube apply_transform_cube(const Cube& cube, const RigidTransform2D& t);

// flatten + crop every B-scan; output depth is geo.height()
Cube preprocess_cube(const Cube& cube, const SurfaceSet& surfaces, int ref_row);

// <stem>.raw + <stem>.hdr
Cube read_cube(const std::string& stem);
void write_cube(const Cube& cube, const std::string& stem);

// <prefix>.bm.csv + <prefix>.isos.csv
SurfaceSet read_surfaces(const std::string& prefix);
SurfaceSet read_surface_pair(const std::string& bm_path,
                             const std::string& isos_path);
void write_surfaces(const SurfaceSet& s, const std::string& prefix);

}  // namespace octevo
