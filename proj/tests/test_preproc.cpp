#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "octevo/errors.hpp"
#include "octevo/preproc.hpp"
#include "octevo/rng.hpp"
#include "test_support.hpp"

using namespace octevo;

namespace {

// smooth random texture so correlation peaks are unambiguous
Tensor smooth_field(int64_t h, int64_t w, uint64_t seed) {
  Rng r(seed);
  struct Wave {
    double az, ax, pz, px, amp;
  };
  std::vector<Wave> waves;
  for (int k = 0; k < 6; ++k)
    waves.push_back({r.uniform(0.05, 0.4), r.uniform(0.05, 0.4),
                     r.uniform(0, 6.28), r.uniform(0, 6.28),
                     r.uniform(0.3, 1.0)});
  Tensor t = Tensor::raw({h, w});
  for (int64_t z = 0; z < h; ++z)
    for (int64_t x = 0; x < w; ++x) {
      double v = 0;
      for (const auto& wv : waves)
        v += wv.amp * std::sin(wv.az * z + wv.pz) * std::sin(wv.ax * x + wv.px);
      t.data()[z * w + x] = Real(128 + 40 * v);
    }
  return t;
}

Cube make_cube(int64_t depth, int64_t width, int64_t slices,
               const std::string& pid = "p0", int time_index = 1) {
  Cube c;
  c.hdr = {depth, width, slices, 2.0, 6.0, 6.0, pid, time_index};
  c.voxels.assign(size_t(depth * width * slices), 0);
  return c;
}

}  // namespace

TEST_CASE("flatten_bscan") {
  const int64_t depth = 64, width = 16;
  Rng r(201);
  Tensor b = octevo::testing::rnd({depth, width}, r, 0, 255);

  std::vector<int> flat_bm(width, 40);
  Tensor same = flatten_bscan(b, flat_bm, 40);
  for (int64_t i = 0; i < b.numel(); ++i)
    CHECK(same.data()[i] == b.data()[i]);

  // tilted boundary: marker on the boundary lands on the reference row
  std::vector<int> tilt(width);
  Tensor img = Tensor::zeros({depth, width});
  for (int64_t c = 0; c < width; ++c) {
    tilt[c] = int(30 + c / 4);
    img.data()[tilt[c] * width + c] = 255;
    if (tilt[c] + 10 < depth) img.data()[(tilt[c] + 10) * width + c] = 77;
  }
  Tensor flat = flatten_bscan(img, tilt, 36);
  for (int64_t c = 0; c < width; ++c) {
    CHECK(flat.data()[36 * width + c] == doctest::Approx(255));
    CHECK(flat.data()[46 * width + c] == doctest::Approx(77));
  }

  CHECK_THROWS_AS(flatten_bscan(b, flat_bm, -1), ParameterError);
  CHECK_THROWS_AS(flatten_bscan(b, flat_bm, int(depth)), ParameterError);
  CHECK_THROWS_AS(flatten_bscan(b, std::vector<int>(width, int(depth)), 10),
                  ParameterError);
}

TEST_CASE("crop geometry from physical extents") {
  CubeHeader full{1024, 512, 128, 2.0, 6.0, 6.0, "p", 1};
  CropGeometry g = crop_geometry(full);
  CHECK(g.rows_above == 384);
  CHECK(g.rows_below == 128);
  CHECK(g.height() == 512);

  CubeHeader toy{128, 64, 16, 2.0, 6.0, 6.0, "p", 1};
  CropGeometry gt = crop_geometry(toy);
  CHECK(gt.rows_above == 48);
  CHECK(gt.rows_below == 16);
  CHECK(gt.height() == 64);
}

TEST_CASE("crop_window") {
  const int64_t depth = 1024, width = 4;
  Tensor ramp = Tensor::raw({depth, width});
  for (int64_t r = 0; r < depth; ++r)
    for (int64_t c = 0; c < width; ++c) ramp.data()[r * width + c] = Real(r);
  CropGeometry g{384, 128};
  Tensor out = crop_window(ramp, 600, g);
  REQUIRE(out.shape() == Shape{512, width});
  CHECK(out.data()[0] == doctest::Approx(216));                  // top row
  CHECK(out.data()[511 * width] == doctest::Approx(727));        // last row
  CHECK(out.data()[384 * width] == doctest::Approx(600));        // ref lands here

  CHECK_THROWS_WITH_AS(crop_window(ramp, 100, g, "patient p9 t1 slice 3"),
                       doctest::Contains("patient p9 t1 slice 3"),
                       PreprocError);
  CHECK_THROWS_AS(crop_window(ramp, 1000, g), PreprocError);
}

TEST_CASE("flatten+crop pipeline places boundary on fixed output row") {
  Cube cube = make_cube(1024, 8, 2);
  SurfaceSet s;
  s.slices = 2;
  s.width = 8;
  s.bm.resize(16);
  s.isos.resize(16);
  for (int64_t i = 0; i < 16; ++i) {
    s.bm[i] = 500 + int(i % 7) * 3;
    s.isos[i] = s.bm[i] - 40;
  }
  for (int64_t sl = 0; sl < 2; ++sl)
    for (int64_t c = 0; c < 8; ++c)
      cube.at(sl, s.bm_at(sl, c), c) = 200;

  Cube pre = preprocess_cube(cube, s, 600);
  CHECK(pre.hdr.depth == 512);
  CHECK(pre.hdr.mm_depth == doctest::Approx(1.0));
  for (int64_t sl = 0; sl < 2; ++sl)
    for (int64_t c = 0; c < 8; ++c)
      CHECK(int(pre.at(sl, 384, c)) == 200);
}

TEST_CASE("project_fundus") {
  Cube ones = make_cube(32, 8, 4);
  for (auto& v : ones.voxels) v = 1;
  SurfaceSet s;
  s.slices = 4;
  s.width = 8;
  s.bm.assign(32, 20);
  s.isos.assign(32, 10);
  Tensor f = project_fundus(ones, s);
  REQUIRE(f.shape() == Shape{4, 8});
  for (int64_t i = 0; i < f.numel(); ++i)
    CHECK(f.data()[i] == doctest::Approx(1.0));

  Cube rampc = make_cube(32, 8, 4);
  for (int64_t sl = 0; sl < 4; ++sl)
    for (int64_t d = 0; d < 32; ++d)
      for (int64_t c = 0; c < 8; ++c) rampc.at(sl, d, c) = uint8_t(d);
  SurfaceSet s2 = s;
  s2.isos.assign(32, 10);
  s2.bm.assign(32, 12);
  Tensor f2 = project_fundus(rampc, s2);
  for (int64_t i = 0; i < f2.numel(); ++i)
    CHECK(f2.data()[i] == doctest::Approx(11.0));

  SurfaceSet bad = s;
  bad.isos.assign(32, 25);  // above bm
  CHECK_THROWS_AS(project_fundus(ones, bad), PreprocError);
}

TEST_CASE("register_fundus recovers known translations") {
  Tensor moving = smooth_field(48, 96, 77);
  RigidTransform2D id = register_fundus(moving, moving, 6);
  CHECK(id.dx == 0);
  CHECK(id.dz == 0);
  CHECK(id.theta == 0.0);

  RigidTransform2D truth{3, -2, 0.0};
  Tensor fixed = apply_transform_plane(moving, truth);
  RigidTransform2D got = register_fundus(moving, fixed, 6);
  CHECK(got.dx == 3);
  CHECK(got.dz == -2);
  CHECK(got.theta == 0.0);

  // 5% additive noise: within one pixel
  Rng nr(301);
  Tensor noisy = fixed;
  {
    Tensor fuzz = Tensor::raw(fixed.shape());
    for (int64_t i = 0; i < fuzz.numel(); ++i)
      fuzz.data()[i] = Real(nr.normal(0.0, 0.05 * 255.0));
    noisy = add(fixed, fuzz);
  }
  RigidTransform2D noisy_got = register_fundus(moving, noisy, 6);
  CHECK(std::abs(noisy_got.dx - 3) <= 1);
  CHECK(std::abs(noisy_got.dz - -2) <= 1);

  CHECK_THROWS_AS(register_fundus(Tensor::full(moving.shape(), 5), moving, 2),
                  PreprocError);

  // small discrete rotation recovered when the angle search is enabled
  RigidTransform2D rot{0, 0, 1.0 * M_PI / 180.0};
  Tensor fixed_rot = apply_transform_plane(moving, rot);
  RigidTransform2D got_rot = register_fundus(moving, fixed_rot, 3, true);
  CHECK(got_rot.theta == doctest::Approx(rot.theta));
  CHECK(std::abs(got_rot.dx) <= 1);
  CHECK(std::abs(got_rot.dz) <= 1);
}

TEST_CASE("apply_transform_cube") {
  Cube cube = make_cube(6, 12, 10);
  Rng r(401);
  for (auto& v : cube.voxels) v = uint8_t(r.uniform_int(256));

  Cube same = apply_transform_cube(cube, RigidTransform2D{});
  CHECK(same.voxels == cube.voxels);

  RigidTransform2D t{2, -1, 0.0};
  RigidTransform2D tinv{-2, 1, 0.0};
  Cube fwd = apply_transform_cube(cube, t);
  Cube back = apply_transform_cube(fwd, tinv);
  // compare inside the doubly-valid region
  for (int64_t s = 1; s < 9; ++s)
    for (int64_t d = 0; d < 6; ++d)
      for (int64_t c = 2; c < 10; ++c)
        CHECK(int(back.at(s, d, c)) == int(cube.at(s, d, c)));

  // fundus projection commutes with a pure translation
  SurfaceSet surf;
  surf.slices = 10;
  surf.width = 12;
  surf.bm.assign(120, 4);
  surf.isos.assign(120, 1);
  Tensor f_then_t = apply_transform_plane(project_fundus(cube, surf), t);
  Tensor t_then_f = project_fundus(fwd, surf);
  for (int64_t i = 0; i < f_then_t.numel(); ++i)
    CHECK(double(t_then_f.data()[i]) ==
          doctest::Approx(double(f_then_t.data()[i])).epsilon(1e-12));
}

TEST_CASE("cube and surface file round-trips") {
  namespace fs = std::filesystem;
  fs::create_directories("tmp_preproc");

  Cube cube = make_cube(16, 8, 4, "p7", 3);
  Rng r(501);
  for (auto& v : cube.voxels) v = uint8_t(r.uniform_int(256));
  write_cube(cube, "tmp_preproc/cube");
  Cube back = read_cube("tmp_preproc/cube");
  CHECK(back.hdr.depth == 16);
  CHECK(back.hdr.width == 8);
  CHECK(back.hdr.slices == 4);
  CHECK(back.hdr.mm_depth == doctest::Approx(2.0));
  CHECK(back.hdr.patient_id == "p7");
  CHECK(back.hdr.time_index == 3);
  CHECK(back.voxels == cube.voxels);

  SurfaceSet s;
  s.slices = 4;
  s.width = 8;
  for (int64_t i = 0; i < 32; ++i) {
    s.isos.push_back(2 + int(i % 3));
    s.bm.push_back(9 + int(i % 4));
  }
  write_surfaces(s, "tmp_preproc/surf");
  SurfaceSet sb = read_surfaces("tmp_preproc/surf");
  CHECK(sb.slices == 4);
  CHECK(sb.width == 8);
  CHECK(sb.bm == s.bm);
  CHECK(sb.isos == s.isos);

  // truncated voxel payload rejected
  {
    Cube small = cube;
    small.voxels.pop_back();
    std::ofstream bad("tmp_preproc/bad.raw", std::ios::binary);
    bad.write(reinterpret_cast<const char*>(small.voxels.data()),
              int64_t(small.voxels.size()));
    bad.close();
    fs::copy_file("tmp_preproc/cube.hdr", "tmp_preproc/bad.hdr",
                  fs::copy_options::overwrite_existing);
    CHECK_THROWS_AS(read_cube("tmp_preproc/bad"), IoError);
  }
  CHECK_THROWS_AS(read_cube("tmp_preproc/nonexistent"), IoError);
}
