#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "octevo/preproc.hpp"
#include "octevo/tensor.hpp"

namespace octevo {

// ---------------------------------------------------------------------------
// Dataset manifest: one row per acquired cube.
// Plain text, one row per line: patient_id time_index cube_path bm_path isos_path
// cube_path is the stem shared by <stem>.raw / <stem>.hdr. time_index is
// 1-based and must be contiguous within a patient (1..T).
// ---------------------------------------------------------------------------
struct ManifestEntry {
  std::string patient_id;
  int time_index = 0;
  std::string cube_path;
  std::string bm_path;
  std::string isos_path;

  bool operator==(const ManifestEntry&) const = default;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& rows,
                    const std::string& path);

struct PatientInfo {
  std::string id;
  int n_timepoints = 0;

  bool operator==(const PatientInfo&) const = default;
};

// Groups manifest rows by patient (sorted by id) and checks that every
// patient's time indices are exactly 1..T.
std::vector<PatientInfo> patients_in(const std::vector<ManifestEntry>& rows);

const ManifestEntry& find_entry(const std::vector<ManifestEntry>& rows,
                                const std::string& patient_id, int time_index);

// ---------------------------------------------------------------------------
// Input assembly
// ---------------------------------------------------------------------------

// B-scan j (1-based) as a [1, depth, width] tensor scaled to [-1, 1].
Tensor normalized_bscan(const Cube& cube, int j);

// Channels [j-ds .. j .. j+ds] as a [2*ds+1, depth, width] tensor in [-1, 1];
// slices outside 1..slices contribute zero images.
Tensor make_input_stack(const Cube& cube, int j, int delta_s);

// Two aligned preprocessed cubes of one patient, one time step apart.
struct SeriesPair {
  Cube x_t1, x_t2;
  std::string patient_id;
  int t1_index = 0;

  void validate() const;
};

SeriesPair make_series_pair(Cube a, Cube b);

// Everything one training example needs: stacks at both timepoints plus the
// normalized target B-scan (slice j of x_t2).
struct SampleTensors {
  Tensor stack_t1, stack_t2, target;
};

SampleTensors sample_tensors(const SeriesPair& pr, int j, int delta_s);

// ---------------------------------------------------------------------------
// Augmentation. Pure value transforms: outputs are fresh untracked tensors.
// ---------------------------------------------------------------------------

// Reverses the last axis.
Tensor hflip_planes(const Tensor& t);

// Rotates each trailing (H, W) plane by deg around the plane center,
// bilinear sampling, zero fill. Positive angles turn the content
// counter-clockwise in (row, col) coordinates.
Tensor rotate_planes(const Tensor& t, double deg);

// Coin-flip horizontal flip, then coin-flip rotation by a uniform angle in
// [-5, 5] degrees; the same draws are applied to every listed tensor.
void augment_tensors(const std::vector<Tensor*>& ts, uint64_t seed);

void augment_pair(Tensor& stack, Tensor& target, uint64_t seed);
void augment_sample(SampleTensors& s, uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic longitudinal series: two smooth bright bands (upper/lower
// boundary surfaces) over a dim background, plus a bright elliptical lesion
// whose cross-sectional area shrinks by `response` per time step, under
// multiplicative unit-mean speckle noise. Ground-truth surfaces are emitted
// alongside the voxels.
// ---------------------------------------------------------------------------
struct SynthPatient {
  std::string patient_id;
  double response = 0.7;  // per-step lesion area factor, in (0, 1]

  // band geometry, in rows
  double bm_row = 0;       // base depth of the lower band
  double wave_amp = 3.0;   // undulation amplitude
  double wave_phase = 0.0;
  int isos_offset = 20;    // upper band sits this many rows above the lower

  // lesion at the first timepoint: center and semi-axes in
  // (row, column, slice) voxel units
  double lesion_z = 0, lesion_x = 0, lesion_s = 0;
  double lesion_rz = 0, lesion_rx = 0, lesion_rs = 0;

  double speckle_sigma = 0.08;  // stddev of the multiplicative noise
  int max_jitter_cols = 2;      // per-timepoint lateral shift range
};

struct SynthSeries {
  std::vector<Cube> cubes;  // time_index 1..n
  std::vector<SurfaceSet> surfaces;
};

// size is the B-scan width; the cube is 2*size rows deep over 2 mm so the
// standard flatten+crop yields size x size B-scans. slices <= 0 means size/4.
SynthSeries synth_series(const SynthPatient& sp, int n_timepoints, int size,
                         uint64_t seed, int slices = 0);

struct SynthDatasetConfig {
  int patients = 8;
  int timepoints = 6;
  int size = 64;
  int slices = 0;  // <= 0: size/4
  double speckle_sigma = 0.08;
  int max_jitter_cols = 2;
  uint64_t seed = 42;
};

// Writes cubes + surfaces + <out_dir>/manifest.txt and returns the rows.
std::vector<ManifestEntry> generate_synth_dataset(const SynthDatasetConfig& cfg,
                                                  const std::string& out_dir);

// ---------------------------------------------------------------------------
// Split protocols.
//   P0: patient-disjoint cross-validation; test patients contribute nothing
//       to training.
//   P1: as P0, plus the test patient's first pair (t=1 -> 2) is reserved for
//       fine-tuning and the pair (t=2 -> 3) is the test case.
//   PM: the last two cubes of every patient are held out; the single test
//       pair per patient maps its second-to-last cube to its last one.
// ---------------------------------------------------------------------------
enum class SplitScheme { P0, P1, PM };

SplitScheme parse_scheme(const std::string& s);  // "p0" | "p1" | "pm"
std::string scheme_name(SplitScheme s);

struct PairRef {
  std::string patient_id;
  int t1_index = 0;

  bool operator==(const PairRef&) const = default;
  auto operator<=>(const PairRef&) const = default;
};

struct FoldPlan {
  std::vector<std::string> test_patients;
  std::vector<PairRef> train, finetune, test;

  bool operator==(const FoldPlan&) const = default;
};

struct SplitPlan {
  SplitScheme scheme = SplitScheme::P0;
  std::vector<FoldPlan> folds;

  bool operator==(const SplitPlan&) const = default;

  // Checks the scheme invariants against the patient roster; throws
  // ProtocolError on any violation.
  void validate(const std::vector<PatientInfo>& patients) const;
};

SplitPlan make_split(const std::vector<PatientInfo>& patients,
                     SplitScheme scheme, int n_folds = 5, uint64_t seed = 0);

// Plain-text audit format: header "scheme <name>", then one line per pair:
// "<fold> <train|finetune|test> <patient> <t1_index>".
void write_split_plan(const SplitPlan& plan, const std::string& path);
SplitPlan read_split_plan(const std::string& path);

}  // namespace octevo
