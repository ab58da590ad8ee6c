#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "octevo/tensor.hpp"

namespace octevo {

// reported when MSE is exactly zero (keeps CSV aggregation finite)
inline constexpr double kPsnrSentinel = 99.0;

double psnr(const Tensor& a, const Tensor& b, double max_val);

// Gaussian-window SSIM, valid mode: map size (H-window+1) x (W-window+1).
double ssim(const Tensor& a, const Tensor& b, double dynamic_range,
            int window = 11, double sigma = 1.5);

// Perceptual distance from a seeded random 3-stage conv stack
// (16/32/64 channels, stride 2, ReLU, channel-unit-normalized features).
// Deterministic bit-for-bit given the seed; values are NOT comparable to
// metrics built on pretrained classification features. Inputs are expected
// on the [-1, 1] scale.
class PerceptualNet {
 public:
  explicit PerceptualNet(uint64_t seed = kDefaultSeed);
  double distance(const Tensor& a, const Tensor& b) const;

  static constexpr uint64_t kDefaultSeed = 0xC0FFEE5EEDULL;

 private:
  std::vector<double> w1_, w2_, w3_;
};

// convenience wrapper over a shared default-seed net
double perceptual_distance(const Tensor& a, const Tensor& b);

struct BScanMetrics {
  std::string patient_id;
  int time_index = 0;
  int slice = 0;
  double psnr_db = 0;
  double ssim = 0;
  double one_minus_lpips = 0;
};

struct MetricAggregate {
  int count = 0;
  double mean_psnr = 0, std_psnr = 0;
  double mean_ssim = 0, std_ssim = 0;
  double mean_olp = 0, std_olp = 0;
};

struct MetricsReport {
  std::vector<BScanMetrics> per_bscan;

  // throws ParameterError when a value is outside its documented range
  void add(BScanMetrics row);

  MetricAggregate aggregate_all() const;
  // keyed by (patient_id, time_index)
  std::map<std::pair<std::string, int>, MetricAggregate> aggregate_by_cube()
      const;
};

}  // namespace octevo
