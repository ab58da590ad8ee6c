#include "octevo/metrics.hpp"

#include <cmath>
#include <cstring>

#include "octevo/errors.hpp"
#include "octevo/rng.hpp"

namespace octevo {

namespace {

void require_image_pair(const Tensor& a, const Tensor& b, const char* who) {
  check_dim(a.ndim() == 2 && b.ndim() == 2,
            std::string(who) + ": expected 2-D images");
  check_dim(a.shape() == b.shape(), std::string(who) + ": shape mismatch");
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double max_val) {
  require_image_pair(a, b, "psnr");
  check_arg(max_val > 0, "psnr: max_val must be positive");
  const int64_t n = a.numel();
  double mse = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = double(a.data()[i]) - double(b.data()[i]);
    mse += d * d;
  }
  mse /= double(n);
  if (mse == 0.0) return kPsnrSentinel;
  return 10.0 * std::log10(max_val * max_val / mse);
}

double ssim(const Tensor& a, const Tensor& b, double dynamic_range, int window,
            double sigma) {
  require_image_pair(a, b, "ssim");
  check_arg(dynamic_range > 0 && window >= 1 && sigma > 0,
            "ssim: bad parameters");
  const int64_t h = a.shape()[0], w = a.shape()[1];
  check_dim(h >= window && w >= window, "ssim: image smaller than window");

  std::vector<double> g(window * window);
  {
    const double c = (window - 1) / 2.0;
    double total = 0;
    for (int y = 0; y < window; ++y)
      for (int x = 0; x < window; ++x) {
        const double d2 = (y - c) * (y - c) + (x - c) * (x - c);
        g[y * window + x] = std::exp(-d2 / (2 * sigma * sigma));
        total += g[y * window + x];
      }
    for (double& v : g) v /= total;
  }

  const double c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  const double c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  const int64_t oh = h - window + 1, ow = w - window + 1;
  double acc = 0;
  for (int64_t y0 = 0; y0 < oh; ++y0)
    for (int64_t x0 = 0; x0 < ow; ++x0) {
      double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
      for (int y = 0; y < window; ++y)
        for (int x = 0; x < window; ++x) {
          const double wgt = g[y * window + x];
          const double va = a.data()[(y0 + y) * w + (x0 + x)];
          const double vb = b.data()[(y0 + y) * w + (x0 + x)];
          ma += wgt * va;
          mb += wgt * vb;
          maa += wgt * va * va;
          mbb += wgt * vb * vb;
          mab += wgt * va * vb;
        }
      const double va = maa - ma * ma;
      const double vb = mbb - mb * mb;
      const double cov = mab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
  return acc / double(oh * ow);
}

namespace {

constexpr int kStages = 3;
constexpr int kChannels[kStages] = {16, 32, 64};

std::vector<double> make_weights(uint64_t seed, int cin, int cout) {
  Rng r(seed);
  std::vector<double> w(size_t(cout) * cin * 9);
  const double stddev = std::sqrt(2.0 / (cin * 9.0));
  for (double& v : w) v = r.normal(0.0, stddev);
  return w;
}

// stride-2 3x3 conv, pad 1, ReLU; plain loops so results do not depend on
// any vectorized-summation order
void conv_stage(const std::vector<double>& in, int cin, int64_t h, int64_t w,
                const std::vector<double>& ker, int cout,
                std::vector<double>& out, int64_t& oh, int64_t& ow) {
  oh = (h + 2 - 3) / 2 + 1;
  ow = (w + 2 - 3) / 2 + 1;
  out.assign(size_t(cout) * oh * ow, 0.0);
  for (int o = 0; o < cout; ++o)
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t x = 0; x < ow; ++x) {
        double acc = 0;
        for (int c = 0; c < cin; ++c)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const int64_t iy = 2 * y + ky - 1, ix = 2 * x + kx - 1;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += in[(size_t(c) * h + iy) * w + ix] *
                     ker[((size_t(o) * cin + c) * 3 + ky) * 3 + kx];
            }
        out[(size_t(o) * oh + y) * ow + x] = acc > 0 ? acc : 0.0;
      }
}

void unit_normalize_channels(std::vector<double>& feat, int c, int64_t hw) {
  for (int64_t p = 0; p < hw; ++p) {
    double n2 = 0;
    for (int ch = 0; ch < c; ++ch) {
      const double v = feat[size_t(ch) * hw + p];
      n2 += v * v;
    }
    if (n2 == 0) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (int ch = 0; ch < c; ++ch) feat[size_t(ch) * hw + p] *= inv;
  }
}

}  // namespace

PerceptualNet::PerceptualNet(uint64_t seed)
    : w1_(make_weights(mix_seed(seed, 1), 1, kChannels[0])),
      w2_(make_weights(mix_seed(seed, 2), kChannels[0], kChannels[1])),
      w3_(make_weights(mix_seed(seed, 3), kChannels[1], kChannels[2])) {}

double PerceptualNet::distance(const Tensor& a, const Tensor& b) const {
  require_image_pair(a, b, "perceptual_distance");
  const int64_t h = a.shape()[0], w = a.shape()[1];
  std::vector<double> fa(a.data(), a.data() + a.numel());
  std::vector<double> fb(b.data(), b.data() + b.numel());
  const std::vector<double>* kers[kStages] = {&w1_, &w2_, &w3_};
  int cin = 1;
  int64_t ch = h, cw = w;
  double total = 0;
  for (int s = 0; s < kStages; ++s) {
    std::vector<double> oa, ob;
    int64_t oh = 0, ow = 0;
    conv_stage(fa, cin, ch, cw, *kers[s], kChannels[s], oa, oh, ow);
    conv_stage(fb, cin, ch, cw, *kers[s], kChannels[s], ob, oh, ow);
    fa = std::move(oa);
    fb = std::move(ob);
    cin = kChannels[s];
    ch = oh;
    cw = ow;
    std::vector<double> na = fa, nb = fb;
    unit_normalize_channels(na, cin, ch * cw);
    unit_normalize_channels(nb, cin, ch * cw);
    double layer = 0;
    for (size_t i = 0; i < na.size(); ++i) {
      const double d = na[i] - nb[i];
      layer += d * d;
    }
    total += layer / double(ch * cw);
  }
  return total;
}

double perceptual_distance(const Tensor& a, const Tensor& b) {
  static const PerceptualNet net;
  return net.distance(a, b);
}

void MetricsReport::add(BScanMetrics row) {
  check_arg(row.ssim >= -1.0 && row.ssim <= 1.0,
            "metrics: ssim outside [-1, 1]");
  check_arg(row.one_minus_lpips <= 1.0, "metrics: 1-distance above 1");
  check_arg(row.psnr_db >= 0.0, "metrics: negative psnr");
  per_bscan.push_back(std::move(row));
}

namespace {

MetricAggregate aggregate_rows(const std::vector<const BScanMetrics*>& rows) {
  MetricAggregate agg;
  agg.count = int(rows.size());
  if (rows.empty()) return agg;
  for (const auto* r : rows) {
    agg.mean_psnr += r->psnr_db;
    agg.mean_ssim += r->ssim;
    agg.mean_olp += r->one_minus_lpips;
  }
  const double n = double(rows.size());
  agg.mean_psnr /= n;
  agg.mean_ssim /= n;
  agg.mean_olp /= n;
  for (const auto* r : rows) {
    agg.std_psnr += (r->psnr_db - agg.mean_psnr) * (r->psnr_db - agg.mean_psnr);
    agg.std_ssim += (r->ssim - agg.mean_ssim) * (r->ssim - agg.mean_ssim);
    agg.std_olp +=
        (r->one_minus_lpips - agg.mean_olp) * (r->one_minus_lpips - agg.mean_olp);
  }
  agg.std_psnr = std::sqrt(agg.std_psnr / n);
  agg.std_ssim = std::sqrt(agg.std_ssim / n);
  agg.std_olp = std::sqrt(agg.std_olp / n);
  return agg;
}

}  // namespace

MetricAggregate MetricsReport::aggregate_all() const {
  std::vector<const BScanMetrics*> rows;
  rows.reserve(per_bscan.size());
  for (const auto& r : per_bscan) rows.push_back(&r);
  return aggregate_rows(rows);
}

std::map<std::pair<std::string, int>, MetricAggregate>
MetricsReport::aggregate_by_cube() const {
  std::map<std::pair<std::string, int>, std::vector<const BScanMetrics*>> by;
  for (const auto& r : per_bscan)
    by[{r.patient_id, r.time_index}].push_back(&r);
  std::map<std::pair<std::string, int>, MetricAggregate> out;
  for (const auto& [key, rows] : by) out[key] = aggregate_rows(rows);
  return out;
}

}  // namespace octevo
