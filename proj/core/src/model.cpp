#include "octevo/model.hpp"

#include <sstream>

#include "octevo/errors.hpp"
#include "octevo/rng.hpp"

namespace octevo {

void ArchConfig::validate() const {
  if (input_h < 1 || input_w < 1) throw ConfigError("arch: empty input size");
  if (enc_dims.empty() || gem_dims.empty())
    throw ConfigError("arch: need at least one encoder and one graph layer");
  const int64_t div = int64_t(1) << enc_dims.size();
  if (input_h % div != 0 || input_w % div != 0)
    throw ConfigError("arch: input size must be divisible by 2^" +
                      std::to_string(enc_dims.size()));
  if (latent_h() < 1 || latent_w() < 1)
    throw ConfigError("arch: latent grid collapsed to zero");
  if (delta_s < 0) throw ConfigError("arch: negative half-window");
  if (heads < 1) throw ConfigError("arch: need at least one attention head");
  if (toy_scale < 1) throw ConfigError("arch: scale divisor must be >= 1");
  if (cab_reduction < 1) throw ConfigError("arch: bad attention reduction");
  if (proj_dim < 1) throw ConfigError("arch: bad projection width");
}

std::string ArchConfig::serialize() const {
  std::ostringstream os;
  os << "arch 1 " << input_h << ' ' << input_w << ' ' << delta_s << ' '
     << heads << ' ' << toy_scale << ' ' << cab_reduction << ' ' << proj_dim
     << ' ' << enc_dims.size();
  for (int64_t d : enc_dims) os << ' ' << d;
  os << ' ' << gem_dims.size();
  for (int64_t d : gem_dims) os << ' ' << d;
  os << ' ' << use_gem;
  return os.str();
}

ArchConfig ArchConfig::deserialize(const std::string& line) {
  std::istringstream is(line);
  std::string tag;
  int version = 0;
  ArchConfig cfg;
  size_t ne = 0, ng = 0;
  is >> tag >> version >> cfg.input_h >> cfg.input_w >> cfg.delta_s >>
      cfg.heads >> cfg.toy_scale >> cfg.cab_reduction >> cfg.proj_dim >> ne;
  if (!is || tag != "arch" || version != 1)
    throw IoError("unrecognized architecture line: " + line);
  cfg.enc_dims.assign(ne, 0);
  for (auto& d : cfg.enc_dims) is >> d;
  is >> ng;
  cfg.gem_dims.assign(ng, 0);
  for (auto& d : cfg.gem_dims) is >> d;
  is >> cfg.use_gem;
  if (!is) throw IoError("truncated architecture line: " + line);
  cfg.validate();
  return cfg;
}

namespace {

int64_t cab_hidden(int64_t channels, int reduction) {
  return std::max<int64_t>(1, channels / reduction);
}

int64_t disc_dim(const ArchConfig& cfg, int i) {
  static constexpr int64_t kDims[4] = {64, 128, 256, 512};
  return std::max<int64_t>(1, kDims[i] / cfg.toy_scale);
}

std::vector<int64_t> decoder_channels(const ArchConfig& cfg) {
  // mirrors the encoder widths, with the finest width repeated
  const size_t n = cfg.enc_dims.size();
  std::vector<int64_t> out;  // per-block output widths
  for (size_t i = n - 1; i-- > 0;) out.push_back(cfg.enc_dim(i));
  out.push_back(cfg.enc_dim(0));
  return out;
}

struct ParamBuilder {
  ParamMap& map;
  Rng rng;

  void weight(const std::string& name, Shape shape) {
    Tensor t = Tensor::raw(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
      t.data()[i] = Real(rng.normal(0.0, 0.02));
    t.requires_grad(true);
    map.emplace(name, std::move(t));
  }
  void bias(const std::string& name, int64_t n) {
    Tensor t = Tensor::zeros({n}, true);
    map.emplace(name, std::move(t));
  }
};

void build_disc(ParamMap& map, uint64_t seed, const ArchConfig& cfg,
                int64_t in_channels) {
  ParamBuilder b{map, Rng(seed)};
  int64_t prev = in_channels;
  for (int i = 0; i < 4; ++i) {
    const int64_t ch = disc_dim(cfg, i);
    b.weight("conv" + std::to_string(i) + ".w", {ch, prev, 4, 4});
    b.bias("conv" + std::to_string(i) + ".b", ch);
    prev = ch;
  }
  b.weight("conv4.w", {1, prev, 4, 4});
  b.bias("conv4.b", 1);
}

}  // namespace

ModelParams init_model_params(const ArchConfig& cfg, uint64_t seed) {
  cfg.validate();
  ModelParams mp;
  {
    ParamBuilder b{mp.encoder, Rng(mix_seed(seed, 1))};
    int64_t prev = cfg.in_channels();
    for (size_t i = 0; i < cfg.enc_dims.size(); ++i) {
      const int64_t ch = cfg.enc_dim(i);
      const std::string pre = "block" + std::to_string(i) + ".";
      b.weight(pre + "conv1.w", {ch, prev, 3, 3});
      b.bias(pre + "conv1.b", ch);
      b.weight(pre + "conv2.w", {ch, ch, 3, 3});
      b.bias(pre + "conv2.b", ch);
      const int64_t hid = cab_hidden(ch, cfg.cab_reduction);
      b.weight(pre + "cab.squeeze", {hid, ch});
      b.weight(pre + "cab.excite", {ch, hid});
      prev = ch;
    }
    b.weight("map.w", {cfg.gem_dim(0), prev, 1, 1});
    b.bias("map.b", cfg.gem_dim(0));
  }
  {
    ParamBuilder b{mp.gem, Rng(mix_seed(seed, 2))};
    for (size_t l = 0; l < cfg.gem_dims.size(); ++l) {
      const int64_t din = cfg.gem_dim(l == 0 ? 0 : l - 1);
      const int64_t dout = cfg.gem_dim(l);
      for (int g = 0; g < cfg.heads; ++g) {
        const std::string pre =
            "layer" + std::to_string(l) + ".head" + std::to_string(g) + ".";
        b.weight(pre + "w", {dout, din});
        b.weight(pre + "a", {2 * dout});
      }
    }
  }
  {
    ParamBuilder b{mp.decoder, Rng(mix_seed(seed, 3))};
    const int64_t top = cfg.enc_dim(cfg.enc_dims.size() - 1);
    b.weight("map.w", {top, cfg.gem_dim(cfg.gem_dims.size() - 1), 1, 1});
    b.bias("map.b", top);
    int64_t prev = top;
    const auto chans = decoder_channels(cfg);
    for (size_t i = 0; i < chans.size(); ++i) {
      const std::string pre = "block" + std::to_string(i) + ".";
      b.weight(pre + "deconv.w", {prev, chans[i], 4, 4});
      b.bias(pre + "deconv.b", chans[i]);
      b.weight(pre + "conv1.w", {chans[i], chans[i], 3, 3});
      b.bias(pre + "conv1.b", chans[i]);
      b.weight(pre + "conv2.w", {chans[i], chans[i], 3, 3});
      b.bias(pre + "conv2.b", chans[i]);
      prev = chans[i];
    }
    b.weight("out.w", {1, prev, 1, 1});
    b.bias("out.b", 1);
  }
  {
    ParamBuilder b{mp.projection, Rng(mix_seed(seed, 4))};
    const int64_t d = cfg.gem_dim(cfg.gem_dims.size() - 1);
    b.weight("w1", {d, d});
    b.weight("w2", {cfg.proj_out(), d});
  }
  build_disc(mp.quality_disc, mix_seed(seed, 5), cfg, 1);
  build_disc(mp.pair_disc, mix_seed(seed, 6), cfg, 2);
  return mp;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::all() {
  std::vector<std::pair<std::string, Tensor*>> out;
  const std::pair<const char*, ParamMap*> groups[] = {
      {"encoder/", &encoder},          {"gem/", &gem},
      {"decoder/", &decoder},          {"projection/", &projection},
      {"quality_disc/", &quality_disc}, {"pair_disc/", &pair_disc}};
  for (const auto& [prefix, map] : groups)
    for (auto& [name, tensor] : *map) out.emplace_back(prefix + name, &tensor);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::all() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  const std::pair<const char*, const ParamMap*> groups[] = {
      {"encoder/", &encoder},          {"gem/", &gem},
      {"decoder/", &decoder},          {"projection/", &projection},
      {"quality_disc/", &quality_disc}, {"pair_disc/", &pair_disc}};
  for (const auto& [prefix, map] : groups)
    for (const auto& [name, tensor] : *map)
      out.emplace_back(prefix + name, &tensor);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::generator_side() {
  std::vector<std::pair<std::string, Tensor*>> out;
  const std::pair<const char*, ParamMap*> groups[] = {
      {"encoder/", &encoder},
      {"gem/", &gem},
      {"decoder/", &decoder},
      {"projection/", &projection}};
  for (const auto& [prefix, map] : groups)
    for (auto& [name, tensor] : *map) out.emplace_back(prefix + name, &tensor);
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::discriminator_side() {
  std::vector<std::pair<std::string, Tensor*>> out;
  const std::pair<const char*, ParamMap*> groups[] = {
      {"quality_disc/", &quality_disc}, {"pair_disc/", &pair_disc}};
  for (const auto& [prefix, map] : groups)
    for (auto& [name, tensor] : *map) out.emplace_back(prefix + name, &tensor);
  return out;
}

Tensor cab_forward(const Tensor& f, const Tensor& w_squeeze,
                   const Tensor& w_excite) {
  check_dim(f.ndim() == 3, "cab: expected [C,H,W]");
  Tensor pooled = global_avg_pool(f);
  Tensor gate = sigmoid(linear(relu(linear(pooled, w_squeeze)), w_excite));
  return scale_channels(f, gate);
}

Tensor enc_block_forward(const Tensor& x, const ParamMap& p,
                         const std::string& prefix) {
  Tensor h = relu(conv2d(x, p.at(prefix + "conv1.w"), p.at(prefix + "conv1.b"),
                         1, 1));
  h = relu(conv2d(h, p.at(prefix + "conv2.w"), p.at(prefix + "conv2.b"), 1, 1));
  h = cab_forward(h, p.at(prefix + "cab.squeeze"), p.at(prefix + "cab.excite"));
  return maxpool2d(h, 2);
}

Tensor encoder_forward(const Tensor& x, const ParamMap& p,
                       const ArchConfig& cfg) {
  cfg.validate();
  check_dim(x.ndim() == 3 && x.dim(0) == cfg.in_channels() &&
                x.dim(1) == cfg.input_h && x.dim(2) == cfg.input_w,
            "encoder: input stack does not match configuration");
  Tensor h = x;
  for (size_t i = 0; i < cfg.enc_dims.size(); ++i)
    h = enc_block_forward(h, p, "block" + std::to_string(i) + ".");
  return conv2d(h, p.at("map.w"), p.at("map.b"), 1, 0);
}

Tensor normalized_adjacency(int64_t p) {
  check_arg(p >= 1, "adjacency: need at least one vertex");
  return Tensor::full({p, p}, Real(1.0) / Real(p));
}

Tensor gcn_propagate(const Tensor& h, const Tensor& w, int64_t p) {
  check_dim(h.ndim() == 2 && h.dim(0) == p, "gcn: vertex matrix mismatch");
  return mish(matmul(matmul(normalized_adjacency(p), h), w));
}

Tensor gat_attention(const Tensor& h, const Tensor& w, const Tensor& a) {
  check_dim(h.ndim() == 2 && w.ndim() == 2 && a.ndim() == 1,
            "gat: bad operand ranks");
  const int64_t dout = w.dim(0);
  check_dim(a.dim(0) == 2 * dout, "gat: attention vector must have 2*d_out");
  const int64_t p = h.dim(0);
  Tensor u = linear(h, w);  // [P, d_out]
  Tensor s1 = reshape(linear(u, reshape(slice0(a, 0, dout), {1, dout})), {p});
  Tensor s2 =
      reshape(linear(u, reshape(slice0(a, dout, dout), {1, dout})), {p});
  return softmax(leaky_relu(outer_sum(s1, s2), Real(0.2)), 1);
}

Tensor gat_layer_forward(const Tensor& h, const ParamMap& p,
                         const std::string& prefix, int heads) {
  check_arg(heads >= 1, "gat: need at least one head");
  Tensor acc;
  for (int g = 0; g < heads; ++g) {
    const std::string pre = prefix + "head" + std::to_string(g) + ".";
    const Tensor& w = p.at(pre + "w");
    const Tensor& a = p.at(pre + "a");
    Tensor gamma = gat_attention(h, w, a);
    Tensor m = matmul(gamma, linear(h, w));
    acc = acc.defined() ? add(acc, m) : m;
  }
  return mish(mul_scalar(acc, Real(1.0) / Real(heads)));
}

Tensor gem_forward(const Tensor& f, const ParamMap& p, const ArchConfig& cfg) {
  check_dim(f.ndim() == 3, "gem: expected [d,h,w]");
  const int64_t d = f.dim(0), hh = f.dim(1), ww = f.dim(2);
  check_dim(d == cfg.gem_dim(0), "gem: channel width mismatch");
  Tensor vertices = transpose2d(reshape(f, {d, hh * ww}));  // [P, d]
  for (size_t l = 0; l < cfg.gem_dims.size(); ++l)
    vertices = gat_layer_forward(vertices, p, "layer" + std::to_string(l) + ".",
                                 cfg.heads);
  return reshape(transpose2d(vertices), {d, hh, ww});
}

Tensor decoder_forward(const Tensor& f, const ParamMap& p,
                       const ArchConfig& cfg) {
  check_dim(f.ndim() == 3, "decoder: expected [d,h,w]");
  if (f.dim(0) != cfg.gem_dim(cfg.gem_dims.size() - 1))
    throw ConfigError("decoder: latent width " + std::to_string(f.dim(0)) +
                      " does not match configuration");
  Tensor h = conv2d(f, p.at("map.w"), p.at("map.b"), 1, 0);
  const auto chans = decoder_channels(cfg);
  for (size_t i = 0; i < chans.size(); ++i) {
    const std::string pre = "block" + std::to_string(i) + ".";
    h = relu(conv_transpose2d(h, p.at(pre + "deconv.w"),
                              p.at(pre + "deconv.b"), 2));
    h = relu(conv2d(h, p.at(pre + "conv1.w"), p.at(pre + "conv1.b"), 1, 1));
    h = relu(conv2d(h, p.at(pre + "conv2.w"), p.at(pre + "conv2.b"), 1, 1));
  }
  return tanh(conv2d(h, p.at("out.w"), p.at("out.b"), 1, 0));
}

Tensor projection_head(const Tensor& f, const Tensor& w1, const Tensor& w2) {
  return linear(relu(linear(global_avg_pool(f), w1)), w2);
}

PredictOut generator_predict(const Tensor& x_stack, const ModelParams& mp,
                             const ArchConfig& cfg, bool use_gem) {
  PredictOut out;
  out.f_in = encoder_forward(x_stack, mp.encoder, cfg);
  out.f_pred = use_gem ? gem_forward(out.f_in, mp.gem, cfg) : out.f_in;
  out.image = decoder_forward(out.f_pred, mp.decoder, cfg);
  return out;
}

ReconstructOut generator_reconstruct(const Tensor& x_stack,
                                     const ModelParams& mp,
                                     const ArchConfig& cfg) {
  ReconstructOut out;
  out.f = encoder_forward(x_stack, mp.encoder, cfg);
  out.image = decoder_forward(out.f, mp.decoder, cfg);
  return out;
}

Tensor discriminator_forward(const Tensor& img, const ParamMap& p) {
  check_dim(img.ndim() == 3, "discriminator: expected [c,H,W]");
  check_dim(img.dim(0) == p.at("conv0.w").dim(1),
            "discriminator: channel count does not match this stack");
  Tensor h = img;
  for (int i = 0; i < 4; ++i) {
    const std::string n = "conv" + std::to_string(i);
    h = leaky_relu(
        conv2d(h, p.at(n + ".w"), p.at(n + ".b"), i < 3 ? 2 : 1, 1),
        Real(0.2));
  }
  return sigmoid(conv2d(h, p.at("conv4.w"), p.at("conv4.b"), 1, 1));
}

}  // namespace octevo
