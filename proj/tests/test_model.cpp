#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "octevo/errors.hpp"
#include "octevo/model.hpp"
#include "octevo/rng.hpp"
#include "test_support.hpp"

using namespace octevo;
using octevo::testing::rnd;
using octevo::testing::rnd_away;

namespace {

ArchConfig toy_cfg() {
  ArchConfig cfg;
  cfg.input_h = cfg.input_w = 64;
  cfg.toy_scale = 16;
  return cfg;
}

double mish_scalar(double x) { return x * std::tanh(std::log1p(std::exp(x))); }

}  // namespace

TEST_CASE("arch config arithmetic and validation") {
  ArchConfig full;
  CHECK(full.enc_dim(4) == 2048);
  CHECK(full.gem_dim(0) == 1024);
  CHECK(full.latent_h() == 16);
  CHECK(full.latent_w() == 16);
  CHECK(full.vertices() == 256);
  CHECK(full.in_channels() == 3);
  CHECK_NOTHROW(full.validate());

  ArchConfig toy = toy_cfg();
  CHECK(toy.enc_dim(0) == 8);
  CHECK(toy.enc_dim(4) == 128);
  CHECK(toy.gem_dim(0) == 64);
  CHECK(toy.proj_out() == 8);
  CHECK(toy.latent_h() == 2);
  CHECK(toy.vertices() == 4);

  ArchConfig bad = toy;
  bad.input_h = 65;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = toy;
  bad.heads = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  ArchConfig round = ArchConfig::deserialize(toy.serialize());
  CHECK(round.input_h == 64);
  CHECK(round.toy_scale == 16);
  CHECK(round.enc_dims == toy.enc_dims);
  CHECK(round.gem_dims == toy.gem_dims);
  CHECK(round.heads == toy.heads);
  CHECK(round.use_gem == 1);
  ArchConfig ablated = toy;
  ablated.use_gem = 0;
  CHECK(ArchConfig::deserialize(ablated.serialize()).use_gem == 0);
  CHECK_THROWS_AS(ArchConfig::deserialize("bogus"), IoError);
}

TEST_CASE("cab_forward") {
  Rng r(601);
  Tensor f = rnd({4, 3, 3}, r);
  Tensor wz = Tensor::zeros({2, 4});
  Tensor ez = Tensor::zeros({4, 2});
  Tensor half = cab_forward(f, wz, ez);
  for (int64_t i = 0; i < f.numel(); ++i)
    CHECK(double(half.data()[i]) ==
          doctest::Approx(0.5 * double(f.data()[i])).epsilon(1e-12));

  // 2-channel case against a scalar transcription of the gate formula
  Tensor f2 = rnd({2, 2, 2}, r);
  Tensor ws = rnd({1, 2}, r);
  Tensor we = rnd({2, 1}, r);
  Tensor out = cab_forward(f2, ws, we);
  double g[2] = {0, 0};
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 4; ++i) g[c] += double(f2.data()[c * 4 + i]) / 4.0;
  const double hidden =
      std::max(0.0, g[0] * double(ws.data()[0]) + g[1] * double(ws.data()[1]));
  for (int c = 0; c < 2; ++c) {
    const double s = 1.0 / (1.0 + std::exp(-double(we.data()[c]) * hidden));
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    for (int i = 0; i < 4; ++i)
      CHECK(double(out.data()[c * 4 + i]) ==
            doctest::Approx(double(f2.data()[c * 4 + i]) * s).epsilon(1e-10));
  }

  auto rep = grad_check(
      [](const std::vector<Tensor>& in) {
        return sum(cab_forward(in[0], in[1], in[2]));
      },
      {rnd_away({3, 4, 4}, r), rnd_away({2, 3}, r), rnd_away({3, 2}, r)});
  INFO(rep.worst);
  CHECK(rep.pass);
}

TEST_CASE("enc_block_forward") {
  ArchConfig toy = toy_cfg();
  ModelParams mp = init_model_params(toy, 7);
  Rng r(607);
  Tensor x = rnd({3, 64, 64}, r);
  Tensor y = enc_block_forward(x, mp.encoder, "block0.");
  CHECK(y.shape() == Shape{8, 32, 32});

  Tensor zero = Tensor::zeros({3, 64, 64});
  Tensor yz = enc_block_forward(zero, mp.encoder, "block0.");
  for (int64_t i = 0; i < yz.numel(); ++i) CHECK(yz.data()[i] == Real(0));

  // tiny block, O(1) weights so finite differences stay clear of kinks
  ParamMap p;
  Rng rr(613);
  p.emplace("t.conv1.w", rnd_away({2, 2, 3, 3}, rr, 0.3));
  p.emplace("t.conv1.b", rnd_away({2}, rr, 0.3));
  p.emplace("t.conv2.w", rnd_away({2, 2, 3, 3}, rr, 0.3));
  p.emplace("t.conv2.b", rnd_away({2}, rr, 0.3));
  p.emplace("t.cab.squeeze", rnd_away({1, 2}, rr, 0.3));
  p.emplace("t.cab.excite", rnd_away({2, 1}, rr, 0.3));
  std::vector<Tensor> inputs{rnd_away({2, 8, 8}, rr, 0.3)};
  std::vector<std::string> names;
  for (auto& [k, v] : p) {
    names.push_back(k);
    inputs.push_back(v);
  }
  auto rep = grad_check(
      [&names](const std::vector<Tensor>& in) {
        ParamMap q;
        for (size_t i = 0; i < names.size(); ++i)
          q.emplace(names[i], in[i + 1]);
        return sum(enc_block_forward(in[0], q, "t."));
      },
      inputs);
  INFO(rep.worst);
  CHECK(rep.pass);
}

TEST_CASE("encoder_forward") {
  ArchConfig toy = toy_cfg();
  ModelParams mp = init_model_params(toy, 11);
  Rng r(617);
  Tensor x = rnd({3, 64, 64}, r);
  Tensor f = encoder_forward(x, mp.encoder, toy);
  CHECK(f.shape() == Shape{64, 2, 2});

  // same seed, fresh params: bitwise identical output
  ModelParams mp2 = init_model_params(toy, 11);
  Tensor f2 = encoder_forward(x, mp2.encoder, toy);
  CHECK(std::memcmp(f.data(), f2.data(), sizeof(Real) * f.numel()) == 0);

  CHECK_THROWS_AS(encoder_forward(rnd({2, 64, 64}, r), mp.encoder, toy),
                  DimensionError);
}

TEST_CASE("normalized_adjacency") {
  Tensor a1 = normalized_adjacency(1);
  CHECK(a1.shape() == Shape{1, 1});
  CHECK(a1.item() == doctest::Approx(1.0));

  Tensor a4 = normalized_adjacency(4);
  for (int64_t i = 0; i < 16; ++i)
    CHECK(a4.data()[i] == doctest::Approx(0.25));

  for (int64_t p : {2, 3, 7}) {
    Tensor a = normalized_adjacency(p);
    for (int64_t row = 0; row < p; ++row) {
      double s = 0;
      for (int64_t cc = 0; cc < p; ++cc) s += a.data()[row * p + cc];
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("gcn_propagate") {
  // identical rows are a fixed point of uniform averaging
  Tensor h = Tensor::from({3, 2}, {0.4, -0.7, 0.4, -0.7, 0.4, -0.7});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor y = gcn_propagate(h, eye, 3);
  for (int64_t row = 0; row < 3; ++row) {
    CHECK(double(y.data()[row * 2 + 0]) ==
          doctest::Approx(mish_scalar(0.4)).epsilon(1e-10));
    CHECK(double(y.data()[row * 2 + 1]) ==
          doctest::Approx(mish_scalar(-0.7)).epsilon(1e-10));
  }

  Tensor h2 = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor y2 = gcn_propagate(h2, eye, 2);
  for (int64_t i = 0; i < 4; ++i)
    CHECK(double(y2.data()[i]) ==
          doctest::Approx(mish_scalar(0.5)).epsilon(1e-10));

  Rng r(619);
  auto rep = grad_check(
      [](const std::vector<Tensor>& in) {
        return sum(gcn_propagate(in[0], in[1], 4));
      },
      {rnd_away({4, 3}, r, 0.3), rnd_away({3, 2}, r, 0.3)});
  INFO(rep.worst);
  CHECK(rep.pass);
}

TEST_CASE("gat_attention") {
  // identical vertices: every attention row uniform
  Tensor same = Tensor::from({3, 2}, {0.3, 1.1, 0.3, 1.1, 0.3, 1.1});
  Rng r(631);
  Tensor w = rnd_away({2, 2}, r, 0.3);
  Tensor a = rnd_away({4}, r, 0.3);
  Tensor g = gat_attention(same, w, a);
  for (int64_t i = 0; i < 9; ++i)
    CHECK(double(g.data()[i]) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor one = rnd({1, 2}, r);
  Tensor g1 = gat_attention(one, w, a);
  CHECK(g1.shape() == Shape{1, 1});
  CHECK(g1.item() == doctest::Approx(1.0));

  // P=2 hand case against a direct scalar transcription
  Tensor h2 = Tensor::from({2, 2}, {0.7, -0.2, -1.1, 0.9});
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor av = Tensor::from({4}, {1.0, 0.0, 0.5, -0.3});
  Tensor g2 = gat_attention(h2, eye, av);
  auto lrelu = [](double v) { return v > 0 ? v : 0.2 * v; };
  for (int p = 0; p < 2; ++p) {
    double e[2];
    for (int q = 0; q < 2; ++q) {
      const double hp0 = h2.data()[p * 2], hq0 = h2.data()[q * 2],
                   hq1 = h2.data()[q * 2 + 1];
      e[q] = lrelu(1.0 * hp0 + 0.5 * hq0 - 0.3 * hq1);
    }
    const double m = std::max(e[0], e[1]);
    const double z0 = std::exp(e[0] - m), z1 = std::exp(e[1] - m);
    CHECK(double(g2.data()[p * 2 + 0]) ==
          doctest::Approx(z0 / (z0 + z1)).epsilon(1e-10));
    CHECK(double(g2.data()[p * 2 + 1]) ==
          doctest::Approx(z1 / (z0 + z1)).epsilon(1e-10));
  }

  // attention rows always sum to one
  Tensor hr = rnd({5, 3}, r);
  Tensor wr = rnd({4, 3}, r);
  Tensor ar = rnd({8}, r);
  Tensor gr = gat_attention(hr, wr, ar);
  for (int64_t row = 0; row < 5; ++row) {
    double s = 0;
    for (int64_t c = 0; c < 5; ++c) s += gr.data()[row * 5 + c];
    CHECK(std::fabs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("gat_layer_forward") {
  Rng r(641);
  // identical vertices, identity W, single head: mish of the shared vector
  ParamMap p;
  p.emplace("L.head0.w", Tensor::from({2, 2}, {1, 0, 0, 1}));
  p.emplace("L.head0.a", rnd_away({4}, r, 0.3));
  Tensor same = Tensor::from({3, 2}, {0.25, -0.6, 0.25, -0.6, 0.25, -0.6});
  Tensor y = gat_layer_forward(same, p, "L.", 1);
  for (int64_t row = 0; row < 3; ++row) {
    CHECK(double(y.data()[row * 2 + 0]) ==
          doctest::Approx(mish_scalar(0.25)).epsilon(1e-10));
    CHECK(double(y.data()[row * 2 + 1]) ==
          doctest::Approx(mish_scalar(-0.6)).epsilon(1e-10));
  }

  // identical vertices collapse attention to uniform averaging
  ParamMap p2;
  Tensor wg = rnd_away({2, 2}, r, 0.3);
  p2.emplace("L.head0.w", wg);
  p2.emplace("L.head0.a", rnd_away({4}, r, 0.3));
  Tensor viaGat = gat_layer_forward(same, p2, "L.", 1);
  Tensor viaGcn = gcn_propagate(same, transpose2d(wg), 3);
  for (int64_t i = 0; i < viaGat.numel(); ++i)
    CHECK(std::fabs(double(viaGat.data()[i]) - double(viaGcn.data()[i])) <
          1e-9);

  // gradient check: P=4, d=3, two heads
  ParamMap p3;
  std::vector<std::string> names;
  std::vector<Tensor> inputs{rnd_away({4, 3}, r, 0.3)};
  for (int g = 0; g < 2; ++g) {
    p3.emplace("L.head" + std::to_string(g) + ".w", rnd_away({3, 3}, r, 0.3));
    p3.emplace("L.head" + std::to_string(g) + ".a", rnd_away({6}, r, 0.3));
  }
  for (auto& [k, v] : p3) {
    names.push_back(k);
    inputs.push_back(v);
  }
  auto rep = grad_check(
      [&names](const std::vector<Tensor>& in) {
        ParamMap q;
        for (size_t i = 0; i < names.size(); ++i)
          q.emplace(names[i], in[i + 1]);
        return sum(gat_layer_forward(in[0], q, "L.", 2));
      },
      inputs);
  INFO(rep.worst);
  CHECK(rep.pass);
}

TEST_CASE("gem_forward") {
  ArchConfig toy = toy_cfg();
  ModelParams mp = init_model_params(toy, 13);
  Rng r(643);
  Tensor f = rnd({64, 2, 2}, r);
  Tensor y = gem_forward(f, mp.gem, toy);
  CHECK(y.shape() == Shape{64, 2, 2});

  Tensor y2 = gem_forward(f, mp.gem, toy);
  CHECK(std::memcmp(y.data(), y2.data(), sizeof(Real) * y.numel()) == 0);

  // permutation equivariance over the four vertices
  const int perm[4] = {2, 0, 3, 1};
  Tensor fp = Tensor::raw({64, 2, 2});
  for (int64_t c = 0; c < 64; ++c)
    for (int v = 0; v < 4; ++v)
      fp.data()[c * 4 + v] = f.data()[c * 4 + perm[v]];
  Tensor yp = gem_forward(fp, mp.gem, toy);
  for (int64_t c = 0; c < 64; ++c)
    for (int v = 0; v < 4; ++v)
      CHECK(std::fabs(double(yp.data()[c * 4 + v]) -
                      double(y.data()[c * 4 + perm[v]])) < 1e-9);
}

TEST_CASE("decoder_forward and projection_head") {
  ArchConfig toy = toy_cfg();
  ModelParams mp = init_model_params(toy, 17);
  Rng r(647);
  Tensor f = rnd({64, 2, 2}, r);
  Tensor img = decoder_forward(f, mp.decoder, toy);
  CHECK(img.shape() == Shape{1, 64, 64});
  for (int64_t i = 0; i < img.numel(); ++i) {
    CHECK(img.data()[i] >= Real(-1));
    CHECK(img.data()[i] <= Real(1));
  }
  CHECK_THROWS_AS(decoder_forward(rnd({32, 2, 2}, r), mp.decoder, toy),
                  ConfigError);

  // projection: identity weights pass ones through; zeros map to zero
  Tensor ones = Tensor::full({3, 2, 2}, 1);
  Tensor eye3 = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor z = projection_head(ones, eye3, eye3);
  REQUIRE(z.shape() == Shape{3});
  for (int i = 0; i < 3; ++i) CHECK(z.data()[i] == doctest::Approx(1.0));

  Tensor zz = projection_head(Tensor::zeros({3, 2, 2}), eye3, eye3);
  for (int i = 0; i < 3; ++i) CHECK(zz.data()[i] == doctest::Approx(0.0));

  // random case against explicit two-matrix evaluation
  Tensor fr = rnd({3, 2, 2}, r);
  Tensor w1 = rnd({4, 3}, r), w2 = rnd({2, 4}, r);
  Tensor got = projection_head(fr, w1, w2);
  double pooled[3];
  for (int c = 0; c < 3; ++c) {
    pooled[c] = 0;
    for (int i = 0; i < 4; ++i) pooled[c] += double(fr.data()[c * 4 + i]) / 4;
  }
  double hid[4];
  for (int o = 0; o < 4; ++o) {
    hid[o] = 0;
    for (int c = 0; c < 3; ++c)
      hid[o] += double(w1.data()[o * 3 + c]) * pooled[c];
    hid[o] = std::max(0.0, hid[o]);
  }
  for (int o = 0; o < 2; ++o) {
    double want = 0;
    for (int i = 0; i < 4; ++i)
      want += double(w2.data()[o * 4 + i]) * hid[i];
    CHECK(double(got.data()[o]) == doctest::Approx(want).epsilon(1e-10));
  }

  auto rep = grad_check(
      [](const std::vector<Tensor>& in) {
        return sum(projection_head(in[0], in[1], in[2]));
      },
      {rnd_away({3, 2, 2}, r, 0.3), rnd_away({4, 3}, r, 0.3),
       rnd_away({2, 4}, r, 0.3)});
  INFO(rep.worst);
  CHECK(rep.pass);
}

TEST_CASE("generator pipelines") {
  ArchConfig toy = toy_cfg();
  ModelParams mp = init_model_params(toy, 19);
  Rng r(653);
  Tensor x = rnd({3, 64, 64}, r);

  PredictOut p = generator_predict(x, mp, toy);
  CHECK(p.image.shape() == Shape{1, 64, 64});
  CHECK(p.f_in.shape() == Shape{64, 2, 2});
  CHECK(p.f_pred.shape() == Shape{64, 2, 2});

  ReconstructOut rec = generator_reconstruct(x, mp, toy);
  CHECK(rec.image.shape() == Shape{1, 64, 64});

  // bypassing the graph module makes the two pipelines coincide
  PredictOut pid = generator_predict(x, mp, toy, false);
  CHECK(std::memcmp(pid.image.data(), rec.image.data(),
                    sizeof(Real) * rec.image.numel()) == 0);

  // encoder weights are physically shared: one mutation moves both outputs
  mp.encoder.at("block0.conv1.w").data()[0] += Real(0.5);
  PredictOut p2 = generator_predict(x, mp, toy);
  ReconstructOut rec2 = generator_reconstruct(x, mp, toy);
  CHECK(std::memcmp(p2.image.data(), p.image.data(),
                    sizeof(Real) * p.image.numel()) != 0);
  CHECK(std::memcmp(rec2.image.data(), rec.image.data(),
                    sizeof(Real) * rec.image.numel()) != 0);
}

TEST_CASE("discriminator_forward") {
  ArchConfig toy = toy_cfg();
  ModelParams mp = init_model_params(toy, 23);
  Rng r(659);

  Tensor img = rnd({1, 64, 64}, r);
  Tensor q = discriminator_forward(img, mp.quality_disc);
  CHECK(q.shape() == Shape{1, 6, 6});
  for (int64_t i = 0; i < q.numel(); ++i) {
    CHECK(q.data()[i] > Real(0));
    CHECK(q.data()[i] < Real(1));
  }

  Tensor pair = rnd({2, 64, 64}, r);
  Tensor pq = discriminator_forward(pair, mp.pair_disc);
  CHECK(pq.shape() == Shape{1, 6, 6});
  CHECK_THROWS_AS(discriminator_forward(pair, mp.quality_disc),
                  DimensionError);

  // full 512x512 spatial arithmetic (thin channels keep it fast)
  ArchConfig wide = toy_cfg();
  wide.input_h = wide.input_w = 512;
  ModelParams mpw = init_model_params(wide, 29);
  Tensor big = rnd({1, 512, 512}, r);
  Tensor qb = discriminator_forward(big, mpw.quality_disc);
  CHECK(qb.shape() == Shape{1, 62, 62});

  // gradient check on a miniature stack
  ParamMap p;
  Rng rr(661);
  std::vector<std::string> names;
  std::vector<Tensor> inputs{rnd_away({1, 32, 32}, rr, 0.3)};
  int64_t prev = 1;
  for (int i = 0; i < 5; ++i) {
    const int64_t ch = i == 4 ? 1 : std::min<int64_t>(2 + i, 4);
    p.emplace("conv" + std::to_string(i) + ".w",
              rnd_away({ch, prev, 4, 4}, rr, 0.3));
    p.emplace("conv" + std::to_string(i) + ".b", rnd_away({ch}, rr, 0.3));
    prev = ch;
  }
  for (auto& [k, v] : p) {
    names.push_back(k);
    inputs.push_back(v);
  }
  auto rep = grad_check(
      [&names](const std::vector<Tensor>& in) {
        ParamMap q2;
        for (size_t i = 0; i < names.size(); ++i)
          q2.emplace(names[i], in[i + 1]);
        return sum(discriminator_forward(in[0], q2));
      },
      inputs);
  INFO(rep.worst);
  CHECK(rep.pass);
}

TEST_CASE("model parameter initialization") {
  ArchConfig toy = toy_cfg();
  ModelParams a = init_model_params(toy, 42);
  ModelParams b = init_model_params(toy, 42);
  ModelParams c = init_model_params(toy, 43);

  auto av = a.all(), bv = b.all(), cv = c.all();
  REQUIRE(av.size() == bv.size());
  REQUIRE(av.size() == cv.size());
  bool any_diff = false;
  for (size_t i = 0; i < av.size(); ++i) {
    CHECK(av[i].first == bv[i].first);
    CHECK(av[i].second->shape() == bv[i].second->shape());
    CHECK(std::memcmp(av[i].second->data(), bv[i].second->data(),
                      sizeof(Real) * av[i].second->numel()) == 0);
    if (std::memcmp(av[i].second->data(), cv[i].second->data(),
                    sizeof(Real) * av[i].second->numel()) != 0)
      any_diff = true;
    CHECK(av[i].second->requires_grad());
  }
  CHECK(any_diff);

  // biases start at zero
  for (auto& [name, t] : av)
    if (name.size() > 2 && name.substr(name.size() - 2) == ".b")
      for (int64_t i = 0; i < t->numel(); ++i)
        CHECK(t->data()[i] == Real(0));

  CHECK(a.generator_side().size() + a.discriminator_side().size() ==
        av.size());
}

TEST_CASE("checkpoint round trip") {
  namespace fs = std::filesystem;
  fs::create_directories("tmp_model");
  ArchConfig toy = toy_cfg();
  ModelParams mp = init_model_params(toy, 31);
  save_checkpoint("tmp_model/ck.bin", toy, mp);

  auto [cfg2, mp2] = load_checkpoint("tmp_model/ck.bin");
  CHECK(cfg2.input_h == 64);
  CHECK(cfg2.toy_scale == 16);
  auto orig = mp.all();
  auto back = mp2.all();
  REQUIRE(orig.size() == back.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == back[i].first);
    REQUIRE(orig[i].second->shape() == back[i].second->shape());
    for (int64_t j = 0; j < orig[i].second->numel(); ++j)
      CHECK(double(back[i].second->data()[j]) ==
            doctest::Approx(double(float(orig[i].second->data()[j])))
                .epsilon(1e-12));
  }

  // loading a checkpoint is value-stable under resave
  save_checkpoint("tmp_model/ck2.bin", cfg2, mp2);
  std::ifstream f1("tmp_model/ck.bin", std::ios::binary);
  std::ifstream f2("tmp_model/ck2.bin", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(s1 == s2);

  // malformed files are rejected
  CHECK_THROWS_AS(load_checkpoint("tmp_model/missing.bin"), IoError);
  {
    std::ofstream bad("tmp_model/bad.bin", std::ios::binary);
    bad << "octevo-ckpt 1\n" << toy.serialize() << "\n1\n";
    bad << "encoder/block0.conv1.w 1 7\n";
    for (int i = 0; i < 7; ++i) {
      float v = 0;
      bad.write(reinterpret_cast<const char*>(&v), 4);
    }
  }
  CHECK_THROWS_AS(load_checkpoint("tmp_model/bad.bin"), IoError);
  {
    std::ofstream trunc("tmp_model/trunc.bin", std::ios::binary);
    trunc << "octevo-ckpt 1\n";
  }
  CHECK_THROWS_AS(load_checkpoint("tmp_model/trunc.bin"), IoError);
}
