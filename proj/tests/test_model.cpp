#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "aunet/model.hpp"

using namespace aunet;
using Catch::Approx;

namespace {

Tensor<double> random_images(int b, int size, Rng& rng) {
  Tensor<double> x(b, 3, size, size);
  for (auto& v : x.v) v = rng.uniform(0, 1);
  return x;
}

ModelConfig tiny_config(int image = 16, int n_aus = 2, int ch = 8, int df = 16) {
  ModelConfig c;
  c.image_size = image;
  c.n_aus = n_aus;
  c.encoder_channels = ch;
  c.downsample_factor = df;
  return c;
}

}  // namespace

TEST_CASE("config validation", "[model]") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.image_size = 60;  // not a multiple of 16
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.n_aus = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.embed_dim = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.downsample_factor = 12;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny_config();
  c.mask_activation = MaskActivation::kTanh;
  CHECK(!c.warnings().empty());
  CHECK(mask_activation_from_string("softmax") == MaskActivation::kSoftmax);
  CHECK_THROWS_AS(mask_activation_from_string("swish"), ConfigError);
  CHECK_THROWS_AS(variant_from_string("bogus"), ConfigError);
}

TEST_CASE("classifier depth and channel schedule", "[model]") {
  CHECK(classifier_channels(256) == std::vector<int>{16, 32, 64, 128, 256});
  CHECK(classifier_channels(64) == std::vector<int>{64, 128, 256});
  CHECK(classifier_channels(16) == std::vector<int>{256});
  CHECK(classifier_channels(4) == std::vector<int>{256});
  CHECK(classifier_block_count(64) == 3);
  CHECK_THROWS_AS(classifier_block_count(1), ConfigError);
}

TEST_CASE("encoder output shape and embedding contract", "[model]") {
  // config(64, df=16, C=64): image 3x64x64 -> 64x4x4
  ModelConfig c = tiny_config(64, 4, 64, 16);
  AuNet<double> net(c);
  net.init(11);
  net.set_training(false);
  Rng rng(42);
  auto imgs = random_images(2, 64, rng);
  auto h = net.encoder.features(imgs);
  CHECK(h.n == 2);
  CHECK(h.c == 64);
  CHECK(h.h == 4);
  CHECK(h.w == 4);

  // zero image -> finite output of correct shape
  Tensor<double> zero(1, 3, 64, 64);
  auto hz = net.encoder.features(zero);
  CHECK(hz.all_finite());

  auto emb = net.encoder.embed(imgs);
  CHECK(emb.c == c.embed_dim);
  for (int b = 0; b < emb.n; ++b) {
    double norm = 0;
    for (int i = 0; i < emb.c; ++i) norm += emb.at(b, i, 0, 0) * emb.at(b, i, 0, 0);
    CHECK(std::sqrt(norm) == Approx(1.0).margin(1e-6));
  }

  // identical images give identical embeddings
  auto e1 = net.encoder.embed(zero);
  auto e2 = net.encoder.embed(zero);
  CHECK(e1.v == e2.v);

  // wrong spatial size is a configuration error
  Tensor<double> bad(1, 3, 32, 32);
  CHECK_THROWS_AS(net.encoder.features(bad), ConfigError);
}

TEST_CASE("extractor output counts", "[model]") {
  ModelConfig c = tiny_config(64, 4, 64, 16);
  AuNet<double> net(c);
  net.init(3);
  net.set_training(false);
  Rng rng(1);
  auto h = net.encoder.features(random_images(1, 64, rng));
  auto f = net.feature_extractor.forward(h);
  CHECK(f.c == 3 * 5);  // N+1 maps of 3 channels
  CHECK(f.h == 64);
  auto m = net.mask_extractor.forward(h);
  CHECK(m.c == 5);
  CHECK(m.h == 64);
}

TEST_CASE("mask activation ranges", "[model]") {
  Rng rng(9);
  for (auto act : {MaskActivation::kSigmoid, MaskActivation::kSoftmax,
                   MaskActivation::kTanh, MaskActivation::kNone}) {
    ModelConfig c = tiny_config(16, 3, 8, 8);
    c.mask_activation = act;
    AuNet<double> net(c);
    net.init(17);
    net.set_training(false);
    auto out = net.forward(random_images(2, 16, rng));
    const auto& m = out.masks;
    REQUIRE(m.c == 4);
    if (act == MaskActivation::kSigmoid) {
      for (auto v : m.v) REQUIRE((v > 0.0 && v < 1.0));
    } else if (act == MaskActivation::kTanh) {
      for (auto v : m.v) REQUIRE((v > -1.0 && v < 1.0));
    } else if (act == MaskActivation::kSoftmax) {
      for (int b = 0; b < m.n; ++b)
        for (int y = 0; y < m.h; ++y)
          for (int x = 0; x < m.w; ++x) {
            double s = 0;
            for (int k = 0; k < m.c; ++k) s += m.at(b, k, y, x);
            REQUIRE(s == Approx(1.0).margin(1e-5));
          }
    }
  }
}

TEST_CASE("softmax masks are uniform for equal logits", "[model]") {
  // all-equal pre-activation values at a pixel: each mask gets 1/(N+1)
  nn::SoftmaxChannel<double> sm;
  Tensor<double> logits(1, 5, 2, 2);
  logits.fill(0.7);
  auto y = sm.forward(logits);
  for (auto v : y.v) CHECK(v == Approx(0.2).margin(1e-12));
}

TEST_CASE("apply_masks semantics", "[model]") {
  // identity and annihilation
  Rng rng(12);
  Tensor<double> f(2, 6, 4, 4);
  for (auto& v : f.v) v = rng.uniform(-1, 1);
  Tensor<double> ones(2, 2, 4, 4);
  ones.fill(1.0);
  auto id = apply_masks(f, ones);
  CHECK(id.v == f.v);
  Tensor<double> zeros(2, 2, 4, 4);
  auto z = apply_masks(f, zeros);
  for (auto v : z.v) CHECK(v == 0.0);

  // direct elementwise example: f=[[2,4],[6,8]], m=[[0.5,0.25],[1,0]] -> [[1,1],[6,0]]
  Tensor<double> f1(1, 3, 2, 2);
  Tensor<double> m1(1, 1, 2, 2);
  for (int j = 0; j < 3; ++j) {
    f1.at(0, j, 0, 0) = 2;
    f1.at(0, j, 0, 1) = 4;
    f1.at(0, j, 1, 0) = 6;
    f1.at(0, j, 1, 1) = 8;
  }
  m1.at(0, 0, 0, 0) = 0.5;
  m1.at(0, 0, 0, 1) = 0.25;
  m1.at(0, 0, 1, 0) = 1.0;
  m1.at(0, 0, 1, 1) = 0.0;
  auto c1 = apply_masks(f1, m1);
  for (int j = 0; j < 3; ++j) {
    CHECK(c1.at(0, j, 0, 0) == 1.0);
    CHECK(c1.at(0, j, 0, 1) == 1.0);
    CHECK(c1.at(0, j, 1, 0) == 6.0);
    CHECK(c1.at(0, j, 1, 1) == 0.0);
  }

  // linear in features
  Tensor<double> m(2, 2, 4, 4);
  for (auto& v : m.v) v = rng.uniform(0, 1);
  auto base = apply_masks(f, m);
  Tensor<double> f2 = f;
  for (auto& v : f2.v) v *= 3.5;
  auto scaled = apply_masks(f2, m);
  for (std::size_t i = 0; i < base.v.size(); ++i)
    REQUIRE(scaled.v[i] == Approx(3.5 * base.v[i]).margin(1e-12));

  // mismatched shapes
  Tensor<double> badm(2, 3, 4, 4);
  CHECK_THROWS_AS(apply_masks(f, badm), ConfigError);
}

TEST_CASE("reconstruction head contract", "[model]") {
  ModelConfig c = tiny_config(16, 4, 8, 8);
  AuNet<double> net(c);
  net.init(5);
  net.set_training(false);
  Rng rng(2);
  Tensor<double> comp(1, 15, 16, 16);  // 3*(N+1) channels
  for (auto& v : comp.v) v = rng.uniform(-1, 1);
  auto y = net.reconstructor.forward(comp);
  CHECK(y.c == 3);
  CHECK(y.h == 16);
  CHECK(y.all_finite());
  // missing background channel is a contract error
  Tensor<double> missing(1, 12, 16, 16);
  CHECK_THROWS_AS(net.reconstructor.forward(missing), ConfigError);
}

TEST_CASE("model forward bundles per variant", "[model]") {
  Rng rng(77);
  auto imgs = random_images(2, 16, rng);
  for (auto variant : {Variant::kFull, Variant::kNoMask, Variant::kNoLam,
                       Variant::kCnnReplace}) {
    ModelConfig c = tiny_config(16, 2, 8, 8);
    c.variant = variant;
    AuNet<double> net(c);
    net.init(99);
    net.set_training(false);
    auto out = net.forward(imgs);
    CHECK(out.probs.n == 2);
    CHECK(out.probs.c == 2);
    for (auto p : out.probs.v) REQUIRE((p > 0.0 && p < 1.0));
    CHECK(out.embeddings.h == kAuEmbedDim);
    if (variant == Variant::kNoLam) {
      CHECK(!out.has_masks());
      CHECK(!out.has_recon());
    } else if (variant == Variant::kNoMask) {
      CHECK(!out.has_masks());
      CHECK(out.has_recon());
      CHECK(out.recon.h == 16);
    } else {
      CHECK(out.has_masks());
      CHECK(out.has_recon());
      CHECK(out.masks.c == 3);
    }
  }
}

TEST_CASE("shape closure over randomized configs", "[model][property]") {
  Rng rng(2024);
  const MaskActivation acts[] = {MaskActivation::kSigmoid, MaskActivation::kSoftmax,
                                 MaskActivation::kTanh, MaskActivation::kNone};
  const Variant variants[] = {Variant::kFull, Variant::kNoMask, Variant::kNoLam,
                              Variant::kCnnReplace};
  for (int it = 0; it < 25; ++it) {
    ModelConfig c;
    c.downsample_factor = 4 << rng.below(2);                       // 4 or 8
    c.image_size = c.downsample_factor * (2 + int(rng.below(3)));  // small multiples
    c.n_aus = 1 + int(rng.below(5));
    c.encoder_channels = 8 << rng.below(2);
    c.embed_dim = 2 + int(rng.below(15));
    c.mask_activation = acts[rng.below(4)];
    c.variant = variants[rng.below(4)];
    CAPTURE(c.image_size, c.n_aus, c.encoder_channels, c.downsample_factor,
            int(c.variant), int(c.mask_activation));
    AuNet<double> net(c);
    net.init(1000 + it);
    net.set_training(false);
    auto out = net.forward(random_images(1 + int(rng.below(2)), c.image_size, rng));
    REQUIRE(out.h.c == c.encoder_channels);
    REQUIRE(out.h.h == c.encoder_size());
    REQUIRE(out.logits.c == c.n_aus);
    REQUIRE(out.probs.c == c.n_aus);
    REQUIRE(out.embeddings.c == c.n_aus);
    REQUIRE(out.embeddings.h == kAuEmbedDim);
    if (c.variant != Variant::kNoLam) {
      REQUIRE(out.features.c == 3 * (c.n_aus + 1));
      REQUIRE(out.features.h == c.image_size);
      REQUIRE(out.recon.c == 3);
      REQUIRE(out.recon.h == c.image_size);
    }
    if (net.has_mask_extractor()) {
      REQUIRE(out.masks.c == c.n_aus + 1);
      REQUIRE(out.masks.h == c.image_size);
    }
    REQUIRE(out.probs.all_finite());
  }
}

TEST_CASE("forward determinism in eval mode", "[model]") {
  ModelConfig c = tiny_config(16, 2, 8, 8);
  AuNet<double> net(c);
  net.init(31);
  net.set_training(false);
  Rng rng(5);
  auto imgs = random_images(2, 16, rng);
  auto o1 = net.forward(imgs);
  auto o2 = net.forward(imgs);
  CHECK(o1.probs.v == o2.probs.v);
  CHECK(o1.recon.v == o2.recon.v);
  CHECK(o1.masks.v == o2.masks.v);
}

TEST_CASE("per-AU classifiers are independent", "[model]") {
  // Evaluation order of (component, classifier) pairs does not matter and the
  // classifiers share no parameters.
  ModelConfig c = tiny_config(16, 3, 8, 8);
  AuNet<double> net(c);
  net.init(8);
  net.set_training(false);
  Rng rng(6);
  Tensor<double> comp_a(1, 3, 16, 16), comp_b(1, 3, 16, 16);
  for (auto& v : comp_a.v) v = rng.uniform(0, 1);
  for (auto& v : comp_b.v) v = rng.uniform(0, 1);

  auto la0 = net.classifiers[0].forward(comp_a).second.at(0, 0);
  auto lb1 = net.classifiers[1].forward(comp_b).second.at(0, 0);
  // permute evaluation order
  auto lb1_again = net.classifiers[1].forward(comp_b).second.at(0, 0);
  auto la0_again = net.classifiers[0].forward(comp_a).second.at(0, 0);
  CHECK(la0 == la0_again);
  CHECK(lb1 == lb1_again);
  // distinct parameters: same input gives different logits per classifier
  auto l0 = net.classifiers[0].forward(comp_a).second.at(0, 0);
  auto l1 = net.classifiers[1].forward(comp_a).second.at(0, 0);
  CHECK(l0 != l1);
}

TEST_CASE("classifier probability and logit relation", "[model]") {
  // logit 0 -> probability 0.5
  CHECK(nn::sigmoid_scalar(0.0) == 0.5);
  ModelConfig c = tiny_config(16, 1, 8, 8);
  AuNet<double> net(c);
  net.init(21);
  net.set_training(false);
  Rng rng(3);
  auto out = net.forward(random_images(3, 16, rng));
  for (int b = 0; b < 3; ++b)
    CHECK(out.probs.at(b, 0) ==
          Approx(nn::sigmoid_scalar(out.logits.at(b, 0))).margin(1e-15));
}

TEST_CASE("no_lam rejects too-small encoder grids", "[model]") {
  ModelConfig c = tiny_config(16, 2, 8, 16);  // encoder size 1
  c.variant = Variant::kNoLam;
  CHECK_THROWS_AS(AuNet<double>(c), ConfigError);
}
