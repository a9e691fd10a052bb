#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>

#include "aunet/checkpoint.hpp"
#include "aunet/model.hpp"

using namespace aunet;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

ModelConfig tiny() {
  ModelConfig c;
  c.image_size = 16;
  c.n_aus = 2;
  c.encoder_channels = 8;
  c.downsample_factor = 8;
  return c;
}

}  // namespace

TEST_CASE("checkpoint round-trip is bit-exact", "[checkpoint]") {
  AuNet<float> net(tiny());
  net.init(123);
  auto params = net.params();
  std::string p1 = "ckpt_rt_1.bin", p2 = "ckpt_rt_2.bin";
  ckpt::save(ckpt::from_params(params), p1);
  auto a = ckpt::load(p1);
  ckpt::save(a, p2);
  REQUIRE(read_bytes(p1) == read_bytes(p2));

  // load into a differently-initialized model and compare every value
  AuNet<float> net2(tiny());
  net2.init(456);
  auto params2 = net2.params();
  ckpt::load_into(a, params2);
  auto pa = net.params();
  for (std::size_t i = 0; i < pa.size(); ++i) REQUIRE(pa[i].value->v == params2[i].value->v);

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("encoder-only prefix load", "[checkpoint]") {
  AuNet<float> donor(tiny());
  donor.init(9);
  // encoder-only archive
  nn::ParamList<float> enc_params;
  donor.encoder.params(enc_params, "gee");
  std::string path = "ckpt_enc.bin";
  ckpt::save(ckpt::from_params(enc_params), path);

  AuNet<float> target(tiny());
  target.init(77);
  auto before = target.params();
  std::vector<std::vector<float>> clf_before;
  for (auto& p : before)
    if (p.name.rfind("clf", 0) == 0) clf_before.push_back(p.value->v);

  auto a = ckpt::load(path);
  auto tparams = target.params();
  ckpt::load_into(a, tparams, "gee.");

  // encoder parameters equal the checkpoint bit-exactly
  nn::ParamList<float> tgt_enc;
  target.encoder.params(tgt_enc, "gee");
  for (auto& p : tgt_enc) {
    const auto* e = a.find(p.name);
    REQUIRE(e != nullptr);
    const float* src = reinterpret_cast<const float*>(e->payload.data());
    for (std::size_t i = 0; i < p.value->numel(); ++i) REQUIRE(p.value->v[i] == src[i]);
  }
  // classifier parameters untouched
  std::size_t idx = 0;
  for (auto& p : target.params())
    if (p.name.rfind("clf", 0) == 0) REQUIRE(p.value->v == clf_before[idx++]);

  std::remove(path.c_str());
}

TEST_CASE("checkpoint shape mismatch names the parameter", "[checkpoint]") {
  AuNet<float> small(tiny());
  small.init(1);
  std::string path = "ckpt_shape.bin";
  ckpt::save(ckpt::from_params(small.params()), path);

  ModelConfig big = tiny();
  big.encoder_channels = 16;
  AuNet<float> other(big);
  other.init(2);
  auto a = ckpt::load(path);
  auto oparams = other.params();
  try {
    ckpt::load_into(a, oparams, "gee.");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    REQUIRE(std::string(e.what()).find("gee.") != std::string::npos);
    REQUIRE(std::string(e.what()).find("shape mismatch") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint io errors", "[checkpoint]") {
  CHECK_THROWS_AS(ckpt::load("no_such_file.bin"), DataError);
  std::string path = "ckpt_garbage.bin";
  std::ofstream(path, std::ios::binary) << "not a checkpoint";
  CHECK_THROWS_AS(ckpt::load(path), DataError);
  std::remove(path.c_str());
}

TEST_CASE("f32 archive loads into f64 model", "[checkpoint]") {
  AuNet<float> f32net(tiny());
  f32net.init(5);
  std::string path = "ckpt_cast.bin";
  ckpt::save(ckpt::from_params(f32net.params()), path);
  AuNet<double> f64net(tiny());
  f64net.init(6);
  auto a = ckpt::load(path);
  auto params = f64net.params();
  ckpt::load_into(a, params);
  auto src = f32net.params();
  for (std::size_t i = 0; i < src.size(); ++i)
    for (std::size_t j = 0; j < src[i].value->numel(); ++j)
      REQUIRE(params[i].value->v[j] == double(src[i].value->v[j]));
  std::remove(path.c_str());
}
