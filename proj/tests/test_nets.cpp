#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rwgan/nets.hpp"
#include "rwgan/rng.hpp"

using namespace rwgan;
using namespace rwgan::nets;

namespace {

Tensor random_input(Shape shape, uint64_t seed) {
  Rng rng(seed);
  auto t = Tensor::zeros(shape);
  for (auto& v : t.values()) v = float(rng.uniform(-1, 1));
  return t;
}

} // namespace

TEST_CASE("generator at 64 px has 4 encoder stages and round-trips shape") {
  auto g = build_generator(64, 32);
  int conv_stages = 0;
  for (const auto& l : g.layers)
    conv_stages += l.kind == LayerSpec::Kind::conv;
  CHECK(conv_stages == 4);
  auto y = g.forward(random_input({1, 3, 64, 64}, 1));
  CHECK(y.shape() == Shape{1, 3, 64, 64});
}

TEST_CASE("generator outputs stay in tanh range") {
  auto g = build_generator(64, 16);
  auto y = g.forward(random_input({1, 3, 64, 64}, 2));
  for (float v : y.values()) {
    CHECK(v <= 1.0f);
    CHECK(v >= -1.0f);
  }
}

TEST_CASE("generator at 256 px has 6 stages and a 4x4 bottleneck") {
  auto g = build_generator_t<float>(256, 8);
  int conv_stages = 0;
  for (const auto& l : g.layers)
    conv_stages += l.kind == LayerSpec::Kind::conv;
  CHECK(conv_stages == 6);
  // deepest feature map: 256 / 2^6 = 4
  // track spatially by replaying the encoder strides
  int64_t spatial = 256;
  for (const auto& l : g.layers)
    if (l.kind == LayerSpec::Kind::conv) spatial = (spatial + 2 - 4) / 2 + 1;
  CHECK(spatial == 4);
  auto y = g.forward(random_input({1, 3, 256, 256}, 3));
  CHECK(y.shape() == Shape{1, 3, 256, 256});
}

TEST_CASE("generator is shape-preserving across supported sizes") {
  for (int64_t size : {64, 128, 256}) {
    auto g = build_generator(size, 8);
    auto y = g.forward(random_input({1, 3, size, size}, uint64_t(size)));
    CHECK(y.shape() == (Shape{1, 3, size, size}));
  }
}

TEST_CASE("generator rejects unsupported sizes") {
  CHECK_THROWS_AS(build_generator(100, 32), ConfigError);
  CHECK_THROWS_AS(build_generator(32, 32), ConfigError);
  CHECK_THROWS_AS(build_generator(512, 32), ConfigError);
}

TEST_CASE("zero-weight generator emits tanh(0) everywhere") {
  auto g = build_generator(64, 8);
  for (auto& [name, p] : g.params)
    for (auto& v : p.values()) v = 0.0f;
  // gamma back to 1 so the norm stages stay affine-neutral
  for (auto& [name, p] : g.params)
    if (name.size() > 6 && name.substr(name.size() - 6) == ".gamma")
      for (auto& v : p.values()) v = 1.0f;
  auto y = g.forward(random_input({1, 3, 64, 64}, 4));
  for (float v : y.values()) CHECK(v == 0.0f);
}

TEST_CASE("discriminator score maps match the analytic chain") {
  auto d256 = build_discriminator(256, 16, 6);
  auto s256 = d256.forward(random_input({1, 6, 256, 256}, 5));
  CHECK(s256.shape() == Shape{1, 1, 30, 30});
  CHECK(score_map_size(256) == 30);

  auto d64 = build_discriminator(64, 16, 3);
  auto s64 = d64.forward(random_input({1, 3, 64, 64}, 6));
  CHECK(s64.shape() == Shape{1, 1, 6, 6});
  CHECK(score_map_size(64) == 6);
}

TEST_CASE("standard discriminator receptive field is 70") {
  auto d = build_discriminator(256, 16, 6);
  CHECK(patch_receptive_field(d) == 70);
}

TEST_CASE("receptive field recursion on hand-built chains") {
  NetworkT<float> net;
  net.meta.role = NetRole::discriminator;
  auto conv = [](int64_t k, int64_t s) {
    LayerSpec l{LayerSpec::Kind::conv, "c"};
    l.kernel = k;
    l.stride = s;
    return l;
  };
  net.layers = {conv(4, 1)};
  CHECK(patch_receptive_field(net) == 4);
  net.layers = {conv(4, 2), conv(4, 2), conv(4, 1)};
  CHECK(patch_receptive_field(net) == 22);
}

TEST_CASE("receptive field rejects generators") {
  auto g = build_generator(64, 8);
  CHECK_THROWS_AS(patch_receptive_field(g), ConfigError);
}

TEST_CASE("parameter counts are frozen fixtures") {
  // counts derived independently from the stage table (channels * prev * K^2
  // + bias, plus 2*ch per norm); any change to the builders must be deliberate
  CHECK(build_generator(64, 32).param_count() == 1546755);
  CHECK(build_generator(64, 16).param_count() == 388355);
  CHECK(build_generator_t<float>(256, 32).param_count() == 7316995);
  CHECK(build_discriminator(64, 32, 6).param_count() == 696673);
  CHECK(build_discriminator(256, 64, 6).param_count() == 2769601);
  CHECK(build_discriminator(64, 32, 3).param_count() == 695137);
}

TEST_CASE("parameter count depends only on size and width") {
  auto a = build_generator(64, 32, 3, 3, 1);
  auto b = build_generator(64, 32, 3, 3, 999);
  CHECK(a.param_count() == b.param_count());
}

TEST_CASE("init statistics follow the 0.02 normal convention") {
  auto g = build_generator(256, 32, 3, 3, 42);
  double sum = 0, sum_sq = 0;
  int64_t n = 0;
  for (const auto& [name, p] : g.params) {
    if (name.find(".w") == std::string::npos) continue;
    for (float v : p.values()) {
      sum += v;
      sum_sq += double(v) * double(v);
      ++n;
    }
  }
  const double mean = sum / double(n);
  const double stddev = std::sqrt(sum_sq / double(n) - mean * mean);
  CHECK(std::fabs(mean) < 1e-3);
  CHECK(stddev == Catch::Approx(0.02).epsilon(0.05));

  // biases zero, gamma one, beta zero
  for (const auto& [name, p] : g.params) {
    if (name.ends_with(".b") || name.ends_with(".beta"))
      for (float v : p.values()) CHECK(v == 0.0f);
    if (name.ends_with(".gamma"))
      for (float v : p.values()) CHECK(v == 1.0f);
  }
}

TEST_CASE("layer specs survive json round trips") {
  auto g = build_generator(64, 8);
  for (const auto& l : g.layers) {
    auto l2 = layer_from_json(layer_to_json(l));
    CHECK(l2.kind == l.kind);
    CHECK(l2.name == l.name);
    CHECK(l2.in_ch == l.in_ch);
    CHECK(l2.out_ch == l.out_ch);
    CHECK(l2.kernel == l.kernel);
    CHECK(l2.stride == l.stride);
    CHECK(l2.pad == l.pad);
    CHECK(l2.act == l.act);
    CHECK(l2.skip_index == l.skip_index);
    CHECK(l2.save_skip == l.save_skip);
  }
}
