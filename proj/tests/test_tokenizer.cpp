#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "simtrack/tokenizer.hpp"

using namespace simtrack;

namespace {

Image noise_image(int h, int w, uint64_t seed) {
  Image img(h, w);
  Rng rng(seed);
  for (auto& v : img.data) v = rng.uniform01();
  return img;
}

}  // namespace

TEST_CASE("serialize patch counts match closed form") {
  CHECK(serialize(noise_image(224, 224, 1), 16).n == 196);
  CHECK(serialize(noise_image(112, 112, 2), 16).n == 49);
  CHECK(serialize(noise_image(128, 128, 3), 32).n == 16);
  CHECK_THROWS_AS(serialize(noise_image(100, 100, 4), 16), ConfigError);
}

TEST_CASE("serialization is a bijection") {
  Image img = noise_image(48, 32, 5);
  RawPatches p = serialize(img, 8);
  Image back = deserialize(p, 8);
  REQUIRE(back.height == img.height);
  REQUIRE(back.width == img.width);
  CHECK(std::memcmp(back.data.data(), img.data.data(), img.data.size() * 8) == 0);

  // grid coordinates are unique
  std::set<std::pair<int, int>> seen(p.grid.begin(), p.grid.end());
  CHECK(seen.size() == p.grid.size());
}

TEST_CASE("foveal crop alignment rule") {
  // paper geometry: 112 exemplar, 64 crop, P=16 -> offset 24, 24 mod 16 == 8
  FovealCrop fc = foveal_crop(noise_image(112, 112, 7), 64, 16);
  CHECK(fc.offset_x == 24);
  CHECK(fc.offset_y == 24);
  CHECK(serialize(fc.image, 16).n == 16);

  // offset 8 mod 8 == 0: grid lines coincide with the exemplar's, rejected
  CHECK_THROWS_WITH_AS(foveal_crop(noise_image(32, 32, 8), 16, 8), doctest::Contains("offset"),
                       ConfigError);
  // offset 6 mod 8 != 4, rejected
  CHECK_THROWS_AS(foveal_crop(noise_image(32, 32, 9), 20, 8), ConfigError);
  // valid small demo: exemplar 32, crop 12, P=4 -> offset 10 == 2 (mod 4)
  FovealCrop demo = foveal_crop(noise_image(32, 32, 10), 12, 4);
  CHECK(demo.offset_x == 10);
  CHECK(serialize(demo.image, 4).n == 9);
}

TEST_CASE("foveal patch origins are offset half a patch from the main grid") {
  Rng rng(11);
  PatchEmbedder e = PatchEmbedder::init(4, 16, 64, rng);
  Image exemplar = noise_image(32, 32, 12);
  Image search = noise_image(32, 32, 13);
  Box box{8, 8, 24, 24};
  EmbeddedInput emb = embed_all(e, exemplar, search, box, 12);

  REQUIRE(emb.foveal.count() == 9);
  std::set<std::pair<int, int>> main_origins(emb.exemplar.pixel_origin.begin(),
                                             emb.exemplar.pixel_origin.end());
  for (auto [y, x] : emb.foveal.pixel_origin) {
    CHECK(y % 4 == 2);
    CHECK(x % 4 == 2);
    CHECK(main_origins.count({y, x}) == 0);
  }
}

TEST_CASE("target ratio basics and partition property") {
  Box box{4, 4, 12, 12};
  CHECK(target_ratio(box, 5, 5, 2, 2) == 1.0);
  CHECK(target_ratio(box, 20, 20, 4, 4) == 0.0);
  CHECK(target_ratio(box, 2, 4, 4, 4) == 0.5);  // left half of the cell outside

  // sum over a grid of R*cell_area equals the box-image intersection area
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    double w = 32, h = 24;
    Box b{rng.uniform(-5, w - 2), rng.uniform(-5, h - 2), 0, 0};
    b.x2 = b.x1 + rng.uniform(1, 20);
    b.y2 = b.y1 + rng.uniform(1, 20);
    double cell = 4;
    double total = 0;
    for (int i = 0; i < h / cell; ++i)
      for (int j = 0; j < w / cell; ++j)
        total += target_ratio(b, j * cell, i * cell, cell, cell) * cell * cell;
    Box image{0, 0, w, h};
    CHECK(std::fabs(total - intersection_area(b, image)) < 1e-9);
  }
}

TEST_CASE("exemplar position embedding") {
  Rng rng(19);
  PatchEmbedder e = PatchEmbedder::init(8, 32, 64, rng);

  Tensor in = Tensor::from({2, 3}, {0.0, 0.5, 1.0, 0.25, 0.75, 0.0});
  Tensor out1 = exemplar_pos_embed(e, in);
  Tensor out2 = exemplar_pos_embed(e, in);
  CHECK(std::memcmp(out1.values().data(), out2.values().data(), out1.values().size() * 8) == 0);

  // zeroed final layer -> zero embedding regardless of input
  for (auto& v : e.pos_w2.leaf_values()) v = 0.0;
  for (auto& v : e.pos_b2.leaf_values()) v = 0.0;
  Tensor z = exemplar_pos_embed(e, in);
  for (double v : z.values()) CHECK(v == 0.0);

  CHECK_THROWS_AS(exemplar_pos_embed(e, Tensor::from({1, 3}, {1.2, 0, 0})),
                  std::invalid_argument);
  CHECK_THROWS_AS(exemplar_pos_embed(e, Tensor::from({1, 3}, {0.5, -0.1, 0})),
                  std::invalid_argument);
}

TEST_CASE("position MLP gradients flow to every layer") {
  Rng rng(23);
  PatchEmbedder e = PatchEmbedder::init(8, 16, 64, rng);
  Tensor in = Tensor::from({4, 3}, {0, 0, 1, 0.5, 0.5, 0.5, 1, 0, 0.25, 0.3, 0.9, 0.0});
  auto f = [&] { return sum(mul(exemplar_pos_embed(e, in), exemplar_pos_embed(e, in))).item(); };
  Tensor loss = sum(mul(exemplar_pos_embed(e, in), exemplar_pos_embed(e, in)));
  backward(loss);
  for (Tensor p : {e.pos_w1, e.pos_b1, e.pos_w2, e.pos_b2}) {
    for (size_t idx = 0; idx < std::min<size_t>(p.values().size(), 8); ++idx) {
      auto& v = p.leaf_values();
      double keep = v[idx];
      double h = 1e-5;
      v[idx] = keep + h;
      double up = f();
      v[idx] = keep - h;
      double dn = f();
      v[idx] = keep;
      double fd = (up - dn) / (2 * h);
      CHECK(std::fabs(p.grad()[idx] - fd) < 1e-6 * std::max(1.0, std::fabs(fd)));
    }
  }
}

TEST_CASE("embed_all token counts") {
  {
    Rng rng(29);
    PatchEmbedder e = PatchEmbedder::init(8, 64, 64, rng);
    EmbeddedInput emb = embed_all(e, noise_image(32, 32, 1), noise_image(64, 64, 2),
                                  Box{8, 8, 24, 24}, 0);
    CHECK(emb.search.count() == 64);
    CHECK(emb.exemplar.count() == 16);
    CHECK(emb.foveal.count() == 0);
    CHECK_FALSE(emb.foveal.tokens.defined());
  }
  {
    // Sim-B/16 geometry: search 224, exemplar 112, foveal 64, P=16
    Rng rng(31);
    PatchEmbedder e = PatchEmbedder::init(16, 8, 196, rng);
    EmbeddedInput emb = embed_all(e, noise_image(112, 112, 3), noise_image(224, 224, 4),
                                  Box{28, 28, 84, 84}, 64);
    CHECK(emb.search.count() == 196);
    CHECK(emb.exemplar.count() == 49);
    CHECK(emb.foveal.count() == 16);
  }
}

TEST_CASE("shared projection: identical pixels differ only by position embedding") {
  Rng rng(37);
  PatchEmbedder e = PatchEmbedder::init(4, 16, 64, rng);
  // constant image: every patch, foveal or not, has identical pixels
  Image exemplar(32, 32);
  for (auto& v : exemplar.data) v = 0.42;
  EmbeddedInput emb = embed_all(e, exemplar, noise_image(32, 32, 5), Box{8, 8, 24, 24}, 12);

  Tensor epos = exemplar_pos_embed(
      e, exemplar_pos_inputs(serialize(exemplar, 4), 4, 0, 0, Box{8, 8, 24, 24}));
  FovealCrop fc = foveal_crop(exemplar, 12, 4);
  Tensor fpos = exemplar_pos_embed(
      e, exemplar_pos_inputs(serialize(fc.image, 4), 4, fc.offset_y, fc.offset_x, Box{8, 8, 24, 24}));

  int c = 16;
  for (int t = 0; t < emb.foveal.count(); ++t) {
    for (int d = 0; d < c; ++d) {
      double tok_delta = emb.foveal.tokens.values()[t * c + d] - emb.exemplar.tokens.values()[d];
      double pos_delta = fpos.values()[t * c + d] - epos.values()[d];
      CHECK(tok_delta == doctest::Approx(pos_delta).epsilon(1e-12));
    }
  }
}
