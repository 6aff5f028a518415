#pragma once

// Image -> token sequences: patch serialization, the foveal center window,
// the shared linear projection, and the two position-embedding schemes
// (learned table for search, MLP over patch geometry for exemplar/foveal).

#include <string>
#include <utility>
#include <vector>

#include "simtrack/box.hpp"
#include "simtrack/image.hpp"
#include "simtrack/tensor.hpp"

namespace simtrack {

enum class Provenance { search, exemplar, foveal };

struct TokenSequence {
  Tensor tokens;  // [N, C]; undefined when the sequence is absent
  Provenance provenance = Provenance::search;
  int grid_h = 0;
  int grid_w = 0;
  std::vector<std::pair<int, int>> grid;          // (row, col) per token
  std::vector<std::pair<int, int>> pixel_origin;  // (y, x) of patch top-left in source frame

  int count() const { return tokens.defined() ? static_cast<int>(tokens.shape()[0]) : 0; }
};

// Flattened patches before projection, with their grid bookkeeping.
struct RawPatches {
  int n = 0;
  int dim = 0;  // P*P*3
  int grid_h = 0;
  int grid_w = 0;
  std::vector<double> data;  // [n, dim] row-major
  std::vector<std::pair<int, int>> grid;
  std::vector<std::pair<int, int>> pixel_origin;
};

// Cut an image into non-overlapping PxP patches, each flattened row-major
// over (row, col, channel). Patch order is row-major over the patch grid.
inline RawPatches serialize(const Image& img, int patch) {
  if (patch <= 0) throw ConfigError("patch size must be positive");
  if (img.height % patch != 0 || img.width % patch != 0) {
    throw ConfigError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                      " is not divisible by patch size " + std::to_string(patch));
  }
  RawPatches out;
  out.grid_h = img.height / patch;
  out.grid_w = img.width / patch;
  out.n = out.grid_h * out.grid_w;
  out.dim = patch * patch * 3;
  out.data.resize(static_cast<size_t>(out.n) * out.dim);
  out.grid.reserve(static_cast<size_t>(out.n));
  out.pixel_origin.reserve(static_cast<size_t>(out.n));
  size_t w = 0;
  for (int i = 0; i < out.grid_h; ++i) {
    for (int j = 0; j < out.grid_w; ++j) {
      out.grid.emplace_back(i, j);
      out.pixel_origin.emplace_back(i * patch, j * patch);
      for (int py = 0; py < patch; ++py) {
        for (int px = 0; px < patch; ++px) {
          for (int c = 0; c < 3; ++c) {
            out.data[w++] = img.at(i * patch + py, j * patch + px, c);
          }
        }
      }
    }
  }
  return out;
}

// Rebuild an image from serialized patches. Test utility and the inverse
// direction of the serialization bijection.
inline Image deserialize(const RawPatches& p, int patch) {
  Image img(p.grid_h * patch, p.grid_w * patch);
  for (int t = 0; t < p.n; ++t) {
    auto [i, j] = p.grid[static_cast<size_t>(t)];
    const double* src = p.data.data() + static_cast<size_t>(t) * p.dim;
    for (int py = 0; py < patch; ++py)
      for (int px = 0; px < patch; ++px)
        for (int c = 0; c < 3; ++c)
          img.at(i * patch + py, j * patch + px, c) = *src++;
  }
  return img;
}

struct FovealCrop {
  Image image;
  int offset_y = 0;
  int offset_x = 0;
};

// Centered crop whose patch grid lines fall in the middle of the exemplar's
// patch cells: the offset must be congruent to P/2 modulo P on both axes.
inline FovealCrop foveal_crop(const Image& exemplar, int crop, int patch) {
  if (crop <= 0 || crop >= exemplar.width || crop >= exemplar.height) {
    throw ConfigError("foveal crop " + std::to_string(crop) + " must be smaller than the exemplar");
  }
  if (exemplar.width != exemplar.height) {
    throw ConfigError("foveal cropping expects a square exemplar");
  }
  if (patch % 2 != 0) {
    throw ConfigError("foveal window requires an even patch size, got " + std::to_string(patch));
  }
  if (crop % patch != 0) {
    throw ConfigError("foveal crop " + std::to_string(crop) + " must be divisible by patch size " +
                      std::to_string(patch));
  }
  int margin = exemplar.width - crop;
  if (margin % 2 != 0) {
    throw ConfigError("foveal crop must leave an even margin; exemplar " +
                      std::to_string(exemplar.width) + ", crop " + std::to_string(crop));
  }
  int offset = margin / 2;
  if (offset % patch != patch / 2) {
    throw ConfigError("foveal offset " + std::to_string(offset) + " must satisfy offset mod " +
                      std::to_string(patch) + " == " + std::to_string(patch / 2) +
                      " so foveal grid lines bisect exemplar patches (use crop = exemplar - (2k+1)*P)");
  }
  FovealCrop out;
  out.offset_y = offset;
  out.offset_x = offset;
  out.image = Image(crop, crop);
  for (int y = 0; y < crop; ++y)
    for (int x = 0; x < crop; ++x)
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = exemplar.at(y + offset, x + offset, c);
  return out;
}

// Fraction of a pixel cell covered by the target box, both in the same frame.
inline double target_ratio(const Box& box, double cell_x, double cell_y, double cell_w,
                           double cell_h) {
  Box cell{cell_x, cell_y, cell_x + cell_w, cell_y + cell_h};
  double cell_area = cell_w * cell_h;
  if (cell_area <= 0) throw std::invalid_argument("target_ratio: empty cell");
  return intersection_area(box, cell) / cell_area;
}

struct PatchEmbedder {
  int patch = 0;
  int dim = 0;     // C
  int hidden = 0;  // width of the position MLP, C_h = C
  Tensor projection;  // [P*P*3, C], shared by search, exemplar and foveal patches
  Tensor pos_search;  // [N_x, C] learned table
  Tensor pos_w1, pos_b1, pos_w2, pos_b2;  // FCs of the geometry embedding

  static PatchEmbedder init(int patch, int dim, int n_search_tokens, Rng& rng) {
    PatchEmbedder e;
    e.patch = patch;
    e.dim = dim;
    e.hidden = dim;
    auto normal = [&rng](Shape s, double std) {
      std::vector<double> v(static_cast<size_t>(shape_numel(s)));
      for (auto& x : v) x = rng.normal(0.0, std);
      return v;
    };
    int pd = patch * patch * 3;
    e.projection = Tensor::param({pd, dim}, normal({pd, dim}, 0.02), "embed.proj");
    e.pos_search = Tensor::param({n_search_tokens, dim}, normal({n_search_tokens, dim}, 0.02),
                                 "embed.pos_search");
    e.pos_w1 = Tensor::param({3, e.hidden}, normal({3, e.hidden}, 0.02), "embed.pos_mlp.w1");
    e.pos_b1 = Tensor::param({e.hidden}, std::vector<double>(static_cast<size_t>(e.hidden), 0.0),
                             "embed.pos_mlp.b1");
    e.pos_w2 = Tensor::param({e.hidden, dim}, normal({e.hidden, dim}, 0.02), "embed.pos_mlp.w2");
    e.pos_b2 = Tensor::param({dim}, std::vector<double>(static_cast<size_t>(dim), 0.0),
                             "embed.pos_mlp.b2");
    return e;
  }

  std::vector<std::pair<std::string, Tensor>> params() const {
    return {{"embed.proj", projection},   {"embed.pos_search", pos_search},
            {"embed.pos_mlp.w1", pos_w1}, {"embed.pos_mlp.b1", pos_b1},
            {"embed.pos_mlp.w2", pos_w2}, {"embed.pos_mlp.b2", pos_b2}};
  }
};

// Geometry features per token: (i, j) normalized to [0,1] by (grid_dim - 1),
// plus the target-area ratio of the token's pixel cell.
inline Tensor exemplar_pos_inputs(const RawPatches& patches, int patch, int offset_y, int offset_x,
                                  const Box& target_in_frame) {
  std::vector<double> feats(static_cast<size_t>(patches.n) * 3);
  double di = patches.grid_h > 1 ? static_cast<double>(patches.grid_h - 1) : 1.0;
  double dj = patches.grid_w > 1 ? static_cast<double>(patches.grid_w - 1) : 1.0;
  for (int t = 0; t < patches.n; ++t) {
    auto [i, j] = patches.grid[static_cast<size_t>(t)];
    double cell_y = patches.pixel_origin[static_cast<size_t>(t)].first + offset_y;
    double cell_x = patches.pixel_origin[static_cast<size_t>(t)].second + offset_x;
    double r = target_ratio(target_in_frame, cell_x, cell_y, patch, patch);
    feats[static_cast<size_t>(t) * 3 + 0] = i / di;
    feats[static_cast<size_t>(t) * 3 + 1] = j / dj;
    feats[static_cast<size_t>(t) * 3 + 2] = r;
  }
  return Tensor::from({patches.n, 3}, std::move(feats));
}

// p_e = FCs(i, j, R_ij): linear -> GELU -> linear, width C.
inline Tensor exemplar_pos_embed(const PatchEmbedder& e, const Tensor& inputs) {
  if (inputs.rank() != 2 || inputs.shape()[1] != 3) {
    throw std::invalid_argument("exemplar_pos_embed: inputs must be [N,3]");
  }
  for (double v : inputs.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("exemplar_pos_embed: inputs must lie in [0,1], got " +
                                  std::to_string(v));
    }
  }
  Tensor h = gelu(add(matmul(inputs, e.pos_w1), e.pos_b1));
  return add(matmul(h, e.pos_w2), e.pos_b2);
}

struct EmbeddedInput {
  TokenSequence search;
  TokenSequence exemplar;
  TokenSequence foveal;  // tokens undefined when the foveal window is disabled
};

// Produce (s0, e0, e0*) for one exemplar/search pair. `exemplar_box` is the
// target box in exemplar-crop pixels and drives the R_ij features.
inline EmbeddedInput embed_all(const PatchEmbedder& e, const Image& exemplar_img,
                               const Image& search_img, const Box& exemplar_box,
                               int foveal_size) {
  EmbeddedInput out;

  RawPatches sp = serialize(search_img, e.patch);
  if (sp.n != e.pos_search.shape()[0]) {
    throw ConfigError("search image yields " + std::to_string(sp.n) +
                      " tokens but the position table holds " +
                      std::to_string(e.pos_search.shape()[0]));
  }
  out.search.tokens = add(matmul(Tensor::from({sp.n, sp.dim}, sp.data), e.projection),
                          e.pos_search);
  out.search.provenance = Provenance::search;
  out.search.grid_h = sp.grid_h;
  out.search.grid_w = sp.grid_w;
  out.search.grid = std::move(sp.grid);
  out.search.pixel_origin = std::move(sp.pixel_origin);

  RawPatches ep = serialize(exemplar_img, e.patch);
  Tensor epos = exemplar_pos_embed(e, exemplar_pos_inputs(ep, e.patch, 0, 0, exemplar_box));
  out.exemplar.tokens = add(matmul(Tensor::from({ep.n, ep.dim}, ep.data), e.projection), epos);
  out.exemplar.provenance = Provenance::exemplar;
  out.exemplar.grid_h = ep.grid_h;
  out.exemplar.grid_w = ep.grid_w;
  out.exemplar.grid = std::move(ep.grid);
  out.exemplar.pixel_origin = std::move(ep.pixel_origin);

  if (foveal_size > 0) {
    FovealCrop fc = foveal_crop(exemplar_img, foveal_size, e.patch);
    RawPatches fp = serialize(fc.image, e.patch);
    Tensor fpos = exemplar_pos_embed(
        e, exemplar_pos_inputs(fp, e.patch, fc.offset_y, fc.offset_x, exemplar_box));
    out.foveal.tokens = add(matmul(Tensor::from({fp.n, fp.dim}, fp.data), e.projection), fpos);
    out.foveal.provenance = Provenance::foveal;
    out.foveal.grid_h = fp.grid_h;
    out.foveal.grid_w = fp.grid_w;
    out.foveal.grid = std::move(fp.grid);
    out.foveal.pixel_origin.clear();
    for (auto [y, x] : fp.pixel_origin) {
      out.foveal.pixel_origin.emplace_back(y + fc.offset_y, x + fc.offset_x);
    }
  } else {
    out.foveal.provenance = Provenance::foveal;
  }
  return out;
}

}  // namespace simtrack
