#pragma once

// Full tracker model: shared patch embedder, gated joint backbone, optional
// decoder, corner head. Owns the ordered named-parameter table used by the
// optimizer, the checkpoint writer and the gradient checker.

#include <string>
#include <utility>
#include <vector>

#include "simtrack/backbone.hpp"
#include "simtrack/head.hpp"
#include "simtrack/tokenizer.hpp"

namespace simtrack {

struct ModelForward {
  BoxPrediction pred;
  JointOutput backbone;
};

// Exemplar tokens embedded once per video and reused every frame.
struct EmbeddedExemplar {
  Tensor exemplar;
  Tensor foveal;  // undefined when disabled
};

struct TrackModel {
  ModelConfig cfg;
  PatchEmbedder embedder;
  std::vector<BlockParams> blocks;
  std::vector<DecoderLayerParams> decoder;
  CornerHead head;

  static TrackModel init(const ModelConfig& cfg) {
    cfg.validate();
    TrackModel m;
    m.cfg = cfg;
    Rng rng(cfg.seed);
    m.embedder = PatchEmbedder::init(cfg.patch, cfg.dim, cfg.n_search_tokens(), rng);
    for (int l = 0; l < cfg.layers; ++l) {
      m.blocks.push_back(BlockParams::init(cfg.dim, cfg.ffn_dim, rng, "blocks." + std::to_string(l)));
    }
    for (int l = 0; l < cfg.decoder_layers; ++l) {
      m.decoder.push_back(
          DecoderLayerParams::init(cfg.dim, cfg.ffn_dim, rng, "decoder." + std::to_string(l)));
    }
    m.head = CornerHead::init(cfg.dim, rng);
    return m;
  }

  std::vector<std::pair<std::string, Tensor>> params() const {
    std::vector<std::pair<std::string, Tensor>> out = embedder.params();
    for (size_t l = 0; l < blocks.size(); ++l) {
      auto p = blocks[l].params("blocks." + std::to_string(l));
      out.insert(out.end(), p.begin(), p.end());
    }
    for (size_t l = 0; l < decoder.size(); ++l) {
      auto p = decoder[l].params("decoder." + std::to_string(l));
      out.insert(out.end(), p.begin(), p.end());
    }
    auto h = head.params();
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }

  void zero_grad() {
    for (auto& [name, p] : params()) p.zero_grad();
  }

  EmbeddedExemplar embed_exemplar(const Image& exemplar_img, const Box& exemplar_box) const {
    // embed_all needs a search image; feeding the real one twice would waste
    // work, so embed the exemplar pieces directly.
    RawPatches ep = serialize(exemplar_img, cfg.patch);
    Tensor epos = exemplar_pos_embed(
        embedder, exemplar_pos_inputs(ep, cfg.patch, 0, 0, exemplar_box));
    EmbeddedExemplar out;
    out.exemplar =
        add(matmul(Tensor::from({ep.n, ep.dim}, ep.data), embedder.projection), epos);
    if (cfg.foveal_size > 0) {
      FovealCrop fc = foveal_crop(exemplar_img, cfg.foveal_size, cfg.patch);
      RawPatches fp = serialize(fc.image, cfg.patch);
      Tensor fpos = exemplar_pos_embed(
          embedder,
          exemplar_pos_inputs(fp, cfg.patch, fc.offset_y, fc.offset_x, exemplar_box));
      out.foveal = add(matmul(Tensor::from({fp.n, fp.dim}, fp.data), embedder.projection), fpos);
    }
    return out;
  }

  Tensor embed_search(const Image& search_img) const {
    RawPatches sp = serialize(search_img, cfg.patch);
    if (sp.n != cfg.n_search_tokens()) {
      throw ConfigError("search image yields " + std::to_string(sp.n) + " tokens, expected " +
                        std::to_string(cfg.n_search_tokens()));
    }
    return add(matmul(Tensor::from({sp.n, sp.dim}, sp.data), embedder.projection),
               embedder.pos_search);
  }

  ModelForward forward_embedded(const EmbeddedExemplar& ex, const Tensor& search_tokens,
                                bool record_attention = false) const {
    ModelForward out;
    out.backbone = joint_forward(search_tokens, ex.exemplar, ex.foveal, blocks, cfg.interaction,
                                 cfg.heads, record_attention);
    Tensor s_final = out.backbone.search;
    if (!decoder.empty()) {
      Tensor kv = out.backbone.foveal.defined()
                      ? concat({out.backbone.exemplar, out.backbone.foveal}, 0)
                      : out.backbone.exemplar;
      s_final = decoder_forward(s_final, kv, decoder, cfg.heads);
    }
    out.pred = predict_box(s_final, head, cfg.search_grid(), cfg.search_grid());
    return out;
  }

  ModelForward forward(const Image& exemplar_img, const Image& search_img,
                       const Box& exemplar_box, bool record_attention = false) const {
    return forward_embedded(embed_exemplar(exemplar_img, exemplar_box), embed_search(search_img),
                            record_attention);
  }
};

}  // namespace simtrack
