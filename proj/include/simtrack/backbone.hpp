#pragma once

// L-layer pre-norm transformer over the concatenated exemplar/foveal/search
// tokens. A per-layer gate controls whether the exemplar group and the search
// group may attend to each other; with every gate off the same kernel
// reproduces two independent Siamese forward passes. An optional stack of
// cross-attention decoder layers sits after the backbone for ablations.

#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "simtrack/tensor.hpp"
#include "simtrack/tokenizer.hpp"

namespace simtrack {

struct InteractionSchedule {
  std::vector<bool> gates;  // gates[l] true <=> cross attention on in layer l+1

  static InteractionSchedule all(int layers, bool on = true) {
    return {std::vector<bool>(static_cast<size_t>(layers), on)};
  }

  // Keep every (1/density)-th layer, counted one-based from the input, so a
  // density of 0.5 on 12 layers enables layers 2,4,...,12.
  static InteractionSchedule density(int layers, double frac) {
    if (frac <= 0.0) return all(layers, false);
    if (frac >= 1.0) return all(layers, true);
    int stride = static_cast<int>(std::lround(1.0 / frac));
    InteractionSchedule s = all(layers, false);
    for (int l = 0; l < layers; ++l) {
      if ((l + 1) % stride == 0) s.gates[static_cast<size_t>(l)] = true;
    }
    return s;
  }

  double enabled_fraction() const {
    if (gates.empty()) return 0.0;
    int on = 0;
    for (bool g : gates) on += g ? 1 : 0;
    return static_cast<double>(on) / static_cast<double>(gates.size());
  }
};

struct ModelConfig {
  int patch = 8;
  int dim = 64;        // C
  int layers = 4;      // L
  int heads = 4;       // H
  int ffn_dim = 256;   // C_ff
  int search_size = 64;
  int exemplar_size = 32;
  int foveal_size = 0;  // 0 disables the foveal window
  int decoder_layers = 0;
  InteractionSchedule interaction = InteractionSchedule::all(4);
  uint64_t seed = 1;

  int search_grid() const { return search_size / patch; }
  int exemplar_grid() const { return exemplar_size / patch; }
  int foveal_grid() const { return foveal_size > 0 ? foveal_size / patch : 0; }
  int n_search_tokens() const { return search_grid() * search_grid(); }
  int n_exemplar_tokens() const { return exemplar_grid() * exemplar_grid(); }
  int n_foveal_tokens() const { return foveal_grid() * foveal_grid(); }

  void validate() const {
    if (patch < 1 || dim < 1 || layers < 0 || heads < 1 || ffn_dim < 1) {
      throw ConfigError("model dimensions must be positive");
    }
    if (dim % heads != 0) {
      throw ConfigError("embed dim " + std::to_string(dim) + " not divisible by heads " +
                        std::to_string(heads));
    }
    if (search_size % patch != 0 || exemplar_size % patch != 0) {
      throw ConfigError("search/exemplar sizes must be divisible by the patch size");
    }
    if (static_cast<int>(interaction.gates.size()) != layers) {
      throw ConfigError("interaction schedule has " + std::to_string(interaction.gates.size()) +
                        " gates for " + std::to_string(layers) + " layers");
    }
    if (decoder_layers < 0) throw ConfigError("decoder_layers must be >= 0");
    if (foveal_size > 0) {
      // surfaces the alignment error at config time
      Image probe(exemplar_size, exemplar_size);
      foveal_crop(probe, foveal_size, patch);
    }
  }
};

// Token layout inside the concatenated sequence: [exemplar | foveal | search].
// Exemplar and foveal form one group for gating purposes.
struct SegmentSpans {
  int n_exemplar = 0;
  int n_foveal = 0;
  int n_search = 0;

  int exemplar_group() const { return n_exemplar + n_foveal; }
  int total() const { return n_exemplar + n_foveal + n_search; }
};

struct BlockParams {
  Tensor wq, wk, wv, wo;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;

  static BlockParams init(int dim, int ffn_dim, Rng& rng, const std::string& prefix) {
    auto normal = [&rng](Shape s) {
      std::vector<double> v(static_cast<size_t>(shape_numel(s)));
      for (auto& x : v) x = rng.normal(0.0, 0.02);
      return v;
    };
    auto constant = [](Shape s, double c) {
      return std::vector<double>(static_cast<size_t>(shape_numel(s)), c);
    };
    BlockParams p;
    p.wq = Tensor::param({dim, dim}, normal({dim, dim}), prefix + ".wq");
    p.wk = Tensor::param({dim, dim}, normal({dim, dim}), prefix + ".wk");
    p.wv = Tensor::param({dim, dim}, normal({dim, dim}), prefix + ".wv");
    p.wo = Tensor::param({dim, dim}, normal({dim, dim}), prefix + ".wo");
    p.ln1_g = Tensor::param({dim}, constant({dim}, 1.0), prefix + ".ln1.g");
    p.ln1_b = Tensor::param({dim}, constant({dim}, 0.0), prefix + ".ln1.b");
    p.ln2_g = Tensor::param({dim}, constant({dim}, 1.0), prefix + ".ln2.g");
    p.ln2_b = Tensor::param({dim}, constant({dim}, 0.0), prefix + ".ln2.b");
    p.ffn_w1 = Tensor::param({dim, ffn_dim}, normal({dim, ffn_dim}), prefix + ".ffn.w1");
    p.ffn_b1 = Tensor::param({ffn_dim}, constant({ffn_dim}, 0.0), prefix + ".ffn.b1");
    p.ffn_w2 = Tensor::param({ffn_dim, dim}, normal({ffn_dim, dim}), prefix + ".ffn.w2");
    p.ffn_b2 = Tensor::param({dim}, constant({dim}, 0.0), prefix + ".ffn.b2");
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> params(const std::string& prefix) const {
    return {{prefix + ".wq", wq},           {prefix + ".wk", wk},
            {prefix + ".wv", wv},           {prefix + ".wo", wo},
            {prefix + ".ln1.g", ln1_g},     {prefix + ".ln1.b", ln1_b},
            {prefix + ".ln2.g", ln2_g},     {prefix + ".ln2.b", ln2_b},
            {prefix + ".ffn.w1", ffn_w1},   {prefix + ".ffn.b1", ffn_b1},
            {prefix + ".ffn.w2", ffn_w2},   {prefix + ".ffn.b2", ffn_b2}};
  }
};

constexpr double kLnEps = 1e-5;

// Per-layer attention probabilities kept for visualization: [H, N, N]
// row-major, detached from the graph.
struct AttentionRecord {
  int heads = 0;
  int n = 0;
  std::vector<double> probs;

  double at(int h, int q, int k) const {
    return probs[(static_cast<size_t>(h) * n + q) * n + k];
  }
};

// Additive mask that zeroes cross-group attention: entries between the
// exemplar group and the search group are -inf, everything else 0.
inline Tensor build_gate_mask(const SegmentSpans& spans) {
  int n = spans.total();
  int eg = spans.exemplar_group();
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  std::vector<double> m(static_cast<size_t>(n) * n, 0.0);
  for (int q = 0; q < n; ++q) {
    for (int k = 0; k < n; ++k) {
      bool qe = q < eg, ke = k < eg;
      if (qe != ke) m[static_cast<size_t>(q) * n + k] = ninf;
    }
  }
  return Tensor::from({n, n}, std::move(m));
}

// softmax((x Wq)(x Wk)^T / sqrt(d) + mask) (x Wv), multi-head, then Wo.
// `mask` may be undefined for dense attention.
inline Tensor multihead_self_attention(const Tensor& x, int heads, const Tensor& wq,
                                       const Tensor& wk, const Tensor& wv, const Tensor& wo,
                                       const Tensor& mask, AttentionRecord* record = nullptr) {
  int n = x.shape()[0];
  int c = x.shape()[1];
  int d = c / heads;
  auto split = [&](const Tensor& t) {
    // [N, C] -> [H, N, d]
    return permute(reshape(t, {n, heads, d}), {1, 0, 2});
  };
  Tensor q = split(matmul(x, wq));
  Tensor k = split(matmul(x, wk));
  Tensor v = split(matmul(x, wv));
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  if (mask.defined()) logits = add(logits, mask);
  Tensor att = softmax_rows(logits);
  if (record != nullptr) {
    record->heads = heads;
    record->n = n;
    record->probs = att.values();
  }
  Tensor ctx = reshape(permute(matmul(att, v), {1, 0, 2}), {n, c});
  return matmul(ctx, wo);
}

// One pre-norm residual block: x* = x + Att(LN(x)); out = x* + FFN(LN(x*)).
// With gate=false the mask reproduces independent per-group processing.
inline Tensor attention_block(const Tensor& tokens, const SegmentSpans& spans, bool gate,
                              const BlockParams& p, int heads,
                              AttentionRecord* record = nullptr) {
  if (spans.total() != tokens.shape()[0]) {
    throw std::invalid_argument("attention_block: spans do not partition the sequence");
  }
  if (spans.n_exemplar <= 0 || spans.n_search <= 0) {
    throw std::invalid_argument("attention_block: exemplar and search segments must be non-empty");
  }
  Tensor mask;
  if (!gate) mask = build_gate_mask(spans);
  Tensor att = multihead_self_attention(layernorm(tokens, p.ln1_g, p.ln1_b, kLnEps), heads, p.wq,
                                        p.wk, p.wv, p.wo, mask, record);
  Tensor x1 = add(tokens, att);
  Tensor ln2 = layernorm(x1, p.ln2_g, p.ln2_b, kLnEps);
  Tensor ffn = add(matmul(gelu(add(matmul(ln2, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
  return add(x1, ffn);
}

// Plain single-sequence block (no gating) for standalone forwards; used by
// the Siamese baseline path and equivalence tests.
inline Tensor standalone_block(const Tensor& tokens, const BlockParams& p, int heads,
                               AttentionRecord* record = nullptr) {
  Tensor att = multihead_self_attention(layernorm(tokens, p.ln1_g, p.ln1_b, kLnEps), heads, p.wq,
                                        p.wk, p.wv, p.wo, Tensor(), record);
  Tensor x1 = add(tokens, att);
  Tensor ln2 = layernorm(x1, p.ln2_g, p.ln2_b, kLnEps);
  Tensor ffn = add(matmul(gelu(add(matmul(ln2, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
  return add(x1, ffn);
}

struct JointOutput {
  Tensor search;
  Tensor exemplar;
  Tensor foveal;  // undefined when absent
  SegmentSpans spans;
  std::vector<AttentionRecord> records;  // one per layer when requested
};

// Concatenate [e; e*; s], run the gated blocks, slice the segments back out.
inline JointOutput joint_forward(const Tensor& search, const Tensor& exemplar,
                                 const Tensor& foveal, const std::vector<BlockParams>& blocks,
                                 const InteractionSchedule& schedule, int heads,
                                 bool record_attention = false) {
  if (blocks.size() != schedule.gates.size()) {
    throw std::invalid_argument("joint_forward: schedule length must equal layer count");
  }
  JointOutput out;
  out.spans.n_search = search.shape()[0];
  out.spans.n_exemplar = exemplar.shape()[0];
  out.spans.n_foveal = foveal.defined() ? foveal.shape()[0] : 0;

  if (blocks.empty()) {
    out.search = search;
    out.exemplar = exemplar;
    out.foveal = foveal;
    return out;
  }

  std::vector<Tensor> parts = {exemplar};
  if (foveal.defined()) parts.push_back(foveal);
  parts.push_back(search);
  Tensor x = concat(parts, 0);

  if (record_attention) out.records.resize(blocks.size());
  for (size_t l = 0; l < blocks.size(); ++l) {
    AttentionRecord* rec = record_attention ? &out.records[l] : nullptr;
    x = attention_block(x, out.spans, schedule.gates[l], blocks[l], heads, rec);
  }

  int eg = out.spans.exemplar_group();
  out.exemplar = slice(x, 0, 0, out.spans.n_exemplar);
  if (out.spans.n_foveal > 0) out.foveal = slice(x, 0, out.spans.n_exemplar, eg);
  out.search = slice(x, 0, eg, out.spans.total());
  return out;
}

struct DecoderLayerParams {
  Tensor lnq_g, lnq_b, lnkv_g, lnkv_b, lnf_g, lnf_b;
  Tensor wq, wk, wv, wo;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;

  static DecoderLayerParams init(int dim, int ffn_dim, Rng& rng, const std::string& prefix) {
    auto normal = [&rng](Shape s) {
      std::vector<double> v(static_cast<size_t>(shape_numel(s)));
      for (auto& x : v) x = rng.normal(0.0, 0.02);
      return v;
    };
    auto constant = [](Shape s, double c) {
      return std::vector<double>(static_cast<size_t>(shape_numel(s)), c);
    };
    DecoderLayerParams p;
    p.lnq_g = Tensor::param({dim}, constant({dim}, 1.0), prefix + ".lnq.g");
    p.lnq_b = Tensor::param({dim}, constant({dim}, 0.0), prefix + ".lnq.b");
    p.lnkv_g = Tensor::param({dim}, constant({dim}, 1.0), prefix + ".lnkv.g");
    p.lnkv_b = Tensor::param({dim}, constant({dim}, 0.0), prefix + ".lnkv.b");
    p.lnf_g = Tensor::param({dim}, constant({dim}, 1.0), prefix + ".lnf.g");
    p.lnf_b = Tensor::param({dim}, constant({dim}, 0.0), prefix + ".lnf.b");
    p.wq = Tensor::param({dim, dim}, normal({dim, dim}), prefix + ".wq");
    p.wk = Tensor::param({dim, dim}, normal({dim, dim}), prefix + ".wk");
    p.wv = Tensor::param({dim, dim}, normal({dim, dim}), prefix + ".wv");
    p.wo = Tensor::param({dim, dim}, normal({dim, dim}), prefix + ".wo");
    p.ffn_w1 = Tensor::param({dim, ffn_dim}, normal({dim, ffn_dim}), prefix + ".ffn.w1");
    p.ffn_b1 = Tensor::param({ffn_dim}, constant({ffn_dim}, 0.0), prefix + ".ffn.b1");
    p.ffn_w2 = Tensor::param({ffn_dim, dim}, normal({ffn_dim, dim}), prefix + ".ffn.w2");
    p.ffn_b2 = Tensor::param({dim}, constant({dim}, 0.0), prefix + ".ffn.b2");
    return p;
  }

  std::vector<std::pair<std::string, Tensor>> params(const std::string& prefix) const {
    return {{prefix + ".lnq.g", lnq_g},   {prefix + ".lnq.b", lnq_b},
            {prefix + ".lnkv.g", lnkv_g}, {prefix + ".lnkv.b", lnkv_b},
            {prefix + ".lnf.g", lnf_g},   {prefix + ".lnf.b", lnf_b},
            {prefix + ".wq", wq},         {prefix + ".wk", wk},
            {prefix + ".wv", wv},         {prefix + ".wo", wo},
            {prefix + ".ffn.w1", ffn_w1}, {prefix + ".ffn.b1", ffn_b1},
            {prefix + ".ffn.w2", ffn_w2}, {prefix + ".ffn.b2", ffn_b2}};
  }
};

// Cross-attention decoder: queries from the search tokens, keys/values from
// the exemplar (+foveal) tokens. Zero layers is the identity.
inline Tensor decoder_forward(const Tensor& search, const Tensor& exemplar_group,
                              const std::vector<DecoderLayerParams>& layers, int heads) {
  Tensor s = search;
  for (const auto& p : layers) {
    int n = s.shape()[0];
    int c = s.shape()[1];
    int d = c / heads;
    Tensor qin = layernorm(s, p.lnq_g, p.lnq_b, kLnEps);
    Tensor kvin = layernorm(exemplar_group, p.lnkv_g, p.lnkv_b, kLnEps);
    int m = kvin.shape()[0];
    auto split = [&](const Tensor& t, int rows) {
      return permute(reshape(t, {rows, heads, d}), {1, 0, 2});
    };
    Tensor q = split(matmul(qin, p.wq), n);
    Tensor k = split(matmul(kvin, p.wk), m);
    Tensor v = split(matmul(kvin, p.wv), m);
    Tensor att = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d))));
    Tensor ctx = reshape(permute(matmul(att, v), {1, 0, 2}), {n, c});
    Tensor x1 = add(s, matmul(ctx, p.wo));
    Tensor ln = layernorm(x1, p.lnf_g, p.lnf_b, kLnEps);
    Tensor ffn = add(matmul(gelu(add(matmul(ln, p.ffn_w1), p.ffn_b1)), p.ffn_w2), p.ffn_b2);
    s = add(x1, ffn);
  }
  return s;
}

// Mean over heads and over exemplar-group query rows of the attention mass on
// each search token, reshaped to the search grid.
inline std::vector<double> target_attention_map(const std::vector<AttentionRecord>& records,
                                                int layer, const SegmentSpans& spans) {
  if (layer < 0 || layer >= static_cast<int>(records.size())) {
    throw std::invalid_argument("target_attention_map: layer " + std::to_string(layer) +
                                " out of range [0," + std::to_string(records.size()) + ")");
  }
  const AttentionRecord& rec = records[static_cast<size_t>(layer)];
  int eg = spans.exemplar_group();
  std::vector<double> map(static_cast<size_t>(spans.n_search), 0.0);
  for (int h = 0; h < rec.heads; ++h) {
    for (int q = 0; q < eg; ++q) {
      for (int s = 0; s < spans.n_search; ++s) {
        map[static_cast<size_t>(s)] += rec.at(h, q, eg + s);
      }
    }
  }
  double denom = static_cast<double>(rec.heads) * eg;
  for (auto& v : map) v /= denom;
  return map;
}

// Central correctness check of the module: attention computed jointly via the
// block-matrix softmax and re-computed row-group by row-group with separately
// evaluated logit blocks. Returns the max elementwise deviation. Single head.
inline double decompose_attention_check(const Tensor& e, const Tensor& s, const Tensor& wq,
                                        const Tensor& wk, const Tensor& wv) {
  int c = s.shape()[1];
  double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(c));
  bool has_e = e.defined() && e.shape()[0] > 0;

  // Route (a): concatenated block form.
  Tensor x = has_e ? concat({e, s}, 0) : s;
  Tensor joint = matmul(
      softmax_rows(scale(matmul(matmul(x, wq), transpose(matmul(x, wk))), inv_sqrt_d)),
      matmul(x, wv));

  // Route (b): per-group rows with separately computed logit blocks.
  auto logits = [&](const Tensor& a, const Tensor& b) {
    return scale(matmul(matmul(a, wq), transpose(matmul(b, wk))), inv_sqrt_d);
  };
  Tensor decomposed;
  if (has_e) {
    Tensor values = concat({matmul(e, wv), matmul(s, wv)}, 0);
    Tensor att_e = matmul(softmax_rows(concat({logits(e, e), logits(e, s)}, 1)), values);
    Tensor att_s = matmul(softmax_rows(concat({logits(s, e), logits(s, s)}, 1)), values);
    decomposed = concat({att_e, att_s}, 0);
  } else {
    decomposed = matmul(softmax_rows(logits(s, s)), matmul(s, wv));
  }

  double dev = 0.0;
  for (size_t i = 0; i < joint.values().size(); ++i) {
    dev = std::max(dev, std::fabs(joint.values()[i] - decomposed.values()[i]));
  }
  return dev;
}

}  // namespace simtrack
