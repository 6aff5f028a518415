#pragma once

// Comparison harness between the production kernels and the scalar-loop
// oracles. Every row is evaluated in full even when earlier rows fail.

#include <string>
#include <vector>

#include "simtrack/config.hpp"
#include "simtrack/oracle.hpp"

namespace simtrack {

namespace detail {

inline oracle::Mat mat_of(const Tensor& t) {
  int rows = t.shape()[0], cols = t.shape()[1];
  oracle::Mat m = oracle::make_mat(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m[i][j] = t.values()[static_cast<size_t>(i) * cols + j];
  return m;
}

inline std::vector<double> rand_vec(Rng& rng, int64_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Spec floor semantics: err < max(1e-8, tol * max(|a|,|b|)) maps onto a
// single ratio err / max(denom, 1e-8/tol).
inline double floored_rel(double a, double b, double tol) {
  double err = std::fabs(a - b);
  double denom = std::max(std::fabs(a), std::fabs(b));
  return err / std::max(denom, 1e-8 / tol);
}

}  // namespace detail

inline oracle::OracleReport gradcheck_matmul(uint64_t seed) {
  oracle::OracleReport rep;
  rep.name = "matmul_vs_triple_loop";
  rep.tolerance = 1e-10;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(seed, 10 + static_cast<uint64_t>(trial)));
    int m = rng.uniform_int(1, 32), k = rng.uniform_int(1, 32), n = rng.uniform_int(1, 32);
    Tensor a = Tensor::from({m, k}, detail::rand_vec(rng, m * k));
    Tensor b = Tensor::from({k, n}, detail::rand_vec(rng, k * n));
    oracle::Mat want = oracle::mat_mul(detail::mat_of(a), detail::mat_of(b));
    Tensor got = matmul(a, b);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        double g = got.values()[static_cast<size_t>(i) * n + j];
        rep.max_abs_err = std::max(rep.max_abs_err, std::fabs(g - want[i][j]));
        rep.max_rel_err = std::max(
            rep.max_rel_err, std::fabs(g - want[i][j]) / std::max(1.0, std::fabs(want[i][j])));
      }
    }
    ++rep.trials;
  }
  rep.pass = rep.max_rel_err <= rep.tolerance;
  return rep;
}

inline oracle::OracleReport gradcheck_softmax(uint64_t seed) {
  oracle::OracleReport rep;
  rep.name = "softmax_vs_direct_formula";
  rep.tolerance = 1e-12;
  for (int trial = 0; trial < 30; ++trial) {
    Rng rng(derive_seed(seed, 40 + static_cast<uint64_t>(trial)));
    int n = rng.uniform_int(1, 16);
    std::vector<double> row = detail::rand_vec(rng, n, -20.0, 20.0);
    Tensor y = softmax_rows(Tensor::from({n}, row));
    std::vector<double> want = oracle::softmax_row(row);
    for (int i = 0; i < n; ++i) {
      rep.max_abs_err = std::max(rep.max_abs_err, std::fabs(y.values()[i] - want[i]));
    }
    ++rep.trials;
  }
  rep.max_rel_err = rep.max_abs_err;
  rep.pass = rep.max_abs_err <= rep.tolerance;
  return rep;
}

inline oracle::OracleReport gradcheck_attention_eq5(uint64_t seed) {
  oracle::OracleReport rep;
  rep.name = "attention_kernel_vs_eq5_loop_oracle";
  rep.tolerance = 1e-10;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(seed, 70 + static_cast<uint64_t>(trial)));
    int nz = rng.uniform_int(1, 5), nx = rng.uniform_int(1, 8), c = 4 * rng.uniform_int(1, 4);
    Tensor e = Tensor::from({nz, c}, detail::rand_vec(rng, nz * c));
    Tensor s = Tensor::from({nx, c}, detail::rand_vec(rng, nx * c));
    Tensor wq = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    Tensor wk = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    Tensor wv = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    std::vector<double> eye(static_cast<size_t>(c) * c, 0.0);
    for (int i = 0; i < c; ++i) eye[static_cast<size_t>(i) * c + i] = 1.0;
    Tensor kernel = multihead_self_attention(concat({e, s}, 0), 1, wq, wk, wv,
                                             Tensor::from({c, c}, eye), Tensor());
    auto want = oracle::joint_attention_block_form(detail::mat_of(e), detail::mat_of(s),
                                                   detail::mat_of(wq), detail::mat_of(wk),
                                                   detail::mat_of(wv));
    for (int i = 0; i < nz + nx; ++i) {
      const auto& wrow = i < nz ? want.att_e[static_cast<size_t>(i)]
                                : want.att_s[static_cast<size_t>(i - nz)];
      for (int j = 0; j < c; ++j) {
        rep.max_abs_err = std::max(
            rep.max_abs_err,
            std::fabs(kernel.values()[static_cast<size_t>(i) * c + j] - wrow[static_cast<size_t>(j)]));
      }
    }
    ++rep.trials;
  }
  rep.max_rel_err = rep.max_abs_err;
  rep.pass = rep.max_abs_err <= rep.tolerance;
  return rep;
}

inline oracle::OracleReport gradcheck_attention_eq6(uint64_t seed) {
  oracle::OracleReport rep;
  rep.name = "attention_kernel_vs_eq6_decomposed_oracle";
  rep.tolerance = 1e-10;
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(derive_seed(seed, 110 + static_cast<uint64_t>(trial)));
    int nz = rng.uniform_int(1, 5), nx = rng.uniform_int(1, 8), c = 4 * rng.uniform_int(1, 4);
    Tensor e = Tensor::from({nz, c}, detail::rand_vec(rng, nz * c));
    Tensor s = Tensor::from({nx, c}, detail::rand_vec(rng, nx * c));
    Tensor wq = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    Tensor wk = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    Tensor wv = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    std::vector<double> eye(static_cast<size_t>(c) * c, 0.0);
    for (int i = 0; i < c; ++i) eye[static_cast<size_t>(i) * c + i] = 1.0;
    Tensor kernel = multihead_self_attention(concat({e, s}, 0), 1, wq, wk, wv,
                                             Tensor::from({c, c}, eye), Tensor());
    auto want = oracle::joint_attention_decomposed(detail::mat_of(e), detail::mat_of(s),
                                                   detail::mat_of(wq), detail::mat_of(wk),
                                                   detail::mat_of(wv));
    for (int i = 0; i < nz + nx; ++i) {
      const auto& wrow = i < nz ? want.att_e[static_cast<size_t>(i)]
                                : want.att_s[static_cast<size_t>(i - nz)];
      for (int j = 0; j < c; ++j) {
        rep.max_abs_err = std::max(
            rep.max_abs_err,
            std::fabs(kernel.values()[static_cast<size_t>(i) * c + j] - wrow[static_cast<size_t>(j)]));
      }
    }
    // the production dual-route check is part of the same row
    rep.max_abs_err = std::max(rep.max_abs_err, decompose_attention_check(e, s, wq, wk, wv));
    ++rep.trials;
  }
  rep.max_rel_err = rep.max_abs_err;
  rep.pass = rep.max_abs_err <= rep.tolerance;
  return rep;
}

inline oracle::OracleReport gradcheck_siamese(uint64_t seed) {
  oracle::OracleReport rep;
  rep.name = "gated_off_vs_masked_oracle";
  rep.tolerance = 1e-10;
  for (int trial = 0; trial < 15; ++trial) {
    Rng rng(derive_seed(seed, 150 + static_cast<uint64_t>(trial)));
    int nz = rng.uniform_int(1, 5), nx = rng.uniform_int(1, 8), c = 4 * rng.uniform_int(1, 4);
    Tensor e = Tensor::from({nz, c}, detail::rand_vec(rng, nz * c));
    Tensor s = Tensor::from({nx, c}, detail::rand_vec(rng, nx * c));
    Tensor wq = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    Tensor wk = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    Tensor wv = Tensor::from({c, c}, detail::rand_vec(rng, c * c, -0.5, 0.5));
    std::vector<double> eye(static_cast<size_t>(c) * c, 0.0);
    for (int i = 0; i < c; ++i) eye[static_cast<size_t>(i) * c + i] = 1.0;
    Tensor masked = multihead_self_attention(concat({e, s}, 0), 1, wq, wk, wv,
                                             Tensor::from({c, c}, eye),
                                             build_gate_mask(SegmentSpans{nz, 0, nx}));
    auto want = oracle::joint_attention_masked(detail::mat_of(e), detail::mat_of(s),
                                               detail::mat_of(wq), detail::mat_of(wk),
                                               detail::mat_of(wv));
    for (int i = 0; i < nz + nx; ++i) {
      const auto& wrow = i < nz ? want.att_e[static_cast<size_t>(i)]
                                : want.att_s[static_cast<size_t>(i - nz)];
      for (int j = 0; j < c; ++j) {
        rep.max_abs_err = std::max(
            rep.max_abs_err,
            std::fabs(masked.values()[static_cast<size_t>(i) * c + j] - wrow[static_cast<size_t>(j)]));
      }
    }
    ++rep.trials;
  }
  rep.max_rel_err = rep.max_abs_err;
  rep.pass = rep.max_abs_err <= rep.tolerance;
  return rep;
}

inline oracle::OracleReport gradcheck_giou(uint64_t seed) {
  oracle::OracleReport rep;
  rep.name = "giou_vs_rasterization";
  rep.tolerance = 2e-3;
  Rng rng(derive_seed(seed, 200));
  for (int trial = 0; trial < 100; ++trial) {
    auto rand_box = [&] {
      double w = rng.uniform(0.3, 0.9), h = rng.uniform(0.3, 0.9);
      double x = rng.uniform(0.0, 1.0 - w), y = rng.uniform(0.0, 1.0 - h);
      return Box{x, y, x + w, y + h};
    };
    Box a = rand_box(), b = rand_box();
    double err = std::fabs(giou(a, b) - oracle::raster_giou(a, b));
    rep.max_abs_err = std::max(rep.max_abs_err, err);
    ++rep.trials;
  }
  rep.max_rel_err = rep.max_abs_err;
  rep.pass = rep.max_abs_err <= rep.tolerance;
  return rep;
}

// Autodiff vs central differences through the full model loss, sampling
// every parameter group.
inline oracle::OracleReport gradcheck_full_model(const RunConfig& cfg, uint64_t seed,
                                                 int samples_per_param = 2) {
  oracle::OracleReport rep;
  rep.name = "full_model_autodiff_vs_central_differences";
  rep.tolerance = 1e-4;

  ModelConfig mc = cfg.model;
  mc.seed = derive_seed(seed, 300);
  TrackModel model = TrackModel::init(mc);

  DatasetParams dp = cfg.data;
  SyntheticSequence seq = generate_sequence(derive_seed(seed, 301), 4, dp);
  CropResult ex = crop_resize(seq.frames[0], seq.gt[0], cfg.train.exemplar_factor,
                              mc.exemplar_size);
  CropResult se = crop_resize(seq.frames[2], seq.gt[2], cfg.train.search_factor, mc.search_size);
  double es = static_cast<double>(mc.exemplar_size);
  Box ebox{ex.box_norm.x1 * es, ex.box_norm.y1 * es, ex.box_norm.x2 * es, ex.box_norm.y2 * es};

  auto loss_value = [&]() {
    ModelForward fwd = model.forward(ex.image, se.image, ebox);
    return total_loss(fwd.pred, se.box_norm, cfg.train.lambda_iou, cfg.train.lambda_l1).item();
  };

  model.zero_grad();
  {
    ModelForward fwd = model.forward(ex.image, se.image, ebox);
    Tensor loss = total_loss(fwd.pred, se.box_norm, cfg.train.lambda_iou, cfg.train.lambda_l1);
    backward(loss);
  }

  Rng pick(derive_seed(seed, 302));
  auto params = model.params();
  for (auto& [name, p] : params) {
    for (int s = 0; s < samples_per_param; ++s) {
      size_t idx = static_cast<size_t>(pick.uniform_int(0, static_cast<int>(p.size() - 1)));
      double ad = p.has_grad() ? p.grad()[idx] : 0.0;
      double fd = oracle::finite_diff(loss_value, &p.leaf_values()[idx]);
      rep.max_abs_err = std::max(rep.max_abs_err, std::fabs(ad - fd));
      rep.max_rel_err = std::max(rep.max_rel_err, detail::floored_rel(ad, fd, rep.tolerance));
      ++rep.trials;
    }
  }
  rep.pass = rep.max_rel_err <= rep.tolerance;
  return rep;
}

inline std::vector<oracle::OracleReport> run_gradcheck_suite(const RunConfig& cfg, uint64_t seed) {
  std::vector<oracle::OracleReport> out;
  out.push_back(gradcheck_matmul(seed));
  out.push_back(gradcheck_softmax(seed));
  out.push_back(gradcheck_attention_eq5(seed));
  out.push_back(gradcheck_attention_eq6(seed));
  out.push_back(gradcheck_siamese(seed));
  out.push_back(gradcheck_giou(seed));
  out.push_back(gradcheck_full_model(cfg, seed));
  return out;
}

}  // namespace simtrack
