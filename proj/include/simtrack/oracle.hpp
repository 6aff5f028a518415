#pragma once

// Brute-force reference implementations used by tests and the gradcheck
// command. Everything here is scalar loops over plain vectors; none of it
// calls into the production kernels it is used to validate.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "simtrack/box.hpp"

namespace simtrack::oracle {

struct OracleReport {
  std::string name;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  int trials = 0;
  double tolerance = 0.0;
  bool pass = false;

  nlohmann::json to_json() const {
    return {{"name", name},       {"max_abs_err", max_abs_err}, {"max_rel_err", max_rel_err},
            {"trials", trials},   {"tolerance", tolerance},     {"pass", pass}};
  }
};

using Mat = std::vector<std::vector<double>>;

inline Mat make_mat(int rows, int cols, double fill = 0.0) {
  return Mat(static_cast<size_t>(rows), std::vector<double>(static_cast<size_t>(cols), fill));
}

inline Mat mat_mul(const Mat& a, const Mat& b) {
  int m = static_cast<int>(a.size());
  int k = static_cast<int>(b.size());
  int n = static_cast<int>(b[0].size());
  Mat c = make_mat(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) c[i][j] += a[i][p] * b[p][j];
  return c;
}

inline std::vector<double> softmax_row(const std::vector<double>& row) {
  double mx = row[0];
  for (double v : row) mx = std::max(mx, v);
  std::vector<double> e(row.size());
  double s = 0.0;
  for (size_t i = 0; i < row.size(); ++i) {
    e[i] = std::exp(row[i] - mx);
    s += e[i];
  }
  for (auto& v : e) v /= s;
  return e;
}

// a(x, y) = (x Wq)(y Wk)^T / sqrt(d), evaluated entry by entry.
inline Mat logit_block(const Mat& x, const Mat& y, const Mat& wq, const Mat& wk) {
  Mat q = mat_mul(x, wq);
  Mat k = mat_mul(y, wk);
  int d = static_cast<int>(wq[0].size());
  Mat out = make_mat(static_cast<int>(q.size()), static_cast<int>(k.size()));
  for (size_t i = 0; i < q.size(); ++i)
    for (size_t j = 0; j < k.size(); ++j) {
      double s = 0.0;
      for (size_t p = 0; p < q[i].size(); ++p) s += q[i][p] * k[j][p];
      out[i][j] = s / std::sqrt(static_cast<double>(d));
    }
  return out;
}

struct JointAttention {
  Mat att_e;
  Mat att_s;
};

// Block form: softmax over the full concatenated logit matrix, then split.
inline JointAttention joint_attention_block_form(const Mat& e, const Mat& s, const Mat& wq,
                                                 const Mat& wk, const Mat& wv) {
  Mat x = e;
  x.insert(x.end(), s.begin(), s.end());
  Mat logits = logit_block(x, x, wq, wk);
  Mat values = mat_mul(x, wv);
  int nz = static_cast<int>(e.size());
  int c = static_cast<int>(wv[0].size());
  JointAttention out;
  out.att_e = make_mat(nz, c);
  out.att_s = make_mat(static_cast<int>(s.size()), c);
  for (size_t i = 0; i < x.size(); ++i) {
    std::vector<double> p = softmax_row(logits[i]);
    std::vector<double> row(static_cast<size_t>(c), 0.0);
    for (size_t j = 0; j < x.size(); ++j)
      for (int q = 0; q < c; ++q) row[static_cast<size_t>(q)] += p[j] * values[j][static_cast<size_t>(q)];
    if (static_cast<int>(i) < nz) {
      out.att_e[i] = row;
    } else {
      out.att_s[i - static_cast<size_t>(nz)] = row;
    }
  }
  return out;
}

// Decomposed form: per-group rows softmax([a(x,e), a(x,s)]) [e Wv; s Wv].
inline JointAttention joint_attention_decomposed(const Mat& e, const Mat& s, const Mat& wq,
                                                 const Mat& wk, const Mat& wv) {
  Mat ve = mat_mul(e, wv);
  Mat vs = mat_mul(s, wv);
  Mat values = ve;
  values.insert(values.end(), vs.begin(), vs.end());
  int c = static_cast<int>(wv[0].size());

  auto rows_for = [&](const Mat& x) {
    Mat a_xe = logit_block(x, e, wq, wk);
    Mat a_xs = logit_block(x, s, wq, wk);
    Mat out = make_mat(static_cast<int>(x.size()), c);
    for (size_t i = 0; i < x.size(); ++i) {
      std::vector<double> row = a_xe[i];
      row.insert(row.end(), a_xs[i].begin(), a_xs[i].end());
      std::vector<double> p = softmax_row(row);
      for (size_t j = 0; j < values.size(); ++j)
        for (int q = 0; q < c; ++q) out[i][static_cast<size_t>(q)] += p[j] * values[j][static_cast<size_t>(q)];
    }
    return out;
  };
  return {rows_for(e), rows_for(s)};
}

// Masked variant: with cross-group terms removed, each group reduces to its
// own self-attention.
inline JointAttention joint_attention_masked(const Mat& e, const Mat& s, const Mat& wq,
                                             const Mat& wk, const Mat& wv) {
  auto self_att = [&](const Mat& x) {
    Mat logits = logit_block(x, x, wq, wk);
    Mat values = mat_mul(x, wv);
    int c = static_cast<int>(wv[0].size());
    Mat out = make_mat(static_cast<int>(x.size()), c);
    for (size_t i = 0; i < x.size(); ++i) {
      std::vector<double> p = softmax_row(logits[i]);
      for (size_t j = 0; j < x.size(); ++j)
        for (int q = 0; q < c; ++q) out[i][static_cast<size_t>(q)] += p[j] * values[j][static_cast<size_t>(q)];
    }
    return out;
  };
  return {self_att(e), self_att(s)};
}

// Central difference of f with respect to *slot.
inline double finite_diff(const std::function<double()>& f, double* slot, double h = 1e-5) {
  double keep = *slot;
  *slot = keep + h;
  double up = f();
  *slot = keep - h;
  double dn = f();
  *slot = keep;
  return (up - dn) / (2.0 * h);
}

struct RasterAreas {
  double intersection = 0.0;
  double union_ = 0.0;
  double hull = 0.0;
};

// Scanline rasterization over the unit square at the given resolution. Each
// cell contributes its covered fraction (per-axis overlap products), so the
// grid sum reproduces the areas up to floating-point rounding; areas are then
// combined into union/hull by per-cell inclusion-exclusion.
inline RasterAreas raster_area(const Box& a, const Box& b, double resolution = 1e-3) {
  int n = static_cast<int>(std::lround(1.0 / resolution));
  Box hull{std::min(a.x1, b.x1), std::min(a.y1, b.y1), std::max(a.x2, b.x2),
           std::max(a.y2, b.y2)};
  Box inter{std::max(a.x1, b.x1), std::max(a.y1, b.y1), std::min(a.x2, b.x2),
            std::min(a.y2, b.y2)};

  auto axis_overlap = [&](double lo, double hi) {
    std::vector<double> out(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
      double c0 = k * resolution, c1 = c0 + resolution;
      out[static_cast<size_t>(k)] = std::max(0.0, std::min(hi, c1) - std::max(lo, c0));
    }
    return out;
  };
  std::vector<double> ax = axis_overlap(a.x1, a.x2), ay = axis_overlap(a.y1, a.y2);
  std::vector<double> bx = axis_overlap(b.x1, b.x2), by = axis_overlap(b.y1, b.y2);
  std::vector<double> ix = axis_overlap(inter.x1, inter.x2), iy = axis_overlap(inter.y1, inter.y2);
  std::vector<double> hx = axis_overlap(hull.x1, hull.x2), hy = axis_overlap(hull.y1, hull.y2);

  RasterAreas out;
  for (int r = 0; r < n; ++r) {
    double ra = ay[static_cast<size_t>(r)], rb = by[static_cast<size_t>(r)];
    double ri = iy[static_cast<size_t>(r)], rh = hy[static_cast<size_t>(r)];
    if (ra == 0.0 && rb == 0.0 && rh == 0.0) continue;
    double row_i = 0.0, row_u = 0.0, row_h = 0.0;
    for (int c = 0; c < n; ++c) {
      double ca = ax[static_cast<size_t>(c)] * ra;
      double cb = bx[static_cast<size_t>(c)] * rb;
      double ci = ix[static_cast<size_t>(c)] * ri;
      row_i += ci;
      row_u += ca + cb - ci;
      row_h += hx[static_cast<size_t>(c)] * rh;
    }
    out.intersection += row_i;
    out.union_ += row_u;
    out.hull += row_h;
  }
  return out;
}

inline double raster_giou(const Box& a, const Box& b, double resolution = 1e-3) {
  RasterAreas r = raster_area(a, b, resolution);
  if (r.union_ <= 0.0 || r.hull <= 0.0) return -1.0;
  return r.intersection / r.union_ - (r.hull - r.union_) / r.hull;
}

}  // namespace simtrack::oracle
