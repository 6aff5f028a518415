#pragma once

// Corner prediction head and training losses. Search tokens are scored by two
// per-token MLPs into top-left / bottom-right logit grids; a spatial softmax
// and soft-argmax turn each grid into an expected corner, and the box is
// trained with l1 + generalized IoU.

#include <string>
#include <utility>
#include <vector>

#include "simtrack/box.hpp"
#include "simtrack/tensor.hpp"

namespace simtrack {

struct CornerHead {
  Tensor tl_w1, tl_b1, tl_w2, tl_b2;
  Tensor br_w1, br_b1, br_w2, br_b2;

  static CornerHead init(int dim, Rng& rng) {
    auto normal = [&rng](Shape s) {
      std::vector<double> v(static_cast<size_t>(shape_numel(s)));
      for (auto& x : v) x = rng.normal(0.0, 0.02);
      return v;
    };
    auto zeros = [](Shape s) {
      return std::vector<double>(static_cast<size_t>(shape_numel(s)), 0.0);
    };
    CornerHead h;
    h.tl_w1 = Tensor::param({dim, dim}, normal({dim, dim}), "head.tl.w1");
    h.tl_b1 = Tensor::param({dim}, zeros({dim}), "head.tl.b1");
    h.tl_w2 = Tensor::param({dim, 1}, normal({dim, 1}), "head.tl.w2");
    h.tl_b2 = Tensor::param({1}, zeros({1}), "head.tl.b2");
    h.br_w1 = Tensor::param({dim, dim}, normal({dim, dim}), "head.br.w1");
    h.br_b1 = Tensor::param({dim}, zeros({dim}), "head.br.b1");
    h.br_w2 = Tensor::param({dim, 1}, normal({dim, 1}), "head.br.w2");
    h.br_b2 = Tensor::param({1}, zeros({1}), "head.br.b2");
    return h;
  }

  std::vector<std::pair<std::string, Tensor>> params() const {
    return {{"head.tl.w1", tl_w1}, {"head.tl.b1", tl_b1}, {"head.tl.w2", tl_w2},
            {"head.tl.b2", tl_b2}, {"head.br.w1", br_w1}, {"head.br.b1", br_b1},
            {"head.br.w2", br_w2}, {"head.br.b2", br_b2}};
  }
};

// Differentiable expectation of the cell-center coordinate under a spatial
// probability grid. Cell centers sit at ((j+.5)/gw, (i+.5)/gh).
struct SoftArgmax {
  Tensor x;  // scalar
  Tensor y;  // scalar
};

inline SoftArgmax soft_argmax(const Tensor& probs, int grid_h, int grid_w) {
  std::vector<double> cx(static_cast<size_t>(grid_h) * grid_w);
  std::vector<double> cy(static_cast<size_t>(grid_h) * grid_w);
  for (int i = 0; i < grid_h; ++i) {
    for (int j = 0; j < grid_w; ++j) {
      cx[static_cast<size_t>(i) * grid_w + j] = (j + 0.5) / grid_w;
      cy[static_cast<size_t>(i) * grid_w + j] = (i + 0.5) / grid_h;
    }
  }
  Tensor cxt = Tensor::from({grid_h * grid_w}, std::move(cx));
  Tensor cyt = Tensor::from({grid_h * grid_w}, std::move(cy));
  return {sum(mul(probs, cxt)), sum(mul(probs, cyt))};
}

struct BoxPrediction {
  Tensor x1, y1, x2, y2;   // scalars in the search crop's unit square
  Tensor prob_tl, prob_br;  // [grid_h*grid_w] probability grids
  int grid_h = 0;
  int grid_w = 0;

  Box box() const { return {x1.item(), y1.item(), x2.item(), y2.item()}; }
};

// s_out: [N_x, C] search tokens in grid row-major order.
inline BoxPrediction predict_box(const Tensor& s_out, const CornerHead& head, int grid_h,
                                 int grid_w) {
  int n = s_out.shape()[0];
  if (n != grid_h * grid_w) {
    throw std::invalid_argument("predict_box: token count " + std::to_string(n) +
                                " does not fill a " + std::to_string(grid_h) + "x" +
                                std::to_string(grid_w) + " grid");
  }
  auto logits = [&](const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    Tensor h = gelu(add(matmul(s_out, w1), b1));
    return reshape(add(matmul(h, w2), b2), {n});
  };
  BoxPrediction out;
  out.grid_h = grid_h;
  out.grid_w = grid_w;
  out.prob_tl = softmax_rows(logits(head.tl_w1, head.tl_b1, head.tl_w2, head.tl_b2));
  out.prob_br = softmax_rows(logits(head.br_w1, head.br_b1, head.br_w2, head.br_b2));
  SoftArgmax tl = soft_argmax(out.prob_tl, grid_h, grid_w);
  SoftArgmax br = soft_argmax(out.prob_br, grid_h, grid_w);
  out.x1 = tl.x;
  out.y1 = tl.y;
  out.x2 = br.x;
  out.y2 = br.y;
  return out;
}

namespace detail {

inline void check_gt(const Box& gt) {
  if (!gt.valid()) {
    throw std::invalid_argument("loss: ground-truth box is degenerate");
  }
}

}  // namespace detail

// 1 - GIoU(pred, gt), built from differentiable scalar ops. A degenerate
// prediction (x1 >= x2 or y1 >= y2) contributes zero intersection/area but
// its coordinates still shape the enclosing hull, so gradients keep flowing.
inline Tensor giou_loss(const BoxPrediction& pred, const Box& gt) {
  detail::check_gt(gt);
  Tensor zero = Tensor::scalar(0.0);
  Tensor gx1 = Tensor::scalar(gt.x1), gy1 = Tensor::scalar(gt.y1);
  Tensor gx2 = Tensor::scalar(gt.x2), gy2 = Tensor::scalar(gt.y2);

  Tensor iw = relu(sub(vmin(pred.x2, gx2), vmax(pred.x1, gx1)));
  Tensor ih = relu(sub(vmin(pred.y2, gy2), vmax(pred.y1, gy1)));
  Tensor inter = mul(iw, ih);

  Tensor pw = relu(sub(pred.x2, pred.x1));
  Tensor ph = relu(sub(pred.y2, pred.y1));
  Tensor area_p = mul(pw, ph);
  Tensor area_g = Tensor::scalar(gt.area());
  Tensor uni = sub(add(area_p, area_g), inter);

  Tensor hx1 = vmin(vmin(pred.x1, pred.x2), gx1);
  Tensor hy1 = vmin(vmin(pred.y1, pred.y2), gy1);
  Tensor hx2 = vmax(vmax(pred.x1, pred.x2), gx2);
  Tensor hy2 = vmax(vmax(pred.y1, pred.y2), gy2);
  Tensor hull = mul(sub(hx2, hx1), sub(hy2, hy1));

  Tensor giou = sub(div(inter, uni), div(sub(hull, uni), hull));
  return sub(Tensor::scalar(1.0), giou);
}

// Mean absolute difference over the four coordinates.
inline Tensor l1_loss(const BoxPrediction& pred, const Box& gt) {
  detail::check_gt(gt);
  Tensor terms = concat({reshape(vabs(sub(pred.x1, Tensor::scalar(gt.x1))), {1}),
                         reshape(vabs(sub(pred.y1, Tensor::scalar(gt.y1))), {1}),
                         reshape(vabs(sub(pred.x2, Tensor::scalar(gt.x2))), {1}),
                         reshape(vabs(sub(pred.y2, Tensor::scalar(gt.y2))), {1})},
                        0);
  return mean(terms);
}

inline Tensor total_loss(const BoxPrediction& pred, const Box& gt, double lambda_iou,
                         double lambda_l1) {
  return add(scale(giou_loss(pred, gt), lambda_iou), scale(l1_loss(pred, gt), lambda_l1));
}

}  // namespace simtrack
