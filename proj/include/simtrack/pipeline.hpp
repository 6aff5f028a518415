#pragma once

// End-to-end machinery: exemplar/search cropping with area factors, OPE-style
// metrics, the AdamW training loop, and the frame-by-frame tracker.

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "simtrack/model.hpp"
#include "simtrack/synthetic.hpp"

namespace simtrack {

// ---------------------------------------------------------------------------
// Cropping

// Affine record tying a square crop back to frame pixels.
struct CropTransform {
  double x0 = 0, y0 = 0, side = 1;
  int out = 1;
};

inline Box to_crop_coords(const CropTransform& t, const Box& frame_box) {
  return {(frame_box.x1 - t.x0) / t.side, (frame_box.y1 - t.y0) / t.side,
          (frame_box.x2 - t.x0) / t.side, (frame_box.y2 - t.y0) / t.side};
}

inline Box to_frame_coords(const CropTransform& t, const Box& crop_box) {
  return {t.x0 + crop_box.x1 * t.side, t.y0 + crop_box.y1 * t.side,
          t.x0 + crop_box.x2 * t.side, t.y0 + crop_box.y2 * t.side};
}

struct CropResult {
  Image image;
  Box box_norm;  // the input box in normalized crop coordinates
  CropTransform transform;
};

// Square crop of side f*sqrt(w*h) centered on the box, bilinearly resized to
// out_size. Out-of-frame area reads as the per-channel mean of the in-frame
// part of the crop.
inline CropResult crop_resize(const Image& frame, const Box& box, double area_factor,
                              int out_size) {
  if (area_factor < 1.0) throw std::invalid_argument("crop_resize: area factor must be >= 1");
  double w = box.width(), h = box.height();
  if (!(w > 0.0) || !(h > 0.0)) {
    throw std::invalid_argument("crop_resize: degenerate box (side " + std::to_string(w) + "x" +
                                std::to_string(h) + ")");
  }
  double side = area_factor * std::sqrt(w * h);
  double x0 = box.cx() - side / 2, y0 = box.cy() - side / 2;

  // per-channel mean over the in-frame part of the crop rect
  double pad[3] = {0.5, 0.5, 0.5};
  {
    int ix0 = std::max(0, static_cast<int>(std::floor(x0)));
    int ix1 = std::min(frame.width, static_cast<int>(std::ceil(x0 + side)));
    int iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    int iy1 = std::min(frame.height, static_cast<int>(std::ceil(y0 + side)));
    if (ix0 < ix1 && iy0 < iy1) {
      double acc[3] = {0, 0, 0};
      for (int y = iy0; y < iy1; ++y)
        for (int x = ix0; x < ix1; ++x)
          for (int c = 0; c < 3; ++c) acc[c] += frame.at(y, x, c);
      double n = static_cast<double>(ix1 - ix0) * (iy1 - iy0);
      for (int c = 0; c < 3; ++c) pad[c] = acc[c] / n;
    }
  }

  CropResult out;
  out.transform = {x0, y0, side, out_size};
  out.image = Image(out_size, out_size);
  double step = side / out_size;
  for (int v = 0; v < out_size; ++v) {
    double sy = y0 + (v + 0.5) * step - 0.5;
    for (int u = 0; u < out_size; ++u) {
      double sx = x0 + (u + 0.5) * step - 0.5;
      for (int c = 0; c < 3; ++c) out.image.at(v, u, c) = frame.sample(sx, sy, c, pad[c]);
    }
  }
  out.box_norm = to_crop_coords(out.transform, box);
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  std::vector<double> per_frame_iou;
  std::vector<double> per_frame_center_err;  // center error / sqrt(gt area)
  std::vector<double> success;               // over thresholds 0, 0.05, ..., 1
  double auc = 0.0;
  double precision = 0.0;  // normalized center error <= 0.2 (the 20px-per-
                           // 100px-target convention)
  double mean_iou = 0.0;
};

// Success at threshold 0 demands actual overlap (IoU > 0); the remaining
// thresholds are inclusive so a perfect track scores 1 at every threshold.
inline std::vector<double> success_curve(const std::vector<double>& ious) {
  std::vector<double> curve(21, 0.0);
  if (ious.empty()) return curve;
  for (int k = 0; k <= 20; ++k) {
    double thr = k * 0.05;
    int hits = 0;
    for (double v : ious) hits += (k == 0 ? v > 0.0 : v >= thr) ? 1 : 0;
    curve[static_cast<size_t>(k)] = static_cast<double>(hits) / static_cast<double>(ious.size());
  }
  return curve;
}

inline double auc_from_ious(const std::vector<double>& ious) {
  auto curve = success_curve(ious);
  double s = 0.0;
  for (double v : curve) s += v;
  return s / static_cast<double>(curve.size());
}

inline Metrics evaluate(const std::vector<Box>& pred, const std::vector<Box>& gt) {
  if (pred.size() != gt.size() || pred.empty()) {
    throw std::invalid_argument("evaluate: prediction/ground-truth lists must match and be non-empty");
  }
  Metrics m;
  for (size_t i = 0; i < pred.size(); ++i) {
    m.per_frame_iou.push_back(iou(pred[i], gt[i]));
    double norm = std::sqrt(gt[i].area());
    m.per_frame_center_err.push_back(norm > 0 ? center_distance(pred[i], gt[i]) / norm : 1e9);
  }
  m.success = success_curve(m.per_frame_iou);
  m.auc = auc_from_ious(m.per_frame_iou);
  int prec_hits = 0;
  double iou_sum = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    prec_hits += m.per_frame_center_err[i] <= 0.2 ? 1 : 0;
    iou_sum += m.per_frame_iou[i];
  }
  m.precision = static_cast<double>(prec_hits) / static_cast<double>(pred.size());
  m.mean_iou = iou_sum / static_cast<double>(pred.size());
  return m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainSchedule {
  int epochs = 10;
  int steps_per_epoch = 50;
  int batch_size = 8;
  double lr = 1e-4;            // peak rate
  int warmup_steps = 100;      // linear ramp to peak
  double lr_min_frac = 0.1;    // cosine floor as a fraction of peak
  bool cosine_decay = true;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lambda_iou = 2.0;
  double lambda_l1 = 5.0;
  double exemplar_factor = 2.0;  // side factors; squared = the area factors
  double search_factor = 4.0;
  int frame_gap_max = 30;
  double center_jitter = 0.1;  // search-center jitter, fraction of crop side
  double scale_jitter = 0.35;  // log-uniform crop scale jitter; at inference
                               // the crop is sized by the previous prediction,
                               // so training must cover mis-scaled crops
  double aspect_jitter = 0.1;  // extra per-axis log-uniform jitter
  int n_train_videos = 200;
  int eval_videos = 0;  // held-out AUC per epoch when > 0
  int eval_seq_length = 24;
};

struct TrainSample {
  Image exemplar;      // exemplar crop
  Box exemplar_box;    // target in exemplar-crop pixels
  Image search;        // search crop
  Box search_box;      // target in normalized search-crop coordinates
  int frame_gap = 0;
};

// Decoupled-weight-decay Adam with linear warmup and optional cosine decay
// over the model's ordered parameter table.
class AdamW {
 public:
  AdamW(const TrainSchedule& s) : s_(s), total_steps_(s.epochs * s.steps_per_epoch) {}

  double current_lr() const {
    if (t_ <= s_.warmup_steps && s_.warmup_steps > 0) {
      return s_.lr * static_cast<double>(t_) / static_cast<double>(s_.warmup_steps);
    }
    if (!s_.cosine_decay || total_steps_ <= s_.warmup_steps) return s_.lr;
    double progress = static_cast<double>(t_ - s_.warmup_steps) /
                      static_cast<double>(total_steps_ - s_.warmup_steps);
    progress = std::min(1.0, std::max(0.0, progress));
    double lo = s_.lr * s_.lr_min_frac;
    return lo + 0.5 * (s_.lr - lo) * (1.0 + std::cos(3.14159265358979323846 * progress));
  }

  void step(std::vector<std::pair<std::string, Tensor>>& params) {
    ++t_;
    if (m_.empty()) {
      for (auto& [name, p] : params) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
      }
    }
    double lr = current_lr();
    double bc1 = 1.0 - std::pow(s_.beta1, t_);
    double bc2 = 1.0 - std::pow(s_.beta2, t_);
    for (size_t k = 0; k < params.size(); ++k) {
      Tensor& p = params[k].second;
      if (!p.has_grad()) continue;
      auto& val = p.leaf_values();
      const auto& g = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (size_t i = 0; i < val.size(); ++i) {
        m[i] = s_.beta1 * m[i] + (1 - s_.beta1) * g[i];
        v[i] = s_.beta2 * v[i] + (1 - s_.beta2) * g[i] * g[i];
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        val[i] -= lr * (mhat / (std::sqrt(vhat) + s_.adam_eps) + s_.weight_decay * val[i]);
      }
    }
  }

 private:
  TrainSchedule s_;
  int total_steps_ = 0;
  int t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Draws exemplar/search pairs from a pool of synthetic videos. Frames are
// rendered on demand; nothing but the trajectories is kept resident.
class TrainSampler {
 public:
  TrainSampler(const ModelConfig& mc, const TrainSchedule& ts, const DatasetParams& dp,
               uint64_t seed)
      : mc_(mc), ts_(ts), dp_(dp) {
    for (int i = 0; i < ts.n_train_videos; ++i) {
      specs_.push_back(detail::make_video_spec(derive_seed(seed, static_cast<uint64_t>(i)),
                                               dp.seq_length, dp));
    }
  }

  TrainSample sample(Rng& rng) const {
    const auto& spec = specs_[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(specs_.size()) - 1))];
    int t = dp_.seq_length;
    int i = rng.uniform_int(0, t - 2);
    int gap = rng.uniform_int(1, std::min(ts_.frame_gap_max, t - 1 - i));
    int j = i + gap;

    TrainSample out;
    out.frame_gap = gap;
    Image frame_i = detail::render_frame(spec, i);
    Image frame_j = detail::render_frame(spec, j);
    const Box& gt_i = spec.target.track[static_cast<size_t>(i)];
    const Box& gt_j = spec.target.track[static_cast<size_t>(j)];

    CropResult ex = crop_resize(frame_i, gt_i, ts_.exemplar_factor, mc_.exemplar_size);
    out.exemplar = std::move(ex.image);
    double es = static_cast<double>(mc_.exemplar_size);
    Box en = ex.box_norm;
    out.exemplar_box = {en.x1 * es, en.y1 * es, en.x2 * es, en.y2 * es};

    // jitter the crop scale and center around the target so inference-time
    // crops (sized by the previous prediction) stay in distribution
    double fscale = std::exp(rng.uniform(-ts_.scale_jitter, ts_.scale_jitter));
    double fw = fscale * std::exp(rng.uniform(-ts_.aspect_jitter, ts_.aspect_jitter));
    double fh = fscale * std::exp(rng.uniform(-ts_.aspect_jitter, ts_.aspect_jitter));
    double w2 = gt_j.width() * fw / 2, h2 = gt_j.height() * fh / 2;
    double side = ts_.search_factor * std::sqrt(gt_j.width() * fw * gt_j.height() * fh);
    double jx = rng.uniform(-ts_.center_jitter, ts_.center_jitter) * side;
    double jy = rng.uniform(-ts_.center_jitter, ts_.center_jitter) * side;
    Box pseudo{gt_j.cx() + jx - w2, gt_j.cy() + jy - h2, gt_j.cx() + jx + w2,
               gt_j.cy() + jy + h2};
    CropResult se = crop_resize(frame_j, pseudo, ts_.search_factor, mc_.search_size);
    out.search = std::move(se.image);
    out.search_box = to_crop_coords(se.transform, gt_j);
    return out;
  }

  const DatasetParams& data() const { return dp_; }

 private:
  ModelConfig mc_;
  TrainSchedule ts_;
  DatasetParams dp_;
  std::vector<detail::VideoSpec> specs_;
};

struct LossRow {
  int epoch = 0;
  double mean_loss = 0.0;
  double eval_auc = std::numeric_limits<double>::quiet_NaN();  // NaN when not evaluated
};

struct TrainResult {
  std::vector<LossRow> rows;
};

inline Tensor sample_loss(const TrackModel& model, const TrainSample& s, double lambda_iou,
                          double lambda_l1) {
  ModelForward fwd = model.forward(s.exemplar, s.search, s.exemplar_box);
  return total_loss(fwd.pred, s.search_box, lambda_iou, lambda_l1);
}

namespace detail {

inline std::string diverged_message(const TrackModel& model) {
  std::ostringstream os;
  os << "training diverged (non-finite loss); parameter/gradient norms:";
  for (auto& [name, p] : model.params()) {
    double pn = 0, gn = 0;
    for (double v : p.values()) pn += v * v;
    if (p.has_grad()) {
      for (double g : p.grad()) gn += g * g;
    }
    os << "\n  " << name << " |p|=" << std::sqrt(pn) << " |g|=" << std::sqrt(gn);
  }
  return os.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Tracking

struct TrackResult {
  std::vector<Box> boxes;  // per frame; frame 0 is the ground-truth init
  Metrics metrics;         // over frames 1..T-1
  int exemplar_embeds = 0;
  std::vector<uint64_t> frame_ops;  // graph nodes created per tracked frame
};

// predictor(search crop, previous box in frame px, transform) -> normalized box
using BoxPredictor = std::function<Box(const Image&, const Box&, const CropTransform&)>;

namespace detail {

// Center comes from the prediction; extents are guarded against collapse
// (degenerate output keeps the previous size) and the box is clamped into
// the frame.
inline Box sanitize_prediction(const Box& raw, const Box& prev, double frame_size) {
  constexpr double kMinExtent = 2.0;
  double w = raw.width(), h = raw.height();
  if (!(w >= kMinExtent) || !std::isfinite(w)) w = prev.width();
  if (!(h >= kMinExtent) || !std::isfinite(h)) h = prev.height();
  w = std::min(w, frame_size);
  h = std::min(h, frame_size);
  double cx = std::isfinite(raw.cx()) ? raw.cx() : prev.cx();
  double cy = std::isfinite(raw.cy()) ? raw.cy() : prev.cy();
  cx = std::clamp(cx, w / 2, frame_size - w / 2);
  cy = std::clamp(cy, h / 2, frame_size - h / 2);
  return {cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2};
}

}  // namespace detail

// Generic one-pass tracker: frame 0 initializes from ground truth, every
// later frame crops around the previous prediction and asks `predict`.
inline TrackResult track_with(const SyntheticSequence& seq, const BoxPredictor& predict,
                              double search_factor, int crop_size) {
  if (seq.frames.size() < 2) throw std::invalid_argument("track: need at least 2 frames");
  double fs = static_cast<double>(seq.params.frame_size);
  TrackResult out;
  Box prev = seq.gt[0];
  out.boxes.push_back(prev);
  for (size_t t = 1; t < seq.frames.size(); ++t) {
    uint64_t ops0 = op_counter().load();
    CropResult crop = crop_resize(seq.frames[t], prev, search_factor, crop_size);
    Box norm = predict(crop.image, prev, crop.transform);
    Box raw = to_frame_coords(crop.transform, norm);
    prev = detail::sanitize_prediction(raw, prev, fs);
    out.boxes.push_back(prev);
    out.frame_ops.push_back(op_counter().load() - ops0);
  }
  out.metrics = evaluate({out.boxes.begin() + 1, out.boxes.end()},
                         {seq.gt.begin() + 1, seq.gt.end()});
  return out;
}

// Model-driven tracker. Exemplar tokens are embedded exactly once, from
// frame 0; inference runs with the graph recorder off.
inline TrackResult track(const SyntheticSequence& seq, const TrackModel& model,
                         double exemplar_factor = 2.0, double search_factor = 4.0) {
  NoGradGuard inference;
  CropResult ex = crop_resize(seq.frames[0], seq.gt[0], exemplar_factor, model.cfg.exemplar_size);
  double es = static_cast<double>(model.cfg.exemplar_size);
  Box ebox{ex.box_norm.x1 * es, ex.box_norm.y1 * es, ex.box_norm.x2 * es, ex.box_norm.y2 * es};
  EmbeddedExemplar cached = model.embed_exemplar(ex.image, ebox);
  int embeds = 1;

  TrackResult out = track_with(
      seq,
      [&](const Image& crop, const Box&, const CropTransform&) {
        ModelForward fwd = model.forward_embedded(cached, model.embed_search(crop));
        return fwd.pred.box();
      },
      search_factor, model.cfg.search_size);
  out.exemplar_embeds = embeds;
  return out;
}

// Sanity floor: keeps the previous box (equivalently, a crop-centered box of
// the previous size).
inline TrackResult center_box_baseline(const SyntheticSequence& seq, double search_factor = 4.0,
                                       int crop_size = 64) {
  return track_with(
      seq,
      [](const Image&, const Box& prev, const CropTransform& t) {
        return to_crop_coords(t, prev);
      },
      search_factor, crop_size);
}

// ---------------------------------------------------------------------------
// Training loop

using EpochCallback = std::function<void(const LossRow&)>;

inline TrainResult train(TrackModel& model, const TrainSchedule& ts, const DatasetParams& dp,
                         uint64_t seed, const EpochCallback& on_epoch = {}) {
  TrainSampler sampler(model.cfg, ts, dp, derive_seed(seed, 0xda7a));
  Rng rng(derive_seed(seed, 0x57e9));
  AdamW opt(ts);
  auto params = model.params();

  std::vector<SyntheticSequence> eval_set;
  for (int k = 0; k < ts.eval_videos; ++k) {
    eval_set.push_back(generate_sequence(derive_seed(seed, 0xe7a1000 + static_cast<uint64_t>(k)),
                                         ts.eval_seq_length, dp));
  }

  TrainResult result;
  for (int epoch = 0; epoch < ts.epochs; ++epoch) {
    double loss_acc = 0.0;
    for (int step = 0; step < ts.steps_per_epoch; ++step) {
      std::vector<Tensor> losses;
      losses.reserve(static_cast<size_t>(ts.batch_size));
      for (int b = 0; b < ts.batch_size; ++b) {
        TrainSample s = sampler.sample(rng);
        losses.push_back(reshape(sample_loss(model, s, ts.lambda_iou, ts.lambda_l1), {1}));
      }
      Tensor batch_loss = mean(concat(losses, 0));
      double lv = batch_loss.item();
      if (!std::isfinite(lv)) throw std::runtime_error(detail::diverged_message(model));
      loss_acc += lv;
      model.zero_grad();
      backward(batch_loss);
      opt.step(params);
      for (auto& [name, p] : params) {
        for (double v : p.values()) {
          if (!std::isfinite(v)) throw std::runtime_error(detail::diverged_message(model));
        }
      }
    }
    LossRow row;
    row.epoch = epoch;
    row.mean_loss = loss_acc / ts.steps_per_epoch;
    if (!eval_set.empty()) {
      double auc_acc = 0.0;
      for (const auto& seq : eval_set) {
        auc_acc += track(seq, model, ts.exemplar_factor, ts.search_factor).metrics.auc;
      }
      row.eval_auc = auc_acc / static_cast<double>(eval_set.size());
    }
    result.rows.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  return result;
}

}  // namespace simtrack
