#pragma once

// Synthetic single-target videos: textured noise background, one textured
// target (ellipse or rectangle) on a clipped random walk with scale jitter,
// plus optional distractor shapes. Fully reproducible from a seed.

#include <cmath>
#include <cstdint>
#include <vector>

#include "simtrack/box.hpp"
#include "simtrack/image.hpp"

namespace simtrack {

struct DatasetParams {
  int frame_size = 128;
  int seq_length = 24;
  double target_min = 14.0;       // target extent range in pixels
  double target_max = 30.0;
  double velocity_sigma = 2.5;    // per-axis center step, pixels/frame
  double scale_jitter_sigma = 0.02;  // log-extent step per frame
  int distractors = 2;
};

namespace detail {

struct ShapeSpec {
  int kind = 0;  // 0 ellipse, 1 rectangle
  double color[3] = {0, 0, 0};
  double stripe_freq_u = 3.0;
  double stripe_freq_v = 5.0;
  std::vector<Box> track;  // per-frame box, frame pixels
};

struct VideoSpec {
  uint64_t seed = 0;
  DatasetParams params;
  double bg_base[3] = {0.5, 0.5, 0.5};
  double bg_freq_x = 0.02, bg_freq_y = 0.03, bg_phase = 0.0;
  ShapeSpec target;
  std::vector<ShapeSpec> distractors;
};

inline std::vector<Box> random_walk(Rng& rng, const DatasetParams& p, int length) {
  double w = rng.uniform(p.target_min, p.target_max);
  double h = rng.uniform(p.target_min, p.target_max);
  double fs = static_cast<double>(p.frame_size);
  double cx = rng.uniform(w / 2, fs - w / 2);
  double cy = rng.uniform(h / 2, fs - h / 2);
  std::vector<Box> track;
  track.reserve(static_cast<size_t>(length));
  for (int t = 0; t < length; ++t) {
    // clip so the box stays fully inside the frame
    w = std::min(w, fs - 1.0);
    h = std::min(h, fs - 1.0);
    cx = std::clamp(cx, w / 2, fs - w / 2);
    cy = std::clamp(cy, h / 2, fs - h / 2);
    track.push_back({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
    cx += rng.normal(0.0, p.velocity_sigma);
    cy += rng.normal(0.0, p.velocity_sigma);
    w = std::clamp(w * std::exp(rng.normal(0.0, p.scale_jitter_sigma)), p.target_min * 0.5,
                   p.target_max * 1.5);
    h = std::clamp(h * std::exp(rng.normal(0.0, p.scale_jitter_sigma)), p.target_min * 0.5,
                   p.target_max * 1.5);
  }
  return track;
}

inline VideoSpec make_video_spec(uint64_t seed, int length, const DatasetParams& p) {
  VideoSpec spec;
  spec.seed = seed;
  spec.params = p;
  Rng rng(derive_seed(seed, 0));
  for (int c = 0; c < 3; ++c) spec.bg_base[c] = rng.uniform(0.35, 0.55);
  spec.bg_freq_x = rng.uniform(0.01, 0.05);
  spec.bg_freq_y = rng.uniform(0.01, 0.05);
  spec.bg_phase = rng.uniform(0.0, 6.28318530717958648);

  spec.target.kind = rng.uniform_int(0, 1);
  // saturated, clearly off the gray background
  int hot = rng.uniform_int(0, 2);
  for (int c = 0; c < 3; ++c) {
    spec.target.color[c] = (c == hot) ? rng.uniform(0.75, 0.95) : rng.uniform(0.05, 0.25);
  }
  spec.target.stripe_freq_u = rng.uniform(2.0, 5.0);
  spec.target.stripe_freq_v = rng.uniform(2.0, 5.0);
  spec.target.track = random_walk(rng, p, length);

  for (int d = 0; d < p.distractors; ++d) {
    ShapeSpec ds;
    ds.kind = rng.uniform_int(0, 1);
    // distractors live in a different color family than the target
    int cold = (hot + 1 + rng.uniform_int(0, 1)) % 3;
    for (int c = 0; c < 3; ++c) {
      ds.color[c] = (c == cold) ? rng.uniform(0.6, 0.85) : rng.uniform(0.15, 0.4);
    }
    ds.stripe_freq_u = rng.uniform(2.0, 5.0);
    ds.stripe_freq_v = rng.uniform(2.0, 5.0);
    ds.track = random_walk(rng, p, length);
    spec.distractors.push_back(std::move(ds));
  }
  return spec;
}

inline void paint_shape(Image& img, const ShapeSpec& s, const Box& b) {
  double cx = b.cx(), cy = b.cy();
  double rx = b.width() / 2, ry = b.height() / 2;
  int x0 = std::max(0, static_cast<int>(std::floor(b.x1)));
  int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(b.x2)));
  int y0 = std::max(0, static_cast<int>(std::floor(b.y1)));
  int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(b.y2)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double px = x + 0.5, py = y + 0.5;
      bool inside;
      if (s.kind == 0) {
        double dx = (px - cx) / rx, dy = (py - cy) / ry;
        inside = dx * dx + dy * dy <= 1.0;
      } else {
        inside = px >= b.x1 && px <= b.x2 && py >= b.y1 && py <= b.y2;
      }
      if (!inside) continue;
      // texture anchored to object coordinates so it moves with the shape
      double u = (px - cx) / b.width(), v = (py - cy) / b.height();
      double tex = 0.85 + 0.15 * std::sin(6.28318530717958648 * (s.stripe_freq_u * u +
                                                                 s.stripe_freq_v * v));
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(s.color[c] * tex, 0.0, 1.0);
      }
    }
  }
}

inline Image render_frame(const VideoSpec& spec, int t) {
  const DatasetParams& p = spec.params;
  Image img(p.frame_size, p.frame_size);
  Rng noise(derive_seed(spec.seed, 1000 + static_cast<uint64_t>(t)));
  for (int y = 0; y < p.frame_size; ++y) {
    for (int x = 0; x < p.frame_size; ++x) {
      double wave = 0.06 * std::sin(6.28318530717958648 *
                                        (spec.bg_freq_x * x + spec.bg_freq_y * y) +
                                    spec.bg_phase);
      for (int c = 0; c < 3; ++c) {
        double n = noise.uniform(-0.05, 0.05);
        img.at(y, x, c) = std::clamp(spec.bg_base[c] + wave + n, 0.0, 1.0);
      }
    }
  }
  for (const auto& d : spec.distractors) paint_shape(img, d, d.track[static_cast<size_t>(t)]);
  paint_shape(img, spec.target, spec.target.track[static_cast<size_t>(t)]);
  return img;
}

}  // namespace detail

struct SyntheticSequence {
  std::vector<Image> frames;
  std::vector<Box> gt;  // frame pixels, always fully inside the frame
  uint64_t seed = 0;
  DatasetParams params;
};

inline SyntheticSequence generate_sequence(uint64_t seed, int length, const DatasetParams& p) {
  if (length < 2) throw std::invalid_argument("generate_sequence: length must be >= 2");
  detail::VideoSpec spec = detail::make_video_spec(seed, length, p);
  SyntheticSequence out;
  out.seed = seed;
  out.params = p;
  out.gt = spec.target.track;
  out.frames.reserve(static_cast<size_t>(length));
  for (int t = 0; t < length; ++t) out.frames.push_back(detail::render_frame(spec, t));
  return out;
}

}  // namespace simtrack
