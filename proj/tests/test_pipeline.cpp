#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "simtrack/pipeline.hpp"

using namespace simtrack;

namespace {

DatasetParams small_data() {
  DatasetParams p;
  p.frame_size = 96;
  p.seq_length = 8;
  p.distractors = 1;
  return p;
}

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.patch = 8;
  cfg.dim = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.ffn_dim = 32;
  cfg.search_size = 32;
  cfg.exemplar_size = 16;
  cfg.interaction = InteractionSchedule::all(1);
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("generate_sequence is deterministic and honors zero motion") {
  DatasetParams p = small_data();
  SyntheticSequence a = generate_sequence(42, 6, p);
  SyntheticSequence b = generate_sequence(42, 6, p);
  REQUIRE(a.frames.size() == 6);
  for (size_t t = 0; t < a.frames.size(); ++t) {
    CHECK(std::memcmp(a.frames[t].data.data(), b.frames[t].data.data(),
                      a.frames[t].data.size() * 8) == 0);
    CHECK(a.gt[t].x1 == b.gt[t].x1);
  }
  // gt stays inside the frame
  for (const Box& g : a.gt) {
    CHECK(g.x1 >= 0);
    CHECK(g.y1 >= 0);
    CHECK(g.x2 <= p.frame_size);
    CHECK(g.y2 <= p.frame_size);
  }

  DatasetParams frozen = p;
  frozen.velocity_sigma = 0.0;
  frozen.scale_jitter_sigma = 0.0;
  SyntheticSequence c = generate_sequence(7, 5, frozen);
  for (size_t t = 1; t < c.gt.size(); ++t) {
    CHECK(c.gt[t].x1 == c.gt[0].x1);
    CHECK(c.gt[t].y2 == c.gt[0].y2);
  }
}

TEST_CASE("mean per-frame displacement matches the Gaussian walk statistic") {
  DatasetParams p;
  p.frame_size = 4096;  // large frame so boundary clipping is negligible
  p.seq_length = 1001;
  p.velocity_sigma = 3.0;
  p.scale_jitter_sigma = 0.0;
  p.distractors = 0;
  detail::VideoSpec spec = detail::make_video_spec(99, p.seq_length, p);
  double acc = 0.0;
  int n = 0;
  for (size_t t = 1; t < spec.target.track.size(); ++t) {
    const Box& a = spec.target.track[t - 1];
    const Box& b = spec.target.track[t];
    double dx = b.cx() - a.cx(), dy = b.cy() - a.cy();
    acc += std::sqrt(dx * dx + dy * dy);
    ++n;
  }
  // E[|step|] for an isotropic Gaussian walk is sigma * sqrt(pi/2)
  double expect = p.velocity_sigma * std::sqrt(3.14159265358979323846 / 2.0);
  CHECK(std::fabs(acc / n - expect) / expect < 0.2);
}

TEST_CASE("crop_resize geometry") {
  Image frame(96, 96);
  for (auto& v : frame.data) v = 0.25;

  // f=2, square target: normalized extent is exactly 0.5
  Box target{40, 40, 56, 56};
  CropResult r = crop_resize(frame, target, 2.0, 32);
  CHECK(r.box_norm.width() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r.box_norm.x1 == doctest::Approx(0.25).epsilon(1e-12));

  // f=1: the crop is the box itself
  CropResult r1 = crop_resize(frame, target, 1.0, 16);
  CHECK(r1.box_norm.x1 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r1.box_norm.x2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r1.box_norm.y2 == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(crop_resize(frame, Box{10, 10, 10, 20}, 2.0, 16), std::invalid_argument);
  CHECK_THROWS_AS(crop_resize(frame, target, 0.5, 16), std::invalid_argument);
}

TEST_CASE("crop transform inverse round trip stays under half a pixel") {
  Rng rng(31);
  Image frame(128, 128);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    Box b;
    b.x1 = rng.uniform(0, 100);
    b.y1 = rng.uniform(0, 100);
    b.x2 = b.x1 + rng.uniform(4, 27);
    b.y2 = b.y1 + rng.uniform(4, 27);
    CropResult r = crop_resize(frame, b, rng.uniform(1.0, 5.0), 64);
    Box back = to_frame_coords(r.transform, r.box_norm);
    worst = std::max({worst, std::fabs(back.x1 - b.x1), std::fabs(back.y1 - b.y1),
                      std::fabs(back.x2 - b.x2), std::fabs(back.y2 - b.y2)});
  }
  CHECK(worst < 0.5);
}

TEST_CASE("evaluate: exact, disjoint and enumerated cases") {
  std::vector<Box> gt = {{0, 0, 10, 10}, {5, 5, 15, 15}, {20, 20, 30, 30}};
  Metrics perfect = evaluate(gt, gt);
  CHECK(perfect.auc == 1.0);
  CHECK(perfect.precision == 1.0);

  std::vector<Box> far = {{50, 50, 60, 60}, {50, 50, 60, 60}, {50, 50, 60, 60}};
  Metrics zero = evaluate(far, gt);
  CHECK(zero.auc == 0.0);

  // hand-built IoUs {1.0, 0.5, 0.0}: enumerate the 21-threshold curve
  std::vector<double> ious = {1.0, 0.5, 0.0};
  double acc = 0.0;
  for (int k = 0; k <= 20; ++k) {
    double thr = k * 0.05;
    int hits = 0;
    for (double v : ious) hits += (k == 0 ? v > 0.0 : v >= thr) ? 1 : 0;
    acc += static_cast<double>(hits) / 3.0;
  }
  double expect_auc = acc / 21.0;
  std::vector<Box> pred = {gt[0],
                           {gt[1].x1, gt[1].y1, gt[1].x2, (gt[1].y1 + gt[1].y2) / 2},
                           {90, 90, 95, 95}};
  // pred[1] covers the top half: IoU = 0.5
  Metrics m = evaluate(pred, gt);
  CHECK(m.per_frame_iou[0] == doctest::Approx(1.0));
  CHECK(m.per_frame_iou[1] == doctest::Approx(0.5));
  CHECK(m.per_frame_iou[2] == doctest::Approx(0.0));
  CHECK(m.auc == doctest::Approx(expect_auc).epsilon(1e-12));
  CHECK(m.success[5] == doctest::Approx(2.0 / 3).epsilon(1e-12));  // threshold 0.25

  CHECK_THROWS_AS(evaluate(pred, std::vector<Box>{gt[0]}), std::invalid_argument);
}

TEST_CASE("auc is monotone under worsening any single frame") {
  Rng rng(37);
  for (int t = 0; t < 50; ++t) {
    int n = rng.uniform_int(2, 12);
    std::vector<double> ious;
    for (int i = 0; i < n; ++i) ious.push_back(rng.uniform01());
    double base = auc_from_ious(ious);
    int k = rng.uniform_int(0, n - 1);
    double worse = ious[static_cast<size_t>(k)] * rng.uniform01();
    std::vector<double> worse_set = ious;
    worse_set[static_cast<size_t>(k)] = worse;
    CHECK(auc_from_ious(worse_set) <= base + 1e-12);
  }
}

TEST_CASE("stub predictor: returning the crop-relative gt recovers frame-pixel gt") {
  DatasetParams p = small_data();
  SyntheticSequence seq = generate_sequence(11, 5, p);
  // perfect oracle predictor: map the true gt into crop coordinates
  // (track_with queries frames 1..T-1 in order)
  size_t call = 1;
  TrackResult r = track_with(
      seq,
      [&](const Image&, const Box&, const CropTransform& t) {
        return to_crop_coords(t, seq.gt[call++]);
      },
      4.0, 32);
  for (size_t t = 1; t < seq.gt.size(); ++t) {
    CHECK(std::fabs(r.boxes[t].x1 - seq.gt[t].x1) < 0.5);
    CHECK(std::fabs(r.boxes[t].y1 - seq.gt[t].y1) < 0.5);
    CHECK(std::fabs(r.boxes[t].x2 - seq.gt[t].x2) < 0.5);
    CHECK(std::fabs(r.boxes[t].y2 - seq.gt[t].y2) < 0.5);
  }
  CHECK(r.metrics.auc > 0.95);
}

TEST_CASE("tracker embeds the exemplar once and per-frame cost is constant") {
  DatasetParams p = small_data();
  p.seq_length = 6;
  SyntheticSequence seq = generate_sequence(13, 6, p);
  ModelConfig cfg = tiny_model();
  TrackModel model = TrackModel::init(cfg);
  TrackResult r = track(seq, model);
  CHECK(r.exemplar_embeds == 1);
  REQUIRE(r.frame_ops.size() == 5);
  for (size_t t = 1; t < r.frame_ops.size(); ++t) CHECK(r.frame_ops[t] == r.frame_ops[0]);
  // every prediction stays inside the frame
  for (const Box& b : r.boxes) {
    CHECK(b.x1 >= 0);
    CHECK(b.y2 <= p.frame_size);
    CHECK(b.valid());
  }
}

TEST_CASE("lr=0 training leaves parameters bitwise unchanged") {
  ModelConfig cfg = tiny_model();
  TrackModel model = TrackModel::init(cfg);
  std::vector<std::vector<double>> before;
  for (auto& [name, t] : model.params()) before.push_back(t.values());

  TrainSchedule ts;
  ts.epochs = 1;
  ts.steps_per_epoch = 3;
  ts.batch_size = 2;
  ts.lr = 0.0;
  ts.weight_decay = 0.1;  // decoupled decay is also scaled by lr
  ts.n_train_videos = 4;
  DatasetParams dp = small_data();
  TrainResult result = train(model, ts, dp, 21);
  REQUIRE(result.rows.size() == 1);
  CHECK(std::isfinite(result.rows[0].mean_loss));

  size_t k = 0;
  for (auto& [name, t] : model.params()) {
    CHECK(std::memcmp(t.values().data(), before[k].data(), before[k].size() * 8) == 0);
    ++k;
  }
}

TEST_CASE("diverging training aborts with parameter/gradient diagnostics") {
  ModelConfig cfg = tiny_model();
  TrackModel model = TrackModel::init(cfg);
  TrainSchedule ts;
  ts.epochs = 1;
  ts.steps_per_epoch = 50;
  ts.batch_size = 2;
  ts.lr = 1e12;  // guaranteed blow-up
  ts.n_train_videos = 2;
  DatasetParams dp = small_data();
  CHECK_THROWS_WITH_AS(train(model, ts, dp, 5), doctest::Contains("diverged"),
                       std::runtime_error);
  try {
    TrackModel m2 = TrackModel::init(cfg);
    train(m2, ts, dp, 5);
  } catch (const std::runtime_error& e) {
    std::string msg = e.what();
    CHECK(msg.find("|p|=") != std::string::npos);
    CHECK(msg.find("|g|=") != std::string::npos);
    CHECK(msg.find("blocks.0.wq") != std::string::npos);
  }
}

TEST_CASE("training is reproducible and reduces loss on an easy setup") {
  ModelConfig cfg = tiny_model();
  TrainSchedule ts;
  ts.epochs = 2;
  ts.steps_per_epoch = 4;
  ts.batch_size = 2;
  ts.lr = 3e-4;
  ts.n_train_videos = 4;
  DatasetParams dp = small_data();

  TrackModel m1 = TrackModel::init(cfg);
  TrainResult r1 = train(m1, ts, dp, 33);
  TrackModel m2 = TrackModel::init(cfg);
  TrainResult r2 = train(m2, ts, dp, 33);
  REQUIRE(r1.rows.size() == r2.rows.size());
  for (size_t i = 0; i < r1.rows.size(); ++i) {
    CHECK(r1.rows[i].mean_loss == r2.rows[i].mean_loss);
  }
  auto p1 = m1.params();
  auto p2 = m2.params();
  for (size_t i = 0; i < p1.size(); ++i) {
    CHECK(std::memcmp(p1[i].second.values().data(), p2[i].second.values().data(),
                      p1[i].second.values().size() * 8) == 0);
  }
}
