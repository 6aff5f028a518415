#pragma once

// Command implementations behind tools/simtrack.cpp. Each returns a process
// exit code; argument parsing and error-to-exit-code mapping live in main.

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "simtrack/checkpoint.hpp"
#include "simtrack/config.hpp"
#include "simtrack/gradcheck.hpp"

namespace simtrack::cli {

namespace fs = std::filesystem;

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string boxes_csv(const std::vector<Box>& boxes) {
  std::string out = "frame,x1,y1,x2,y2\n";
  for (size_t i = 0; i < boxes.size(); ++i) {
    out += std::to_string(i) + "," + fmt(boxes[i].x1) + "," + fmt(boxes[i].y1) + "," +
           fmt(boxes[i].x2) + "," + fmt(boxes[i].y2) + "\n";
  }
  return out;
}

inline std::vector<Box> read_boxes_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<Box> out;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("frame", 0) == 0) continue;
    }
    Box b;
    long frame = 0;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf", &frame, &b.x1, &b.y1, &b.x2, &b.y2) != 5) {
      throw ConfigError("malformed box row in " + path.string() + ": \"" + line + "\"");
    }
    out.push_back(b);
  }
  if (out.empty()) throw ConfigError("no boxes in " + path.string());
  return out;
}

inline std::string metrics_csv(const Metrics& m) {
  std::string out = "frame_idx,iou,center_error\n";
  for (size_t i = 0; i < m.per_frame_iou.size(); ++i) {
    out += std::to_string(i + 1) + "," + fmt(m.per_frame_iou[i]) + "," +
           fmt(m.per_frame_center_err[i]) + "\n";
  }
  return out;
}

inline nlohmann::json metrics_json(const Metrics& m) {
  return {{"auc", m.auc},
          {"precision", m.precision},
          {"mean_iou", m.mean_iou},
          {"frames", m.per_frame_iou.size()},
          {"success_curve", m.success}};
}

inline void write_metrics(const fs::path& dir, const Metrics& m) {
  atomic_write_file(dir / "metrics.csv", metrics_csv(m));
  atomic_write_file(dir / "metrics.json", metrics_json(m).dump(2) + "\n");
}

inline RunConfig config_or_default(const std::optional<std::string>& path) {
  if (path) return load_config(*path);
  RunConfig cfg;
  cfg.model.seed = cfg.seed;
  return cfg;
}

inline std::string config_diff(const ModelConfig& a, const ModelConfig& b) {
  std::ostringstream os;
  auto field = [&](const char* name, auto va, auto vb) {
    if (va != vb) os << "\n  " << name << ": checkpoint=" << va << " config=" << vb;
  };
  field("patch_size", a.patch, b.patch);
  field("embed_dim", a.dim, b.dim);
  field("layers", a.layers, b.layers);
  field("heads", a.heads, b.heads);
  field("ffn_dim", a.ffn_dim, b.ffn_dim);
  field("search_size", a.search_size, b.search_size);
  field("exemplar_size", a.exemplar_size, b.exemplar_size);
  field("foveal_size", a.foveal_size, b.foveal_size);
  field("decoder_layers", a.decoder_layers, b.decoder_layers);
  return os.str();
}

}  // namespace detail

inline int cmd_print_config() {
  RunConfig cfg;
  std::cout << to_json(cfg).dump(2) << "\n";
  return 0;
}

inline int cmd_train(const std::optional<std::string>& config_path, const std::string& out_dir,
                     std::optional<uint64_t> seed) {
  RunConfig cfg = detail::config_or_default(config_path);
  if (seed) {
    cfg.seed = *seed;
    cfg.model.seed = *seed;
  }
  fs::create_directories(out_dir);

  TrackModel model = TrackModel::init(cfg.model);
  std::string csv = "epoch,mean_loss,eval_auc\n";
  TrainResult result = train(model, cfg.train, cfg.data, cfg.seed, [&](const LossRow& row) {
    std::cout << "epoch " << row.epoch << "  loss " << row.mean_loss;
    if (std::isfinite(row.eval_auc)) std::cout << "  eval_auc " << row.eval_auc;
    std::cout << std::endl;
  });
  for (const LossRow& row : result.rows) {
    csv += std::to_string(row.epoch) + "," + detail::fmt(row.mean_loss) + ",";
    if (std::isfinite(row.eval_auc)) csv += detail::fmt(row.eval_auc);
    csv += "\n";
  }
  save_checkpoint(fs::path(out_dir) / "checkpoint.simt", model);
  atomic_write_file(fs::path(out_dir) / "loss.csv", csv);
  std::cout << "wrote " << (fs::path(out_dir) / "checkpoint.simt").string() << "\n";
  return 0;
}

inline int cmd_track(const std::string& ckpt_path, const std::optional<std::string>& config_path,
                     const std::string& out_dir, uint64_t seq_seed, int frames) {
  TrackModel model = load_checkpoint(ckpt_path);
  RunConfig cfg = detail::config_or_default(config_path);
  if (config_path) {
    cfg.model.seed = model.cfg.seed;
    cfg.model.interaction = model.cfg.interaction;
    std::string diff = detail::config_diff(model.cfg, cfg.model);
    if (!diff.empty()) {
      throw ConfigError("checkpoint/config model mismatch:" + diff);
    }
  }
  fs::create_directories(out_dir);

  SyntheticSequence seq = generate_sequence(seq_seed, frames, cfg.data);
  TrackResult r = track(seq, model, cfg.train.exemplar_factor, cfg.train.search_factor);

  atomic_write_file(fs::path(out_dir) / "boxes.csv", detail::boxes_csv(r.boxes));
  atomic_write_file(fs::path(out_dir) / "gt.csv", detail::boxes_csv(seq.gt));
  detail::write_metrics(out_dir, r.metrics);
  std::cout << "auc " << r.metrics.auc << "  precision " << r.metrics.precision << "  mean_iou "
            << r.metrics.mean_iou << "\n";
  return 0;
}

inline int cmd_eval(const std::string& pred_csv, const std::string& gt_csv,
                    const std::string& out_dir) {
  std::vector<Box> pred = detail::read_boxes_csv(pred_csv);
  std::vector<Box> gt = detail::read_boxes_csv(gt_csv);
  if (pred.size() != gt.size()) {
    throw ConfigError("prediction and ground-truth CSVs disagree on frame count (" +
                      std::to_string(pred.size()) + " vs " + std::to_string(gt.size()) + ")");
  }
  Metrics m = evaluate(pred, gt);
  fs::create_directories(out_dir);
  detail::write_metrics(out_dir, m);
  std::cout << "auc " << m.auc << "  precision " << m.precision << "  mean_iou " << m.mean_iou
            << "\n";
  return 0;
}

inline int cmd_gradcheck(const std::optional<std::string>& config_path,
                         std::optional<uint64_t> seed) {
  RunConfig cfg = detail::config_or_default(config_path);
  uint64_t s = seed.value_or(cfg.seed);
  auto reports = run_gradcheck_suite(cfg, s);
  bool all_pass = true;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rep : reports) {
    all_pass = all_pass && rep.pass;
    arr.push_back(rep.to_json());
    std::printf("%-45s %-5s max_abs %-12.3e max_rel %-12.3e trials %d tol %g\n", rep.name.c_str(),
                rep.pass ? "PASS" : "FAIL", rep.max_abs_err, rep.max_rel_err, rep.trials,
                rep.tolerance);
  }
  std::cout << arr.dump(2) << std::endl;
  return all_pass ? 0 : 1;
}

inline int cmd_ablate(const std::optional<std::string>& config_path, const std::string& mode,
                      const std::string& out_dir, int repeats, std::optional<uint64_t> seed) {
  if (mode != "interaction" && mode != "decoder") {
    throw ConfigError("ablate mode must be \"interaction\" or \"decoder\", got \"" + mode + "\"");
  }
  RunConfig cfg = detail::config_or_default(config_path);
  uint64_t base_seed = seed.value_or(cfg.seed);
  fs::create_directories(out_dir);

  struct Variant {
    std::string label;
    ModelConfig model;
  };
  std::vector<Variant> variants;
  if (mode == "interaction") {
    for (auto [label, frac] : {std::pair<const char*, double>{"100%", 1.0}, {"50%", 0.5},
                               {"25%", 0.25}}) {
      ModelConfig mc = cfg.model;
      mc.interaction = InteractionSchedule::density(mc.layers, frac);
      variants.push_back({label, mc});
    }
  } else {
    for (int dec : {0, 1, 3}) {
      ModelConfig mc = cfg.model;
      mc.decoder_layers = dec;
      variants.push_back({"dec" + std::to_string(dec), mc});
    }
  }

  // paired seeds: every variant sees the same data and eval videos per repeat
  std::string csv = "mode,variant,seed,final_loss,auc\n";
  for (int r = 0; r < repeats; ++r) {
    uint64_t run_seed = derive_seed(base_seed, static_cast<uint64_t>(r));
    std::vector<SyntheticSequence> eval_set;
    int n_eval = std::max(cfg.train.eval_videos, 8);
    for (int k = 0; k < n_eval; ++k) {
      eval_set.push_back(generate_sequence(derive_seed(run_seed, 0xab1a7e00 + static_cast<uint64_t>(k)),
                                           cfg.train.eval_seq_length, cfg.data));
    }
    for (const auto& variant : variants) {
      ModelConfig mc = variant.model;
      mc.seed = run_seed;
      TrackModel model = TrackModel::init(mc);
      TrainSchedule ts = cfg.train;
      ts.eval_videos = 0;  // evaluated below on the shared set
      TrainResult result = train(model, ts, cfg.data, run_seed);
      double auc_acc = 0.0;
      for (const auto& sq : eval_set) {
        auc_acc += track(sq, model, ts.exemplar_factor, ts.search_factor).metrics.auc;
      }
      double auc = auc_acc / static_cast<double>(eval_set.size());
      double final_loss = result.rows.empty() ? 0.0 : result.rows.back().mean_loss;
      csv += mode + "," + variant.label + "," + std::to_string(run_seed) + "," +
             detail::fmt(final_loss) + "," + detail::fmt(auc) + "\n";
      std::cout << mode << " " << variant.label << " seed " << run_seed << "  loss " << final_loss
                << "  auc " << auc << std::endl;
    }
  }
  atomic_write_file(fs::path(out_dir) / "ablate.csv", csv);
  return 0;
}

inline int cmd_dump_attention(const std::string& ckpt_path,
                              const std::optional<std::string>& config_path,
                              const std::string& out_dir, uint64_t seq_seed, int frame,
                              const std::string& layer_list) {
  TrackModel model = load_checkpoint(ckpt_path);
  RunConfig cfg = detail::config_or_default(config_path);

  std::vector<int> layers;
  {
    std::istringstream ls(layer_list);
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      if (tok.empty()) continue;
      int l = 0;
      try {
        l = std::stoi(tok);
      } catch (...) {
        throw ConfigError("layer list must be comma-separated integers, got \"" + tok + "\"");
      }
      if (l < 1 || l > model.cfg.layers) {
        throw ConfigError("layer " + std::to_string(l) + " out of range; valid layers are 1.." +
                          std::to_string(model.cfg.layers));
      }
      layers.push_back(l);
    }
  }
  if (layers.empty()) throw ConfigError("no layers requested");

  SyntheticSequence seq = generate_sequence(seq_seed, std::max(frame + 1, 2), cfg.data);
  if (frame < 1 || frame >= static_cast<int>(seq.frames.size())) {
    throw ConfigError("frame " + std::to_string(frame) + " out of range; sequence has frames 1.." +
                      std::to_string(seq.frames.size() - 1));
  }
  fs::create_directories(out_dir);

  NoGradGuard inference;
  // exemplar from frame 0, search anchored on the previous frame's ground
  // truth so the dump does not depend on tracking drift
  CropResult ex = crop_resize(seq.frames[0], seq.gt[0], cfg.train.exemplar_factor,
                              model.cfg.exemplar_size);
  double es = static_cast<double>(model.cfg.exemplar_size);
  Box ebox{ex.box_norm.x1 * es, ex.box_norm.y1 * es, ex.box_norm.x2 * es, ex.box_norm.y2 * es};
  CropResult se = crop_resize(seq.frames[static_cast<size_t>(frame)],
                              seq.gt[static_cast<size_t>(frame - 1)], cfg.train.search_factor,
                              model.cfg.search_size);
  EmbeddedExemplar cached = model.embed_exemplar(ex.image, ebox);
  ModelForward fwd = model.forward_embedded(cached, model.embed_search(se.image), true);

  int grid = model.cfg.search_grid();
  save_pfm(fs::path(out_dir) / "search_crop.pfm", se.image);
  for (int l : layers) {
    auto map = target_attention_map(fwd.backbone.records, l - 1, fwd.backbone.spans);
    std::string stem = "attn_layer" + std::to_string(l);
    save_pgm(fs::path(out_dir) / (stem + ".pgm"), map, grid, grid);
    std::string csv;
    for (int i = 0; i < grid; ++i) {
      for (int j = 0; j < grid; ++j) {
        csv += detail::fmt(map[static_cast<size_t>(i) * grid + j]);
        csv += (j + 1 == grid) ? "\n" : ",";
      }
    }
    atomic_write_file(fs::path(out_dir) / (stem + ".csv"), csv);
  }
  std::cout << "wrote " << layers.size() << " attention map(s) to " << out_dir << "\n";
  return 0;
}

}  // namespace simtrack::cli
