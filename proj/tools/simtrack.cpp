// simtrack command-line tool: train / track / eval / ablate / gradcheck /
// dump-attn / print-config over synthetic video.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "simtrack/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"simtrack: one-branch transformer tracker on synthetic video"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<uint64_t> seed;
  std::string out_dir = "out";
  std::string ckpt;
  uint64_t seq_seed = 7;
  int frames = 24;

  auto add_common = [&](CLI::App* cmd, bool with_out) {
    cmd->add_option("--config", config_path, "JSON run configuration");
    cmd->add_option("--seed", seed, "master seed override");
    if (with_out) cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* train = app.add_subcommand("train", "train a model, write checkpoint + loss.csv");
  add_common(train, true);

  CLI::App* track = app.add_subcommand("track", "run the tracker on a synthetic sequence");
  add_common(track, true);
  track->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  track->add_option("--seq-seed", seq_seed, "sequence seed");
  track->add_option("--frames", frames, "sequence length");

  CLI::App* eval = app.add_subcommand("eval", "compute OPE metrics from box CSVs");
  std::string pred_csv, gt_csv;
  eval->add_option("--pred", pred_csv, "predicted boxes CSV")->required();
  eval->add_option("--gt", gt_csv, "ground-truth boxes CSV")->required();
  eval->add_option("--out", out_dir, "output directory");

  CLI::App* ablate = app.add_subcommand("ablate", "train interaction/decoder variants");
  add_common(ablate, true);
  std::string mode;
  int repeats = 1;
  ablate->add_option("--mode", mode, "interaction | decoder")->required();
  ablate->add_option("--repeats", repeats, "paired seeds per variant");

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "run the oracle suite");
  add_common(gradcheck, false);

  CLI::App* dump = app.add_subcommand("dump-attn", "write target attention maps as PGM + CSV");
  add_common(dump, true);
  std::string layer_list = "1";
  int frame = 1;
  dump->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  dump->add_option("--seq-seed", seq_seed, "sequence seed");
  dump->add_option("--frame", frame, "frame index (>= 1)");
  dump->add_option("--layers", layer_list, "comma-separated 1-based layer list");

  app.add_subcommand("print-config", "print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand("print-config")) return simtrack::cli::cmd_print_config();
    if (app.got_subcommand(train)) return simtrack::cli::cmd_train(config_path, out_dir, seed);
    if (app.got_subcommand(track)) {
      return simtrack::cli::cmd_track(ckpt, config_path, out_dir, seq_seed, frames);
    }
    if (app.got_subcommand(eval)) return simtrack::cli::cmd_eval(pred_csv, gt_csv, out_dir);
    if (app.got_subcommand(ablate)) {
      return simtrack::cli::cmd_ablate(config_path, mode, out_dir, repeats, seed);
    }
    if (app.got_subcommand(gradcheck)) return simtrack::cli::cmd_gradcheck(config_path, seed);
    if (app.got_subcommand(dump)) {
      return simtrack::cli::cmd_dump_attention(ckpt, config_path, out_dir, seq_seed, frame,
                                               layer_list);
    }
  } catch (const simtrack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
