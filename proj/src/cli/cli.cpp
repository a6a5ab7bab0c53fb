// SPDX-License-Identifier: Apache-2.0
#include "mtfl/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mtfl/dataio.hpp"
#include "mtfl/error.hpp"
#include "mtfl/metrics.hpp"
#include "mtfl/model.hpp"
#include "mtfl/model_gradcheck.hpp"
#include "mtfl/synth.hpp"
#include "mtfl/trainer.hpp"

namespace mtfl::cli {

namespace fs = std::filesystem;

namespace {

struct TrainArgs {
  std::string manifest;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t batch_half = 64;
  bool disable_pfl = false, disable_ltl = false, disable_gtl = false, disable_ff = false;
  TrainConfig cfg;
};

struct ScoreArgs {
  std::string checkpoint, manifest, out_dir;
};

struct EvalArgs {
  std::string scores_dir, manifest;
  bool per_video = false;
  bool mean_per_video = false;
};

struct SynthArgs {
  std::string out_dir;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> direction_seed;
  SynthConfig cfg;
};

struct GradcheckArgs {
  std::size_t t = 8, d = 8, heads = 2, k = 2;
  std::uint64_t seed = 0;
  double tol = 1e-4, eps = 1e-5;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string format_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

void add_model_flags(CLI::App* sub, ModelConfig& m) {
  sub->add_option("--t", m.snippets, "Snippets per video")->capture_default_str();
  sub->add_option("--heads", m.heads, "Attention heads")->capture_default_str();
  sub->add_option("--hidden1", m.hidden1, "First classifier width")->capture_default_str();
  sub->add_option("--hidden2", m.hidden2, "Second classifier width")->capture_default_str();
  sub->add_option("--dropout", m.dropout, "Classifier dropout rate")->capture_default_str();
  sub->add_option("--dilation-lm", m.dilations.long_medium, "Long/medium gate dilation")
      ->capture_default_str();
  sub->add_option("--dilation-ms", m.dilations.medium_short, "Medium/short gate dilation")
      ->capture_default_str();
  sub->add_option("--dilation-sl", m.dilations.short_long, "Short/long gate dilation")
      ->capture_default_str();
}

int do_train(TrainArgs& a, std::ostream& out) {
  TrainConfig cfg = a.cfg;
  cfg.normals_per_batch = cfg.abnormals_per_batch = a.batch_half;
  cfg.model.stages = {!a.disable_pfl, !a.disable_ltl, !a.disable_gtl, !a.disable_ff};
  if (a.seed) {
    cfg.seed = *a.seed;
  } else {
    cfg.seed = std::random_device{}();
    out << "seed=" << cfg.seed << " (picked; pass --seed to reproduce)\n";
  }
  const Dataset ds = read_manifest(a.manifest, Split::kTrain);
  if (cfg.model.feature_dim == 0) cfg.model.feature_dim = ds.dim();
  cfg.validate();
  out << "videos=" << ds.videos.size() << " normal=" << ds.count(Label::kNormal)
      << " abnormal=" << ds.count(Label::kAbnormal) << " D=" << ds.dim() << '\n';
  out << "parameters=" << parameter_count(cfg.model) << '\n';
  const TrainResult result = train(ds, cfg, fs::path(a.out_dir));
  out << "steps=" << result.checkpoint.optimizer.step;
  if (!result.log.empty()) out << " final_total=" << format_double(result.log.back().loss.total);
  out << '\n' << "checkpoint=" << (fs::path(a.out_dir) / "model.mtfc").string() << '\n';
  return kExitOk;
}

int do_score(const ScoreArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const Dataset ds = read_manifest(a.manifest, Split::kTest);
  if (ds.dim() != ckpt.model.feature_dim) {
    throw ValidationError("checkpoint expects D=" + std::to_string(ckpt.model.feature_dim) +
                          " but the manifest has D=" + std::to_string(ds.dim()));
  }
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw IoError("cannot create " + a.out_dir + ": " + ec.message());
  for (const auto& v : ds.videos) {
    const auto snippets = score_snippets(snippet_features(v, ckpt.model.snippets), ckpt.params, ckpt.model);
    const auto frames = expand_to_frames(snippets, v.frames);
    export_score_curve(v, frames, fs::path(a.out_dir) / (v.id + ".csv"));
  }
  out << "scored " << ds.videos.size() << " videos into " << a.out_dir << '\n';
  return kExitOk;
}

int do_eval(const EvalArgs& a, std::ostream& out) {
  const auto videos = parse_manifest(read_text(a.manifest), a.manifest);
  std::vector<FrameScores> all;
  for (const auto& v : videos) {
    const fs::path path = fs::path(a.scores_dir) / (v.id + ".csv");
    ScoreCurve curve = read_score_curve(path);
    const std::vector<int> labels = frame_labels(v);
    if (curve.scores.size() != labels.size()) {
      throw ValidationError("video " + v.id + ": score curve has " + std::to_string(curve.scores.size()) +
                            " frames, manifest says " + std::to_string(labels.size()));
    }
    all.push_back({v.id, std::move(curve.scores), labels});
  }
  const EvalReport report =
      evaluate(all, a.mean_per_video ? Pooling::kMeanPerVideo : Pooling::kPooledFrames);
  out << format_report(report, a.per_video);
  return kExitOk;
}

int do_synth(SynthArgs& a, std::ostream& out) {
  SynthConfig cfg = a.cfg;
  cfg.direction_seed = a.direction_seed;
  const SynthDataset data = synth_generate(cfg, a.seed);
  write_synth_dataset(a.out_dir, data);
  out << "wrote " << data.train.videos.size() << " train and " << data.test.videos.size()
      << " test videos to " << a.out_dir << '\n';
  return kExitOk;
}

int do_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  ModelGradcheckSetup setup = ModelGradcheckSetup::tiny();
  setup.model.snippets = a.t;
  setup.model.feature_dim = a.d;
  setup.model.heads = a.heads;
  setup.loss.k = a.k;
  setup.seed = a.seed;
  setup.options.tol = a.tol;
  setup.options.eps = a.eps;
  setup.loss.validate(setup.model.snippets);
  const GradReport r = check_model_gradients(setup);
  out << "max_relative_error=" << format_double(r.max_relative_error) << '\n'
      << "worst=" << r.worst_coordinate << " analytic=" << format_double(r.worst_analytic)
      << " numeric=" << format_double(r.worst_numeric) << '\n'
      << "coordinates=" << r.coordinates_checked << '\n'
      << (r.pass ? "PASS" : "FAIL") << '\n';
  return r.pass ? kExitOk : kExitRuntime;
}

// Pulls "--config FILE" out of the argument list and turns the file's entries
// into leading "--key=value" arguments, so explicit flags parsed later win.
std::vector<std::string> expand_config(const std::vector<std::string>& args, const CLI::App& app) {
  std::vector<std::string> rest;
  std::optional<std::string> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config requires a file argument");
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config) return rest;

  const auto first_sub = std::find_if(rest.begin(), rest.end(), [&](const std::string& s) {
    return app.get_subcommand_no_throw(s) != nullptr;
  });
  if (first_sub == rest.end()) throw CLI::RequiredError("--config needs a subcommand");
  const std::string sub_name = *first_sub;

  if (!fs::exists(*config)) throw IoError("cannot open config file " + *config);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(*config);
  } catch (const CLI::FileError& e) {
    throw IoError(e.what());
  }
  std::vector<std::string> injected;
  for (const auto& item : items) {
    if (item.name == "++" || item.name == "--") continue;
    if (!item.parents.empty()) {
      if (item.parents.size() != 1 || app.get_subcommand_no_throw(item.parents[0]) == nullptr) {
        throw ValidationError("config " + *config + ": unknown section for key " + item.fullname());
      }
      if (item.parents[0] != sub_name) continue;
    }
    if (item.name == "config") throw ValidationError("config " + *config + ": nested config is not supported");
    if (item.inputs.size() > 1) {
      throw ValidationError("config " + *config + ": key " + item.name + " takes a single value");
    }
    injected.push_back(item.inputs.empty() ? "--" + item.name : "--" + item.name + "=" + item.inputs[0]);
  }
  std::vector<std::string> out(rest.begin(), first_sub + 1);
  out.insert(out.end(), injected.begin(), injected.end());
  out.insert(out.end(), first_sub + 1, rest.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-timescale video anomaly detection", "mtfl"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_help_flag("-h,--help", "Print help");

  // Documented only; the flag itself is consumed before parsing.
  const std::string config_help = "--config FILE: TOML/INI file with one key per long flag name";

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a manifest");
  train_cmd->footer(config_help);
  train_cmd->add_option("--manifest", ta.manifest, "Training manifest")->required();
  train_cmd->add_option("--out-dir", ta.out_dir, "Output directory")->required();
  train_cmd->add_option("--epochs", ta.cfg.epochs, "Epochs")->capture_default_str();
  train_cmd->add_option("--lr", ta.cfg.learning_rate, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--weight-decay", ta.cfg.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
  train_cmd->add_option("--batch-half", ta.batch_half, "Normal and abnormal videos per batch")
      ->capture_default_str();
  train_cmd->add_option("--seed", ta.seed, "Random seed (picked and printed when absent)");
  train_cmd->add_option("--k", ta.cfg.loss.k, "Top-k snippets")->capture_default_str();
  train_cmd->add_option("--margin", ta.cfg.loss.margin, "Feature magnitude margin")
      ->capture_default_str();
  train_cmd->add_option("--lambda-fm", ta.cfg.loss.lambda_fm, "Feature magnitude weight")
      ->capture_default_str();
  train_cmd->add_option("--lambda1", ta.cfg.loss.lambda_sparsity, "Sparsity weight")
      ->capture_default_str();
  train_cmd->add_option("--lambda2", ta.cfg.loss.lambda_smoothness, "Smoothness weight")
      ->capture_default_str();
  train_cmd->add_flag("--disable-pfl", ta.disable_pfl, "Bypass pairwise cross-attention");
  train_cmd->add_flag("--disable-ltl", ta.disable_ltl, "Bypass local gating");
  train_cmd->add_flag("--disable-gtl", ta.disable_gtl, "Bypass global self-attention");
  train_cmd->add_flag("--disable-ff", ta.disable_ff, "Bypass fusion projection");
  add_model_flags(train_cmd, ta.cfg.model);
  train_cmd->add_option("--workers", ta.cfg.workers, "Threads (results do not depend on it)")
      ->capture_default_str();
  train_cmd->add_option("--checkpoint-every", ta.cfg.checkpoint_every,
                        "Epochs between intermediate checkpoints, 0 for none")
      ->capture_default_str();

  ScoreArgs sa;
  auto* score_cmd = app.add_subcommand("score", "Write per-frame score curves");
  score_cmd->footer(config_help);
  score_cmd->add_option("--checkpoint", sa.checkpoint, "Checkpoint file")->required();
  score_cmd->add_option("--manifest", sa.manifest, "Manifest of videos to score")->required();
  score_cmd->add_option("--out-dir", sa.out_dir, "Directory for <video_id>.csv")->required();

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "Frame-level AUC and AP of score curves");
  eval_cmd->footer(config_help);
  eval_cmd->add_option("--scores-dir", ea.scores_dir, "Directory written by score")->required();
  eval_cmd->add_option("--manifest", ea.manifest, "Manifest with ground-truth intervals")->required();
  eval_cmd->add_flag("--per-video", ea.per_video, "Also print one line per video");
  eval_cmd->add_flag("--mean-per-video", ea.mean_per_video,
                     "Average per-video metrics instead of pooling frames");

  SynthArgs ya;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth_cmd->footer(config_help);
  synth_cmd->add_option("--out-dir", ya.out_dir, "Output directory")->required();
  synth_cmd->add_option("--seed", ya.seed, "Random seed")->required();
  synth_cmd->add_option("--normal", ya.cfg.train_normal, "Normal train videos")->capture_default_str();
  synth_cmd->add_option("--abnormal", ya.cfg.train_abnormal, "Abnormal train videos")
      ->capture_default_str();
  synth_cmd->add_option("--test-normal", ya.cfg.test_normal, "Normal test videos")->capture_default_str();
  synth_cmd->add_option("--test-abnormal", ya.cfg.test_abnormal, "Abnormal test videos")
      ->capture_default_str();
  synth_cmd->add_option("--d", ya.cfg.dim, "Feature dimension")->capture_default_str();
  synth_cmd->add_option("--boost", ya.cfg.boost, "Signal strength")->capture_default_str();
  synth_cmd->add_option("--noise", ya.cfg.noise, "Noise scale")->capture_default_str();
  synth_cmd->add_option("--min-frames", ya.cfg.min_frames, "Shortest video")->capture_default_str();
  synth_cmd->add_option("--max-frames", ya.cfg.max_frames, "Longest video")->capture_default_str();
  synth_cmd->add_option("--min-anomaly", ya.cfg.min_anomaly_fraction, "Smallest anomaly fraction")
      ->capture_default_str();
  synth_cmd->add_option("--max-anomaly", ya.cfg.max_anomaly_fraction, "Largest anomaly fraction")
      ->capture_default_str();
  synth_cmd->add_option("--tubelet-short", ya.cfg.tubelets[0], "Short clip length")->capture_default_str();
  synth_cmd->add_option("--tubelet-medium", ya.cfg.tubelets[1], "Medium clip length")
      ->capture_default_str();
  synth_cmd->add_option("--tubelet-long", ya.cfg.tubelets[2], "Long clip length")->capture_default_str();
  synth_cmd->add_option("--direction-seed", ya.direction_seed, "Seed of the signal direction");

  GradcheckArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of model gradients");
  grad_cmd->footer(config_help);
  grad_cmd->add_option("--t", ga.t, "Snippets")->capture_default_str();
  grad_cmd->add_option("--d", ga.d, "Feature dimension")->capture_default_str();
  grad_cmd->add_option("--heads", ga.heads, "Attention heads")->capture_default_str();
  grad_cmd->add_option("--k", ga.k, "Top-k snippets")->capture_default_str();
  grad_cmd->add_option("--seed", ga.seed, "Random seed")->capture_default_str();
  grad_cmd->add_option("--tol", ga.tol, "Relative error tolerance")->capture_default_str();
  grad_cmd->add_option("--eps", ga.eps, "Finite-difference step")->capture_default_str();

  try {
    std::vector<std::string> expanded = expand_config(args, app);
    std::reverse(expanded.begin(), expanded.end());
    app.parse(expanded);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }

  try {
    if (train_cmd->parsed()) return do_train(ta, out);
    if (score_cmd->parsed()) return do_score(sa, out);
    if (eval_cmd->parsed()) return do_eval(ea, out);
    if (synth_cmd->parsed()) return do_synth(ya, out);
    if (grad_cmd->parsed()) return do_gradcheck(ga, out);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  err << "error: no subcommand\n";
  return kExitValidation;
}

}  // namespace mtfl::cli
