// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "mtfl/cli.hpp"
#include "mtfl/dataio.hpp"
#include "mtfl/error.hpp"
#include "mtfl/metrics.hpp"
#include "mtfl/model.hpp"
#include "mtfl/model_gradcheck.hpp"
#include "mtfl/objective.hpp"
#include "mtfl/ops.hpp"
#include "mtfl/trainer.hpp"
#include "support/support.hpp"

using namespace mtfl;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned thresholds.
constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kApTol = 1e-12;
constexpr double kTrainedAuc = 0.95;
constexpr double kUntrainedLo = 0.35, kUntrainedHi = 0.65;
constexpr double kPipelineSeconds = 600.0;
constexpr double kLogTol = 1e-12;
constexpr double kAttentionTol = 1e-6;
constexpr double kAblationAuc = 0.85;

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

void require_ok(const CliResult& r, const std::string& what) {
  if (r.code != 0) throw std::runtime_error(what + " exited " + std::to_string(r.code) + ": " + r.err);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc()) throw std::runtime_error("cannot parse number '" + std::string(s) + "'");
  return v;
}

double report_value(const std::string& report, const std::string& key) {
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line))
    if (line.rfind(key + "=", 0) == 0) return parse_double(std::string_view(line).substr(key.size() + 1));
  throw std::runtime_error("no " + key + "= line in eval output");
}

std::size_t parameters_line(const std::string& out) { return static_cast<std::size_t>(report_value(out, "parameters")); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::vector<std::vector<double>> read_loss_log(const fs::path& path) {
  std::istringstream in(mtfl::test::slurp(path));
  std::string line;
  std::getline(in, line);
  if (line != kLossLogHeader) throw std::runtime_error("unexpected loss log header '" + line + "'");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      row.push_back(parse_double(std::string_view(line).substr(start, comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (row.size() != 6) throw std::runtime_error("bad loss log line '" + line + "'");
    rows.push_back(std::move(row));
  }
  return rows;
}

// Shared synthetic dataset: 40+40 train, 10+10 test, D=16, seed 42.
struct SynthData {
  mtfl::test::TempDir dir{"acceptance"};
  fs::path train() const { return dir / "data/train.csv"; }
  fs::path test() const { return dir / "data/test.csv"; }
};

std::vector<std::string> train_args(const SynthData& d, const fs::path& out, std::size_t epochs) {
  return {"train", "--manifest", d.train().string(), "--out-dir", out.string(), "--epochs",
          std::to_string(epochs), "--lr", "1e-3", "--batch-half", "8", "--seed", "42", "--workers", "1"};
}

double score_and_eval(const SynthData& d, const fs::path& run) {
  require_ok(cli_run({"score", "--checkpoint", (run / "model.mtfc").string(), "--manifest",
                      d.test().string(), "--out-dir", (run / "scores").string()}),
             "score");
  const CliResult e = cli_run({"eval", "--scores-dir", (run / "scores").string(), "--manifest", d.test().string()});
  require_ok(e, "eval");
  report_value(e.out, "AP");
  return report_value(e.out, "AUC");
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  ModelGradcheckSetup setup = ModelGradcheckSetup::tiny();
  setup.options.eps = kGradEps;
  setup.options.tol = kGradTol;
  const GradReport r = check_model_gradients(setup);
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  const bool shape_ok = setup.model.snippets == 8 && setup.model.feature_dim == 8 &&
                        setup.model.heads == 2 && setup.loss.k == 2 && setup.model.dropout == 0.0 &&
                        setup.loss.lambda_fm > 0 && setup.loss.lambda_sparsity > 0 &&
                        setup.loss.lambda_smoothness > 0;
  return {shape_ok && r.max_relative_error <= kGradTol && seconds < kGradSeconds,
          "max_rel=" + fmt(r.max_relative_error) + " over " + std::to_string(r.coordinates_checked) +
              " coords, worst " + r.worst_coordinate + ", " + fmt(seconds) + " s"};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(20240611);
  std::size_t auc_bad = 0, ap_bad = 0;
  double worst_ap = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    for (int metric = 0; metric < 2; ++metric) {
      const std::size_t n = 2 + rng() % 49;
      const int levels = 1 + static_cast<int>(rng() % 6);
      std::vector<double> s(n);
      std::vector<int> y(n);
      for (std::size_t i = 0; i < n; ++i) {
        s[i] = static_cast<double>(rng() % levels) / levels;
        y[i] = static_cast<int>(rng() % 2);
      }
      y[rng() % n] = 1;
      if (std::count(y.begin(), y.end(), 1) == static_cast<long>(n)) y[(rng() % (n - 1) + 1 + std::distance(y.begin(), std::find(y.begin(), y.end(), 1))) % n] = 0;
      if (metric == 0) {
        if (std::count(y.begin(), y.end(), 0) == 0) y[0] = 0, y[1] = 1;
        double wins = 0.0, pairs = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < n; ++j)
            if (y[i] == 1 && y[j] == 0) {
              pairs += 1.0;
              wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
        if (roc_auc(s, y) != wins / pairs) ++auc_bad;
      } else {
        std::set<double, std::greater<>> thresholds(s.begin(), s.end());
        const double positives = static_cast<double>(std::count(y.begin(), y.end(), 1));
        double ap = 0.0, prev = 0.0;
        for (double t : thresholds) {
          double tp = 0.0, k = 0.0;
          for (std::size_t i = 0; i < n; ++i)
            if (s[i] >= t) k += 1.0, tp += y[i];
          ap += (tp / positives - prev) * (tp / k);
          prev = tp / positives;
        }
        const double err = std::abs(average_precision(s, y) - ap);
        worst_ap = std::max(worst_ap, err);
        if (err > kApTol) ++ap_bad;
      }
    }
  }
  return {auc_bad == 0 && ap_bad == 0, "AUC mismatches " + std::to_string(auc_bad) +
                                           "/200, AP mismatches " + std::to_string(ap_bad) +
                                           "/200 (worst " + fmt(worst_ap) + ")"};
}

Outcome synthetic_end_to_end(const SynthData& d, std::size_t& full_params) {
  const auto t0 = Clock::now();
  require_ok(cli_run({"synth", "--out-dir", (d.dir / "data").string(), "--normal", "40", "--abnormal", "40",
                      "--test-normal", "10", "--test-abnormal", "10", "--d", "16", "--seed", "42"}),
             "synth");
  const CliResult t = cli_run(train_args(d, d.dir / "trained", 200));
  require_ok(t, "train");
  full_params = parameters_line(t.out);
  const double trained = score_and_eval(d, d.dir / "trained");
  const double seconds = std::chrono::duration<double>(Clock::now() - t0).count();

  require_ok(cli_run(train_args(d, d.dir / "untrained", 0)), "train --epochs 0");
  const double untrained = score_and_eval(d, d.dir / "untrained");
  return {trained >= kTrainedAuc && untrained >= kUntrainedLo && untrained <= kUntrainedHi &&
              seconds < kPipelineSeconds,
          "trained AUC=" + fmt(trained) + ", untrained AUC=" + fmt(untrained) + ", " + fmt(seconds) + " s"};
}

Outcome determinism(const SynthData& d) {
  auto run = [&](const std::string& name, const std::string& workers) {
    auto args = train_args(d, d.dir / name, 10);
    args.back() = workers;
    require_ok(cli_run(args), "train " + name);
    return read_loss_log(d.dir / name / "loss_log.csv");
  };
  const auto a = run("det_a", "1"), b = run("det_b", "1"), w4 = run("det_w4", "4");
  double worst = 0.0;
  bool same_len = a.size() == b.size() && !a.empty();
  for (std::size_t i = 0; same_len && i < a.size(); ++i)
    for (std::size_t j = 0; j < 6; ++j) worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
  const bool workers_equal = w4 == a;
  const bool ckpt_equal = mtfl::test::slurp(d.dir / "det_a/model.mtfc") == mtfl::test::slurp(d.dir / "det_w4/model.mtfc");
  return {same_len && worst <= kLogTol && workers_equal && ckpt_equal,
          std::to_string(a.size()) + " steps, max |diff| " + fmt(worst) + ", workers 4 vs 1 " +
              (workers_equal && ckpt_equal ? "identical" : "DIFFERENT")};
}

Outcome loss_decomposition(const SynthData& d) {
  auto args = train_args(d, d.dir / "nolambda", 4);
  for (const char* flag : {"--lambda-fm", "--lambda1", "--lambda2"}) {
    args.push_back(flag);
    args.push_back("0");
  }
  require_ok(cli_run(args), "train with zero lambdas");
  const auto rows = read_loss_log(d.dir / "nolambda/loss_log.csv");
  std::size_t bad = 0;
  for (const auto& r : rows) bad += r[5] != r[1];

  Tape tape;
  const TemporalTerms t = temporal_regularizers(tape.constant(Matrix(32, 1, 0.5)));
  const double sm = t.smoothness.value()(0, 0), sp = t.sparsity.value()(0, 0);
  return {!rows.empty() && bad == 0 && sm == 0.0 && sp == 16.0,
          std::to_string(rows.size() - bad) + "/" + std::to_string(rows.size()) +
              " steps total==bce; constant 0.5 over T=32: smoothness=" + fmt(sm) + " sparsity=" + fmt(sp)};
}

Outcome shape_invariants() {
  std::mt19937_64 rng(77);
  const std::size_t ts[] = {8, 16, 32}, ds[] = {8, 16, 32}, hs[] = {1, 2, 4};
  std::size_t configs = 0, failures = 0;
  double worst_row = 0.0;
  while (configs < 100) {
    const std::size_t t = ts[rng() % 3], dim = ds[rng() % 3], heads = hs[rng() % 3];
    if (dim % heads != 0 || (dim / 2) % heads != 0) continue;
    ++configs;
    ModelConfig c;
    c.snippets = t;
    c.feature_dim = dim;
    c.heads = heads;
    c.hidden1 = 32;
    c.hidden2 = 16;
    const ModelParams params = init_params(c, rng());
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random = [&] {
      Matrix m(t, dim);
      for (auto& v : m.values()) v = gauss(rng);
      return m;
    };
    Tape tape;
    BoundParams bound(tape, params);
    ForwardTrace trace;
    const ForwardOutput out =
        forward(bind_features(tape, {random(), random(), random()}), bound, c, Mode::kEval, 0, &trace);
    bool ok = true;
    for (const Matrix* m : {&trace.long_medium, &trace.medium_short, &trace.short_long})
      ok &= m->rows() == t && m->cols() == dim;
    ok &= trace.local.rows() == t && trace.local.cols() == dim / 2;
    ok &= trace.global.rows() == t && trace.global.cols() == dim / 2;
    ok &= out.fused.rows() == t && out.fused.cols() == dim;
    ok &= out.scores.rows() == t && out.scores.cols() == 1;
    ok &= trace.attention.size() == 4 * heads;
    for (const Matrix& a : trace.attention) {
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double sum = 0.0;
        for (double v : a.row(r)) sum += v;
        worst_row = std::max(worst_row, std::abs(sum - 1.0));
      }
    }
    for (double s : out.scores.value().values()) ok &= s > 0.0 && s < 1.0;
    failures += !ok;
  }
  return {failures == 0 && worst_row <= kAttentionTol,
          std::to_string(configs - failures) + "/" + std::to_string(configs) +
              " configs, worst attention row error " + fmt(worst_row)};
}

Outcome ablation_structure(const SynthData& d, std::size_t full_params) {
  const std::size_t dim = 16, half = dim / 2;
  const std::vector<std::pair<std::string, std::size_t>> blocks = {
      {"pfl", 3 * (4 * dim * dim + 3 * dim)},
      {"ltl", 3 * (3 * dim + dim)},
      {"gtl", 4 * half * half + 3 * half},
      {"ff", dim * dim + dim},
  };
  bool pass = full_params > 0;
  std::string detail;
  for (const auto& [name, size] : blocks) {
    auto args = train_args(d, d.dir / ("ablate_" + name), 200);
    args.push_back("--disable-" + name);
    const CliResult t = cli_run(args);
    require_ok(t, "train --disable-" + name);
    const std::size_t params = parameters_line(t.out);
    const double auc = score_and_eval(d, d.dir / ("ablate_" + name));
    const bool ok = full_params - params == size && auc >= kAblationAuc;
    pass &= ok;
    detail += (detail.empty() ? "" : "; ") + name + ": -" + std::to_string(full_params - params) + " params (expect " +
              std::to_string(size) + "), AUC=" + fmt(auc);
  }
  return {pass, detail};
}

template <class F>
FormatErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const FormatError& e) {
    return e.kind();
  }
  return FormatErrorKind::kMalformed;
}

Outcome format_round_trips(const SynthData& d) {
  const fs::path dir = d.dir / "formats";
  fs::create_directories(dir);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix clips(23, 16);
  for (auto& v : clips.values()) v = static_cast<double>(static_cast<float>(gauss(rng)));
  write_feature_file(dir / "a.mtfb", clips);
  const bool mtfb_values = read_feature_file(dir / "a.mtfb") == clips;
  write_feature_file(dir / "b.mtfb", read_feature_file(dir / "a.mtfb"));
  const std::string bytes = mtfl::test::slurp(dir / "a.mtfb");
  const bool mtfb_bytes = bytes == mtfl::test::slurp(dir / "b.mtfb");

  const Checkpoint ck = load_checkpoint(d.dir / "trained/model.mtfc");
  save_checkpoint(ck, dir / "c.mtfc");
  const bool mtfc_equal = load_checkpoint(dir / "c.mtfc") == ck;
  const std::string ck_bytes = mtfl::test::slurp(dir / "c.mtfc");
  const bool mtfc_bytes = ck_bytes == mtfl::test::slurp(d.dir / "trained/model.mtfc");

  std::string bad = bytes;
  bad.replace(0, 4, "XXXX");
  mtfl::test::spit(dir / "magic.mtfb", bad);
  mtfl::test::spit(dir / "trunc.mtfb", bytes.substr(0, bytes.size() - 4));
  bad = ck_bytes;
  bad.replace(0, 4, "XXXX");
  mtfl::test::spit(dir / "magic.mtfc", bad);
  mtfl::test::spit(dir / "trunc.mtfc", ck_bytes.substr(0, ck_bytes.size() / 2));
  const bool kinds =
      kind_of([&] { read_feature_file(dir / "magic.mtfb"); }) == FormatErrorKind::kBadMagic &&
      kind_of([&] { read_feature_file(dir / "trunc.mtfb"); }) == FormatErrorKind::kTruncated &&
      kind_of([&] { load_checkpoint(dir / "magic.mtfc"); }) == FormatErrorKind::kBadMagic &&
      kind_of([&] { load_checkpoint(dir / "trunc.mtfc"); }) == FormatErrorKind::kTruncated;
  return {mtfb_values && mtfb_bytes && mtfc_equal && mtfc_bytes && kinds,
          std::string("MTFB ") + (mtfb_values && mtfb_bytes ? "bit-exact" : "MISMATCH") + ", MTFC " +
              (mtfc_equal && mtfc_bytes ? "bit-exact" : "MISMATCH") + ", error kinds " +
              (kinds ? "as specified" : "WRONG")};
}

}  // namespace

int main() {
  SynthData data;
  std::size_t full_params = 0;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 gradient correctness", gradient_correctness},
      {"2 metric oracles", metric_oracles},
      {"3 synthetic end-to-end", [&] { return synthetic_end_to_end(data, full_params); }},
      {"4 determinism", [&] { return determinism(data); }},
      {"5 loss decomposition", [&] { return loss_decomposition(data); }},
      {"6 shape/attention invariants", shape_invariants},
      {"7 ablation structure", [&] { return ablation_structure(data, full_params); }},
      {"8 format round-trips", [&] { return format_round_trips(data); }},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "criterion " << name << ": " << (o.pass ? "PASS" : "FAIL") << " (" << o.detail << ")"
              << std::endl;
  }
  std::cout << (failed == 0 ? "ALL PASS" : std::to_string(failed) + " FAILED") << std::endl;
  return failed == 0 ? 0 : 1;
}
