// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance run: one PASS/FAIL line per criterion, non-zero exit
// status if any criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "rcf/commands.hpp"
#include "rcf/depth_encoding.hpp"
#include "rcf/errors.hpp"
#include "rcf/ops.hpp"
#include "rcf/random.hpp"

namespace {

using namespace rcf;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed sub-checks of one criterion.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }

  Outcome outcome() const {
    std::string detail;
    for (const auto& n : notes_) detail += (detail.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) detail += (detail.empty() ? "failed: " : "; failed: ") + f;
    return {failures_.empty(), detail};
  }

 private:
  std::vector<std::string> failures_, notes_;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path work_dir() {
  fs::path p = fs::temp_directory_path() / "rcf_acceptance";
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// The synthetic fusion experiment: S = C = 4, 20 / 10 per class, B = 3,
/// D = 64, M = 32.
RunConfig fusion_experiment() {
  RunConfig c;
  c.synth.num_shapes = 4;
  c.synth.num_hues = 4;
  c.synth.train_per_class = 20;
  c.synth.test_per_class = 10;
  c.synth.image_size = 32;
  c.synth.seed = 0;
  c.model.backbone.input_hw = 32;
  c.model.backbone.num_blocks = 3;
  c.model.fusion.projection_depth = 64;
  c.model.fusion.memory_neurons = 32;
  c.model.fusion.num_classes = 16;
  c.train.batch_size = 64;
  c.train.epochs = 10;
  c.train.multi_start_k = 3;
  c.train.seed = 1;
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_fidelity() {
  Checks c;
  std::ostringstream log;
  const GradcheckReport r = cmd_gradcheck(ModelConfig{}, 0, log);
  c.note(fmt::format("max rel err {:.3e} at {} over {} coordinates, {:.1f} s", r.result.max_rel_error,
                     r.result.worst_param, r.result.checked, r.seconds));
  c.expect(r.model.dtype == DType::f64, "not 64-bit");
  c.expect(r.result.max_rel_error < 1e-4, "max relative error >= 1e-4");
  c.expect(r.result.passed, "grad_check reported failure");
  c.expect(r.seconds < 60.0, "runtime >= 60 s");
  return c.outcome();
}

GruCell random_cell(std::size_t in, std::size_t m, Rng& rng, double scale) {
  GruCell cell = GruCell::make(in, m, true, DType::f64, rng);
  for (Tensor* t : {&cell.theta_z, &cell.theta_r, &cell.theta_h, &cell.gamma_z, &cell.gamma_r,
                    &cell.gamma_h, &*cell.b_z, &*cell.b_r, &*cell.b_h})
    for (double& v : t->data<double>()) v = scale * normal(rng);
  return cell;
}

Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor::from({rows, cols}, v, DType::f64);
}

Outcome gru_suite() {
  Checks c;
  Rng rng(2024);
  std::size_t convexity_violations = 0, range_violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = trial % 2 ? 0.5 : 4.0;  // saturating and non-saturating
    GruCell cell = random_cell(6, 5, rng, scale);
    const Tensor p = random_matrix(4, 6, rng, -3, 3);
    const Tensor h = random_matrix(4, 5, rng, -1, 1);
    const GruGates g = gru_gates(cell, p, h);
    const Tensor next = gru_step(cell, p, h);
    for (std::size_t i = 0; i < next.numel(); ++i) {
      const double lo = std::min(h.at(i), g.candidate.at(i)), hi = std::max(h.at(i), g.candidate.at(i));
      convexity_violations += next.at(i) < lo - 1e-12 || next.at(i) > hi + 1e-12;
      range_violations += !(g.z.at(i) >= 0.0 && g.z.at(i) <= 1.0);
      range_violations += !(g.r.at(i) >= 0.0 && g.r.at(i) <= 1.0);
      range_violations += !(std::abs(g.candidate.at(i)) <= 1.0);
    }
  }
  c.expect(convexity_violations == 0, fmt::format("{} convexity violations", convexity_violations));
  c.expect(range_violations == 0, fmt::format("{} gate-range violations", range_violations));

  double keep_err = 0.0, take_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    GruCell cell = random_cell(4, 3, rng, 0.5);
    const Tensor p = random_matrix(2, 4, rng, -1, 1);
    const Tensor h = random_matrix(2, 3, rng, -0.9, 0.9);
    for (double& b : cell.b_z->data<double>()) b = -100.0;  // z -> 0: keep h_prev
    const Tensor kept = gru_step(cell, p, h);
    for (std::size_t i = 0; i < kept.numel(); ++i) keep_err = std::max(keep_err, std::abs(kept.at(i) - h.at(i)));
    for (double& b : cell.b_z->data<double>()) b = 100.0;  // z -> 1: take the candidate
    const Tensor cand = gru_gates(cell, p, h).candidate;
    const Tensor taken = gru_step(cell, p, h);
    for (std::size_t i = 0; i < taken.numel(); ++i)
      take_err = std::max(take_err, std::abs(taken.at(i) - cand.at(i)));
  }
  c.expect(keep_err < 1e-6, fmt::format("z->0 limit off by {:.2e}", keep_err));
  c.expect(take_err < 1e-6, fmt::format("z->1 limit off by {:.2e}", take_err));

  // One unit, p = 1, h_prev = 0.5, every weight 1, biases 0.
  const double z = 1.0 / (1.0 + std::exp(-1.5));
  const double oracle = (1.0 - z) * 0.5 + z * std::tanh(1.0 + z * 0.5);
  GruCell unit = GruCell::make(1, 1, true, DType::f64, rng);
  for (Tensor* t : {&unit.theta_z, &unit.theta_r, &unit.theta_h, &unit.gamma_z, &unit.gamma_r,
                    &unit.gamma_h})
    t->data<double>()[0] = 1.0;
  const double h = gru_step(unit, Tensor::from({1, 1}, {1.0}, DType::f64),
                            Tensor::from({1, 1}, {0.5}, DType::f64))
                       .item();
  c.note(fmt::format("scalar step h = {:.6f} (closed form {:.6f}; 0.81643 would need tanh(1.40879) = 0.88703, "
                     "actual {:.6f})",
                     h, oracle, std::tanh(1.0 + z * 0.5)));
  c.expect(std::abs(h - oracle) < 1e-4, "scalar step differs from closed form");
  c.expect(std::abs(h - 0.816595) < 1e-4, "scalar step outside 0.816595 +- 1e-4");
  return c.outcome();
}

Outcome parameter_claims() {
  Checks c;
  Rng rng(7);
  for (int i = 0; i < 10; ++i) {
    const std::size_t n = 1 + uniform_index(rng, 4096), m = 1 + uniform_index(rng, 4096);
    const std::size_t gru = count_parameters(CellKind::gru, n, m);
    const std::size_t lstm = count_parameters(CellKind::lstm, n, m);
    c.expect(4 * gru == 3 * lstm && static_cast<double>(gru) / static_cast<double>(lstm) == 0.75,
             fmt::format("ratio {} / {} for (n, m) = ({}, {})", gru, lstm, n, m));
  }

  FusionConfig fc;
  std::vector<std::size_t> gru_counts, fc_counts;
  for (std::size_t levels = 1; levels <= 10; ++levels) {
    gru_counts.push_back(
        FusionHead::make(Head::gru, 2 * fc.projection_depth, levels, fc, DType::f32, rng).parameter_count());
    fc_counts.push_back(
        FusionHead::make(Head::fc, 2 * fc.projection_depth, levels, fc, DType::f32, rng).parameter_count());
  }
  c.expect(std::all_of(gru_counts.begin(), gru_counts.end(),
                       [&](std::size_t v) { return v == gru_counts.front(); }),
           "GRU head count depends on L");
  const std::size_t step = fc_counts[1] - fc_counts[0];
  bool linear = step > 0;
  for (std::size_t i = 1; i < fc_counts.size(); ++i) linear &= fc_counts[i] - fc_counts[i - 1] == step;
  c.expect(linear, "fc head count not linear in L");
  c.expect(step == 2 * fc.projection_depth * fc.memory_neurons, "fc step is not 2D*M per level");
  std::size_t crossover = 0;
  for (std::size_t i = 0; i < fc_counts.size() && crossover == 0; ++i)
    if (fc_counts[i] > gru_counts[i]) crossover = i + 1;
  c.note(fmt::format("10 pairs at 0.75; GRU head {} for every L, fc head {} + {}*(L-1), larger from L={}",
                     gru_counts.front(), fc_counts.front(), step, crossover));
  return c.outcome();
}

Outcome surface_normals() {
  Checks c;
  const std::size_t w = 9, h = 7;
  DepthImage flat{w, h, std::vector<std::uint16_t>(w * h, 1234)};
  const Tensor f = depth_to_normals(flat);
  bool exact = true;
  for (std::size_t i = 0; i < w * h; ++i)
    exact &= f.at(i) == 0.5 && f.at(w * h + i) == 0.5 && f.at(2 * w * h + i) == 1.0;
  c.expect(exact, "flat plane not exactly (0.5, 0.5, 1)");

  double worst = 0.0;
  for (auto [a, b] : std::vector<std::pair<int, int>>{{1, 0}, {0, 1}, {2, -3}, {-5, 4}, {17, 9}}) {
    DepthImage plane{w, h, std::vector<std::uint16_t>(w * h)};
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t col = 0; col < w; ++col)
        plane.values[r * w + col] = static_cast<std::uint16_t>(1000 + a * static_cast<int>(col) +
                                                               b * static_cast<int>(r));
    const Tensor n = depth_to_normals(plane);
    const double norm = std::sqrt(double(a * a + b * b + 1));
    const double expect[3] = {(-a / norm + 1) / 2, (-b / norm + 1) / 2, (1 / norm + 1) / 2};
    for (std::size_t r = 1; r + 1 < h; ++r)
      for (std::size_t col = 1; col + 1 < w; ++col)
        for (std::size_t ch = 0; ch < 3; ++ch)
          worst = std::max(worst, std::abs(n.at((ch * h + r) * w + col) - expect[ch]));
  }
  c.note(fmt::format("slope planes: worst interior deviation {:.2e}", worst));
  c.expect(worst < 1e-5, "slope plane off closed form by >= 1e-5");
  return c.outcome();
}

struct FusionRuns {
  double rgb = 0, depth = 0, fused = 0;
};

Outcome fusion_gain(const fs::path& dir, FusionRuns& runs) {
  Checks c;
  const auto t0 = Clock::now();
  std::ostringstream log;
  for (Modality m : {Modality::rgb, Modality::depth, Modality::rgbd}) {
    RunConfig cfg = fusion_experiment();
    cfg.model.modality = m;
    const std::string tag(to_string(m));
    const TrainReport r = cmd_train(cfg, dir / (tag + ".rcfk"), dir / (tag + ".csv"), log);
    const double acc = r.test->accuracy;
    (m == Modality::rgb ? runs.rgb : m == Modality::depth ? runs.depth : runs.fused) = acc;
    std::printf("  criterion 5: %-5s test accuracy %.4f after %zu epochs (%.0f s elapsed)\n",
                tag.c_str(), acc, r.history.size(), seconds_since(t0));
    std::fflush(stdout);
  }
  const double minutes = seconds_since(t0) / 60.0;
  const auto [rgb_ceiling, depth_ceiling] = bayes_bounds(fusion_experiment().synth);
  c.note(fmt::format("rgb {:.4f} depth {:.4f} (ceilings {:.2f} / {:.2f}), fused {:.4f}, {:.1f} min",
                     runs.rgb, runs.depth, rgb_ceiling, depth_ceiling, runs.fused, minutes));
  c.expect(runs.rgb <= 0.30, "rgb-only above 0.30");
  c.expect(runs.depth <= 0.30, "depth-only above 0.30");
  c.expect(runs.fused >= 0.90, "fused below 0.90");
  c.expect(runs.fused >= std::max(runs.rgb, runs.depth) + 0.50, "fusion gain below 0.50");
  c.expect(minutes < 30.0, "over 30 minutes");
  return c.outcome();
}

Outcome ablation(const fs::path& dir, const FusionRuns& runs) {
  Checks c;
  std::ostringstream log;
  const std::vector<Head> heads{Head::gru, Head::res5, Head::fc};
  const auto rows = cmd_ablate(fusion_experiment(), heads, dir / "ablation.csv", log);
  std::ifstream table(dir / "ablation.csv");
  for (std::string line; std::getline(table, line);) std::printf("  criterion 6: %s\n", line.c_str());
  c.expect(rows.size() == 3, "expected three rows");
  if (rows.size() != 3) return c.outcome();
  const double full = rows[0].test_accuracy;
  c.note(fmt::format("full {:.4f}, res5 {:.4f} (L={}), fc {:.4f}", full, rows[1].test_accuracy,
                     rows[1].sequence_length, rows[2].test_accuracy));
  c.expect(rows[1].sequence_length == 1, "res5 sequence length is not 1");
  c.expect(full >= rows[1].test_accuracy - 0.02, "full below res5 - 0.02");
  c.expect(full >= rows[2].test_accuracy - 0.02, "full below fc - 0.02");
  c.expect(full == runs.fused, "full variant differs from the fused training run of the same seed");
  return c.outcome();
}

Outcome overfit() {
  Checks c;
  const RunConfig cfg = fusion_experiment();
  const Dataset data = generate_dataset(cfg.synth, Split::train);
  std::vector<std::size_t> one_per_class;
  for (std::size_t k = 0; k < cfg.synth.num_classes(); ++k) one_per_class.push_back(k * cfg.synth.train_per_class);
  Rng rng(5);
  Learner learner = Learner::create(RcFusion::build(cfg.model, rng), InputNorm::fit(data));
  const Batch batch = make_batch(data, one_per_class, learner.norm, cfg.model.dtype);
  std::size_t steps = 0;
  double acc = 0.0;
  while (steps < 200 && acc < 1.0) {
    acc = train_step(learner, batch, cfg.train).accuracy;
    ++steps;
  }
  c.note(fmt::format("batch of {} reached accuracy {:.4f} at step {}", one_per_class.size(), acc, steps));
  c.expect(acc == 1.0, "not memorized within 200 steps");
  return c.outcome();
}

Outcome determinism(const fs::path& dir) {
  Checks c;
  RunConfig cfg;
  cfg.synth.num_shapes = 2;
  cfg.synth.num_hues = 2;
  cfg.synth.image_size = 16;
  cfg.synth.train_per_class = 6;
  cfg.synth.test_per_class = 3;
  cfg.model.backbone.input_hw = 16;
  cfg.model.backbone.stem_channels = 8;
  cfg.model.fusion.projection_depth = 16;
  cfg.model.fusion.memory_neurons = 8;
  cfg.model.fusion.num_classes = 4;
  cfg.train.batch_size = 8;
  cfg.train.epochs = 3;
  cfg.train.multi_start_k = 2;
  cfg.train.seed = 9;
  cfg.train.augment = AugmentConfig{};  // exercise the augmentation stream too
  std::ostringstream log;
  cmd_train(cfg, dir / "d1.rcfk", dir / "d1.csv", log);
  cmd_train(cfg, dir / "d2.rcfk", dir / "d2.csv", log);
  c.expect(file_bytes(dir / "d1.csv") == file_bytes(dir / "d2.csv"), "metrics differ");
  c.expect(file_bytes(dir / "d1.rcfk") == file_bytes(dir / "d2.rcfk"), "checkpoints differ");

  const auto entries = load_checkpoint(dir / "d1.rcfk");
  save_checkpoint(dir / "d3.rcfk", entries);
  const auto again = load_checkpoint(dir / "d3.rcfk");
  bool same = entries.size() == again.size();
  for (std::size_t i = 0; same && i < entries.size(); ++i)
    same = entries[i].name == again[i].name && entries[i].tensor.bitwise_equal(again[i].tensor);
  c.expect(same, "round trip not bitwise");
  c.expect(file_bytes(dir / "d1.rcfk") == file_bytes(dir / "d3.rcfk"), "re-saved file differs");

  auto bytes = file_bytes(dir / "d1.rcfk");
  std::size_t rejected = 0, tried = 0;
  Rng rng(3);
  for (int i = 0; i < 64; ++i, ++tried) {
    auto bad = bytes;
    bad[uniform_index(rng, bad.size())] ^= static_cast<std::uint8_t>(1u << uniform_index(rng, 8));
    try {
      decode_checkpoint(bad);
    } catch (const FormatError&) {
      ++rejected;
    }
  }
  c.note(fmt::format("{} entries, {} bytes; {}/{} single-bit corruptions rejected", entries.size(),
                     bytes.size(), rejected, tried));
  c.expect(rejected == tried, "corruption accepted");
  return c.outcome();
}

Outcome softmax_identities() {
  Checks c;
  Rng rng(99);
  double row_err = 0.0, shift_err = 0.0, ln_err = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 8), k = 2 + uniform_index(rng, 30);
    const double spread = trial % 3 == 0 ? 50.0 : 3.0;
    for (DType dt : {DType::f32, DType::f64}) {
      // Logits on a 2^-10 grid and integer shifts keep the shifted input
      // exact in f32, so any difference comes from softmax itself.
      std::vector<double> v(n * k), shifted(n * k);
      const double shift = std::round(uniform(rng, -100.0, 100.0));
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = std::round(uniform(rng, -spread, spread) * 1024.0) / 1024.0;
        shifted[i] = v[i] + shift;
      }
      const Tensor p = softmax(Tensor::from({n, k}, v, dt));
      const Tensor q = softmax(Tensor::from({n, k}, shifted, dt));
      for (std::size_t r = 0; r < n; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          s += p.at(r * k + j);
          shift_err = std::max(shift_err, std::abs(p.at(r * k + j) - q.at(r * k + j)));
        }
        row_err = std::max(row_err, std::abs(s - 1.0));
      }
    }
  }
  for (std::size_t k : {2u, 4u, 16u})
    for (DType dt : {DType::f32, DType::f64})
      for (double level : {0.0, 3.5, -40.0}) {
        std::vector<std::int32_t> labels{0, static_cast<std::int32_t>(k - 1)};
        const Tensor logits = Tensor::full({2, k}, level, dt);
        const double loss = softmax_cross_entropy(logits, labels).loss.item();
        ln_err = std::max(ln_err, std::abs(loss - std::log(static_cast<double>(k))));
      }
  c.note(fmt::format("row-sum err {:.1e}, shift err {:.1e}, uniform-loss err {:.1e}", row_err,
                     shift_err, ln_err));
  c.expect(row_err <= 1e-6, "row sums");
  c.expect(shift_err <= 1e-6, "shift invariance");
  c.expect(ln_err <= 1e-6, "uniform logits loss != ln K");
  return c.outcome();
}

}  // namespace

int main() {
  const fs::path dir = work_dir();
  const auto t0 = Clock::now();
  FusionRuns runs;
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", gradient_fidelity},
      {2, "GRU equation suite", gru_suite},
      {3, "parameter claims", parameter_claims},
      {4, "surface-normal oracle", surface_normals},
      {5, "fusion gain", [&] { return fusion_gain(dir, runs); }},
      {6, "ablation harness", [&] { return ablation(dir, runs); }},
      {7, "overfit sanity", overfit},
      {8, "determinism and formats", [&] { return determinism(dir); }},
      {9, "softmax / loss identities", softmax_identities},
  };
  int failed = 0;
  for (const auto& crit : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = crit.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", crit.id, crit.name,
                seconds_since(start), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed in %.1f min\n", static_cast<int>(criteria.size()) - failed,
              criteria.size(), seconds_since(t0) / 60.0);
  fs::remove_all(dir);
  return failed == 0 ? 0 : 1;
}
