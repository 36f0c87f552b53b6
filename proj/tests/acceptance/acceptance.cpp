// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ccpt/alignment.hpp"
#include "ccpt/checkpoint.hpp"
#include "ccpt/config.hpp"
#include "ccpt/distill.hpp"
#include "ccpt/eval.hpp"
#include "ccpt/gradcheck.hpp"
#include "ccpt/pipeline.hpp"
#include "ccpt/rehearsal.hpp"
#include "ccpt/rng.hpp"
#include "support/oracles.hpp"

using namespace ccpt;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::printf("%s criterion %d: %s (%s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void run_criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  try {
    report(id, title, body());
  } catch (const std::exception& e) {
    report(id, title, {false, std::string("exception: ") + e.what()});
  }
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Tensor uniform_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(r, c);
  for (double& v : t.data()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

// 1 -------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = Clock::now();
  const auto cases = run_gradcheck_suite();
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  std::string worst_name;
  bool composed = false;
  for (const auto& c : cases) {
    if (c.name.find("total") != std::string::npos) composed = true;
    if (c.result.max_relative_error >= worst) {
      worst = c.result.max_relative_error;
      worst_name = c.name;
    }
  }
  const bool pass = worst < 1e-4 && elapsed < 60.0 && composed && cases.size() >= 20;
  return {pass, std::to_string(cases.size()) + " checks, max rel err " + fmt("%.2e", worst) + " in " + worst_name +
                    ", " + fmt("%.2f", elapsed) + " s"};
}

// 2 -------------------------------------------------------------------------

Outcome closed_form_clip() {
  double worst = 0.0;
  for (std::size_t n : {1, 2, 8, 24}) {
    Tensor eye(n, n);
    for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
    for (double tau : {0.07, 0.5, 1.0}) {
      const double expected = std::log(1.0 + static_cast<double>(n - 1) * std::exp(-1.0 / tau));
      Tape tape;
      const double tape_value = clip_loss(tape.constant(eye), tau).value().item();
      worst = std::max({worst, std::abs(tape_value - expected), std::abs(clip_loss_value(eye, tau) - expected)});
    }
  }
  return {worst <= 1e-9, "max abs err " + fmt("%.2e", worst) + " over 12 (N, tau) cases"};
}

// 3 -------------------------------------------------------------------------

Outcome odid_properties() {
  Rng rng(303);
  const double temps[] = {0.07, 0.5, 1.0, 2.0};
  std::size_t negatives = 0, nonzero_self = 0, partition_violations = 0, corrected_rows = 0, kept_rows = 0;
  double min_loss = 1e300;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + uniform_index(rng, 15);
    Tensor teacher = uniform_matrix(n, n, rng);
    const Tensor student = uniform_matrix(n, n, rng);
    // Mix in boosted diagonals and exact ties so every branch is exercised.
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uniform01(rng);
      if (u < 0.3) teacher(i, i) += 1.0;
      else if (u < 0.4) teacher(i, (i + 1) % n) = teacher(i, i) = 0.9;
    }
    const double td = temps[uniform_index(rng, 4)];
    const Tensor corrected = row_correction(teacher, student);

    for (std::size_t i = 0; i < n; ++i) {
      double row_max = teacher(i, 0);
      for (std::size_t j = 1; j < n; ++j) row_max = std::max(row_max, teacher(i, j));
      const bool keep = teacher(i, i) >= row_max;
      const Tensor& src = keep ? teacher : student;
      (keep ? kept_rows : corrected_rows)++;
      for (std::size_t j = 0; j < n; ++j) partition_violations += corrected(i, j) != src(i, j);
    }

    Tape tape;
    const double loss = odid_loss(tape.constant(student), corrected, td).value().item();
    min_loss = std::min(min_loss, loss);
    negatives += !(loss >= 0.0);
    Tape tape2;
    nonzero_self += odid_loss(tape2.constant(corrected), corrected, td).value().item() != 0.0;
  }
  const bool pass = negatives == 0 && nonzero_self == 0 && partition_violations == 0 && corrected_rows > 0 &&
                    kept_rows > 0;
  return {pass, "1000 pairs, min loss " + fmt("%.3e", min_loss) + ", negative " + std::to_string(negatives) +
                    ", nonzero at equality " + std::to_string(nonzero_self) + ", partition violations " +
                    std::to_string(partition_violations) + ", rows kept/corrected " + std::to_string(kept_rows) + "/" +
                    std::to_string(corrected_rows)};
}

// 4 -------------------------------------------------------------------------

Outcome selection_oracles() {
  Rng rng(404);
  int kmeans_bad = 0, mof_bad = 0, auc_bad = 0;
  double auc_err = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 2 + uniform_index(rng, 7);
    const std::size_t k = 1 + uniform_index(rng, std::min<std::size_t>(3, n));
    const std::size_t d = 1 + uniform_index(rng, 3);
    const std::size_t per = 1 + uniform_index(rng, 3);
    const Tensor x = uniform_matrix(n, d, rng);
    const ClusterResult r = kmeans(x, k, static_cast<std::uint64_t>(inst));

    const auto fixed = oracle::lloyd_fixed_points(x, k);
    const bool is_fixed = std::find(fixed.begin(), fixed.end(), r.assignments) != fixed.end();
    const Tensor means = oracle::means_of(x, r.assignments, k);
    double centroid_err = 0.0;
    for (std::size_t i = 0; i < means.size(); ++i) centroid_err = std::max(centroid_err, std::abs(means[i] - r.centroids[i]));

    const auto brute = oracle::brute_force_select(x, r.centroids, r.assignments, per);
    std::vector<std::vector<std::size_t>> got(k);
    for (const auto& s : select_representatives(r, x, per)) got[s.cluster].push_back(s.index);
    for (auto& g : got) std::sort(g.begin(), g.end());
    kmeans_bad += !(is_fixed && centroid_err <= 1e-12 && got == brute);
  }
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 1 + uniform_index(rng, 6);
    const std::size_t q = 1 + uniform_index(rng, std::min<std::size_t>(3, n));
    const Tensor f = uniform_matrix(n, 1 + uniform_index(rng, 4), rng);
    mof_bad += mof_select(f, q) != oracle::herding(f, q);
  }
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t n = 4 + uniform_index(rng, 17);
    const std::size_t c = 2 + uniform_index(rng, 4);
    Tensor s = uniform_matrix(n, c, rng, 0.0, 1.0);
    if (inst % 2) {
      for (double& v : s.data()) v = std::floor(v * 4.0);
    }
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i < c ? i : uniform_index(rng, c));
    const double err = std::abs(macro_ovr_auc(s, y).macro - oracle::pairwise_macro_auc(s, y));
    auc_err = std::max(auc_err, err);
    auc_bad += !(err <= 1e-12);
  }
  return {kmeans_bad == 0 && mof_bad == 0 && auc_bad == 0,
          "k-means mismatches " + std::to_string(kmeans_bad) + "/100, MoF mismatches " + std::to_string(mof_bad) +
              "/100, AUC mismatches " + std::to_string(auc_bad) + "/100 (max err " + fmt("%.1e", auc_err) + ")"};
}

// 5 -------------------------------------------------------------------------

PairSample item(int modality, int label) {
  PairSample p;
  p.image = {static_cast<double>(label)};
  p.text = {static_cast<double>(label)};
  p.modality_id = modality;
  p.class_label = label;
  return p;
}

std::vector<BufferEntry> fresh_exemplars(int modality, std::size_t count, Rng& rng) {
  std::vector<BufferEntry> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back({item(modality, static_cast<int>(i)), uniform01(rng)});
  return out;
}

Outcome buffer_laws() {
  Rng rng(505);
  std::size_t over_capacity = 0, unbalanced = 0, rebalances = 0;

  // Rebalance-only sequences: every new modality arrives with enough
  // exemplars to fill its share.
  for (std::size_t ops = 0; ops < 10000;) {
    RehearsalBuffer b(1 + uniform_index(rng, 64));
    int next = 1;
    for (int step = 0; step < 100; ++step, ++ops) {
      const bool new_modality = next == 1 || uniform01(rng) < 0.3;
      const int m = new_modality ? next++ : static_cast<int>(1 + uniform_index(rng, static_cast<std::size_t>(next - 1)));
      const std::size_t count = new_modality ? b.capacity() + uniform_index(rng, 8) : uniform_index(rng, 8);
      b.rebalance(fresh_exemplars(m, count, rng), m);
      ++rebalances;
      over_capacity += b.size() > b.capacity();
      std::size_t lo = b.capacity(), hi = 0;
      for (int id : b.modalities()) {
        lo = std::min(lo, b.count(id));
        hi = std::max(hi, b.count(id));
      }
      unbalanced += hi - lo > 1;
    }
  }

  // Mixed sequences: capacity must hold under any interleaving.
  for (std::size_t ops = 0; ops < 10000;) {
    RehearsalBuffer b(1 + uniform_index(rng, 64));
    std::uint64_t seen = 0;
    int next = 1;
    for (int step = 0; step < 100; ++step, ++ops) {
      if (uniform01(rng) < 0.2) {
        b.rebalance(fresh_exemplars(next, uniform_index(rng, 80), rng), next);
        ++next;
      } else {
        b.reservoir_add(item(next, step), ++seen, rng);
      }
      over_capacity += b.size() > b.capacity();
    }
  }

  const std::size_t cap = 50, stream = 1000, trials = 10000;
  std::vector<double> hits(stream, 0.0);
  for (std::size_t t = 0; t < trials; ++t) {
    RehearsalBuffer b(cap);
    for (std::size_t i = 0; i < stream; ++i) b.reservoir_add(item(1, static_cast<int>(i)), i + 1, rng);
    for (const auto& e : b.entries()) hits[static_cast<std::size_t>(e.pair.class_label)] += 1.0;
  }
  const double p = oracle::chi_square_uniform_p(hits);
  return {over_capacity == 0 && unbalanced == 0 && p > 0.01,
          "20000 ops, over-capacity " + std::to_string(over_capacity) + ", unbalanced " + std::to_string(unbalanced) +
              "/" + std::to_string(rebalances) + ", reservoir chi-square p = " + fmt("%.3f", p)};
}

// 6 -------------------------------------------------------------------------

struct RunSummary {
  double forgetting_m1 = 0.0;
  double min_plasticity = 1.0;
};

RunSummary summarize(const RunConfig& c, const std::vector<MetricsRecord>& records) {
  RunSummary s;
  const int last = static_cast<int>(c.stages.size());
  for (const auto& r : records) {
    if (r.setting != Setting::ZeroShot) continue;
    if (r.modality == c.stages[static_cast<std::size_t>(r.stage - 1)].modality_id) {
      s.min_plasticity = std::min(s.min_plasticity, r.acc);
    }
    if (r.stage == last && r.modality == c.stages[0].modality_id) s.forgetting_m1 = r.forgetting.value();
  }
  return s;
}

Outcome forgetting_reproduction() {
  const auto t0 = Clock::now();
  const Strategy strategies[] = {Strategy::RetCoP, Strategy::SeqFT, Strategy::ER, Strategy::RehearsalOnly,
                                 Strategy::OdidOnly};
  std::map<Strategy, std::vector<RunSummary>> runs;
  double min_plasticity = 1.0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    for (auto s : strategies) {
      RunConfig c;
      c.strategy = s;
      c.seed = seed;
      Trainer t(c);
      t.set_write_outputs(false);
      const auto summary = summarize(c, t.run());
      runs[s].push_back(summary);
      min_plasticity = std::min(min_plasticity, summary.min_plasticity);
    }
  }
  const double elapsed = seconds_since(t0);

  int beats_seqft = 0, beats_er = 0, beats_reh = 0, beats_odid = 0;
  std::ostringstream table;
  for (std::size_t i = 0; i < 3; ++i) {
    const double rc = runs[Strategy::RetCoP][i].forgetting_m1;
    beats_seqft += runs[Strategy::SeqFT][i].forgetting_m1 - rc >= 0.10;
    beats_er += rc <= runs[Strategy::ER][i].forgetting_m1;
    beats_reh += rc <= runs[Strategy::RehearsalOnly][i].forgetting_m1;
    beats_odid += rc <= runs[Strategy::OdidOnly][i].forgetting_m1;
    table << "  seed " << i;
    for (auto s : strategies) table << ' ' << to_string(s) << '=' << fmt("%.3f", runs[s][i].forgetting_m1);
    table << '\n';
  }
  std::printf("modality-1 zero-shot forgetting after the last stage:\n%s", table.str().c_str());
  const bool pass = beats_seqft == 3 && beats_er >= 2 && beats_reh >= 2 && beats_odid >= 2 && min_plasticity >= 0.85 &&
                    elapsed < 600.0;
  return {pass, "retcop beats seqft by >=10 pts in " + std::to_string(beats_seqft) + "/3, <= er " +
                    std::to_string(beats_er) + "/3, <= rehearsal_only " + std::to_string(beats_reh) +
                    "/3, <= odid_only " + std::to_string(beats_odid) + "/3, min stage-end acc " +
                    fmt("%.3f", min_plasticity) + ", " + fmt("%.1f", elapsed) + " s"};
}

// 7 -------------------------------------------------------------------------

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

RunConfig resume_config(const fs::path& dir) {
  RunConfig c;
  c.strategy = Strategy::RetCoP;
  c.steps_per_stage = 120;
  c.eval_samples = 300;
  c.probe_train_samples = 200;
  c.seed = 11;
  c.output_dir = dir.string();
  return c;
}

Outcome determinism_and_resume() {
  const fs::path root = fs::temp_directory_path() / "ccpt_acceptance_resume";
  fs::remove_all(root);

  Trainer a(resume_config(root / "a"));
  std::vector<StepLoss> trace_a;
  a.set_step_observer([&](const StepLoss& l) { trace_a.push_back(l); });
  a.run();
  Trainer b(resume_config(root / "b"));
  b.run();
  const std::string log_a = read_bytes(root / "a" / "metrics.jsonl");
  const bool identical = !log_a.empty() && log_a == read_bytes(root / "b" / "metrics.jsonl");

  // Interrupt in the middle of stage 2, reload from disk and finish.
  const RunConfig cc = resume_config(root / "c");
  std::vector<StepLoss> trace_c;
  {
    Trainer c(cc);
    c.set_step_observer([&](const StepLoss& l) { trace_c.push_back(l); });
    fs::create_directories(cc.output_dir);
    std::ofstream(c.metrics_path(), std::ios::trunc);
    c.run_stage();
    for (int i = 0; i < 57; ++i) c.train_step();
    save_checkpoint(c.state(), cc, root / "c" / "interrupt.ckpt");
  }
  Trainer resumed(cc, load_checkpoint_for(cc, root / "c" / "interrupt.ckpt"));
  resumed.set_step_observer([&](const StepLoss& l) { trace_c.push_back(l); });
  resumed.run();
  const bool same_trace = trace_a == trace_c;
  const bool same_params = resumed.state() == a.state();
  const bool same_log = log_a == read_bytes(root / "c" / "metrics.jsonl");
  fs::remove_all(root);
  return {identical && same_trace && same_params && same_log,
          std::string("repeat run metrics ") + (identical ? "identical" : "differ") + ", resumed trace " +
              (same_trace ? "identical" : "differs") + ", final state " + (same_params ? "identical" : "differs") +
              ", resumed metrics " + (same_log ? "identical" : "differ") + " over " +
              std::to_string(trace_a.size()) + " steps"};
}

// 8 -------------------------------------------------------------------------

std::vector<StepLoss> trace(Strategy s, double lambda, double rho) {
  RunConfig c;
  c.strategy = s;
  c.lambda = lambda;
  c.replay_fraction = rho;
  c.steps_per_stage = 50;
  c.seed = 21;
  c.stages.resize(2);
  c.stage_tokens.resize(2);
  Trainer t(c);
  t.set_write_outputs(false);
  std::vector<StepLoss> out;
  t.set_step_observer([&](const StepLoss& l) { out.push_back(l); });
  t.run_stage();
  // The 50 steps that matter: stage 2, where a teacher and a buffer exist.
  out.clear();
  for (int i = 0; i < 50; ++i) t.train_step();
  return out;
}

Outcome strategy_lattice() {
  const double rho = RunConfig{}.replay_fraction;
  const auto full = trace(Strategy::RetCoP, 1.0, rho);
  const bool no_distill = trace(Strategy::RetCoP, 0.0, rho) == trace(Strategy::RehearsalOnly, 1.0, rho);
  const bool no_replay = trace(Strategy::RetCoP, 1.0, 0.0) == trace(Strategy::OdidOnly, 1.0, rho);
  const bool neither = trace(Strategy::RetCoP, 0.0, 0.0) == trace(Strategy::SeqFT, 1.0, rho);
  // Guard against a vacuous pass: the full method must differ from each reduction.
  const bool distinct = full != trace(Strategy::RehearsalOnly, 1.0, rho) && full != trace(Strategy::OdidOnly, 1.0, rho);
  bool has_odid = true;
  for (const auto& l : full) has_odid = has_odid && l.odid.has_value();
  return {no_distill && no_replay && neither && distinct && has_odid,
          std::string("lambda=0 vs rehearsal_only ") + (no_distill ? "equal" : "differ") + ", rho=0 vs odid_only " +
              (no_replay ? "equal" : "differ") + ", both vs seqft " + (neither ? "equal" : "differ") +
              ", full method distinct " + (distinct ? "yes" : "no")};
}

}  // namespace

int main() {
  run_criterion(1, "gradient check of every op and the composed loss", gradients);
  run_criterion(2, "contrastive loss at the identity matches the closed form", closed_form_clip);
  run_criterion(3, "distillation loss and row correction properties", odid_properties);
  run_criterion(4, "selection and AUC oracles", selection_oracles);
  run_criterion(5, "rehearsal buffer laws", buffer_laws);
  run_criterion(6, "forgetting orderings across strategies and seeds", forgetting_reproduction);
  run_criterion(7, "determinism and mid-stage resume", determinism_and_resume);
  run_criterion(8, "strategy degeneracy", strategy_lattice);
  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
