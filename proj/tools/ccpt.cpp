#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ccpt/checkpoint.hpp"
#include "ccpt/config.hpp"
#include "ccpt/error.hpp"
#include "ccpt/eval.hpp"
#include "ccpt/gradcheck.hpp"
#include "ccpt/pipeline.hpp"
#include "ccpt/report.hpp"
#include "ccpt/synthstream.hpp"

namespace {

constexpr double kGradTolerance = 1e-4;

int pretrain(const std::string& config_path, const std::string& resume, std::optional<std::uint64_t> seed,
             const std::string& output_dir, std::size_t log_every) {
  ccpt::RunConfig config = ccpt::load_config(config_path);
  if (seed) config.seed = *seed;
  if (!output_dir.empty()) config.output_dir = output_dir;

  std::optional<ccpt::Trainer> trainer;
  if (resume.empty()) {
    trainer.emplace(config);
  } else {
    trainer.emplace(config, ccpt::load_checkpoint_for(config, resume));
  }
  if (log_every > 0) {
    trainer->set_step_observer([log_every](const ccpt::StepLoss& l) {
      if (l.step % log_every != 0) return;
      std::printf("stage %zu step %zu clip %.6f", l.stage, l.step, l.clip);
      if (l.odid) std::printf(" odid %.6f", *l.odid);
      std::printf(" total %.6f\n", l.total);
    });
  }
  for (const auto& r : trainer->run()) {
    std::cout << ccpt::metrics_json_line(config, r, trainer->state().global_step) << '\n';
  }
  std::cout << "metrics: " << trainer->metrics_path().string() << '\n';
  return 0;
}

int evaluate(const std::string& ckpt, int modality, std::size_t n_test, std::size_t n_train, std::uint64_t seed) {
  const ccpt::LoadedCheckpoint loaded = ccpt::load_checkpoint(ckpt);
  const ccpt::ModalitySpec* spec = nullptr;
  for (const auto& s : loaded.stages) {
    if (s.modality_id == modality) spec = &s;
  }
  if (spec == nullptr) {
    throw ccpt::Error(ccpt::ErrorKind::Usage, "checkpoint has no modality " + std::to_string(modality));
  }
  const auto gen = ccpt::build_modality(*spec);
  const auto& params = loaded.state.params;
  const auto zs = ccpt::zero_shot_eval(params, gen, n_test, ccpt::derive_seed(seed, {1}));
  const auto lp = ccpt::linear_probe_eval(params, gen, n_train, n_test, ccpt::derive_seed(seed, {2}));
  std::printf("modality %d zeroshot acc %.4f auc %.4f\n", modality, zs.acc, zs.auc);
  std::printf("modality %d linprobe acc %.4f auc %.4f\n", modality, lp.acc, lp.auc);
  return 0;
}

int report(const std::vector<std::string>& runs) {
  std::vector<ccpt::MetricsLine> lines;
  for (const auto& dir : runs) {
    std::filesystem::path p(dir);
    if (std::filesystem::is_directory(p)) p /= "metrics.jsonl";
    auto more = ccpt::read_metrics(p);
    lines.insert(lines.end(), more.begin(), more.end());
  }
  std::cout << ccpt::render_report(lines);
  return 0;
}

int gradcheck() {
  double worst = 0.0;
  for (const auto& c : ccpt::run_gradcheck_suite()) {
    std::printf("%-22s max rel. err %.3e\n", c.name.c_str(), c.result.max_relative_error);
    worst = std::max(worst, c.result.max_relative_error);
  }
  std::printf("max rel. err %.3e (tolerance %.0e)\n", worst, kGradTolerance);
  return worst < kGradTolerance ? 0 : 1;
}

int gen_data(const std::string& spec_path, const std::string& out, std::size_t n, std::uint64_t seed) {
  const auto gen = ccpt::build_modality(ccpt::load_modality_spec(spec_path));
  ccpt::Rng rng(seed);
  const auto pairs = ccpt::sample_pairs(gen, n, rng);
  ccpt::write_dataset(out, pairs);
  std::printf("wrote %zu pairs to %s\n", pairs.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual contrastive pre-training on synthetic modality streams"};
  app.require_subcommand(1);

  std::string config_path, resume, output_dir, ckpt, spec_path, out;
  std::optional<std::uint64_t> seed;
  std::uint64_t eval_seed = 0, data_seed = 0;
  std::size_t log_every = 0, n_test = 1000, n_train = 1000, n_pairs = 1000;
  int modality = 0;
  std::vector<std::string> runs;

  auto* pre = app.add_subcommand("pretrain", "Run the continual pre-training pipeline");
  pre->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  pre->add_option("--resume", resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  pre->add_option("--seed", seed, "Override the config seed");
  pre->add_option("--output-dir", output_dir, "Override the config output_dir");
  pre->add_option("--log-every", log_every, "Print losses every N steps");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one modality");
  ev->add_option("--ckpt", ckpt, "Checkpoint file")->required()->check(CLI::ExistingFile);
  ev->add_option("--modality", modality, "Modality id")->required();
  ev->add_option("--n-test", n_test, "Test samples");
  ev->add_option("--n-train", n_train, "Probe training samples");
  ev->add_option("--seed", eval_seed, "Evaluation seed");

  auto* rep = app.add_subcommand("report", "Forgetting table over run directories");
  rep->add_option("--runs", runs, "Run directories or metrics files")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every op and the training loss");

  auto* gd = app.add_subcommand("gen-data", "Write a synthetic dataset");
  gd->add_option("--spec", spec_path, "Modality spec file")->required()->check(CLI::ExistingFile);
  gd->add_option("--out", out, "Output file")->required();
  gd->add_option("--n", n_pairs, "Number of pairs");
  gd->add_option("--seed", data_seed, "Sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (pre->parsed()) return pretrain(config_path, resume, seed, output_dir, log_every);
    if (ev->parsed()) return evaluate(ckpt, modality, n_test, n_train, eval_seed);
    if (rep->parsed()) return report(runs);
    if (gc->parsed()) return gradcheck();
    if (gd->parsed()) return gen_data(spec_path, out, n_pairs, data_seed);
  } catch (const ccpt::Error& e) {
    std::cerr << e.what() << '\n';
    return e.kind() == ccpt::ErrorKind::Usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
