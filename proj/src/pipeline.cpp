#include "ccpt/pipeline.hpp"

#include <fstream>
#include <iostream>

#include "ccpt/alignment.hpp"
#include "ccpt/checkpoint.hpp"
#include "ccpt/distill.hpp"
#include "ccpt/error.hpp"
#include "json.hpp"

namespace ccpt {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kBatchStream = 0x6261746368;
constexpr std::uint64_t kReservoirStream = 0x72657376;
constexpr std::uint64_t kExemplarStream = 0x6578656d;
constexpr std::uint64_t kZeroShotStream = 1;
constexpr std::uint64_t kProbeStream = 2;

std::vector<Tensor*> trainable(EncoderParams& params, bool learn_temperature) {
  auto all = params.parameters();
  if (!learn_temperature) all.pop_back();
  return all;
}

}  // namespace

TrainState initial_state(const RunConfig& config) {
  config.validate();
  TrainState st;
  st.params = init_encoders(config.encoder_dims(), config.seed);
  const auto params = trainable(st.params, config.learn_temperature);
  st.optimizer = make_optimizer(params, config.learning_rate, config.warmup_steps, config.weight_decay);
  st.buffer = RehearsalBuffer(config.buffer_capacity);
  st.batch_rng.seed(derive_seed(config.seed, {kBatchStream}));
  st.reservoir_rng.seed(derive_seed(config.seed, {kReservoirStream}));
  return st;
}

Trainer::Trainer(RunConfig config) : Trainer(config, initial_state(config)) {}

Trainer::Trainer(RunConfig config, TrainState state) : config_(std::move(config)), state_(std::move(state)) {
  config_.validate();
  for (const auto& spec : config_.stages) generators_.push_back(build_modality(spec));
  const std::size_t expected = config_.learn_temperature ? EncoderParams::kParameterCount
                                                         : EncoderParams::kParameterCount - 1;
  if (state_.optimizer.first_moment.size() != expected) {
    throw Error(ErrorKind::Config, "optimizer state does not match learn_temperature");
  }
}

std::filesystem::path Trainer::metrics_path() const {
  return std::filesystem::path(config_.output_dir) / "metrics.jsonl";
}

StepLoss Trainer::train_step() {
  if (finished()) throw Error(ErrorKind::Contract, "all stages are already complete");
  const ModalityGenerator& gen = generators_[state_.stage_index];
  const double rho = uses_replay(config_.strategy) ? config_.replay_fraction : 0.0;
  MixedBatch batch = sample_mixed_batch(state_.buffer, gen, config_.batch_size, rho, state_.batch_rng);
  if (batch.fell_back && !fallback_logged_) {
    std::cerr << "note: rehearsal buffer is empty, stage " << state_.stage_index + 1
              << " batches use current-modality pairs only\n";
    fallback_logged_ = true;
  }
  for (auto& p : batch.current) {
    state_.pool.push_back(std::move(p));
    if (state_.pool.size() > config_.pool_size) state_.pool.pop_front();
  }

  const bool distill = uses_distillation(config_.strategy) && config_.lambda > 0.0;
  if (distill && state_.stage_index >= 1 && !state_.teacher) {
    throw Error(ErrorKind::Config, "distillation strategy reached stage " + std::to_string(state_.stage_index + 1) +
                                       " without a teacher snapshot");
  }

  const Tensor images = image_batch(batch.pairs);
  const Tensor texts = text_batch(batch.pairs);
  Tape tape;
  const EncoderVars enc = bind_encoders(tape, state_.params, true);
  const Var s = similarity_matrix(encode_images(enc, tape.constant(images)), encode_texts(enc, tape.constant(texts)));
  const Var clip = clip_loss(s, exp(enc.log_temperature()));

  StepLoss out;
  out.stage = state_.stage_index + 1;
  out.step = state_.step_in_stage + 1;
  out.clip = clip.value().item();
  Var loss = clip;
  if (distill && state_.teacher) {
    const Tensor corrected = row_correction(teacher_similarity(*state_.teacher, images, texts), s.value());
    const Var odid = odid_loss(s, corrected, config_.distill_temperature);
    out.odid = odid.value().item();
    loss = total_loss(clip, odid, {config_.lambda, config_.distill_temperature});
  }
  out.total = loss.value().item();
  tape.backward(loss);

  auto params = trainable(state_.params, config_.learn_temperature);
  std::vector<Tensor> grads;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Var v = enc.vars[i];
    grads.push_back(v.grad().empty() ? Tensor::zeros_like(v.value()) : v.grad());
  }
  optimizer_step(params, grads, state_.optimizer);
  clamp_temperature(state_.params);

  ++state_.step_in_stage;
  ++state_.global_step;
  if (config_.checkpoint_every > 0 && state_.global_step % config_.checkpoint_every == 0) {
    maybe_checkpoint("latest.ckpt");
  }
  if (observer_) observer_(out);
  return out;
}

std::size_t Trainer::exemplar_quota() const {
  std::size_t modalities = state_.buffer.modalities().size();
  const int current = config_.stages[state_.stage_index].modality_id;
  if (state_.buffer.count(current) == 0) {
    bool seen = false;
    for (int m : state_.buffer.modalities()) seen = seen || m == current;
    if (!seen) ++modalities;
  }
  const auto split = even_split(config_.buffer_capacity, modalities);
  return std::min(split.back(), state_.pool.size());
}

std::vector<MetricsRecord> Trainer::finish_stage() {
  if (finished()) throw Error(ErrorKind::Contract, "all stages are already complete");
  const std::size_t t = state_.stage_index;
  const int stage = static_cast<int>(t) + 1;
  const int modality = config_.stages[t].modality_id;

  state_.teacher = snapshot_teacher(state_.params, stage);

  const std::vector<PairSample> pool(state_.pool.begin(), state_.pool.end());
  if (!pool.empty()) {
    switch (config_.strategy) {
      case Strategy::RetCoP:
      case Strategy::RehearsalOnly: {
        ExemplarOptions opts;
        opts.quota = exemplar_quota();
        opts.clusters = config_.cluster_count == 0 ? std::max<std::size_t>(1, opts.quota / 2)
                                                   : std::min(config_.cluster_count, opts.quota);
        opts.seed = derive_seed(config_.seed, {static_cast<std::uint64_t>(stage), kExemplarStream});
        state_.buffer.rebalance(build_stage_exemplars(pool, state_.params, opts), modality);
        break;
      }
      case Strategy::MoF:
        state_.buffer.rebalance(build_mof_exemplars(pool, state_.params, exemplar_quota()), modality);
        break;
      case Strategy::ER:
        for (const auto& p : pool) state_.buffer.reservoir_add(p, ++state_.reservoir_seen, state_.reservoir_rng);
        break;
      case Strategy::SeqFT:
      case Strategy::OdidOnly:
        break;
    }
  }

  std::vector<MetricsRecord> records;
  for (std::size_t m = 0; m <= t; ++m) {
    const auto id = static_cast<std::uint64_t>(config_.stages[m].modality_id);
    const auto zs = zero_shot_eval(state_.params, generators_[m], config_.eval_samples,
                                   derive_seed(config_.seed, {id, static_cast<std::uint64_t>(stage), kZeroShotStream}));
    const auto lp = linear_probe_eval(state_.params, generators_[m], config_.probe_train_samples, config_.eval_samples,
                                      derive_seed(config_.seed, {id, static_cast<std::uint64_t>(stage), kProbeStream}));
    for (const auto& [setting, score] : {std::pair{Setting::ZeroShot, zs}, std::pair{Setting::LinearProbe, lp}}) {
      MetricsRecord r;
      r.stage = stage;
      r.modality = config_.stages[m].modality_id;
      r.setting = setting;
      r.acc = score.acc;
      r.auc = score.auc;
      if (m == t) {
        state_.learned.push_back(r);
      } else {
        for (const auto& l : state_.learned) {
          if (l.modality == r.modality && l.setting == r.setting) r.forgetting = forgetting_rate(l.acc, r.acc);
        }
      }
      records.push_back(r);
    }
  }
  append_metrics(records);

  ++state_.stage_index;
  state_.step_in_stage = 0;
  state_.pool.clear();
  fallback_logged_ = false;
  maybe_checkpoint("stage" + std::to_string(stage) + ".ckpt");
  return records;
}

std::vector<MetricsRecord> Trainer::run_stage() {
  while (state_.step_in_stage < config_.steps_per_stage) train_step();
  return finish_stage();
}

std::vector<MetricsRecord> Trainer::run() {
  if (write_outputs_) {
    std::filesystem::create_directories(config_.output_dir);
    if (state_.global_step == 0 && state_.stage_index == 0) {
      std::ofstream(metrics_path(), std::ios::trunc);
    } else {
      drop_metrics_after_checkpoint();
    }
  }
  std::vector<MetricsRecord> all;
  while (!finished()) {
    auto records = run_stage();
    all.insert(all.end(), records.begin(), records.end());
  }
  maybe_checkpoint("final.ckpt");
  return all;
}

void Trainer::append_metrics(const std::vector<MetricsRecord>& records) const {
  if (!write_outputs_) return;
  std::filesystem::create_directories(config_.output_dir);
  std::ofstream os(metrics_path(), std::ios::app);
  if (!os) throw Error(ErrorKind::Io, "cannot append to " + metrics_path().string());
  for (const auto& r : records) os << metrics_json_line(config_, r, state_.global_step) << '\n';
}

// Lines from stages the checkpoint had not finished are rewritten on resume.
void Trainer::drop_metrics_after_checkpoint() const {
  std::ifstream is(metrics_path());
  if (!is) return;
  std::vector<std::string> keep;
  bool dropped = false;
  std::string line;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.contains("stage") && j["stage"].is_number_integer() &&
        j["stage"].get<std::size_t>() > state_.stage_index) {
      dropped = true;
      continue;
    }
    keep.push_back(line);
  }
  is.close();
  if (!dropped) return;
  std::ofstream os(metrics_path(), std::ios::trunc);
  for (const auto& l : keep) os << l << '\n';
}

void Trainer::maybe_checkpoint(const std::string& name) const {
  if (!write_outputs_) return;
  std::filesystem::create_directories(config_.output_dir);
  save_checkpoint(state_, config_, std::filesystem::path(config_.output_dir) / name);
}

std::vector<MetricsRecord> run_pipeline(const RunConfig& config) {
  Trainer trainer(config);
  return trainer.run();
}

std::string metrics_json_line(const RunConfig& config, const MetricsRecord& r, std::uint64_t step) {
  nlohmann::ordered_json j;
  j["run_id"] = config.effective_run_id();
  j["strategy"] = to_string(config.strategy);
  j["stage"] = r.stage;
  j["modality"] = r.modality;
  j["setting"] = to_string(r.setting);
  j["acc"] = r.acc;
  j["auc"] = r.auc;
  j["forgetting"] = r.forgetting ? nlohmann::ordered_json(*r.forgetting) : nlohmann::ordered_json(nullptr);
  j["step"] = step;
  return j.dump();
}

std::vector<MetricsLine> read_metrics(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<MetricsLine> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MetricsLine m;
      m.run_id = j.at("run_id").get<std::string>();
      m.strategy = j.at("strategy").get<std::string>();
      m.record.stage = j.at("stage").get<int>();
      m.record.modality = j.at("modality").get<int>();
      m.record.setting = setting_from_string(j.at("setting").get<std::string>());
      m.record.acc = j.at("acc").get<double>();
      m.record.auc = j.at("auc").get<double>();
      if (!j.at("forgetting").is_null()) m.record.forgetting = j.at("forgetting").get<double>();
      m.step = j.at("step").get<std::uint64_t>();
      out.push_back(std::move(m));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::Format, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace ccpt
