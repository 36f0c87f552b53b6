#include "ccpt/config.hpp"

#include <sstream>

#include "ccpt/error.hpp"
#include "ccpt/keyvalue.hpp"

namespace ccpt {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::RetCoP: return "retcop";
    case Strategy::SeqFT: return "seqft";
    case Strategy::ER: return "er";
    case Strategy::RehearsalOnly: return "rehearsal_only";
    case Strategy::OdidOnly: return "odid_only";
    case Strategy::MoF: return "mof";
  }
  return "?";
}

Strategy strategy_from_string(const std::string& name) {
  for (Strategy s : {Strategy::RetCoP, Strategy::SeqFT, Strategy::ER, Strategy::RehearsalOnly, Strategy::OdidOnly,
                     Strategy::MoF}) {
    if (to_string(s) == name) return s;
  }
  throw Error(ErrorKind::Usage,
              "unknown strategy '" + name + "' (expected retcop, seqft, er, rehearsal_only, odid_only or mof)");
}

bool uses_distillation(Strategy s) { return s == Strategy::RetCoP || s == Strategy::OdidOnly; }

bool uses_replay(Strategy s) {
  return s == Strategy::RetCoP || s == Strategy::RehearsalOnly || s == Strategy::ER || s == Strategy::MoF;
}

std::string RunConfig::effective_run_id() const {
  return run_id.empty() ? to_string(strategy) + "-seed" + std::to_string(seed) : run_id;
}

EncoderDims RunConfig::encoder_dims() const {
  validate();
  return {stages[0].image_dim, stages[0].text_dim, hidden, embed_dim};
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, msg); };
  if (stages.empty()) fail("stages must list at least one modality");
  if (stage_tokens.size() != stages.size()) fail("stage tokens and resolved stages disagree");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].image_dim != stages[0].image_dim || stages[i].text_dim != stages[0].text_dim) {
      fail("all stages must share image_dim and text_dim");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (stages[j].modality_id == stages[i].modality_id) fail("stage modality ids must be distinct");
    }
  }
  if (steps_per_stage == 0) fail("steps_per_stage must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (buffer_capacity == 0) fail("buffer_capacity must be >= 1");
  if (!(replay_fraction >= 0.0 && replay_fraction < 1.0)) fail("replay_fraction must lie in [0, 1)");
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(distill_temperature > 0.0)) fail("distill_temperature must be > 0");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (hidden == 0 || embed_dim == 0) fail("hidden and embed_dim must be >= 1");
  if (pool_size < buffer_capacity) fail("pool_size must be >= buffer_capacity");
  for (const auto& s : stages) {
    if (eval_samples < s.n_classes) fail("eval_samples must be >= the class count of every stage");
    if (probe_train_samples < 10 * s.n_classes) fail("probe_train_samples must be >= 10 * n_classes");
  }
}

namespace {

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw Error(ErrorKind::Config, "empty entry in stages list");
    out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

ModalitySpec resolve_stage(const std::string& token, const std::filesystem::path& base_dir) {
  if (!token.empty() && token.find_first_not_of("0123456789") == std::string::npos) {
    return default_modality(parse_int("stages", token));
  }
  std::filesystem::path p(token);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return load_modality_spec(p);
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  RunConfig c;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "strategy") c.strategy = strategy_from_string(value);
    else if (key == "stages") {
      c.stage_tokens = split_list(value);
      c.stages.clear();
      for (const auto& t : c.stage_tokens) c.stages.push_back(resolve_stage(t, base_dir));
    }
    else if (key == "steps_per_stage") c.steps_per_stage = parse_uint(key, value);
    else if (key == "batch_size") c.batch_size = parse_uint(key, value);
    else if (key == "buffer_capacity") c.buffer_capacity = parse_uint(key, value);
    else if (key == "replay_fraction") c.replay_fraction = parse_double(key, value);
    else if (key == "cluster_count") c.cluster_count = parse_uint(key, value);
    else if (key == "lambda") c.lambda = parse_double(key, value);
    else if (key == "distill_temperature") c.distill_temperature = parse_double(key, value);
    else if (key == "learning_rate") c.learning_rate = parse_double(key, value);
    else if (key == "warmup_steps") c.warmup_steps = parse_uint(key, value);
    else if (key == "weight_decay") c.weight_decay = parse_double(key, value);
    else if (key == "learn_temperature") c.learn_temperature = parse_bool(key, value);
    else if (key == "hidden") c.hidden = parse_uint(key, value);
    else if (key == "embed_dim") c.embed_dim = parse_uint(key, value);
    else if (key == "pool_size") c.pool_size = parse_uint(key, value);
    else if (key == "eval_samples") c.eval_samples = parse_uint(key, value);
    else if (key == "probe_train_samples") c.probe_train_samples = parse_uint(key, value);
    else if (key == "checkpoint_every") c.checkpoint_every = parse_uint(key, value);
    else if (key == "seed") c.seed = parse_uint(key, value);
    else if (key == "output_dir") c.output_dir = value;
    else if (key == "run_id") c.run_id = value;
    else throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path), path.parent_path());
}

std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  std::string stages;
  for (std::size_t i = 0; i < c.stage_tokens.size(); ++i) stages += (i ? "," : "") + c.stage_tokens[i];
  os << "strategy = " << to_string(c.strategy) << '\n'
     << "stages = " << stages << '\n'
     << "steps_per_stage = " << c.steps_per_stage << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "buffer_capacity = " << c.buffer_capacity << '\n'
     << "replay_fraction = " << c.replay_fraction << '\n'
     << "cluster_count = " << c.cluster_count << '\n'
     << "lambda = " << c.lambda << '\n'
     << "distill_temperature = " << c.distill_temperature << '\n'
     << "learning_rate = " << c.learning_rate << '\n'
     << "warmup_steps = " << c.warmup_steps << '\n'
     << "weight_decay = " << c.weight_decay << '\n'
     << "learn_temperature = " << (c.learn_temperature ? "true" : "false") << '\n'
     << "hidden = " << c.hidden << '\n'
     << "embed_dim = " << c.embed_dim << '\n'
     << "pool_size = " << c.pool_size << '\n'
     << "eval_samples = " << c.eval_samples << '\n'
     << "probe_train_samples = " << c.probe_train_samples << '\n'
     << "checkpoint_every = " << c.checkpoint_every << '\n'
     << "seed = " << c.seed << '\n'
     << "output_dir = " << c.output_dir << '\n';
  if (!c.run_id.empty()) os << "run_id = " << c.run_id << '\n';
  return os.str();
}

std::uint64_t config_hash(const RunConfig& c) {
  // Where a run writes and how often it checkpoints do not change its numbers.
  RunConfig key = c;
  key.output_dir.clear();
  key.checkpoint_every = 0;
  std::ostringstream os;
  os.precision(17);
  os << to_text(key);
  for (const auto& s : c.stages) {
    os << s.modality_id << ':' << s.n_classes << ':' << s.latent_dim << ':' << s.image_dim << ':' << s.text_dim << ':'
       << s.noise_sigma << ':' << s.generator_seed << '\n';
  }
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ccpt
