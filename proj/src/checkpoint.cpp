#include "ccpt/checkpoint.hpp"

#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include "binary_io.hpp"
#include "ccpt/error.hpp"
#include "json.hpp"

namespace ccpt {

namespace {

using nlohmann::json;

constexpr char kMagic[6] = {'C', 'C', 'K', 'P', 'T', '1'};

struct NamedTensor {
  std::string name;
  const Tensor* tensor;
};

json spec_to_json(const ModalitySpec& s) {
  return {{"modality_id", s.modality_id}, {"n_classes", s.n_classes},       {"latent_dim", s.latent_dim},
          {"image_dim", s.image_dim},     {"text_dim", s.text_dim},         {"noise_sigma", s.noise_sigma},
          {"seed", s.generator_seed}};
}

ModalitySpec spec_from_json(const json& j) {
  ModalitySpec s;
  s.modality_id = j.at("modality_id").get<int>();
  s.n_classes = j.at("n_classes").get<std::size_t>();
  s.latent_dim = j.at("latent_dim").get<std::size_t>();
  s.image_dim = j.at("image_dim").get<std::size_t>();
  s.text_dim = j.at("text_dim").get<std::size_t>();
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.generator_seed = j.at("seed").get<std::uint64_t>();
  return s;
}

template <class Pairs, class Get>
Tensor stack_field(const Pairs& pairs, Get get) {
  std::vector<std::vector<double>> rows;
  rows.reserve(pairs.size());
  for (const auto& p : pairs) rows.push_back(get(p));
  return stack_rows(rows);
}

// Reads tensors and RNG words out of the in-memory payload.
class PayloadReader {
 public:
  PayloadReader(const json& header, std::string payload) : header_(header), payload_(std::move(payload)) {
    std::size_t tensor_bytes = 0;
    for (const auto& t : header_.at("tensors")) {
      const std::size_t elems = t.at("shape")[0].get<std::size_t>() * t.at("shape")[1].get<std::size_t>();
      const std::size_t width = t.at("dtype") == "f32" ? 4 : 8;
      const std::size_t end = t.at("offset").get<std::size_t>() + elems * width;
      tensor_bytes = std::max(tensor_bytes, end);
      index_[t.at("name").get<std::string>()] = &t;
    }
    std::size_t words = 0;
    for (const auto& r : header_.at("rngs")) {
      words = std::max(words, r.at("offset").get<std::size_t>() + r.at("count").get<std::size_t>());
    }
    rng_base_ = header_.at("rng_block_offset").get<std::size_t>();
    if (rng_base_ < tensor_bytes || payload_.size() < rng_base_ + words * 8) {
      throw Error(ErrorKind::Corruption, "checkpoint payload is truncated");
    }
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  Tensor tensor(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error(ErrorKind::Corruption, "checkpoint lacks tensor '" + name + "'");
    const json& t = *it->second;
    const std::size_t rows = t.at("shape")[0].get<std::size_t>();
    const std::size_t cols = t.at("shape")[1].get<std::size_t>();
    const bool f32 = t.at("dtype") == "f32";
    std::istringstream is(payload_.substr(t.at("offset").get<std::size_t>(), rows * cols * (f32 ? 4 : 8)));
    std::vector<double> data(rows * cols);
    for (double& v : data) v = f32 ? detail::read_f32(is, name.c_str()) : detail::read_f64(is, name.c_str());
    return Tensor({rows, cols}, std::move(data));
  }

  Rng rng(const std::string& name) const {
    for (const auto& r : header_.at("rngs")) {
      if (r.at("name") != name) continue;
      std::istringstream is(payload_.substr(rng_base_ + r.at("offset").get<std::size_t>() * 8,
                                            r.at("count").get<std::size_t>() * 8));
      std::vector<std::uint64_t> words(r.at("count").get<std::size_t>());
      for (auto& w : words) w = detail::read_le<std::uint64_t>(is, "rng state");
      return rng_from_words(words);
    }
    throw Error(ErrorKind::Corruption, "checkpoint lacks RNG '" + name + "'");
  }

 private:
  const json& header_;
  std::string payload_;
  std::map<std::string, const json*> index_;
  std::size_t rng_base_ = 0;
};

EncoderParams read_params(const PayloadReader& r, const std::string& prefix) {
  EncoderParams p;
  const auto ptrs = p.parameters();
  const auto& names = EncoderParams::parameter_names();
  for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = r.tensor(prefix + std::string(names[i]));
  return p;
}

std::vector<PairSample> read_pairs(const PayloadReader& r, const std::string& prefix, const json& meta) {
  std::vector<PairSample> out;
  if (meta.empty()) return out;
  const Tensor images = r.tensor(prefix + ".images");
  const Tensor texts = r.tensor(prefix + ".texts");
  if (images.rows() != meta.size() || texts.rows() != meta.size()) {
    throw Error(ErrorKind::Corruption, prefix + " rows disagree with metadata");
  }
  for (std::size_t i = 0; i < meta.size(); ++i) {
    PairSample p;
    p.image.assign(images.row(i).begin(), images.row(i).end());
    p.text.assign(texts.row(i).begin(), texts.row(i).end());
    p.modality_id = meta[i].at("modality").get<int>();
    p.class_label = meta[i].at("label").get<int>();
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace

void save_checkpoint(const TrainState& state, const RunConfig& config, const std::filesystem::path& path,
                     Precision precision) {
  std::vector<NamedTensor> tensors;
  std::vector<std::unique_ptr<Tensor>> owned;
  const auto& names = EncoderParams::parameter_names();
  const auto params = state.params.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) tensors.push_back({"params." + std::string(names[i]), params[i]});
  for (std::size_t i = 0; i < state.optimizer.first_moment.size(); ++i) {
    tensors.push_back({"adam.m." + std::to_string(i), &state.optimizer.first_moment[i]});
    tensors.push_back({"adam.v." + std::to_string(i), &state.optimizer.second_moment[i]});
  }
  if (state.teacher) {
    const auto tp = state.teacher->params().parameters();
    for (std::size_t i = 0; i < tp.size(); ++i) tensors.push_back({"teacher." + std::string(names[i]), tp[i]});
  }

  json buffer_meta = json::array();
  for (const auto& e : state.buffer.entries()) {
    buffer_meta.push_back({{"modality", e.pair.modality_id}, {"label", e.pair.class_label}, {"rank", e.rank}});
  }
  if (!state.buffer.empty()) {
    owned.push_back(std::make_unique<Tensor>(
        stack_field(state.buffer.entries(), [](const BufferEntry& e) { return e.pair.image; })));
    tensors.push_back({"buffer.images", owned.back().get()});
    owned.push_back(std::make_unique<Tensor>(
        stack_field(state.buffer.entries(), [](const BufferEntry& e) { return e.pair.text; })));
    tensors.push_back({"buffer.texts", owned.back().get()});
  }
  json pool_meta = json::array();
  for (const auto& p : state.pool) pool_meta.push_back({{"modality", p.modality_id}, {"label", p.class_label}});
  if (!state.pool.empty()) {
    owned.push_back(std::make_unique<Tensor>(stack_field(state.pool, [](const PairSample& p) { return p.image; })));
    tensors.push_back({"pool.images", owned.back().get()});
    owned.push_back(std::make_unique<Tensor>(stack_field(state.pool, [](const PairSample& p) { return p.text; })));
    tensors.push_back({"pool.texts", owned.back().get()});
  }

  const bool f32 = precision == Precision::F32;
  json tensor_meta = json::array();
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    tensor_meta.push_back({{"name", t.name},
                           {"dtype", f32 ? "f32" : "f64"},
                           {"shape", {t.tensor->rows(), t.tensor->cols()}},
                           {"offset", offset}});
    offset += t.tensor->size() * (f32 ? 4 : 8);
  }
  const std::vector<std::pair<std::string, std::vector<std::uint64_t>>> rngs = {
      {"batch", rng_state_words(state.batch_rng)}, {"reservoir", rng_state_words(state.reservoir_rng)}};
  json rng_meta = json::array();
  std::size_t word_offset = 0;
  for (const auto& [name, words] : rngs) {
    rng_meta.push_back({{"name", name}, {"offset", word_offset}, {"count", words.size()}});
    word_offset += words.size();
  }

  json learned = json::array();
  for (const auto& m : state.learned) {
    learned.push_back({{"stage", m.stage},
                       {"modality", m.modality},
                       {"setting", to_string(m.setting)},
                       {"acc", m.acc},
                       {"auc", m.auc}});
  }
  json stages = json::array();
  for (const auto& s : config.stages) stages.push_back(spec_to_json(s));

  json header = {
      {"format_version", kCheckpointVersion},
      {"config_hash", config_hash(config)},
      {"config_text", to_text(config)},
      {"stages", stages},
      {"stage_index", state.stage_index},
      {"step_in_stage", state.step_in_stage},
      {"global_step", state.global_step},
      {"reservoir_seen", state.reservoir_seen},
      {"optimizer",
       {{"step_count", state.optimizer.step_count},
        {"learning_rate", state.optimizer.learning_rate},
        {"warmup_steps", state.optimizer.warmup_steps},
        {"weight_decay", state.optimizer.weight_decay},
        {"count", state.optimizer.first_moment.size()}}},
      {"teacher_stage", state.teacher ? json(state.teacher->stage()) : json(nullptr)},
      {"buffer",
       {{"capacity", state.buffer.capacity()}, {"modalities", state.buffer.modalities()}, {"entries", buffer_meta}}},
      {"pool", pool_meta},
      {"learned", learned},
      {"tensors", tensor_meta},
      {"rng_block_offset", offset},
      {"rngs", rng_meta},
  };
  const std::string header_text = header.dump();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    os.write(kMagic, sizeof(kMagic));
    detail::write_le(os, kCheckpointVersion);
    detail::write_le(os, static_cast<std::uint32_t>(header_text.size()));
    os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& t : tensors) {
      for (double v : t.tensor->data()) f32 ? detail::write_f32(os, v) : detail::write_f64(os, v);
    }
    for (const auto& [name, words] : rngs) {
      for (auto w : words) detail::write_le(os, w);
    }
    if (!os) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[6] = {};
  if (!is.read(magic, 6) || !std::equal(magic, magic + 6, kMagic)) {
    throw Error(ErrorKind::Format, "bad checkpoint magic in " + path.string());
  }
  LoadedCheckpoint out;
  out.format_version = detail::read_le<std::uint32_t>(is, "format version");
  if (out.format_version != kCheckpointVersion) {
    throw Error(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(out.format_version));
  }
  const auto header_len = detail::read_le<std::uint32_t>(is, "header length");
  std::string header_text(header_len, '\0');
  if (!is.read(header_text.data(), header_len)) throw Error(ErrorKind::Corruption, "checkpoint header is truncated");
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Corruption, std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  std::string payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  try {
    const PayloadReader reader(header, std::move(payload));
    out.config_hash = header.at("config_hash").get<std::uint64_t>();
    out.config_text = header.at("config_text").get<std::string>();
    for (const auto& s : header.at("stages")) out.stages.push_back(spec_from_json(s));

    TrainState& st = out.state;
    st.stage_index = header.at("stage_index").get<std::size_t>();
    st.step_in_stage = header.at("step_in_stage").get<std::size_t>();
    st.global_step = header.at("global_step").get<std::uint64_t>();
    st.reservoir_seen = header.at("reservoir_seen").get<std::uint64_t>();
    st.params = read_params(reader, "params.");

    const json& opt = header.at("optimizer");
    st.optimizer.step_count = opt.at("step_count").get<std::uint64_t>();
    st.optimizer.learning_rate = opt.at("learning_rate").get<double>();
    st.optimizer.warmup_steps = opt.at("warmup_steps").get<std::uint64_t>();
    st.optimizer.weight_decay = opt.at("weight_decay").get<double>();
    for (std::size_t i = 0; i < opt.at("count").get<std::size_t>(); ++i) {
      st.optimizer.first_moment.push_back(reader.tensor("adam.m." + std::to_string(i)));
      st.optimizer.second_moment.push_back(reader.tensor("adam.v." + std::to_string(i)));
    }
    if (!header.at("teacher_stage").is_null()) {
      st.teacher.emplace(read_params(reader, "teacher."), header.at("teacher_stage").get<int>());
    }

    const json& buf = header.at("buffer");
    auto pairs = read_pairs(reader, "buffer", buf.at("entries"));
    std::vector<BufferEntry> entries;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      entries.push_back({std::move(pairs[i]), buf.at("entries")[i].at("rank").get<double>()});
    }
    st.buffer = RehearsalBuffer::restore(buf.at("capacity").get<std::size_t>(), std::move(entries),
                                         buf.at("modalities").get<std::vector<int>>());
    for (auto& p : read_pairs(reader, "pool", header.at("pool"))) st.pool.push_back(std::move(p));

    for (const auto& m : header.at("learned")) {
      MetricsRecord r;
      r.stage = m.at("stage").get<int>();
      r.modality = m.at("modality").get<int>();
      r.setting = setting_from_string(m.at("setting").get<std::string>());
      r.acc = m.at("acc").get<double>();
      r.auc = m.at("auc").get<double>();
      st.learned.push_back(r);
    }
    st.batch_rng = reader.rng("batch");
    st.reservoir_rng = reader.rng("reservoir");
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Corruption, std::string("checkpoint header is inconsistent: ") + e.what());
  }
  return out;
}

TrainState load_checkpoint_for(const RunConfig& config, const std::filesystem::path& path) {
  LoadedCheckpoint ck = load_checkpoint(path);
  if (ck.config_hash != config_hash(config)) {
    std::cerr << "warning: checkpoint " << path.string() << " was written under a different configuration\n";
  }
  return std::move(ck.state);
}

}  // namespace ccpt
