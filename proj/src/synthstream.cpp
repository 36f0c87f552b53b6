#include "ccpt/synthstream.hpp"

#include <cmath>
#include <fstream>

#include "binary_io.hpp"
#include "ccpt/error.hpp"
#include "ccpt/keyvalue.hpp"

namespace ccpt {

namespace {

constexpr char kDatasetMagic[6] = {'C', 'C', 'S', 'Y', 'N', '1'};
constexpr double kMapGain = 1.0;
constexpr double kMapBiasScale = 0.5;

Tensor random_matrix(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Tensor m(rows, cols);
  for (double& v : m.data()) v = normal(rng, 0.0, stddev);
  return m;
}

std::vector<double> apply_map(const Tensor& w, const Tensor& b, std::span<const double> z) {
  std::vector<double> out(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = b(0, i);
    for (std::size_t k = 0; k < z.size(); ++k) acc += w(i, k) * z[k];
    out[i] = std::tanh(acc);
  }
  return out;
}

double min_pairwise_distance(const Tensor& means) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < means.rows(); ++a) {
    for (std::size_t b = a + 1; b < means.rows(); ++b) {
      double sq = 0.0;
      for (std::size_t k = 0; k < means.cols(); ++k) {
        const double d = means(a, k) - means(b, k);
        sq += d * d;
      }
      best = std::min(best, std::sqrt(sq));
    }
  }
  return best;
}

}  // namespace

ModalitySpec default_modality(int modality_id) {
  ModalitySpec spec;
  spec.modality_id = modality_id;
  switch (modality_id) {
    case 1: spec.n_classes = 8; spec.generator_seed = 101; break;
    case 2: spec.n_classes = 6; spec.generator_seed = 202; break;
    case 3: spec.n_classes = 5; spec.generator_seed = 303; break;
    default: throw Error(ErrorKind::Config, "no built-in modality with id " + std::to_string(modality_id));
  }
  return spec;
}

ModalitySpec parse_modality_spec(const std::string& text) {
  ModalitySpec spec;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (key == "modality_id") spec.modality_id = parse_int(key, value);
    else if (key == "n_classes") spec.n_classes = parse_uint(key, value);
    else if (key == "latent_dim") spec.latent_dim = parse_uint(key, value);
    else if (key == "image_dim") spec.image_dim = parse_uint(key, value);
    else if (key == "text_dim") spec.text_dim = parse_uint(key, value);
    else if (key == "noise_sigma") spec.noise_sigma = parse_double(key, value);
    else if (key == "seed") spec.generator_seed = parse_uint(key, value);
    else throw Error(ErrorKind::Config, "unknown modality key '" + key + "'");
  }
  return spec;
}

ModalitySpec load_modality_spec(const std::filesystem::path& path) { return parse_modality_spec(read_text_file(path)); }

ModalityGenerator::ModalityGenerator(const ModalitySpec& spec) : spec_(spec) {
  if (spec.n_classes == 0 || spec.latent_dim == 0 || spec.image_dim == 0 || spec.text_dim == 0) {
    throw Error(ErrorKind::Parameter, "modality dimensions must be positive");
  }
  if (!(spec.noise_sigma >= 0.0)) throw Error(ErrorKind::Parameter, "noise_sigma must be non-negative");

  Rng rng(derive_seed(spec.generator_seed, {static_cast<std::uint64_t>(spec.modality_id), 0x6d6f64}));
  const double required = 4.0 * spec.noise_sigma;
  bool separated = false;
  for (int attempt = 0; attempt < kMaxSeparationResamples && !separated; ++attempt) {
    means_ = Tensor(spec.n_classes, spec.latent_dim);
    for (std::size_t c = 0; c < spec.n_classes; ++c) {
      auto row = means_.row(c);
      double sq = 0.0;
      do {
        sq = 0.0;
        for (double& v : row) {
          v = normal(rng);
          sq += v * v;
        }
      } while (sq == 0.0);
      const double scale = kMeanRadius / std::sqrt(sq);
      for (double& v : row) v *= scale;
    }
    separated = spec.n_classes < 2 || min_pairwise_distance(means_) >= required;
  }
  if (!separated) {
    throw Error(ErrorKind::Generation, "class means not separated by 4*noise_sigma after " +
                                           std::to_string(kMaxSeparationResamples) + " resamples");
  }

  const double w_std = kMapGain / std::sqrt(static_cast<double>(spec.latent_dim));
  image_weight_ = random_matrix(spec.image_dim, spec.latent_dim, w_std, rng);
  image_bias_ = random_matrix(1, spec.image_dim, kMapBiasScale, rng);
  text_weight_ = random_matrix(spec.text_dim, spec.latent_dim, w_std, rng);
  text_bias_ = random_matrix(1, spec.text_dim, kMapBiasScale, rng);
}

std::vector<double> ModalityGenerator::image_view(std::span<const double> z) const {
  return apply_map(image_weight_, image_bias_, z);
}

std::vector<double> ModalityGenerator::text_view(std::span<const double> z) const {
  return apply_map(text_weight_, text_bias_, z);
}

double ModalityGenerator::min_mean_separation() const { return min_pairwise_distance(means_); }

ModalityGenerator build_modality(const ModalitySpec& spec) { return ModalityGenerator(spec); }

std::vector<PairSample> sample_pairs(const ModalityGenerator& gen, std::size_t n, Rng& rng) {
  if (n == 0) throw Error(ErrorKind::Parameter, "sample_pairs needs n >= 1");
  const ModalitySpec& spec = gen.spec();
  const double sigma = spec.noise_sigma;
  std::vector<PairSample> out;
  out.reserve(n);
  std::vector<double> z(spec.latent_dim);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t c = uniform_index(rng, spec.n_classes);
    for (std::size_t k = 0; k < z.size(); ++k) z[k] = gen.class_means()(c, k) + sigma * normal(rng);
    PairSample p;
    p.image = gen.image_view(z);
    p.text = gen.text_view(z);
    for (double& v : p.image) v += 0.5 * sigma * normal(rng);
    for (double& v : p.text) v += 0.5 * sigma * normal(rng);
    p.class_label = spec.label_base() + static_cast<int>(c);
    p.modality_id = spec.modality_id;
    out.push_back(std::move(p));
  }
  return out;
}

Tensor class_prompt_vectors(const ModalityGenerator& gen) {
  const auto& means = gen.class_means();
  Tensor out(means.rows(), gen.spec().text_dim);
  for (std::size_t c = 0; c < means.rows(); ++c) {
    const auto t = gen.text_view(means.row(c));
    std::copy(t.begin(), t.end(), out.row(c).begin());
  }
  return out;
}

Tensor image_batch(std::span<const PairSample> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::Shape, "empty batch");
  Tensor out(pairs.size(), pairs[0].image.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) std::copy(pairs[i].image.begin(), pairs[i].image.end(), out.row(i).begin());
  return out;
}

Tensor text_batch(std::span<const PairSample> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::Shape, "empty batch");
  Tensor out(pairs.size(), pairs[0].text.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) std::copy(pairs[i].text.begin(), pairs[i].text.end(), out.row(i).begin());
  return out;
}

void write_dataset(const std::filesystem::path& path, std::span<const PairSample> pairs) {
  if (pairs.empty()) throw Error(ErrorKind::Parameter, "refusing to write an empty dataset");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  const auto d_img = pairs[0].image.size();
  const auto d_txt = pairs[0].text.size();
  os.write(kDatasetMagic, sizeof(kDatasetMagic));
  detail::write_le(os, static_cast<std::uint32_t>(pairs.size()));
  detail::write_le(os, static_cast<std::uint32_t>(d_img));
  detail::write_le(os, static_cast<std::uint32_t>(d_txt));
  for (const auto& p : pairs)
    for (double v : p.image) detail::write_f32(os, v);
  for (const auto& p : pairs)
    for (double v : p.text) detail::write_f32(os, v);
  for (const auto& p : pairs) detail::write_le(os, static_cast<std::uint32_t>(p.class_label));
  if (!os) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::Io, "cannot open " + path.string());
  char magic[6];
  if (!is.read(magic, 6) || !std::equal(magic, magic + 6, kDatasetMagic)) {
    throw Error(ErrorKind::Format, "bad dataset magic in " + path.string());
  }
  const auto n = detail::read_le<std::uint32_t>(is, "count");
  Dataset ds;
  ds.image_dim = detail::read_le<std::uint32_t>(is, "image_dim");
  ds.text_dim = detail::read_le<std::uint32_t>(is, "text_dim");
  ds.images.assign(n, std::vector<float>(ds.image_dim));
  ds.texts.assign(n, std::vector<float>(ds.text_dim));
  for (auto& r : ds.images)
    for (float& v : r) v = detail::read_f32(is, "image block");
  for (auto& r : ds.texts)
    for (float& v : r) v = detail::read_f32(is, "text block");
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = detail::read_le<std::uint32_t>(is, "labels");
  return ds;
}

}  // namespace ccpt
