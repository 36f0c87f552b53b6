#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccpt/rng.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

/// One synthetic "imaging modality": a Gaussian class mixture in a latent
/// space observed through two fixed nonlinear maps (image view, text view).
struct ModalitySpec {
  int modality_id = 1;
  std::size_t n_classes = 8;
  std::size_t latent_dim = 8;
  std::size_t image_dim = 32;
  std::size_t text_dim = 24;
  double noise_sigma = 0.4;
  std::uint64_t generator_seed = 101;

  /// Labels of modality m occupy [m * 1000, m * 1000 + n_classes).
  int label_base() const { return modality_id * 1000; }

  friend bool operator==(const ModalitySpec&, const ModalitySpec&) = default;
};

/// Built-in modalities 1, 2, 3 with 8, 6 and 5 classes.
ModalitySpec default_modality(int modality_id);

/// Flat `key = value` text: modality_id, n_classes, latent_dim, image_dim,
/// text_dim, noise_sigma, seed.
ModalitySpec parse_modality_spec(const std::string& text);
ModalitySpec load_modality_spec(const std::filesystem::path& path);

struct PairSample {
  std::vector<double> image;
  std::vector<double> text;
  int class_label = 0;
  int modality_id = 0;

  friend bool operator==(const PairSample&, const PairSample&) = default;
};

class ModalityGenerator {
 public:
  explicit ModalityGenerator(const ModalitySpec& spec);

  const ModalitySpec& spec() const { return spec_; }
  /// n_classes x latent_dim
  const Tensor& class_means() const { return means_; }

  std::vector<double> image_view(std::span<const double> z) const;
  std::vector<double> text_view(std::span<const double> z) const;

  /// Smallest pairwise distance between class means.
  double min_mean_separation() const;

  friend bool operator==(const ModalityGenerator&, const ModalityGenerator&) = default;

 private:
  ModalitySpec spec_;
  Tensor means_;
  Tensor image_weight_, image_bias_;
  Tensor text_weight_, text_bias_;
};

inline constexpr double kMeanRadius = 3.0;
inline constexpr int kMaxSeparationResamples = 1000;

ModalityGenerator build_modality(const ModalitySpec& spec);

/// Draws n labelled pairs; both views come from the same latent draw.
std::vector<PairSample> sample_pairs(const ModalityGenerator& gen, std::size_t n, Rng& rng);

/// Row c is the noiseless text view of class mean c.
Tensor class_prompt_vectors(const ModalityGenerator& gen);

Tensor image_batch(std::span<const PairSample> pairs);
Tensor text_batch(std::span<const PairSample> pairs);

/// Binary dump: "CCSYN1", u32 n, d_img, d_txt, f32 image block, f32 text
/// block, u32 labels. All little-endian, row-major.
void write_dataset(const std::filesystem::path& path, std::span<const PairSample> pairs);

struct Dataset {
  std::size_t image_dim = 0;
  std::size_t text_dim = 0;
  std::vector<std::vector<float>> images;
  std::vector<std::vector<float>> texts;
  std::vector<std::uint32_t> labels;
};
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace ccpt
