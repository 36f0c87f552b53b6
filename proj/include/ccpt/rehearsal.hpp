#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccpt/encoders.hpp"
#include "ccpt/rng.hpp"
#include "ccpt/synthstream.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

/// J_i = s I_i + (1 - s) T_i with s = clamp(S_ii, 0, 1).
struct JointEmbeddingSet {
  Tensor vectors;
  std::vector<std::size_t> source_indices;
};

/// Inputs must already be row-normalized. Pure bookkeeping, no tape.
JointEmbeddingSet joint_embeddings(const Tensor& images_norm, const Tensor& texts_norm, const Tensor& similarity);

struct ClusterResult {
  Tensor centroids;                      // K x D
  std::vector<std::size_t> assignments;  // per point
  std::size_t k = 0;
  double inertia = 0.0;
  /// Inertia after every assignment step, starting with the initial one.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tol = 1e-8;
};

/// Seeded k-means++ initialisation followed by Lloyd iterations. Nearest
/// centroid ties go to the lowest index. An emptied cluster is re-seeded with
/// the point farthest from its own centroid.
ClusterResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, const KMeansOptions& opts = {});

/// k-means++ seeding alone (K x D centroids).
Tensor kmeans_plus_plus(const Tensor& points, std::size_t k, Rng& rng);

/// Lloyd iterations from the given centroids.
ClusterResult lloyd(const Tensor& points, Tensor centroids, const KMeansOptions& opts = {});

struct Selection {
  std::size_t index = 0;
  double rank = 0.0;  // distance to the selecting centroid
  std::size_t cluster = 0;

  friend bool operator==(const Selection&, const Selection&) = default;
};

/// Per cluster, the `per_cluster` members closest to the centroid (ties by
/// lowest index). Smaller clusters contribute all members. Output is grouped
/// by cluster, ascending distance inside each group.
std::vector<Selection> select_representatives(const ClusterResult& clusters, const Tensor& points,
                                              std::size_t per_cluster);

struct BufferEntry {
  PairSample pair;
  double rank = 0.0;  // lower is more representative

  friend bool operator==(const BufferEntry&, const BufferEntry&) = default;
};

/// Fixed-capacity store of past-modality pairs.
class RehearsalBuffer {
 public:
  explicit RehearsalBuffer(std::size_t capacity = 256);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<BufferEntry>& entries() const { return entries_; }
  /// Modalities in arrival order.
  const std::vector<int>& modalities() const { return modalities_; }
  std::size_t count(int modality) const;

  /// Adds a modality's exemplars, re-splits capacity evenly over all
  /// modalities seen so far and evicts each modality's highest-rank entries.
  void rebalance(std::vector<BufferEntry> new_exemplars, int modality);

  /// Algorithm R: store while not full, else replace a uniform slot with
  /// probability capacity / n_seen.
  void reservoir_add(const PairSample& item, std::uint64_t n_seen, Rng& rng);

  /// Rebuilds a buffer from serialized state.
  static RehearsalBuffer restore(std::size_t capacity, std::vector<BufferEntry> entries, std::vector<int> modalities);

  friend bool operator==(const RehearsalBuffer&, const RehearsalBuffer&) = default;

 private:
  void note_modality(int modality);

  std::size_t capacity_;
  std::vector<BufferEntry> entries_;
  std::vector<int> modalities_;
};

/// Even split of `capacity` over `modalities` slots; the first
/// capacity % modalities slots get one extra.
std::vector<std::size_t> even_split(std::size_t capacity, std::size_t modalities);

RehearsalBuffer rebalance_buffer(RehearsalBuffer buffer, std::vector<BufferEntry> new_exemplars, int modality);
RehearsalBuffer reservoir_update(RehearsalBuffer buffer, const PairSample& item, std::uint64_t n_seen, Rng& rng);

/// Herding: greedily add the point that keeps the running mean of the
/// selection closest to the full mean. Ties by lowest index.
std::vector<std::size_t> mof_select(const Tensor& features, std::size_t quota);

struct ExemplarOptions {
  std::size_t quota = 0;     // Q
  std::size_t clusters = 0;  // K
  std::uint64_t seed = 0;
};

/// Encodes the pool, forms joint embeddings, clusters them, keeps
/// ceil(Q/K) per cluster and truncates to Q by ascending rank.
std::vector<BufferEntry> build_stage_exemplars(std::span<const PairSample> pool, const EncoderParams& params,
                                               const ExemplarOptions& opts);

/// Herding over normalized image embeddings; rank is the selection order.
std::vector<BufferEntry> build_mof_exemplars(std::span<const PairSample> pool, const EncoderParams& params,
                                             std::size_t quota);

struct MixedBatch {
  std::vector<PairSample> pairs;
  std::size_t replayed = 0;
  /// Current-stage pairs in draw order (before shuffling).
  std::vector<PairSample> current;
  bool fell_back = false;
};

/// round(rho * N) pairs drawn with replacement from the buffer, the rest
/// fresh from the current modality, then shuffled. An empty buffer yields an
/// all-current batch with `fell_back` set when rho > 0.
MixedBatch sample_mixed_batch(const RehearsalBuffer& buffer, const ModalityGenerator& current, std::size_t batch_size,
                              double replay_fraction, Rng& rng);

}  // namespace ccpt
