#include "ccpt/rehearsal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ccpt/alignment.hpp"
#include "ccpt/error.hpp"

namespace ccpt {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest_centroid(std::span<const double> x, const Tensor& centroids, double* best_sq = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(x, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_sq) *best_sq = best_d;
  return best;
}

double inertia_of(const Tensor& points, const Tensor& centroids, const std::vector<std::size_t>& assign) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) total += squared_distance(points.row(i), centroids.row(assign[i]));
  return total;
}

std::vector<std::size_t> assign_all(const Tensor& points, const Tensor& centroids) {
  std::vector<std::size_t> out(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) out[i] = nearest_centroid(points.row(i), centroids);
  return out;
}

// Moves the point farthest from its own centroid into each empty cluster.
void fill_empty_clusters(const Tensor& points, const Tensor& centroids, std::vector<std::size_t>& assign) {
  const std::size_t k = centroids.rows();
  std::vector<std::size_t> counts(k, 0);
  for (auto a : assign) ++counts[a];
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] != 0) continue;
    std::size_t victim = points.rows();
    double worst = -1.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (counts[assign[i]] < 2) continue;
      const double d = squared_distance(points.row(i), centroids.row(assign[i]));
      if (d > worst) {
        worst = d;
        victim = i;
      }
    }
    if (victim == points.rows()) break;
    --counts[assign[victim]];
    assign[victim] = c;
    ++counts[c];
  }
}

Tensor cluster_means(const Tensor& points, const std::vector<std::size_t>& assign, const Tensor& previous) {
  Tensor means(previous.rows(), previous.cols());
  std::vector<std::size_t> counts(previous.rows(), 0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    auto dst = means.row(assign[i]);
    const auto src = points.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    ++counts[assign[i]];
  }
  for (std::size_t c = 0; c < means.rows(); ++c) {
    auto row = means.row(c);
    if (counts[c] == 0) {
      const auto prev = previous.row(c);
      std::copy(prev.begin(), prev.end(), row.begin());
      continue;
    }
    for (double& v : row) v /= static_cast<double>(counts[c]);
  }
  return means;
}

// Distances that agree to rounding (e.g. both members of a two-point cluster)
// are ties; within each run of such ranks the lower index goes first.
void order_near_ties_by_index(std::vector<Selection>& sorted) {
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i + 1;
    const double tol = 1e-12 * std::max(1.0, sorted[i].rank);
    while (j < sorted.size() && sorted[j].rank - sorted[i].rank <= tol) ++j;
    std::sort(sorted.begin() + static_cast<std::ptrdiff_t>(i), sorted.begin() + static_cast<std::ptrdiff_t>(j),
              [](const Selection& a, const Selection& b) { return a.index < b.index; });
    i = j;
  }
}

}  // namespace

JointEmbeddingSet joint_embeddings(const Tensor& images_norm, const Tensor& texts_norm, const Tensor& similarity) {
  if (!images_norm.same_shape(texts_norm)) {
    throw Error(ErrorKind::Shape, "joint_embeddings: " + images_norm.shape_string() + " vs " + texts_norm.shape_string());
  }
  const std::size_t n = images_norm.rows();
  if (similarity.rows() != n || similarity.cols() != n) {
    throw Error(ErrorKind::Shape, "joint_embeddings: similarity " + similarity.shape_string() + " for batch " +
                                      std::to_string(n));
  }
  JointEmbeddingSet out{Tensor::zeros_like(images_norm), std::vector<std::size_t>(n)};
  std::iota(out.source_indices.begin(), out.source_indices.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const double s = std::clamp(similarity(i, i), 0.0, 1.0);
    for (std::size_t j = 0; j < images_norm.cols(); ++j) {
      out.vectors(i, j) = s * images_norm(i, j) + (1.0 - s) * texts_norm(i, j);
    }
  }
  return out;
}

Tensor kmeans_plus_plus(const Tensor& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Tensor centroids(k, points.cols());
  std::vector<bool> chosen(n, false);
  auto take = [&](std::size_t idx, std::size_t slot) {
    chosen[idx] = true;
    const auto src = points.row(idx);
    std::copy(src.begin(), src.end(), centroids.row(slot).begin());
  };
  take(uniform_index(rng, n), 0);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  for (std::size_t slot = 1; slot < k; ++slot) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], squared_distance(points.row(i), centroids.row(slot - 1)));
      total += d2[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double r = uniform01(rng) * total;
      double cum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        cum += d2[i];
        pick = i;
        if (cum > r) break;
      }
    } else {
      for (std::size_t i = 0; i < n && pick == n; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    take(pick, slot);
  }
  return centroids;
}

ClusterResult lloyd(const Tensor& points, Tensor centroids, const KMeansOptions& opts) {
  ClusterResult r;
  r.k = centroids.rows();
  std::vector<std::size_t> assign = assign_all(points, centroids);
  fill_empty_clusters(points, centroids, assign);
  r.inertia_history.push_back(inertia_of(points, centroids, assign));
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    ++r.iterations;
    Tensor next = cluster_means(points, assign, centroids);
    double shift = 0.0;
    for (std::size_t c = 0; c < next.rows(); ++c) {
      shift = std::max(shift, std::sqrt(squared_distance(next.row(c), centroids.row(c))));
    }
    centroids = std::move(next);
    std::vector<std::size_t> reassigned = assign_all(points, centroids);
    fill_empty_clusters(points, centroids, reassigned);
    const bool stable = reassigned == assign;
    assign = std::move(reassigned);
    r.inertia_history.push_back(inertia_of(points, centroids, assign));
    if (stable && shift < opts.tol) break;
  }
  r.centroids = std::move(centroids);
  r.assignments = std::move(assign);
  r.inertia = r.inertia_history.back();
  return r;
}

ClusterResult kmeans(const Tensor& points, std::size_t k, std::uint64_t seed, const KMeansOptions& opts) {
  if (k == 0) throw Error(ErrorKind::Parameter, "kmeans needs K >= 1");
  if (k > points.rows()) {
    throw Error(ErrorKind::Parameter, "kmeans K=" + std::to_string(k) + " exceeds N=" + std::to_string(points.rows()));
  }
  Rng rng(seed);
  return lloyd(points, kmeans_plus_plus(points, k, rng), opts);
}

std::vector<Selection> select_representatives(const ClusterResult& clusters, const Tensor& points,
                                              std::size_t per_cluster) {
  if (per_cluster == 0) throw Error(ErrorKind::Parameter, "per_cluster must be >= 1");
  if (clusters.assignments.size() != points.rows()) {
    throw Error(ErrorKind::Shape, "cluster assignments do not match the point count");
  }
  std::vector<Selection> out;
  for (std::size_t c = 0; c < clusters.k; ++c) {
    std::vector<Selection> members;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (clusters.assignments[i] != c) continue;
      members.push_back({i, std::sqrt(squared_distance(points.row(i), clusters.centroids.row(c))), c});
    }
    std::stable_sort(members.begin(), members.end(),
                     [](const Selection& a, const Selection& b) { return a.rank < b.rank; });
    order_near_ties_by_index(members);
    if (members.size() > per_cluster) members.resize(per_cluster);
    out.insert(out.end(), members.begin(), members.end());
  }
  return out;
}

RehearsalBuffer::RehearsalBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorKind::Parameter, "buffer capacity must be positive");
}

std::size_t RehearsalBuffer::count(int modality) const {
  return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [modality](const BufferEntry& e) {
    return e.pair.modality_id == modality;
  }));
}

void RehearsalBuffer::note_modality(int modality) {
  if (std::find(modalities_.begin(), modalities_.end(), modality) == modalities_.end()) modalities_.push_back(modality);
}

std::vector<std::size_t> even_split(std::size_t capacity, std::size_t modalities) {
  std::vector<std::size_t> quotas(modalities, modalities ? capacity / modalities : 0);
  for (std::size_t i = 0; i < modalities && i < capacity % modalities; ++i) ++quotas[i];
  return quotas;
}

void RehearsalBuffer::rebalance(std::vector<BufferEntry> new_exemplars, int modality) {
  for (auto& e : new_exemplars) e.pair.modality_id = modality;
  note_modality(modality);
  const auto quotas = even_split(capacity_, modalities_.size());

  std::vector<BufferEntry> next;
  next.reserve(capacity_);
  for (std::size_t m = 0; m < modalities_.size(); ++m) {
    std::vector<BufferEntry> group;
    for (auto& e : entries_) {
      if (e.pair.modality_id == modalities_[m]) group.push_back(std::move(e));
    }
    if (modalities_[m] == modality) {
      for (auto& e : new_exemplars) group.push_back(std::move(e));
    }
    std::stable_sort(group.begin(), group.end(),
                     [](const BufferEntry& a, const BufferEntry& b) { return a.rank < b.rank; });
    if (group.size() > quotas[m]) group.resize(quotas[m]);
    for (auto& e : group) next.push_back(std::move(e));
  }
  entries_ = std::move(next);
}

void RehearsalBuffer::reservoir_add(const PairSample& item, std::uint64_t n_seen, Rng& rng) {
  if (n_seen == 0) throw Error(ErrorKind::Contract, "reservoir_update needs n_seen >= 1");
  if (entries_.size() < capacity_) {
    note_modality(item.modality_id);
    entries_.push_back({item, 0.0});
    return;
  }
  const auto j = std::uniform_int_distribution<std::uint64_t>(0, n_seen - 1)(rng);
  if (j < capacity_) {
    note_modality(item.modality_id);
    entries_[j] = {item, 0.0};
  }
}

RehearsalBuffer RehearsalBuffer::restore(std::size_t capacity, std::vector<BufferEntry> entries,
                                         std::vector<int> modalities) {
  if (entries.size() > capacity) throw Error(ErrorKind::Corruption, "buffer holds more entries than its capacity");
  RehearsalBuffer b(capacity);
  b.entries_ = std::move(entries);
  b.modalities_ = std::move(modalities);
  return b;
}

RehearsalBuffer rebalance_buffer(RehearsalBuffer buffer, std::vector<BufferEntry> new_exemplars, int modality) {
  buffer.rebalance(std::move(new_exemplars), modality);
  return buffer;
}

RehearsalBuffer reservoir_update(RehearsalBuffer buffer, const PairSample& item, std::uint64_t n_seen, Rng& rng) {
  buffer.reservoir_add(item, n_seen, rng);
  return buffer;
}

std::vector<std::size_t> mof_select(const Tensor& features, std::size_t quota) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (quota > n) {
    throw Error(ErrorKind::Parameter, "mof_select quota " + std::to_string(quota) + " exceeds N=" + std::to_string(n));
  }
  std::vector<double> mu(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mu[j] += features(i, j);
  for (double& v : mu) v /= static_cast<double>(n);

  std::vector<double> running(d, 0.0);
  std::vector<bool> used(n, false);
  std::vector<std::size_t> picked;
  std::vector<double> candidate(d);
  for (std::size_t step = 0; step < quota; ++step) {
    const double denom = static_cast<double>(step + 1);
    std::size_t best = n;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      for (std::size_t j = 0; j < d; ++j) candidate[j] = (running[j] + features(i, j)) / denom;
      const double dist = squared_distance(mu, candidate);
      if (dist < best_d) {
        best_d = dist;
        best = i;
      }
    }
    used[best] = true;
    picked.push_back(best);
    for (std::size_t j = 0; j < d; ++j) running[j] += features(best, j);
  }
  return picked;
}

namespace {

struct PoolEmbeddings {
  Tensor images_norm;
  Tensor texts_norm;
};

PoolEmbeddings embed_pool(std::span<const PairSample> pool, const EncoderParams& params) {
  Tape tape;
  const EncoderVars ev = bind_encoders(tape, params, false);
  Var img = l2_normalize_rows(encode_images(ev, tape.constant(image_batch(pool))));
  Var txt = l2_normalize_rows(encode_texts(ev, tape.constant(text_batch(pool))));
  return {img.value(), txt.value()};
}

}  // namespace

std::vector<BufferEntry> build_stage_exemplars(std::span<const PairSample> pool, const EncoderParams& params,
                                               const ExemplarOptions& opts) {
  if (pool.empty()) throw Error(ErrorKind::Contract, "exemplar pool is empty");
  if (opts.quota == 0 || opts.quota > pool.size()) {
    throw Error(ErrorKind::Parameter, "exemplar quota must be in [1, pool size]");
  }
  if (opts.clusters == 0 || opts.clusters > opts.quota) {
    throw Error(ErrorKind::Parameter, "cluster count must be in [1, quota]");
  }
  const PoolEmbeddings emb = embed_pool(pool, params);
  Tensor sim_diag(pool.size(), pool.size());
  // Only S_ii is consumed; the full N x N product is not needed here.
  for (std::size_t i = 0; i < pool.size(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < emb.images_norm.cols(); ++j) dot += emb.images_norm(i, j) * emb.texts_norm(i, j);
    sim_diag(i, i) = dot;
  }
  const JointEmbeddingSet joint = joint_embeddings(emb.images_norm, emb.texts_norm, sim_diag);
  const ClusterResult clusters = kmeans(joint.vectors, opts.clusters, opts.seed);
  const std::size_t per_cluster = (opts.quota + opts.clusters - 1) / opts.clusters;
  std::vector<Selection> picks = select_representatives(clusters, joint.vectors, per_cluster);
  std::stable_sort(picks.begin(), picks.end(), [](const Selection& a, const Selection& b) {
    return a.rank < b.rank || (a.rank == b.rank && a.index < b.index);
  });
  if (picks.size() > opts.quota) picks.resize(opts.quota);

  std::vector<BufferEntry> out;
  out.reserve(picks.size());
  for (const auto& s : picks) out.push_back({pool[s.index], s.rank});
  return out;
}

std::vector<BufferEntry> build_mof_exemplars(std::span<const PairSample> pool, const EncoderParams& params,
                                             std::size_t quota) {
  if (pool.empty()) throw Error(ErrorKind::Contract, "exemplar pool is empty");
  const PoolEmbeddings emb = embed_pool(pool, params);
  const auto picked = mof_select(emb.images_norm, quota);
  std::vector<BufferEntry> out;
  out.reserve(picked.size());
  for (std::size_t r = 0; r < picked.size(); ++r) out.push_back({pool[picked[r]], static_cast<double>(r)});
  return out;
}

MixedBatch sample_mixed_batch(const RehearsalBuffer& buffer, const ModalityGenerator& current, std::size_t batch_size,
                              double replay_fraction, Rng& rng) {
  if (batch_size == 0) throw Error(ErrorKind::Parameter, "batch size must be positive");
  if (!(replay_fraction >= 0.0 && replay_fraction < 1.0)) {
    throw Error(ErrorKind::Parameter, "replay fraction must lie in [0, 1)");
  }
  MixedBatch batch;
  std::size_t n_replay = static_cast<std::size_t>(std::lround(replay_fraction * static_cast<double>(batch_size)));
  if (n_replay > 0 && buffer.empty()) {
    batch.fell_back = true;
    n_replay = 0;
  }
  batch.pairs.reserve(batch_size);
  for (std::size_t i = 0; i < n_replay; ++i) {
    batch.pairs.push_back(buffer.entries()[uniform_index(rng, buffer.size())].pair);
  }
  batch.replayed = n_replay;
  if (batch_size > n_replay) batch.current = sample_pairs(current, batch_size - n_replay, rng);
  batch.pairs.insert(batch.pairs.end(), batch.current.begin(), batch.current.end());
  std::shuffle(batch.pairs.begin(), batch.pairs.end(), rng);
  return batch;
}

}  // namespace ccpt
