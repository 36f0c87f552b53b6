#include "ccpt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccpt/alignment.hpp"
#include "ccpt/error.hpp"
#include "ccpt/rng.hpp"

namespace ccpt {

std::string to_string(Setting s) { return s == Setting::ZeroShot ? "zeroshot" : "linprobe"; }

Setting setting_from_string(const std::string& s) {
  if (s == "zeroshot") return Setting::ZeroShot;
  if (s == "linprobe") return Setting::LinearProbe;
  throw Error(ErrorKind::Format, "unknown evaluation setting '" + s + "'");
}

AucResult macro_ovr_auc(const Tensor& scores, std::span<const int> labels) {
  const std::size_t n = scores.rows();
  const std::size_t n_classes = scores.cols();
  if (labels.size() != n) throw Error(ErrorKind::Shape, "macro_ovr_auc: label count differs from score rows");

  AucResult out;
  out.per_class.resize(n_classes);
  std::vector<std::size_t> order(n);
  std::vector<double> ranks(n);
  double total = 0.0;
  std::size_t defined = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores(a, c) < scores(b, c); });
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && scores(order[j + 1], c) == scores(order[i], c)) ++j;
      const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
      i = j + 1;
    }
    double pos = 0.0, rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] == static_cast<int>(c)) {
        pos += 1.0;
        rank_sum += ranks[i];
      }
    }
    const double neg = static_cast<double>(n) - pos;
    if (pos == 0.0 || neg == 0.0) continue;
    const double auc = (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
    out.per_class[c] = auc;
    total += auc;
    ++defined;
  }
  if (defined == 0) throw Error(ErrorKind::Metric, "AUC undefined: no class has both positives and negatives");
  out.macro = total / static_cast<double>(defined);
  return out;
}

double argmax_accuracy(const Tensor& scores, std::span<const int> labels) {
  if (labels.size() != scores.rows()) throw Error(ErrorKind::Shape, "argmax_accuracy: label count mismatch");
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    const auto r = scores.row(i);
    const auto pred = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    if (pred != labels[i]) ++mismatches;
  }
  return 1.0 - static_cast<double>(mismatches) / static_cast<double>(scores.rows());
}

namespace {

Tensor normalized_rows(Tensor x) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double sq = 0.0;
    for (double v : x.row(i)) sq += v * v;
    const double n = std::sqrt(sq);
    if (n < 1e-12) throw Error(ErrorKind::Degenerate, "embedding row with zero norm");
    for (double& v : x.row(i)) v /= n;
  }
  return x;
}

void softmax_rows_inplace(Tensor& x, double temperature) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double& v : r) z += (v = std::exp((v - mx) / temperature));
    for (double& v : r) v /= z;
  }
}

std::vector<int> local_labels(std::span<const PairSample> pairs, int base) {
  std::vector<int> y(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) y[i] = pairs[i].class_label - base;
  return y;
}

}  // namespace

ClassificationScore zero_shot_eval(const EncoderParams& params, const ModalityGenerator& gen, std::size_t n_test,
                                   std::uint64_t seed) {
  const std::size_t n_classes = gen.spec().n_classes;
  if (n_test < n_classes) throw Error(ErrorKind::Parameter, "zero-shot test set smaller than the class count");
  Rng rng(seed);
  const auto test = sample_pairs(gen, n_test, rng);
  const Tensor sims = cosine_scores(encode_images(params, image_batch(test)),
                                    encode_texts(params, class_prompt_vectors(gen)));
  const auto y = local_labels(test, gen.spec().label_base());
  ClassificationScore out;
  out.acc = argmax_accuracy(sims, y);
  Tensor probs = sims;
  softmax_rows_inplace(probs, params.temperature());
  out.auc = macro_ovr_auc(probs, y).macro;
  return out;
}

ClassificationScore linear_probe(const Tensor& train_x, std::span<const int> train_y, const Tensor& test_x,
                                 std::span<const int> test_y, std::size_t n_classes, const ProbeOptions& opts) {
  const std::size_t n = train_x.rows();
  const std::size_t d = train_x.cols();
  if (train_y.size() != n || test_y.size() != test_x.rows() || test_x.cols() != d) {
    throw Error(ErrorKind::Shape, "linear_probe: inconsistent feature/label shapes");
  }
  Tensor w(d, n_classes);
  Tensor b(1, n_classes);
  Tensor logits(n, n_classes);
  Tensor gw(d, n_classes);
  Tensor gb(1, n_classes);
  auto forward = [&](const Tensor& x, Tensor& out) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t c = 0; c < n_classes; ++c) {
        double acc = b(0, c);
        for (std::size_t k = 0; k < d; ++k) acc += x(i, k) * w(k, c);
        out(i, c) = acc;
      }
    }
  };
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    forward(train_x, logits);
    softmax_rows_inplace(logits, 1.0);
    for (std::size_t i = 0; i < n; ++i) logits(i, static_cast<std::size_t>(train_y[i])) -= 1.0;
    std::fill(gw.data().begin(), gw.data().end(), 0.0);
    std::fill(gb.data().begin(), gb.data().end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double r = logits(i, c) * inv_n;
        gb(0, c) += r;
        for (std::size_t k = 0; k < d; ++k) gw(k, c) += train_x(i, k) * r;
      }
    }
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= opts.learning_rate * (gw[k] + opts.l2 * w[k]);
    for (std::size_t c = 0; c < n_classes; ++c) b[c] -= opts.learning_rate * gb[c];
  }
  Tensor test_logits(test_x.rows(), n_classes);
  forward(test_x, test_logits);
  ClassificationScore out;
  out.acc = argmax_accuracy(test_logits, test_y);
  softmax_rows_inplace(test_logits, 1.0);
  out.auc = macro_ovr_auc(test_logits, test_y).macro;
  return out;
}

ClassificationScore linear_probe_eval(const EncoderParams& params, const ModalityGenerator& gen, std::size_t n_train,
                                      std::size_t n_test, std::uint64_t seed, const ProbeOptions& opts) {
  const std::size_t n_classes = gen.spec().n_classes;
  if (n_train < 10 * n_classes) throw Error(ErrorKind::Parameter, "linear probe needs n_train >= 10 * n_classes");
  if (n_test == 0) throw Error(ErrorKind::Parameter, "linear probe needs a test set");
  Rng rng(seed);
  const auto train = sample_pairs(gen, n_train, rng);
  const auto test = sample_pairs(gen, n_test, rng);
  const int base = gen.spec().label_base();
  return linear_probe(normalized_rows(encode_images(params, image_batch(train))), local_labels(train, base),
                      normalized_rows(encode_images(params, image_batch(test))), local_labels(test, base), n_classes,
                      opts);
}

double forgetting_rate(double metric_at_learning_stage, double metric_now, MetricUnit unit) {
  const double hi = unit == MetricUnit::Fraction ? 1.0 : 100.0;
  for (double v : {metric_at_learning_stage, metric_now}) {
    if (!(v >= 0.0 && v <= hi)) {
      throw Error(ErrorKind::Parameter, "metric " + std::to_string(v) + " outside [0, " + std::to_string(hi) +
                                            "] for the declared unit");
    }
  }
  return metric_at_learning_stage - metric_now;
}

}  // namespace ccpt
