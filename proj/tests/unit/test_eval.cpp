#include <cmath>
#include <functional>

#include "ccpt/encoders.hpp"
#include "ccpt/error.hpp"
#include "ccpt/eval.hpp"
#include "ccpt/rng.hpp"
#include "doctest.h"
#include "support/oracles.hpp"

using namespace ccpt;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Usage;
}

Tensor random_scores(std::size_t n, std::size_t c, Rng& rng, int levels = 0) {
  Tensor t(n, c);
  for (double& v : t.data()) {
    v = uniform01(rng);
    if (levels > 0) v = std::floor(v * levels);
  }
  return t;
}

std::vector<int> random_labels(std::size_t n, std::size_t c, Rng& rng) {
  std::vector<int> y(n);
  for (int& v : y) v = static_cast<int>(uniform_index(rng, c));
  return y;
}

}  // namespace

TEST_CASE("AUC on a hand-worked example") {
  const Tensor s = Tensor::from_rows({{0.9, 0.1}, {0.8, 0.2}, {0.3, 0.7}, {0.4, 0.6}});
  const std::vector<int> y = {0, 0, 1, 1};
  const auto r = macro_ovr_auc(s, y);
  CHECK(r.macro == 1.0);
  REQUIRE(r.per_class[0].has_value());
  CHECK(*r.per_class[0] == 1.0);

  // One positive tied with one negative counts half.
  const Tensor t = Tensor::from_rows({{0.5, 0}, {0.5, 0}, {0.2, 0}});
  const auto h = macro_ovr_auc(t, std::vector<int>{0, 1, 1});
  CHECK(*h.per_class[0] == doctest::Approx(0.75));
}

TEST_CASE("AUC matches the pairwise definition") {
  Rng rng(41);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + uniform_index(rng, 60), c = 2 + uniform_index(rng, 5);
    const Tensor s = random_scores(n, c, rng, trial % 2 ? 4 : 0);
    const auto y = random_labels(n, c, rng);
    bool any = false;
    for (std::size_t k = 0; k < c; ++k) any = any || oracle::pairwise_auc(s, y, static_cast<int>(k)).has_value();
    if (!any) continue;
    const auto r = macro_ovr_auc(s, y);
    CHECK(std::abs(r.macro - oracle::pairwise_macro_auc(s, y)) <= 1e-12);
    for (std::size_t k = 0; k < c; ++k) {
      const auto o = oracle::pairwise_auc(s, y, static_cast<int>(k));
      CHECK(r.per_class[k].has_value() == o.has_value());
      if (o) CHECK(std::abs(*r.per_class[k] - *o) <= 1e-12);
    }
  }
}

TEST_CASE("AUC is invariant under monotone transforms") {
  Rng rng(42);
  const Tensor s = random_scores(80, 4, rng);
  const auto y = random_labels(80, 4, rng);
  Tensor t = s;
  for (double& v : t.data()) v = std::exp(3.0 * v) - 7.0;
  CHECK(macro_ovr_auc(s, y).macro == macro_ovr_auc(t, y).macro);
}

TEST_CASE("AUC leaves undefined classes out") {
  const Tensor s = Tensor::from_rows({{0.9, 0.1, 0.5}, {0.2, 0.8, 0.5}, {0.7, 0.3, 0.5}});
  const auto r = macro_ovr_auc(s, std::vector<int>{0, 1, 0});
  CHECK_FALSE(r.per_class[2].has_value());
  CHECK(r.macro == 1.0);
  CHECK(kind_of([&] { macro_ovr_auc(s, std::vector<int>{0, 0, 0}); }) == ErrorKind::Metric);
  CHECK(kind_of([&] { macro_ovr_auc(s, std::vector<int>{0, 1}); }) == ErrorKind::Shape);
}

TEST_CASE("argmax accuracy") {
  const Tensor s = Tensor::from_rows({{1, 0}, {0, 1}, {0.5, 0.5}});
  CHECK(argmax_accuracy(s, std::vector<int>{0, 1, 0}) == 1.0);
  CHECK(argmax_accuracy(s, std::vector<int>{0, 1, 1}) == doctest::Approx(2.0 / 3.0));
  CHECK(kind_of([&] { argmax_accuracy(s, std::vector<int>{0}); }) == ErrorKind::Shape);

  // Uninformative scores land within the 99% binomial interval around 1/C.
  Rng rng(43);
  const std::size_t n = 20000, c = 5;
  const double acc = argmax_accuracy(random_scores(n, c, rng), random_labels(n, c, rng));
  const double p = 1.0 / c;
  CHECK(std::abs(acc - p) <= 2.576 * std::sqrt(p * (1 - p) / n));
}

TEST_CASE("forgetting rate") {
  CHECK(forgetting_rate(0.589, 0.520) == doctest::Approx(0.069));
  CHECK(forgetting_rate(89.0, 89.8, MetricUnit::Percent) == doctest::Approx(-0.8));
  CHECK(forgetting_rate(0.3, 0.7) == -forgetting_rate(0.7, 0.3));
  CHECK(forgetting_rate(0.4, 0.4) == 0.0);
  CHECK(kind_of([] { forgetting_rate(52.0, 0.5); }) == ErrorKind::Parameter);
  CHECK(kind_of([] { forgetting_rate(0.5, -0.1); }) == ErrorKind::Parameter);
  CHECK(kind_of([] { forgetting_rate(101.0, 50.0, MetricUnit::Percent); }) == ErrorKind::Parameter);
}

TEST_CASE("setting names") {
  CHECK(to_string(Setting::ZeroShot) == "zeroshot");
  CHECK(setting_from_string("linprobe") == Setting::LinearProbe);
  CHECK(kind_of([] { setting_from_string("fewshot"); }) == ErrorKind::Format);
}

TEST_CASE("linear probe separates separable data and not shuffled labels") {
  Rng rng(44);
  const std::size_t n = 300, d = 6, c = 3;
  auto make = [&](std::vector<int>& y) {
    Tensor x(n, d);
    y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(i % c);
      for (std::size_t k = 0; k < d; ++k) x(i, k) = 0.05 * normal(rng);
      x(i, static_cast<std::size_t>(y[i])) += 1.0;
    }
    return x;
  };
  std::vector<int> ytr, yte;
  const Tensor xtr = make(ytr), xte = make(yte);
  const auto good = linear_probe(xtr, ytr, xte, yte, c);
  CHECK(good.acc == 1.0);
  CHECK(good.auc == 1.0);

  // Labels unrelated to the features leave the probe near chance.
  std::vector<int> shuffled = yte;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto bad = linear_probe(xtr, ytr, xte, shuffled, c);
  CHECK(std::abs(bad.acc - 1.0 / c) < 0.1);
  CHECK(kind_of([&] { linear_probe(xtr, std::vector<int>{0}, xte, yte, c); }) == ErrorKind::Shape);
}

TEST_CASE("model evaluations leave the encoder untouched and are seeded") {
  const ModalityGenerator g = build_modality(default_modality(1));
  const EncoderParams params = init_encoders({32, 24, 16, 8}, 3);
  const EncoderParams before = params;
  const auto zs = zero_shot_eval(params, g, 400, 10);
  const auto lp = linear_probe_eval(params, g, 200, 200, 10, {100, 0.5, 1e-4});
  CHECK(params == before);
  CHECK(zs.acc >= 0.0);
  CHECK(zs.acc <= 1.0);
  CHECK(zs.auc >= 0.0);
  CHECK(zs.auc <= 1.0);
  CHECK(lp.acc > 1.0 / 8.0);
  const auto again = zero_shot_eval(params, g, 400, 10);
  CHECK(again.acc == zs.acc);
  CHECK(again.auc == zs.auc);

  CHECK(kind_of([&] { zero_shot_eval(params, g, 4, 1); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { linear_probe_eval(params, g, 50, 10, 1); }) == ErrorKind::Parameter);
  CHECK(kind_of([&] { linear_probe_eval(params, g, 80, 0, 1); }) == ErrorKind::Parameter);
}

TEST_CASE("zero-shot accuracy ignores a positive rescaling of the image tower") {
  const ModalityGenerator g = build_modality(default_modality(2));
  EncoderParams params = init_encoders({32, 24, 16, 8}, 5);
  const auto base = zero_shot_eval(params, g, 300, 7);
  for (double& v : params.image.w2.data()) v *= 3.0;
  for (double& v : params.image.b2.data()) v *= 3.0;
  CHECK(zero_shot_eval(params, g, 300, 7).acc == base.acc);
}
