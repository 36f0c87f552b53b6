#include <cmath>

#include "ccpt/alignment.hpp"
#include "ccpt/error.hpp"
#include "ccpt/rng.hpp"
#include "doctest.h"

using namespace ccpt;

namespace {

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t(r, c);
  for (double& v : t.data()) v = scale * (2.0 * uniform01(rng) - 1.0);
  return t;
}

double naive_cosine(std::span<const double> a, std::span<const double> b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

// Direct evaluation of the symmetric InfoNCE sum, no log-sum-exp tricks.
double naive_clip(const Tensor& s, double tau) {
  const std::size_t n = s.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += std::exp(s(i, j) / tau);
      col += std::exp(s(j, i) / tau);
    }
    total += std::log(std::exp(s(i, i) / tau) / row) + std::log(std::exp(s(i, i) / tau) / col);
  }
  return -total / (2.0 * static_cast<double>(n));
}

Tensor identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("similarity examples") {
  const Tensor eye = identity(4);
  CHECK(similarity_matrix(eye, eye) == eye);
  Tensor neg = eye;
  for (double& v : neg.data()) v = -v;
  const Tensor s = similarity_matrix(eye, neg);
  for (std::size_t i = 0; i < 4; ++i) CHECK(s(i, i) == -1.0);
  CHECK_THROWS_AS(similarity_matrix(Tensor(3, 2, 1.0), Tensor(4, 2, 1.0)), Error);
  CHECK_THROWS_AS(similarity_matrix(Tensor(2, 2), Tensor(2, 2, 1.0)), Error);
}

TEST_CASE("similarity matches per-pair cosines") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor(5, 8, rng, 3.0);
    const Tensor b = random_tensor(5, 8, rng, 0.2);
    const Tensor s = similarity_matrix(a, b);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t j = 0; j < 5; ++j) {
        CHECK(std::abs(s(i, j) - naive_cosine(a.row(i), b.row(j))) <= 1e-12);
        CHECK(std::abs(s(i, j)) <= 1.0 + 1e-9);
      }
    }
  }
  const Tensor c = cosine_scores(random_tensor(7, 3, rng), random_tensor(2, 3, rng));
  CHECK(c.rows() == 7);
  CHECK(c.cols() == 2);
}

TEST_CASE("clip loss closed forms") {
  CHECK(clip_loss_value(identity(2), 1.0) == doctest::Approx(0.313262).epsilon(1e-6));
  CHECK(clip_loss_value(identity(1), 0.3) == 0.0);
  for (std::size_t n : {1, 2, 8, 24}) {
    for (double tau : {0.07, 0.5, 1.0}) {
      const double expected = std::log(1.0 + static_cast<double>(n - 1) * std::exp(-1.0 / tau));
      CHECK(std::abs(clip_loss_value(identity(n), tau) - expected) <= 1e-9);
    }
  }
  CHECK(clip_loss_value(identity(8), 0.01) < 1e-40);
  CHECK_THROWS_AS(clip_loss_value(identity(2), 0.0), Error);
  CHECK_THROWS_AS(clip_loss_value(Tensor(2, 3), 1.0), Error);
}

TEST_CASE("clip loss against naive summation and symmetry properties") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor s = random_tensor(4, 4, rng);
    const double tau = 0.2 + uniform01(rng);
    const double loss = clip_loss_value(s, tau);
    CHECK(std::abs(loss - naive_clip(s, tau)) <= 1e-12);

    Tensor st(4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) st(i, j) = s(j, i);
    }
    CHECK(clip_loss_value(st, tau) == doctest::Approx(loss).epsilon(1e-13));

    const std::size_t perm[4] = {2, 0, 3, 1};
    Tensor sp(4, 4);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) sp(i, j) = s(perm[i], perm[j]);
    }
    CHECK(clip_loss_value(sp, tau) == doctest::Approx(loss).epsilon(1e-13));

    Tensor raised = s;
    raised(1, 3) += 0.3;
    CHECK(clip_loss_value(raised, tau) >= loss);
  }
}

TEST_CASE("clip loss with a learnable temperature node") {
  Tape tape;
  auto s = tape.leaf(identity(3), true);
  auto tau = tape.leaf(Tensor::scalar(0.5), true);
  auto loss = clip_loss(s, tau);
  CHECK(loss.value().item() == doctest::Approx(std::log(1 + 2 * std::exp(-2.0))).epsilon(1e-14));
  tape.backward(loss);
  // d/dtau of log(1 + 2 e^{-1/tau}) = 2 e^{-1/tau} / tau^2 / (1 + 2 e^{-1/tau})
  const double e = std::exp(-2.0);
  CHECK(tau.grad().item() == doctest::Approx(2 * e / 0.25 / (1 + 2 * e)).epsilon(1e-12));
}
