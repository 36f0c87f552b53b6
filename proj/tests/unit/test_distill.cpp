#include <cmath>

#include "ccpt/alignment.hpp"
#include "ccpt/distill.hpp"
#include "ccpt/encoders.hpp"
#include "ccpt/error.hpp"
#include "ccpt/rng.hpp"
#include "doctest.h"

using namespace ccpt;

namespace {

double odid_value(const Tensor& student, const Tensor& teacher, double td) {
  Tape tape;
  return odid_loss(tape.constant(student), teacher, td).value().item();
}

Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t(r, c);
  for (double& v : t.data()) v = 2.0 * uniform01(rng) - 1.0;
  return t;
}

// Row-wise KL written out directly.
double naive_kl(const Tensor& student, const Tensor& teacher, double td) {
  double total = 0.0;
  for (std::size_t i = 0; i < student.rows(); ++i) {
    double zp = 0, zq = 0;
    for (std::size_t j = 0; j < student.cols(); ++j) {
      zp += std::exp(teacher(i, j) / td);
      zq += std::exp(student(i, j) / td);
    }
    for (std::size_t j = 0; j < student.cols(); ++j) {
      const double p = std::exp(teacher(i, j) / td) / zp;
      const double q = std::exp(student(i, j) / td) / zq;
      total += p * std::log(p / q);
    }
  }
  return total / static_cast<double>(student.rows());
}

}  // namespace

TEST_CASE("row correction examples") {
  Tensor eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye(i, i) = 1.0;
  Rng rng(1);
  const Tensor student = random_tensor(3, 3, rng);
  CHECK(row_correction(eye, student) == eye);

  const Tensor teacher = Tensor::from_rows({{0.1, 0.9}, {0.0, 1.0}});
  const Tensor st = Tensor::from_rows({{0.5, 0.2}, {0.3, 0.4}});
  CHECK(row_correction(teacher, st) == Tensor::from_rows({{0.5, 0.2}, {0.0, 1.0}}));

  // A diagonal tied with the row maximum counts as maximal.
  const Tensor tied = Tensor::from_rows({{0.7, 0.7}, {0.2, 0.2}});
  CHECK(row_correction(tied, st) == tied);
  CHECK_THROWS_AS(row_correction(Tensor(2, 2), Tensor(3, 3)), Error);
}

TEST_CASE("odid examples") {
  // P rows [0.75, 0.25] from logits [ln 3, 0]; Q rows uniform.
  const Tensor teacher = Tensor::from_rows({{std::log(3.0), 0.0}, {std::log(3.0), 0.0}});
  const Tensor student(2, 2);
  const double per_row = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  CHECK(per_row == doctest::Approx(0.13081).epsilon(1e-4));
  CHECK(odid_value(student, teacher, 1.0) == doctest::Approx(per_row).epsilon(1e-14));
  CHECK(odid_value(teacher, teacher, 1.0) == 0.0);
  CHECK_THROWS_AS(odid_value(student, teacher, 0.0), Error);
  CHECK_THROWS_AS(odid_value(student, Tensor(3, 3), 1.0), Error);
}

TEST_CASE("odid matches a direct KL evaluation") {
  Rng rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 7;
    const Tensor s = random_tensor(n, n, rng);
    const Tensor t = random_tensor(n, n, rng);
    for (double td : {0.07, 0.5, 1.0}) {
      const double v = odid_value(s, t, td);
      CHECK(v >= 0.0);
      CHECK(v == doctest::Approx(naive_kl(s, t, td)).epsilon(1e-10));
    }
  }
}

TEST_CASE("total loss is linear in lambda") {
  CHECK_THROWS_AS((DistillConfig{-1.0, 1.0}.validate()), Error);
  CHECK_THROWS_AS((DistillConfig{1.0, 0.0}.validate()), Error);
  Tape tape;
  auto clip = tape.constant(Tensor::scalar(0.3133));
  auto odid = tape.constant(Tensor::scalar(0.1308));
  CHECK(total_loss(clip, odid, {1.0, 1.0}).value().item() == doctest::Approx(0.4441).epsilon(1e-12));
  CHECK(total_loss(clip, odid, {0.0, 1.0}).value().item() == 0.3133);
  const double l1 = total_loss(clip, odid, {1.0, 1.0}).value().item();
  const double l3 = total_loss(clip, odid, {3.0, 1.0}).value().item();
  const double l5 = total_loss(clip, odid, {5.0, 1.0}).value().item();
  CHECK(l5 - l3 == doctest::Approx(l3 - l1).epsilon(1e-12));
  auto zero = tape.constant(Tensor::scalar(0.0));
  CHECK(total_loss(clip, zero, {2.0, 1.0}).value().item() == 0.3133);
}

TEST_CASE("teacher similarity equals student similarity at snapshot time and carries no gradient") {
  const auto params = init_encoders({}, 4);
  Rng rng(2);
  Tensor imgs(6, 32), txts(6, 24);
  for (double& v : imgs.data()) v = normal(rng);
  for (double& v : txts.data()) v = normal(rng);
  const auto teacher = snapshot_teacher(params, 1);
  Tape tape;
  const auto enc = bind_encoders(tape, params, true);
  const Var s = similarity_matrix(encode_images(enc, tape.constant(imgs)), encode_texts(enc, tape.constant(txts)));
  const Tensor ts = teacher_similarity(teacher, imgs, txts);
  CHECK(ts == s.value());
  const Var loss = odid_loss(s, row_correction(ts, s.value()), 0.5);
  CHECK(loss.value().item() == 0.0);
  const std::size_t nodes = tape.size();
  tape.backward(loss);
  CHECK(tape.size() == nodes);
}
