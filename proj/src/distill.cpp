#include "ccpt/distill.hpp"

#include <cmath>

#include "ccpt/alignment.hpp"
#include "ccpt/error.hpp"

namespace ccpt {

void DistillConfig::validate() const {
  if (!(lambda_weight >= 0.0)) throw Error(ErrorKind::Parameter, "lambda must be non-negative");
  if (!(distill_temperature > 0.0)) throw Error(ErrorKind::Parameter, "distillation temperature must be positive");
}

Tensor teacher_similarity(const TeacherSnapshot& teacher, const Tensor& images, const Tensor& texts) {
  return similarity_matrix(encode_images(teacher.params(), images), encode_texts(teacher.params(), texts));
}

bool diagonal_is_row_max(const Tensor& s, std::size_t i) {
  const double d = s(i, i);
  for (std::size_t j = 0; j < s.cols(); ++j) {
    if (s(i, j) > d) return false;
  }
  return true;
}

Tensor row_correction(const Tensor& teacher, const Tensor& student) {
  if (!teacher.same_shape(student)) {
    throw Error(ErrorKind::Shape, "row_correction: " + teacher.shape_string() + " vs " + student.shape_string());
  }
  if (teacher.rows() != teacher.cols()) throw Error(ErrorKind::Shape, "row_correction needs square matrices");
  Tensor out = teacher;
  for (std::size_t i = 0; i < teacher.rows(); ++i) {
    if (diagonal_is_row_max(teacher, i)) continue;
    auto src = student.row(i);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Var odid_loss(Var student, const Tensor& corrected_teacher, double distill_temperature) {
  if (!(distill_temperature > 0.0)) throw Error(ErrorKind::Parameter, "distillation temperature must be positive");
  const Tensor& s = student.value();
  if (!s.same_shape(corrected_teacher)) {
    throw Error(ErrorKind::Shape, "odid_loss: " + s.shape_string() + " vs " + corrected_teacher.shape_string());
  }
  const std::size_t n = s.rows();
  Tape& tape = *student.tape();

  // Teacher side goes through the same arithmetic as the student side so
  // that identical inputs give bitwise-identical log-probabilities.
  Tensor log_p;
  {
    Tape scratch;
    log_p = row_log_softmax(scalar_mul(scratch.constant(corrected_teacher), 1.0 / distill_temperature)).value();
  }
  Tensor p = log_p;
  for (double& v : p.data()) v = std::exp(v);

  Var log_q = row_log_softmax(scalar_mul(student, 1.0 / distill_temperature));
  Var log_ratio = subtract(tape.constant(std::move(log_p)), log_q);
  return scalar_mul(sum(mul(tape.constant(std::move(p)), log_ratio)), 1.0 / static_cast<double>(n));
}

Var total_loss(Var clip, Var odid, const DistillConfig& cfg) {
  cfg.validate();
  return add(clip, scalar_mul(odid, cfg.lambda_weight));
}

}  // namespace ccpt
