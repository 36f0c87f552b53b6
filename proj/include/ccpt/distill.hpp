#pragma once

#include "ccpt/autodiff.hpp"
#include "ccpt/encoders.hpp"
#include "ccpt/tensor.hpp"

namespace ccpt {

struct DistillConfig {
  double lambda_weight = 1.0;
  double distill_temperature = 1.0;

  void validate() const;
};

/// Similarity of a batch under the frozen teacher. Carries no gradient.
Tensor teacher_similarity(const TeacherSnapshot& teacher, const Tensor& images, const Tensor& texts);

/// Replaces teacher row i by the student's row i whenever the teacher's
/// diagonal entry is not the row maximum. A diagonal tied with the maximum
/// counts as maximal.
Tensor row_correction(const Tensor& teacher, const Tensor& student);

/// True when row i's diagonal entry is a (possibly tied) maximum.
bool diagonal_is_row_max(const Tensor& s, std::size_t i);

/// Row-averaged KL(P || Q) with P = softmax(teacher / T_d) held constant and
/// Q = softmax(student / T_d).
Var odid_loss(Var student, const Tensor& corrected_teacher, double distill_temperature);

/// clip + lambda * odid
Var total_loss(Var clip, Var odid, const DistillConfig& cfg);

}  // namespace ccpt
