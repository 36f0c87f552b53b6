#include "ccpt/alignment.hpp"

#include "ccpt/error.hpp"

namespace ccpt {

Var similarity_matrix(Var images, Var texts) {
  const Tensor& iv = images.value();
  const Tensor& tv = texts.value();
  if (!iv.same_shape(tv)) {
    throw Error(ErrorKind::Shape, "similarity_matrix: image " + iv.shape_string() + " vs text " + tv.shape_string());
  }
  return matmul(l2_normalize_rows(images), transpose(l2_normalize_rows(texts)));
}

Tensor similarity_matrix(const Tensor& images, const Tensor& texts) {
  Tape tape;
  return similarity_matrix(tape.constant(images), tape.constant(texts)).value();
}

Tensor cosine_scores(const Tensor& queries, const Tensor& keys) {
  if (queries.cols() != keys.cols()) {
    throw Error(ErrorKind::Shape, "cosine_scores: " + queries.shape_string() + " vs " + keys.shape_string());
  }
  Tape tape;
  return matmul(l2_normalize_rows(tape.constant(queries)), transpose(l2_normalize_rows(tape.constant(keys)))).value();
}

Var clip_loss(Var similarity, Var temperature) {
  const Tensor& s = similarity.value();
  if (s.rows() != s.cols()) throw Error(ErrorKind::Shape, "clip_loss needs a square matrix, got " + s.shape_string());
  if (temperature.value().size() != 1 || !(temperature.value().item() > 0.0)) {
    throw Error(ErrorKind::Parameter, "clip_loss temperature must be a positive scalar");
  }
  const double n = static_cast<double>(s.rows());
  Var logits = div_by_scalar(similarity, temperature);
  Var image_to_text = sum(diagonal(row_log_softmax(logits)));
  Var text_to_image = sum(diagonal(row_log_softmax(transpose(logits))));
  return scalar_mul(add(image_to_text, text_to_image), -1.0 / (2.0 * n));
}

Var clip_loss(Var similarity, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::Parameter, "clip_loss temperature must be positive");
  return clip_loss(similarity, similarity.tape()->constant(Tensor::scalar(temperature)));
}

double clip_loss_value(const Tensor& similarity, double temperature) {
  Tape tape;
  return clip_loss(tape.constant(similarity), temperature).value().item();
}

}  // namespace ccpt
