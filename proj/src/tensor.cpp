#include "ccpt/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "ccpt/error.hpp"

namespace ccpt {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, data_(rows * cols, fill) {
  if (rows == 0 || cols == 0) {
    throw Error(ErrorKind::Shape, "tensor dimensions must be positive");
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.empty() || shape_.size() > 2) {
    throw Error(ErrorKind::Shape, "tensors are rank 1 or 2, got rank " + std::to_string(shape_.size()));
  }
  if (shape_.size() == 1) shape_.insert(shape_.begin(), 1);
  for (auto d : shape_) {
    if (d == 0) throw Error(ErrorKind::Shape, "tensor dimensions must be positive");
  }
  const auto expected = std::accumulate(shape_.begin(), shape_.end(), std::size_t{1}, std::multiplies<>());
  if (expected != data_.size()) {
    throw Error(ErrorKind::Shape, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                      shape_string());
  }
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> data;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& r : rows) {
    if (r.size() != cols) throw Error(ErrorKind::Shape, "ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) throw Error(ErrorKind::Shape, "item() on non-scalar " + shape_string());
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape_[i]);
  }
  return s + "]";
}

Tensor stack_rows(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw Error(ErrorKind::Shape, "cannot stack zero rows");
  const std::size_t d = rows[0].size();
  Tensor out(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) throw Error(ErrorKind::Shape, "ragged rows in stack_rows");
    std::copy(rows[i].begin(), rows[i].end(), out.row(i).begin());
  }
  return out;
}

}  // namespace ccpt
