#include "ccpt/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ccpt/error.hpp"

namespace ccpt {

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.op = OpKind::Leaf;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind op, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  Node node;
  node.op = op;
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [this](std::size_t id) { return nodes_[id].requires_grad; });
  node.inputs = std::move(inputs);
  node.value = std::move(value);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Tensor& contribution) {
  Node& node = nodes_[id];
  if (!node.requires_grad) return;
  if (node.grad.empty()) {
    node.grad = contribution;
    return;
  }
  auto dst = node.grad.data();
  auto src = contribution.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw Error(ErrorKind::Contract, "loss belongs to a different tape");
  const std::size_t root = loss.id();
  if (nodes_[root].value.size() != 1) {
    throw Error(ErrorKind::Contract, "backward requires a scalar loss, got " + nodes_[root].value.shape_string());
  }
  for (auto& node : nodes_) node.grad = Tensor();
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad = Tensor::scalar(1.0);
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, i);
  }
}

namespace {

Tape& common_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) {
    throw Error(ErrorKind::Contract, "operands live on different tapes");
  }
  return *a.tape();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::Shape, std::string(op) + ": " + a.shape_string() + " vs " + b.shape_string());
  }
}

// c[m x n] = a[m x k] * b[k x n], with optional transposes of the operands.
Tensor gemm(const Tensor& a, bool ta, const Tensor& b, bool tb) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  Tensor c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a(p, i) : a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        c(i, j) += av * (tb ? b(j, p) : b(p, j));
      }
    }
  }
  return c;
}

template <class F>
Tensor map(const Tensor& x, F f) {
  Tensor out = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <class F>
Var unary(Var a, OpKind op, Tensor value, F grad_elem) {
  const std::size_t ia = a.id();
  return a.tape()->record(op, {ia}, std::move(value), [ia, grad_elem](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    Tensor dx = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = g[i] * grad_elem(x[i], y[i]);
    t.accumulate(ia, dx);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw Error(ErrorKind::Shape, "matmul inner dimensions " + av.shape_string() + " x " + bv.shape_string());
  }
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::MatMul, {ia, ib}, gemm(av, false, bv, false), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, gemm(g, false, tp.value(ib), true));
    if (tp.requires_grad(ib)) tp.accumulate(ib, gemm(tp.value(ia), true, g, false));
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  Tensor y(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) y(j, i) = x(i, j);
  const std::size_t ia = a.id();
  return a.tape()->record(OpKind::Transpose, {ia}, std::move(y), [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor dx(g.cols(), g.rows());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) dx(j, i) = g(i, j);
    t.accumulate(ia, dx);
  });
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::Add, {ia, ib}, std::move(y), [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var subtract(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "subtract");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::Subtract, {ia, ib}, std::move(y), [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    if (tp.requires_grad(ib)) tp.accumulate(ib, map(tp.grad(self), [](double g) { return -g; }));
  });
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= b.value()[i];
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(OpKind::Mul, {ia, ib}, std::move(y), [ia, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Tensor da = g;
      for (std::size_t i = 0; i < da.size(); ++i) da[i] *= tp.value(ib)[i];
      tp.accumulate(ia, da);
    }
    if (tp.requires_grad(ib)) {
      Tensor db = g;
      for (std::size_t i = 0; i < db.size(); ++i) db[i] *= tp.value(ia)[i];
      tp.accumulate(ib, db);
    }
  });
}

Var scalar_mul(Var a, double c) {
  const std::size_t ia = a.id();
  return a.tape()->record(OpKind::ScalarMul, {ia}, map(a.value(), [c](double x) { return c * x; }),
                          [ia, c](Tape& t, std::size_t self) {
                            t.accumulate(ia, map(t.grad(self), [c](double g) { return c * g; }));
                          });
}

Var add_row_broadcast(Var x, Var bias) {
  Tape& t = common_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols()) {
    throw Error(ErrorKind::Shape, "add_row_broadcast: bias " + bv.shape_string() + " for input " + xv.shape_string());
  }
  Tensor y = xv;
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bv(0, j);
  const std::size_t ix = x.id(), ib = bias.id();
  return t.record(OpKind::AddRowBroadcast, {ix, ib}, std::move(y), [ix, ib](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad(self);
    tp.accumulate(ix, g);
    if (tp.requires_grad(ib)) {
      Tensor db(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) db(0, j) += g(i, j);
      tp.accumulate(ib, db);
    }
  });
}

Var div_by_scalar(Var x, Var s) {
  Tape& t = common_tape(x, s);
  if (s.value().size() != 1) throw Error(ErrorKind::Shape, "div_by_scalar divisor must be 1x1");
  const double sv = s.value().item();
  if (sv == 0.0) throw Error(ErrorKind::Domain, "division by zero");
  const std::size_t ix = x.id(), is = s.id();
  return t.record(OpKind::DivByScalar, {ix, is}, map(x.value(), [sv](double v) { return v / sv; }),
                  [ix, is](Tape& tp, std::size_t self) {
                    const Tensor& g = tp.grad(self);
                    const Tensor& y = tp.value(self);
                    const double d = tp.value(is).item();
                    if (tp.requires_grad(ix)) tp.accumulate(ix, map(g, [d](double gi) { return gi / d; }));
                    if (tp.requires_grad(is)) {
                      double acc = 0.0;
                      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * y[i];
                      tp.accumulate(is, Tensor::scalar(-acc / d));
                    }
                  });
}

Var tanh(Var a) {
  return unary(a, OpKind::Tanh, map(a.value(), [](double x) { return std::tanh(x); }),
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(a, OpKind::Relu, map(a.value(), [](double x) { return x > 0.0 ? x : 0.0; }),
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw Error(ErrorKind::Domain, "log of non-positive value " + std::to_string(v));
  }
  return unary(a, OpKind::Log, map(a.value(), [](double x) { return std::log(x); }),
               [](double x, double) { return 1.0 / x; });
}

Var exp(Var a) {
  return unary(a, OpKind::Exp, map(a.value(), [](double x) { return std::exp(x); }),
               [](double, double y) { return y; });
}

Var l2_normalize_rows(Var x) {
  const Tensor& xv = x.value();
  Tensor y = xv;
  Tensor norms(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double sq = 0.0;
    for (double v : xv.row(i)) sq += v * v;
    const double n = std::sqrt(sq);
    if (n < kNormEpsilon) {
      throw Error(ErrorKind::Degenerate, "row " + std::to_string(i) + " has norm below 1e-12");
    }
    norms(i, 0) = n;
    for (double& v : y.row(i)) v /= n;
  }
  const std::size_t ix = x.id();
  return x.tape()->record(OpKind::L2NormalizeRows, {ix}, std::move(y),
                          [ix, norms = std::move(norms)](Tape& t, std::size_t self) {
                            const Tensor& g = t.grad(self);
                            const Tensor& u = t.value(self);
                            Tensor dx = Tensor::zeros_like(u);
                            for (std::size_t i = 0; i < u.rows(); ++i) {
                              double ug = 0.0;
                              for (std::size_t j = 0; j < u.cols(); ++j) ug += u(i, j) * g(i, j);
                              for (std::size_t j = 0; j < u.cols(); ++j)
                                dx(i, j) = (g(i, j) - u(i, j) * ug) / norms(i, 0);
                            }
                            t.accumulate(ix, dx);
                          });
}

Var row_softmax(Var x, double temperature) {
  if (!(temperature > 0.0)) throw Error(ErrorKind::Parameter, "softmax temperature must be positive");
  const Tensor& xv = x.value();
  Tensor y = Tensor::zeros_like(xv);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    const auto r = xv.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) z += (y(i, j) = std::exp((r[j] - mx) / temperature));
    for (double& v : y.row(i)) v /= z;
  }
  const std::size_t ix = x.id();
  return x.tape()->record(OpKind::RowSoftmax, {ix}, std::move(y), [ix, temperature](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& p = t.value(self);
    Tensor dx = Tensor::zeros_like(p);
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double gp = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) gp += g(i, j) * p(i, j);
      for (std::size_t j = 0; j < p.cols(); ++j) dx(i, j) = p(i, j) * (g(i, j) - gp) / temperature;
    }
    t.accumulate(ix, dx);
  });
}

Var row_log_softmax(Var x) {
  const Tensor& xv = x.value();
  Tensor y = Tensor::zeros_like(xv);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    const auto r = xv.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < r.size(); ++j) y(i, j) = r[j] - lse;
  }
  const std::size_t ix = x.id();
  return x.tape()->record(OpKind::RowLogSoftmax, {ix}, std::move(y), [ix](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& ls = t.value(self);
    Tensor dx = Tensor::zeros_like(ls);
    for (std::size_t i = 0; i < ls.rows(); ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < ls.cols(); ++j) gs += g(i, j);
      for (std::size_t j = 0; j < ls.cols(); ++j) dx(i, j) = g(i, j) - std::exp(ls(i, j)) * gs;
    }
    t.accumulate(ix, dx);
  });
}

Var diagonal(Var x) {
  const Tensor& xv = x.value();
  if (xv.rows() != xv.cols()) throw Error(ErrorKind::Shape, "diagonal of non-square " + xv.shape_string());
  Tensor y(xv.rows(), 1);
  for (std::size_t i = 0; i < xv.rows(); ++i) y(i, 0) = xv(i, i);
  const std::size_t ix = x.id();
  const std::size_t n = xv.rows();
  return x.tape()->record(OpKind::Diagonal, {ix}, std::move(y), [ix, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor dx(n, n);
    for (std::size_t i = 0; i < n; ++i) dx(i, i) = g(i, 0);
    t.accumulate(ix, dx);
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record(OpKind::Sum, {ia}, Tensor::scalar(s), [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self).item();
    Tensor dx = Tensor::zeros_like(t.value(ia));
    for (double& v : dx.data()) v = g;
    t.accumulate(ia, dx);
  });
}

Var mean(Var a) { return scalar_mul(sum(a), 1.0 / static_cast<double>(a.value().size())); }

}  // namespace ccpt
