#include "lidm/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace lidm::ad {

const Matrix& Var::value() const { return tape_->value(index_); }

bool Var::requires_grad() const { return tape_->requires_grad(index_); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::constant(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::param(const Param& p) {
  Node n;
  n.external = &p.value;
  if (trainable_ && trainable_(p)) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) p.zero_grad();
    n.external_grad = &p.grad;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::push(Matrix value, bool requires_grad, Backward backward) {
  Node n;
  n.storage = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

const Matrix& Tape::value(int i) const {
  const Node& n = nodes_[static_cast<std::size_t>(i)];
  return n.external ? *n.external : n.storage;
}

Matrix& Tape::grad(int i) {
  Node& n = nodes_[static_cast<std::size_t>(i)];
  if (n.external_grad) return *n.external_grad;
  if (n.grad.size() == 0) {
    const Matrix& v = value(i);
    n.grad.setZero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw std::invalid_argument("backward: variable from another tape");
  if (root.value().size() != 1) throw std::invalid_argument("backward: root must be a scalar");
  if (!requires_grad(root.index())) return;
  grad(root.index())(0, 0) += 1.0;
  for (int i = root.index(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw std::invalid_argument("operation on an empty variable");
  return *a.tape();
}

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
  return tape_of(a);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var detach(Var a) { return tape_of(a).constant(a.value()); }

Var operator+(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "add");
  const int ia = a.index(), ib = b.index();
  return t.push(a.value() + b.value(), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad(ia) += g;
    if (tp.requires_grad(ib)) tp.grad(ib) += g;
  });
}

Var operator-(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  const int ia = a.index(), ib = b.index();
  return t.push(a.value() - b.value(), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad(ia) += g;
    if (tp.requires_grad(ib)) tp.grad(ib) -= g;
  });
}

Var cmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "cmul");
  const int ia = a.index(), ib = b.index();
  return t.push(a.value().cwiseProduct(b.value()), a.requires_grad() || b.requires_grad(),
                [ia, ib](Tape& tp, int self) {
                  const Matrix& g = tp.grad(self);
                  if (tp.requires_grad(ia)) tp.grad(ia) += g.cwiseProduct(tp.value(ib));
                  if (tp.requires_grad(ib)) tp.grad(ib) += g.cwiseProduct(tp.value(ia));
                });
}

Var scale(Var a, double s) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  return t.push(a.value() * s, a.requires_grad(),
                [ia, s](Tape& tp, int self) { tp.grad(ia) += s * tp.grad(self); });
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.value().cols() != b.value().rows()) throw std::invalid_argument("matmul: inner dimension mismatch");
  const int ia = a.index(), ib = b.index();
  return t.push(a.value() * b.value(), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.grad(ia).noalias() += g * tp.value(ib).transpose();
    if (tp.requires_grad(ib)) tp.grad(ib).noalias() += tp.value(ia).transpose() * g;
  });
}

Var transpose(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  return t.push(a.value().transpose(), a.requires_grad(),
                [ia](Tape& tp, int self) { tp.grad(ia) += tp.grad(self).transpose(); });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  Matrix y = a.value().array().tanh().matrix();
  return t.push(std::move(y), a.requires_grad(), [ia](Tape& tp, int self) {
    const Matrix& y = tp.value(self);
    tp.grad(ia).array() += tp.grad(self).array() * (1.0 - y.array().square());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.push(std::move(y), a.requires_grad(), [ia](Tape& tp, int self) {
    const Matrix& y = tp.value(self);
    tp.grad(ia).array() += tp.grad(self).array() * y.array() * (1.0 - y.array());
  });
}

Var log(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  return t.push(a.value().array().log().matrix(), a.requires_grad(), [ia](Tape& tp, int self) {
    tp.grad(ia).array() += tp.grad(self).array() / tp.value(ia).array();
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  return t.push(a.value().array().exp().matrix(), a.requires_grad(), [ia](Tape& tp, int self) {
    tp.grad(ia).array() += tp.grad(self).array() * tp.value(self).array();
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  return t.push(a.value().array().square().matrix(), a.requires_grad(), [ia](Tape& tp, int self) {
    tp.grad(ia).array() += 2.0 * tp.grad(self).array() * tp.value(ia).array();
  });
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  Tape& t = tape_of(parts.front());
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().value().cols();
  bool rg = false;
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const Var& p : parts) {
    if (p.tape() != &t) throw std::invalid_argument("concat: operands live on different tapes");
    if (p.value().cols() != cols) throw std::invalid_argument("concat: column mismatch");
    rows += p.value().rows();
    rg = rg || p.requires_grad();
    ids.push_back(p.index());
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const Var& p : parts) {
    out.middleRows(r, p.value().rows()) = p.value();
    r += p.value().rows();
  }
  return t.push(std::move(out), rg, [ids = std::move(ids)](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    Eigen::Index r = 0;
    for (int id : ids) {
      const Eigen::Index n = tp.value(id).rows();
      if (tp.requires_grad(id)) tp.grad(id) += g.middleRows(r, n);
      r += n;
    }
  });
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var slice(Var a, Eigen::Index start, Eigen::Index length) {
  Tape& t = tape_of(a);
  if (start < 0 || length < 0 || start + length > a.value().rows()) throw std::out_of_range("slice: out of range");
  const int ia = a.index();
  return t.push(a.value().middleRows(start, length), a.requires_grad(), [ia, start, length](Tape& tp, int self) {
    tp.grad(ia).middleRows(start, length) += tp.grad(self);
  });
}

Var column(Var a, Eigen::Index col) {
  Tape& t = tape_of(a);
  if (col < 0 || col >= a.value().cols()) throw std::out_of_range("column: index out of range");
  const int ia = a.index();
  return t.push(a.value().col(col), a.requires_grad(),
                [ia, col](Tape& tp, int self) { tp.grad(ia).col(col) += tp.grad(self); });
}

Var log_softmax(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (x.cols() != 1) throw std::invalid_argument("log_softmax: expects a column vector");
  const double mx = x.maxCoeff();
  const double lse = mx + std::log((x.array() - mx).exp().sum());
  const int ia = a.index();
  return t.push((x.array() - lse).matrix(), a.requires_grad(), [ia](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    const double gs = g.sum();
    tp.grad(ia).array() += g.array() - tp.value(self).array().exp() * gs;
  });
}

Var softmax(Var a) {
  Tape& t = tape_of(a);
  const Matrix& x = a.value();
  if (x.cols() != 1) throw std::invalid_argument("softmax: expects a column vector");
  Matrix e = (x.array() - x.maxCoeff()).exp().matrix();
  e /= e.sum();
  const int ia = a.index();
  return t.push(std::move(e), a.requires_grad(), [ia](Tape& tp, int self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    const double gy = (g.array() * y.array()).sum();
    tp.grad(ia).array() += y.array() * (g.array() - gy);
  });
}

Var pick(Var a, Eigen::Index row) {
  Tape& t = tape_of(a);
  if (row < 0 || row >= a.value().rows()) throw std::out_of_range("pick: index out of range");
  const int ia = a.index();
  Matrix out(1, 1);
  out(0, 0) = a.value()(row, 0);
  return t.push(std::move(out), a.requires_grad(),
                [ia, row](Tape& tp, int self) { tp.grad(ia)(row, 0) += tp.grad(self)(0, 0); });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  const int ia = a.index();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return t.push(std::move(out), a.requires_grad(),
                [ia](Tape& tp, int self) { tp.grad(ia).array() += tp.grad(self)(0, 0); });
}

Var dot(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a.value(), b.value(), "dot");
  const int ia = a.index(), ib = b.index();
  Matrix out(1, 1);
  out(0, 0) = (a.value().array() * b.value().array()).sum();
  return t.push(std::move(out), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, int self) {
    const double g = tp.grad(self)(0, 0);
    if (tp.requires_grad(ia)) tp.grad(ia) += g * tp.value(ib);
    if (tp.requires_grad(ib)) tp.grad(ib) += g * tp.value(ia);
  });
}

Var cwise_max(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("cwise_max: no inputs");
  Tape& t = tape_of(parts.front());
  Matrix out = parts.front().value();
  std::vector<int> arg(static_cast<std::size_t>(out.size()), 0);
  bool rg = parts.front().requires_grad();
  std::vector<int> ids{parts.front().index()};
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    require_same_shape(out, v, "cwise_max");
    rg = rg || parts[k].requires_grad();
    ids.push_back(parts[k].index());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (v(i) > out(i)) {
        out(i) = v(i);
        arg[static_cast<std::size_t>(i)] = static_cast<int>(k);
      }
    }
  }
  return t.push(std::move(out), rg, [ids = std::move(ids), arg = std::move(arg)](Tape& tp, int self) {
    const Matrix& g = tp.grad(self);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const int src = ids[static_cast<std::size_t>(arg[static_cast<std::size_t>(i)])];
      if (tp.requires_grad(src)) tp.grad(src)(i) += g(i);
    }
  });
}

}  // namespace lidm::ad
