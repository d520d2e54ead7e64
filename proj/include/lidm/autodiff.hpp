#pragma once

#include "lidm/params.hpp"

#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

// Minimal define-by-run reverse-mode differentiation over dense Eigen matrices.
// Values are computed eagerly; backward closures are recorded only for nodes that
// depend on a trainable parameter, so a tape without a filter is a plain forward pass.
namespace lidm::ad {

class Tape;

class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int index() const { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, int index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  int index_ = -1;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  // Forward-only tape: every parameter enters as a constant.
  Tape() = default;
  // Parameters accepted by the filter receive gradients in Param::grad.
  explicit Tape(ParamFilter trainable) : trainable_(std::move(trainable)) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  Var param(const Param& p);

  // Seeds d(root)/d(root) = 1 and propagates to every reachable parameter.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Used by operations.
  Var push(Matrix value, bool requires_grad, Backward backward);
  const Matrix& value(int i) const;
  bool requires_grad(int i) const { return nodes_[static_cast<std::size_t>(i)].requires_grad; }
  Matrix& grad(int i);

 private:
  struct Node {
    Matrix storage;
    const Matrix* external = nullptr;
    Matrix grad;
    Matrix* external_grad = nullptr;
    bool requires_grad = false;
    Backward backward;
  };
  ParamFilter trainable_;
  std::vector<Node> nodes_;
};

Var detach(Var a);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var cmul(Var a, Var b);
Var scale(Var a, double s);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var log(Var a);
Var exp(Var a);
Var square(Var a);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice(Var a, Eigen::Index start, Eigen::Index length);
Var column(Var a, Eigen::Index col);
Var log_softmax(Var a);
Var softmax(Var a);
Var pick(Var a, Eigen::Index row);
Var sum(Var a);
Var dot(Var a, Var b);
// Elementwise maximum over equally shaped inputs.
Var cwise_max(std::span<const Var> parts);

}  // namespace lidm::ad
