#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lidm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Parameter partition used by the training procedures.
//   decoder    - Theta1: word embeddings, conditional LSTM, output projection, W3..W5, b3
//   generative - Theta2: utterance encoder and policy MLP (W1, b1, W2, b2)
//   inference  - Phi: inference-network encoders, joint MLP, W6
//   baseline   - b and b(s)
//   tracker    - belief trackers, frozen once pre-trained
enum class ParamGroup { decoder, generative, inference, baseline, tracker };

std::string_view to_string(ParamGroup group);
ParamGroup param_group_from_string(std::string_view name);

struct Param {
  std::string name;
  ParamGroup group = ParamGroup::decoder;
  // Member of the policy MLP, the only subset touched by RL fine-tuning.
  bool policy = false;
  Matrix value;
  // Gradient accumulator written by training tapes.
  mutable Matrix grad;

  void zero_grad() const;
};

using ParamFilter = std::function<bool(const Param&)>;

inline ParamFilter in_group(ParamGroup group) {
  return [group](const Param& p) { return p.group == group; };
}

inline ParamFilter policy_subset() {
  return [](const Param& p) { return p.policy; };
}

// Owns named parameter tensors. Addresses are stable for the lifetime of the store.
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore& other);
  ParamStore& operator=(const ParamStore& other);
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  Param& add(std::string name, ParamGroup group, Matrix init, bool policy = false);

  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Param*> select(const ParamFilter& filter);
  std::vector<const Param*> select(const ParamFilter& filter) const;

  std::size_t size() const { return params_.size(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() const;
  std::size_t num_scalars() const;

  // FNV-1a over names, shapes and raw bytes of the selected tensors.
  std::uint64_t hash(const ParamFilter& filter) const;

  std::vector<Matrix> snapshot() const;
  void restore(const std::vector<Matrix>& values);

 private:
  std::vector<std::unique_ptr<Param>> params_;
  std::map<std::string, Param*, std::less<>> index_;
};

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng);

bool grads_finite(std::span<Param* const> params);
double grad_norm(std::span<Param* const> params);
void clip_grad_norm(std::span<Param* const> params, double max_norm);

class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double epsilon = 1e-8);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  // Descent step on the accumulated gradients; gradients are zeroed afterwards.
  void step(std::span<Param* const> params);

 private:
  struct Moments {
    Matrix m;
    Matrix v;
    long t = 0;
  };
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::map<const Param*, Moments> state_;
};

}  // namespace lidm
