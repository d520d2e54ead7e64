#pragma once

#include "lidm/autodiff.hpp"
#include "lidm/params.hpp"

#include <span>
#include <string>
#include <vector>

namespace lidm::nn {

// y = W x + b
struct Linear {
  const Param* weight = nullptr;
  const Param* bias = nullptr;

  static Linear create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
                       Eigen::Index out, Rng& rng, bool policy = false);
  static Linear bind(const ParamStore& store, const std::string& name);

  Eigen::Index in_dim() const { return weight->value.cols(); }
  Eigen::Index out_dim() const { return weight->value.rows(); }

  ad::Var operator()(ad::Tape& tape, ad::Var x) const;
  Vector apply(const Vector& x) const;
};

// Columns of the table are token vectors.
struct Embedding {
  const Param* table = nullptr;

  static Embedding create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index vocab,
                          Eigen::Index dim, Rng& rng);
  static Embedding bind(const ParamStore& store, const std::string& name);

  Eigen::Index vocab_size() const { return table->value.cols(); }
  Eigen::Index dim() const { return table->value.rows(); }

  ad::Var lookup(ad::Tape& tape, int id) const;
  // Validates ids against the table size.
  void check(std::span<const int> ids) const;
};

struct LstmState {
  ad::Var h;
  ad::Var c;
};

struct LstmValues {
  Vector h;
  Vector c;
};

// Gate layout in the stacked pre-activation: input, forget, output, candidate.
struct LstmCell {
  const Param* w_input = nullptr;
  const Param* w_hidden = nullptr;
  const Param* bias = nullptr;

  static LstmCell create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
                         Eigen::Index hidden, Rng& rng);
  static LstmCell bind(const ParamStore& store, const std::string& name);

  Eigen::Index hidden_dim() const { return w_hidden->value.cols(); }
  Eigen::Index input_dim() const { return w_input->value.cols(); }

  LstmState initial(ad::Tape& tape) const;
  // extra: additional pre-activation term (4H) added to the gates, may be empty.
  LstmState step(ad::Tape& tape, const LstmState& prev, ad::Var x, ad::Var extra = {}) const;

  LstmValues initial_values() const;
  LstmValues step_values(const LstmValues& prev, const Vector& x, const Vector* extra = nullptr) const;
};

// Final forward hidden state concatenated with final backward hidden state.
struct BiLstm {
  LstmCell forward;
  LstmCell backward;

  static BiLstm create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
                       Eigen::Index hidden, Rng& rng);
  static BiLstm bind(const ParamStore& store, const std::string& name);

  Eigen::Index output_dim() const { return 2 * forward.hidden_dim(); }
  ad::Var encode(ad::Tape& tape, std::span<const ad::Var> inputs) const;
};

// Convolution over a token window followed by max-pooling over time.
struct ConvPool {
  std::vector<Linear> filters;  // one per window width, width = index + 1

  static ConvPool create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index embed_dim,
                         int max_width, Eigen::Index num_filters, Rng& rng);
  static ConvPool bind(const ParamStore& store, const std::string& name, int max_width);

  Eigen::Index output_dim() const;
  // inputs must already be padded so that every filter width fits.
  ad::Var operator()(ad::Tape& tape, std::span<const ad::Var> inputs) const;
};

}  // namespace lidm::nn
