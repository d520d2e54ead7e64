#include "lidm/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace lidm::nn {

namespace {

double glorot(Eigen::Index in, Eigen::Index out) { return std::sqrt(6.0 / static_cast<double>(in + out)); }

Vector sigmoid_values(const Vector& x) { return (1.0 / (1.0 + (-x.array()).exp())).matrix(); }

}  // namespace

Linear Linear::create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
                      Eigen::Index out, Rng& rng, bool policy) {
  Linear l;
  l.weight = &store.add(name + "/W", group, uniform_matrix(out, in, glorot(in, out), rng), policy);
  l.bias = &store.add(name + "/b", group, Matrix::Zero(out, 1), policy);
  return l;
}

Linear Linear::bind(const ParamStore& store, const std::string& name) {
  Linear l;
  l.weight = &store.at(name + "/W");
  l.bias = &store.at(name + "/b");
  return l;
}

ad::Var Linear::operator()(ad::Tape& tape, ad::Var x) const {
  return ad::matmul(tape.param(*weight), x) + tape.param(*bias);
}

Vector Linear::apply(const Vector& x) const { return weight->value * x + bias->value; }

Embedding Embedding::create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index vocab,
                            Eigen::Index dim, Rng& rng) {
  Embedding e;
  e.table = &store.add(name, group, uniform_matrix(dim, vocab, 0.1, rng));
  return e;
}

Embedding Embedding::bind(const ParamStore& store, const std::string& name) {
  Embedding e;
  e.table = &store.at(name);
  return e;
}

ad::Var Embedding::lookup(ad::Tape& tape, int id) const {
  if (id < 0 || id >= table->value.cols()) {
    throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(table->value.cols()));
  }
  return ad::column(tape.param(*table), id);
}

void Embedding::check(std::span<const int> ids) const {
  for (int id : ids) {
    if (id < 0 || id >= table->value.cols()) {
      throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary of size " +
                              std::to_string(table->value.cols()));
    }
  }
}

LstmCell LstmCell::create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
                          Eigen::Index hidden, Rng& rng) {
  LstmCell c;
  const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
  c.w_input = &store.add(name + "/Wx", group, uniform_matrix(4 * hidden, in, s, rng));
  c.w_hidden = &store.add(name + "/Wh", group, uniform_matrix(4 * hidden, hidden, s, rng));
  Matrix b = Matrix::Zero(4 * hidden, 1);
  b.middleRows(hidden, hidden).setOnes();  // forget gate
  c.bias = &store.add(name + "/b", group, std::move(b));
  return c;
}

LstmCell LstmCell::bind(const ParamStore& store, const std::string& name) {
  LstmCell c;
  c.w_input = &store.at(name + "/Wx");
  c.w_hidden = &store.at(name + "/Wh");
  c.bias = &store.at(name + "/b");
  return c;
}

LstmState LstmCell::initial(ad::Tape& tape) const {
  const Eigen::Index h = hidden_dim();
  return {tape.constant(Matrix::Zero(h, 1)), tape.constant(Matrix::Zero(h, 1))};
}

LstmState LstmCell::step(ad::Tape& tape, const LstmState& prev, ad::Var x, ad::Var extra) const {
  const Eigen::Index h = hidden_dim();
  ad::Var pre = ad::matmul(tape.param(*w_input), x) + ad::matmul(tape.param(*w_hidden), prev.h) +
                tape.param(*bias);
  if (extra.valid()) pre = pre + extra;
  ad::Var i = ad::sigmoid(ad::slice(pre, 0, h));
  ad::Var f = ad::sigmoid(ad::slice(pre, h, h));
  ad::Var o = ad::sigmoid(ad::slice(pre, 2 * h, h));
  ad::Var g = ad::tanh(ad::slice(pre, 3 * h, h));
  ad::Var c = ad::cmul(f, prev.c) + ad::cmul(i, g);
  ad::Var hs = ad::cmul(o, ad::tanh(c));
  return {hs, c};
}

LstmValues LstmCell::initial_values() const {
  const Eigen::Index h = hidden_dim();
  return {Vector::Zero(h), Vector::Zero(h)};
}

LstmValues LstmCell::step_values(const LstmValues& prev, const Vector& x, const Vector* extra) const {
  const Eigen::Index h = hidden_dim();
  Vector pre = w_input->value * x + w_hidden->value * prev.h + bias->value;
  if (extra) pre += *extra;
  const Vector i = sigmoid_values(pre.segment(0, h));
  const Vector f = sigmoid_values(pre.segment(h, h));
  const Vector o = sigmoid_values(pre.segment(2 * h, h));
  const Vector g = pre.segment(3 * h, h).array().tanh().matrix();
  LstmValues next;
  next.c = f.cwiseProduct(prev.c) + i.cwiseProduct(g);
  next.h = o.cwiseProduct(next.c.array().tanh().matrix());
  return next;
}

BiLstm BiLstm::create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index in,
                      Eigen::Index hidden, Rng& rng) {
  return {LstmCell::create(store, name + "/fwd", group, in, hidden, rng),
          LstmCell::create(store, name + "/bwd", group, in, hidden, rng)};
}

BiLstm BiLstm::bind(const ParamStore& store, const std::string& name) {
  return {LstmCell::bind(store, name + "/fwd"), LstmCell::bind(store, name + "/bwd")};
}

ad::Var BiLstm::encode(ad::Tape& tape, std::span<const ad::Var> inputs) const {
  if (inputs.empty()) throw std::invalid_argument("BiLstm::encode: empty input sequence");
  LstmState f = forward.initial(tape);
  for (const ad::Var& x : inputs) f = forward.step(tape, f, x);
  LstmState b = backward.initial(tape);
  for (auto it = inputs.rbegin(); it != inputs.rend(); ++it) b = backward.step(tape, b, *it);
  return ad::concat({f.h, b.h});
}

ConvPool ConvPool::create(ParamStore& store, const std::string& name, ParamGroup group, Eigen::Index embed_dim,
                          int max_width, Eigen::Index num_filters, Rng& rng) {
  ConvPool cp;
  for (int w = 1; w <= max_width; ++w) {
    cp.filters.push_back(
        Linear::create(store, name + "/w" + std::to_string(w), group, embed_dim * w, num_filters, rng));
  }
  return cp;
}

ConvPool ConvPool::bind(const ParamStore& store, const std::string& name, int max_width) {
  ConvPool cp;
  for (int w = 1; w <= max_width; ++w) cp.filters.push_back(Linear::bind(store, name + "/w" + std::to_string(w)));
  return cp;
}

Eigen::Index ConvPool::output_dim() const {
  Eigen::Index n = 0;
  for (const auto& f : filters) n += f.out_dim();
  return n;
}

ad::Var ConvPool::operator()(ad::Tape& tape, std::span<const ad::Var> inputs) const {
  std::vector<ad::Var> pooled;
  pooled.reserve(filters.size());
  for (std::size_t k = 0; k < filters.size(); ++k) {
    const std::size_t width = k + 1;
    if (inputs.size() < width) throw std::invalid_argument("ConvPool: sequence shorter than filter width");
    std::vector<ad::Var> responses;
    responses.reserve(inputs.size() - width + 1);
    for (std::size_t pos = 0; pos + width <= inputs.size(); ++pos) {
      ad::Var window = width == 1 ? inputs[pos] : ad::concat(inputs.subspan(pos, width));
      responses.push_back(ad::tanh(filters[k](tape, window)));
    }
    pooled.push_back(ad::cwise_max(responses));
  }
  return ad::concat(pooled);
}

}  // namespace lidm::nn
