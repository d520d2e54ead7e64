#include "lidm/params.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace lidm {

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::decoder: return "decoder";
    case ParamGroup::generative: return "generative";
    case ParamGroup::inference: return "inference";
    case ParamGroup::baseline: return "baseline";
    case ParamGroup::tracker: return "tracker";
  }
  return "unknown";
}

ParamGroup param_group_from_string(std::string_view name) {
  if (name == "decoder") return ParamGroup::decoder;
  if (name == "generative") return ParamGroup::generative;
  if (name == "inference") return ParamGroup::inference;
  if (name == "baseline") return ParamGroup::baseline;
  if (name == "tracker") return ParamGroup::tracker;
  throw std::invalid_argument("unknown parameter group: " + std::string(name));
}

void Param::zero_grad() const {
  if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
    grad.setZero(value.rows(), value.cols());
  } else {
    grad.setZero();
  }
}

ParamStore::ParamStore(const ParamStore& other) {
  for (const auto& p : other.params_) {
    add(p->name, p->group, p->value, p->policy);
  }
}

ParamStore& ParamStore::operator=(const ParamStore& other) {
  if (this != &other) {
    ParamStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Param& ParamStore::add(std::string name, ParamGroup group, Matrix init, bool policy) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter: " + name);
  }
  auto p = std::make_unique<Param>();
  p->name = std::move(name);
  p->group = group;
  p->policy = policy;
  p->value = std::move(init);
  p->zero_grad();
  Param& ref = *p;
  index_.emplace(ref.name, &ref);
  params_.push_back(std::move(p));
  return ref;
}

Param& ParamStore::at(std::string_view name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return *it->second;
}

const Param& ParamStore::at(std::string_view name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
  return *it->second;
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

std::vector<Param*> ParamStore::select(const ParamFilter& filter) {
  std::vector<Param*> out;
  for (auto& p : params_) {
    if (filter(*p)) out.push_back(p.get());
  }
  return out;
}

std::vector<const Param*> ParamStore::select(const ParamFilter& filter) const {
  std::vector<const Param*> out;
  for (const auto& p : params_) {
    if (filter(*p)) out.push_back(p.get());
  }
  return out;
}

void ParamStore::zero_grad() const {
  for (const auto& p : params_) p->zero_grad();
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

void fnv_mix(std::uint64_t& h, const void* data, std::size_t n) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= bytes[i];
    h *= kFnvPrime;
  }
}

}  // namespace

std::uint64_t ParamStore::hash(const ParamFilter& filter) const {
  std::uint64_t h = kFnvOffset;
  for (const auto& p : params_) {
    if (!filter(*p)) continue;
    fnv_mix(h, p->name.data(), p->name.size());
    const std::int64_t shape[2] = {p->value.rows(), p->value.cols()};
    fnv_mix(h, shape, sizeof(shape));
    fnv_mix(h, p->value.data(), sizeof(double) * static_cast<std::size_t>(p->value.size()));
  }
  return h;
}

std::vector<Matrix> ParamStore::snapshot() const {
  std::vector<Matrix> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

void ParamStore::restore(const std::vector<Matrix>& values) {
  if (values.size() != params_.size()) throw std::invalid_argument("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) params_[i]->value = values[i];
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double scale, Rng& rng) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

bool grads_finite(std::span<Param* const> params) {
  for (const Param* p : params) {
    if (!p->grad.allFinite()) return false;
  }
  return true;
}

double grad_norm(std::span<Param* const> params) {
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  return std::sqrt(sq);
}

void clip_grad_norm(std::span<Param* const> params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Param* p : params) p->grad *= s;
  }
}

Adam::Adam(double learning_rate, double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(epsilon) {}

void Adam::step(std::span<Param* const> params) {
  for (Param* p : params) {
    if (p->grad.size() != p->value.size()) {
      p->zero_grad();
      continue;
    }
    auto& st = state_[p];
    if (st.t == 0) {
      st.m.setZero(p->value.rows(), p->value.cols());
      st.v.setZero(p->value.rows(), p->value.cols());
    }
    ++st.t;
    st.m = beta1_ * st.m + (1.0 - beta1_) * p->grad;
    st.v = beta2_ * st.v + (1.0 - beta2_) * p->grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    const double step = lr_ / c1;
    p->value.array() -= step * st.m.array() / ((st.v.array() / c2).sqrt() + eps_);
    p->grad.setZero();
  }
}

}  // namespace lidm
