#include "optim.hpp"

#include <cmath>

#include "errors.hpp"

namespace bci::nn {

Param& ParamStore::add(std::string name, Shape shape) {
  if (index_.count(name)) fail_usage("ParamStore: duplicate parameter " + name);
  const int64_t n = numel(shape);
  Param p;
  p.name = std::move(name);
  p.shape = std::move(shape);
  p.value.assign(static_cast<size_t>(n), 0.0);
  index_[p.name] = static_cast<int>(params_.size());
  params_.push_back(std::move(p));
  return params_.back();
}

const Param& ParamStore::at(const std::string& name) const {
  return params_[static_cast<size_t>(index_of(name))];
}

Param& ParamStore::at(const std::string& name) {
  return params_[static_cast<size_t>(index_of(name))];
}

int ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) fail_usage("ParamStore: unknown parameter " + name);
  return it->second;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const Param& p : params_) n += static_cast<int64_t>(p.value.size());
  return n;
}

std::vector<float> ParamStore::to_f32() const {
  std::vector<float> flat;
  flat.reserve(static_cast<size_t>(total_size()));
  for (const Param& p : params_) {
    for (double v : p.value) flat.push_back(static_cast<float>(v));
  }
  return flat;
}

void ParamStore::from_f32(const std::vector<float>& flat) {
  if (static_cast<int64_t>(flat.size()) != total_size()) {
    fail_data("ParamStore: flat parameter length does not match layout");
  }
  size_t i = 0;
  for (Param& p : params_) {
    for (double& v : p.value) v = static_cast<double>(flat[i++]);
  }
}

const Tensor& BoundParams::operator[](const std::string& name) const {
  return nodes[static_cast<size_t>(store->index_of(name))];
}

BoundParams bind_params(Graph& g, const ParamStore& store, bool requires_grad) {
  BoundParams bound;
  bound.store = &store;
  bound.nodes.reserve(store.count());
  for (const Param& p : store.params()) {
    bound.nodes.push_back(g.leaf(p.shape, p.value, requires_grad));
  }
  return bound;
}

std::vector<std::vector<double>> collect_grads(const BoundParams& bound) {
  std::vector<std::vector<double>> grads;
  grads.reserve(bound.nodes.size());
  for (const Tensor& t : bound.nodes) grads.push_back(t.grad());
  return grads;
}

Adam::Adam(AdamConfig cfg, const ParamStore& store) : cfg_(cfg) {
  if (cfg_.lr <= 0.0) fail_usage("Adam: learning rate must be positive");
  m_.reserve(store.count());
  v_.reserve(store.count());
  for (const Param& p : store.params()) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step(ParamStore& store, const std::vector<std::vector<double>>& grads) {
  if (grads.size() != store.count() || store.count() != m_.size()) {
    fail_usage("Adam: gradient/parameter layout mismatch");
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (size_t pi = 0; pi < grads.size(); ++pi) {
    Param& p = store.params()[pi];
    const std::vector<double>& grad = grads[pi];
    if (grad.size() != p.value.size()) {
      fail_usage("Adam: gradient shape mismatch for " + p.name);
    }
    std::vector<double>& m = m_[pi];
    std::vector<double>& v = v_[pi];
    for (size_t i = 0; i < grad.size(); ++i) {
      const double gi = grad[i];
      if (!std::isfinite(gi)) fail_numeric("Adam: non-finite gradient for " + p.name);
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace bci::nn
