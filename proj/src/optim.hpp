#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "tensor.hpp"

namespace bci::nn {

struct Param {
  std::string name;
  Shape shape;
  std::vector<double> value;
};

// Ordered, named parameter set. Declaration order is the serialization order.
class ParamStore {
 public:
  Param& add(std::string name, Shape shape);
  const Param& at(const std::string& name) const;
  Param& at(const std::string& name);
  int index_of(const std::string& name) const;

  size_t count() const { return params_.size(); }
  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& params() { return params_; }
  int64_t total_size() const;

  std::vector<float> to_f32() const;
  void from_f32(const std::vector<float>& flat);

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, int> index_;
};

// Tensors bound into a graph for one forward/backward pass, aligned with the
// store's declaration order.
struct BoundParams {
  std::vector<Tensor> nodes;
  const ParamStore* store = nullptr;

  const Tensor& operator[](const std::string& name) const;
};

BoundParams bind_params(Graph& g, const ParamStore& store, bool requires_grad);

// Gradients per parameter, collected from bound graph nodes after backward.
std::vector<std::vector<double>> collect_grads(const BoundParams& bound);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a ParamStore; moment buffers mirror the store layout.
class Adam {
 public:
  Adam(AdamConfig cfg, const ParamStore& store);

  void step(ParamStore& store, const std::vector<std::vector<double>>& grads);
  long step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long step_count_ = 0;
};

}  // namespace bci::nn
