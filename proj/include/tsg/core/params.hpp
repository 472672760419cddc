#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "tsg/core/rng.hpp"
#include "tsg/core/tensor.hpp"

namespace tsg {

// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

// Owns every Parameter of a model. Addresses are stable for the lifetime of
// the store, so tapes and optimizer state can hold raw pointers.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, std::vector<std::size_t> shape) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    params_.push_back(std::make_unique<Parameter>(name, Tensor(std::move(shape))));
    index_[name] = params_.size() - 1;
    return *params_.back();
  }

  Parameter& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return *params_[it->second];
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t count() const { return params_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->value.size();
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) {
      for (auto& g : p->grad.raw()) g = 0.0;
    }
  }

  void scale_grads(double s) {
    for (auto& p : params_) {
      for (auto& g : p->grad.raw()) g *= s;
    }
  }

  template <typename F>
  void for_each(F f) {
    for (auto& p : params_) f(*p);
  }

  template <typename F>
  void for_each(F f) const {
    for (const auto& p : params_) f(*p);
  }

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

// Uniform +-sqrt(6/(fan_in+fan_out)) for matrices, zeros for vectors.
inline void init_xavier(Parameter& p, Rng& rng) {
  if (p.value.rank() != 2) return;
  const double fan_in = static_cast<double>(p.value.rows());
  const double fan_out = static_cast<double>(p.value.cols());
  const double bound = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : p.value.raw()) v = rng.uniform(-bound, bound);
}

}  // namespace tsg
