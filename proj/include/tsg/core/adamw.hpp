#pragma once

#include <cmath>
#include <map>

#include "tsg/core/params.hpp"

namespace tsg {

// AdamW with bias correction; weight decay is decoupled from the moment
// update (p <- p - lr*wd*p alongside the Adam step).
class AdamW {
 public:
  struct Hyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 5e-4;
  };

  explicit AdamW(Hyper h) : hyper_(h) {
    if (hyper_.lr <= 0.0) throw ContractError("adamw: lr must be positive");
  }

  const Hyper& hyper() const { return hyper_; }
  void set_lr(double lr) { hyper_.lr = lr; }
  std::int64_t step_count() const { return step_; }

  // One update over every parameter in the store using Parameter::grad.
  void step(ParameterStore& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(step_));
    params.for_each([&](Parameter& p) {
      Moments& m = moments_per_param_(p);
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad.at(i);
        m.m1.at(i) = hyper_.beta1 * m.m1.at(i) + (1.0 - hyper_.beta1) * g;
        m.m2.at(i) = hyper_.beta2 * m.m2.at(i) + (1.0 - hyper_.beta2) * g * g;
        const double mhat = m.m1.at(i) / bc1;
        const double vhat = m.m2.at(i) / bc2;
        p.value.at(i) -= hyper_.lr * (mhat / (std::sqrt(vhat) + hyper_.eps) +
                                      hyper_.weight_decay * p.value.at(i));
      }
    });
  }

 private:
  struct Moments {
    Tensor m1, m2;
  };

  Moments& moments_per_param_(const Parameter& p) {
    auto it = state_.find(&p);
    if (it == state_.end()) {
      it = state_.emplace(&p, Moments{Tensor(p.value.shape()), Tensor(p.value.shape())}).first;
    }
    if (!it->second.m1.same_shape(p.value)) throw ShapeError("adamw: moment/parameter shape mismatch");
    return it->second;
  }

  Hyper hyper_;
  std::int64_t step_ = 0;
  std::map<const Parameter*, Moments> state_;
};

}  // namespace tsg
