#pragma once

// AdamW with decoupled weight decay and the flat-then-cosine learning rate
// schedule: constant for the first 70% of iterations, then cosine decay down
// to base_lr * final_lr_factor over the remaining 30%.

#include <cmath>
#include <cstdint>
#include <vector>

#include "localbins/tensor.hpp"

namespace localbins {

template <class S>
struct AdamWT {
  S base_lr = static_cast<S>(3.57e-4);
  S weight_decay = static_cast<S>(0.1);
  S beta1 = static_cast<S>(0.9);
  S beta2 = static_cast<S>(0.999);
  S eps = static_cast<S>(1e-8);
  S final_lr_factor = static_cast<S>(1e-4);
  double flat_fraction = 0.7;

  std::int64_t step_count = 0;

  struct Slot {
    std::vector<S> m, v;
  };
  std::vector<Slot> slots;

  S lr_at(std::int64_t iter, std::int64_t total_iters) const {
    if (iter >= total_iters) throw std::invalid_argument("adamw: iter must be < total_iters");
    const double flat = flat_fraction * static_cast<double>(total_iters);
    if (static_cast<double>(iter) <= flat) return base_lr;
    const double span = static_cast<double>(total_iters) - flat;
    const double t = (static_cast<double>(iter) - flat) / span;
    const S lr_end = base_lr * final_lr_factor;
    return lr_end + (base_lr - lr_end) * static_cast<S>(0.5 * (1.0 + std::cos(M_PI * t)));
  }

  // One update over an ordered parameter list; grads are read from the
  // tensors' grad buffers and left untouched.
  void step(std::vector<TensorT<S>>& params, std::int64_t iter, std::int64_t total_iters) {
    if (slots.empty()) {
      slots.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        slots[i].m.assign(static_cast<std::size_t>(params[i].size()), S(0));
        slots[i].v.assign(static_cast<std::size_t>(params[i].size()), S(0));
      }
    }
    if (slots.size() != params.size())
      throw std::invalid_argument("adamw: parameter list changed size");
    const S lr = lr_at(iter, total_iters);
    ++step_count;
    const S bc1 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta1), static_cast<double>(step_count)));
    const S bc2 = S(1) - static_cast<S>(std::pow(static_cast<double>(beta2), static_cast<double>(step_count)));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      auto& p = params[pi];
      if (!p.tracked()) throw std::invalid_argument("adamw: untracked parameter");
      auto& m = slots[pi].m;
      auto& v = slots[pi].v;
      const auto& g = p.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        m[i] = beta1 * m[i] + (S(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (S(1) - beta2) * g[i] * g[i];
        const S mhat = m[i] / bc1;
        const S vhat = v[i] / bc2;
        p.data()[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p.data()[i]);
      }
    }
  }
};

}  // namespace localbins
