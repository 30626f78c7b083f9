#pragma once

// Concrete double-precision aliases and small shared domain types.

#include <map>
#include <string>
#include <vector>

#include "localbins/nn.hpp"
#include "localbins/tensor.hpp"

namespace localbins {

using Tensor = TensorT<double>;
using Mlp = MlpT<double>;

struct DepthRange {
  double d_min = 1e-3;
  double d_max = 10.0;
  DepthRange() = default;
  DepthRange(double lo, double hi) : d_min(lo), d_max(hi) {
    if (!(0 < d_min && d_min < d_max))
      throw std::invalid_argument("DepthRange: requires 0 < d_min < d_max");
  }
};

enum class SplitterKind { Constant, Sigmoid, LinearNorm };

inline std::string to_string(SplitterKind k) {
  switch (k) {
    case SplitterKind::Constant: return "constant";
    case SplitterKind::Sigmoid: return "sigmoid";
    case SplitterKind::LinearNorm: return "linear_norm";
  }
  return "?";
}

inline SplitterKind splitter_from_string(const std::string& s) {
  if (s == "constant") return SplitterKind::Constant;
  if (s == "sigmoid") return SplitterKind::Sigmoid;
  if (s == "linear_norm") return SplitterKind::LinearNorm;
  throw std::invalid_argument("unknown splitter kind: " + s);
}

// Ordered, named parameter registry. Order is the registration order and
// fixes the optimizer update and checkpoint layout.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    t.set_requires_grad();
    index_[name] = items_.size();
    items_.push_back({name, std::move(t)});
    return items_.back().second;
  }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return items_[it->second].second;
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return items_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    out.reserve(items_.size());
    for (const auto& [n, t] : items_) out.push_back(t);
    return out;
  }

  void zero_grad() {
    for (auto& [n, t] : items_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace localbins
