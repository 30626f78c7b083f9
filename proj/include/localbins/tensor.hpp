#pragma once

// Dense tensor with reverse-mode differentiation. Tensors share their
// storage; an op that sees a tracked input records a tape node holding the
// backward closure. backward() replays nodes in reverse execution order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace localbins {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) {
    if (e <= 0) throw std::invalid_argument("tensor: non-positive extent");
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

namespace detail {

template <class S>
struct TapeNode {
  std::int64_t seq = 0;
  std::function<void()> backprop;
  std::vector<std::shared_ptr<TapeNode>> parents;
  std::shared_ptr<std::vector<S>> out_grad;  // zeroed before each backward pass
};

inline std::int64_t next_seq() {
  static thread_local std::int64_t counter = 0;
  return ++counter;
}

inline bool& grad_mode() {
  static thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// RAII guard disabling tape recording (evaluation / data paths).
struct NoGrad {
  bool prev;
  NoGrad() : prev(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGrad() { detail::grad_mode() = prev; }
  NoGrad(const NoGrad&) = delete;
};

template <class S>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<S>>(shape_numel(shape_), S(0))) {}
  TensorT(Shape shape, std::vector<S> values) : shape_(std::move(shape)) {
    if (shape_numel(shape_) != static_cast<std::int64_t>(values.size()))
      throw std::invalid_argument("tensor: shape/data length mismatch");
    data_ = std::make_shared<std::vector<S>>(std::move(values));
  }

  static TensorT full(Shape shape, S v) {
    TensorT t(std::move(shape));
    std::fill(t.data_->begin(), t.data_->end(), v);
    return t;
  }
  static TensorT scalar(S v) { return TensorT({1}, {v}); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

  std::vector<S>& values() { return *data_; }
  const std::vector<S>& values() const { return *data_; }
  S* data() { return data_->data(); }
  const S* data() const { return data_->data(); }

  S item() const {
    if (size() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return (*data_)[0];
  }

  bool tracked() const { return static_cast<bool>(grad_); }
  void set_requires_grad() {
    if (!grad_) grad_ = std::make_shared<std::vector<S>>(data_->size(), S(0));
  }
  // Tensors are shared-storage handles; a const handle still reaches the
  // shared gradient buffer (backward closures hold const copies).
  std::vector<S>& grad() const {
    if (!grad_) throw std::runtime_error("grad(): tensor is not tracked");
    return *grad_;
  }
  void zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), S(0));
  }

  // tape internals
  std::shared_ptr<detail::TapeNode<S>> node_;
  std::shared_ptr<std::vector<S>> grad_;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<S>> data_;
};

namespace detail {

template <class S>
void ensure_finite(const TensorT<S>& t, const char* op) {
  for (S v : t.values())
    if (!std::isfinite(static_cast<double>(v)))
      throw std::runtime_error(std::string("non-finite value produced by ") + op);
}

template <class S>
bool any_tracked(std::initializer_list<const TensorT<S>*> xs) {
  if (!grad_mode()) return false;
  for (auto* x : xs)
    if (x->tracked()) return true;
  return false;
}

// Registers `out` as the result of a differentiable op. `fn` runs during
// backward with out.grad() populated.
template <class S>
void attach(TensorT<S>& out, std::initializer_list<const TensorT<S>*> inputs,
            std::function<void()> fn) {
  out.set_requires_grad();
  auto node = std::make_shared<TapeNode<S>>();
  node->seq = next_seq();
  node->backprop = std::move(fn);
  node->out_grad = out.grad_;
  for (auto* in : inputs)
    if (in->node_) node->parents.push_back(in->node_);
  out.node_ = node;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward

template <class S>
void backward(TensorT<S>& loss) {
  if (loss.size() != 1) throw std::invalid_argument("backward(): loss must be scalar");
  if (!loss.tracked()) throw std::invalid_argument("backward(): loss is not on the tape");

  // Collect reachable nodes; reverse execution order == descending seq.
  std::vector<detail::TapeNode<S>*> nodes;
  std::vector<detail::TapeNode<S>*> stack;
  if (loss.node_) stack.push_back(loss.node_.get());
  std::unordered_set<const void*> seen;
  while (!stack.empty()) {
    auto* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    nodes.push_back(n);
    for (auto& p : n->parents) stack.push_back(p.get());
  }
  std::sort(nodes.begin(), nodes.end(),
            [](auto* a, auto* b) { return a->seq > b->seq; });

  // Interior grads restart at zero each pass; leaf (parameter) grads persist
  // so repeated backward calls accumulate.
  for (auto* n : nodes)
    if (n->out_grad) std::fill(n->out_grad->begin(), n->out_grad->end(), S(0));
  (*loss.grad_)[0] = S(1);
  for (auto* n : nodes) n->backprop();
}

// ---------------------------------------------------------------------------
// elementwise / reduction ops

namespace detail {
template <class S>
void same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
template <class S>
void axpy(const std::vector<S>& src, std::vector<S>& dst, S c = S(1)) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += c * src[i];
}
}  // namespace detail

template <class S>
TensorT<S> add(const TensorT<S>& a, const TensorT<S>& b) {
  detail::same_shape(a, b, "add");
  TensorT<S> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
  detail::ensure_finite(out, "add");
  if (detail::any_tracked<S>({&a, &b})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a, &b}, [a, b, out]() mutable {
      if (a.tracked()) detail::axpy(out.grad(), a.grad());
      if (b.tracked()) detail::axpy(out.grad(), b.grad());
    });
  }
  return out;
}

template <class S>
TensorT<S> sub(const TensorT<S>& a, const TensorT<S>& b) {
  detail::same_shape(a, b, "sub");
  TensorT<S> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
  detail::ensure_finite(out, "sub");
  if (detail::any_tracked<S>({&a, &b})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a, &b}, [a, b, out]() mutable {
      if (a.tracked()) detail::axpy(out.grad(), a.grad());
      if (b.tracked()) detail::axpy(out.grad(), b.grad(), S(-1));
    });
  }
  return out;
}

template <class S>
TensorT<S> mul(const TensorT<S>& a, const TensorT<S>& b) {
  detail::same_shape(a, b, "mul");
  TensorT<S> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
  detail::ensure_finite(out, "mul");
  if (detail::any_tracked<S>({&a, &b})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a, &b}, [a, b, out]() mutable {
      const auto& g = out.grad();
      if (a.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) a.grad()[i] += g[i] * b.data()[i];
      if (b.tracked())
        for (std::size_t i = 0; i < g.size(); ++i) b.grad()[i] += g[i] * a.data()[i];
    });
  }
  return out;
}

template <class S>
TensorT<S> scale(const TensorT<S>& a, S c) {
  TensorT<S> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] * c;
  detail::ensure_finite(out, "scale");
  if (detail::any_tracked<S>({&a})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a}, [a, out, c]() mutable { detail::axpy(out.grad(), a.grad(), c); });
  }
  return out;
}

template <class S>
TensorT<S> add_scalar(const TensorT<S>& a, S c) {
  TensorT<S> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) out.data()[i] = a.data()[i] + c;
  detail::ensure_finite(out, "add_scalar");
  if (detail::any_tracked<S>({&a})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a}, [a, out]() mutable { detail::axpy(out.grad(), a.grad()); });
  }
  return out;
}

template <class S>
TensorT<S> relu(const TensorT<S>& a) {
  TensorT<S> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i)
    out.data()[i] = a.data()[i] > S(0) ? a.data()[i] : S(0);
  if (detail::any_tracked<S>({&a})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a}, [a, out]() mutable {
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        if (a.data()[i] > S(0)) a.grad()[i] += g[i];
    });
  }
  return out;
}

template <class S>
TensorT<S> sigmoid(const TensorT<S>& a) {
  TensorT<S> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) {
    S x = a.data()[i];
    out.data()[i] = x >= S(0) ? S(1) / (S(1) + std::exp(-x))
                              : std::exp(x) / (S(1) + std::exp(x));
  }
  detail::ensure_finite(out, "sigmoid");
  if (detail::any_tracked<S>({&a})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a}, [a, out]() mutable {
      const auto& g = out.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        S y = out.data()[i];
        a.grad()[i] += g[i] * y * (S(1) - y);
      }
    });
  }
  return out;
}

template <class S>
TensorT<S> square(const TensorT<S>& a) {
  return mul(a, a);
}

template <class S>
TensorT<S> sum_all(const TensorT<S>& a) {
  S acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.data()[i];
  TensorT<S> out = TensorT<S>::scalar(acc);
  detail::ensure_finite(out, "sum_all");
  if (detail::any_tracked<S>({&a})) {
    out.set_requires_grad();  // allocate grad before the closure captures out
    detail::attach(out, {&a}, [a, out]() mutable {
      S g = out.grad()[0];
      for (auto& v : a.grad()) v += g;
    });
  }
  return out;
}

template <class S>
TensorT<S> mean_all(const TensorT<S>& a) {
  return scale(sum_all(a), S(1) / static_cast<S>(a.size()));
}

// Fixed-order weighted sum of scalar terms.
template <class S>
TensorT<S> linear_combination(const std::vector<TensorT<S>>& terms,
                              const std::vector<S>& weights) {
  if (terms.size() != weights.size())
    throw std::invalid_argument("linear_combination: length mismatch");
  S acc = 0;
  bool tracked = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (terms[i].size() != 1)
      throw std::invalid_argument("linear_combination: non-scalar term");
    acc += weights[i] * terms[i].item();
    tracked = tracked || terms[i].tracked();
  }
  TensorT<S> out = TensorT<S>::scalar(acc);
  detail::ensure_finite(out, "linear_combination");
  if (detail::grad_mode() && tracked) {
    std::vector<const TensorT<S>*> ptrs;
    for (auto& t : terms) ptrs.push_back(&t);
    out.set_requires_grad();
    auto node = std::make_shared<detail::TapeNode<S>>();
    node->seq = detail::next_seq();
    node->out_grad = out.grad_;
    for (auto& t : terms)
      if (t.node_) node->parents.push_back(t.node_);
    auto terms_copy = terms;
    auto w = weights;
    auto og = out.grad_;
    node->backprop = [terms_copy, w, og]() mutable {
      S g = (*og)[0];
      for (std::size_t i = 0; i < terms_copy.size(); ++i)
        if (terms_copy[i].tracked()) terms_copy[i].grad()[0] += g * w[i];
    };
    out.node_ = node;
  }
  return out;
}

// ---------------------------------------------------------------------------
// random init

template <class S>
TensorT<S> uniform_tensor(std::mt19937_64& rng, Shape shape, S lo, S hi) {
  TensorT<S> t(std::move(shape));
  std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t.values()) v = static_cast<S>(d(rng));
  return t;
}

template <class S>
TensorT<S> normal_tensor(std::mt19937_64& rng, Shape shape, S mean = 0, S stddev = 1) {
  TensorT<S> t(std::move(shape));
  std::normal_distribution<double> d(static_cast<double>(mean), static_cast<double>(stddev));
  for (auto& v : t.values()) v = static_cast<S>(d(rng));
  return t;
}

// ---------------------------------------------------------------------------
// gradient verification

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  std::int64_t coords_checked = 0;
  std::int64_t coords_skipped = 0;  // under the noise floor or astride a kink
  std::int64_t worst_param = -1;
  std::int64_t worst_index = -1;
};

// Difference-quotient check of tape gradients using the fourth-order
// five-point stencil (-f(x+2e) + 8 f(x+e) - 8 f(x-e) + f(x-2e)) / (12 e),
// whose truncation error is O(e^4) so the step can stay large enough that
// float64 roundoff on f is negligible. `f` must rebuild its graph on every
// call. Checks up to `max_coords_per_param` randomly chosen entries per
// parameter (all entries when 0). Relative error uses max(|a|,|b|,1e-8) as
// denominator; coordinates where both sides fall below `abs_floor` sit under
// the noise floor of difference quotients and are skipped.
//
// For piecewise-smooth objectives (ReLU, nearest-neighbour losses) the
// difference quotient is meaningless at a derivative jump. With
// kink_ratio > 0 a coordinate is skipped when a second-difference rate
// |f(x+h) - 2 f(x) + f(x-h)| / (2 h), taken at h = e and h = 2e, exceeds
// kink_ratio times the gradient scale: at a smooth point that rate is
// O(|f''| h), at a kink it is half the derivative jump, so the test stays
// sharp wherever a quotient is valid.
template <class S>
FiniteDiffReport finite_diff_check(const std::function<TensorT<S>()>& f,
                                   std::vector<TensorT<S>> params, S eps,
                                   std::int64_t max_coords_per_param = 0,
                                   std::uint64_t seed = 0,
                                   double abs_floor = 1e-7,
                                   double kink_ratio = 0.0) {
  if (!(eps > S(0))) throw std::invalid_argument("finite_diff_check: eps must be > 0");
  for (auto& p : params) {
    // `params` holds handle copies; tracking set here would not reach the
    // handles captured inside f, so the caller must track them up front.
    if (!p.tracked())
      throw std::invalid_argument("finite_diff_check: params must already be tracked");
    p.zero_grad();
  }
  TensorT<S> loss = f();
  const double f0 = static_cast<double>(loss.item());
  if (!std::isfinite(f0)) throw std::runtime_error("finite_diff_check: non-finite objective");
  backward(loss);
  std::vector<std::vector<S>> analytic;
  for (auto& p : params) analytic.push_back(p.grad());

  std::mt19937_64 rng(seed);
  FiniteDiffReport rep;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    std::vector<std::int64_t> idx(static_cast<std::size_t>(p.size()));
    std::iota(idx.begin(), idx.end(), 0);
    if (max_coords_per_param > 0 &&
        static_cast<std::int64_t>(idx.size()) > max_coords_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(static_cast<std::size_t>(max_coords_per_param));
    }
    for (auto i : idx) {
      S saved = p.data()[i];
      auto eval_at = [&](S x) {
        NoGrad ng;
        p.data()[i] = x;
        return static_cast<double>(f().item());
      };
      const double fp2 = eval_at(saved + S(2) * eps);
      const double fp = eval_at(saved + eps);
      const double fm = eval_at(saved - eps);
      const double fm2 = eval_at(saved - S(2) * eps);
      p.data()[i] = saved;
      const double e = static_cast<double>(eps);
      double num = (-fp2 + 8.0 * fp - 8.0 * fm + fm2) / (12.0 * e);
      double ana = static_cast<double>(analytic[pi][static_cast<std::size_t>(i)]);
      if (std::abs(num) < abs_floor && std::abs(ana) < abs_floor) {
        ++rep.coords_skipped;
        continue;
      }
      double denom = std::max({std::abs(num), std::abs(ana), 1e-8});
      if (kink_ratio > 0.0) {
        const double inner = std::abs(fp - 2.0 * f0 + fm) / (2.0 * e);
        const double outer = std::abs(fp2 - 2.0 * f0 + fm2) / (4.0 * e);
        if (std::max(inner, outer) > kink_ratio * denom) {
          ++rep.coords_skipped;
          continue;
        }
      }
      ++rep.coords_checked;
      double err = std::abs(num - ana) / denom;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_param = static_cast<std::int64_t>(pi);
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

}  // namespace localbins
