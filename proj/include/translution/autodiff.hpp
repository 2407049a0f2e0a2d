#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "translution/tensor.hpp"

namespace translution {

template <typename T>
class GradSink;

/// One recorded operation. Nodes form a DAG ordered by a monotonically
/// increasing creation sequence; backward visits them in reverse order.
template <typename T>
struct Node {
  std::uint64_t seq = 0;
  std::string op;
  int param_id = -1;
  std::vector<Tensor<T>> parents;
  std::function<void(const Tensor<T>& grad_out, GradSink<T>& sink)> backward;
};

namespace detail {
std::uint64_t next_node_seq();
bool& grad_enabled_flag();
int next_param_id();
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Disables op recording for its lifetime (inference / memory benchmarks).
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
  ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
std::shared_ptr<Node<T>> make_node(std::string op, std::vector<Tensor<T>> parents,
                                   std::function<void(const Tensor<T>&, GradSink<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->seq = detail::next_node_seq();
  n->op = std::move(op);
  n->parents = std::move(parents);
  n->backward = std::move(backward);
  return n;
}

template <typename T>
bool any_tracked(std::initializer_list<const Tensor<T>*> ts) {
  if (!grad_enabled()) return false;
  for (const Tensor<T>* t : ts)
    if (t && t->node) return true;
  return false;
}

/// A named trainable tensor. `use()` yields a value tagged with a leaf node so
/// ops consuming it get recorded; gradients are collected per parameter id.
template <typename T>
class Param {
 public:
  Param(std::string name, Tensor<T> value)
      : id_(detail::next_param_id()), name_(std::move(name)), value_(std::move(value)) {}

  Tensor<T> use() const {
    Tensor<T> t = value_;
    if (grad_enabled()) {
      t.node = make_node<T>("param:" + name_, {}, nullptr);
      t.node->param_id = id_;
    }
    return t;
  }

  int id() const { return id_; }
  const std::string& name() const { return name_; }
  Tensor<T>& value() { return value_; }
  const Tensor<T>& value() const { return value_; }

 private:
  int id_;
  std::string name_;
  Tensor<T> value_;
};

/// Per-node gradient accumulator used while walking the tape.
template <typename T>
class GradSink {
 public:
  void add(const Tensor<T>& parent, const Tensor<T>& grad) {
    if (!parent.node) return;
    auto it = grads_.find(parent.node.get());
    if (it == grads_.end()) {
      grads_.emplace(parent.node.get(), grad.clone());
    } else {
      Tensor<T>& acc = it->second;
      if (!acc.same_shape(grad)) throw ShapeError(shapes_msg("grad accumulate", acc.shape_str(), grad.shape_str()));
      T* a = acc.data();
      const T* g = grad.data();
      for (std::size_t i = 0; i < acc.size(); ++i) a[i] += g[i];
    }
  }

  Tensor<T>* find(const Node<T>* n) {
    auto it = grads_.find(n);
    return it == grads_.end() ? nullptr : &it->second;
  }

  void erase(const Node<T>* n) { grads_.erase(n); }

 private:
  std::unordered_map<const Node<T>*, Tensor<T>> grads_;
};

/// Gradient table keyed by parameter id; parameters not reached by the loss
/// get zero gradients of matching shape.
template <typename T>
struct GradTable {
  std::unordered_map<int, Tensor<T>> by_param;

  const Tensor<T>& at(const Param<T>& p) const { return by_param.at(p.id()); }
};

template <typename T>
GradTable<T> backward(const Tensor<T>& loss, std::span<Param<T>* const> params);

template <typename T>
GradTable<T> backward(const Tensor<T>& loss, const std::vector<Param<T>*>& params) {
  return backward(loss, std::span<Param<T>* const>(params.data(), params.size()));
}

/// Central-difference gradient verification. Evaluates `f` (which must close
/// over `params`) with each parameter element perturbed by ±eps and compares
/// against reverse-mode gradients. Returns max over elements of
/// |g_ad - g_fd| / (|g_fd| + 1e-8).
double finite_diff_check(const std::function<Tensor<double>()>& f,
                         const std::vector<Param<double>*>& params, double eps = 1e-5);

}  // namespace translution
