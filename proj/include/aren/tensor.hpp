#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "aren/errors.hpp"

namespace aren {

// Row-major shape, rank 1..4. Images and feature maps are NHWC.
class Shape {
 public:
  Shape() = default;

  Shape(std::initializer_list<int64_t> dims) {
    if (dims.size() < 1 || dims.size() > 4)
      throw ContractError("shape rank must be 1..4, got " + std::to_string(dims.size()));
    rank_ = static_cast<int>(dims.size());
    int i = 0;
    for (int64_t d : dims) {
      if (d <= 0) throw ContractError("shape dims must be positive, got " + str_of(dims));
      d_[i++] = d;
    }
  }

  int rank() const { return rank_; }

  int64_t operator[](int i) const {
    if (i < 0 || i >= rank_) throw ContractError("shape axis " + std::to_string(i) + " out of range for rank " + std::to_string(rank_));
    return d_[i];
  }

  int64_t numel() const {
    int64_t n = 1;
    for (int i = 0; i < rank_; ++i) n *= d_[i];
    return rank_ == 0 ? 0 : n;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (d_[i] != o.d_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << d_[i];
    os << ')';
    return os.str();
  }

 private:
  static std::string str_of(std::initializer_list<int64_t> dims) {
    std::ostringstream os;
    os << '(';
    bool first = true;
    for (int64_t d : dims) {
      os << (first ? "" : ",") << d;
      first = false;
    }
    os << ')';
    return os.str();
  }

  std::array<int64_t, 4> d_{};
  int rank_ = 0;
};

namespace detail {

// One tape node. `backward` reads this node's grad and accumulates into the
// parents' grads; it is only installed when some parent requires gradients.
template <typename T>
struct Node {
  // Live-node census. Graphs must be released once the last output handle
  // drops; tests pin this by checking the count returns to baseline after
  // a train step. A stuck count means a node owns itself through a closure.
  static inline std::atomic<long> live{0};
  Node() { live.fetch_add(1, std::memory_order_relaxed); }
  ~Node() { live.fetch_sub(1, std::memory_order_relaxed); }
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
  }
};

}  // namespace detail

// Value handle over a shared tape node. Copies are cheap and alias the node.
// Graphs are released when the last handle to the output goes away.
template <typename T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false) {
    return filled(s, T(0), requires_grad);
  }

  static Tensor filled(const Shape& s, T value, bool requires_grad = false) {
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = s;
    t.n_->data.assign(static_cast<size_t>(s.numel()), value);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from_data(const Shape& s, std::vector<T> values, bool requires_grad = false) {
    if (static_cast<int64_t>(values.size()) != s.numel())
      throw ContractError("from_data: " + std::to_string(values.size()) + " values for shape " + s.str());
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = s;
    t.n_->data = std::move(values);
    t.n_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    return from_data(Shape{1}, {value}, requires_grad);
  }

  // Fresh node for an op result. requires_grad is derived from the parents.
  static Tensor op_result(const char* op, const Shape& s, std::vector<std::shared_ptr<Node>> parents) {
    Tensor t;
    t.n_ = std::make_shared<Node>();
    t.n_->shape = s;
    t.n_->data.resize(static_cast<size_t>(s.numel()));
    t.n_->op = op;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    t.n_->requires_grad = rg;
    t.n_->parents = std::move(parents);
    return t;
  }

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return node_ref().shape; }
  int64_t numel() const { return node_ref().shape.numel(); }

  T* data() { return node_ref().data.data(); }
  const T* data() const { return node_ref().data.data(); }
  std::vector<T>& vec() { return node_ref().data; }
  const std::vector<T>& vec() const { return node_ref().data; }

  bool requires_grad() const { return node_ref().requires_grad; }
  void set_requires_grad(bool rg) { node_ref().requires_grad = rg; }

  bool has_grad() const { return defined() && !n_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (!has_grad()) throw ContractError("grad requested but none accumulated (op=" + std::string(node_ref().op) + ")");
    return n_->grad;
  }
  std::vector<T>& grad_mut() {
    node_ref().ensure_grad();
    return n_->grad;
  }
  void zero_grad() { node_ref().grad.clear(); }

  const char* op() const { return node_ref().op; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape().str());
    return n_->data[0];
  }

  // Flat multi-index accessor for tests; row-major.
  T at(std::initializer_list<int64_t> idx) const {
    const Shape& s = shape();
    if (static_cast<int>(idx.size()) != s.rank())
      throw ContractError("at(): index rank mismatch for shape " + s.str());
    int64_t flat = 0;
    int i = 0;
    for (int64_t v : idx) {
      if (v < 0 || v >= s[i]) throw ContractError("at(): index out of range for shape " + s.str());
      flat = flat * s[i] + v;
      ++i;
    }
    return n_->data[static_cast<size_t>(flat)];
  }

  // Copy of the data with no graph attached.
  Tensor detach() const {
    Tensor t = from_data(shape(), n_->data);
    return t;
  }

  void assert_finite(const char* where) const {
    const auto& d = node_ref().data;
    for (size_t i = 0; i < d.size(); ++i) {
      if (!std::isfinite(static_cast<double>(d[i])))
        throw NumericError(std::string(where) + ": non-finite value at flat index " + std::to_string(i));
    }
  }

  // Reverse pass from a scalar. Seeds d(out)/d(out)=1, then walks the tape in
  // reverse topological order. Gradients accumulate across uses.
  void backward() {
    if (numel() != 1) throw ContractError("backward() requires a scalar, got shape " + shape().str());
    if (!requires_grad()) throw ContractError("backward() on a tensor that requires no gradients");
    std::vector<Node*> order = topo();
    n_->ensure_grad();
    n_->grad[0] = T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* nd = *it;
      if (nd->backward && !nd->grad.empty()) nd->backward(*nd);
    }
  }

  // Op names of the subgraph in deterministic topological order (inputs
  // before consumers, parents visited in recorded order). Structure probes
  // for wiring tests.
  std::vector<std::string> graph_ops() const {
    std::vector<std::string> names;
    for (Node* nd : topo()) names.emplace_back(nd->op);
    return names;
  }

  std::shared_ptr<Node> node() const { return n_; }

 private:
  Node& node_ref() const {
    if (!n_) throw ContractError("use of undefined tensor");
    return *n_;
  }

  std::vector<Node*> topo() const {
    std::vector<Node*> order;
    std::unordered_set<Node*> done;
    // Iterative post-order; pair.second marks "children handled".
    std::vector<std::pair<Node*, bool>> stack;
    stack.push_back({n_.get(), false});
    while (!stack.empty()) {
      auto [nd, expanded] = stack.back();
      stack.pop_back();
      if (expanded) {
        order.push_back(nd);
        continue;
      }
      if (done.count(nd)) continue;
      done.insert(nd);
      stack.push_back({nd, true});
      // Push parents reversed so they pop (and finish) in recorded order.
      for (auto it = nd->parents.rbegin(); it != nd->parents.rend(); ++it)
        stack.push_back({it->get(), false});
    }
    return order;
  }

  std::shared_ptr<Node> n_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace aren
