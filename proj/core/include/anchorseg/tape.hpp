#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "anchorseg/tensor.hpp"

namespace anchorseg {

template <typename T>
class Tape;

/// Trainable tensor with its gradient accumulator and AdamW moments.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m;
  Tensor<T> v;
  std::size_t step = 0;

  Parameter(std::string n, Tensor<T> init)
      : name(std::move(n)),
        value(std::move(init)),
        grad(value.shape()),
        m(value.shape()),
        v(value.shape()) {}

  void zero_grad() { grad.fill(T(0)); }
};

/// Owns parameters at stable addresses, in registration order.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, Tensor<T> init);
  Parameter<T>* find(const std::string& name);
  void zero_grad();

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::vector<Parameter<T>*> all();

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

/// Handle to a node on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  /// Gradient after backward; zeros when nothing flowed into this node.
  const Tensor<T>& grad() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
/// so every parent id is smaller than its child's id.
template <typename T>
class Tape {
 public:
  using NodeId = std::size_t;
  using BackwardFn = std::function<void(Tape&, NodeId)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> leaf(Tensor<T> value);
  /// Same parameter used twice maps to one node, so fan-out gradients sum.
  Var<T> param(Parameter<T>& p);
  Var<T> record(Tensor<T> value, std::vector<NodeId> parents, BackwardFn backward);

  const Tensor<T>& value(NodeId id) const { return nodes_[id].value; }
  const Tensor<T>& grad(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_[id].requires_grad; }
  const std::vector<NodeId>& parents(NodeId id) const { return nodes_[id].parents; }

  /// Gradient buffer for in-place accumulation; allocated zeroed on first use.
  Tensor<T>& grad_buffer(NodeId id);
  void accumulate(NodeId id, const Tensor<T>& g);

  /// Seeds d(loss)/d(loss) = 1, runs every recorded backward rule in reverse
  /// order and adds parameter-node gradients into Parameter::grad.
  void backward(Var<T> loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<NodeId> parents;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
  };

  // deque: appending never moves existing nodes, so value()/grad()
  // references stay valid while later ops are recorded.
  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, NodeId> param_nodes_;
  bool backward_done_ = false;
};

extern template struct Var<float>;
extern template struct Var<double>;
extern template class Tape<float>;
extern template class Tape<double>;
extern template class ParameterStore<float>;
extern template class ParameterStore<double>;

}  // namespace anchorseg
