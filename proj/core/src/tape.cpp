#include "anchorseg/tape.hpp"

namespace anchorseg {

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Tensor<T> init) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name '" + name + "'");
  params_.push_back(std::make_unique<Parameter<T>>(std::move(name), std::move(init)));
  return *params_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(const std::string& name) {
  for (auto& p : params_) {
    if (p->name == name) return p.get();
  }
  return nullptr;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

template <typename T>
std::vector<Parameter<T>*> ParameterStore<T>::all() {
  std::vector<Parameter<T>*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

template <typename T>
const Tensor<T>& Var<T>::grad() const {
  return tape->grad_buffer(id);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape->requires_grad(id);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<NodeId> parents, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (auto pid : parents) {
    if (pid >= nodes_.size()) throw ContractError("tape parent id out of range");
    n.requires_grad = n.requires_grad || nodes_[pid].requires_grad;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::grad(NodeId id) const {
  return nodes_[id].grad;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(NodeId id) {
  auto& n = nodes_[id];
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size()) {
    n.grad = Tensor<T>(n.value.shape());
  }
  return n.grad;
}

template <typename T>
void Tape<T>::accumulate(NodeId id, const Tensor<T>& g) {
  if (!nodes_[id].requires_grad) return;
  grad_buffer(id) += g;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw ContractError("loss does not belong to this tape");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(value(loss.id).shape()));
  }
  if (backward_done_) throw ContractError("backward already ran on this tape");
  backward_done_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss.id)[0] = T(1);
  for (NodeId i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) n.param->grad += n.grad;
  }
}

template struct Var<float>;
template struct Var<double>;
template class Tape<float>;
template class Tape<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace anchorseg
