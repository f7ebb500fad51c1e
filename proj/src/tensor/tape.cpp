#include "stereoadapt/tensor/tape.hpp"

#include <optional>
#include <string>

namespace stereoadapt::tensor {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, -1});
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(ParamId id, Tensor<T> value) {
  if (id < 0) throw Error(ErrorCode::kInvalidArgument, "parameter id must be non-negative");
  if (has_parameter(id)) {
    throw Error(ErrorCode::kInvalidArgument, "parameter " + std::to_string(id) + " registered twice on one tape");
  }
  nodes_.push_back(Node{"parameter", std::move(value), {}, {}, id});
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward) {
  Node node{op, std::move(value), {}, std::move(backward), -1};
  node.inputs.reserve(inputs.size());
  for (const auto& v : inputs) {
    if (&v.tape() != this) throw Error(ErrorCode::kInvalidArgument, "input recorded on a different tape");
    node.inputs.push_back(v.id());
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
}

template <typename T>
bool Tape<T>::has_parameter(ParamId id) const {
  for (const auto& n : nodes_) {
    if (n.param == id) return true;
  }
  return false;
}

template <typename T>
std::vector<ParamId> Tape<T>::parameters() const {
  std::vector<ParamId> out;
  for (const auto& n : nodes_) {
    if (n.param >= 0) out.push_back(n.param);
  }
  return out;
}

template <typename T>
GradMap<T> Tape<T>::backward(Var<T> loss, const std::set<ParamId>& trainable) const {
  last_visits_ = 0;
  if (&loss.tape() != this) throw Error(ErrorCode::kInvalidArgument, "loss belongs to a different tape");
  const Tensor<T>& loss_value = value(loss.id());
  if (loss_value.size() != 1) throw Error(ErrorCode::kShapeMismatch, "backward() needs a scalar loss");

  GradMap<T> result;
  if (trainable.empty()) return result;

  std::map<ParamId, int> param_node;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].param >= 0) param_node[nodes_[i].param] = static_cast<int>(i);
  }
  for (ParamId id : trainable) {
    auto it = param_node.find(id);
    if (it == param_node.end()) {
      throw Error(ErrorCode::kUnknownParameter, "parameter " + std::to_string(id) + " is not on the tape");
    }
    result.emplace(id, Tensor<T>(nodes_[static_cast<std::size_t>(it->second)].value.shape()));
  }

  const int root = loss.id();
  std::vector<char> needs(static_cast<std::size_t>(root) + 1, 0);
  for (int i = 0; i <= root; ++i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.param >= 0) {
      needs[static_cast<std::size_t>(i)] = trainable.count(n.param) ? 1 : 0;
      continue;
    }
    for (int in : n.inputs) {
      if (needs[static_cast<std::size_t>(in)]) {
        needs[static_cast<std::size_t>(i)] = 1;
        break;
      }
    }
  }
  if (!needs[static_cast<std::size_t>(root)]) return result;

  std::vector<std::optional<Tensor<T>>> grads(static_cast<std::size_t>(root) + 1);
  grads[static_cast<std::size_t>(root)] = Tensor<T>(loss_value.shape(), T(1));

  std::vector<const Tensor<T>*> in_values;
  std::vector<Tensor<T>*> in_grads;
  for (int i = root; i >= 0; --i) {
    const auto ui = static_cast<std::size_t>(i);
    if (!needs[ui] || !grads[ui]) continue;
    const Node& n = nodes_[ui];
    if (n.param >= 0) {
      result[n.param] = std::move(*grads[ui]);
      grads[ui].reset();
      continue;
    }
    if (!n.backward) continue;

    in_values.clear();
    in_grads.clear();
    for (int in : n.inputs) {
      const auto uin = static_cast<std::size_t>(in);
      in_values.push_back(&nodes_[uin].value);
      if (needs[uin]) {
        if (!grads[uin]) grads[uin] = Tensor<T>(nodes_[uin].value.shape());
        in_grads.push_back(&*grads[uin]);
      } else {
        in_grads.push_back(nullptr);
      }
    }
    n.backward(BackwardArgs<T>{*grads[ui], n.value, in_values, in_grads});
    ++last_visits_;
    grads[ui].reset();
  }
  return result;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace stereoadapt::tensor
