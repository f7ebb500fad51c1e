#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string_view>
#include <vector>

#include "stereoadapt/tensor/tensor.hpp"

namespace stereoadapt::tensor {

using ParamId = int;

template <typename T>
using GradMap = std::map<ParamId, Tensor<T>>;

template <typename T>
class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape<T>& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

/// Arguments handed to a node's backward function. `input_grads[i]` is null
/// when input i cannot reach any requested parameter; otherwise the function
/// accumulates (+=) into it.
template <typename T>
struct BackwardArgs {
  const Tensor<T>& grad;
  const Tensor<T>& output;
  std::span<const Tensor<T>* const> inputs;
  std::span<Tensor<T>* const> input_grads;
};

template <typename T>
using BackwardFn = std::function<void(const BackwardArgs<T>&)>;

/// Single-owner record of one forward pass. Nodes are appended in
/// evaluation order, so the graph is acyclic by construction and reverse
/// creation order is a valid topological order for the backward sweep.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  Var<T> parameter(ParamId id, Tensor<T> value);
  Var<T> record(std::string_view op, Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward);

  const Tensor<T>& value(int id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
  std::string_view op(int id) const { return nodes_.at(static_cast<std::size_t>(id)).op; }
  std::size_t size() const { return nodes_.size(); }
  bool has_parameter(ParamId id) const;
  std::vector<ParamId> parameters() const;

  /// Reverse-mode sweep from a scalar `loss`. Returns gradients for exactly
  /// the requested parameters. Nodes that cannot reach any requested
  /// parameter are skipped entirely.
  GradMap<T> backward(Var<T> loss, const std::set<ParamId>& trainable) const;

  /// Number of node backward functions invoked by the last backward().
  std::size_t last_visit_count() const { return last_visits_; }

 private:
  struct Node {
    std::string_view op;
    Tensor<T> value;
    std::vector<int> inputs;
    BackwardFn<T> backward;
    ParamId param = -1;
  };

  std::vector<Node> nodes_;
  mutable std::size_t last_visits_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
GradMap<T> backward(Var<T> loss, const std::set<ParamId>& trainable) {
  return loss.tape().backward(loss, trainable);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace stereoadapt::tensor
