#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stereoadapt/tensor/tape.hpp"

namespace stereoadapt::tensor {

/// Named trainable tensors. Ids are dense indices in insertion order.
template <typename T>
class ParamStore {
 public:
  ParamId add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw Error(ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
    const auto id = static_cast<ParamId>(names_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    index_[name] = id;
    return id;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(ParamId id) const { return names_.at(static_cast<std::size_t>(id)); }
  Tensor<T>& value(ParamId id) { return values_.at(static_cast<std::size_t>(id)); }
  const Tensor<T>& value(ParamId id) const { return values_.at(static_cast<std::size_t>(id)); }

  std::optional<ParamId> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  ParamId id(const std::string& name) const {
    auto found = find(name);
    if (!found) throw Error(ErrorCode::kUnknownParameter, "no parameter named " + name);
    return *found;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.size();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (std::size_t i = 0; i < names_.size(); ++i) out.add(names_[i], values_[i].template cast<U>());
    return out;
  }

  bool operator==(const ParamStore&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> values_;
  std::map<std::string, ParamId> index_;
};

}  // namespace stereoadapt::tensor
