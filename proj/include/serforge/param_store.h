// Copyright 2026 The ser-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SERFORGE_PARAM_STORE_H_
#define SERFORGE_PARAM_STORE_H_

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "serforge/autograd.h"
#include "serforge/tensor.h"

namespace serforge {

// Named parameters in insertion order. Frozen entries (trainable == false)
// are never touched by the optimizer.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool trainable = true;
    bool has_grad = false;
  };

  Entry& Add(std::string name, Tensor<T> value, bool trainable = true);

  bool Contains(std::string_view name) const;
  Entry& at(std::string_view name);
  const Entry& at(std::string_view name) const;
  const Tensor<T>& value(std::string_view name) const { return at(name).value; }

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

  std::size_t ParameterCount() const;
  std::size_t TrainableCount() const;
  // Parameters whose name starts with `prefix`.
  std::size_t ParameterCount(std::string_view prefix) const;

  void ZeroGrad();

  template <typename U>
  ParamStore<U> Cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.Add(e.name, e.value.template Cast<U>(), e.trainable);
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Per-forward graph leaves for a store. Trainable entries become gradient
// leaves when `track_grads` is set; everything else is a constant.
template <typename T>
class Bindings {
 public:
  static Bindings FromStore(const ParamStore<T>& store, bool track_grads);

  const Var<T>& operator[](std::string_view name) const;
  bool Contains(std::string_view name) const;

  // Adds every leaf gradient into the matching store entry, times `scale`.
  void AccumulateInto(ParamStore<T>& store, T scale = T(1)) const;

 private:
  std::vector<std::pair<std::string, Var<T>>> vars_;
  std::unordered_map<std::string, std::size_t> index_;
};

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class Bindings<float>;
extern template class Bindings<double>;

}  // namespace serforge

#endif  // SERFORGE_PARAM_STORE_H_
