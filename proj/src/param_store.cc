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

#include "serforge/param_store.h"

#include "serforge/error.h"

namespace serforge {

template <typename T>
typename ParamStore<T>::Entry& ParamStore<T>::Add(std::string name, Tensor<T> value,
                                                  bool trainable) {
  if (index_.count(name)) Fail(ErrorKind::kConfig, "duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  Entry e;
  e.name = std::move(name);
  e.value = std::move(value);
  e.trainable = trainable;
  entries_.push_back(std::move(e));
  return entries_.back();
}

template <typename T>
bool ParamStore<T>::Contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

template <typename T>
typename ParamStore<T>::Entry& ParamStore<T>::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) Fail(ErrorKind::kConfig, "unknown parameter '" + std::string(name) + "'");
  return entries_[it->second];
}

template <typename T>
const typename ParamStore<T>::Entry& ParamStore<T>::at(std::string_view name) const {
  return const_cast<ParamStore*>(this)->at(name);
}

template <typename T>
std::size_t ParamStore<T>::ParameterCount() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

template <typename T>
std::size_t ParamStore<T>::TrainableCount() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.value.size();
  }
  return n;
}

template <typename T>
std::size_t ParamStore<T>::ParameterCount(std::string_view prefix) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (std::string_view(e.name).starts_with(prefix)) n += e.value.size();
  }
  return n;
}

template <typename T>
void ParamStore<T>::ZeroGrad() {
  for (auto& e : entries_) {
    if (e.grad.size() != e.value.size()) e.grad = Tensor<T>(e.value.shape());
    e.grad.Fill(T(0));
    e.has_grad = false;
  }
}

template <typename T>
Bindings<T> Bindings<T>::FromStore(const ParamStore<T>& store, bool track_grads) {
  Bindings b;
  b.vars_.reserve(store.size());
  for (const auto& e : store.entries()) {
    b.index_.emplace(e.name, b.vars_.size());
    b.vars_.emplace_back(e.name, track_grads && e.trainable ? Var<T>::Parameter(e.value)
                                                            : Var<T>::Constant(e.value));
  }
  return b;
}

template <typename T>
const Var<T>& Bindings<T>::operator[](std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) Fail(ErrorKind::kConfig, "model expects parameter '" + std::string(name) + "'");
  return vars_[it->second].second;
}

template <typename T>
bool Bindings<T>::Contains(std::string_view name) const {
  return index_.count(std::string(name)) > 0;
}

template <typename T>
void Bindings<T>::AccumulateInto(ParamStore<T>& store, T scale) const {
  for (const auto& [name, var] : vars_) {
    if (!var.requires_grad()) continue;
    auto& e = store.at(name);
    if (e.grad.size() != e.value.size()) e.grad = Tensor<T>(e.value.shape());
    const auto& g = var.grad();
    if (g.empty()) continue;
    e.has_grad = true;
    for (std::size_t i = 0; i < g.size(); ++i) e.grad[i] += scale * g[i];
  }
}

template class ParamStore<float>;
template class ParamStore<double>;
template class Bindings<float>;
template class Bindings<double>;

}  // namespace serforge
