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

#include "serforge/tensor.h"

#include <cmath>
#include <sstream>

#include "serforge/error.h"

namespace serforge {

std::string ShapeString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t ShapeSize(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) Fail(ErrorKind::kShape, "negative dimension in shape " + ShapeString(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : Tensor(Adopt{}, std::move(shape), Storage(values.begin(), values.end())) {}

template <typename T>
Tensor<T>::Tensor(Adopt, Shape shape, Storage values)
    : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != ShapeSize(shape_)) {
    Fail(ErrorKind::kShape, "tensor of shape " + ShapeString(shape_) + " given " +
                                std::to_string(data_.size()) + " values");
  }
}

template <typename T>
int Tensor<T>::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    Fail(ErrorKind::kShape, "axis out of range for shape " + ShapeString(shape_));
  }
  return shape_[axis];
}

template <typename T>
int Tensor<T>::rows() const {
  if (shape_.empty()) return 1;
  int r = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
  return r;
}

template <typename T>
int Tensor<T>::cols() const {
  return shape_.empty() ? 1 : shape_.back();
}

template <typename T>
Tensor<T> Tensor<T>::Reshaped(Shape shape) const {
  if (ShapeSize(shape) != data_.size()) {
    Fail(ErrorKind::kShape,
         "cannot reshape " + ShapeString(shape_) + " to " + ShapeString(shape));
  }
  return Tensor(Adopt{}, std::move(shape), data_);
}

template <typename T>
void Tensor<T>::Fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::AllFinite() const {
  for (T v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace serforge
