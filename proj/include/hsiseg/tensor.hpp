#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "hsiseg/error.hpp"

namespace hsiseg::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major tensor with up to four axes.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), T{}) { check_rank(); }
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    check_rank();
    if (data.size() != shape_size(shape)) {
      throw ShapeError("tensor payload of " + std::to_string(data.size()) + " values does not fill shape " +
                       to_string(shape));
    }
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape, std::vector<U>(data.begin(), data.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  void check_rank() const {
    if (shape.size() > 4) throw ShapeError("tensors have at most 4 axes, got " + to_string(shape));
  }
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;

  bool operator==(const NamedTensor&) const = default;
};

}  // namespace hsiseg::nn
