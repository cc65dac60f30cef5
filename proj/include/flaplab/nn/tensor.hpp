#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "flaplab/error.hpp"

namespace flaplab::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += 'x';
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

// Dense row-major array of doubles. Image tensors are laid out as
// channels x height x width.
struct Tensor {
  Shape dims;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape d) : dims(std::move(d)), data(element_count(dims), 0.0) {}
  Tensor(Shape d, std::vector<double> values) : dims(std::move(d)), data(std::move(values)) {
    if (data.size() != element_count(dims))
      throw DomainError("tensor data length does not match shape " + to_string(dims));
  }

  std::size_t size() const noexcept { return data.size(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace flaplab::nn
