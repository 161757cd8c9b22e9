#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "seedling/error.h"

namespace seedling {

// Dense row-major f32 tensor. product(shape) == data.size() always holds.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, float fill = 0.0f)
      : shape(std::move(dims)), data(element_count(shape), fill) {}
  Tensor(std::vector<std::size_t> dims, std::vector<float> values)
      : shape(std::move(dims)), data(std::move(values)) {
    if (data.size() != element_count(shape)) {
      throw ConfigError("tensor data length does not match its shape");
    }
  }

  static std::size_t element_count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }
  std::span<float> view() { return data; }
  std::span<const float> view() const { return data; }

  // Row `r` of a rank-2 tensor.
  std::span<float> row(std::size_t r) {
    return {data.data() + r * shape[1], shape[1]};
  }
  std::span<const float> row(std::size_t r) const {
    return {data.data() + r * shape[1], shape[1]};
  }

  void fill(float v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Tensor&) const = default;
};

}  // namespace seedling
