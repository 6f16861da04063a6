#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

namespace advpatch {

// Dense row-major tensor of doubles. Just enough for the victim CNN.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(numel(), fill);
  }

  std::size_t numel() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }

  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

}  // namespace advpatch
