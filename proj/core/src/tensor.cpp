#include "heintfl/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace heintfl {

Tensor::Tensor(std::vector<int> s, std::vector<double> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (element_count(shape) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("Tensor: shape does not match value count");
  }
}

Tensor Tensor::zeros(const std::vector<int>& shape) {
  Tensor t;
  t.shape = shape;
  t.values.assign(static_cast<std::size_t>(element_count(shape)), 0.0);
  return t;
}

std::int64_t Tensor::element_count(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("Tensor: shape entries must be positive");
    n *= d;
  }
  return n;
}

void Tensor::validate() const {
  if (element_count(shape) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("Tensor: shape does not match value count");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("Tensor: non-finite value");
  }
}

}  // namespace heintfl
