#pragma once

#include <cstdint>
#include <vector>

namespace heintfl {

// Dense row-major tensor of doubles. Shape entries are positive;
// values.size() always equals the product of the shape.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> v);

  static Tensor zeros(const std::vector<int>& shape);
  static std::int64_t element_count(const std::vector<int>& shape);

  std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // Throws if any value is non-finite or any shape entry is non-positive.
  void validate() const;
};

}  // namespace heintfl
