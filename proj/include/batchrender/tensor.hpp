#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "batchrender/math.hpp"

namespace batchrender {

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) { return fmt::format("{}", fmt::join(shape, "x")); }

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major tensor of reals. The library only ever replaces tensors
// wholesale, so this is a plain value type.
struct Tensor {
  Shape shape;
  std::vector<real> values;

  Tensor() = default;
  Tensor(Shape s, real fill = 0) : shape(std::move(s)), values(shape_volume(shape), fill) {}
  Tensor(Shape s, std::vector<real> v) : shape(std::move(s)), values(std::move(v)) {
    if (values.size() != shape_volume(shape))
      throw ShapeError(fmt::format("tensor of shape {} needs {} values, got {}",
                                   shape_string(shape), shape_volume(shape), values.size()));
  }

  std::size_t size() const { return values.size(); }
  // Last dimension is treated as the row width.
  std::size_t row_width() const { return shape.empty() ? 1 : shape.back(); }
  const real* row(std::size_t r) const { return values.data() + r * row_width(); }

  bool operator==(const Tensor&) const = default;
};

}  // namespace batchrender
