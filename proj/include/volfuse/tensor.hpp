// Minimal dense row-major tensor. Axis order for volumes is [N, C, Z, Y, X]
// with X fastest, matching VolumeGrid's voxel layout so channel copies are
// straight memcpys.
#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "volfuse/errors.hpp"

namespace volfuse {

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)), data(numel(shape), T(0)) {}
  Tensor(std::initializer_list<std::size_t> s)
      : Tensor(std::vector<std::size_t>(s)) {}

  static std::size_t numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
  }

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      out.data[i] = static_cast<U>(data[i]);
    }
    return out;
  }
};

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<std::size_t>& shape,
                   const std::string& what) {
  if (t.shape != shape) {
    std::string got = "(", want = "(";
    for (std::size_t d : t.shape) got += std::to_string(d) + ",";
    for (std::size_t d : shape) want += std::to_string(d) + ",";
    throw ShapeError(what + ": expected shape " + want + ") but got " + got + ")");
  }
}

}  // namespace volfuse
