// Dense row-major tensors, rank <= 4.

#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eegatt {

inline int64_t numel_of(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

template <typename S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shp, S fill = S(0))
      : shape(std::move(shp)), data(static_cast<size_t>(numel_of(shape)), fill) {
    for (int64_t d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor extent must be positive, got shape " + shape_str(shape));
    }
    if (shape.size() > 4) throw std::invalid_argument("tensor rank > 4 not supported: " + shape_str(shape));
  }
  Tensor(std::vector<int64_t> shp, std::vector<S> values) : shape(std::move(shp)), data(std::move(values)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  S& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  const S& at(int64_t i) const { return data[static_cast<size_t>(i)]; }

  template <typename T2>
  Tensor<T2> cast() const {
    Tensor<T2> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T2>(data[i]);
    return out;
  }
};

// Row-major strides, padded on the left to rank 4 with broadcast-aware zeros.
struct Strides4 {
  int64_t dim[4] = {1, 1, 1, 1};
  int64_t str[4] = {0, 0, 0, 0};
};

inline Strides4 strides_for(const std::vector<int64_t>& shape, const int64_t out_dim[4]) {
  Strides4 s;
  int off = 4 - static_cast<int>(shape.size());
  int64_t run = 1;
  for (int i = 3; i >= off; --i) {
    s.dim[i] = shape[static_cast<size_t>(i - off)];
    s.str[i] = run;
    run *= s.dim[i];
  }
  for (int i = 0; i < 4; ++i) {
    if (s.dim[i] == 1 && out_dim[i] != 1) s.str[i] = 0;  // broadcast axis
  }
  return s;
}

}  // namespace eegatt
