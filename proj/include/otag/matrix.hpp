#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace otag {

// Dense row-major matrix. Small enough on purpose: everything this project
// touches fits comfortably in memory and the kernels want contiguous rows.
template <typename T>
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Mat from_rows(std::size_t rows, std::size_t cols, std::vector<T> data) {
    if (data.size() != rows * cols)
      throw std::invalid_argument("Mat::from_rows: size mismatch");
    Mat m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    return m;
  }

  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool operator==(const Mat&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

using MatD = Mat<double>;
using MatF = Mat<float>;
using MatU8 = Mat<unsigned char>;

}  // namespace otag
