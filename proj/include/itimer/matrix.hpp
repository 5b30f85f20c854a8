#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace itimer {

// Row-major dense matrix of doubles. Scalars are 1x1, row vectors 1xn.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  explicit Matrix(Shape s, double fill = 0.0) : Matrix(s.rows, s.cols, fill) {}

  static Matrix scalar(double v) { return Matrix(1, 1, v); }
  static Matrix row(std::vector<double> v) {
    const auto n = v.size();
    return Matrix(1, n, std::move(v));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& vec() const { return data_; }

  std::span<const double> row_span(std::size_t r) const {
    return {data_.data() + r * shape_.cols, shape_.cols};
  }

  double item() const;

  bool operator==(const Matrix&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Binary observation mask, stored as bytes with values 0 or 1.
class Mask {
 public:
  Mask() = default;
  Mask(std::size_t rows, std::size_t cols, std::uint8_t fill = 0)
      : shape_{rows, cols}, data_(rows * cols, fill) {}
  explicit Mask(Shape s, std::uint8_t fill = 0) : Mask(s.rows, s.cols, fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }

  std::uint8_t& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  std::uint8_t operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  std::uint8_t operator[](std::size_t i) const { return data_[i]; }
  std::uint8_t& operator[](std::size_t i) { return data_[i]; }

  std::span<const std::uint8_t> data() const { return data_; }
  std::size_t count() const;

  bool operator==(const Mask&) const = default;

 private:
  Shape shape_;
  std::vector<std::uint8_t> data_;
};

}  // namespace itimer
