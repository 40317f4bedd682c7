#ifndef PSCBM_MATRIX_H_
#define PSCBM_MATRIX_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace pscbm {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) {
    return {data_.data() + r * cols_, cols_};
  }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  // Copies of the listed rows / columns, in the listed order.
  Matrix select_rows(std::span<const std::size_t> idx) const;
  Matrix select_cols(std::span<const std::size_t> idx) const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Dense row-major 0/1 matrix.
class BinaryMatrix {
 public:
  BinaryMatrix() = default;
  BinaryMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::uint8_t operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  void set(std::size_t r, std::size_t c, bool v) {
    data_[r * cols_ + c] = v ? 1 : 0;
  }
  std::span<const std::uint8_t> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }
  std::size_t count_ones() const;

  bool operator==(const BinaryMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> data_;
};

double dot(std::span<const double> a, std::span<const double> b);

// Runs fn(begin, end) over fixed-size row tiles of [0, n). Tiles are handed
// out to at most `threads` workers; fn must write disjoint outputs.
void for_each_tile(std::size_t n, std::size_t tile, unsigned threads,
                   void (*fn)(std::size_t, std::size_t, void*), void* ctx);

template <typename F>
void parallel_tiles(std::size_t n, std::size_t tile, unsigned threads, F&& f) {
  for_each_tile(
      n, tile, threads,
      [](std::size_t b, std::size_t e, void* ctx) {
        (*static_cast<F*>(ctx))(b, e);
      },
      &f);
}

}  // namespace pscbm

#endif  // PSCBM_MATRIX_H_
