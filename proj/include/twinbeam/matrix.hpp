#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace twinbeam {

// Dense row-major matrix of doubles. Pixel (0, 0) is the top-left corner.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const noexcept
    {
        return std::span<const double>(data_).subspan(r * cols_, cols_);
    }

    bool same_shape(const Matrix& other) const noexcept
    {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Element-wise arithmetic. All of these produce new matrices; operands are untouched.
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double scale, const Matrix& m);

Matrix submatrix(const Matrix& m, std::size_t row, std::size_t col, std::size_t rows, std::size_t cols);

/// Maps pixel (i, j) to (H-1-i, W-1-j).
Matrix rotate180(const Matrix& m);

/// Same-size mean filter with a k x k window. Near the border the window is
/// cropped to the valid overlap and the mean is taken over that overlap only.
/// Even k places the extra row/column after the centre pixel.
Matrix box_average(const Matrix& m, std::size_t k);

/// Compensated (Neumaier) sum in a fixed left-to-right order.
double sum(std::span<const double> values);
inline double sum(const Matrix& m) { return sum(m.values()); }

double mean(std::span<const double> values);
inline double mean(const Matrix& m) { return mean(m.values()); }

/// Unbiased (N-1) variance, two-pass. Requires at least two values.
double sample_variance(std::span<const double> values);

double peak_to_peak(const Matrix& m);

}  // namespace twinbeam
