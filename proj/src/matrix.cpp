#include "twinbeam/matrix.hpp"

#include "twinbeam/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace twinbeam {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values))
{
    if (data_.size() != rows * cols) {
        throw ConfigError("matrix data has " + std::to_string(data_.size()) + " values, expected " +
                          std::to_string(rows * cols));
    }
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op)
{
    if (!a.same_shape(b)) {
        throw ConfigError(std::string("matrix ") + op + ": shape mismatch " + std::to_string(a.rows()) +
                          "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                          std::to_string(b.cols()));
    }
}

}  // namespace

Matrix operator+(const Matrix& a, const Matrix& b)
{
    require_same_shape(a, b, "addition");
    Matrix out(a.rows(), a.cols());
    auto o = out.values();
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b)
{
    require_same_shape(a, b, "subtraction");
    Matrix out(a.rows(), a.cols());
    auto o = out.values();
    auto x = a.values();
    auto y = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
    return out;
}

Matrix operator*(double scale, const Matrix& m)
{
    Matrix out(m.rows(), m.cols());
    auto o = out.values();
    auto x = m.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = scale * x[i];
    return out;
}

Matrix submatrix(const Matrix& m, std::size_t row, std::size_t col, std::size_t rows, std::size_t cols)
{
    if (row + rows > m.rows() || col + cols > m.cols()) {
        throw ConfigError("submatrix [" + std::to_string(row) + "+" + std::to_string(rows) + ", " +
                          std::to_string(col) + "+" + std::to_string(cols) + "] outside " +
                          std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    Matrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        auto src = m.row(row + r).subspan(col, cols);
        std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * cols));
    }
    return out;
}

Matrix rotate180(const Matrix& m)
{
    Matrix out(m.rows(), m.cols());
    auto src = m.values();
    auto dst = out.values();
    std::reverse_copy(src.begin(), src.end(), dst.begin());
    return out;
}

Matrix box_average(const Matrix& m, std::size_t k)
{
    if (k == 0) throw ConfigError("box_average: kernel size must be >= 1");
    if (k == 1) return m;
    const std::size_t rows = m.rows();
    const std::size_t cols = m.cols();
    // Prefix sums with one row/column of padding.
    std::vector<long double> prefix((rows + 1) * (cols + 1), 0.0L);
    const auto at = [cols](std::size_t r, std::size_t c) { return r * (cols + 1) + c; };
    for (std::size_t r = 0; r < rows; ++r) {
        long double running = 0.0L;
        for (std::size_t c = 0; c < cols; ++c) {
            running += m(r, c);
            prefix[at(r + 1, c + 1)] = prefix[at(r, c + 1)] + running;
        }
    }
    const auto before = static_cast<std::ptrdiff_t>(k / 2);
    const auto after = static_cast<std::ptrdiff_t>(k) - 1 - before;
    Matrix out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto r0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(r) - before));
        const auto r1 = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(rows) - 1, static_cast<std::ptrdiff_t>(r) + after));
        for (std::size_t c = 0; c < cols; ++c) {
            const auto c0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(c) - before));
            const auto c1 = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
                static_cast<std::ptrdiff_t>(cols) - 1, static_cast<std::ptrdiff_t>(c) + after));
            const long double total =
                prefix[at(r1 + 1, c1 + 1)] - prefix[at(r0, c1 + 1)] - prefix[at(r1 + 1, c0)] + prefix[at(r0, c0)];
            const auto area = static_cast<long double>((r1 - r0 + 1) * (c1 - c0 + 1));
            out(r, c) = static_cast<double>(total / area);
        }
    }
    return out;
}

double sum(std::span<const double> values)
{
    double total = 0.0;
    double compensation = 0.0;
    for (double v : values) {
        const double t = total + v;
        if (std::abs(total) >= std::abs(v)) {
            compensation += (total - t) + v;
        } else {
            compensation += (v - t) + total;
        }
        total = t;
    }
    return total + compensation;
}

double mean(std::span<const double> values)
{
    if (values.empty()) throw AnalysisError("mean of an empty set");
    return sum(values) / static_cast<double>(values.size());
}

double sample_variance(std::span<const double> values)
{
    if (values.size() < 2) throw AnalysisError("sample variance needs at least two values");
    const double mu = mean(values);
    std::vector<double> squares(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = values[i] - mu;
        squares[i] = d * d;
    }
    return sum(squares) / static_cast<double>(values.size() - 1);
}

double peak_to_peak(const Matrix& m)
{
    if (m.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
    return *hi - *lo;
}

}  // namespace twinbeam
