#include "lanepoison/spline.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lanepoison {

NaturalCubicSpline NaturalCubicSpline::fit(
    const std::vector<std::array<double, 2>>& row_col_points) {
  if (row_col_points.size() < 2)
    throw InsufficientPointsError("spline fit needs >= 2 points, got " +
                                  std::to_string(row_col_points.size()));
  std::vector<std::array<double, 2>> pts = row_col_points;
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a[0] < b[0]; });

  const std::size_t n = pts.size();
  NaturalCubicSpline s;
  s.rows_.resize(n);
  s.cols_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.rows_[i] = pts[i][0];
    s.cols_[i] = pts[i][1];
    if (i > 0 && !(s.rows_[i] > s.rows_[i - 1]))
      throw DegenerateInputError("spline fit: duplicate row " +
                                 std::to_string(s.rows_[i]));
  }

  s.m_.assign(n, 0.0);
  if (n == 2) return s;  // single linear segment

  // Interior system: h[i-1]*m[i-1] + 2(h[i-1]+h[i])*m[i] + h[i]*m[i+1] = rhs[i]
  // with m[0] = m[n-1] = 0.  Thomas forward elimination / back substitution.
  const std::size_t k = n - 2;
  std::vector<double> diag(k), upper(k), rhs(k);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    double h0 = s.rows_[i] - s.rows_[i - 1];
    double h1 = s.rows_[i + 1] - s.rows_[i];
    diag[i - 1] = 2.0 * (h0 + h1);
    upper[i - 1] = h1;
    rhs[i - 1] = 6.0 * ((s.cols_[i + 1] - s.cols_[i]) / h1 -
                        (s.cols_[i] - s.cols_[i - 1]) / h0);
  }
  for (std::size_t i = 1; i < k; ++i) {
    double lower = s.rows_[i + 1] - s.rows_[i];  // h[i] couples row i to i-1
    double w = lower / diag[i - 1];
    diag[i] -= w * upper[i - 1];
    rhs[i] -= w * rhs[i - 1];
  }
  s.m_[k] = rhs[k - 1] / diag[k - 1];
  for (std::size_t i = k - 1; i >= 1; --i)
    s.m_[i] = (rhs[i - 1] - upper[i - 1] * s.m_[i + 1]) / diag[i - 1];
  return s;
}

int NaturalCubicSpline::segment_of(double row) const {
  // Clamp to end segments: evaluation outside the knot span extrapolates the
  // boundary cubic (callers that forbid extrapolation check min/max_row).
  auto it = std::upper_bound(rows_.begin(), rows_.end(), row);
  int i = static_cast<int>(it - rows_.begin()) - 1;
  return std::clamp(i, 0, static_cast<int>(rows_.size()) - 2);
}

double NaturalCubicSpline::eval(double row) const {
  int i = segment_of(row);
  double h = rows_[i + 1] - rows_[i];
  double a = (rows_[i + 1] - row) / h;
  double b = (row - rows_[i]) / h;
  return a * cols_[i] + b * cols_[i + 1] +
         ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double NaturalCubicSpline::derivative(double row) const {
  int i = segment_of(row);
  double h = rows_[i + 1] - rows_[i];
  double a = (rows_[i + 1] - row) / h;
  double b = (row - rows_[i]) / h;
  return (cols_[i + 1] - cols_[i]) / h +
         ((3.0 * b * b - 1.0) * m_[i + 1] - (3.0 * a * a - 1.0) * m_[i]) * h / 6.0;
}

}  // namespace lanepoison
