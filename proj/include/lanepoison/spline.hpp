#pragma once

#include <array>
#include <vector>

#include "lanepoison/error.hpp"

namespace lanepoison {

// Natural cubic spline col = s(row) through (row, col) knots.  Second
// derivatives come from the standard tridiagonal system (zero curvature at
// both ends) solved with the Thomas algorithm in O(n).
class NaturalCubicSpline {
 public:
  // Points need not be sorted; they are sorted by row internally.
  // Throws InsufficientPointsError (< 2 points) or DegenerateInputError
  // (duplicate rows).
  static NaturalCubicSpline fit(const std::vector<std::array<double, 2>>& row_col_points);

  double eval(double row) const;
  double derivative(double row) const;

  double min_row() const { return rows_.front(); }
  double max_row() const { return rows_.back(); }
  int knot_count() const { return static_cast<int>(rows_.size()); }
  const std::vector<double>& second_derivatives() const { return m_; }

 private:
  int segment_of(double row) const;

  std::vector<double> rows_;  // ascending
  std::vector<double> cols_;
  std::vector<double> m_;  // second derivatives at knots, m_.front()==m_.back()==0
};

}  // namespace lanepoison
