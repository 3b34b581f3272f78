#pragma once

#include <array>
#include <vector>

namespace deid::linalg {

/// Eigen-decomposition of a dense symmetric n x n matrix (row-major) by cyclic
/// Jacobi rotations. Eigenvalues come back ascending; column i of `vectors`
/// (row-major, n x n) is the unit eigenvector for values[i].
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<double> vectors;
};

SymmetricEigen symmetric_eigen(std::vector<double> a, int n);

using Mat3 = std::array<double, 9>;

Mat3 multiply(const Mat3& a, const Mat3& b);
double determinant(const Mat3& m);
/// Throws InvalidArgument when |det| <= tol.
Mat3 inverse(const Mat3& m, double tol = 1e-12);

}  // namespace deid::linalg
