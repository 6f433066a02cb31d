#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

#include <Eigen/Dense>

namespace interlace {

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Jacobi-preconditioned conjugate gradient for an SPD operator.
///
/// `apply(p, out)` must write A p into `out`. Stops when
/// |b - A x|_2 <= tol |b|_2 (the true residual is recomputed on exit).
template <class Apply>
CgResult conjugate_gradient(Apply&& apply, const Eigen::VectorXd& diagonal,
                            const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol,
                            int max_iterations) {
  CgResult res;
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    x.setZero();
    res.converged = true;
    return res;
  }
  Eigen::VectorXd r(b.size()), z(b.size()), p(b.size()), q(b.size());
  apply(x, q);
  r = b - q;
  const Eigen::VectorXd inv_diag = diagonal.cwiseInverse();
  z = inv_diag.cwiseProduct(r);
  p = z;
  double rz = r.dot(z);
  for (res.iterations = 0; res.iterations < max_iterations; ++res.iterations) {
    if (r.norm() <= tol * b_norm) break;
    apply(p, q);
    const double alpha = rz / p.dot(q);
    x.noalias() += alpha * p;
    r.noalias() -= alpha * q;
    z = inv_diag.cwiseProduct(r);
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  apply(x, q);
  res.relative_residual = (b - q).norm() / b_norm;
  // Allow a little slack for rounding between the recursive and true residual.
  res.converged = res.relative_residual <= 10.0 * tol;
  return res;
}

}  // namespace interlace
