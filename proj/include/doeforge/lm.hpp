#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "doeforge/errors.hpp"

namespace doeforge::lm {

struct Options {
  double tol_g = 1e-10;  // infinity norm of J^T f
  double tol_x = 1e-10;  // relative step length
  double tol_f = 1e-12;  // relative decrease of |f|^2 on an accepted step
  int max_iterations = 100;
  double lambda_init = 1e-3;
  double lambda_max = 1e12;
  double lambda_decrease = 0.5;
  double lambda_increase = 4.0;
};

struct Report {
  int iterations = 0;  // Jacobian evaluations
  int accepted = 0;
  int rejected = 0;
  double initial_cost = 0.0;  // |f(x0)|^2
  double final_cost = 0.0;    // |f(x_hat)|^2
  double lambda = 0.0;
  std::string stop_reason;
  std::vector<double> cost_history;  // |f|^2 after every accepted step, starting with x0
};

template <typename Scalar>
struct Result {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> residuals;
  Report report;
};

/// Levenberg-Marquardt on min |f(x)|^2 with Marquardt scaling:
/// (J^T J + lambda diag(J^T J)) delta = -J^T f.
///
/// `residual(x)` returns f(x); `jacobian(x, f)` returns df/dx given f(x).
/// Only steps that strictly decrease |f|^2 are accepted. Throws
/// NumericalError when the damped system stays singular past lambda_max.
template <typename Scalar, typename ResidualFn, typename JacobianFn>
Result<Scalar> solve(ResidualFn&& residual, JacobianFn&& jacobian,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x0, const Options& opt = {}) {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  if (!x0.allFinite()) throw ValidationError("least squares: initial guess is not finite");
  Result<Scalar> out;
  out.x = x0;
  out.residuals = residual(out.x);
  if (!out.residuals.allFinite()) throw NumericalError("least squares: residuals at the initial guess are not finite");
  Scalar cost = out.residuals.squaredNorm();
  Report& rep = out.report;
  rep.initial_cost = static_cast<double>(cost);
  rep.cost_history.push_back(static_cast<double>(cost));
  double lambda = opt.lambda_init;
  rep.stop_reason = "max_iterations";

  while (rep.iterations < opt.max_iterations) {
    const Matrix J = jacobian(out.x, out.residuals);
    ++rep.iterations;
    const Vector g = J.transpose() * out.residuals;
    if (g.size() == 0 || g.template lpNorm<Eigen::Infinity>() < opt.tol_g) {
      rep.stop_reason = "gradient";
      break;
    }
    const Matrix A = J.transpose() * J;
    Vector d = A.diagonal();
    const Scalar floor = std::max(d.maxCoeff() * Scalar(1e-12), std::numeric_limits<Scalar>::min());
    d = d.cwiseMax(floor);

    bool accepted = false;
    bool stop = false;
    bool singular_only = true;
    while (!accepted) {
      if (lambda > opt.lambda_max) {
        if (singular_only) {
          throw NumericalError("least squares: damped normal equations singular up to lambda_max");
        }
        rep.stop_reason = "stalled";
        stop = true;
        break;
      }
      Matrix M = A;
      M.diagonal() += Scalar(lambda) * d;
      Eigen::LDLT<Matrix> ldlt(M);
      Vector delta;
      if (ldlt.info() == Eigen::Success) delta = ldlt.solve(-g);
      if (ldlt.info() != Eigen::Success || !delta.allFinite()) {
        lambda *= opt.lambda_increase;
        ++rep.rejected;
        continue;
      }
      singular_only = false;
      const Vector x_new = out.x + delta;
      Vector r_new = residual(x_new);
      const Scalar cost_new = r_new.allFinite() ? r_new.squaredNorm() : std::numeric_limits<Scalar>::infinity();
      if (cost_new < cost) {
        const Scalar decrease = cost - cost_new;
        const Scalar step = delta.norm();
        const Scalar scale = out.x.norm() + Scalar(opt.tol_x);
        out.x = x_new;
        out.residuals = std::move(r_new);
        cost = cost_new;
        ++rep.accepted;
        rep.cost_history.push_back(static_cast<double>(cost));
        lambda = std::max(lambda * opt.lambda_decrease, 1e-15);
        accepted = true;
        if (step < Scalar(opt.tol_x) * scale) {
          rep.stop_reason = "step";
          stop = true;
        } else if (decrease < Scalar(opt.tol_f) * (cost + decrease)) {
          rep.stop_reason = "residual";
          stop = true;
        } else if (cost == Scalar(0)) {
          rep.stop_reason = "residual";
          stop = true;
        }
      } else {
        lambda *= opt.lambda_increase;
        ++rep.rejected;
      }
    }
    if (stop) break;
  }
  rep.final_cost = static_cast<double>(cost);
  rep.lambda = lambda;
  return out;
}

/// Forward differences, column j with step max(min_step, rel_step*|x_j|).
/// Throws NumericalError naming the parameter when a column is not finite.
template <typename Scalar, typename ResidualFn>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> forwardJacobian(
    ResidualFn&& residual, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& x,
    const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& f, Scalar rel_step = Scalar(1e-6),
    Scalar min_step = Scalar(1e-6)) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> J(f.size(), x.size());
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const Scalar h = std::max(min_step, rel_step * std::abs(x[j]));
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> xp = x;
    xp[j] += h;
    J.col(j) = (residual(xp) - f) / h;
    if (!J.col(j).allFinite()) {
      throw NumericalError("jacobian column for parameter " + std::to_string(j) + " is not finite");
    }
  }
  return J;
}

}  // namespace doeforge::lm
