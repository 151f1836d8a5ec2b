#pragma once

#include "gpvs/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace gpvs {

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd project(Eigen::VectorXd x) const {
    return x.cwiseMax(lower).cwiseMin(upper);
  }
};

struct QuasiNewtonOptions {
  int max_iter = 200;
  double gradient_tol = 1e-8;
  double value_tol = 1e-12;
  double fd_step = 1e-6;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
};

namespace detail {

/// Central differences, falling back to one-sided steps at the box faces or
/// where the objective is not finite.
template <class F>
Eigen::VectorXd fd_gradient(F& f, const Eigen::VectorXd& x, double fx, const Box& box,
                            double step) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x(i)));
    const bool can_up = x(i) + h <= box.upper(i);
    const bool can_down = x(i) - h >= box.lower(i);
    Eigen::VectorXd xp = x, xm = x;
    xp(i) += h;
    xm(i) -= h;
    const double fp = can_up ? f(xp) : std::numeric_limits<double>::quiet_NaN();
    const double fm = can_down ? f(xm) : std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(fp) && std::isfinite(fm))
      g(i) = (fp - fm) / (2.0 * h);
    else if (std::isfinite(fp))
      g(i) = (fp - fx) / h;
    else if (std::isfinite(fm))
      g(i) = (fx - fm) / h;
    else
      g(i) = 0.0;
  }
  return g;
}

} // namespace detail

/// Projected BFGS with an Armijo backtracking search along the projected
/// path. Coordinates held at a bound by the gradient are frozen each step.
/// Non-finite objective values are treated as +inf.
template <class F>
MinimizeResult minimize_box(F&& objective, const Eigen::VectorXd& x0, const Box& box,
                            const QuasiNewtonOptions& opt = {}) {
  const Eigen::Index d = x0.size();
  auto f = [&](const Eigen::VectorXd& x) {
    const double v = objective(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };
  MinimizeResult res;
  Eigen::VectorXd x = box.project(x0);
  double fx = f(x);
  res.x = x;
  res.value = fx;
  if (!std::isfinite(fx))
    return res;

  Eigen::VectorXd g = detail::fd_gradient(f, x, fx, box, opt.fd_step);
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(d, d);
  const Eigen::VectorXd range = box.upper - box.lower;
  bool fresh = true;
  int small_steps = 0;

  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it + 1;
    Eigen::VectorXd free_mask = Eigen::VectorXd::Ones(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      const double eps = 1e-12 * std::max(1.0, range(i));
      if ((x(i) <= box.lower(i) + eps && g(i) > 0.0) || (x(i) >= box.upper(i) - eps && g(i) < 0.0))
        free_mask(i) = 0.0;
    }
    const Eigen::VectorXd gf = g.cwiseProduct(free_mask);
    if (gf.lpNorm<Eigen::Infinity>() < opt.gradient_tol) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd hf = h;
    for (Eigen::Index i = 0; i < d; ++i)
      if (free_mask(i) == 0.0) {
        hf.row(i).setZero();
        hf.col(i).setZero();
      }
    Eigen::VectorXd dir = -(hf * gf);
    if (!(dir.dot(gf) < 0.0)) {
      h.setIdentity();
      fresh = true;
      dir = -gf;
    }
    double t = 1.0;
    if (fresh) {
      const double worst = (dir.cwiseAbs().array() / range.array()).maxCoeff();
      if (worst > 0.25)
        t = 0.25 / worst;
    }
    Eigen::VectorXd xn;
    double fn = std::numeric_limits<double>::infinity();
    bool found = false;
    for (int ls = 0; ls < 50; ++ls) {
      xn = box.project(x + t * dir);
      fn = f(xn);
      if (fn <= fx + 1e-4 * g.dot(xn - x)) {
        found = true;
        break;
      }
      t *= 0.5;
    }
    if (!found) {
      if (!fresh) {
        h.setIdentity();
        fresh = true;
        continue;
      }
      res.converged = true;
      break;
    }
    const Eigen::VectorXd gn = detail::fd_gradient(f, xn, fn, box, opt.fd_step);
    const Eigen::VectorXd s = xn - x;
    const Eigen::VectorXd y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh)
        h *= sy / y.squaredNorm();
      const double r = 1.0 / sy;
      const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d) - r * s * y.transpose();
      h = v * h * v.transpose() + r * s * s.transpose();
      fresh = false;
    }
    const double change = fx - fn;
    x = xn;
    fx = fn;
    g = gn;
    if (change <= opt.value_tol * (1.0 + std::abs(fx))) {
      if (++small_steps >= 3) {
        res.converged = true;
        break;
      }
    } else {
      small_steps = 0;
    }
  }
  res.x = x;
  res.value = fx;
  return res;
}

} // namespace gpvs
