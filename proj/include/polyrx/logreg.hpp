#pragma once

#include "polyrx/core.hpp"

#include <cmath>

namespace polyrx {

struct LogRHyper {
  double beta = 1e-6;   // L2 weight on x
  double gamma = 1e-2;  // L1 weight on x
  int max_iters = 500;
  double tol = 1e-6;

  void validate() const {
    if (!(beta >= 0.0) || !std::isfinite(beta))
      throw Error("logr: beta must be finite and >= 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma))
      throw Error("logr: gamma must be finite and >= 0");
    if (max_iters < 1) throw Error("logr: max_iters must be >= 1");
    if (!(tol > 0.0)) throw Error("logr: tol must be > 0");
  }
};

struct LogRModel {
  Vector x;
  double c = 0.0;
  SolveInfo info;
};

// log(1 + exp(z)) without overflow.
inline double log1pexp(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

// p(y | f) = 1 / (1 + exp(-y (f.x + c))), y in {+1, -1}.
inline double predict_proba(const LogRModel& model, const Vector& f, int y) {
  if (f.size() != model.x.size())
    throw ShapeError("predict_proba: feature length " + std::to_string(f.size()) +
                     " != model length " + std::to_string(model.x.size()));
  if (y != 1 && y != -1) throw Error("predict_proba: label must be +1 or -1");
  return sigmoid(static_cast<double>(y) * (f.dot(model.x) + model.c));
}

inline void check_labels(const std::vector<int>& y, Eigen::Index m) {
  if (static_cast<Eigen::Index>(y.size()) != m)
    throw ShapeError("label count does not match row count");
  for (int v : y)
    if (v != 1 && v != -1) throw Error("labels must be +1 or -1");
}

// Smooth part: sum_i log(1 + exp(-y_i (f_i.x + c))) + (beta/2)||x||^2.
// The bias c is never penalized.
inline double logr_smooth_value(const Matrix& F, const std::vector<int>& y,
                                const Vector& x, double c, double beta) {
  check_labels(y, F.rows());
  Vector s = F * x;
  double v = 0.0;
  for (Eigen::Index i = 0; i < F.rows(); ++i)
    v += log1pexp(-static_cast<double>(y[i]) * (s[i] + c));
  return v + 0.5 * beta * x.squaredNorm();
}

inline void logr_smooth_gradient(const Matrix& F, const std::vector<int>& y,
                                 const Vector& x, double c, double beta,
                                 Vector& grad_x, double& grad_c) {
  check_labels(y, F.rows());
  Vector s = F * x;
  Vector r(F.rows());
  for (Eigen::Index i = 0; i < F.rows(); ++i) {
    double yi = static_cast<double>(y[i]);
    r[i] = -yi * sigmoid(-yi * (s[i] + c));
  }
  grad_x = F.transpose() * r + beta * x;
  grad_c = r.sum();
}

inline double logr_objective(const Matrix& F, const std::vector<int>& y,
                             const Vector& x, double c, const LogRHyper& hyper) {
  return logr_smooth_value(F, y, x, c, hyper.beta) +
         hyper.gamma * x.cwiseAbs().sum();
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Elastic-net logistic regression by proximal gradient with backtracking.
// With gamma = 0 the returned iterate has gradient norm < tol unless the
// iteration budget runs out (reported via SolveInfo).
inline LogRModel train_logr(const Matrix& F, const std::vector<int>& y,
                            const LogRHyper& hyper,
                            const LogRModel* warm_start = nullptr,
                            std::vector<double>* objective_trace = nullptr) {
  hyper.validate();
  if (F.rows() < 1) throw Error("train_logr: empty design matrix");
  check_labels(y, F.rows());
  const Eigen::Index n = F.cols();

  Vector x = warm_start ? warm_start->x : Vector::Zero(n);
  double c = warm_start ? warm_start->c : 0.0;
  if (x.size() != n) throw ShapeError("train_logr: warm start length mismatch");

  // 0.25 * lambda_max bound for the logistic Hessian, via Frobenius estimate.
  double lip = 0.25 * (F.squaredNorm() + static_cast<double>(F.rows())) +
               hyper.beta + 1e-12;
  double t = 1.0 / lip;

  double objective = logr_smooth_value(F, y, x, c, hyper.beta) +
                     hyper.gamma * x.cwiseAbs().sum();
  if (objective_trace) objective_trace->push_back(objective);

  SolveInfo info;
  const double probe_step = 1.0 / lip;
  Vector grad_x(n);
  double grad_c = 0.0;

  // Stationarity measure: proximal-gradient map with a fixed probe step
  // (equals the plain gradient norm when gamma = 0).
  auto stationarity = [&] {
    logr_smooth_gradient(F, y, x, c, hyper.beta, grad_x, grad_c);
    double map_sq = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      double pj = soft_threshold(x[j] - probe_step * grad_x[j],
                                 probe_step * hyper.gamma);
      double d = (x[j] - pj) / probe_step;
      map_sq += d * d;
    }
    return std::sqrt(map_sq + grad_c * grad_c);
  };

  for (int iter = 1; iter <= hyper.max_iters; ++iter) {
    if (stationarity() < hyper.tol) {
      info.converged = true;
      break;
    }

    double smooth0 = logr_smooth_value(F, y, x, c, hyper.beta);
    t = std::min(t * 2.0, 1e12);
    Vector x_new(n);
    double c_new = c;
    bool accepted = false;
    for (int back = 0; back < 120 && !accepted; ++back) {
      for (Eigen::Index j = 0; j < n; ++j)
        x_new[j] = soft_threshold(x[j] - t * grad_x[j], t * hyper.gamma);
      c_new = c - t * grad_c;
      Vector dx = x_new - x;
      double dc = c_new - c;
      double move = dx.squaredNorm() + dc * dc;
      // step progress below measurable precision: stop here
      if (0.5 * move / t <= 1e-13 * (1.0 + std::abs(smooth0))) break;
      double smooth1 = logr_smooth_value(F, y, x_new, c_new, hyper.beta);
      if (smooth1 <= smooth0 + grad_x.dot(dx) + grad_c * dc + 0.5 * move / t)
        accepted = true;
      else
        t *= 0.5;
    }
    if (!accepted) break;

    x = std::move(x_new);
    c = c_new;
    objective = logr_smooth_value(F, y, x, c, hyper.beta) +
                hyper.gamma * x.cwiseAbs().sum();
    if (objective_trace) objective_trace->push_back(objective);
    info.iterations = iter;
  }
  if (!info.converged && stationarity() < hyper.tol) info.converged = true;
  info.objective = objective;
  return LogRModel{std::move(x), c, info};
}

}  // namespace polyrx
