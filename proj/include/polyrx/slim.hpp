#pragma once

#include "polyrx/core.hpp"

#include <cmath>
#include <optional>

namespace polyrx {

struct SlimHyper {
  double alpha = 20.0;   // Frobenius-norm weight
  double lambda = 1e-6;  // entrywise L1 weight
  int max_iters = 500;
  double tol = 1e-6;

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha))
      throw Error("slim: alpha must be finite and >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw Error("slim: lambda must be finite and >= 0");
    if (max_iters < 1) throw Error("slim: max_iters must be >= 1");
    if (!(tol > 0.0)) throw Error("slim: tol must be > 0");
  }
};

// Non-negative, zero-diagonal sparse aggregation matrix. Column j predicts
// drug j from the other drugs of a prescription.
struct SlimModel {
  Matrix W;
  SlimHyper hyper;
  SolveInfo info;
};

// 1/2 ||A - AW||_F^2 + (alpha/2) ||W||_F^2 + lambda ||W||_1
inline double slim_objective(const Matrix& A, const Matrix& W,
                             const SlimHyper& hyper) {
  if (W.rows() != A.cols() || W.cols() != A.cols())
    throw ShapeError("slim_objective: W must be n x n with n = A.cols()");
  double fit = 0.5 * (A - A * W).squaredNorm();
  double frob = 0.5 * hyper.alpha * W.squaredNorm();
  double l1 = hyper.lambda * W.cwiseAbs().sum();
  return fit + frob + l1;
}

inline double slim_objective(const PrescriptionMatrix& A, const Matrix& W,
                             const SlimHyper& hyper) {
  return slim_objective(A.to_dense(), W, hyper);
}

// Gradient of the smooth part (fit + Frobenius term) w.r.t. W.
inline Matrix slim_smooth_gradient(const Matrix& A, const Matrix& W,
                                   double alpha) {
  if (W.rows() != A.cols() || W.cols() != A.cols())
    throw ShapeError("slim_smooth_gradient: shape mismatch");
  return A.transpose() * (A * W - A) + alpha * W;
}

// Recommendation scores of all drugs for prescription a: s_j = sum_{k in a} W(k, j).
// Entries at a's own drugs are the reconstruction values; inference excludes
// them downstream.
inline Vector slim_score(const Matrix& W, const Prescription& a) {
  if (a.max_id() >= W.rows())
    throw VocabError("slim_score: drug id " + std::to_string(a.max_id()) +
                     " outside model of size " + std::to_string(W.rows()));
  Vector s = Vector::Zero(W.cols());
  for (int k : a.ids()) s += W.row(k).transpose();
  return s;
}

inline Vector slim_score(const SlimModel& model, const Prescription& a) {
  return slim_score(model.W, a);
}

namespace detail {

// Column subproblem shared by standalone SLIM training and the ADMM W-update:
//   min_w  1/2 ||A w - a_j||^2 + (alpha/2)||w||^2 + lambda * sum(w)
//          + q' w + (rho/2)||w - z||^2
//   s.t.   w >= 0, w[j] = 0
// expressed through G = A'A (so a_j = A e_j gives A'a_j = G.col(j)).
struct SlimColumn {
  const Matrix& G;
  int col;
  double alpha;
  double lambda;
  double rho = 0.0;
  const Vector* q = nullptr;
  const Vector* z = nullptr;

  double smooth_value(const Vector& w) const {
    double v = 0.5 * w.dot(G * w) - w.dot(G.col(col)) + 0.5 * G(col, col) +
               0.5 * alpha * w.squaredNorm();
    if (q) v += q->dot(w);
    if (rho > 0.0) v += 0.5 * rho * (w - *z).squaredNorm();
    return v;
  }

  Vector smooth_gradient(const Vector& w) const {
    Vector g = G * w - G.col(col) + alpha * w;
    if (q) g += *q;
    if (rho > 0.0) g += rho * (w - *z);
    return g;
  }

  double value(const Vector& w) const {
    return smooth_value(w) + lambda * w.sum();  // w >= 0 by construction
  }

  double lipschitz_start() const {
    double row_sum = G.cwiseAbs().rowwise().sum().maxCoeff();
    return row_sum + alpha + rho + 1e-12;
  }
};

// One backtracked proximal step: gradient on the smooth part, shrink by
// lambda*t, clamp at zero, zero the diagonal entry. Returns true if w moved.
inline bool slim_prox_step(const SlimColumn& prob, Vector& w, double& t,
                           double& objective) {
  const Vector grad = prob.smooth_gradient(w);
  const double smooth0 = prob.smooth_value(w);
  const double t_in = std::min(t * 2.0, 1e6 / prob.lipschitz_start());
  t = t_in;
  for (int back = 0; back < 80; ++back) {
    Vector trial = (w - t * grad).array() - t * prob.lambda;
    trial = trial.cwiseMax(0.0);
    trial[prob.col] = 0.0;
    Vector diff = trial - w;
    double move = diff.squaredNorm();
    // progress below measurable precision counts as a fixed point; leave the
    // step size intact so it cannot collapse across calls
    if (move <= 1e-24 * (1.0 + w.squaredNorm()) ||
        0.5 * move / t <= 1e-13 * (1.0 + std::abs(smooth0))) {
      t = t_in;
      objective = prob.value(w);
      return false;
    }
    double smooth1 = prob.smooth_value(trial);
    if (smooth1 <= smooth0 + grad.dot(diff) + 0.5 * move / t) {
      w = std::move(trial);
      objective = smooth1 + prob.lambda * w.sum();
      return true;
    }
    t *= 0.5;
  }
  t = t_in;
  objective = prob.value(w);
  return false;
}

}  // namespace detail

// Learns W by per-column proximal projected gradient with backtracking line
// search. Column subproblems are independent and run in parallel; the global
// objective is non-increasing over iterations. Non-convergence within
// max_iters is reported through SolveInfo, not an error.
inline SlimModel train_slim(const Matrix& A, const SlimHyper& hyper,
                            std::vector<double>* objective_trace = nullptr,
                            const Matrix* warm_start = nullptr) {
  hyper.validate();
  if (A.rows() < 1) throw Error("train_slim: empty matrix");
  const int n = static_cast<int>(A.cols());
  const Matrix G = A.transpose() * A;

  Matrix W = warm_start ? *warm_start : Matrix::Zero(n, n);
  if (W.rows() != n || W.cols() != n)
    throw ShapeError("train_slim: warm start has wrong shape");

  std::vector<double> step(n);
  std::vector<double> col_obj(n);
  std::vector<char> frozen(n, 0);
  for (int j = 0; j < n; ++j) {
    detail::SlimColumn prob{G, j, hyper.alpha, hyper.lambda};
    step[j] = 1.0 / prob.lipschitz_start();
    col_obj[j] = prob.value(W.col(j));
  }

  double objective = 0.0;
  for (double v : col_obj) objective += v;
  if (objective_trace) objective_trace->push_back(objective);

  SolveInfo info;
  for (int iter = 1; iter <= hyper.max_iters; ++iter) {
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t sj) {
      int j = static_cast<int>(sj);
      if (frozen[j]) return;
      detail::SlimColumn prob{G, j, hyper.alpha, hyper.lambda};
      Vector w = W.col(j);
      double before = col_obj[j];
      bool moved = detail::slim_prox_step(prob, w, step[j], col_obj[j]);
      W.col(j) = w;
      if (!moved || std::abs(before - col_obj[j]) <=
                        hyper.tol * std::max(1.0, std::abs(before)))
        frozen[j] = 1;
    });
    double next = 0.0;
    for (double v : col_obj) next += v;
    if (objective_trace) objective_trace->push_back(next);
    info.iterations = iter;
    bool all_frozen = std::all_of(frozen.begin(), frozen.end(),
                                  [](char f) { return f != 0; });
    bool small_change =
        std::abs(objective - next) <= hyper.tol * std::max(1.0, std::abs(objective));
    objective = next;
    if (all_frozen || small_change) {
      info.converged = true;
      break;
    }
  }
  info.objective = objective;
  return SlimModel{std::move(W), hyper, info};
}

inline SlimModel train_slim(const PrescriptionMatrix& A, const SlimHyper& hyper,
                            std::vector<double>* objective_trace = nullptr) {
  return train_slim(A.to_dense(), hyper, objective_trace);
}

}  // namespace polyrx
