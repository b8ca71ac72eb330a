#pragma once

#include "polyrx/logreg.hpp"
#include "polyrx/slim.hpp"

#include <cmath>
#include <sstream>

namespace polyrx {

// Mask handed to the label-prediction component: inclusive feeds every
// reconstructed drug score to it, exclusive only the scores of drugs already
// in the prescription.
enum class MaskVariant { inclusive, exclusive };

inline const char* to_string(MaskVariant v) {
  return v == MaskVariant::inclusive ? "inclusive" : "exclusive";
}

inline MaskVariant mask_variant_from_string(const std::string& s) {
  if (s == "inclusive") return MaskVariant::inclusive;
  if (s == "exclusive") return MaskVariant::exclusive;
  throw Error("unknown mask variant: " + s);
}

struct JointHyper {
  double omega = 5.0;  // weight of the label-prediction component
  SlimHyper slim{};    // alpha, lambda; max_iters doubles as the init budget
  LogRHyper logr{};    // beta, gamma; max_iters doubles as the init budget
  double rho_plus = 10.0;
  double rho_minus = 10.0;
  int max_admm_iters = 200;
  int inner_iters = 25;
  double tol = 1e-4;  // residual threshold is tol * n

  void validate() const {
    slim.validate();
    logr.validate();
    if (!(omega >= 0.0) || !std::isfinite(omega))
      throw Error("joint: omega must be finite and >= 0");
    if (!(rho_plus > 0.0) || !(rho_minus > 0.0))
      throw Error("joint: rho must be > 0");
    if (max_admm_iters < 0) throw Error("joint: max_admm_iters must be >= 0");
    if (inner_iters < 1) throw Error("joint: inner_iters must be >= 1");
    if (!(tol > 0.0)) throw Error("joint: tol must be > 0");
  }
};

// m x n selection matrix M: all ones (inclusive) or the indicator of A
// (exclusive).
inline Matrix make_mask(const PrescriptionMatrix& A, MaskVariant variant) {
  if (variant == MaskVariant::inclusive)
    return Matrix::Ones(static_cast<Eigen::Index>(A.n_rows()), A.n_drugs());
  return A.to_dense();
}

// Consensus solver state. U_plus/U_minus hold the Lagrange multipliers for
// vec(W) - vec(Z) in matrix layout.
struct AdmmState {
  Matrix W_plus, W_minus;
  Matrix Z_plus, Z_minus;
  Matrix U_plus, U_minus;
  Matrix Z_plus_prev, Z_minus_prev;
  Vector x;
  double c = 0.0;
  int iter = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

// Masked feature rows for the label component: (A Z) o M.
inline Matrix admm_logr_features(const Matrix& A, const Matrix& Z,
                                 const Matrix& M) {
  return (A * Z).cwiseProduct(M);
}

// primal = ||vec(W+)-vec(Z+)|| + ||vec(W-)-vec(Z-)||
// dual   = rho+ ||vec(Z+_k+1 - Z+_k)|| + rho- ||vec(Z-_k+1 - Z-_k)||
inline std::pair<double, double> admm_residuals(const AdmmState& state,
                                                const JointHyper& hyper) {
  double primal = (state.W_plus - state.Z_plus).norm() +
                  (state.W_minus - state.Z_minus).norm();
  double dual = hyper.rho_plus * (state.Z_plus - state.Z_plus_prev).norm() +
                hyper.rho_minus * (state.Z_minus - state.Z_minus_prev).norm();
  return {primal, dual};
}

// Smooth part of the W-subproblem for one class:
// 1/2||A - AW||_F^2 + (alpha/2)||W||_F^2 + <U, W - Z> + (rho/2)||W - Z||_F^2.
inline double w_subproblem_smooth_value(const Matrix& A, const Matrix& W,
                                        const Matrix& Z, const Matrix& U,
                                        double alpha, double rho) {
  return 0.5 * (A - A * W).squaredNorm() + 0.5 * alpha * W.squaredNorm() +
         U.cwiseProduct(W - Z).sum() + 0.5 * rho * (W - Z).squaredNorm();
}

inline Matrix w_subproblem_smooth_gradient(const Matrix& A, const Matrix& W,
                                           const Matrix& Z, const Matrix& U,
                                           double alpha, double rho) {
  return A.transpose() * (A * W - A) + alpha * W + U + rho * (W - Z);
}

// Z-subproblem for one class (x-regularizers are constant here):
// omega * sum_i log(1 + exp(-y_i s_i)) + <U, W - Z> + (rho/2)||W - Z||_F^2
// with s_i = ((a_i Z) o m_i) . x + c.
inline double z_subproblem_value(const Matrix& Z, const Matrix& A,
                                 const Matrix& M, const Matrix& W,
                                 const Matrix& U, const Vector& x, double c,
                                 const std::vector<int>& y, double omega,
                                 double rho) {
  check_labels(y, A.rows());
  Vector s = admm_logr_features(A, Z, M) * x;
  double data = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    data += log1pexp(-static_cast<double>(y[i]) * (s[i] + c));
  return omega * data + U.cwiseProduct(W - Z).sum() +
         0.5 * rho * (W - Z).squaredNorm();
}

inline Matrix z_subproblem_gradient(const Matrix& Z, const Matrix& A,
                                    const Matrix& M, const Matrix& W,
                                    const Matrix& U, const Vector& x, double c,
                                    const std::vector<int>& y, double omega,
                                    double rho) {
  check_labels(y, A.rows());
  Vector s = admm_logr_features(A, Z, M) * x;
  Vector r(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double yi = static_cast<double>(y[i]);
    r[i] = -yi * sigmoid(-yi * (s[i] + c));
  }
  Matrix e = (r * x.transpose()).cwiseProduct(M);
  return omega * (A.transpose() * e) - U + rho * (Z - W);
}

namespace detail {

struct JointProblem {
  Matrix A_plus, A_minus;
  Matrix G_plus, G_minus;
  Matrix M_plus, M_minus;
  std::vector<int> y_plus, y_minus;

  static JointProblem build(const LabeledDataset& data, MaskVariant variant) {
    JointProblem p;
    p.A_plus = data.positives.to_dense();
    p.A_minus = data.negatives.to_dense();
    p.G_plus = p.A_plus.transpose() * p.A_plus;
    p.G_minus = p.A_minus.transpose() * p.A_minus;
    p.M_plus = make_mask(data.positives, variant);
    p.M_minus = make_mask(data.negatives, variant);
    p.y_plus.assign(data.positives.n_rows(), 1);
    p.y_minus.assign(data.negatives.n_rows(), -1);
    return p;
  }
};

inline double lagrangian_value(const AdmmState& s, const JointProblem& p,
                               const JointHyper& h) {
  double slim_part = slim_objective(p.A_plus, s.W_plus, h.slim) +
                     slim_objective(p.A_minus, s.W_minus, h.slim);
  double logr_part =
      logr_objective(admm_logr_features(p.A_plus, s.Z_plus, p.M_plus), p.y_plus,
                     s.x, s.c, h.logr) +
      logr_objective(admm_logr_features(p.A_minus, s.Z_minus, p.M_minus),
                     p.y_minus, s.x, s.c, h.logr);
  double couple_plus = s.U_plus.cwiseProduct(s.W_plus - s.Z_plus).sum() +
                       0.5 * h.rho_plus * (s.W_plus - s.Z_plus).squaredNorm();
  double couple_minus = s.U_minus.cwiseProduct(s.W_minus - s.Z_minus).sum() +
                        0.5 * h.rho_minus * (s.W_minus - s.Z_minus).squaredNorm();
  return slim_part + h.omega * logr_part + couple_plus + couple_minus;
}

// inner_iters proximal steps per column on the coupled SLIM subproblem.
// col_steps carries warm step sizes across outer iterations.
inline void admm_w_update(Matrix& W, const Matrix& G, const Matrix& Z,
                          const Matrix& U, const SlimHyper& slim, double rho,
                          int inner_iters, std::vector<double>& col_steps) {
  const int n = static_cast<int>(W.cols());
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t sj) {
    int j = static_cast<int>(sj);
    Vector qj = U.col(j);
    Vector zj = Z.col(j);
    SlimColumn prob{G, j, slim.alpha, slim.lambda, rho, &qj, &zj};
    Vector w = W.col(j);
    double obj = prob.value(w);
    for (int it = 0; it < inner_iters; ++it)
      if (!slim_prox_step(prob, w, col_steps[sj], obj)) break;
    W.col(j) = w;
  });
}

// inner_iters backtracked gradient steps on the Z-subproblem.
inline void admm_z_update(Matrix& Z, const Matrix& A, const Matrix& M,
                          const Matrix& W, const Matrix& U, const Vector& x,
                          double c, const std::vector<int>& y, double omega,
                          double rho, int inner_iters, double& step) {
  for (int it = 0; it < inner_iters; ++it) {
    Matrix grad = z_subproblem_gradient(Z, A, M, W, U, x, c, y, omega, rho);
    double f0 = z_subproblem_value(Z, A, M, W, U, x, c, y, omega, rho);
    double gnorm2 = grad.squaredNorm();
    if (gnorm2 <= 1e-24) break;
    const double step_in = std::min(step * 2.0, 1e8);
    step = step_in;
    bool accepted = false;
    for (int back = 0; back < 80; ++back) {
      // decrease below measurable precision: stop, keep the step size sane
      if (0.5 * step * gnorm2 <= 1e-13 * (1.0 + std::abs(f0))) {
        step = step_in;
        break;
      }
      Matrix trial = Z - step * grad;
      double f1 = z_subproblem_value(trial, A, M, W, U, x, c, y, omega, rho);
      if (f1 <= f0 - 0.5 * step * gnorm2) {
        Z = std::move(trial);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
}

}  // namespace detail

// Augmented Lagrangian of the joint objective at the given state.
inline double lagrangian(const AdmmState& state, const LabeledDataset& data,
                         const Matrix& mask_plus, const Matrix& mask_minus,
                         const JointHyper& hyper) {
  detail::JointProblem p;
  p.A_plus = data.positives.to_dense();
  p.A_minus = data.negatives.to_dense();
  p.M_plus = mask_plus;
  p.M_minus = mask_minus;
  if (p.M_plus.rows() != p.A_plus.rows() || p.M_plus.cols() != p.A_plus.cols() ||
      p.M_minus.rows() != p.A_minus.rows() ||
      p.M_minus.cols() != p.A_minus.cols())
    throw ShapeError("lagrangian: mask shape does not match data");
  p.y_plus.assign(data.positives.n_rows(), 1);
  p.y_minus.assign(data.negatives.n_rows(), -1);
  return detail::lagrangian_value(state, p, hyper);
}

struct AdmmTrace {
  std::vector<double> lagrangian;
  std::vector<double> primal;
  std::vector<double> dual;
};

struct JointModel {
  SlimModel W_plus;
  SlimModel W_minus;
  LogRModel logr;
  MaskVariant variant = MaskVariant::inclusive;
  JointHyper hyper;
  SolveInfo info;
};

// Consensus training: W-update (coupled SLIM least squares), Z-update
// (masked logistic regression + least squares), (x, c)-update (logistic
// regression on masked reconstructions), then dual ascent, repeated until the
// primal and dual residuals fall under tol * n. Init: W and Z from the
// standalone SLIM fits, (x, c) from a standalone fit on the raw binary rows,
// multipliers at zero.
inline JointModel train_joint(const LabeledDataset& data,
                              const JointHyper& hyper, MaskVariant variant,
                              AdmmTrace* trace = nullptr,
                              AdmmState* final_state = nullptr) {
  hyper.validate();
  if (data.positives.n_rows() == 0 || data.negatives.n_rows() == 0)
    throw DatasetError("train_joint: both classes must be non-empty");
  const int n = data.n_drugs();
  const auto problem = detail::JointProblem::build(data, variant);

  AdmmState s;
  s.W_plus = train_slim(problem.A_plus, hyper.slim).W;
  s.W_minus = train_slim(problem.A_minus, hyper.slim).W;
  s.Z_plus = s.W_plus;
  s.Z_minus = s.W_minus;
  s.Z_plus_prev = s.Z_plus;
  s.Z_minus_prev = s.Z_minus;
  s.U_plus = Matrix::Zero(n, n);
  s.U_minus = Matrix::Zero(n, n);

  {
    Matrix f0(problem.A_plus.rows() + problem.A_minus.rows(), n);
    f0 << problem.A_plus, problem.A_minus;
    std::vector<int> y0(problem.y_plus);
    y0.insert(y0.end(), problem.y_minus.begin(), problem.y_minus.end());
    LogRModel init = train_logr(f0, y0, hyper.logr);
    s.x = std::move(init.x);
    s.c = init.c;
  }

  const double initial_lagrangian = detail::lagrangian_value(s, problem, hyper);
  if (trace) trace->lagrangian.push_back(initial_lagrangian);

  std::vector<double> steps_plus(n), steps_minus(n);
  for (int j = 0; j < n; ++j) {
    steps_plus[j] = 1.0 / detail::SlimColumn{problem.G_plus, j, hyper.slim.alpha,
                                             hyper.slim.lambda, hyper.rho_plus}
                              .lipschitz_start();
    steps_minus[j] = 1.0 / detail::SlimColumn{problem.G_minus, j,
                                              hyper.slim.alpha, hyper.slim.lambda,
                                              hyper.rho_minus}
                               .lipschitz_start();
  }
  double z_step_plus = 1.0, z_step_minus = 1.0;
  const double residual_tol = hyper.tol * n;

  SolveInfo info;
  for (int k = 1; k <= hyper.max_admm_iters; ++k) {
    detail::admm_w_update(s.W_plus, problem.G_plus, s.Z_plus, s.U_plus,
                          hyper.slim, hyper.rho_plus, hyper.inner_iters,
                          steps_plus);
    detail::admm_w_update(s.W_minus, problem.G_minus, s.Z_minus, s.U_minus,
                          hyper.slim, hyper.rho_minus, hyper.inner_iters,
                          steps_minus);

    s.Z_plus_prev = s.Z_plus;
    s.Z_minus_prev = s.Z_minus;
    detail::admm_z_update(s.Z_plus, problem.A_plus, problem.M_plus, s.W_plus,
                          s.U_plus, s.x, s.c, problem.y_plus, hyper.omega,
                          hyper.rho_plus, hyper.inner_iters, z_step_plus);
    detail::admm_z_update(s.Z_minus, problem.A_minus, problem.M_minus,
                          s.W_minus, s.U_minus, s.x, s.c, problem.y_minus,
                          hyper.omega, hyper.rho_minus, hyper.inner_iters,
                          z_step_minus);

    if (hyper.omega > 0.0) {
      Matrix f(problem.A_plus.rows() + problem.A_minus.rows(), n);
      f << admm_logr_features(problem.A_plus, s.Z_plus, problem.M_plus),
          admm_logr_features(problem.A_minus, s.Z_minus, problem.M_minus);
      std::vector<int> y(problem.y_plus);
      y.insert(y.end(), problem.y_minus.begin(), problem.y_minus.end());
      // the objective carries one regularized label term per class, so the
      // stacked subproblem sees the x-penalties twice
      LogRHyper inner = hyper.logr;
      inner.beta = 2.0 * hyper.logr.beta;
      inner.gamma = 2.0 * hyper.logr.gamma;
      inner.max_iters = hyper.inner_iters;
      LogRModel warm{s.x, s.c, {}};
      LogRModel next = train_logr(f, y, inner, &warm);
      s.x = std::move(next.x);
      s.c = next.c;
    }

    s.U_plus += hyper.rho_plus * (s.W_plus - s.Z_plus);
    s.U_minus += hyper.rho_minus * (s.W_minus - s.Z_minus);

    auto [primal, dual] = admm_residuals(s, hyper);
    s.primal_residual = primal;
    s.dual_residual = dual;
    s.iter = k;
    info.iterations = k;

    double lag = detail::lagrangian_value(s, problem, hyper);
    if (trace) {
      trace->lagrangian.push_back(lag);
      trace->primal.push_back(primal);
      trace->dual.push_back(dual);
    }
    if (lag > 10.0 * initial_lagrangian && lag > initial_lagrangian) {
      std::ostringstream msg;
      msg << "train_joint diverged at iteration " << k << ": lagrangian " << lag
          << " exceeds 10x initial " << initial_lagrangian
          << " (primal=" << primal << ", dual=" << dual << ")";
      throw DivergenceError(msg.str());
    }
    if (primal < residual_tol && dual < residual_tol) {
      info.converged = true;
      break;
    }
  }

  info.objective = detail::lagrangian_value(s, problem, hyper);
  if (final_state) *final_state = s;

  JointModel model;
  model.W_plus = SlimModel{s.W_plus, hyper.slim, info};
  model.W_minus = SlimModel{s.W_minus, hyper.slim, info};
  model.logr = LogRModel{s.x, s.c, info};
  model.variant = variant;
  model.hyper = hyper;
  model.info = info;
  return model;
}

}  // namespace polyrx
