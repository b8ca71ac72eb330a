#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "polyrx/joint.hpp"
#include "polyrx/recommend.hpp"

using namespace polyrx;

namespace {

DrugVocabulary tiny_vocab(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("drug" + std::to_string(i));
  return DrugVocabulary(std::move(names));
}

LabeledDataset planted_three_drugs() {
  // positive-only pair (0,1), negative-only pair (1,2)
  return LabeledDataset(
      PrescriptionMatrix({Prescription{0, 1}}, 3),
      PrescriptionMatrix({Prescription{1, 2}}, 3), tiny_vocab(3));
}

LabeledDataset random_dataset(Rng& rng, int n, int rows_per_class,
                              double density = 0.5) {
  auto draw_rows = [&](int count) {
    PrescriptionSet seen;  // unique within a class only
    std::vector<Prescription> rows;
    long attempts = 0;
    while (static_cast<int>(rows.size()) < count) {
      if (++attempts > 200000)
        throw std::runtime_error("random_dataset: space too small");
      std::vector<int> ids;
      for (int d = 0; d < n; ++d)
        if (rng.bernoulli(density)) ids.push_back(d);
      if (ids.size() < 2) continue;
      Prescription rx(std::move(ids));
      if (!seen.insert(rx).second) continue;
      rows.push_back(std::move(rx));
    }
    return rows;
  };
  auto pos = draw_rows(rows_per_class);
  auto neg = draw_rows(rows_per_class);
  return LabeledDataset(PrescriptionMatrix(pos, n),
                        PrescriptionMatrix(neg, n), tiny_vocab(n));
}

JointHyper small_hyper() {
  JointHyper h;
  h.omega = 2.0;
  h.slim = SlimHyper{0.5, 0.01, 400, 1e-8};
  h.logr = LogRHyper{0.01, 0.001, 400, 1e-7};
  h.max_admm_iters = 120;
  h.inner_iters = 25;
  h.tol = 1e-4;
  return h;
}

}  // namespace

TEST_CASE("masks: inclusive is all ones, exclusive is the indicator of A") {
  PrescriptionMatrix a({Prescription{0}}, 2);
  Matrix inc = make_mask(a, MaskVariant::inclusive);
  REQUIRE(inc.rows() == 1);
  CHECK(inc(0, 0) == 1.0);
  CHECK(inc(0, 1) == 1.0);

  Matrix exc = make_mask(a, MaskVariant::exclusive);
  CHECK(exc(0, 0) == 1.0);
  CHECK(exc(0, 1) == 0.0);

  // zeros of A stay zero in the exclusive mask
  PrescriptionMatrix b({Prescription{1}, Prescription{0, 1}}, 2);
  Matrix exc2 = make_mask(b, MaskVariant::exclusive);
  CHECK(exc2 == b.to_dense());
}

TEST_CASE("lagrangian reduces to the joint objective when W = Z, u = 0") {
  Rng rng(41);
  LabeledDataset data = random_dataset(rng, 4, 5);
  JointHyper h = small_hyper();
  const int n = 4;

  AdmmState s;
  s.W_plus = Matrix::Zero(n, n);
  s.W_minus = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        s.W_plus(i, j) = rng.uniform01();
        s.W_minus(i, j) = rng.uniform01();
      }
  s.Z_plus = s.W_plus;
  s.Z_minus = s.W_minus;
  s.Z_plus_prev = s.Z_plus;
  s.Z_minus_prev = s.Z_minus;
  s.U_plus = Matrix::Zero(n, n);
  s.U_minus = Matrix::Zero(n, n);
  s.x = Vector::Zero(n);
  for (int j = 0; j < n; ++j) s.x[j] = rng.uniform01() - 0.5;
  s.c = 0.3;

  Matrix mp = make_mask(data.positives, MaskVariant::inclusive);
  Matrix mm = make_mask(data.negatives, MaskVariant::inclusive);
  double lag = lagrangian(s, data, mp, mm, h);

  std::vector<int> yp(data.positives.n_rows(), 1);
  std::vector<int> ym(data.negatives.n_rows(), -1);
  double direct =
      slim_objective(data.positives, s.W_plus, h.slim) +
      slim_objective(data.negatives, s.W_minus, h.slim) +
      h.omega *
          (logr_objective(
               admm_logr_features(data.positives.to_dense(), s.Z_plus, mp), yp,
               s.x, s.c, h.logr) +
           logr_objective(
               admm_logr_features(data.negatives.to_dense(), s.Z_minus, mm),
               ym, s.x, s.c, h.logr));
  CHECK(lag == Approx(direct));

  SECTION("omega = 0 leaves the two fit objectives plus coupling") {
    JointHyper h0 = h;
    h0.omega = 0.0;
    // push W away from Z and turn the multipliers on
    s.Z_plus.setConstant(0.05);
    s.Z_plus.diagonal().setZero();
    s.U_plus.setConstant(0.2);
    double expected =
        slim_objective(data.positives, s.W_plus, h0.slim) +
        slim_objective(data.negatives, s.W_minus, h0.slim) +
        s.U_plus.cwiseProduct(s.W_plus - s.Z_plus).sum() +
        0.5 * h0.rho_plus * (s.W_plus - s.Z_plus).squaredNorm();
    CHECK(lagrangian(s, data, mp, mm, h0) == Approx(expected));
  }
}

TEST_CASE("perturbing Z moves the lagrangian by the quadratic plus the label change") {
  LabeledDataset data = planted_three_drugs();
  JointHyper h = small_hyper();
  const int n = 3;

  AdmmState s;
  s.W_plus = Matrix::Zero(n, n);
  s.W_plus(0, 1) = 0.6;
  s.W_plus(1, 0) = 0.4;
  s.W_minus = Matrix::Zero(n, n);
  s.W_minus(1, 2) = 0.5;
  s.Z_plus = s.W_plus;
  s.Z_minus = s.W_minus;
  s.Z_plus_prev = s.Z_plus;
  s.Z_minus_prev = s.Z_minus;
  s.U_plus = Matrix::Zero(n, n);
  s.U_minus = Matrix::Zero(n, n);
  s.x = Vector::Zero(n);
  s.x << 0.5, -0.2, 0.1;
  s.c = -0.1;

  Matrix mp = make_mask(data.positives, MaskVariant::inclusive);
  Matrix mm = make_mask(data.negatives, MaskVariant::inclusive);

  Matrix delta = Matrix::Zero(n, n);
  delta(0, 1) = 0.3;
  delta(2, 0) = -0.2;

  double before = lagrangian(s, data, mp, mm, h);
  std::vector<int> yp(data.positives.n_rows(), 1);
  double logr_before = logr_objective(
      admm_logr_features(data.positives.to_dense(), s.Z_plus, mp), yp, s.x,
      s.c, h.logr);

  AdmmState moved = s;
  moved.Z_plus += delta;
  double after = lagrangian(moved, data, mp, mm, h);
  double logr_after = logr_objective(
      admm_logr_features(data.positives.to_dense(), moved.Z_plus, mp), yp, s.x,
      s.c, h.logr);

  double expected_change = 0.5 * h.rho_plus * delta.squaredNorm() +
                           h.omega * (logr_after - logr_before);
  CHECK(after - before == Approx(expected_change).margin(1e-9));
}

TEST_CASE("admm residual formulas") {
  JointHyper h;
  AdmmState s;
  s.W_plus = Matrix::Ones(2, 2);
  s.Z_plus = s.W_plus;
  s.Z_plus_prev = s.Z_plus;
  s.W_minus = Matrix::Zero(2, 2);
  s.Z_minus = s.W_minus;
  s.Z_minus_prev = s.Z_minus;
  auto [p0, d0] = admm_residuals(s, h);
  CHECK(p0 == 0.0);
  CHECK(d0 == 0.0);

  s.Z_plus = Matrix::Zero(2, 2);   // W - Z = ones: frobenius norm 2
  s.Z_plus_prev = s.Z_plus;
  s.W_minus = Matrix::Ones(2, 2);  // second class contributes another 2
  auto [p1, d1] = admm_residuals(s, h);
  CHECK(p1 == Approx(4.0));
  CHECK(d1 == 0.0);

  s.Z_minus_prev = Matrix::Ones(2, 2) * 0.5;  // Z moved by 0.5 everywhere
  auto [p2, d2] = admm_residuals(s, h);
  CHECK(d2 == Approx(h.rho_minus * 1.0));
}

TEST_CASE("subproblem gradients match central differences") {
  Rng rng(53);
  LabeledDataset data = random_dataset(rng, 4, 6);
  const int n = 4;
  Matrix a = data.positives.to_dense();
  Matrix mask = make_mask(data.positives, MaskVariant::exclusive);
  std::vector<int> y(data.positives.n_rows(), 1);

  Matrix w(n, n), z(n, n), u(n, n);
  Vector x(n);
  for (int i = 0; i < n; ++i) {
    x[i] = rng.uniform01() - 0.5;
    for (int j = 0; j < n; ++j) {
      w(i, j) = rng.uniform01();
      z(i, j) = rng.uniform01();
      u(i, j) = rng.uniform01() - 0.5;
    }
  }
  const double alpha = 0.7, rho = 10.0, omega = 2.5, c = 0.2;

  SECTION("W-subproblem") {
    Matrix grad = w_subproblem_smooth_gradient(a, w, z, u, alpha, rho);
    for (int rep = 0; rep < 20; ++rep) {
      int i = static_cast<int>(rng.below(n));
      int j = static_cast<int>(rng.below(n));
      double h = 1e-6;
      Matrix wp = w, wm = w;
      wp(i, j) += h;
      wm(i, j) -= h;
      double fd = (w_subproblem_smooth_value(a, wp, z, u, alpha, rho) -
                   w_subproblem_smooth_value(a, wm, z, u, alpha, rho)) /
                  (2 * h);
      CHECK(oracle::rel_err(grad(i, j), fd) < 1e-5);
    }
  }

  SECTION("Z-subproblem") {
    Matrix grad = z_subproblem_gradient(z, a, mask, w, u, x, c, y, omega, rho);
    for (int rep = 0; rep < 20; ++rep) {
      int i = static_cast<int>(rng.below(n));
      int j = static_cast<int>(rng.below(n));
      double h = 1e-6;
      Matrix zp = z, zm = z;
      zp(i, j) += h;
      zm(i, j) -= h;
      double fd = (z_subproblem_value(zp, a, mask, w, u, x, c, y, omega, rho) -
                   z_subproblem_value(zm, a, mask, w, u, x, c, y, omega, rho)) /
                  (2 * h);
      CHECK(oracle::rel_err(grad(i, j), fd) < 1e-5);
    }
  }
}

TEST_CASE("omega = 0 training reproduces the standalone fits") {
  Rng rng(61);
  LabeledDataset data = random_dataset(rng, 4, 10);
  JointHyper h = small_hyper();
  h.omega = 0.0;

  JointModel joint = train_joint(data, h, MaskVariant::inclusive);
  SlimModel solo_plus = train_slim(data.positives, h.slim);
  SlimModel solo_minus = train_slim(data.negatives, h.slim);

  double joint_obj_plus = slim_objective(data.positives, joint.W_plus.W, h.slim);
  double joint_obj_minus =
      slim_objective(data.negatives, joint.W_minus.W, h.slim);
  CHECK(std::abs(joint_obj_plus - solo_plus.info.objective) < 1e-4);
  CHECK(std::abs(joint_obj_minus - solo_minus.info.objective) < 1e-4);
}

TEST_CASE("iteration zero starts from the standalone solutions") {
  Rng rng(67);
  LabeledDataset data = random_dataset(rng, 4, 8);
  JointHyper h = small_hyper();
  h.max_admm_iters = 0;

  AdmmState state;
  train_joint(data, h, MaskVariant::inclusive, nullptr, &state);

  SlimModel solo_plus = train_slim(data.positives, h.slim);
  SlimModel solo_minus = train_slim(data.negatives, h.slim);
  CHECK(state.W_plus == solo_plus.W);
  CHECK(state.W_minus == solo_minus.W);
  CHECK(state.Z_plus == state.W_plus);
  CHECK(state.Z_minus == state.W_minus);
  CHECK(state.U_plus.cwiseAbs().maxCoeff() == 0.0);
  CHECK(state.U_minus.cwiseAbs().maxCoeff() == 0.0);

  Matrix f(data.positives.n_rows() + data.negatives.n_rows(), 4);
  f << data.positives.to_dense(), data.negatives.to_dense();
  std::vector<int> y(data.positives.n_rows(), 1);
  y.insert(y.end(), data.negatives.n_rows(), -1);
  LogRModel solo_logr = train_logr(f, y, h.logr);
  CHECK(state.x == solo_logr.x);
  CHECK(state.c == solo_logr.c);
}

TEST_CASE("planted pair drives the to-avoid recommendation") {
  LabeledDataset data = planted_three_drugs();
  JointHyper h;
  h.omega = 5.0;
  h.slim = SlimHyper{0.1, 1e-4, 1000, 1e-10};
  h.logr = LogRHyper{1e-4, 1e-4, 1000, 1e-8};
  h.max_admm_iters = 200;
  h.inner_iters = 25;
  h.tol = 1e-6;

  AdmmTrace trace;
  JointModel model = train_joint(data, h, MaskVariant::inclusive, &trace);

  // brute force over single-drug additions to the positive singleton {0}
  Prescription base{0};
  Vector scores = slim_score(model.W_plus, base);
  int best = -1;
  double best_key = -1;
  for (int d = 1; d < 3; ++d) {
    if (scores[d] <= 0.0) continue;
    double p = predict_proba(model.logr, to_dense_row(base.with(d), 3), 1);
    if (p > best_key) {
      best_key = p;
      best = d;
    }
  }
  CHECK(best == 1);

  RecConfig cfg{2, 1, Prediction::content, Direction::to_avoid};
  auto recs = recommend(model, base, cfg);
  REQUIRE(!recs.empty());
  CHECK(recs[0].drug == 1);
  CHECK(recs[0].rank == 1);

  SECTION("fifty iterations keep residuals finite and shrink the primal") {
    JointHyper h50 = h;
    h50.max_admm_iters = 50;
    h50.tol = 1e-14;  // force all 50 iterations
    AdmmTrace t50;
    train_joint(data, h50, MaskVariant::inclusive, &t50);
    REQUIRE(t50.primal.size() == 50);
    for (double v : t50.primal) CHECK(std::isfinite(v));
    for (double v : t50.dual) CHECK(std::isfinite(v));
    CHECK(t50.primal.back() < t50.primal.front());
  }
}

TEST_CASE("returned models are exactly feasible and consensual") {
  Rng rng(71);
  for (int rep = 0; rep < 3; ++rep) {
    LabeledDataset data = random_dataset(rng, 5, 9);
    JointHyper h = small_hyper();
    AdmmState state;
    JointModel model = train_joint(data, h, MaskVariant::inclusive, nullptr,
                                   &state);
    CHECK(model.W_plus.W.minCoeff() >= 0.0);
    CHECK(model.W_minus.W.minCoeff() >= 0.0);
    CHECK(model.W_plus.W.diagonal().cwiseAbs().maxCoeff() == 0.0);
    CHECK(model.W_minus.W.diagonal().cwiseAbs().maxCoeff() == 0.0);
    if (model.info.converged) {
      CHECK((state.W_plus - state.Z_plus).norm() / 5 < 10 * h.tol);
      CHECK((state.W_minus - state.Z_minus).norm() / 5 < 10 * h.tol);
    }
  }
}

TEST_CASE("lagrangian converges empirically under the dual-ascent bound") {
  // Per-iteration the dual update can raise the lagrangian by at most
  // rho * primal^2 (the block updates never raise it); over the whole run it
  // must come down.
  Rng rng(79);
  for (int rep = 0; rep < 4; ++rep) {
    LabeledDataset data = random_dataset(rng, 4, 8);
    JointHyper h = small_hyper();
    h.max_admm_iters = 60;
    AdmmTrace trace;
    train_joint(data, h, MaskVariant::inclusive, &trace);
    REQUIRE(trace.lagrangian.size() >= 2);
    double rho = std::max(h.rho_plus, h.rho_minus);
    for (std::size_t i = 1; i < trace.lagrangian.size(); ++i) {
      double bound = rho * trace.primal[i - 1] * trace.primal[i - 1];
      CHECK(trace.lagrangian[i] <=
            trace.lagrangian[i - 1] + bound +
                1e-8 * std::max(1.0, std::abs(trace.lagrangian[i - 1])));
    }
    CHECK(trace.lagrangian.back() <= trace.lagrangian.front());
  }
}

TEST_CASE("block updates never raise the lagrangian") {
  Rng rng(83);
  LabeledDataset data = random_dataset(rng, 4, 8);
  JointHyper h = small_hyper();
  auto problem = detail::JointProblem::build(data, MaskVariant::inclusive);
  const int n = 4;

  AdmmState s;
  s.W_plus = train_slim(problem.A_plus, h.slim).W;
  s.W_minus = train_slim(problem.A_minus, h.slim).W;
  s.Z_plus = s.W_plus;
  s.Z_minus = s.W_minus;
  s.Z_plus_prev = s.Z_plus;
  s.Z_minus_prev = s.Z_minus;
  s.U_plus = Matrix::Constant(n, n, 0.05);
  s.U_minus = Matrix::Constant(n, n, -0.05);
  s.x = Vector::Constant(n, 0.2);
  s.c = 0.1;

  auto lag = [&] { return detail::lagrangian_value(s, problem, h); };

  std::vector<double> steps(n, 0.0);
  for (int j = 0; j < n; ++j)
    steps[j] = 1.0 / detail::SlimColumn{problem.G_plus, j, h.slim.alpha,
                                        h.slim.lambda, h.rho_plus}
                         .lipschitz_start();
  double before = lag();
  detail::admm_w_update(s.W_plus, problem.G_plus, s.Z_plus, s.U_plus, h.slim,
                        h.rho_plus, h.inner_iters, steps);
  double after_w = lag();
  CHECK(after_w <= before + 1e-9);

  double zstep = 1.0;
  detail::admm_z_update(s.Z_plus, problem.A_plus, problem.M_plus, s.W_plus,
                        s.U_plus, s.x, s.c, problem.y_plus, h.omega, h.rho_plus,
                        h.inner_iters, zstep);
  double after_z = lag();
  CHECK(after_z <= after_w + 1e-9);

  Matrix f(problem.A_plus.rows() + problem.A_minus.rows(), n);
  f << admm_logr_features(problem.A_plus, s.Z_plus, problem.M_plus),
      admm_logr_features(problem.A_minus, s.Z_minus, problem.M_minus);
  std::vector<int> y(problem.y_plus);
  y.insert(y.end(), problem.y_minus.begin(), problem.y_minus.end());
  LogRHyper inner = h.logr;
  inner.beta = 2.0 * h.logr.beta;  // one regularized label term per class
  inner.gamma = 2.0 * h.logr.gamma;
  inner.max_iters = h.inner_iters;
  LogRModel warm{s.x, s.c, {}};
  LogRModel next = train_logr(f, y, inner, &warm);
  s.x = next.x;
  s.c = next.c;
  CHECK(lag() <= after_z + 1e-9);
}
