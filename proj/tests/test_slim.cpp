#include <catch2/catch.hpp>

#include "oracles.hpp"
#include "polyrx/slim.hpp"

using namespace polyrx;

namespace {

Matrix random_binary(Rng& rng, int m, int n, double density) {
  Matrix a = Matrix::Zero(m, n);
  for (int i = 0; i < m; ++i) {
    int nz = 0;
    for (int j = 0; j < n; ++j)
      if (rng.bernoulli(density)) {
        a(i, j) = 1.0;
        ++nz;
      }
    if (nz == 0) a(i, static_cast<int>(rng.below(n))) = 1.0;
  }
  return a;
}

}  // namespace

TEST_CASE("slim objective closed forms") {
  SlimHyper unit{1.0, 1.0};
  Matrix a1(1, 1);
  a1 << 1.0;
  Matrix w1 = Matrix::Zero(1, 1);
  CHECK(slim_objective(a1, w1, unit) == Approx(0.5));

  SlimHyper zero{0.0, 0.0};
  Matrix a2(1, 2);
  a2 << 1.0, 1.0;
  CHECK(slim_objective(a2, Matrix::Zero(2, 2), zero) == Approx(1.0));

  Matrix w2(2, 2);
  w2 << 0, 1, 1, 0;
  CHECK(slim_objective(a2, w2, zero) == Approx(0.0));

  CHECK_THROWS_AS(slim_objective(a2, w1, zero), ShapeError);
}

TEST_CASE("slim smooth gradient matches central differences") {
  Rng rng(101);
  Matrix a = random_binary(rng, 6, 4, 0.5);
  Matrix w(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) w(i, j) = rng.uniform01();
  const double alpha = 3.0;
  SlimHyper smooth_only{alpha, 0.0};
  Matrix grad = slim_smooth_gradient(a, w, alpha);
  for (int point = 0; point < 25; ++point) {
    int i = static_cast<int>(rng.below(4));
    int j = static_cast<int>(rng.below(4));
    const double h = 1e-6 * std::max(1.0, std::abs(w(i, j)));
    Matrix wp = w, wm = w;
    wp(i, j) += h;
    wm(i, j) -= h;
    double fd = (slim_objective(a, wp, smooth_only) -
                 slim_objective(a, wm, smooth_only)) /
                (2 * h);
    CHECK(oracle::rel_err(grad(i, j), fd) < 1e-5);
  }
}

TEST_CASE("training recovers the perfectly co-occurring pair") {
  // 5 x 3 instance: drugs 0 and 1 always appear together.
  Matrix a(5, 3);
  a << 1, 1, 0,
       1, 1, 0,
       1, 1, 1,
       0, 0, 1,
       1, 1, 0;
  SlimHyper hyper{0.1, 0.01, 4000, 1e-12};
  SlimModel model = train_slim(a, hyper);

  Matrix ref = oracle::slim_reference(a, hyper.alpha, hyper.lambda, 60000);
  double ref_obj = slim_objective(a, ref, hyper);
  CHECK(model.info.objective <= ref_obj + 1e-6);

  // both routes agree that (0,1) and (1,0) dominate every other entry
  auto top_pair_holds = [](const Matrix& w) {
    double lead = std::min(w(0, 1), w(1, 0));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        if ((i == 0 && j == 1) || (i == 1 && j == 0) || i == j) continue;
        if (w(i, j) >= lead) return false;
      }
    return true;
  };
  CHECK(top_pair_holds(model.W));
  CHECK(top_pair_holds(ref));
}

TEST_CASE("single drug forces the zero model") {
  Matrix a(2, 1);
  a << 1, 1;
  SlimModel model = train_slim(a, SlimHyper{0.5, 0.1});
  CHECK(model.W(0, 0) == 0.0);
}

TEST_CASE("huge L1 weight drives W to zero") {
  Rng rng(5);
  Matrix a = random_binary(rng, 8, 5, 0.5);
  SlimModel model = train_slim(a, SlimHyper{1.0, 1e6});
  CHECK(model.W.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("solver never loses to the zero matrix") {
  Rng rng(17);
  for (int rep = 0; rep < 5; ++rep) {
    Matrix a = random_binary(rng, 10, 6, 0.4);
    SlimHyper hyper{2.0, 0.05};
    SlimModel model = train_slim(a, hyper);
    CHECK(model.info.objective <=
          slim_objective(a, Matrix::Zero(6, 6), hyper) + 1e-12);
  }
}

TEST_CASE("constraints hold after every iteration") {
  Rng rng(23);
  Matrix a = random_binary(rng, 12, 5, 0.5);
  for (int budget = 1; budget <= 8; ++budget) {
    SlimHyper hyper{0.3, 0.02, budget, 1e-14};
    SlimModel model = train_slim(a, hyper);
    CHECK(model.W.minCoeff() >= 0.0);
    CHECK(model.W.diagonal().cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("objective trace is non-increasing") {
  Rng rng(29);
  Matrix a = random_binary(rng, 15, 6, 0.4);
  std::vector<double> trace;
  train_slim(a, SlimHyper{0.5, 0.01, 300, 1e-10}, &trace);
  REQUIRE(trace.size() >= 2);
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] <= trace[i - 1] + 1e-9 * std::max(1.0, trace[i - 1]));
}

TEST_CASE("columns train independently") {
  Rng rng(31);
  Matrix a = random_binary(rng, 10, 4, 0.5);
  SlimHyper hyper{1.0, 0.05, 5000, 1e-12};
  SlimModel full = train_slim(a, hyper);

  const Matrix g = a.transpose() * a;
  for (int j = 0; j < 4; ++j) {
    detail::SlimColumn prob{g, j, hyper.alpha, hyper.lambda};
    Vector w = Vector::Zero(4);
    double t = 1.0 / prob.lipschitz_start();
    double obj = prob.value(w);
    for (int it = 0; it < 5000; ++it)
      if (!detail::slim_prox_step(prob, w, t, obj)) break;
    CHECK((full.W.col(j) - w).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("scores aggregate rows of W") {
  Matrix w(2, 2);
  w << 0.0, 0.5,
       0.3, 0.0;
  Vector s0 = slim_score(w, Prescription{0});
  CHECK(s0[0] == Approx(0.0));
  CHECK(s0[1] == Approx(0.5));

  Vector s01 = slim_score(w, Prescription{0, 1});
  CHECK(s01[0] == Approx(0.3));
  CHECK(s01[1] == Approx(0.5));

  CHECK_THROWS_AS(Prescription(std::vector<int>{}), Error);
  CHECK_THROWS_AS(slim_score(w, Prescription{2}), VocabError);
}
