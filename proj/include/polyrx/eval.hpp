#pragma once

#include "polyrx/recommend.hpp"

#include <optional>

namespace polyrx {

struct FoldPlan {
  std::vector<int> assignments;  // row index -> fold id
  std::uint64_t seed = 0;
  int n_folds = 5;

  // Shuffled round-robin split: fold sizes differ by at most one.
  static FoldPlan make(std::size_t n_rows, int n_folds, std::uint64_t seed) {
    if (n_folds < 2) throw Error("fold plan needs at least 2 folds");
    std::vector<std::size_t> order(n_rows);
    for (std::size_t i = 0; i < n_rows; ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    FoldPlan plan;
    plan.assignments.assign(n_rows, 0);
    plan.seed = seed;
    plan.n_folds = n_folds;
    for (std::size_t i = 0; i < n_rows; ++i)
      plan.assignments[order[i]] = static_cast<int>(i % n_folds);
    return plan;
  }
};

// Held-out labeled prescriptions the recommended new prescriptions are
// searched in. Disjoint from the training rows by construction.
struct KnowledgePool {
  PrescriptionSet pool_plus;
  PrescriptionSet pool_minus;
};

struct MetricReport {
  double rec_t = 0.0, prec_t = 0.0, acc_t = 0.0;
  double rec_t_max = 0.0, prec_t_max = 0.0, acc_t_max = 0.0;
  double rec_norm = 0.0, prec_norm = 0.0, acc_norm = 0.0;
  // A best-possible denominator of zero reports a flagged 0, never NaN.
  bool rec_flagged = false, prec_flagged = false, acc_flagged = false;
};

struct TestCase {
  Prescription reduced;
  int removed = -1;
};

// One drug removed uniformly at random from each row; the row is dropped when
// the reduced prescription itself is in the positive universe, and skipped
// with a warning count when it has fewer than two drugs. Draw protocol for
// replay: one Rng::below(row size) per eligible row, in row order.
inline std::vector<TestCase> make_test_set(const PrescriptionMatrix& fold_rows,
                                           const PrescriptionSet& positives,
                                           std::uint64_t seed,
                                           std::size_t* skipped = nullptr) {
  Rng rng(seed);
  std::vector<TestCase> out;
  if (skipped) *skipped = 0;
  for (const auto& row : fold_rows.rows()) {
    if (row.size() < 2) {
      if (skipped) ++*skipped;
      continue;
    }
    auto ids = row.ids();
    int removed = ids[rng.below(ids.size())];
    Prescription reduced = row.without(removed);
    if (positives.count(reduced)) continue;
    out.push_back({std::move(reduced), removed});
  }
  return out;
}

// Pooled truncated recall / precision / accuracy with their best achievable
// values given N recommendations per test prescription.
inline MetricReport truncated_metrics(
    const std::vector<TestCase>& tests,
    const std::vector<std::vector<Recommendation>>& recs_to_avoid,
    const std::vector<std::vector<Recommendation>>& recs_safe,
    const KnowledgePool& pool, int N, int n_drugs) {
  if (recs_to_avoid.size() != tests.size() || recs_safe.size() != tests.size())
    throw ShapeError("truncated_metrics: recommendation lists do not align");
  if (N < 1) throw Error("truncated_metrics: N must be >= 1");

  const double m = static_cast<double>(tests.size());
  double sum_tp = 0, sum_tn = 0, sum_p = 0, sum_q = 0;
  double sum_min_p = 0, sum_min_q = 0;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const Prescription& a = tests[i].reduced;
    double p_i = 0, q_i = 0;
    for (int d = 0; d < n_drugs; ++d) {
      if (a.contains(d)) continue;
      Prescription extended = a.with(d);
      if (pool.pool_plus.count(extended)) p_i += 1;
      if (pool.pool_minus.count(extended)) q_i += 1;
    }
    double tp_i = 0, tn_i = 0;
    for (const auto& r : recs_to_avoid[i])
      if (pool.pool_plus.count(a.with(r.drug))) tp_i += 1;
    for (const auto& r : recs_safe[i])
      if (pool.pool_minus.count(a.with(r.drug))) tn_i += 1;
    sum_tp += tp_i;
    sum_tn += tn_i;
    sum_p += p_i;
    sum_q += q_i;
    sum_min_p += std::min<double>(N, p_i);
    sum_min_q += std::min<double>(N, q_i);
  }

  MetricReport rep;
  const double rec_den = sum_p;
  const double prec_den = m * N;  // #TP + #FP
  const double acc_den = 2.0 * m * N;

  if (rec_den > 0) {
    rep.rec_t = sum_tp / rec_den;
    rep.rec_t_max = sum_min_p / rec_den;
  } else {
    rep.rec_flagged = true;
  }
  if (prec_den > 0) {
    rep.prec_t = sum_tp / prec_den;
    rep.prec_t_max = sum_min_p / prec_den;
  } else {
    rep.prec_flagged = true;
  }
  if (acc_den > 0) {
    rep.acc_t = (sum_tp + sum_tn) / acc_den;
    rep.acc_t_max = (sum_min_p + sum_min_q) / acc_den;
  } else {
    rep.acc_flagged = true;
  }

  auto normalize = [](double raw, double max, bool& flag) {
    if (max > 0) return raw / max;
    flag = true;
    return 0.0;
  };
  rep.rec_norm = normalize(rep.rec_t, rep.rec_t_max, rep.rec_flagged);
  rep.prec_norm = normalize(rep.prec_t, rep.prec_t_max, rep.prec_flagged);
  rep.acc_norm = normalize(rep.acc_t, rep.acc_t_max, rep.acc_flagged);
  return rep;
}

enum class PoolMode { test_only, full_universe };
enum class Method { rand, logr, slim, slim_plus_logr, joint };

inline const char* to_string(PoolMode p) {
  return p == PoolMode::test_only ? "test" : "universe";
}

inline const char* to_string(Method m) {
  switch (m) {
    case Method::rand: return "rand";
    case Method::logr: return "logr";
    case Method::slim: return "slim";
    case Method::slim_plus_logr: return "slim+logr";
    case Method::joint: return "joint";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "rand") return Method::rand;
  if (s == "logr") return Method::logr;
  if (s == "slim") return Method::slim;
  if (s == "slim+logr" || s == "slim_plus_logr") return Method::slim_plus_logr;
  if (s == "joint") return Method::joint;
  throw Error("unknown method: " + s);
}

// A trained instance of any comparison method, uniform recommend() surface.
struct TrainedMethod {
  Method method = Method::joint;
  int n_drugs = 0;
  std::optional<JointModel> joint;
  std::optional<SlimModel> slim_plus, slim_minus;
  std::optional<LogRModel> logr;
};

inline TrainedMethod train_method(Method method, const LabeledDataset& train,
                                  const JointHyper& hyper, MaskVariant variant) {
  TrainedMethod tm;
  tm.method = method;
  tm.n_drugs = train.n_drugs();
  switch (method) {
    case Method::rand:
      break;
    case Method::logr: {
      Matrix f(train.positives.n_rows() + train.negatives.n_rows(),
               train.n_drugs());
      f << train.positives.to_dense(), train.negatives.to_dense();
      std::vector<int> y(train.positives.n_rows(), 1);
      y.insert(y.end(), train.negatives.n_rows(), -1);
      tm.logr = train_logr(f, y, hyper.logr);
      break;
    }
    case Method::slim:
      tm.slim_plus = train_slim(train.positives, hyper.slim);
      tm.slim_minus = train_slim(train.negatives, hyper.slim);
      break;
    case Method::slim_plus_logr: {
      tm.slim_plus = train_slim(train.positives, hyper.slim);
      tm.slim_minus = train_slim(train.negatives, hyper.slim);
      Matrix f(train.positives.n_rows() + train.negatives.n_rows(),
               train.n_drugs());
      f << train.positives.to_dense(), train.negatives.to_dense();
      std::vector<int> y(train.positives.n_rows(), 1);
      y.insert(y.end(), train.negatives.n_rows(), -1);
      tm.logr = train_logr(f, y, hyper.logr);
      break;
    }
    case Method::joint:
      tm.joint = train_joint(train, hyper, variant);
      break;
  }
  return tm;
}

inline std::vector<Recommendation> method_recommend(const TrainedMethod& tm,
                                                    const Prescription& a,
                                                    const RecConfig& cfg,
                                                    std::uint64_t rand_seed) {
  switch (tm.method) {
    case Method::rand:
      return baseline_rand(a, tm.n_drugs, cfg, rand_seed);
    case Method::logr:
      return baseline_logr(*tm.logr, a, cfg);
    case Method::slim:
      return baseline_slim(tm.slim_plus->W, tm.slim_minus->W, a, cfg);
    case Method::slim_plus_logr:
      return baseline_slim_plus_logr(*tm.slim_plus, *tm.slim_minus, *tm.logr,
                                     a, cfg);
    case Method::joint:
      return recommend(*tm.joint, a, cfg);
  }
  throw Error("method_recommend: unreachable");
}

struct EvalOptions {
  Method method = Method::joint;
  MaskVariant variant = MaskVariant::inclusive;
  Prediction prediction = Prediction::score;
  PoolMode pool = PoolMode::test_only;
  int M = 20;
  int N = 5;
  int n_folds = 5;
  std::uint64_t seed = 1;
};

struct CvResult {
  MetricReport mean;
  std::vector<MetricReport> folds;
  std::vector<std::size_t> test_counts;
};

// Five-fold cross validation: train on four folds, reduce each row of the
// held-out fold by one random drug, recommend, score against the knowledge
// pool, average the per-fold reports. The drop rule uses the full positive
// universe (the optional universe dataset when given, else the data itself).
inline CvResult run_cv(const LabeledDataset& data, const EvalOptions& opt,
                       const JointHyper& hyper,
                       const LabeledDataset* universe = nullptr) {
  const std::size_t n_pos = data.positives.n_rows();
  const std::size_t n_neg = data.negatives.n_rows();
  const std::size_t n_rows = n_pos + n_neg;
  if (n_rows < static_cast<std::size_t>(opt.n_folds))
    throw DatasetError("run_cv: fewer rows than folds");

  FoldPlan plan =
      FoldPlan::make(n_rows, opt.n_folds, derive_seed(opt.seed, 0));

  const LabeledDataset& uni = universe ? *universe : data;
  PrescriptionSet positive_universe(uni.positives.rows().begin(),
                                    uni.positives.rows().end());

  auto row_at = [&](std::size_t i) -> const Prescription& {
    return i < n_pos ? data.positives.rows()[i]
                     : data.negatives.rows()[i - n_pos];
  };

  CvResult result;
  for (int fold = 0; fold < opt.n_folds; ++fold) {
    std::vector<Prescription> train_pos, train_neg, test_rows;
    PrescriptionSet train_set;
    for (std::size_t i = 0; i < n_rows; ++i) {
      const Prescription& row = row_at(i);
      if (plan.assignments[i] == fold) {
        test_rows.push_back(row);
      } else {
        (i < n_pos ? train_pos : train_neg).push_back(row);
        train_set.insert(row);
      }
    }
    if (train_pos.empty() || train_neg.empty())
      throw DatasetError("run_cv: fold " + std::to_string(fold) +
                         " leaves an empty training class");

    LabeledDataset train(PrescriptionMatrix(train_pos, data.n_drugs()),
                         PrescriptionMatrix(train_neg, data.n_drugs()),
                         data.vocabulary);

    KnowledgePool pool;
    if (opt.pool == PoolMode::test_only) {
      for (std::size_t i = 0; i < n_rows; ++i) {
        if (plan.assignments[i] != fold) continue;
        (i < n_pos ? pool.pool_plus : pool.pool_minus).insert(row_at(i));
      }
    } else {
      for (const auto& row : uni.positives.rows())
        if (!train_set.count(row)) pool.pool_plus.insert(row);
      for (const auto& row : uni.negatives.rows())
        if (!train_set.count(row)) pool.pool_minus.insert(row);
    }

    PrescriptionMatrix test_matrix(test_rows, data.n_drugs());
    auto tests = make_test_set(test_matrix, positive_universe,
                               derive_seed(opt.seed, 100 + fold));

    TrainedMethod tm = train_method(opt.method, train, hyper, opt.variant);

    RecConfig cfg_avoid{opt.M, opt.N, opt.prediction, Direction::to_avoid};
    RecConfig cfg_safe{opt.M, opt.N, opt.prediction, Direction::safe};
    std::vector<std::vector<Recommendation>> recs_avoid(tests.size());
    std::vector<std::vector<Recommendation>> recs_safe(tests.size());
    for (std::size_t i = 0; i < tests.size(); ++i) {
      std::uint64_t rs =
          derive_seed(opt.seed, 200 + static_cast<std::uint64_t>(fold) * 1000003 +
                                    i * 2);
      recs_avoid[i] = method_recommend(tm, tests[i].reduced, cfg_avoid, rs);
      recs_safe[i] = method_recommend(tm, tests[i].reduced, cfg_safe, rs + 1);
    }

    result.folds.push_back(truncated_metrics(tests, recs_avoid, recs_safe,
                                             pool, opt.N, data.n_drugs()));
    result.test_counts.push_back(tests.size());
  }

  MetricReport mean;
  const double k = static_cast<double>(result.folds.size());
  for (const auto& r : result.folds) {
    mean.rec_t += r.rec_t / k;
    mean.prec_t += r.prec_t / k;
    mean.acc_t += r.acc_t / k;
    mean.rec_t_max += r.rec_t_max / k;
    mean.prec_t_max += r.prec_t_max / k;
    mean.acc_t_max += r.acc_t_max / k;
    mean.rec_norm += r.rec_norm / k;
    mean.prec_norm += r.prec_norm / k;
    mean.acc_norm += r.acc_norm / k;
    mean.rec_flagged = mean.rec_flagged || r.rec_flagged;
    mean.prec_flagged = mean.prec_flagged || r.prec_flagged;
    mean.acc_flagged = mean.acc_flagged || r.acc_flagged;
  }
  result.mean = mean;
  return result;
}

}  // namespace polyrx
