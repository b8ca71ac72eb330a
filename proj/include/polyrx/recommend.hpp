#pragma once

#include "polyrx/joint.hpp"

namespace polyrx {

enum class Direction { to_avoid, safe };
enum class Prediction { content, score };

inline const char* to_string(Direction d) {
  return d == Direction::to_avoid ? "to_avoid" : "safe";
}

inline const char* to_string(Prediction p) {
  return p == Prediction::content ? "content" : "score";
}

inline Direction direction_from_string(const std::string& s) {
  if (s == "to_avoid") return Direction::to_avoid;
  if (s == "safe") return Direction::safe;
  throw Error("unknown direction: " + s);
}

inline Prediction prediction_from_string(const std::string& s) {
  if (s == "content") return Prediction::content;
  if (s == "score") return Prediction::score;
  throw Error("unknown prediction method: " + s);
}

struct RecConfig {
  int M = 20;  // candidate count out of the first stage
  int N = 5;   // final recommendation count
  Prediction prediction = Prediction::score;
  Direction direction = Direction::to_avoid;

  void validate() const {
    if (N < 1 || M < N) throw Error("recommend: need 1 <= N <= M");
  }
};

struct Recommendation {
  int drug = -1;
  double slim_score = 0.0;
  double adr_probability = 0.0;  // p(y = +1 | f), for either direction
  int rank = 0;
};

namespace detail {

// Absent drugs with positive first-stage score, ranked score desc then id
// asc, truncated to the top limit.
inline std::vector<std::pair<int, double>> stage1_candidates(
    const Vector& scores, const Prescription& a, int limit) {
  std::vector<std::pair<int, double>> cand;
  for (int d = 0; d < scores.size(); ++d)
    if (!a.contains(d) && scores[d] > 0.0) cand.emplace_back(d, scores[d]);
  std::sort(cand.begin(), cand.end(), [](const auto& l, const auto& r) {
    if (l.second != r.second) return l.second > r.second;
    return l.first < r.first;
  });
  if (static_cast<int>(cand.size()) > limit) cand.resize(limit);
  return cand;
}

struct Ranked {
  int drug;
  double slim_score;
  double p_plus;
  double key;
};

inline std::vector<Recommendation> finalize(std::vector<Ranked> items, int n_final) {
  std::sort(items.begin(), items.end(), [](const Ranked& l, const Ranked& r) {
    if (l.key != r.key) return l.key > r.key;
    if (l.slim_score != r.slim_score) return l.slim_score > r.slim_score;
    return l.drug < r.drug;
  });
  if (static_cast<int>(items.size()) > n_final) items.resize(n_final);
  std::vector<Recommendation> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i)
    out.push_back({items[i].drug, items[i].slim_score, items[i].p_plus,
                   static_cast<int>(i) + 1});
  return out;
}

}  // namespace detail

// Two-step inference: rank absent drugs by the direction's aggregation matrix,
// keep the top-M candidates, then re-order them by the ADR probability of the
// extended prescription and return the top N. Fewer than N positive-score
// candidates yields a shorter list.
inline std::vector<Recommendation> two_step_recommend(const Matrix& w_plus,
                                                      const Matrix& w_minus,
                                                      const LogRModel& logr,
                                                      const Prescription& a,
                                                      const RecConfig& cfg) {
  cfg.validate();
  const Matrix& w = cfg.direction == Direction::to_avoid ? w_plus : w_minus;
  const int n = static_cast<int>(w.cols());
  Vector scores = slim_score(w, a);
  auto cands = detail::stage1_candidates(scores, a, cfg.M);

  std::vector<detail::Ranked> ranked;
  ranked.reserve(cands.size());
  for (auto [d, sc] : cands) {
    Vector f;
    if (cfg.prediction == Prediction::content) {
      f = to_dense_row(a.with(d), n);
    } else {
      // Score-valued analogue of the extended prescription: reconstruction
      // values at a's own drugs, the candidate score at d, zero elsewhere.
      f = Vector::Zero(n);
      for (int k : a.ids()) f[k] = scores[k];
      f[d] = scores[d];
    }
    // rank on the logit: the same ordering as the probability, but immune to
    // sigmoid saturation ties
    double logit = f.dot(logr.x) + logr.c;
    double key = cfg.direction == Direction::to_avoid ? logit : -logit;
    ranked.push_back({d, sc, sigmoid(logit), key});
  }
  return detail::finalize(std::move(ranked), cfg.N);
}

inline std::vector<Recommendation> recommend(const JointModel& model,
                                             const Prescription& a,
                                             const RecConfig& cfg) {
  return two_step_recommend(model.W_plus.W, model.W_minus.W, model.logr, a, cfg);
}

// Uniform sample without replacement of N absent drugs.
inline std::vector<Recommendation> baseline_rand(const Prescription& a,
                                                 int n_drugs,
                                                 const RecConfig& cfg,
                                                 std::uint64_t seed) {
  cfg.validate();
  if (a.max_id() >= n_drugs)
    throw VocabError("baseline_rand: prescription outside vocabulary");
  std::vector<int> absent;
  for (int d = 0; d < n_drugs; ++d)
    if (!a.contains(d)) absent.push_back(d);
  Rng rng(seed);
  std::size_t k = std::min<std::size_t>(cfg.N, absent.size());
  auto picks = rng.sample_without_replacement(absent.size(), k);
  std::vector<Recommendation> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i)
    out.push_back({absent[picks[i]], 0.0, 0.0, static_cast<int>(i) + 1});
  return out;
}

// Every absent drug joined with a and ranked by predicted ADR probability:
// descending for to-avoid, ascending for safe.
inline std::vector<Recommendation> baseline_logr(const LogRModel& logr,
                                                 const Prescription& a,
                                                 const RecConfig& cfg) {
  cfg.validate();
  const int n = static_cast<int>(logr.x.size());
  if (a.max_id() >= n)
    throw VocabError("baseline_logr: prescription outside vocabulary");
  std::vector<detail::Ranked> ranked;
  for (int d = 0; d < n; ++d) {
    if (a.contains(d)) continue;
    double logit = to_dense_row(a.with(d), n).dot(logr.x) + logr.c;
    double key = cfg.direction == Direction::to_avoid ? logit : -logit;
    ranked.push_back({d, 0.0, sigmoid(logit), key});
  }
  return detail::finalize(std::move(ranked), cfg.N);
}

// First-stage ranking only, no re-ordering.
inline std::vector<Recommendation> baseline_slim(const Matrix& w_plus,
                                                 const Matrix& w_minus,
                                                 const Prescription& a,
                                                 const RecConfig& cfg) {
  cfg.validate();
  const Matrix& w = cfg.direction == Direction::to_avoid ? w_plus : w_minus;
  Vector scores = slim_score(w, a);
  auto cands = detail::stage1_candidates(scores, a, cfg.N);
  std::vector<Recommendation> out;
  out.reserve(cands.size());
  for (std::size_t i = 0; i < cands.size(); ++i)
    out.push_back({cands[i].first, cands[i].second, 0.0,
                   static_cast<int>(i) + 1});
  return out;
}

// Same pipeline as the joint model but with independently trained parts.
inline std::vector<Recommendation> baseline_slim_plus_logr(
    const SlimModel& slim_plus, const SlimModel& slim_minus,
    const LogRModel& logr, const Prescription& a, const RecConfig& cfg) {
  return two_step_recommend(slim_plus.W, slim_minus.W, logr, a, cfg);
}

}  // namespace polyrx
