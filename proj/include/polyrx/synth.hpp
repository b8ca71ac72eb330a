#pragma once

#include "polyrx/core.hpp"

#include <cstdio>

namespace polyrx {

// Synthetic labeled data with planted co-prescription pairs, so the model's
// qualitative claims are testable at desk scale.
struct SynthSpec {
  int n_drugs = 30;
  int n_pos = 200;
  int n_neg = 200;
  std::vector<std::pair<int, int>> planted_pos_pairs;
  std::vector<std::pair<int, int>> planted_neg_pairs;
  double pair_strength = 0.8;
  double noise_rate = 0.05;
  std::uint64_t seed = 1;

  // n consecutive drug pairs per class: (0,1),(2,3),... then the negative
  // pairs continuing after them.
  static SynthSpec defaults() {
    SynthSpec s;
    for (int i = 0; i < 4; ++i) s.planted_pos_pairs.emplace_back(2 * i, 2 * i + 1);
    for (int i = 4; i < 8; ++i) s.planted_neg_pairs.emplace_back(2 * i, 2 * i + 1);
    return s;
  }

  void validate() const {
    if (n_drugs < 2) throw Error("synth: need at least 2 drugs");
    if (n_pos < 1 || n_neg < 1) throw Error("synth: need rows in both classes");
    if (!(pair_strength > 0.0 && pair_strength <= 1.0))
      throw Error("synth: pair_strength must be in (0, 1]");
    if (!(noise_rate >= 0.0 && noise_rate <= 1.0))
      throw Error("synth: noise_rate must be in [0, 1]");
    if (planted_pos_pairs.empty() || planted_neg_pairs.empty())
      throw Error("synth: both classes need planted pairs");
    std::vector<char> used(static_cast<std::size_t>(n_drugs), 0);
    auto claim = [&](int d) {
      if (d < 0 || d >= n_drugs) throw Error("synth: planted drug out of range");
      if (used[static_cast<std::size_t>(d)])
        throw Error("synth: planted pairs must be disjoint");
      used[static_cast<std::size_t>(d)] = 1;
    };
    for (auto [a, b] : planted_pos_pairs) {
      claim(a);
      claim(b);
      if (a == b) throw Error("synth: degenerate pair");
    }
    for (auto [a, b] : planted_neg_pairs) {
      claim(a);
      claim(b);
      if (a == b) throw Error("synth: degenerate pair");
    }
  }
};

struct SynthTruth {
  std::vector<std::pair<int, int>> pos_pairs;
  std::vector<std::pair<int, int>> neg_pairs;
};

struct SynthResult {
  LabeledDataset data;
  SynthTruth truth;
};

namespace detail {

// Row draw protocol (replayable): one bernoulli(pair_strength) for the
// round-robin pair of the row, then bernoulli(noise_rate) for every drug
// outside that pair in id order. Rows shorter than two drugs or duplicating
// an earlier row of the same class are redrawn.
inline std::vector<Prescription> synth_rows(
    Rng& rng, int count, const std::vector<std::pair<int, int>>& pairs,
    int n_drugs, double strength, double noise) {
  std::vector<Prescription> rows;
  PrescriptionSet seen;
  const long attempt_cap = 1000L * count + 1000L;
  long attempts = 0;
  for (int i = 0; i < count; ++i) {
    auto [p, q] = pairs[static_cast<std::size_t>(i) % pairs.size()];
    for (;;) {
      if (++attempts > attempt_cap)
        throw Error("synth: deduplication exhausted the combination space");
      std::vector<int> ids;
      if (rng.bernoulli(strength)) {
        ids.push_back(p);
        ids.push_back(q);
      }
      for (int d = 0; d < n_drugs; ++d) {
        if (d == p || d == q) continue;
        if (rng.bernoulli(noise)) ids.push_back(d);
      }
      if (ids.size() < 2) continue;
      Prescription rx(std::move(ids));
      if (!seen.insert(rx).second) continue;
      rows.push_back(std::move(rx));
      break;
    }
  }
  return rows;
}

}  // namespace detail

inline DrugVocabulary synth_vocabulary(int n_drugs) {
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n_drugs));
  for (int i = 0; i < n_drugs; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "d%04d", i);
    names.emplace_back(buf);
  }
  return DrugVocabulary(std::move(names));
}

inline SynthResult generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  auto pos = detail::synth_rows(rng, spec.n_pos, spec.planted_pos_pairs,
                                spec.n_drugs, spec.pair_strength,
                                spec.noise_rate);
  auto neg = detail::synth_rows(rng, spec.n_neg, spec.planted_neg_pairs,
                                spec.n_drugs, spec.pair_strength,
                                spec.noise_rate);
  SynthResult out{
      LabeledDataset(PrescriptionMatrix(std::move(pos), spec.n_drugs),
                     PrescriptionMatrix(std::move(neg), spec.n_drugs),
                     synth_vocabulary(spec.n_drugs)),
      SynthTruth{spec.planted_pos_pairs, spec.planted_neg_pairs}};
  return out;
}

}  // namespace polyrx
