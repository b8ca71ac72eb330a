#pragma once

#include "polyrx/core.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

namespace polyrx {

// Raw adverse-event logs: case events report the target ADR, control events
// do not. Multisets: the same drug combination may occur many times.
struct EventLog {
  std::vector<Prescription> case_events;
  std::vector<Prescription> control_events;
  int n_drugs = 0;

  EventLog(std::vector<Prescription> cases, std::vector<Prescription> controls,
           int drugs)
      : case_events(std::move(cases)),
        control_events(std::move(controls)),
        n_drugs(drugs) {
    auto check = [&](const std::vector<Prescription>& events, const char* side) {
      for (const auto& e : events) {
        if (e.size() < 2)
          throw DatasetError(std::string(side) +
                             " event with fewer than two drugs");
        if (e.max_id() >= n_drugs)
          throw VocabError(std::string(side) + " event outside vocabulary");
      }
    };
    check(case_events, "case");
    check(control_events, "control");
  }
};

// How an event "contains" a prescription when counting: the exact drug
// combination, or any superset of it.
enum class MatchMode { exact, containment };

struct ContingencyTable {
  std::int64_t n1 = 0;  // events with a, ADR
  std::int64_t m1 = 0;  // events with a, no ADR
  std::int64_t n2 = 0;  // events without a, ADR
  std::int64_t m2 = 0;  // events without a, no ADR
};

inline ContingencyTable contingency(const EventLog& log, const Prescription& a,
                                    MatchMode mode = MatchMode::exact) {
  auto matches = [&](const Prescription& event) {
    if (mode == MatchMode::exact) return event == a;
    if (event.size() < a.size()) return false;
    for (int id : a.ids())
      if (!event.contains(id)) return false;
    return true;
  };
  ContingencyTable t;
  for (const auto& e : log.case_events)
    if (matches(e)) ++t.n1;
  for (const auto& e : log.control_events)
    if (matches(e)) ++t.m1;
  t.n2 = static_cast<std::int64_t>(log.case_events.size()) - t.n1;
  t.m2 = static_cast<std::int64_t>(log.control_events.size()) - t.m1;
  return t;
}

// (n1/m1) / (n2/m2). A single zero cell yields a flagged 0 or +inf, the 0/0
// patterns an explicit undefined result; no continuity correction is applied.
struct OddsRatio {
  double value = std::numeric_limits<double>::quiet_NaN();
  bool infinite = false;
  bool undefined = false;
};

inline OddsRatio odds_ratio(const ContingencyTable& t) {
  if (t.n1 < 0 || t.m1 < 0 || t.n2 < 0 || t.m2 < 0)
    throw Error("odds_ratio: negative cell");
  double num = static_cast<double>(t.n1) * static_cast<double>(t.m2);
  double den = static_cast<double>(t.m1) * static_cast<double>(t.n2);
  OddsRatio r;
  if (den == 0.0 && num == 0.0) {
    r.undefined = true;
    return r;
  }
  if (den == 0.0) {
    r.value = std::numeric_limits<double>::infinity();
    r.infinite = true;
    return r;
  }
  r.value = num / den;
  return r;
}

// Right-tailed Fisher exact p-value: the hypergeometric tail over all tables
// with the observed margins and first cell >= n1. Computed in log space.
inline double fisher_right_tail(const ContingencyTable& t,
                                std::int64_t max_total = 100000000) {
  if (t.n1 < 0 || t.m1 < 0 || t.n2 < 0 || t.m2 < 0)
    throw Error("fisher_right_tail: negative cell");
  const std::int64_t row1 = t.n1 + t.m1;
  const std::int64_t col1 = t.n1 + t.n2;
  const std::int64_t total = row1 + t.n2 + t.m2;
  if (total > max_total)
    throw Error("fisher_right_tail: table total exceeds cap");
  if (total == 0) return 1.0;

  auto lchoose = [](std::int64_t n, std::int64_t k) {
    return std::lgamma(static_cast<double>(n) + 1.0) -
           std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
  };

  const std::int64_t k_lo = std::max<std::int64_t>(0, row1 - (total - col1));
  const std::int64_t k_hi = std::min(row1, col1);
  if (t.n1 <= k_lo) return 1.0;  // the whole support

  const double log_denom = lchoose(total, row1);
  long double p = 0.0L;
  for (std::int64_t k = k_hi; k >= t.n1; --k) {
    double lp = lchoose(col1, k) + lchoose(total - col1, row1 - k) - log_denom;
    p += std::exp(static_cast<long double>(lp));
  }
  double out = static_cast<double>(p);
  return std::min(1.0, std::max(0.0, out));
}

// One unique prescription with its occurrence counts and (for shared rows)
// the contingency table and odds ratio under the configured match mode.
struct MinedRow {
  Prescription rx;
  std::int64_t case_count = 0;     // exact occurrences among case events
  std::int64_t control_count = 0;  // exact occurrences among control events
  ContingencyTable table;
  OddsRatio odds;
};

// Exact partition of the unique prescriptions:
//   m_plus  - case events only
//   m_zero  - both sides, OR > 1
//   n_zero  - both sides, OR <= 1 (or undefined)
//   n_minus - control events only
struct MinedPartition {
  std::vector<MinedRow> m_plus, m_zero, n_zero, n_minus;
};

inline MinedPartition partition_events(const EventLog& log,
                                       MatchMode mode = MatchMode::exact) {
  struct Counts {
    std::int64_t cases = 0, controls = 0;
    std::size_t first_seen = 0;
  };
  std::unordered_map<Prescription, Counts, PrescriptionHash> tally;
  std::vector<const Prescription*> order;
  std::size_t seq = 0;
  auto absorb = [&](const std::vector<Prescription>& events, bool is_case) {
    for (const auto& e : events) {
      auto [it, fresh] = tally.try_emplace(e);
      if (fresh) {
        it->second.first_seen = seq++;
        order.push_back(&it->first);
      }
      if (is_case)
        ++it->second.cases;
      else
        ++it->second.controls;
    }
  };
  absorb(log.case_events, true);
  absorb(log.control_events, false);

  const auto total_cases = static_cast<std::int64_t>(log.case_events.size());
  const auto total_controls =
      static_cast<std::int64_t>(log.control_events.size());

  MinedPartition part;
  for (const Prescription* rx : order) {
    const Counts& c = tally.at(*rx);
    MinedRow row{*rx, c.cases, c.controls, {}, {}};
    if (c.cases > 0 && c.controls > 0) {
      row.table = mode == MatchMode::exact
                      ? ContingencyTable{c.cases, c.controls,
                                         total_cases - c.cases,
                                         total_controls - c.controls}
                      : contingency(log, *rx, mode);
      row.odds = odds_ratio(row.table);
      bool elevated = !row.odds.undefined && row.odds.value > 1.0;
      (elevated ? part.m_zero : part.n_zero).push_back(std::move(row));
    } else if (c.cases > 0) {
      part.m_plus.push_back(std::move(row));
    } else {
      part.n_minus.push_back(std::move(row));
    }
  }
  return part;
}

struct MiningConfig {
  std::size_t m_plus_top = 1000;
  std::size_t n_minus_top = 2200;
  double alpha_sig = 0.05;
  MatchMode match = MatchMode::exact;
};

// Labeled training data per the mining protocol: positives are the most
// frequent case-only prescriptions plus the shared ones whose elevated odds
// pass the right-tailed Fisher test; negatives are every shared row with
// OR <= 1 plus the most frequent control-only prescriptions.
inline LabeledDataset build_dataset(const EventLog& log,
                                    const DrugVocabulary& vocab,
                                    const MiningConfig& cfg) {
  if (vocab.size() != log.n_drugs)
    throw ShapeError("build_dataset: vocabulary size does not match log");
  MinedPartition part = partition_events(log, cfg.match);

  auto top_by = [](std::vector<MinedRow>& rows, auto key, std::size_t limit) {
    std::stable_sort(rows.begin(), rows.end(),
                     [&](const MinedRow& l, const MinedRow& r) {
                       return key(l) > key(r);
                     });
    if (rows.size() > limit)
      rows.erase(rows.begin() + static_cast<std::ptrdiff_t>(limit), rows.end());
  };
  top_by(part.m_plus, [](const MinedRow& r) { return r.case_count; },
         cfg.m_plus_top);
  top_by(part.n_minus, [](const MinedRow& r) { return r.control_count; },
         cfg.n_minus_top);

  std::vector<Prescription> positives;
  for (const auto& r : part.m_plus) positives.push_back(r.rx);
  for (const auto& r : part.m_zero)
    if (fisher_right_tail(r.table) < cfg.alpha_sig) positives.push_back(r.rx);

  std::vector<Prescription> negatives;
  for (const auto& r : part.n_zero) negatives.push_back(r.rx);
  for (const auto& r : part.n_minus) negatives.push_back(r.rx);

  if (positives.empty())
    throw DatasetError("build_dataset: empty positive class");
  if (negatives.empty())
    throw DatasetError("build_dataset: empty negative class");

  return LabeledDataset(PrescriptionMatrix(std::move(positives), log.n_drugs),
                        PrescriptionMatrix(std::move(negatives), log.n_drugs),
                        vocab);
}

}  // namespace polyrx
