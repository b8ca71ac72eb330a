#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace polyrx {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Estimated prescription matrix (A-tilde): same shape as the source binary
// matrix, real-valued.
using ScoreMatrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unknown drug name or column id outside the frozen vocabulary.
class VocabError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& path, std::size_t line, const std::string& what)
      : Error(path + ":" + std::to_string(line) + ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class DatasetError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

// Frozen drug name <-> dense column id mapping. Unknown drugs at inference
// are an error, never silently dropped.
class DrugVocabulary {
 public:
  DrugVocabulary() = default;

  explicit DrugVocabulary(std::vector<std::string> names)
      : names_(std::move(names)) {
    for (std::size_t i = 0; i < names_.size(); ++i) {
      if (names_[i].empty())
        throw VocabError("empty drug name at column " + std::to_string(i));
      auto [it, fresh] = index_.emplace(names_[i], static_cast<int>(i));
      if (!fresh) throw VocabError("duplicate drug name: " + names_[i]);
    }
  }

  int size() const { return static_cast<int>(names_.size()); }

  const std::string& name(int id) const {
    if (id < 0 || id >= size())
      throw VocabError("column id out of range: " + std::to_string(id));
    return names_[static_cast<std::size_t>(id)];
  }

  const std::vector<std::string>& names() const { return names_; }

  // Column id for a known drug; throws VocabError for unknown names.
  int require(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw VocabError("unknown drug: " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

// ---------------------------------------------------------------------------
// Prescriptions
// ---------------------------------------------------------------------------

// A set of drugs taken together; dosage and ordering are not modeled.
// Stored as sorted unique column ids.
class Prescription {
 public:
  explicit Prescription(std::vector<int> ids) : ids_(std::move(ids)) {
    if (ids_.empty()) throw Error("prescription must contain at least one drug");
    std::sort(ids_.begin(), ids_.end());
    if (std::adjacent_find(ids_.begin(), ids_.end()) != ids_.end())
      throw Error("prescription contains a duplicate drug id");
    if (ids_.front() < 0)
      throw VocabError("negative drug id in prescription");
  }

  Prescription(std::initializer_list<int> ids)
      : Prescription(std::vector<int>(ids)) {}

  std::span<const int> ids() const { return ids_; }
  std::size_t size() const { return ids_.size(); }
  int max_id() const { return ids_.back(); }

  bool contains(int id) const {
    return std::binary_search(ids_.begin(), ids_.end(), id);
  }

  // New prescription a ∪ {drug}.
  Prescription with(int drug) const {
    std::vector<int> ids(ids_.begin(), ids_.end());
    ids.push_back(drug);
    return Prescription(std::move(ids));
  }

  // New prescription with one drug removed.
  Prescription without(int drug) const {
    std::vector<int> ids;
    ids.reserve(ids_.size());
    for (int id : ids_)
      if (id != drug) ids.push_back(id);
    return Prescription(std::move(ids));
  }

  bool operator==(const Prescription& other) const = default;

 private:
  std::vector<int> ids_;
};

struct PrescriptionHash {
  std::size_t operator()(const Prescription& p) const {
    std::size_t h = 0x9e3779b97f4a7c15ull;
    for (int id : p.ids())
      h = (h ^ static_cast<std::size_t>(id)) * 0x100000001b3ull;
    return h;
  }
};

using PrescriptionSet = std::unordered_set<Prescription, PrescriptionHash>;

// Binary indicator row of length n_drugs.
inline Vector to_dense_row(const Prescription& p, int n_drugs) {
  if (p.max_id() >= n_drugs)
    throw VocabError("drug id " + std::to_string(p.max_id()) +
                     " outside vocabulary of size " + std::to_string(n_drugs));
  Vector row = Vector::Zero(n_drugs);
  for (int id : p.ids()) row[id] = 1.0;
  return row;
}

inline Prescription from_dense_row(const Vector& row) {
  std::vector<int> ids;
  for (int j = 0; j < row.size(); ++j)
    if (row[j] != 0.0) ids.push_back(j);
  return Prescription(std::move(ids));
}

// Set of unique prescriptions over a shared drug space; the dense equivalent
// is a binary m x n matrix.
class PrescriptionMatrix {
 public:
  PrescriptionMatrix(std::vector<Prescription> rows, int n_drugs)
      : rows_(std::move(rows)), n_drugs_(n_drugs) {
    PrescriptionSet seen;
    for (const auto& p : rows_) {
      if (p.max_id() >= n_drugs_)
        throw VocabError("prescription references drug id " +
                         std::to_string(p.max_id()) + " >= n_drugs " +
                         std::to_string(n_drugs_));
      if (!seen.insert(p).second)
        throw DatasetError("duplicate prescription row in matrix");
    }
  }

  const std::vector<Prescription>& rows() const { return rows_; }
  std::size_t n_rows() const { return rows_.size(); }
  int n_drugs() const { return n_drugs_; }

  Matrix to_dense() const {
    Matrix a = Matrix::Zero(static_cast<Eigen::Index>(rows_.size()), n_drugs_);
    for (std::size_t i = 0; i < rows_.size(); ++i)
      for (int id : rows_[i].ids()) a(static_cast<Eigen::Index>(i), id) = 1.0;
    return a;
  }

 private:
  std::vector<Prescription> rows_;
  int n_drugs_;
};

// Positive (ADR-inducing) and negative prescription sets over one shared
// vocabulary. Label semantics: y = +1 for positives, y = -1 for negatives.
struct LabeledDataset {
  PrescriptionMatrix positives;
  PrescriptionMatrix negatives;
  DrugVocabulary vocabulary;

  LabeledDataset(PrescriptionMatrix pos, PrescriptionMatrix neg,
                 DrugVocabulary vocab)
      : positives(std::move(pos)),
        negatives(std::move(neg)),
        vocabulary(std::move(vocab)) {
    if (positives.n_drugs() != vocabulary.size() ||
        negatives.n_drugs() != vocabulary.size())
      throw ShapeError("dataset classes do not share the vocabulary size");
  }

  int n_drugs() const { return vocabulary.size(); }
};

// ---------------------------------------------------------------------------
// Deterministic randomness
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Fixed-offset sub-stream derivation so every command replays from one seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream + 1));
}

// xoshiro-free minimal generator: splitmix64 sequence. Self-contained so the
// byte stream is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(splitmix64(seed)) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

  // Unbiased integer in [0, n) by rejection.
  std::size_t below(std::size_t n) {
    if (n == 0) throw Error("Rng::below(0)");
    std::uint64_t bound = n;
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t v;
    do {
      v = next();
    } while (v >= limit);
    return static_cast<std::size_t>(v % bound);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[below(i)]);
  }

  // k distinct indices from [0, n), order random (partial Fisher-Yates).
  std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                      std::size_t k) {
    if (k > n) throw Error("sample_without_replacement: k > n");
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < k; ++i)
      std::swap(pool[i], pool[i + below(n - i)]);
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Parallel helper
// ---------------------------------------------------------------------------

inline unsigned max_threads() {
  if (const char* env = std::getenv("POLYRX_THREADS")) {
    long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

// Runs fn(i) for i in [0, n). Results must be independent per index; the
// split is static so output never depends on thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  unsigned threads = std::min<std::size_t>(max_threads(), n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < n; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// Shared fit diagnostics for the iterative solvers.
struct SolveInfo {
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
};

}  // namespace polyrx
