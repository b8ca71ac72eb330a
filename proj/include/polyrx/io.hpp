#pragma once

#include "polyrx/joint.hpp"
#include "polyrx/mining.hpp"
#include "polyrx/recommend.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

namespace polyrx {

// Exact decimal for a double (round-trips bit for bit).
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Short form for report tables.
inline std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open file: " + path);
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path);
  return out;
}

// key=value tokens of a header line, after the leading tag.
inline std::unordered_map<std::string, std::string> header_fields(
    const std::string& line, const std::string& tag, const std::string& what) {
  std::istringstream ss(line);
  std::string tok;
  if (!(ss >> tok) || tok != tag)
    throw Error(what + ": expected '" + tag + "' header, got: " + line);
  std::unordered_map<std::string, std::string> kv;
  while (ss >> tok) {
    auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw Error(what + ": malformed header token: " + tok);
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

inline double field_num(const std::unordered_map<std::string, std::string>& kv,
                        const std::string& key, const std::string& what) {
  auto it = kv.find(key);
  if (it == kv.end()) throw Error(what + ": missing header field " + key);
  return std::stod(it->second);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Vocabulary: one drug name per line, line number = column id.
// ---------------------------------------------------------------------------

inline DrugVocabulary read_vocabulary(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<std::string> names;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string name = detail::trim(line);
    if (name.empty())
      throw ParseError(path, lineno, "empty vocabulary line");
    names.push_back(std::move(name));
  }
  try {
    return DrugVocabulary(std::move(names));
  } catch (const VocabError& e) {
    throw ParseError(path, lineno, e.what());
  }
}

inline void write_vocabulary(const std::string& path,
                             const DrugVocabulary& vocab) {
  auto out = detail::open_out(path);
  for (const auto& name : vocab.names()) out << name << "\n";
}

// ---------------------------------------------------------------------------
// Prescription files: one prescription per line, drug names separated by '|',
// lines starting with '#' are comments.
// ---------------------------------------------------------------------------

namespace detail {

// Raw name rows; blank and comment lines skipped. Line numbers kept for
// error reporting.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>>
read_name_rows(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::pair<std::size_t, std::vector<std::string>>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> names;
    for (auto& piece : split(t, '|')) {
      std::string name = trim(piece);
      if (name.empty())
        throw ParseError(path, lineno, "empty drug name");
      names.push_back(std::move(name));
    }
    rows.emplace_back(lineno, std::move(names));
  }
  return rows;
}

}  // namespace detail

// Unique-row dataset file for one label class.
inline PrescriptionMatrix read_dataset_file(const std::string& path,
                                            const DrugVocabulary& vocab) {
  std::vector<Prescription> rows;
  PrescriptionSet seen;
  for (const auto& [lineno, names] : detail::read_name_rows(path)) {
    std::vector<int> ids;
    ids.reserve(names.size());
    try {
      for (const auto& name : names) ids.push_back(vocab.require(name));
      Prescription rx(std::move(ids));
      if (!seen.insert(rx).second)
        throw DatasetError("duplicate prescription");
      rows.push_back(std::move(rx));
    } catch (const Error& e) {
      throw ParseError(path, lineno, e.what());
    }
  }
  return PrescriptionMatrix(std::move(rows), vocab.size());
}

// Event file: duplicates allowed, every event needs at least two drugs.
inline std::vector<Prescription> read_event_file(const std::string& path,
                                                 const DrugVocabulary& vocab) {
  std::vector<Prescription> events;
  for (const auto& [lineno, names] : detail::read_name_rows(path)) {
    if (names.size() < 2)
      throw ParseError(path, lineno, "event with fewer than two drugs");
    std::vector<int> ids;
    ids.reserve(names.size());
    try {
      for (const auto& name : names) ids.push_back(vocab.require(name));
      events.emplace_back(std::move(ids));
    } catch (const Error& e) {
      throw ParseError(path, lineno, e.what());
    }
  }
  return events;
}

// Inference queries: one prescription per line, duplicates fine, single-drug
// lines fine.
inline std::vector<Prescription> read_query_file(const std::string& path,
                                                 const DrugVocabulary& vocab) {
  std::vector<Prescription> queries;
  for (const auto& [lineno, names] : detail::read_name_rows(path)) {
    std::vector<int> ids;
    ids.reserve(names.size());
    try {
      for (const auto& name : names) ids.push_back(vocab.require(name));
      queries.emplace_back(std::move(ids));
    } catch (const Error& e) {
      throw ParseError(path, lineno, e.what());
    }
  }
  return queries;
}

// Vocabulary from raw files, columns in first-appearance order.
inline DrugVocabulary scan_vocabulary(const std::vector<std::string>& paths) {
  std::vector<std::string> names;
  std::unordered_set<std::string> seen;
  for (const auto& path : paths)
    for (const auto& [lineno, row] : detail::read_name_rows(path))
      for (const auto& name : row)
        if (seen.insert(name).second) names.push_back(name);
  return DrugVocabulary(std::move(names));
}

inline void write_prescriptions(const std::string& path,
                                const std::vector<Prescription>& rows,
                                const DrugVocabulary& vocab) {
  auto out = detail::open_out(path);
  for (const auto& rx : rows) {
    bool first = true;
    for (int id : rx.ids()) {
      if (!first) out << '|';
      out << vocab.name(id);
      first = false;
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

// slim n=<n> alpha=<a> lambda=<l>
// <row> <col> <value>     (nonzeros, row-major order)
inline void write_slim(std::ostream& out, const SlimModel& model) {
  const auto n = model.W.rows();
  out << "slim n=" << n << " alpha=" << fmt(model.hyper.alpha)
      << " lambda=" << fmt(model.hyper.lambda) << "\n";
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (model.W(i, j) != 0.0)
        out << i << " " << j << " " << fmt(model.W(i, j)) << "\n";
}

// Reads triplets until EOF or an "end" line (consumed).
inline SlimModel read_slim(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error("slim model: empty stream");
  auto kv = detail::header_fields(line, "slim", "slim model");
  int n = static_cast<int>(detail::field_num(kv, "n", "slim model"));
  SlimModel model;
  model.hyper.alpha = detail::field_num(kv, "alpha", "slim model");
  model.hyper.lambda = detail::field_num(kv, "lambda", "slim model");
  model.W = Matrix::Zero(n, n);
  while (std::getline(in, line)) {
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t == "end") break;
    std::istringstream ss(t);
    int i, j;
    double v;
    if (!(ss >> i >> j >> v))
      throw Error("slim model: malformed triplet: " + t);
    if (i < 0 || i >= n || j < 0 || j >= n)
      throw Error("slim model: triplet out of range: " + t);
    model.W(i, j) = v;
  }
  return model;
}

// logr n=<n> beta=<b> gamma=<g>
// c=<c>
// <idx> <value>           (nonzeros of x)
inline void write_logr(std::ostream& out, const LogRModel& model,
                       const LogRHyper& hyper) {
  out << "logr n=" << model.x.size() << " beta=" << fmt(hyper.beta)
      << " gamma=" << fmt(hyper.gamma) << "\n";
  out << "c=" << fmt(model.c) << "\n";
  for (Eigen::Index i = 0; i < model.x.size(); ++i)
    if (model.x[i] != 0.0) out << i << " " << fmt(model.x[i]) << "\n";
}

inline LogRModel read_logr(std::istream& in, LogRHyper* hyper_out = nullptr) {
  std::string line;
  if (!std::getline(in, line)) throw Error("logr model: empty stream");
  auto kv = detail::header_fields(line, "logr", "logr model");
  int n = static_cast<int>(detail::field_num(kv, "n", "logr model"));
  if (hyper_out) {
    hyper_out->beta = detail::field_num(kv, "beta", "logr model");
    hyper_out->gamma = detail::field_num(kv, "gamma", "logr model");
  }
  if (!std::getline(in, line) || line.rfind("c=", 0) != 0)
    throw Error("logr model: missing bias line");
  LogRModel model;
  model.c = std::stod(line.substr(2));
  model.x = Vector::Zero(n);
  while (std::getline(in, line)) {
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (t == "end") break;
    std::istringstream ss(t);
    int i;
    double v;
    if (!(ss >> i >> v)) throw Error("logr model: malformed entry: " + t);
    if (i < 0 || i >= n) throw Error("logr model: index out of range: " + t);
    model.x[i] = v;
  }
  return model;
}

// Container bundling the two aggregation blocks and the label block.
inline void write_joint(const std::string& path, const JointModel& model) {
  auto out = detail::open_out(path);
  const auto& h = model.hyper;
  out << "joint n=" << model.W_plus.W.rows() << " variant="
      << to_string(model.variant) << " omega=" << fmt(h.omega)
      << " alpha=" << fmt(h.slim.alpha) << " lambda=" << fmt(h.slim.lambda)
      << " beta=" << fmt(h.logr.beta) << " gamma=" << fmt(h.logr.gamma)
      << " rho_plus=" << fmt(h.rho_plus) << " rho_minus=" << fmt(h.rho_minus)
      << "\n";
  write_slim(out, model.W_plus);
  out << "end\n";
  write_slim(out, model.W_minus);
  out << "end\n";
  write_logr(out, model.logr, h.logr);
  out << "end\n";
}

inline JointModel read_joint(const std::string& path) {
  auto in = detail::open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw Error("joint model: empty file " + path);
  auto kv = detail::header_fields(line, "joint", "joint model");
  JointModel model;
  auto it = kv.find("variant");
  if (it == kv.end()) throw Error("joint model: missing variant");
  model.variant = mask_variant_from_string(it->second);
  model.hyper.omega = detail::field_num(kv, "omega", "joint model");
  model.hyper.slim.alpha = detail::field_num(kv, "alpha", "joint model");
  model.hyper.slim.lambda = detail::field_num(kv, "lambda", "joint model");
  model.hyper.logr.beta = detail::field_num(kv, "beta", "joint model");
  model.hyper.logr.gamma = detail::field_num(kv, "gamma", "joint model");
  model.hyper.rho_plus = detail::field_num(kv, "rho_plus", "joint model");
  model.hyper.rho_minus = detail::field_num(kv, "rho_minus", "joint model");
  model.W_plus = read_slim(in);
  model.W_minus = read_slim(in);
  model.logr = read_logr(in, &model.hyper.logr);
  const int n = static_cast<int>(detail::field_num(kv, "n", "joint model"));
  if (model.W_plus.W.rows() != n || model.W_minus.W.rows() != n ||
      model.logr.x.size() != n)
    throw Error("joint model: inconsistent block sizes in " + path);
  return model;
}

// ---------------------------------------------------------------------------
// Batch recommendation output
// ---------------------------------------------------------------------------

inline void write_recommendation_header(std::ostream& out) {
  out << "prescription_id\trank\tdrug\tslim_score\tadr_prob\tdirection\n";
}

inline void write_recommendations(std::ostream& out, std::size_t prescription_id,
                                  const std::vector<Recommendation>& recs,
                                  const DrugVocabulary& vocab,
                                  Direction direction) {
  for (const auto& r : recs)
    out << prescription_id << "\t" << r.rank << "\t" << vocab.name(r.drug)
        << "\t" << fmt6(r.slim_score) << "\t" << fmt6(r.adr_probability)
        << "\t" << to_string(direction) << "\n";
}

}  // namespace polyrx
