// polyrx command line: mine, synth, train, recommend, evaluate, sweep.

#include <CLI11.hpp>

#include "polyrx/polyrx.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace polyrx;

namespace {

struct HyperFlags {
  double omega = 5.0;
  double alpha = 20.0;
  double lambda = 1e-6;
  double beta = 1e-6;
  double gamma = 1e-2;
  double rho = 10.0;
  int max_admm_iters = 200;
  int inner_iters = 25;
  double tol = 1e-4;
  int slim_iters = 500;
  int logr_iters = 500;
  std::string variant = "inclusive";

  JointHyper to_joint() const {
    JointHyper h;
    h.omega = omega;
    h.slim.alpha = alpha;
    h.slim.lambda = lambda;
    h.slim.max_iters = slim_iters;
    h.logr.beta = beta;
    h.logr.gamma = gamma;
    h.logr.max_iters = logr_iters;
    h.rho_plus = rho;
    h.rho_minus = rho;
    h.max_admm_iters = max_admm_iters;
    h.inner_iters = inner_iters;
    h.tol = tol;
    return h;
  }
};

void add_hyper_flags(CLI::App* cmd, HyperFlags& hf) {
  cmd->add_option("--omega", hf.omega, "label-component weight");
  cmd->add_option("--alpha", hf.alpha, "Frobenius weight (aggregation)");
  cmd->add_option("--lambda", hf.lambda, "L1 weight (aggregation)");
  cmd->add_option("--beta", hf.beta, "L2 weight (label component)");
  cmd->add_option("--gamma", hf.gamma, "L1 weight (label component)");
  cmd->add_option("--rho", hf.rho, "consensus penalty");
  cmd->add_option("--max-admm-iters", hf.max_admm_iters, "outer iterations");
  cmd->add_option("--inner-iters", hf.inner_iters, "inner solver iterations");
  cmd->add_option("--tol", hf.tol, "residual tolerance (scaled by n)");
  cmd->add_option("--slim-iters", hf.slim_iters, "aggregation solver budget");
  cmd->add_option("--logr-iters", hf.logr_iters, "label solver budget");
  cmd->add_option("--variant", hf.variant, "mask variant: inclusive|exclusive");
}

std::ofstream out_file(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write file: " + path.string());
  return out;
}

LabeledDataset load_dataset(const std::string& pos, const std::string& neg,
                            const std::string& vocab_path) {
  DrugVocabulary vocab = read_vocabulary(vocab_path);
  return LabeledDataset(read_dataset_file(pos, vocab),
                        read_dataset_file(neg, vocab), vocab);
}

void hyper_block(std::ostream& out, const JointHyper& h, const EvalOptions& opt) {
  out << "# method=" << to_string(opt.method) << "\n";
  out << "# variant=" << to_string(opt.variant) << "\n";
  out << "# prediction=" << to_string(opt.prediction) << "\n";
  out << "# pool=" << to_string(opt.pool) << "\n";
  out << "# M=" << opt.M << "\n# N=" << opt.N << "\n";
  out << "# folds=" << opt.n_folds << "\n# seed=" << opt.seed << "\n";
  out << "# omega=" << fmt(h.omega) << "\n";
  out << "# alpha=" << fmt(h.slim.alpha) << "\n";
  out << "# lambda=" << fmt(h.slim.lambda) << "\n";
  out << "# beta=" << fmt(h.logr.beta) << "\n";
  out << "# gamma=" << fmt(h.logr.gamma) << "\n";
  out << "# rho_plus=" << fmt(h.rho_plus) << "\n";
  out << "# rho_minus=" << fmt(h.rho_minus) << "\n";
  out << "# max_admm_iters=" << h.max_admm_iters << "\n";
  out << "# inner_iters=" << h.inner_iters << "\n";
  out << "# tol=" << fmt(h.tol) << "\n";
}

std::string model_label(const EvalOptions& opt) {
  if (opt.method == Method::joint)
    return std::string("joint-") + to_string(opt.variant);
  return to_string(opt.method);
}

std::string prediction_label(const EvalOptions& opt) {
  bool two_step =
      opt.method == Method::joint || opt.method == Method::slim_plus_logr;
  return two_step ? to_string(opt.prediction) : "-";
}

// ---------------------------------------------------------------------------

int cmd_synth(const SynthSpec& spec, int pos_pairs, int neg_pairs,
              const std::string& out_dir) {
  SynthSpec s = spec;
  s.planted_pos_pairs.clear();
  s.planted_neg_pairs.clear();
  if (2 * (pos_pairs + neg_pairs) > s.n_drugs)
    throw Error("synth: planted pairs need 2*(pos+neg) <= n_drugs");
  for (int i = 0; i < pos_pairs; ++i)
    s.planted_pos_pairs.emplace_back(2 * i, 2 * i + 1);
  for (int i = pos_pairs; i < pos_pairs + neg_pairs; ++i)
    s.planted_neg_pairs.emplace_back(2 * i, 2 * i + 1);

  SynthResult res = generate(s);
  fs::create_directories(out_dir);
  write_vocabulary((fs::path(out_dir) / "vocabulary.txt").string(),
                   res.data.vocabulary);
  write_prescriptions((fs::path(out_dir) / "positives.txt").string(),
                      res.data.positives.rows(), res.data.vocabulary);
  write_prescriptions((fs::path(out_dir) / "negatives.txt").string(),
                      res.data.negatives.rows(), res.data.vocabulary);
  auto truth = out_file(fs::path(out_dir) / "truth.txt");
  for (auto [a, b] : res.truth.pos_pairs)
    truth << "pos\t" << res.data.vocabulary.name(a) << "\t"
          << res.data.vocabulary.name(b) << "\n";
  for (auto [a, b] : res.truth.neg_pairs)
    truth << "neg\t" << res.data.vocabulary.name(a) << "\t"
          << res.data.vocabulary.name(b) << "\n";
  std::cout << "synth: wrote " << res.data.positives.n_rows() << "+"
            << res.data.negatives.n_rows() << " rows over " << s.n_drugs
            << " drugs to " << out_dir << "\n";
  return 0;
}

int cmd_mine(const std::string& case_path, const std::string& control_path,
             const MiningConfig& cfg, const std::string& out_dir) {
  DrugVocabulary vocab = scan_vocabulary({case_path, control_path});
  EventLog log(read_event_file(case_path, vocab),
               read_event_file(control_path, vocab), vocab.size());
  LabeledDataset data = build_dataset(log, vocab, cfg);
  fs::create_directories(out_dir);
  write_vocabulary((fs::path(out_dir) / "vocabulary.txt").string(),
                   data.vocabulary);
  write_prescriptions((fs::path(out_dir) / "positives.txt").string(),
                      data.positives.rows(), data.vocabulary);
  write_prescriptions((fs::path(out_dir) / "negatives.txt").string(),
                      data.negatives.rows(), data.vocabulary);
  std::cout << "mine: " << data.positives.n_rows() << " positive, "
            << data.negatives.n_rows() << " negative prescriptions over "
            << vocab.size() << " drugs -> " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& pos, const std::string& neg,
              const std::string& vocab_path, const HyperFlags& hf,
              const std::string& model_path) {
  LabeledDataset data = load_dataset(pos, neg, vocab_path);
  JointHyper hyper = hf.to_joint();
  MaskVariant variant = mask_variant_from_string(hf.variant);
  JointModel model = train_joint(data, hyper, variant);
  write_joint(model_path, model);
  std::cout << "train: " << (model.info.converged ? "converged" : "stopped")
            << " after " << model.info.iterations
            << " outer iterations, lagrangian=" << fmt6(model.info.objective)
            << " -> " << model_path << "\n";
  return 0;
}

int cmd_recommend(const std::string& model_path, const std::string& vocab_path,
                  const std::string& input_path, const RecConfig& cfg,
                  const std::string& out_path) {
  JointModel model = read_joint(model_path);
  DrugVocabulary vocab = read_vocabulary(vocab_path);
  if (vocab.size() != model.W_plus.W.rows())
    throw Error("recommend: vocabulary size does not match the model");
  auto queries = read_query_file(input_path, vocab);

  std::ostringstream out;
  write_recommendation_header(out);
  for (std::size_t i = 0; i < queries.size(); ++i)
    write_recommendations(out, i, recommend(model, queries[i], cfg), vocab,
                          cfg.direction);
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    out_file(out_path) << out.str();
    std::cout << "recommend: " << queries.size() << " prescriptions -> "
              << out_path << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& pos, const std::string& neg,
                 const std::string& vocab_path, const std::string& uni_pos,
                 const std::string& uni_neg, const EvalOptions& opt,
                 const HyperFlags& hf, const std::string& out_path) {
  LabeledDataset data = load_dataset(pos, neg, vocab_path);
  std::optional<LabeledDataset> universe;
  if (!uni_pos.empty() || !uni_neg.empty()) {
    if (uni_pos.empty() || uni_neg.empty())
      throw Error("evaluate: need both universe files or neither");
    universe.emplace(read_dataset_file(uni_pos, data.vocabulary),
                     read_dataset_file(uni_neg, data.vocabulary),
                     data.vocabulary);
  }
  JointHyper hyper = hf.to_joint();
  EvalOptions options = opt;
  options.variant = mask_variant_from_string(hf.variant);
  CvResult res =
      run_cv(data, options, hyper, universe ? &*universe : nullptr);

  std::ostringstream out;
  out << "pool\tmodel\tprediction\trec\tprec\tacc\n";
  char row[256];
  std::snprintf(row, sizeof row, "%s\t%s\t%s\t%.4f\t%.4f\t%.4f\n",
                to_string(options.pool), model_label(options).c_str(),
                prediction_label(options).c_str(), res.mean.rec_norm,
                res.mean.prec_norm, res.mean.acc_norm);
  out << row;
  hyper_block(out, hyper, options);
  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    out_file(out_path) << out.str();
    std::cout << "evaluate: report -> " << out_path << "\n";
  }
  return 0;
}

int cmd_sweep(const std::string& pos, const std::string& neg,
              const std::string& vocab_path, const EvalOptions& opt,
              const HyperFlags& hf, std::vector<double> omegas,
              std::vector<double> alphas, const std::string& out_path) {
  LabeledDataset data = load_dataset(pos, neg, vocab_path);
  EvalOptions options = opt;
  options.method = Method::joint;
  options.variant = mask_variant_from_string(hf.variant);

  const std::size_t rows = omegas.size(), cols = alphas.size();
  std::vector<std::vector<MetricReport>> grid(rows,
                                              std::vector<MetricReport>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      HyperFlags cell = hf;
      cell.omega = omegas[r];
      cell.alpha = alphas[c];
      grid[r][c] = run_cv(data, options, cell.to_joint()).mean;
    }

  std::ostringstream out;
  auto emit = [&](const char* title, auto pick) {
    out << "# " << title << " (N=" << options.N << ")\n";
    out << "omega\\alpha";
    for (double a : alphas) out << "\t" << fmt6(a);
    out << "\n";
    std::size_t best_r = 0, best_c = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      out << fmt6(omegas[r]);
      for (std::size_t c = 0; c < cols; ++c) {
        char cellbuf[32];
        std::snprintf(cellbuf, sizeof cellbuf, "\t%.4f", pick(grid[r][c]));
        out << cellbuf;
        if (pick(grid[r][c]) > pick(grid[best_r][best_c])) {
          best_r = r;
          best_c = c;
        }
      }
      out << "\n";
    }
    bool interior = rows >= 3 && cols >= 3 && best_r > 0 && best_r + 1 < rows &&
                    best_c > 0 && best_c + 1 < cols;
    if (interior)
      out << "# interior maximum: omega=" << fmt6(omegas[best_r])
          << " alpha=" << fmt6(alphas[best_c]) << "\n";
  };
  emit("normalized truncated recall",
       [](const MetricReport& m) { return m.rec_norm; });
  emit("normalized truncated precision",
       [](const MetricReport& m) { return m.prec_norm; });
  emit("normalized truncated accuracy",
       [](const MetricReport& m) { return m.acc_norm; });
  hyper_block(out, hf.to_joint(), options);

  if (out_path.empty()) {
    std::cout << out.str();
  } else {
    out_file(out_path) << out.str();
    std::cout << "sweep: " << rows << "x" << cols << " grid -> " << out_path
              << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"polyrx: to-avoid and safe drug recommendation over "
               "adverse-event prescription data"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate planted synthetic data");
  SynthSpec spec = SynthSpec::defaults();
  int pos_pairs = 4, neg_pairs = 4;
  std::string synth_out = "synth_data";
  synth->add_option("--n-drugs", spec.n_drugs, "vocabulary size");
  synth->add_option("--n-pos", spec.n_pos, "positive rows");
  synth->add_option("--n-neg", spec.n_neg, "negative rows");
  synth->add_option("--pos-pairs", pos_pairs, "planted positive pairs");
  synth->add_option("--neg-pairs", neg_pairs, "planted negative pairs");
  synth->add_option("--pair-strength", spec.pair_strength, "pair inclusion rate");
  synth->add_option("--noise", spec.noise_rate, "per-drug noise rate");
  synth->add_option("--seed", spec.seed, "rng seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // mine
  auto* mine = app.add_subcommand("mine", "build a labeled dataset from logs");
  std::string case_path, control_path, mine_out = "mined_data";
  MiningConfig mcfg;
  bool containment = false;
  double mine_alpha = 0.05;
  mine->add_option("--case", case_path, "case (ADR) event file")->required();
  mine->add_option("--control", control_path, "control event file")->required();
  mine->add_option("--m-plus-top", mcfg.m_plus_top,
                   "case-only rows kept, by frequency");
  mine->add_option("--n-minus-top", mcfg.n_minus_top,
                   "control-only rows kept, by frequency");
  mine->add_option("--alpha", mine_alpha, "significance level");
  mine->add_flag("--containment", containment,
                 "count events containing the prescription, not equal to it");
  mine->add_option("--out", mine_out, "output directory")->required();

  // train
  auto* train = app.add_subcommand("train", "train the joint model");
  std::string tr_pos, tr_neg, tr_vocab, tr_model = "model.txt";
  HyperFlags tr_hf;
  train->add_option("--positives", tr_pos)->required();
  train->add_option("--negatives", tr_neg)->required();
  train->add_option("--vocab", tr_vocab)->required();
  train->add_option("--model", tr_model, "output model file");
  add_hyper_flags(train, tr_hf);

  // recommend
  auto* rec = app.add_subcommand("recommend", "batch recommendations");
  std::string rc_model, rc_vocab, rc_input, rc_out;
  std::string rc_direction = "to_avoid", rc_prediction = "score";
  RecConfig rc_cfg;
  rec->add_option("--model", rc_model)->required();
  rec->add_option("--vocab", rc_vocab)->required();
  rec->add_option("--input", rc_input, "prescriptions to extend")->required();
  rec->add_option("--direction", rc_direction, "to_avoid|safe");
  rec->add_option("--prediction", rc_prediction, "score|content");
  rec->add_option("-M,--candidates", rc_cfg.M, "first-stage candidates");
  rec->add_option("-N,--top", rc_cfg.N, "final recommendations");
  rec->add_option("--out", rc_out, "output file (default stdout)");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "cross-validated evaluation");
  std::string ev_pos, ev_neg, ev_vocab, ev_upos, ev_uneg, ev_out;
  std::string ev_method = "joint", ev_prediction = "score", ev_pool = "test";
  EvalOptions ev_opt;
  HyperFlags ev_hf;
  eval->add_option("--positives", ev_pos)->required();
  eval->add_option("--negatives", ev_neg)->required();
  eval->add_option("--vocab", ev_vocab)->required();
  eval->add_option("--universe-positives", ev_upos, "pool universe, positives");
  eval->add_option("--universe-negatives", ev_uneg, "pool universe, negatives");
  eval->add_option("--method", ev_method, "rand|logr|slim|slim+logr|joint");
  eval->add_option("--prediction", ev_prediction, "score|content");
  eval->add_option("--pool", ev_pool, "test|universe");
  eval->add_option("-M,--candidates", ev_opt.M);
  eval->add_option("-N,--top", ev_opt.N);
  eval->add_option("--folds", ev_opt.n_folds);
  eval->add_option("--seed", ev_opt.seed);
  eval->add_option("--out", ev_out, "report file (default stdout)");
  add_hyper_flags(eval, ev_hf);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "omega x alpha grid evaluation");
  std::string sw_pos, sw_neg, sw_vocab, sw_out;
  std::string sw_prediction = "score", sw_pool = "test";
  std::vector<double> sw_omegas{20, 10, 5, 1};
  std::vector<double> sw_alphas{100, 50, 20, 10, 5};
  EvalOptions sw_opt;
  HyperFlags sw_hf;
  sweep->add_option("--positives", sw_pos)->required();
  sweep->add_option("--negatives", sw_neg)->required();
  sweep->add_option("--vocab", sw_vocab)->required();
  sweep->add_option("--omegas", sw_omegas, "grid rows")->delimiter(',');
  sweep->add_option("--alphas", sw_alphas, "grid columns")->delimiter(',');
  sweep->add_option("--prediction", sw_prediction, "score|content");
  sweep->add_option("--pool", sw_pool, "test|universe");
  sweep->add_option("-M,--candidates", sw_opt.M);
  sweep->add_option("-N,--top", sw_opt.N);
  sweep->add_option("--folds", sw_opt.n_folds);
  sweep->add_option("--seed", sw_opt.seed);
  sweep->add_option("--out", sw_out, "report file (default stdout)");
  add_hyper_flags(sweep, sw_hf);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec, pos_pairs, neg_pairs, synth_out);
    if (*mine) {
      mcfg.alpha_sig = mine_alpha;
      mcfg.match = containment ? MatchMode::containment : MatchMode::exact;
      return cmd_mine(case_path, control_path, mcfg, mine_out);
    }
    if (*train) return cmd_train(tr_pos, tr_neg, tr_vocab, tr_hf, tr_model);
    if (*rec) {
      rc_cfg.direction = direction_from_string(rc_direction);
      rc_cfg.prediction = prediction_from_string(rc_prediction);
      return cmd_recommend(rc_model, rc_vocab, rc_input, rc_cfg, rc_out);
    }
    if (*eval) {
      ev_opt.method = method_from_string(ev_method);
      ev_opt.prediction = prediction_from_string(ev_prediction);
      ev_opt.pool = ev_pool == "universe" ? PoolMode::full_universe
                                          : PoolMode::test_only;
      return cmd_evaluate(ev_pos, ev_neg, ev_vocab, ev_upos, ev_uneg, ev_opt,
                          ev_hf, ev_out);
    }
    if (*sweep) {
      sw_opt.prediction = prediction_from_string(sw_prediction);
      sw_opt.pool = sw_pool == "universe" ? PoolMode::full_universe
                                          : PoolMode::test_only;
      return cmd_sweep(sw_pos, sw_neg, sw_vocab, sw_opt, sw_hf, sw_omegas,
                       sw_alphas, sw_out);
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
