// citeflow: citation-count prediction pipeline over dynamic citation graphs.
//
// Subcommands cover the full workflow: ingest a JSONL paper dump, build the
// probed dynamic graph, assemble features and labels, train/evaluate models,
// generate synthetic corpora, and run multi-seed experiment suites.

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "citeflow/corpus.hpp"
#include "citeflow/dyngraph.hpp"
#include "citeflow/features.hpp"
#include "citeflow/harness.hpp"
#include "citeflow/models.hpp"

using namespace citeflow;

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Restrict a loaded feature tensor and label matrix to the years of a
// windowed graph (a suffix of the full year list).
void restrict_to_window(const DynamicGraph& window, FeatureTensor& features,
                        LabelMatrix& labels) {
  const std::vector<int>& wanted = window.years();
  const auto it = std::find(features.years.begin(), features.years.end(), wanted.front());
  const std::size_t offset = static_cast<std::size_t>(it - features.years.begin());
  if (it == features.years.end() ||
      features.years.size() - offset != wanted.size() ||
      !std::equal(wanted.begin(), wanted.end(), it))
    throw Error("feature directory years do not cover the requested window");
  if (offset == 0) return;

  features.years.erase(features.years.begin(),
                       features.years.begin() + static_cast<std::ptrdiff_t>(offset));
  features.x.erase(features.x.begin(),
                   features.x.begin() + static_cast<std::ptrdiff_t>(offset));
  const int t_count = static_cast<int>(wanted.size());
  Matrix l(labels.labels.rows, t_count);
  Matrix m(labels.labels.rows, t_count);
  for (int r = 0; r < l.rows; ++r)
    for (int t = 0; t < t_count; ++t) {
      l.at(r, t) = labels.labels.at(r, t + static_cast<int>(offset));
      m.at(r, t) = labels.mask.at(r, t + static_cast<int>(offset));
    }
  labels.labels = std::move(l);
  labels.mask = std::move(m);
}

int parse_years_back(const std::string& text) {
  if (text == "all") return 0;  // window_last keeps everything for k <= 0
  return static_cast<int>(std::stoll(text));
}

struct EvalData {
  DynamicGraph graph;
  std::vector<SparseMatrix> adjacencies;
  FeatureTensor features;
  LabelMatrix labels;
};

EvalData load_windowed(const std::string& graph_dir, const std::string& features_dir,
                       const std::string& years_back) {
  DynamicGraph full = load_graph(graph_dir);
  DynamicGraph window = window_last(full, parse_years_back(years_back));
  FeatureTensor features;
  LabelMatrix labels;
  load_features(features_dir, features, labels);
  if (features.x.empty() || features.x.front().rows != window.node_count())
    throw Error("feature directory does not match the graph's node count");
  restrict_to_window(window, features, labels);

  EvalData data{std::move(window), {}, std::move(features), std::move(labels)};
  data.adjacencies.reserve(data.graph.years().size());
  for (const int year : data.graph.years())
    data.adjacencies.push_back(normalized_adjacency(data.graph, year));
  return data;
}

const std::vector<int>& split_part(const SplitAssignment& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw Error("unknown split name: " + name);
}

int cmd_ingest(const std::string& input, const std::string& aliases_path,
               const std::string& venues_csv, const std::string& out) {
  AliasTable aliases;
  if (!aliases_path.empty()) aliases = AliasTable::load(aliases_path);
  std::ifstream in(input, std::ios::binary);
  if (!in) throw Error("cannot read " + input);
  Corpus corpus = parse_corpus(in, std::move(aliases));

  if (!venues_csv.empty()) {
    std::vector<std::string> allowlist;
    for (const std::string& part : split(venues_csv, ',')) {
      const std::string name = trim(part);
      if (!name.empty()) allowlist.push_back(name);
    }
    corpus = canonicalized(filter_by_venues(corpus, allowlist));
  }
  save_corpus(corpus, out);

  const CorpusDiagnostics& d = corpus.diagnostics();
  std::cout << "papers\t" << corpus.size() << "\n"
            << "dropped_self_citations\t" << d.self_citations << "\n"
            << "dropped_duplicate_citations\t" << d.duplicate_citations << "\n"
            << "dropped_dangling_citations\t" << d.dangling_citations << "\n"
            << "dropped_time_travel_citations\t" << d.time_travel_citations << "\n";
  return 0;
}

int cmd_build_graph(const std::string& corpus_path, const std::string& probe,
                    const std::string& years_back, const std::string& out) {
  const Corpus corpus = load_corpus(corpus_path);
  DynamicGraph graph = build_dynamic_graph(corpus, parse_probe_mode(probe));
  graph = window_last(graph, parse_years_back(years_back));
  save_graph(graph, out);
  std::cout << "best_paper\t" << graph.best_paper() << "\n"
            << "nodes\t" << graph.node_count() << "\n"
            << "years\t" << graph.years().front() << ".." << graph.years().back() << "\n";
  return 0;
}

int cmd_stats(const std::string& graph_dir, const std::string& corpus_path) {
  const Corpus corpus = load_corpus(corpus_path);
  const DynamicGraph graph = load_graph(graph_dir);
  std::cout << "year\tnodes\tedges\tmean_degree\tmax_degree\tmax_citations\tavg_citations\n";
  for (const YearStats& s : snapshot_stats(graph, corpus))
    std::cout << s.year << "\t" << s.n_nodes << "\t" << s.n_directed_edges << "\t"
              << g17(s.mean_degree) << "\t" << s.max_degree << "\t" << s.max_citations << "\t"
              << g17(s.avg_citations) << "\n";
  return 0;
}

int cmd_features(const std::string& graph_dir, const std::string& corpus_path,
                 const std::string& set_name, const std::string& rank_ref,
                 const std::string& embeddings, int embedding_width,
                 std::uint64_t fallback_seed, const std::string& out) {
  const Corpus corpus = load_corpus(corpus_path);
  const DynamicGraph graph = load_graph(graph_dir);
  FeatureConfig config = FeatureConfig::parse(set_name);
  if (rank_ref == "rolling")
    config.rank_ref = RankReference::rolling;
  else if (rank_ref == "final")
    config.rank_ref = RankReference::final_year;
  else
    throw Error("unknown rank reference: " + rank_ref);

  std::optional<EmbeddingStore> store;
  if (config.use_abstract)
    store.emplace(abstract_features(corpus, embeddings, embedding_width, fallback_seed));

  const FeatureTensor features =
      assemble_feature_tensor(graph, corpus, config, store ? &*store : nullptr);
  const LabelMatrix labels =
      label_matrix(graph, cumulative_citation_counts(corpus), corpus);
  save_features(features, labels, out);
  std::cout << "feature_set\t" << config.set_name() << "\n"
            << "width\t" << features.width() << "\n"
            << "years\t" << features.years.size() << "\n";
  if (store) std::cout << "embedding_provenance\t" << store->provenance() << "\n";
  return 0;
}

struct TrainCli {
  std::string graph_dir, features_dir, model, years_back = "all";
  std::string splits_path, out, history_path;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  int gcn_hidden = 256;
  int lstm_hidden = 128;
  bool gcn_tanh = false;
  TrainConfig train;
};

int cmd_train(const TrainCli& cli) {
  EvalData data = load_windowed(cli.graph_dir, cli.features_dir, cli.years_back);
  const SplitAssignment split =
      load_or_create_split(cli.splits_path, data.graph.node_count(), cli.split_seed);

  ModelConfig mc;
  mc.kind = parse_model_kind(cli.model);
  mc.input_width = data.features.width();
  mc.gcn_hidden = cli.gcn_hidden;
  mc.lstm_hidden = cli.lstm_hidden;
  mc.gcn_tanh = cli.gcn_tanh;
  TrainConfig tc = cli.train;
  tc.seed = cli.seed;

  TrainData td;
  const bool needs_graph = mc.kind == ModelKind::gcn_lstm || mc.kind == ModelKind::gcn_only;
  td.adjacencies = needs_graph ? &data.adjacencies : nullptr;
  td.node_features = data.features.x;
  td.labels = data.labels.labels;
  td.mask = data.labels.mask;
  td.train_nodes = split.train;
  td.val_nodes = split.val;

  const TrainResult result = train_model(mc, tc, td);
  save_params(result.params, cli.out);
  if (!cli.history_path.empty()) {
    std::ofstream hist(cli.history_path, std::ios::binary);
    if (!hist) throw Error("cannot write " + cli.history_path);
    hist << "epoch\ttrain_mae\tval_mae\n";
    for (const EpochStats& e : result.history)
      hist << e.epoch << "\t" << g17(e.train_mae) << "\t" << g17(e.val_mae) << "\n";
  }
  std::cout << "model\t" << cli.model << "\n"
            << "epochs_run\t" << result.history.size() << "\n"
            << "best_epoch\t" << result.best_epoch << "\n"
            << "best_val_mae\t" << g17(result.best_val_mae) << "\n"
            << "checkpoint\t" << cli.out << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& graph_dir,
                 const std::string& features_dir, const std::string& years_back,
                 const std::string& splits_path, const std::string& split_name) {
  const ModelParams params = load_params(ckpt);
  EvalData data = load_windowed(graph_dir, features_dir, years_back);
  const SplitAssignment split = load_split(splits_path);
  if (split.node_count() != data.graph.node_count())
    throw Error("split file does not match the graph's node count");
  const std::vector<int>& nodes = split_part(split, split_name);

  const bool needs_graph =
      params.config.kind == ModelKind::gcn_lstm || params.config.kind == ModelKind::gcn_only;
  const Matrix predictions = predict(params, needs_graph ? &data.adjacencies : nullptr,
                                     data.features.x, nodes);
  const double overall = mae_rows(predictions, data.labels.labels, data.labels.mask, nodes);
  const std::vector<TimestepMae> curve = per_timestep_mae(
      predictions, data.labels.labels, data.labels.mask, nodes, data.graph.years());

  std::cout << "overall\t" << g17(overall) << "\n";
  std::cout << "year\tn_cells\tmae\n";
  for (const TimestepMae& p : curve) {
    std::cout << p.year << "\t" << p.cells << "\t";
    if (p.mae.has_value())
      std::cout << g17(*p.mae) << "\n";
    else
      std::cout << "NA\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"citeflow: sequence citation-count prediction on dynamic citation graphs"};
  app.require_subcommand(1);

  // ingest
  std::string in_path, aliases_path, venues_csv, out_path;
  CLI::App* ingest = app.add_subcommand("ingest", "Parse and filter a JSONL paper dump");
  ingest->add_option("--input", in_path, "raw JSONL file")->required();
  ingest->add_option("--aliases", aliases_path, "venue alias TSV (raw<TAB>canonical)");
  ingest->add_option("--venues", venues_csv, "comma list of canonical venues to keep");
  ingest->add_option("--out", out_path, "output corpus JSONL")->required();

  // build-graph
  std::string bg_corpus, bg_probe = "alg1", bg_years = "all", bg_out;
  CLI::App* build = app.add_subcommand("build-graph", "Build the probed dynamic graph");
  build->add_option("--corpus", bg_corpus, "corpus JSONL")->required();
  build->add_option("--probe", bg_probe, "probe mode: alg1 | final-component");
  build->add_option("--years-back", bg_years, "10 | 20 | all");
  build->add_option("--out", bg_out, "output graph directory")->required();

  // stats
  std::string st_graph, st_corpus;
  CLI::App* stats = app.add_subcommand("stats", "Per-snapshot graph statistics TSV");
  stats->add_option("--graph", st_graph, "graph directory")->required();
  stats->add_option("--corpus", st_corpus, "corpus JSONL")->required();

  // features
  std::string ft_graph, ft_corpus, ft_set, ft_rank = "rolling", ft_embeddings, ft_out;
  int ft_width = 768;
  std::uint64_t ft_seed = 0;
  CLI::App* features = app.add_subcommand("features", "Assemble node features and labels");
  features->add_option("--graph", ft_graph, "graph directory")->required();
  features->add_option("--corpus", ft_corpus, "corpus JSONL")->required();
  features->add_option("--set", ft_set, "abstract | author | venue | author+venue | all")
      ->required();
  features->add_option("--rank-ref", ft_rank, "rolling | final");
  features->add_option("--embeddings", ft_embeddings, "external embedding store");
  features->add_option("--embedding-width", ft_width, "abstract vector width");
  features->add_option("--fallback-seed", ft_seed, "seed for the hash fallback");
  features->add_option("--out", ft_out, "output feature directory")->required();

  // train
  TrainCli tr;
  CLI::App* train = app.add_subcommand("train", "Train a model");
  train->add_option("--graph", tr.graph_dir, "graph directory")->required();
  train->add_option("--features", tr.features_dir, "feature directory")->required();
  train->add_option("--model", tr.model, "gcn-lstm | lstm | gcn | mean")->required();
  train->add_option("--years-back", tr.years_back, "10 | 20 | all");
  train->add_option("--seed", tr.seed, "training seed");
  train->add_option("--splits", tr.splits_path, "split file (created if absent)")->required();
  train->add_option("--split-seed", tr.split_seed, "seed when creating the split");
  train->add_option("--gcn-hidden", tr.gcn_hidden, "graph-conv hidden width");
  train->add_option("--lstm-hidden", tr.lstm_hidden, "LSTM hidden width");
  train->add_flag("--gcn-tanh", tr.gcn_tanh, "tanh graph-conv activation instead of relu");
  train->add_option("--lr", tr.train.learning_rate, "Adam learning rate");
  train->add_option("--batch-size", tr.train.batch_size, "decoder minibatch size");
  train->add_option("--max-epochs", tr.train.max_epochs, "epoch cap");
  train->add_option("--patience", tr.train.patience, "early-stopping patience");
  train->add_option("--history", tr.history_path, "optional epoch history TSV");
  train->add_option("--out", tr.out, "output checkpoint")->required();

  // evaluate
  std::string ev_ckpt, ev_graph, ev_features, ev_years = "all", ev_splits, ev_split = "test";
  CLI::App* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a split");
  evaluate->add_option("--ckpt", ev_ckpt, "model checkpoint")->required();
  evaluate->add_option("--graph", ev_graph, "graph directory")->required();
  evaluate->add_option("--features", ev_features, "feature directory")->required();
  evaluate->add_option("--years-back", ev_years, "10 | 20 | all (match training)");
  evaluate->add_option("--splits", ev_splits, "split file")->required();
  evaluate->add_option("--split", ev_split, "train | val | test");

  // synth
  std::string sy_config, sy_out;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic citation corpus");
  synth->add_option("--config", sy_config, "synthetic config file")->required();
  synth->add_option("--out", sy_out, "output corpus JSONL")->required();

  // experiment
  std::string ex_suite, ex_out;
  CLI::App* experiment = app.add_subcommand("experiment", "Run a multi-seed experiment suite");
  experiment->add_option("--suite", ex_suite, "suite config file")->required();
  experiment->add_option("--out", ex_out, "output directory")->required();

  // report
  std::string rp_dir;
  CLI::App* report = app.add_subcommand("report", "Aggregate experiment artifacts into TSVs");
  report->add_option("--dir", rp_dir, "experiment output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(in_path, aliases_path, venues_csv, out_path);
    if (*build) return cmd_build_graph(bg_corpus, bg_probe, bg_years, bg_out);
    if (*stats) return cmd_stats(st_graph, st_corpus);
    if (*features)
      return cmd_features(ft_graph, ft_corpus, ft_set, ft_rank, ft_embeddings, ft_width,
                          ft_seed, ft_out);
    if (*train) return cmd_train(tr);
    if (*evaluate)
      return cmd_evaluate(ev_ckpt, ev_graph, ev_features, ev_years, ev_splits, ev_split);
    if (*synth) {
      const Corpus corpus = generate_synthetic_corpus(SynthConfig::parse_file(sy_config));
      save_corpus(corpus, sy_out);
      std::cout << "papers\t" << corpus.size() << "\n";
      return 0;
    }
    if (*experiment) {
      const std::vector<CellReport> cells = run_experiment(parse_suite_file(ex_suite), ex_out);
      write_report(ex_out);
      for (const CellReport& c : cells)
        std::cout << c.model << "\t" << c.feature_set << "\t" << c.years_back << "\t"
                  << g17(c.mean_mae) << "\t" << g17(c.std_mae) << "\n";
      return 0;
    }
    if (*report) {
      write_report(rp_dir);
      std::cout << "report written to " << rp_dir << "\n";
      return 0;
    }
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
