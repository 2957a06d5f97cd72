#include "citeflow/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>

#include "citeflow/checkpoint.hpp"
#include "citeflow/common.hpp"

namespace citeflow {
namespace {

constexpr const char* kConfigTensor = "__config";
constexpr const char* kBaselineTensor = "baseline.constants";

// Name -> shape for every learnable tensor of a model. The map order is the
// canonical parameter order used by init, Adam, and checkpoints.
std::map<std::string, std::pair<int, int>> expected_shapes(const ModelConfig& c) {
  std::map<std::string, std::pair<int, int>> shapes;
  if (c.kind == ModelKind::mean) return shapes;
  if (c.input_width <= 0) throw Error("model input width must be positive");

  const bool has_gcn = c.kind != ModelKind::lstm_only;
  const bool has_lstm = c.kind != ModelKind::gcn_only;
  if (has_gcn) {
    if (c.gcn_hidden <= 0) throw Error("gcn hidden width must be positive");
    shapes["gcn.w0"] = {c.input_width, c.gcn_hidden};
    shapes["gcn.w1"] = {c.gcn_hidden, c.gcn_hidden};
  }
  if (has_lstm) {
    if (c.lstm_hidden <= 0) throw Error("lstm hidden width must be positive");
    const int in = c.kind == ModelKind::gcn_lstm ? c.gcn_hidden : c.input_width;
    for (const char* gate : {"wi", "wf", "wg", "wo"})
      shapes[std::string("lstm.") + gate] = {in + c.lstm_hidden, c.lstm_hidden};
    for (const char* gate : {"bi", "bf", "bg", "bo"})
      shapes[std::string("lstm.") + gate] = {1, c.lstm_hidden};
    shapes["head.w"] = {c.lstm_hidden, 1};
  } else {
    shapes["head.w"] = {c.gcn_hidden, 1};
  }
  shapes["head.b"] = {1, 1};
  return shapes;
}

Matrix rows_subset(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<int>(rows.size()), m.cols);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= m.rows)
      throw Error("node index " + std::to_string(rows[k]) + " out of range");
    std::copy_n(m.row_ptr(rows[k]), m.cols, out.row_ptr(static_cast<int>(k)));
  }
  return out;
}

LstmVars make_lstm_vars(const ParamVars& vars) {
  LstmVars cell;
  cell.wi = vars.at("lstm.wi");
  cell.wf = vars.at("lstm.wf");
  cell.wg = vars.at("lstm.wg");
  cell.wo = vars.at("lstm.wo");
  cell.bi = vars.at("lstm.bi");
  cell.bf = vars.at("lstm.bf");
  cell.bg = vars.at("lstm.bg");
  cell.bo = vars.at("lstm.bo");
  cell.head_w = vars.at("head.w");
  cell.head_b = vars.at("head.b");
  return cell;
}

void check_train_shapes(const ModelConfig& config, const TrainData& data) {
  if (data.node_features.empty()) throw Error("training data has no timesteps");
  const int m = data.node_features.front().rows;
  const int t_count = static_cast<int>(data.node_features.size());
  for (const Matrix& x : data.node_features) {
    if (x.rows != m) throw Error("feature matrices disagree on node count");
    if (config.kind != ModelKind::mean && x.cols != config.input_width)
      throw Error("feature width " + std::to_string(x.cols) + " does not match configured " +
                  std::to_string(config.input_width));
  }
  if (data.labels.rows != m || data.labels.cols != t_count)
    throw Error("label matrix shape does not match features");
  if (!data.mask.same_shape(data.labels)) throw Error("mask shape does not match labels");

  const bool needs_graph =
      config.kind == ModelKind::gcn_lstm || config.kind == ModelKind::gcn_only;
  if (needs_graph) {
    if (data.adjacencies == nullptr) throw Error("graph model requires adjacency matrices");
    if (static_cast<int>(data.adjacencies->size()) != t_count)
      throw Error("adjacency count does not match feature timesteps");
    for (const SparseMatrix& a : *data.adjacencies)
      if (a.rows != m || a.cols != m) throw Error("adjacency shape does not match node count");
  }
}

}  // namespace

ModelKind parse_model_kind(const std::string& text) {
  if (text == "gcn-lstm") return ModelKind::gcn_lstm;
  if (text == "lstm") return ModelKind::lstm_only;
  if (text == "gcn") return ModelKind::gcn_only;
  if (text == "mean") return ModelKind::mean;
  throw Error("unknown model kind: " + text);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::gcn_lstm: return "gcn-lstm";
    case ModelKind::lstm_only: return "lstm";
    case ModelKind::gcn_only: return "gcn";
    case ModelKind::mean: return "mean";
  }
  throw Error("invalid model kind value");
}

std::vector<std::string> ModelParams::names() const {
  std::vector<std::string> out;
  out.reserve(tensors.size());
  for (const auto& [name, value] : tensors) out.push_back(name);
  return out;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams params;
  params.config = config;
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : expected_shapes(config)) {
    Matrix value(shape.first, shape.second);
    if (name.rfind("lstm.b", 0) == 0 || name == "head.b") {
      // Biases start at zero except the forget gate, whose standard init of
      // one keeps early memory open.
      if (name == "lstm.bf") std::fill(value.data.begin(), value.data.end(), 1.0);
    } else {
      const double bound = std::sqrt(6.0 / (shape.first + shape.second));
      for (double& v : value.data) v = uniform_in(rng, -bound, bound);
    }
    params.tensors.emplace(name, std::move(value));
  }
  return params;
}

void save_params(const ModelParams& params, const std::string& path) {
  std::vector<NamedTensor> tensors;
  const ModelConfig& c = params.config;
  tensors.push_back({kConfigTensor,
                     Matrix(1, 5,
                            {static_cast<double>(static_cast<int>(c.kind)),
                             static_cast<double>(c.input_width),
                             static_cast<double>(c.gcn_hidden),
                             static_cast<double>(c.lstm_hidden), c.gcn_tanh ? 1.0 : 0.0})});
  for (const auto& [name, value] : params.tensors) tensors.push_back({name, value});
  save_checkpoint(path, tensors);
}

ModelParams load_params(const std::string& path) {
  const std::vector<NamedTensor> tensors = load_checkpoint(path);
  const Matrix* meta = find_tensor(tensors, kConfigTensor);
  if (meta == nullptr || meta->rows != 1 || meta->cols != 5)
    throw Error(path + ": checkpoint is missing its model config entry");

  ModelParams params;
  const int kind = static_cast<int>(meta->at(0, 0));
  if (kind < 0 || kind > 3) throw Error(path + ": checkpoint has an invalid model kind");
  params.config.kind = static_cast<ModelKind>(kind);
  params.config.input_width = static_cast<int>(meta->at(0, 1));
  params.config.gcn_hidden = static_cast<int>(meta->at(0, 2));
  params.config.lstm_hidden = static_cast<int>(meta->at(0, 3));
  params.config.gcn_tanh = meta->at(0, 4) != 0.0;

  for (const NamedTensor& t : tensors)
    if (t.name != kConfigTensor) params.tensors.emplace(t.name, t.value);

  if (params.config.kind == ModelKind::mean) {
    if (params.tensors.size() != 1 || params.tensors.count(kBaselineTensor) == 0)
      throw Error(path + ": mean baseline checkpoint must hold exactly the constants tensor");
    return params;
  }
  const auto shapes = expected_shapes(params.config);
  if (params.tensors.size() != shapes.size())
    throw Error(path + ": checkpoint tensor set does not match the model config");
  for (const auto& [name, shape] : shapes) {
    auto it = params.tensors.find(name);
    if (it == params.tensors.end()) throw Error(path + ": checkpoint is missing " + name);
    if (it->second.rows != shape.first || it->second.cols != shape.second)
      throw Error(path + ": tensor " + name + " has the wrong shape");
  }
  return params;
}

Var ParamVars::at(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return vars[i];
  throw Error("model has no parameter named " + name);
}

ParamVars register_params(Tape& tape, const ModelParams& params) {
  ParamVars out;
  for (const auto& [name, value] : params.tensors) {
    out.names.push_back(name);
    out.vars.push_back(tape.param(value));
  }
  return out;
}

std::vector<Var> gcn_embed(Tape& tape, const std::vector<SparseMatrix>& adjacencies,
                           const std::vector<Matrix>& node_features, Var w0, Var w1,
                           bool use_tanh) {
  if (adjacencies.size() != node_features.size())
    throw Error("adjacency count does not match feature timesteps");
  const auto act = [&](Var v) { return use_tanh ? tape.tanh(v) : tape.relu(v); };
  std::vector<Var> embeddings;
  embeddings.reserve(adjacencies.size());
  for (std::size_t t = 0; t < adjacencies.size(); ++t) {
    Var x = tape.input(node_features[t]);
    Var hidden = act(tape.spmm(adjacencies[t], tape.matmul(x, w0)));
    embeddings.push_back(act(tape.spmm(adjacencies[t], tape.matmul(hidden, w1))));
  }
  return embeddings;
}

Var lstm_decode(Tape& tape, const std::vector<Var>& sequence, const LstmVars& cell) {
  if (sequence.empty()) throw Error("lstm sequence is empty");
  const int batch = tape.value(sequence.front()).rows;
  const int hidden = tape.value(cell.wi).cols;

  Var h = tape.input(Matrix(batch, hidden));
  Var c = tape.input(Matrix(batch, hidden));
  std::vector<Var> steps;
  steps.reserve(sequence.size());
  for (Var x : sequence) {
    Var z = tape.concat_cols({x, h});
    Var i = tape.sigmoid(tape.add(tape.matmul(z, cell.wi), cell.bi));
    Var f = tape.sigmoid(tape.add(tape.matmul(z, cell.wf), cell.bf));
    Var g = tape.tanh(tape.add(tape.matmul(z, cell.wg), cell.bg));
    Var o = tape.sigmoid(tape.add(tape.matmul(z, cell.wo), cell.bo));
    c = tape.add(tape.mul(f, c), tape.mul(i, g));
    h = tape.mul(o, tape.tanh(c));
    steps.push_back(tape.add(tape.matmul(h, cell.head_w), cell.head_b));
  }
  return tape.concat_cols(steps);
}

Var forward_model(Tape& tape, const ModelParams& params, const ParamVars& vars,
                  const std::vector<SparseMatrix>* adjacencies,
                  const std::vector<Matrix>& node_features,
                  const std::vector<int>& batch_nodes) {
  if (batch_nodes.empty()) throw Error("forward pass needs a non-empty node batch");
  if (node_features.empty()) throw Error("forward pass needs at least one timestep");
  const ModelKind kind = params.config.kind;

  if (kind == ModelKind::lstm_only) {
    std::vector<Var> sequence;
    sequence.reserve(node_features.size());
    for (const Matrix& x : node_features)
      sequence.push_back(tape.gather_rows(tape.input(x), batch_nodes));
    return lstm_decode(tape, sequence, make_lstm_vars(vars));
  }

  if (adjacencies == nullptr) throw Error("graph model requires adjacency matrices");
  std::vector<Var> embeddings = gcn_embed(tape, *adjacencies, node_features, vars.at("gcn.w0"),
                                          vars.at("gcn.w1"), params.config.gcn_tanh);

  if (kind == ModelKind::gcn_lstm) {
    std::vector<Var> sequence;
    sequence.reserve(embeddings.size());
    for (Var z : embeddings) sequence.push_back(tape.gather_rows(z, batch_nodes));
    return lstm_decode(tape, sequence, make_lstm_vars(vars));
  }

  if (kind == ModelKind::gcn_only) {
    Var w = vars.at("head.w");
    Var b = vars.at("head.b");
    std::vector<Var> steps;
    steps.reserve(embeddings.size());
    for (Var z : embeddings)
      steps.push_back(tape.add(tape.matmul(tape.gather_rows(z, batch_nodes), w), b));
    return tape.concat_cols(steps);
  }
  throw Error("mean baseline has no learned forward pass");
}

Matrix MeanBaseline::predict(int n_rows) const {
  Matrix out(n_rows, static_cast<int>(constants.size()));
  for (int r = 0; r < n_rows; ++r)
    for (int t = 0; t < out.cols; ++t) out.at(r, t) = constants[static_cast<std::size_t>(t)];
  return out;
}

MeanBaseline fit_mean_baseline(const Matrix& labels, const Matrix& mask,
                               const std::vector<int>& fit_nodes) {
  if (!labels.same_shape(mask)) throw Error("mask shape does not match labels");
  if (fit_nodes.empty()) throw Error("mean baseline needs at least one node to fit on");
  MeanBaseline baseline;
  baseline.constants.resize(static_cast<std::size_t>(labels.cols));
  for (int t = 0; t < labels.cols; ++t) {
    double sum = 0.0;
    long long count = 0;
    for (int node : fit_nodes) {
      if (node < 0 || node >= labels.rows)
        throw Error("node index " + std::to_string(node) + " out of range");
      if (mask.at(node, t) != 0.0) {
        sum += labels.at(node, t);
        ++count;
      }
    }
    if (count == 0)
      throw Error("timestep " + std::to_string(t) +
                  " has no masked-in train/val cells; the split is degenerate");
    baseline.constants[static_cast<std::size_t>(t)] = sum / static_cast<double>(count);
  }
  return baseline;
}

namespace {

double masked_abs_error(const Matrix& predictions, const Matrix& labels, const Matrix& mask,
                        const std::vector<int>& node_subset, bool positional) {
  if (!labels.same_shape(mask)) throw Error("mask shape does not match labels");
  if (predictions.cols != labels.cols) throw Error("prediction width does not match labels");
  double total = 0.0;
  long long cells = 0;
  for (std::size_t k = 0; k < node_subset.size(); ++k) {
    const int node = node_subset[k];
    if (node < 0 || node >= labels.rows)
      throw Error("node index " + std::to_string(node) + " out of range");
    const int pred_row = positional ? static_cast<int>(k) : node;
    for (int t = 0; t < labels.cols; ++t) {
      if (mask.at(node, t) == 0.0) continue;
      total += std::abs(predictions.at(pred_row, t) - labels.at(node, t));
      ++cells;
    }
  }
  if (cells == 0) throw Error("mae over an empty masked selection is undefined");
  return total / static_cast<double>(cells);
}

}  // namespace

double mae(const Matrix& predictions, const Matrix& labels, const Matrix& mask,
           const std::vector<int>& node_subset) {
  if (predictions.rows != labels.rows)
    throw Error("full-graph mae expects one prediction row per node");
  return masked_abs_error(predictions, labels, mask, node_subset, false);
}

double mae_rows(const Matrix& predictions, const Matrix& labels, const Matrix& mask,
                const std::vector<int>& node_subset) {
  if (predictions.rows != static_cast<int>(node_subset.size()))
    throw Error("row-wise mae expects one prediction row per subset entry");
  return masked_abs_error(predictions, labels, mask, node_subset, true);
}

EarlyStopper::EarlyStopper(int patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience <= 0) throw Error("patience must be positive");
}

bool EarlyStopper::observe(double value) {
  ++observed_;
  if (value < best_) {
    best_ = value;
    best_index_ = observed_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

TrainResult train_model(const ModelConfig& config, const TrainConfig& train_config,
                        const TrainData& data) {
  check_train_shapes(config, data);
  if (data.train_nodes.empty()) throw Error("train split is empty");
  if (data.val_nodes.empty()) throw Error("validation split is empty");

  TrainResult result;
  if (config.kind == ModelKind::mean) {
    std::vector<int> fit_nodes = data.train_nodes;
    fit_nodes.insert(fit_nodes.end(), data.val_nodes.begin(), data.val_nodes.end());
    const MeanBaseline baseline = fit_mean_baseline(data.labels, data.mask, fit_nodes);
    result.params.config = config;
    result.params.tensors.emplace(
        kBaselineTensor, Matrix(1, data.labels.cols, std::vector<double>(baseline.constants)));
    result.best_val_mae =
        mae(baseline.predict(data.labels.rows), data.labels, data.mask, data.val_nodes);
    return result;
  }

  if (train_config.batch_size <= 0) throw Error("batch size must be positive");
  if (train_config.max_epochs <= 0) throw Error("max epochs must be positive");
  if (!(train_config.learning_rate > 0.0)) throw Error("learning rate must be positive");

  ModelParams params = init_params(config, train_config.seed);
  AdamConfig adam_config;
  adam_config.lr = train_config.learning_rate;
  AdamState adam(adam_config);
  std::mt19937_64 shuffle_rng(fnv1a64("shuffle", train_config.seed));
  EarlyStopper stopper(train_config.patience);

  ModelParams best_params = params;
  std::vector<int> order = data.train_nodes;

  for (int epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = uniform_below(shuffle_rng, i);
      std::swap(order[i - 1], order[j]);
    }

    double epoch_abs = 0.0;
    long long epoch_cells = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(train_config.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(train_config.batch_size));
      const std::vector<int> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      const Matrix batch_labels = rows_subset(data.labels, batch);
      const Matrix batch_mask = rows_subset(data.mask, batch);

      Tape tape;
      const ParamVars vars = register_params(tape, params);
      try {
        Var predictions =
            forward_model(tape, params, vars, data.adjacencies, data.node_features, batch);
        Var loss = tape.reduce_mean_abs(tape.sub(predictions, tape.input(batch_labels)),
                                        batch_mask);
        tape.backward(loss);

        long long cells = 0;
        for (double v : batch_mask.data) cells += v != 0.0 ? 1 : 0;
        epoch_abs += tape.value(loss).at(0, 0) * static_cast<double>(cells);
        epoch_cells += cells;
      } catch (const NonFiniteError& err) {
        throw NonFiniteError("training diverged at epoch " + std::to_string(epoch) +
                             ", batch starting at node offset " + std::to_string(start) + ": " +
                             err.what());
      }

      std::vector<Matrix*> tensors;
      std::vector<const Matrix*> grads;
      for (std::size_t k = 0; k < vars.names.size(); ++k) {
        tensors.push_back(&params.tensors.at(vars.names[k]));
        grads.push_back(&tape.grad(vars.vars[k]));
      }
      adam.step(tensors, grads);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mae = epoch_cells > 0 ? epoch_abs / static_cast<double>(epoch_cells) : 0.0;
    const Matrix val_pred =
        predict(params, data.adjacencies, data.node_features, data.val_nodes);
    stats.val_mae = mae_rows(val_pred, data.labels, data.mask, data.val_nodes);
    result.history.push_back(stats);

    if (stopper.observe(stats.val_mae)) {
      best_params = params;
      result.best_epoch = epoch;
      result.best_val_mae = stats.val_mae;
    }
    if (stopper.should_stop()) break;
  }

  result.params = std::move(best_params);
  return result;
}

Matrix predict(const ModelParams& params, const std::vector<SparseMatrix>* adjacencies,
               const std::vector<Matrix>& node_features, const std::vector<int>& nodes,
               int chunk_size) {
  if (nodes.empty()) throw Error("predict needs a non-empty node list");
  if (chunk_size <= 0) throw Error("chunk size must be positive");

  if (params.config.kind == ModelKind::mean) {
    auto it = params.tensors.find(kBaselineTensor);
    if (it == params.tensors.end()) throw Error("mean baseline is missing its constants tensor");
    MeanBaseline baseline;
    baseline.constants.assign(it->second.data.begin(), it->second.data.end());
    return baseline.predict(static_cast<int>(nodes.size()));
  }

  if (node_features.empty()) throw Error("predict needs at least one timestep");
  Matrix out(static_cast<int>(nodes.size()), static_cast<int>(node_features.size()));
  for (std::size_t start = 0; start < nodes.size();
       start += static_cast<std::size_t>(chunk_size)) {
    const std::size_t stop =
        std::min(nodes.size(), start + static_cast<std::size_t>(chunk_size));
    const std::vector<int> chunk(nodes.begin() + static_cast<std::ptrdiff_t>(start),
                                 nodes.begin() + static_cast<std::ptrdiff_t>(stop));
    Tape tape;
    const ParamVars vars = register_params(tape, params);
    const Var predictions =
        forward_model(tape, params, vars, adjacencies, node_features, chunk);
    const Matrix& value = tape.value(predictions);
    for (std::size_t k = 0; k < chunk.size(); ++k)
      std::copy_n(value.row_ptr(static_cast<int>(k)), value.cols,
                  out.row_ptr(static_cast<int>(start + k)));
  }
  return out;
}

}  // namespace citeflow
