#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "citeflow/features.hpp"
#include "citeflow/tensor.hpp"

namespace citeflow {

// Which predictor to build. `mean` is the non-learned per-timestep constant
// baseline; the other three share the LSTM/GCN building blocks below.
enum class ModelKind { gcn_lstm, lstm_only, gcn_only, mean };

ModelKind parse_model_kind(const std::string& text);
std::string to_string(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::gcn_lstm;
  int input_width = 0;   // feature columns per snapshot
  int gcn_hidden = 256;  // width of both graph-conv layers
  int lstm_hidden = 128;
  bool gcn_tanh = false;  // false = relu activations in the graph encoder
};

// All learnable tensors, keyed by stable names ("gcn.w0", "lstm.wi", ...).
// std::map keeps iteration order alphabetical, which fixes the parameter
// order seen by the optimizer and the checkpoint file.
struct ModelParams {
  ModelConfig config;
  std::map<std::string, Matrix> tensors;

  std::vector<std::string> names() const;
};

// Xavier-uniform weights, zero biases except the forget gate bias (1.0).
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

void save_params(const ModelParams& params, const std::string& path);
ModelParams load_params(const std::string& path);

// Tape handles for one model's parameters, registered via Tape::param in
// name order. Gradients after backward() line up with ModelParams::names().
struct ParamVars {
  std::vector<std::string> names;
  std::vector<Var> vars;

  Var at(const std::string& name) const;
};

ParamVars register_params(Tape& tape, const ModelParams& params);

// Two-layer graph convolution per snapshot:
//   Z_t = act(A_t * act(A_t * X_t * W0) * W1)
// Returns one m x gcn_hidden embedding per timestep.
std::vector<Var> gcn_embed(Tape& tape, const std::vector<SparseMatrix>& adjacencies,
                           const std::vector<Matrix>& node_features, Var w0, Var w1,
                           bool use_tanh);

// Single-layer unidirectional LSTM over the timestep sequence, followed by a
// linear head on each hidden state. `sequence[t]` is batch x d; the result is
// batch x T. Hidden and cell states start at zero.
struct LstmVars {
  Var wi, wf, wg, wo;  // (d + hidden) x hidden, applied to [x_t | h_{t-1}]
  Var bi, bf, bg, bo;  // 1 x hidden
  Var head_w;          // hidden x 1
  Var head_b;          // 1 x 1
};

Var lstm_decode(Tape& tape, const std::vector<Var>& sequence, const LstmVars& cell);

// Full forward pass for any learned model kind. `batch_nodes` selects the
// rows fed to the decoder stage; graph convolutions always run on the whole
// graph so every neighbourhood is intact. Returns |batch_nodes| x T.
Var forward_model(Tape& tape, const ModelParams& params, const ParamVars& vars,
                  const std::vector<SparseMatrix>* adjacencies,
                  const std::vector<Matrix>& node_features,
                  const std::vector<int>& batch_nodes);

// Per-timestep constants fitted on the masked train+val labels. Throws if a
// timestep has no masked-in cells (degenerate split).
struct MeanBaseline {
  std::vector<double> constants;

  Matrix predict(int n_rows) const;
};

MeanBaseline fit_mean_baseline(const Matrix& labels, const Matrix& mask,
                               const std::vector<int>& fit_nodes);

// Masked mean absolute error restricted to a node subset. `mae` expects
// predictions for the full graph (m x T); `mae_rows` expects one row per
// subset entry (|subset| x T). Both throw if no masked cell survives.
double mae(const Matrix& predictions, const Matrix& labels, const Matrix& mask,
           const std::vector<int>& node_subset);
double mae_rows(const Matrix& predictions, const Matrix& labels, const Matrix& mask,
                const std::vector<int>& node_subset);

// Tracks the best validation score seen so far. stop() turns true once
// `patience` consecutive observations fail to improve on the best.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);

  // Returns true when `value` strictly improves on the best so far.
  bool observe(double value);
  bool should_stop() const { return since_best_ >= patience_; }
  double best_value() const { return best_; }
  int best_index() const { return best_index_; }

 private:
  int patience_;
  int since_best_ = 0;
  int best_index_ = -1;
  int observed_ = 0;
  double best_;
};

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 256;
  int max_epochs = 1000;
  int patience = 10;
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_mae = 0.0;
  double val_mae = 0.0;
};

struct TrainResult {
  ModelParams params;  // parameters from the best-validation epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;
  double best_val_mae = 0.0;
};

// Everything the training loop reads. `adjacencies` may be null for
// lstm_only and mean models; all matrices share the node indexing of the
// graph the features were built from.
struct TrainData {
  const std::vector<SparseMatrix>* adjacencies = nullptr;
  std::vector<Matrix> node_features;  // T matrices, m x input_width
  Matrix labels;                      // m x T
  Matrix mask;                        // m x T
  std::vector<int> train_nodes;
  std::vector<int> val_nodes;
};

// Minibatch Adam on the masked MAE with early stopping on validation MAE.
// The reported train_mae per epoch is the mask-weighted average of the
// minibatch losses seen during that epoch. For ModelKind::mean this fits the
// per-timestep constants in one shot (history stays empty).
TrainResult train_model(const ModelConfig& config, const TrainConfig& train_config,
                        const TrainData& data);

// Forward-only predictions for a node subset, evaluated in chunks so tapes
// stay small. Returns |nodes| x T.
Matrix predict(const ModelParams& params, const std::vector<SparseMatrix>* adjacencies,
               const std::vector<Matrix>& node_features, const std::vector<int>& nodes,
               int chunk_size = 4096);

}  // namespace citeflow
