#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adascope/graph.hpp"
#include "adascope/models.hpp"
#include "adascope/nn.hpp"

namespace adascope {

/// Per-node binary vector over depths: bit L is set when the depth-L model
/// classifies the node correctly. Rows outside the labelled node set stay zero.
struct ScopeLabelMatrix {
  Matrix bits;  // n x (lmax+1)
  std::vector<bool> all_correct;
  std::vector<bool> all_wrong;
  NodeSet all_correct_nodes;
  NodeSet all_wrong_nodes;

  int num_depths() const { return static_cast<int>(bits.cols()); }
};

ScopeLabelMatrix build_scope_labels(const LabelVector& y, const Matrix& family_logits,
                                    int num_classes, const NodeSet& nodes);
ScopeLabelMatrix build_scope_labels(const LabelVector& y, const DepthFamily& family,
                                    const NodeSet& nodes);

struct SplitConfig {
  double eta = 0.0;  // one of 0, 0.1, 1
  bool mask_all_correct = true;
  bool mask_all_wrong = true;
  std::uint64_t seed = 0;
};

struct ScopeSplit {
  NodeSet train;
  NodeSet val;
};

/// Re-splits the classifier's train/val nodes for the scope predictor:
///   eta = 0   -> (val, train)
///   eta = 0.1 -> (random 10% of val, rest of val)
///   eta = 1   -> (train, val)
ScopeSplit resplit(const NodeSet& train, const NodeSet& val, const SplitConfig& cfg);

/// Drops all-correct and/or all-wrong nodes from a training set.
NodeSet mask_uninformative(const NodeSet& nodes, const ScopeLabelMatrix& labels, const SplitConfig& cfg);

struct Modalities {
  bool xi = true;
  bool x = true;
  bool zeta = true;

  int count() const { return int{xi} + int{x} + int{zeta}; }
};

/// Comma-separated subset of {xi, x, zeta}.
Modalities parse_modalities(const std::string& list);
std::string to_string(const Modalities& m);

struct FusionConfig {
  Eigen::Index xi_dim = 0;
  Eigen::Index x_dim = 0;
  Eigen::Index zeta_dim = 0;
  Eigen::Index width = 64;
  int head_layers = 3;
  int num_depths = 0;
  Modalities active;
};

/// Scope predictor. Each active modality is projected to a shared width, the
/// projections are mixed (W_mix on their concatenation plus their plain sum),
/// passed through ReLU and mapped to one score per depth by an MLP head.
struct FusionParams {
  FusionConfig config;
  Matrix proj_xi;    // xi_dim x width
  Matrix proj_x;     // x_dim x width
  Matrix proj_zeta;  // zeta_dim x width
  Matrix mix;        // (active * width) x width
  MlpParams head;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

FusionParams init_fusion(const FusionConfig& cfg, Rng& rng);

/// Per-node inputs of the predictor; rows are node ids.
struct FusionInputs {
  Matrix xi;
  Matrix x;
  Matrix zeta;
};

struct FusionCache {
  std::vector<Matrix> inputs;     // active modality inputs, in xi, x, zeta order
  std::vector<Matrix> projected;  // matching projections
  Matrix concat;
  Matrix pre;
  MlpCache head;
};

/// Scores for the rows of `batch`, where each member is a row of the inputs.
Matrix fusion_forward(const FusionParams& p, const FusionInputs& in, const NodeSet& batch,
                      FusionCache* cache = nullptr);

/// Same as fusion_forward on already gathered rows.
Matrix fusion_forward_rows(const FusionParams& p, const Matrix& xi, const Matrix& x,
                           const Matrix& zeta, FusionCache* cache = nullptr);

Grads fusion_backward(const FusionParams& p, FusionCache& cache, const Matrix& grad_scores);

struct PsscLoss {
  double loss = 0.0;
  RowVector grad;  // w.r.t. the predictor scores
  bool clamped = false;
};

/// KL(softmax(bits) || gumbel_softmax(scores)) with the supplied Gumbel noise;
/// a zero noise vector gives the deterministic variant.
PsscLoss pssc_loss(const RowVector& bits, const RowVector& scores, double tau, const RowVector& noise);
PsscLoss pssc_loss(const RowVector& bits, const RowVector& scores, double tau, Rng& rng);

struct ScopeTrainConfig {
  Eigen::Index width = 64;
  int head_layers = 3;
  double lr = 0.01;
  int epochs = 300;
  int patience = 100;  // epochs without a better validation routing accuracy
  double tau = 2.0;
  Modalities inputs;
  std::uint64_t seed = 0;
};

struct Routing {
  std::vector<int> depth;       // chosen depth per requested node
  std::vector<int> prediction;  // class predicted by that depth's model
};

/// Routes nodes by the argmax of their scores (lowest depth on ties).
Routing route_by_scores(const Matrix& scores, const DepthFamily& family, const NodeSet& nodes);

Routing select_and_predict(const FusionParams& p, const FusionInputs& in, const DepthFamily& family,
                           const NodeSet& nodes);

double routed_accuracy(const Routing& r, const LabelVector& y, const NodeSet& nodes);

struct TrainedScopePredictor {
  FusionParams params;
  double best_val_routing = 0.0;
  int best_epoch = 0;
  std::vector<double> losses;
  bool clamped = false;
};

/// Adam on the mean PSSC loss over `split.train`; keeps the epoch with the best
/// routing accuracy on `split.val`. Zero epochs returns the initialization.
TrainedScopePredictor train_scope_predictor(const FusionInputs& in, const ScopeLabelMatrix& labels,
                                            const ScopeSplit& split, const DepthFamily& family,
                                            const LabelVector& y, const ScopeTrainConfig& cfg);

}  // namespace adascope
