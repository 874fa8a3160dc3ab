#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "adascope/graph.hpp"
#include "adascope/nn.hpp"

namespace adascope {

enum class Architecture { kMlp, kSgc, kGcn, kHopAttention };

/// Accepts mlp, sgc, gcn, hopattn (alias hop-attention).
Architecture parse_architecture(const std::string& name);
std::string to_string(Architecture arch);

struct ModelSpec {
  Architecture arch = Architecture::kSgc;
  int depth = 0;
  Eigen::Index hidden = 64;
  int mlp_layers = 3;
  NormKind norm = NormKind::kNone;
  double input_dropout = 0.0;
  double dropout = 0.0;
  double lr = 0.01;
  int max_epochs = 1000;
  int patience = 50;
  std::uint64_t seed = 0;

  /// Depth 0 always trains a plain MLP.
  Architecture effective_arch() const { return depth == 0 ? Architecture::kMlp : arch; }
};

/// op^L x by L successive propagations.
Matrix sgc_precompute(const PropagationOperator& op, const Matrix& x, int depth);

/// Per-node soft combination of hop representations: alpha = softmax over
/// hops of a linear score, output = sum_l alpha_l h_l.
struct HopAttentionOutput {
  Matrix combined;  // n x width
  Matrix alpha;     // n x hops, rows sum to 1
};

HopAttentionOutput hop_attention_forward(const std::vector<Matrix>& hops, const Linear& scorer);

struct HopAttentionGrads {
  std::vector<Matrix> hops;
  Matrix weight;
  Matrix bias;
};

HopAttentionGrads hop_attention_backward(const std::vector<Matrix>& hops, const Linear& scorer,
                                         const HopAttentionOutput& out, const Matrix& grad_combined);

/// Graph-dependent inputs of a classifier, computed once per graph.
struct ModelInputs {
  Matrix features;           // X for mlp/gcn, op^L X for sgc
  std::vector<Matrix> hops;  // op^0 X .. op^L X for hop attention
  PropagationOperator op;
};

ModelInputs prepare_inputs(const ModelSpec& spec, const Graph& g, const Matrix& x);

struct ClassifierCache {
  MlpCache head;
  std::vector<Matrix> branch_out;
  HopAttentionOutput attention;
};

class NodeClassifier {
 public:
  NodeClassifier() = default;
  NodeClassifier(const ModelSpec& spec, Eigen::Index in_features, int num_classes);

  const ModelSpec& spec() const { return spec_; }
  int num_classes() const { return num_classes_; }
  Eigen::Index in_features() const { return in_features_; }

  Matrix forward(const ModelInputs& in, bool train_mode, Rng& rng,
                 ClassifierCache* cache = nullptr) const;
  Grads backward(const ModelInputs& in, ClassifierCache& cache, const Matrix& grad_logits) const;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;

  /// Inference-mode logits for every node.
  Matrix predict_logits(const Graph& g, const Matrix& x) const;

 private:
  ModelSpec spec_;
  Eigen::Index in_features_ = 0;
  int num_classes_ = 0;
  MlpParams head_;               // the MLP, the SGC transform, the GCN stack or the hop head
  std::vector<Linear> branches_;  // hop attention: one projection per hop
  Linear scorer_;                 // hop attention: width -> 1
};

double accuracy(const Matrix& logits, const LabelVector& y, const NodeSet& nodes);
std::vector<int> predictions(const Matrix& logits);

struct TrainedClassifier {
  NodeClassifier model;
  double best_val_accuracy = 0.0;
  int best_epoch = 0;
  std::vector<double> train_losses;
  std::vector<double> val_accuracies;
};

/// Full-batch Adam on cross-entropy over `train`; keeps the parameters of the
/// epoch with the best validation accuracy (earliest on ties) and stops after
/// `spec.patience` epochs without improvement.
TrainedClassifier train_classifier(const ModelSpec& spec, const Graph& g, const Matrix& x,
                                   const LabelVector& y, const NodeSet& train, const NodeSet& val);

struct DepthFamily {
  Architecture arch = Architecture::kSgc;
  int lmax = 0;
  int num_classes = 0;
  std::vector<TrainedClassifier> members;  // index = depth
  Matrix logits;                           // n x C(lmax+1), depth blocks in order

  Matrix block(int depth) const {
    return logits.middleCols(static_cast<Eigen::Index>(depth) * num_classes, num_classes);
  }
  std::vector<int> predictions(int depth) const;
};

/// Trains depths 0..lmax; member L uses seed Rng(base.seed).derive(L).
DepthFamily train_depth_family(Architecture arch, int lmax, const Graph& g, const Matrix& x,
                               const LabelVector& y, const NodeSet& train, const NodeSet& val,
                               const ModelSpec& base);

}  // namespace adascope
