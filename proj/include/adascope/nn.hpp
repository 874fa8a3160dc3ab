#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "adascope/graph.hpp"
#include "adascope/matrix.hpp"
#include "adascope/rng.hpp"

namespace adascope {

/// Gradients in the same order as a model's parameter list.
using Grads = std::vector<Matrix>;

struct Linear {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out
};

/// Weights and biases uniform in [-1/sqrt(in), 1/sqrt(in)].
Linear init_linear(Eigen::Index in, Eigen::Index out, Rng& rng);

enum class NormKind { kNone, kLayer };

/// Accepts "none" and "layer". "batch" is rejected with a config error.
NormKind parse_norm(const std::string& name);
std::string to_string(NormKind kind);

struct MlpConfig {
  Eigen::Index in = 0;
  Eigen::Index hidden = 64;
  Eigen::Index out = 0;
  int layers = 3;
  NormKind norm = NormKind::kNone;
  double input_dropout = 0.0;
  double dropout = 0.0;
  bool residual = true;  // skip connection on hidden->hidden layers
};

struct MlpParams {
  MlpConfig config;
  std::vector<Linear> layers;
  std::vector<Matrix> norm_gain;  // one 1 x hidden row per hidden layer
  std::vector<Matrix> norm_bias;

  std::vector<Matrix*> parameters();
  std::vector<const Matrix*> parameters() const;
};

MlpParams init_mlp(const MlpConfig& cfg, Rng& rng);

struct MlpCache {
  const MlpParams* owner = nullptr;
  bool train_mode = false;
  std::vector<Matrix> inputs;      // input to each layer (after dropout)
  std::vector<Matrix> normalized;  // layer-norm xhat per hidden layer
  std::vector<Vector> inv_std;
  std::vector<Matrix> activated;   // post-ReLU, pre-dropout
  std::vector<Matrix> drop_masks;  // scaled keep masks; empty when unused
  Matrix input_mask;
};

/// Forward pass. With `prop` set, every layer propagates after its linear
/// map (z = prop * (h W) + b), which turns the stack into a GCN.
Matrix mlp_forward(const MlpParams& p, const Matrix& x, bool train_mode, Rng& rng,
                   MlpCache* cache = nullptr, const PropagationOperator* prop = nullptr);

struct MlpGrads {
  Grads params;
  Matrix input;
};

MlpGrads mlp_backward(const MlpParams& p, MlpCache& cache, const Matrix& grad_out,
                      const PropagationOperator* prop = nullptr);

/// Row-wise softmax, shifted by the row max.
Matrix softmax_rows(const Matrix& logits);
RowVector softmax(const RowVector& logits);

struct LossResult {
  double loss = 0.0;
  Matrix grad;
};

/// Mean softmax cross-entropy over `mask`; gradient rows outside the mask are zero.
LossResult cross_entropy(const Matrix& logits, const LabelVector& y, const NodeSet& mask);

struct KlResult {
  double value = 0.0;
  bool clamped = false;  // some q entry was raised to the 1e-12 floor
};

/// KL(p || q) with 0 ln 0 = 0.
KlResult kl_divergence(std::span<const double> p, std::span<const double> q);

/// Standard Gumbel draws -ln(-ln u), redrawing any u outside (0, 1).
RowVector sample_gumbel(Eigen::Index n, Rng& rng);

/// softmax((logits + noise) / tau).
RowVector gumbel_softmax_with_noise(const RowVector& logits, const RowVector& noise, double tau);

struct GumbelSample {
  RowVector probs;
  RowVector noise;
};

GumbelSample gumbel_softmax(const RowVector& logits, double tau, Rng& rng);

/// Pulls a gradient on the sample back to the logits along the reparameterized path.
RowVector gumbel_softmax_backward(const RowVector& probs, const RowVector& grad_probs, double tau);

struct AdamConfig {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(const std::vector<Matrix*>& params, const Grads& grads);

  int steps() const { return t_; }
  const std::vector<Matrix>& first_moment() const { return m_; }
  const std::vector<Matrix>& second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  int t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Eigen::Index worst_entry = 0;
  double analytic = 0.0;
  double numeric = 0.0;

  bool passed(double tol) const { return max_rel_error < tol; }
};

/// Compares analytic gradients with central differences of `loss`.
/// Per-entry error is |a - n| / max(|a|, |n|, floor); the floor keeps
/// near-zero entries from dominating.
GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<Matrix*>& params, const Grads& analytic,
                           double step = 1e-5, double floor = 1e-4);

}  // namespace adascope
