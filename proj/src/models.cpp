#include "adascope/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "adascope/error.hpp"

namespace adascope {

Architecture parse_architecture(const std::string& name) {
  if (name == "mlp") return Architecture::kMlp;
  if (name == "sgc") return Architecture::kSgc;
  if (name == "gcn") return Architecture::kGcn;
  if (name == "hopattn" || name == "hop-attention") return Architecture::kHopAttention;
  fail(ErrorKind::kConfig, "unknown architecture '" + name + "' (expected mlp, sgc, gcn, hopattn)");
}

std::string to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kMlp:
      return "mlp";
    case Architecture::kSgc:
      return "sgc";
    case Architecture::kGcn:
      return "gcn";
    case Architecture::kHopAttention:
      return "hopattn";
  }
  return "unknown";
}

Matrix sgc_precompute(const PropagationOperator& op, const Matrix& x, int depth) {
  require(depth >= 0, "sgc_precompute: depth must be non-negative");
  Matrix out = x;
  for (int l = 0; l < depth; ++l) out = propagate(op, out);
  return out;
}

HopAttentionOutput hop_attention_forward(const std::vector<Matrix>& hops, const Linear& scorer) {
  require(!hops.empty(), "hop_attention_forward: no hop representations");
  const Eigen::Index n = hops.front().rows();
  const Eigen::Index width = hops.front().cols();
  const auto num_hops = static_cast<Eigen::Index>(hops.size());
  require(scorer.weight.rows() == width && scorer.weight.cols() == 1,
          "hop_attention_forward: scorer must map the hop width to one score");
  Matrix scores(n, num_hops);
  for (Eigen::Index l = 0; l < num_hops; ++l) {
    const Matrix& h = hops[static_cast<std::size_t>(l)];
    require(h.rows() == n && h.cols() == width, "hop_attention_forward: hop shapes differ");
    scores.col(l) = (h * scorer.weight).col(0).array() + scorer.bias(0, 0);
  }
  HopAttentionOutput out;
  out.alpha = softmax_rows(scores);
  out.combined = Matrix::Zero(n, width);
  for (Eigen::Index l = 0; l < num_hops; ++l) {
    out.combined += (hops[static_cast<std::size_t>(l)].array().colwise() * out.alpha.col(l).array()).matrix();
  }
  return out;
}

HopAttentionGrads hop_attention_backward(const std::vector<Matrix>& hops, const Linear& scorer,
                                         const HopAttentionOutput& out, const Matrix& grad_combined) {
  const auto num_hops = static_cast<Eigen::Index>(hops.size());
  const Eigen::Index n = grad_combined.rows();
  Matrix dalpha(n, num_hops);
  for (Eigen::Index l = 0; l < num_hops; ++l) {
    dalpha.col(l) = grad_combined.cwiseProduct(hops[static_cast<std::size_t>(l)]).rowwise().sum();
  }
  const Vector weighted = out.alpha.cwiseProduct(dalpha).rowwise().sum();
  const Matrix dscore = (out.alpha.array() * (dalpha.colwise() - weighted).array()).matrix();

  HopAttentionGrads g;
  g.weight = Matrix::Zero(scorer.weight.rows(), 1);
  g.bias = Matrix::Constant(1, 1, dscore.sum());
  for (Eigen::Index l = 0; l < num_hops; ++l) {
    const Matrix& h = hops[static_cast<std::size_t>(l)];
    Matrix dh = (grad_combined.array().colwise() * out.alpha.col(l).array()).matrix();
    dh += dscore.col(l) * scorer.weight.transpose();
    g.weight += h.transpose() * dscore.col(l);
    g.hops.push_back(std::move(dh));
  }
  return g;
}

ModelInputs prepare_inputs(const ModelSpec& spec, const Graph& g, const Matrix& x) {
  require(static_cast<std::size_t>(x.rows()) == g.num_nodes(),
          "prepare_inputs: feature rows must equal node count");
  ModelInputs in;
  switch (spec.effective_arch()) {
    case Architecture::kMlp:
      in.features = x;
      break;
    case Architecture::kSgc:
      in.op = symmetric_normalized(g);
      in.features = sgc_precompute(in.op, x, spec.depth);
      break;
    case Architecture::kGcn:
      in.op = symmetric_normalized(g);
      in.features = x;
      break;
    case Architecture::kHopAttention:
      in.op = symmetric_normalized(g);
      in.hops.push_back(x);
      for (int l = 1; l <= spec.depth; ++l) in.hops.push_back(propagate(in.op, in.hops.back()));
      break;
  }
  return in;
}

NodeClassifier::NodeClassifier(const ModelSpec& spec, Eigen::Index in_features, int num_classes)
    : spec_(spec), in_features_(in_features), num_classes_(num_classes) {
  if (spec.depth < 0) fail(ErrorKind::kConfig, "model depth must be non-negative");
  Rng rng = Rng(spec.seed).derive(1);
  MlpConfig cfg;
  cfg.in = in_features;
  cfg.hidden = spec.hidden;
  cfg.out = num_classes;
  cfg.layers = spec.mlp_layers;
  cfg.norm = spec.norm;
  cfg.input_dropout = spec.input_dropout;
  cfg.dropout = spec.dropout;
  cfg.residual = true;
  switch (spec.effective_arch()) {
    case Architecture::kMlp:
    case Architecture::kSgc:
      break;
    case Architecture::kGcn:
      cfg.layers = spec.depth;
      cfg.residual = false;
      break;
    case Architecture::kHopAttention:
      for (int l = 0; l <= spec.depth; ++l) branches_.push_back(init_linear(in_features, spec.hidden, rng));
      scorer_ = init_linear(spec.hidden, 1, rng);
      cfg.in = spec.hidden;
      break;
  }
  head_ = init_mlp(cfg, rng);
}

Matrix NodeClassifier::forward(const ModelInputs& in, bool train_mode, Rng& rng,
                               ClassifierCache* cache) const {
  MlpCache* head_cache = cache ? &cache->head : nullptr;
  switch (spec_.effective_arch()) {
    case Architecture::kMlp:
    case Architecture::kSgc:
      return mlp_forward(head_, in.features, train_mode, rng, head_cache);
    case Architecture::kGcn:
      return mlp_forward(head_, in.features, train_mode, rng, head_cache, &in.op);
    case Architecture::kHopAttention: {
      require(in.hops.size() == branches_.size(), "hop attention: hop count mismatch");
      std::vector<Matrix> branch_out;
      for (std::size_t l = 0; l < branches_.size(); ++l) {
        Matrix h = in.hops[l] * branches_[l].weight;
        h.rowwise() += branches_[l].bias.row(0);
        branch_out.push_back(std::move(h));
      }
      HopAttentionOutput att = hop_attention_forward(branch_out, scorer_);
      Matrix logits = mlp_forward(head_, att.combined, train_mode, rng, head_cache);
      if (cache) {
        cache->branch_out = std::move(branch_out);
        cache->attention = std::move(att);
      }
      return logits;
    }
  }
  return {};
}

Grads NodeClassifier::backward(const ModelInputs& in, ClassifierCache& cache,
                               const Matrix& grad_logits) const {
  const Architecture arch = spec_.effective_arch();
  MlpGrads hg = mlp_backward(head_, cache.head, grad_logits,
                             arch == Architecture::kGcn ? &in.op : nullptr);
  Grads grads = std::move(hg.params);
  if (arch == Architecture::kHopAttention) {
    HopAttentionGrads ag = hop_attention_backward(cache.branch_out, scorer_, cache.attention, hg.input);
    for (std::size_t l = 0; l < branches_.size(); ++l) {
      grads.push_back(in.hops[l].transpose() * ag.hops[l]);
      grads.push_back(ag.hops[l].colwise().sum());
    }
    grads.push_back(std::move(ag.weight));
    grads.push_back(std::move(ag.bias));
  }
  return grads;
}

std::vector<Matrix*> NodeClassifier::parameters() {
  std::vector<Matrix*> out = head_.parameters();
  for (auto& b : branches_) {
    out.push_back(&b.weight);
    out.push_back(&b.bias);
  }
  if (!branches_.empty()) {
    out.push_back(&scorer_.weight);
    out.push_back(&scorer_.bias);
  }
  return out;
}

std::vector<const Matrix*> NodeClassifier::parameters() const {
  auto mut = const_cast<NodeClassifier*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

Matrix NodeClassifier::predict_logits(const Graph& g, const Matrix& x) const {
  const ModelInputs in = prepare_inputs(spec_, g, x);
  Rng unused(0);
  return forward(in, false, unused);
}

std::vector<int> predictions(const Matrix& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) out[static_cast<std::size_t>(r)] = static_cast<int>(argmax_row(logits, r));
  return out;
}

double accuracy(const Matrix& logits, const LabelVector& y, const NodeSet& nodes) {
  if (nodes.empty()) return 0.0;
  std::size_t correct = 0;
  for (NodeId v : nodes) {
    if (argmax_row(logits, v) == y[v]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

TrainedClassifier train_classifier(const ModelSpec& spec, const Graph& g, const Matrix& x,
                                   const LabelVector& y, const NodeSet& train, const NodeSet& val) {
  {
    std::unordered_set<NodeId> seen(train.begin(), train.end());
    for (NodeId v : val) {
      if (seen.count(v)) fail(ErrorKind::kContract, "train_classifier: train and validation sets overlap");
    }
  }
  if (train.empty()) fail(ErrorKind::kConfig, "train_classifier: empty training set");

  const ModelInputs in = prepare_inputs(spec, g, x);
  TrainedClassifier result;
  result.model = NodeClassifier(spec, x.cols(), y.num_classes);
  NodeClassifier& model = result.model;
  NodeClassifier best = model;
  Adam adam(AdamConfig{.lr = spec.lr});
  Rng drop_rng = Rng(spec.seed).derive(2);
  Rng eval_rng(0);
  ClassifierCache cache;

  result.best_val_accuracy = -1.0;
  int since_best = 0;
  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    const Matrix logits = model.forward(in, true, drop_rng, &cache);
    const LossResult ce = cross_entropy(logits, y, train);
    if (!std::isfinite(ce.loss)) {
      std::ostringstream msg;
      msg << "training diverged: " << to_string(spec.effective_arch()) << " depth " << spec.depth
          << " epoch " << epoch << " loss " << ce.loss;
      if (!result.train_losses.empty()) msg << " (previous loss " << result.train_losses.back() << ")";
      fail(ErrorKind::kNumeric, msg.str());
    }
    adam.step(model.parameters(), model.backward(in, cache, ce.grad));
    result.train_losses.push_back(ce.loss);

    const Matrix eval = model.forward(in, false, eval_rng);
    const double acc = val.empty() ? accuracy(eval, y, train) : accuracy(eval, y, val);
    result.val_accuracies.push_back(acc);
    if (acc > result.best_val_accuracy) {
      result.best_val_accuracy = acc;
      result.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else if (++since_best >= spec.patience) {
      break;
    }
  }
  if (result.best_epoch > 0) model = std::move(best);
  result.best_val_accuracy = std::max(result.best_val_accuracy, 0.0);
  return result;
}

std::vector<int> DepthFamily::predictions(int depth) const {
  return adascope::predictions(block(depth));
}

DepthFamily train_depth_family(Architecture arch, int lmax, const Graph& g, const Matrix& x,
                               const LabelVector& y, const NodeSet& train, const NodeSet& val,
                               const ModelSpec& base) {
  if (lmax < 1) fail(ErrorKind::kConfig, "train_depth_family: lmax must be at least 1");
  DepthFamily fam;
  fam.arch = arch;
  fam.lmax = lmax;
  fam.num_classes = y.num_classes;
  fam.logits.resize(static_cast<Eigen::Index>(g.num_nodes()),
                    static_cast<Eigen::Index>(y.num_classes) * (lmax + 1));
  for (int depth = 0; depth <= lmax; ++depth) {
    ModelSpec spec = base;
    spec.arch = arch;
    spec.depth = depth;
    spec.seed = Rng(base.seed).derive(static_cast<std::uint64_t>(depth)).seed();
    TrainedClassifier member = train_classifier(spec, g, x, y, train, val);
    fam.logits.middleCols(static_cast<Eigen::Index>(depth) * y.num_classes, y.num_classes) =
        member.model.predict_logits(g, x);
    fam.members.push_back(std::move(member));
  }
  return fam;
}

}  // namespace adascope
