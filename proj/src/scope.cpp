#include "adascope/scope.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adascope/error.hpp"

namespace adascope {

ScopeLabelMatrix build_scope_labels(const LabelVector& y, const Matrix& family_logits,
                                    int num_classes, const NodeSet& nodes) {
  require(num_classes > 0 && family_logits.cols() % num_classes == 0,
          "build_scope_labels: logits width is not a multiple of the class count");
  const Eigen::Index depths = family_logits.cols() / num_classes;
  const Eigen::Index n = family_logits.rows();
  ScopeLabelMatrix lab;
  lab.bits = Matrix::Zero(n, depths);
  lab.all_correct.assign(static_cast<std::size_t>(n), false);
  lab.all_wrong.assign(static_cast<std::size_t>(n), false);
  for (NodeId v : nodes) {
    require(v < n, "build_scope_labels: node outside the family logits");
    for (Eigen::Index l = 0; l < depths; ++l) {
      const auto block = family_logits.row(v).segment(l * num_classes, num_classes);
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < num_classes; ++c) {
        if (block(c) > block(best)) best = c;
      }
      lab.bits(v, l) = best == y[v] ? 1.0 : 0.0;
    }
    const double ones = lab.bits.row(v).sum();
    if (ones == static_cast<double>(depths)) {
      lab.all_correct[v] = true;
      lab.all_correct_nodes.push_back(v);
    } else if (ones == 0.0) {
      lab.all_wrong[v] = true;
      lab.all_wrong_nodes.push_back(v);
    }
  }
  return lab;
}

ScopeLabelMatrix build_scope_labels(const LabelVector& y, const DepthFamily& family,
                                    const NodeSet& nodes) {
  return build_scope_labels(y, family.logits, family.num_classes, nodes);
}

ScopeSplit resplit(const NodeSet& train, const NodeSet& val, const SplitConfig& cfg) {
  ScopeSplit out;
  if (cfg.eta == 0.0) {
    out.train = val;
    out.val = train;
  } else if (cfg.eta == 1.0) {
    out.train = train;
    out.val = val;
  } else if (std::abs(cfg.eta - 0.1) < 1e-12) {
    NodeSet shuffled = val;
    std::sort(shuffled.begin(), shuffled.end());
    Rng rng(cfg.seed);
    rng.shuffle(std::span<NodeId>(shuffled));
    const auto take = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(val.size())));
    out.train.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(take));
    out.val.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(take), shuffled.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
  } else {
    std::ostringstream msg;
    msg << "eta must be 0, 0.1 or 1 (got " << cfg.eta << ")";
    fail(ErrorKind::kConfig, msg.str());
  }
  if (out.train.empty()) fail(ErrorKind::kConfig, "resplit produced an empty scope training set");
  return out;
}

NodeSet mask_uninformative(const NodeSet& nodes, const ScopeLabelMatrix& labels, const SplitConfig& cfg) {
  NodeSet kept;
  for (NodeId v : nodes) {
    if (cfg.mask_all_correct && labels.all_correct[v]) continue;
    if (cfg.mask_all_wrong && labels.all_wrong[v]) continue;
    kept.push_back(v);
  }
  if (kept.empty() && !nodes.empty()) {
    fail(ErrorKind::kConfig,
         "masking removed every scope training node; try a different eta or disable masking");
  }
  if (kept.empty()) fail(ErrorKind::kConfig, "scope training set is empty");
  return kept;
}

Modalities parse_modalities(const std::string& list) {
  Modalities m{false, false, false};
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "xi") {
      m.xi = true;
    } else if (item == "x") {
      m.x = true;
    } else if (item == "zeta") {
      m.zeta = true;
    } else if (!item.empty()) {
      fail(ErrorKind::kConfig, "unknown predictor input '" + item + "' (expected xi, x, zeta)");
    }
  }
  if (m.count() == 0) fail(ErrorKind::kConfig, "scope predictor needs at least one input type");
  return m;
}

std::string to_string(const Modalities& m) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(m.xi, "xi");
  add(m.x, "x");
  add(m.zeta, "zeta");
  return out;
}

std::vector<Matrix*> FusionParams::parameters() {
  std::vector<Matrix*> out;
  if (config.active.xi) out.push_back(&proj_xi);
  if (config.active.x) out.push_back(&proj_x);
  if (config.active.zeta) out.push_back(&proj_zeta);
  out.push_back(&mix);
  for (Matrix* m : head.parameters()) out.push_back(m);
  return out;
}

std::vector<const Matrix*> FusionParams::parameters() const {
  auto mut = const_cast<FusionParams*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

FusionParams init_fusion(const FusionConfig& cfg, Rng& rng) {
  if (cfg.active.count() == 0) fail(ErrorKind::kConfig, "scope predictor has no active input");
  if (cfg.num_depths < 2) fail(ErrorKind::kConfig, "scope predictor needs at least two depths");
  FusionParams p;
  p.config = cfg;
  auto proj = [&](bool on, Eigen::Index dim) {
    if (!on) return Matrix();
    if (dim <= 0) fail(ErrorKind::kConfig, "active predictor input has zero width");
    return init_linear(dim, cfg.width, rng).weight;
  };
  p.proj_xi = proj(cfg.active.xi, cfg.xi_dim);
  p.proj_x = proj(cfg.active.x, cfg.x_dim);
  p.proj_zeta = proj(cfg.active.zeta, cfg.zeta_dim);
  p.mix = init_linear(cfg.active.count() * cfg.width, cfg.width, rng).weight;
  MlpConfig head;
  head.in = cfg.width;
  head.hidden = cfg.width;
  head.out = cfg.num_depths;
  head.layers = cfg.head_layers;
  head.residual = true;
  p.head = init_mlp(head, rng);
  return p;
}

Matrix fusion_forward_rows(const FusionParams& p, const Matrix& xi, const Matrix& x,
                           const Matrix& zeta, FusionCache* cache) {
  const FusionConfig& cfg = p.config;
  if (cfg.active.count() == 0) fail(ErrorKind::kConfig, "scope predictor has no active input");
  std::vector<const Matrix*> inputs;
  std::vector<const Matrix*> weights;
  if (cfg.active.xi) {
    inputs.push_back(&xi);
    weights.push_back(&p.proj_xi);
  }
  if (cfg.active.x) {
    inputs.push_back(&x);
    weights.push_back(&p.proj_x);
  }
  if (cfg.active.zeta) {
    inputs.push_back(&zeta);
    weights.push_back(&p.proj_zeta);
  }
  const Eigen::Index rows = inputs.front()->rows();
  const Eigen::Index w = cfg.width;
  Matrix concat(rows, w * static_cast<Eigen::Index>(inputs.size()));
  Matrix sum = Matrix::Zero(rows, w);
  std::vector<Matrix> projected;
  for (std::size_t m = 0; m < inputs.size(); ++m) {
    if (inputs[m]->cols() != weights[m]->rows() || inputs[m]->rows() != rows) {
      fail(ErrorKind::kContract, "fusion_forward: input width does not match its projection");
    }
    Matrix h = *inputs[m] * *weights[m];
    concat.middleCols(static_cast<Eigen::Index>(m) * w, w) = h;
    sum += h;
    projected.push_back(std::move(h));
  }
  Matrix pre = concat * p.mix + sum;
  const Matrix hidden = pre.cwiseMax(0.0);
  Rng unused(0);
  Matrix scores = mlp_forward(p.head, hidden, false, unused, cache ? &cache->head : nullptr);
  if (cache) {
    cache->inputs.clear();
    for (const Matrix* in : inputs) cache->inputs.push_back(*in);
    cache->projected = std::move(projected);
    cache->concat = std::move(concat);
    cache->pre = std::move(pre);
  }
  return scores;
}

Matrix fusion_forward(const FusionParams& p, const FusionInputs& in, const NodeSet& batch,
                      FusionCache* cache) {
  const FusionConfig& cfg = p.config;
  const Matrix xi = cfg.active.xi ? gather_rows(in.xi, batch) : Matrix();
  const Matrix x = cfg.active.x ? gather_rows(in.x, batch) : Matrix();
  const Matrix zeta = cfg.active.zeta ? gather_rows(in.zeta, batch) : Matrix();
  return fusion_forward_rows(p, xi, x, zeta, cache);
}

Grads fusion_backward(const FusionParams& p, FusionCache& cache, const Matrix& grad_scores) {
  const Eigen::Index w = p.config.width;
  MlpGrads hg = mlp_backward(p.head, cache.head, grad_scores);
  const Matrix dpre = (cache.pre.array() > 0.0).select(hg.input, 0.0);
  const Matrix dconcat = dpre * p.mix.transpose();
  Grads grads;
  for (std::size_t m = 0; m < cache.inputs.size(); ++m) {
    const Matrix dproj = dconcat.middleCols(static_cast<Eigen::Index>(m) * w, w) + dpre;
    grads.push_back(cache.inputs[m].transpose() * dproj);
  }
  grads.push_back(cache.concat.transpose() * dpre);
  for (Matrix& g : hg.params) grads.push_back(std::move(g));
  return grads;
}

PsscLoss pssc_loss(const RowVector& bits, const RowVector& scores, double tau, const RowVector& noise) {
  require(bits.size() == scores.size() && noise.size() == scores.size(),
          "pssc_loss: bits, scores and noise must have equal length");
  const RowVector target = softmax(bits);
  const RowVector pred = gumbel_softmax_with_noise(scores, noise, tau);
  const KlResult kl = kl_divergence(std::span<const double>(target.data(), static_cast<std::size_t>(target.size())),
                                    std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())));
  RowVector dpred(pred.size());
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    // Clamped entries enter the loss as a constant.
    dpred(i) = pred(i) > 1e-12 ? -target(i) / pred(i) : 0.0;
  }
  return {kl.value, gumbel_softmax_backward(pred, dpred, tau), kl.clamped};
}

PsscLoss pssc_loss(const RowVector& bits, const RowVector& scores, double tau, Rng& rng) {
  return pssc_loss(bits, scores, tau, sample_gumbel(scores.size(), rng));
}

Routing route_by_scores(const Matrix& scores, const DepthFamily& family, const NodeSet& nodes) {
  require(scores.rows() == static_cast<Eigen::Index>(nodes.size()), "route_by_scores: one score row per node");
  require(scores.cols() == family.lmax + 1, "route_by_scores: one score per depth");
  Routing r;
  r.depth.reserve(nodes.size());
  r.prediction.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int depth = static_cast<int>(argmax_row(scores, static_cast<Eigen::Index>(i)));
    const auto block = family.logits.row(nodes[i]).segment(
        static_cast<Eigen::Index>(depth) * family.num_classes, family.num_classes);
    Eigen::Index cls = 0;
    for (Eigen::Index c = 1; c < block.size(); ++c) {
      if (block(c) > block(cls)) cls = c;
    }
    r.depth.push_back(depth);
    r.prediction.push_back(static_cast<int>(cls));
  }
  return r;
}

Routing select_and_predict(const FusionParams& p, const FusionInputs& in, const DepthFamily& family,
                           const NodeSet& nodes) {
  return route_by_scores(fusion_forward(p, in, nodes), family, nodes);
}

double routed_accuracy(const Routing& r, const LabelVector& y, const NodeSet& nodes) {
  if (nodes.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (r.prediction[i] == y[nodes[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(nodes.size());
}

TrainedScopePredictor train_scope_predictor(const FusionInputs& in, const ScopeLabelMatrix& labels,
                                            const ScopeSplit& split, const DepthFamily& family,
                                            const LabelVector& y, const ScopeTrainConfig& cfg) {
  if (split.train.empty()) fail(ErrorKind::kConfig, "scope training set is empty");
  if (!(cfg.tau > 0.0)) fail(ErrorKind::kConfig, "Gumbel-Softmax temperature must be positive");
  FusionConfig fc;
  fc.xi_dim = in.xi.cols();
  fc.x_dim = in.x.cols();
  fc.zeta_dim = in.zeta.cols();
  fc.width = cfg.width;
  fc.head_layers = cfg.head_layers;
  fc.num_depths = labels.num_depths();
  fc.active = cfg.inputs;
  Rng init_rng = Rng(cfg.seed).derive(1);
  Rng noise_rng = Rng(cfg.seed).derive(2);

  TrainedScopePredictor out;
  out.params = init_fusion(fc, init_rng);
  FusionParams& params = out.params;
  const NodeSet& val = split.val.empty() ? split.train : split.val;
  out.best_val_routing = routed_accuracy(select_and_predict(params, in, family, val), y, val);
  FusionParams best = params;

  const Matrix target_bits = gather_rows(labels.bits, split.train);
  Adam adam(AdamConfig{.lr = cfg.lr});
  FusionCache cache;
  const double inv = 1.0 / static_cast<double>(split.train.size());
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Matrix scores = fusion_forward(params, in, split.train, &cache);
    Matrix grad(scores.rows(), scores.cols());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const PsscLoss l = pssc_loss(target_bits.row(r), scores.row(r), cfg.tau, noise_rng);
      loss += l.loss * inv;
      grad.row(r) = l.grad * inv;
      out.clamped = out.clamped || l.clamped;
    }
    if (!std::isfinite(loss)) {
      std::ostringstream msg;
      msg << "scope predictor diverged at epoch " << epoch << " (loss " << loss << ")";
      fail(ErrorKind::kNumeric, msg.str());
    }
    out.losses.push_back(loss);
    adam.step(params.parameters(), fusion_backward(params, cache, grad));

    const double acc = routed_accuracy(select_and_predict(params, in, family, val), y, val);
    if (acc > out.best_val_routing) {
      out.best_val_routing = acc;
      out.best_epoch = epoch;
      best = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  params = std::move(best);
  return out;
}

}  // namespace adascope
