#include "adascope/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adascope/error.hpp"

namespace adascope {

namespace {

constexpr double kNormEps = 1e-9;
constexpr double kProbFloor = 1e-12;

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = bound * (2.0 * rng.uniform() - 1.0);
  return m;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

}  // namespace

Linear init_linear(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(in, 1)));
  Linear l;
  l.weight = uniform_matrix(in, out, bound, rng);
  l.bias = uniform_matrix(1, out, bound, rng);
  return l;
}

NormKind parse_norm(const std::string& name) {
  if (name == "none") return NormKind::kNone;
  if (name == "layer") return NormKind::kLayer;
  if (name == "batch") {
    fail(ErrorKind::kConfig,
         "normalization 'batch' is not supported: training is full-batch and must stay "
         "deterministic per node; use 'layer' or 'none'");
  }
  fail(ErrorKind::kConfig, "unknown normalization '" + name + "'");
}

std::string to_string(NormKind kind) { return kind == NormKind::kLayer ? "layer" : "none"; }

std::vector<Matrix*> MlpParams::parameters() {
  std::vector<Matrix*> out;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    out.push_back(&layers[k].weight);
    out.push_back(&layers[k].bias);
    if (k < norm_gain.size()) {
      out.push_back(&norm_gain[k]);
      out.push_back(&norm_bias[k]);
    }
  }
  return out;
}

std::vector<const Matrix*> MlpParams::parameters() const {
  auto mut = const_cast<MlpParams*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

MlpParams init_mlp(const MlpConfig& cfg, Rng& rng) {
  if (cfg.layers < 1) fail(ErrorKind::kConfig, "MLP needs at least one layer");
  if (cfg.in <= 0 || cfg.out <= 0 || (cfg.layers > 1 && cfg.hidden <= 0)) {
    fail(ErrorKind::kConfig, "MLP widths must be positive");
  }
  MlpParams p;
  p.config = cfg;
  for (int k = 0; k < cfg.layers; ++k) {
    const Eigen::Index in = k == 0 ? cfg.in : cfg.hidden;
    const Eigen::Index out = k == cfg.layers - 1 ? cfg.out : cfg.hidden;
    p.layers.push_back(init_linear(in, out, rng));
    if (k < cfg.layers - 1 && cfg.norm == NormKind::kLayer) {
      p.norm_gain.push_back(Matrix::Ones(1, out));
      p.norm_bias.push_back(Matrix::Zero(1, out));
    }
  }
  return p;
}

Matrix mlp_forward(const MlpParams& p, const Matrix& x, bool train_mode, Rng& rng,
                   MlpCache* cache, const PropagationOperator* prop) {
  const MlpConfig& cfg = p.config;
  if (x.cols() != p.layers.front().weight.rows()) {
    fail(ErrorKind::kContract, "mlp_forward: input has " + std::to_string(x.cols()) +
                                   " columns, first layer expects " +
                                   std::to_string(p.layers.front().weight.rows()));
  }
  const bool use_norm = cfg.norm == NormKind::kLayer;
  if (cache) {
    *cache = MlpCache{};
    cache->owner = &p;
    cache->train_mode = train_mode;
  }

  Matrix h = x;
  if (train_mode && cfg.input_dropout > 0.0) {
    Matrix mask = dropout_mask(h.rows(), h.cols(), cfg.input_dropout, rng);
    h = h.cwiseProduct(mask);
    if (cache) cache->input_mask = std::move(mask);
  }

  const int K = static_cast<int>(p.layers.size());
  for (int k = 0; k < K; ++k) {
    const Linear& layer = p.layers[k];
    if (cache) cache->inputs.push_back(h);
    Matrix z = h * layer.weight;
    if (prop) z = propagate(*prop, z);
    z.rowwise() += layer.bias.row(0);
    if (!z.allFinite()) {
      fail(ErrorKind::kNumeric, "non-finite activation in layer " + std::to_string(k));
    }
    if (k == K - 1) return z;

    if (use_norm) {
      const Eigen::Index w = z.cols();
      Vector inv_std(z.rows());
      for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mean = z.row(r).mean();
        z.row(r).array() -= mean;
        const double var = z.row(r).squaredNorm() / static_cast<double>(w);
        inv_std(r) = 1.0 / std::sqrt(var + kNormEps);
        z.row(r) *= inv_std(r);
      }
      if (cache) {
        cache->normalized.push_back(z);
        cache->inv_std.push_back(std::move(inv_std));
      }
      z = (z.array().rowwise() * p.norm_gain[k].row(0).array()).matrix();
      z.rowwise() += p.norm_bias[k].row(0);
    }
    Matrix a = z.cwiseMax(0.0);
    if (cache) cache->activated.push_back(a);
    if (train_mode && cfg.dropout > 0.0) {
      Matrix mask = dropout_mask(a.rows(), a.cols(), cfg.dropout, rng);
      a = a.cwiseProduct(mask);
      if (cache) cache->drop_masks.push_back(std::move(mask));
    } else if (cache) {
      cache->drop_masks.emplace_back();
    }
    if (cfg.residual && h.cols() == a.cols()) a += h;
    h = std::move(a);
  }
  return h;  // unreachable: the last layer returns above
}

MlpGrads mlp_backward(const MlpParams& p, MlpCache& cache, const Matrix& grad_out,
                      const PropagationOperator* prop) {
  if (cache.owner != &p) fail(ErrorKind::kContract, "mlp_backward: cache belongs to other parameters");
  if (cache.inputs.size() != p.layers.size()) fail(ErrorKind::kContract, "mlp_backward: stale cache");

  const MlpConfig& cfg = p.config;
  const bool use_norm = cfg.norm == NormKind::kLayer;
  const int K = static_cast<int>(p.layers.size());
  const std::size_t stride = use_norm ? 4 : 2;
  Grads grads(p.parameters().size());

  // Linear map (plus optional propagation) of layer k: fills W/b grads and
  // returns the gradient w.r.t. the layer input.
  auto linear_backward = [&](int k, const Matrix& dz) {
    const std::size_t s = static_cast<std::size_t>(k) * stride;
    grads[s + 1] = dz.colwise().sum();
    const Matrix dlin = prop ? propagate_transposed(*prop, dz) : dz;
    grads[s] = cache.inputs[k].transpose() * dlin;
    return Matrix(dlin * p.layers[k].weight.transpose());
  };

  Matrix dh = linear_backward(K - 1, grad_out);
  for (int k = K - 2; k >= 0; --k) {
    // dh: gradient w.r.t. the output of hidden layer k.
    Matrix da = cache.drop_masks[k].size() > 0 ? Matrix(dh.cwiseProduct(cache.drop_masks[k])) : dh;
    Matrix dn = (cache.activated[k].array() > 0.0).select(da, 0.0);
    Matrix dz;
    if (use_norm) {
      const std::size_t s = static_cast<std::size_t>(k) * stride;
      const Matrix& xhat = cache.normalized[k];
      grads[s + 2] = dn.cwiseProduct(xhat).colwise().sum();
      grads[s + 3] = dn.colwise().sum();
      const Matrix dxhat = (dn.array().rowwise() * p.norm_gain[k].row(0).array()).matrix();
      const double w = static_cast<double>(dxhat.cols());
      dz.resize(dxhat.rows(), dxhat.cols());
      for (Eigen::Index r = 0; r < dxhat.rows(); ++r) {
        const double sum = dxhat.row(r).sum();
        const double dot = dxhat.row(r).dot(xhat.row(r));
        dz.row(r) = (cache.inv_std[k](r) / w) *
                    (w * dxhat.row(r).array() - sum - xhat.row(r).array() * dot).matrix();
      }
    } else {
      dz = std::move(dn);
    }
    Matrix din = linear_backward(k, dz);
    if (cfg.residual && cache.inputs[k].cols() == cache.activated[k].cols()) din += dh;
    dh = std::move(din);
  }
  if (cache.input_mask.size() > 0) dh = dh.cwiseProduct(cache.input_mask);
  return {std::move(grads), std::move(dh)};
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    out.row(r) = (logits.row(r).array() - mx).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

RowVector softmax(const RowVector& logits) {
  const double mx = logits.maxCoeff();
  RowVector e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

LossResult cross_entropy(const Matrix& logits, const LabelVector& y, const NodeSet& mask) {
  if (mask.empty()) fail(ErrorKind::kContract, "cross_entropy: empty mask");
  if (logits.cols() != y.num_classes) {
    fail(ErrorKind::kContract, "cross_entropy: logits width differs from class count");
  }
  LossResult res;
  res.grad = Matrix::Zero(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (NodeId v : mask) {
    const RowVector row = logits.row(v);
    const double mx = row.maxCoeff();
    const double lse = mx + std::log((row.array() - mx).exp().sum());
    const int c = y[v];
    res.loss += (lse - row(c)) * inv;
    RowVector g = (row.array() - lse).exp().matrix();
    g(c) -= 1.0;
    res.grad.row(v) = g * inv;
  }
  return res;
}

KlResult kl_divergence(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "kl_divergence: size mismatch");
  KlResult res;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    double qi = q[i];
    if (qi <= kProbFloor) {
      qi = kProbFloor;
      res.clamped = true;
    }
    res.value += p[i] * std::log(p[i] / qi);
  }
  return res;
}

RowVector sample_gumbel(Eigen::Index n, Rng& rng) {
  RowVector g(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double u = rng.uniform();
    while (!(u > 0.0 && u < 1.0)) u = rng.uniform();
    g(i) = -std::log(-std::log(u));
  }
  return g;
}

RowVector gumbel_softmax_with_noise(const RowVector& logits, const RowVector& noise, double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::kConfig, "gumbel_softmax: temperature must be positive");
  return softmax((logits + noise) / tau);
}

GumbelSample gumbel_softmax(const RowVector& logits, double tau, Rng& rng) {
  GumbelSample s;
  s.noise = sample_gumbel(logits.size(), rng);
  s.probs = gumbel_softmax_with_noise(logits, s.noise, tau);
  return s;
}

RowVector gumbel_softmax_backward(const RowVector& probs, const RowVector& grad_probs, double tau) {
  const double dot = probs.dot(grad_probs);
  return (probs.array() * (grad_probs.array() - dot)).matrix() / tau;
}

void Adam::step(const std::vector<Matrix*>& params, const Grads& grads) {
  require(params.size() == grads.size(), "adam: parameter/gradient count mismatch");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  require(m_.size() == params.size(), "adam: parameter list changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(grads[i].rows() == params[i]->rows() && grads[i].cols() == params[i]->cols(),
            "adam: gradient shape mismatch");
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseAbs2();
    const auto mhat = m_[i].array() / c1;
    const auto vhat = v_[i].array() / c2;
    params[i]->array() -= cfg_.lr * mhat / (vhat.sqrt() + cfg_.eps);
  }
}

GradCheckReport grad_check(const std::function<double()>& loss,
                           const std::vector<Matrix*>& params, const Grads& analytic,
                           double step, double floor) {
  require(params.size() == analytic.size(), "grad_check: parameter/gradient count mismatch");
  GradCheckReport rep;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = *params[i];
    require(analytic[i].size() == p.size(), "grad_check: gradient shape mismatch");
    for (Eigen::Index e = 0; e < p.size(); ++e) {
      const double orig = p.data()[e];
      p.data()[e] = orig + step;
      const double up = loss();
      p.data()[e] = orig - step;
      const double down = loss();
      p.data()[e] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[i].data()[e];
      const double err =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (err > rep.max_rel_error || (i == 0 && e == 0)) {
        rep.max_rel_error = std::max(rep.max_rel_error, err);
        rep.worst_param = i;
        rep.worst_entry = e;
        rep.analytic = a;
        rep.numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace adascope
