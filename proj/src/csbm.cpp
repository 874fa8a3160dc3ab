#include "adascope/csbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "adascope/error.hpp"

namespace adascope {

void CsbmSpec::validate() const {
  if (mu1.empty() || mu1.size() != mu2.size()) {
    fail(ErrorKind::kConfig, "CSBM class means must be non-empty and of equal length");
  }
  if (subgroups.empty()) fail(ErrorKind::kConfig, "CSBM needs at least one subgroup");
  double total = 0.0;
  for (const Subgroup& s : subgroups) {
    if (!(s.p >= 0.0 && s.p <= 1.0)) fail(ErrorKind::kConfig, "CSBM subgroup p must lie in [0, 1]");
    if (!(s.prior >= 0.0)) fail(ErrorKind::kConfig, "CSBM subgroup prior must be non-negative");
    total += s.prior;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::kConfig, "CSBM subgroup priors must sum to 1");
  if (!(avg_degree >= 1.0)) fail(ErrorKind::kConfig, "CSBM expected degree must be at least 1");
  if (static_cast<double>(nodes_per_class) < avg_degree ||
      nodes_per_class < static_cast<std::size_t>(num_slots()) + 1) {
    fail(ErrorKind::kConfig, "CSBM class of " + std::to_string(nodes_per_class) +
                                 " nodes is too small for " + std::to_string(num_slots()) +
                                 " neighbors per node");
  }
}

int CsbmSpec::num_slots() const { return static_cast<int>(std::lround(avg_degree)); }

CsbmSample generate_csbm(const CsbmSpec& spec) {
  spec.validate();
  const std::size_t half = spec.nodes_per_class;
  const std::size_t n = 2 * half;
  const auto dim = static_cast<Eigen::Index>(spec.mu1.size());
  Rng root(spec.seed);
  Rng group_rng = root.derive(1);
  Rng feature_rng = root.derive(2);
  Rng edge_rng = root.derive(3);

  CsbmSample s;
  std::vector<int> labels(n);
  s.subgroup.resize(n);
  s.features.resize(static_cast<Eigen::Index>(n), dim);
  for (std::size_t v = 0; v < n; ++v) {
    labels[v] = v < half ? 0 : 1;
    const double u = group_rng.uniform();
    double acc = 0.0;
    int m = static_cast<int>(spec.subgroups.size()) - 1;
    for (std::size_t k = 0; k < spec.subgroups.size(); ++k) {
      acc += spec.subgroups[k].prior;
      if (u < acc) {
        m = static_cast<int>(k);
        break;
      }
    }
    s.subgroup[v] = m;
    const std::vector<double>& mu = labels[v] == 0 ? spec.mu1 : spec.mu2;
    for (Eigen::Index f = 0; f < dim; ++f) {
      s.features(static_cast<Eigen::Index>(v), f) = mu[static_cast<std::size_t>(f)] + feature_rng.normal();
    }
  }
  s.labels = make_labels(std::move(labels), 2);

  const int slots = spec.num_slots();
  std::vector<Edge> arcs;
  arcs.reserve(n * static_cast<std::size_t>(slots));
  for (std::size_t v = 0; v < n; ++v) {
    const double p = spec.subgroups[static_cast<std::size_t>(s.subgroup[v])].p;
    const std::size_t own = v < half ? 0 : half;
    for (int k = 0; k < slots; ++k) {
      NodeId u;
      if (edge_rng.bernoulli(p)) {
        // Uniform over the node's own class, excluding itself.
        auto idx = static_cast<std::size_t>(edge_rng.uniform_int(half - 1));
        if (own + idx >= v) ++idx;
        u = static_cast<NodeId>(own + idx);
      } else {
        const std::size_t other = own == 0 ? half : 0;
        u = static_cast<NodeId>(other + edge_rng.uniform_int(half));
      }
      arcs.emplace_back(u, static_cast<NodeId>(v));
    }
  }
  s.slot_graph = build_graph(arcs, n, true);
  s.graph = build_graph(arcs, n, false);
  return s;
}

MeanTable mean_recursion(const CsbmSpec& spec, int L) {
  require(L >= 0, "mean_recursion: L must be non-negative");
  spec.validate();
  const std::size_t M = spec.subgroups.size();
  const RowVector mu1 = Eigen::Map<const RowVector>(spec.mu1.data(), static_cast<Eigen::Index>(spec.mu1.size()));
  const RowVector mu2 = Eigen::Map<const RowVector>(spec.mu2.data(), static_cast<Eigen::Index>(spec.mu2.size()));
  MeanTable t(2, std::vector<RowVector>(M));
  for (std::size_t m = 0; m < M; ++m) {
    t[0][m] = mu1;
    t[1][m] = mu2;
  }
  for (int step = 1; step <= L; ++step) {
    RowVector e1 = RowVector::Zero(mu1.size());
    RowVector e2 = RowVector::Zero(mu1.size());
    for (std::size_t m = 0; m < M; ++m) {
      e1 += spec.subgroups[m].prior * t[0][m];
      e2 += spec.subgroups[m].prior * t[1][m];
    }
    for (std::size_t m = 0; m < M; ++m) {
      const double p = spec.subgroups[m].p;
      const double q = 1.0 - p;
      t[0][m] = p * e1 + q * e2;
      t[1][m] = q * e1 + p * e2;
    }
  }
  return t;
}

double signal_decay(const CsbmSpec& spec, int L) {
  require(L >= 1, "signal_decay: L must be at least 1");
  double e = 0.0;
  for (const Subgroup& s : spec.subgroups) e += s.prior * (2.0 * s.p - 1.0);
  return L == 1 ? 1.0 : std::pow(e, L - 1);
}

namespace {

Matrix aggregate(const CsbmSample& sample, int L) {
  const PropagationOperator op = row_normalized(sample.slot_graph);
  Matrix f = sample.features;
  for (int l = 0; l < L; ++l) f = propagate(op, f);
  return f;
}

MeanEstimate empty_estimate(std::size_t M, Eigen::Index dim) {
  MeanEstimate e;
  e.mean.assign(2, std::vector<RowVector>(M, RowVector::Zero(dim)));
  e.std_error = e.mean;
  e.counts.assign(2, std::vector<std::size_t>(M, 0));
  return e;
}

}  // namespace

MeanEstimate aggregate_means(const CsbmSample& sample, int L) {
  const Matrix f = aggregate(sample, L);
  const std::size_t M =
      static_cast<std::size_t>(*std::max_element(sample.subgroup.begin(), sample.subgroup.end())) + 1;
  MeanEstimate e = empty_estimate(M, f.cols());
  MeanTable sq = e.mean;
  for (Eigen::Index v = 0; v < f.rows(); ++v) {
    const auto c = static_cast<std::size_t>(sample.labels[static_cast<std::size_t>(v)]);
    const auto m = static_cast<std::size_t>(sample.subgroup[static_cast<std::size_t>(v)]);
    e.mean[c][m] += f.row(v);
    sq[c][m] += f.row(v).cwiseAbs2();
    ++e.counts[c][m];
  }
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t m = 0; m < M; ++m) {
      const auto k = static_cast<double>(e.counts[c][m]);
      if (k == 0) continue;
      e.mean[c][m] /= k;
      if (k > 1) {
        const RowVector var = ((sq[c][m] / k) - e.mean[c][m].cwiseAbs2()) * (k / (k - 1.0));
        e.std_error[c][m] = (var.cwiseMax(0.0) / k).cwiseSqrt();
      }
    }
  }
  return e;
}

MeanEstimate aggregate_means_mc(const CsbmSpec& spec, int L, int trials) {
  require(trials >= 1, "aggregate_means_mc: need at least one trial");
  if (trials == 1) return aggregate_means(generate_csbm(spec), L);
  const std::size_t M = spec.subgroups.size();
  const auto dim = static_cast<Eigen::Index>(spec.mu1.size());
  MeanEstimate out = empty_estimate(M, dim);
  MeanTable sq = out.mean;
  std::vector<std::vector<int>> present(2, std::vector<int>(M, 0));
  for (int t = 0; t < trials; ++t) {
    CsbmSpec trial = spec;
    trial.seed = Rng(spec.seed).derive(static_cast<std::uint64_t>(t)).seed();
    const MeanEstimate e = aggregate_means(generate_csbm(trial), L);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t m = 0; m < e.mean[c].size() && m < M; ++m) {
        if (e.counts[c][m] == 0) continue;
        out.mean[c][m] += e.mean[c][m];
        sq[c][m] += e.mean[c][m].cwiseAbs2();
        out.counts[c][m] += e.counts[c][m];
        ++present[c][m];
      }
    }
  }
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t m = 0; m < M; ++m) {
      const double k = present[c][m];
      if (k == 0) continue;
      out.mean[c][m] /= k;
      if (k > 1) {
        const RowVector var = ((sq[c][m] / k) - out.mean[c][m].cwiseAbs2()) * (k / (k - 1.0));
        out.std_error[c][m] = (var.cwiseMax(0.0) / k).cwiseSqrt();
      }
    }
  }
  return out;
}

std::vector<double> intra_class_fraction(const CsbmSample& sample, std::size_t num_subgroups) {
  std::vector<double> same(num_subgroups, 0.0), total(num_subgroups, 0.0);
  const Graph& g = sample.slot_graph;
  for (std::size_t v = 0; v < g.num_nodes(); ++v) {
    const auto m = static_cast<std::size_t>(sample.subgroup[v]);
    for (NodeId u : g.in_neighbors(static_cast<NodeId>(v))) {
      total[m] += 1.0;
      if (sample.labels[u] == sample.labels[v]) same[m] += 1.0;
    }
  }
  for (std::size_t m = 0; m < num_subgroups; ++m) same[m] = total[m] > 0 ? same[m] / total[m] : 0.0;
  return same;
}

int GapReport::seeds_with_distinct_best_depth() const {
  int count = 0;
  for (const auto& per_group : best_depth) {
    if (std::adjacent_find(per_group.begin(), per_group.end(), std::not_equal_to<>()) != per_group.end()) {
      ++count;
    }
  }
  return count;
}

GapReport subgroup_gap_experiment(const CsbmSpec& spec, const GapConfig& cfg) {
  spec.validate();
  if (cfg.min_depth < 0 || cfg.max_depth < cfg.min_depth) {
    fail(ErrorKind::kConfig, "subgroup_gap_experiment: invalid depth range");
  }
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0)) {
    fail(ErrorKind::kConfig, "subgroup_gap_experiment: train fraction must lie in (0, 1)");
  }
  const std::size_t M = spec.subgroups.size();
  GapReport rep;
  for (int L = cfg.min_depth; L <= cfg.max_depth; ++L) rep.depths.push_back(L);
  const std::size_t D = rep.depths.size();

  for (int s = 0; s < cfg.seeds; ++s) {
    CsbmSpec trial = spec;
    trial.seed = Rng(spec.seed).derive(static_cast<std::uint64_t>(s)).seed();
    const CsbmSample sample = generate_csbm(trial);
    const std::size_t n = sample.graph.num_nodes();

    NodeSet order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = Rng(trial.seed).derive(7);
    split_rng.shuffle(std::span<NodeId>(order));
    const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
    NodeSet train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(train.begin(), train.end());
    std::vector<NodeSet> test_by_group(M);
    for (std::size_t i = n_train; i < n; ++i) {
      test_by_group[static_cast<std::size_t>(sample.subgroup[order[i]])].push_back(order[i]);
    }
    for (auto& t : test_by_group) std::sort(t.begin(), t.end());

    std::vector<std::vector<double>> test_acc(M, std::vector<double>(D));
    std::vector<std::vector<double>> gap(M, std::vector<double>(D));
    std::vector<double> train_acc(D);
    const PropagationOperator op = row_normalized(sample.slot_graph);
    Matrix agg = sample.features;
    int current = 0;
    for (std::size_t d = 0; d < D; ++d) {
      while (current < rep.depths[d]) {
        agg = propagate(op, agg);
        ++current;
      }
      ModelSpec ms = cfg.model;
      ms.arch = Architecture::kMlp;
      ms.depth = 0;
      ms.seed = Rng(trial.seed).derive(100 + static_cast<std::uint64_t>(rep.depths[d])).seed();
      const TrainedClassifier tc = train_classifier(ms, sample.graph, agg, sample.labels, train, {});
      const Matrix logits = tc.model.predict_logits(sample.graph, agg);
      train_acc[d] = accuracy(logits, sample.labels, train);
      for (std::size_t m = 0; m < M; ++m) {
        test_acc[m][d] = accuracy(logits, sample.labels, test_by_group[m]);
        gap[m][d] = train_acc[d] - test_acc[m][d];
      }
    }
    std::vector<int> best(M);
    for (std::size_t m = 0; m < M; ++m) {
      best[m] = rep.depths[static_cast<std::size_t>(std::min_element(gap[m].begin(), gap[m].end()) - gap[m].begin())];
    }
    rep.test_accuracy.push_back(std::move(test_acc));
    rep.gap.push_back(std::move(gap));
    rep.train_accuracy.push_back(std::move(train_acc));
    rep.best_depth.push_back(std::move(best));
  }

  const auto S = static_cast<double>(cfg.seeds);
  rep.mean_gap.assign(M, std::vector<double>(D, 0.0));
  rep.se_gap.assign(M, std::vector<double>(D, 0.0));
  rep.mean_test_accuracy.assign(M, std::vector<double>(D, 0.0));
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t d = 0; d < D; ++d) {
      double sum = 0.0, sum_sq = 0.0, acc = 0.0;
      for (int s = 0; s < cfg.seeds; ++s) {
        const double g = rep.gap[static_cast<std::size_t>(s)][m][d];
        sum += g;
        sum_sq += g * g;
        acc += rep.test_accuracy[static_cast<std::size_t>(s)][m][d];
      }
      rep.mean_gap[m][d] = sum / S;
      rep.mean_test_accuracy[m][d] = acc / S;
      if (cfg.seeds > 1) {
        const double var = std::max(0.0, (sum_sq - sum * sum / S) / (S - 1.0));
        rep.se_gap[m][d] = std::sqrt(var / S);
      }
    }
  }
  return rep;
}

}  // namespace adascope
