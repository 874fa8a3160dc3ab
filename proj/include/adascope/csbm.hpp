#pragma once

#include <cstdint>
#include <vector>

#include "adascope/graph.hpp"
#include "adascope/matrix.hpp"
#include "adascope/models.hpp"

namespace adascope {

/// Subgroup of a CSBM class: intra-class edge probability p (inter = 1 - p)
/// and the probability that a node belongs to it.
struct Subgroup {
  double p = 0.5;
  double prior = 1.0;
};

/// Two equal-size Gaussian classes N(mu1, I), N(mu2, I). Every node draws
/// round(avg_degree) neighbor slots; a slot is intra-class with probability p
/// of the node's subgroup and picks its endpoint uniformly in the chosen class.
struct CsbmSpec {
  std::vector<double> mu1;
  std::vector<double> mu2;
  std::vector<Subgroup> subgroups;
  std::size_t nodes_per_class = 500;
  double avg_degree = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
  int num_slots() const;
};

struct CsbmSample {
  Graph graph;       // symmetrized edges; used by the method
  Graph slot_graph;  // directed: row v holds the neighbors v drew
  Matrix features;
  LabelVector labels;      // class 0 <-> mu1, class 1 <-> mu2
  std::vector<int> subgroup;
};

CsbmSample generate_csbm(const CsbmSpec& spec);

/// Per-(class, subgroup) mean vectors, indexed [class][subgroup].
using MeanTable = std::vector<std::vector<RowVector>>;

/// Closed-form means of L-step mean aggregation under the CSBM:
/// mu_{1,i} = p_i E[mu_1] + q_i E[mu_2], mu_{2,i} = q_i E[mu_1] + p_i E[mu_2].
MeanTable mean_recursion(const CsbmSpec& spec, int L);

/// E_m[p_m - q_m]^(L-1); 0^0 is taken as 1.
double signal_decay(const CsbmSpec& spec, int L);

struct MeanEstimate {
  MeanTable mean;
  MeanTable std_error;
  std::vector<std::vector<std::size_t>> counts;
};

/// Means of (D^-1 A)^L X over each (class, subgroup) cell of one sample, using
/// the slot graph; standard errors treat nodes as independent.
MeanEstimate aggregate_means(const CsbmSample& sample, int L);

/// Averages per-trial cell means over `trials` independent samples (seeds
/// derived from spec.seed); standard errors come from the spread across trials.
MeanEstimate aggregate_means_mc(const CsbmSpec& spec, int L, int trials);

/// Fraction of slot-graph arcs into subgroup-m nodes that join same-class nodes.
std::vector<double> intra_class_fraction(const CsbmSample& sample, std::size_t num_subgroups);

struct GapConfig {
  int min_depth = 1;
  int max_depth = 6;
  double train_fraction = 0.5;
  int seeds = 5;
  ModelSpec model;  // MLP applied to aggregated features
};

struct GapReport {
  std::vector<int> depths;
  // [seed][subgroup][depth index]
  std::vector<std::vector<std::vector<double>>> test_accuracy;
  std::vector<std::vector<std::vector<double>>> gap;
  std::vector<std::vector<double>> train_accuracy;  // [seed][depth index]
  std::vector<std::vector<int>> best_depth;         // [seed][subgroup], argmin of the gap
  // Seed means and standard errors, [subgroup][depth index].
  std::vector<std::vector<double>> mean_gap;
  std::vector<std::vector<double>> se_gap;
  std::vector<std::vector<double>> mean_test_accuracy;

  /// Number of seeds whose best depths are not all equal across subgroups.
  int seeds_with_distinct_best_depth() const;
};

/// Trains one mean-aggregation SGC per depth on each seed's sample and records
/// per-subgroup test accuracy and the train/test gap.
GapReport subgroup_gap_experiment(const CsbmSpec& spec, const GapConfig& cfg);

}  // namespace adascope
