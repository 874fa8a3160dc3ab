// Command-line front end. Staged verbs (train-family, encode, build-labels,
// train-as, predict-as, oracle) rebuild the dataset and splits from the config
// and seed, and exchange artifacts through <out>/seed_<k>/.

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "adascope/csbm.hpp"
#include "adascope/error.hpp"
#include "adascope/io.hpp"
#include "adascope/pipeline.hpp"

using namespace adascope;

namespace {

struct Globals {
  std::string config;
  std::string out = "run";
  std::int64_t seed = -1;  // -1: take the first configured seed
};

ExperimentConfig load_config(const Globals& g) {
  if (g.config.empty()) fail(ErrorKind::kConfig, "--config is required for this command");
  const fs::path path(g.config);
  ExperimentConfig cfg = experiment_config_from_json(read_json(path), path.parent_path());
  cfg.out_dir = g.out;
  if (g.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(g.seed)};
  cfg.validate();
  return cfg;
}

struct Stage {
  ExperimentConfig cfg;
  std::uint64_t seed = 0;
  Dataset data;
  DataSplits splits;
  fs::path dir;
};

Stage open_stage(const Globals& g) {
  Stage s;
  s.cfg = load_config(g);
  s.seed = s.cfg.seeds.front();
  s.data = load_experiment_data(s.cfg, s.seed);
  s.splits = split_dataset(s.data.graph.num_nodes(), s.cfg.ratios, Rng(s.data.split_seed).derive(s.seed).seed());
  s.dir = s.cfg.out_dir / ("seed_" + std::to_string(s.seed));
  fs::create_directories(s.dir);
  return s;
}

DepthFamily load_family(const Stage& s) {
  const Checkpoint ck = read_checkpoint(s.dir / "family_logits");
  return family_from_logits(ck.at("logits"), ck.meta.at("num_classes").get<int>(), s.cfg.arch);
}

Matrix load_encoding(const Stage& s) { return read_checkpoint(s.dir / "encoding").at("features"); }

NodeSet labelled_nodes(const DataSplits& sp) {
  NodeSet out = sp.train;
  out.insert(out.end(), sp.val.begin(), sp.val.end());
  std::sort(out.begin(), out.end());
  return out;
}

ScopeLabelMatrix load_scope_labels(const Stage& s) {
  const Checkpoint ck = read_checkpoint(s.dir / "scope_labels");
  ScopeLabelMatrix lab;
  lab.bits = ck.at("bits");
  const auto n = static_cast<std::size_t>(lab.bits.rows());
  lab.all_correct.assign(n, false);
  lab.all_wrong.assign(n, false);
  for (NodeId v : ck.meta.at("nodes").get<NodeSet>()) {
    require(v < n, "scope label node out of range");
    const double ones = lab.bits.row(v).sum();
    if (ones == static_cast<double>(lab.bits.cols())) {
      lab.all_correct[v] = true;
      lab.all_correct_nodes.push_back(v);
    } else if (ones == 0.0) {
      lab.all_wrong[v] = true;
      lab.all_wrong_nodes.push_back(v);
    }
  }
  return lab;
}

void print(const json& j) { std::cout << j.dump(2) << '\n'; }

int cmd_generate(const Globals& g, const std::string& spec_path) {
  CsbmSpec spec = csbm_spec_from_json(read_json(spec_path));
  if (g.seed >= 0) spec.seed = static_cast<std::uint64_t>(g.seed);
  const CsbmSample s = generate_csbm(spec);
  write_dataset(g.out, {"csbm", s.graph, s.features, s.labels, spec.seed});
  std::ostringstream sub;
  for (int m : s.subgroup) sub << m << '\n';
  write_text(fs::path(g.out) / "subgroups.txt", sub.str());
  print({{"nodes", s.graph.num_nodes()}, {"edges", s.graph.num_edges()},
         {"average_homophily", average_node_homophily(s.graph, s.labels)}, {"out", g.out}});
  return 0;
}

int cmd_ingest_check(const Globals& g, const std::string& manifest, bool standardize) {
  fs::path path = manifest;
  if (path.empty()) {
    const ExperimentConfig cfg = load_config(g);
    if (!cfg.dataset) fail(ErrorKind::kConfig, "ingest-check needs --manifest or a config with a dataset");
    path = *cfg.dataset;
  }
  const Dataset d = ingest_dataset(path, {standardize});
  std::vector<std::size_t> counts(static_cast<std::size_t>(d.labels.num_classes), 0);
  for (int c : d.labels.labels) ++counts[static_cast<std::size_t>(c)];
  print({{"name", d.name},
         {"nodes", d.graph.num_nodes()},
         {"edges", d.graph.num_edges()},
         {"directed", d.graph.directed()},
         {"features", d.features.cols()},
         {"classes", d.labels.num_classes},
         {"class_counts", counts},
         {"average_homophily", average_node_homophily(d.graph, d.labels)}});
  return 0;
}

int cmd_train_family(const Globals& g) {
  Stage s = open_stage(g);
  ModelSpec base = s.cfg.model;
  base.seed = Rng(s.seed).derive(11).seed();
  const DepthFamily fam = train_depth_family(s.cfg.arch, s.cfg.lmax, s.data.graph, s.data.features, s.data.labels,
                                             s.splits.train, s.splits.val, base);
  json depths = json::array();
  for (int depth = 0; depth <= s.cfg.lmax; ++depth) {
    const TrainedClassifier& m = fam.members[static_cast<std::size_t>(depth)];
    save_classifier(s.dir / ("depth_" + std::to_string(depth)), m.model,
                    {{"best_val_accuracy", m.best_val_accuracy}, {"best_epoch", m.best_epoch}});
    depths.push_back({{"depth", depth},
                      {"train", accuracy(fam.block(depth), s.data.labels, s.splits.train)},
                      {"val", accuracy(fam.block(depth), s.data.labels, s.splits.val)},
                      {"test", accuracy(fam.block(depth), s.data.labels, s.splits.test)}});
  }
  write_checkpoint(s.dir / "family_logits", {{"num_classes", fam.num_classes}, {"lmax", fam.lmax}},
                   {{"logits", fam.logits}});
  print({{"seed", s.seed}, {"depths", depths}});
  return 0;
}

int cmd_encode(const Globals& g) {
  Stage s = open_stage(g);
  EncodingConfig enc = s.cfg.encoding;
  enc.lmax = s.cfg.lmax;
  const StructuralEncoding e = structural_encoding(s.data.graph, s.data.features, enc);
  write_checkpoint(s.dir / "encoding", {{"legend", e.legend}, {"pagerank_converged", e.pagerank_converged}},
                   {{"raw", e.raw}, {"features", e.features}});
  print({{"seed", s.seed}, {"columns", e.legend}, {"pagerank_converged", e.pagerank_converged}});
  return 0;
}

int cmd_build_labels(const Globals& g) {
  Stage s = open_stage(g);
  const DepthFamily fam = load_family(s);
  const NodeSet nodes = labelled_nodes(s.splits);
  const ScopeLabelMatrix lab = build_scope_labels(s.data.labels, fam, nodes);
  write_checkpoint(s.dir / "scope_labels", {{"nodes", nodes}}, {{"bits", lab.bits}});
  std::vector<double> positive(static_cast<std::size_t>(lab.num_depths()), 0.0);
  for (NodeId v : nodes) {
    for (int l = 0; l < lab.num_depths(); ++l) positive[static_cast<std::size_t>(l)] += lab.bits(v, l);
  }
  print({{"seed", s.seed},
         {"labelled", nodes.size()},
         {"all_correct", lab.all_correct_nodes.size()},
         {"all_wrong", lab.all_wrong_nodes.size()},
         {"correct_per_depth", positive}});
  return 0;
}

int cmd_train_as(const Globals& g) {
  Stage s = open_stage(g);
  const DepthFamily fam = load_family(s);
  const ScopeLabelMatrix lab = load_scope_labels(s);
  SplitConfig split_cfg = s.cfg.split;
  split_cfg.seed = Rng(s.seed).derive(13).seed();
  ScopeSplit split = resplit(s.splits.train, s.splits.val, split_cfg);
  split.train = mask_uninformative(split.train, lab, split_cfg);
  ScopeTrainConfig tc = s.cfg.scope;
  tc.seed = Rng(s.seed).derive(17).seed();
  const FusionInputs in{load_encoding(s), s.data.features, fam.logits};
  const TrainedScopePredictor p = train_scope_predictor(in, lab, split, fam, s.data.labels, tc);
  save_fusion(s.dir / "scope_predictor", p.params, {{"best_val_routing", p.best_val_routing}});
  print({{"seed", s.seed},
         {"train_nodes", split.train.size()},
         {"val_nodes", split.val.size()},
         {"best_epoch", p.best_epoch},
         {"best_val_routing", p.best_val_routing},
         {"loss_clamped", p.clamped}});
  return 0;
}

int cmd_predict_as(const Globals& g) {
  Stage s = open_stage(g);
  const DepthFamily fam = load_family(s);
  const FusionParams p = load_fusion(s.dir / "scope_predictor");
  const FusionInputs in{load_encoding(s), s.data.features, fam.logits};
  const NodeSet& test = s.splits.test;
  const Routing r = select_and_predict(p, in, fam, test);
  std::ostringstream csv;
  csv << "node,chosen_depth,prediction,label\n";
  for (std::size_t i = 0; i < test.size(); ++i) {
    csv << test[i] << ',' << r.depth[i] << ',' << r.prediction[i] << ',' << s.data.labels[test[i]] << '\n';
  }
  write_text(s.dir / "routing.csv", csv.str());
  const std::vector<double> oracle = oracle_accuracy(fam, s.data.labels, test);
  const double routed = routed_accuracy(r, s.data.labels, test);
  if (routed > oracle.back()) fail(ErrorKind::kContract, "routed accuracy exceeds the oracle");
  print({{"seed", s.seed}, {"routed_test_accuracy", routed}, {"oracle", oracle.back()}});
  return 0;
}

int cmd_oracle(const Globals& g) {
  Stage s = open_stage(g);
  const DepthFamily fam = load_family(s);
  std::vector<double> single;
  for (int depth = 0; depth <= fam.lmax; ++depth) single.push_back(accuracy(fam.block(depth), s.data.labels, s.splits.test));
  const json j = {{"seed", s.seed},
                  {"oracle_curve", oracle_accuracy(fam, s.data.labels, s.splits.test)},
                  {"depth_test", single}};
  write_text(s.dir / "oracle.json", j.dump(2) + "\n");
  print(j);
  return 0;
}

int cmd_pipeline(const Globals& g) {
  const ExperimentConfig cfg = load_config(g);
  const MetricsReport rep = run_pipeline(cfg);
  export_metrics(rep, cfg.out_dir);
  const json summary = report_to_json(rep).at("summary");
  print({{"out", cfg.out_dir.string()}, {"summary", summary}});
  return 0;
}

int cmd_theory_check(const Globals& g, const std::string& spec_path, const std::string& lrange, int seeds,
                     double train_fraction) {
  const json j = read_json(spec_path);
  CsbmSpec spec = csbm_spec_from_json(j.contains("csbm") ? j.at("csbm") : j);
  if (g.seed >= 0) spec.seed = static_cast<std::uint64_t>(g.seed);
  GapConfig cfg;
  const auto colon = lrange.find(':');
  try {
    if (colon == std::string::npos) throw std::invalid_argument("no colon");
    cfg.min_depth = std::stoi(lrange.substr(0, colon));
    cfg.max_depth = std::stoi(lrange.substr(colon + 1));
  } catch (const std::exception&) {
    fail(ErrorKind::kConfig, "--lrange must look like 1:6, got '" + lrange + "'");
  }
  cfg.seeds = seeds;
  cfg.train_fraction = train_fraction;
  if (j.contains("model")) cfg.model = model_spec_from_json(j.at("model"), cfg.model);
  const GapReport rep = subgroup_gap_experiment(spec, cfg);

  const fs::path out(g.out);
  std::ostringstream csv;
  csv << "subgroup,depth,mean_gap,se_gap,mean_test_accuracy\n";
  for (std::size_t m = 0; m < rep.mean_gap.size(); ++m) {
    for (std::size_t d = 0; d < rep.depths.size(); ++d) {
      csv << m << ',' << rep.depths[d] << ',' << rep.mean_gap[m][d] << ',' << rep.se_gap[m][d] << ','
          << rep.mean_test_accuracy[m][d] << '\n';
    }
  }
  write_text(out / "gap_curves.csv", csv.str());
  std::vector<double> decay;
  for (int L : rep.depths) decay.push_back(signal_decay(spec, L));
  const int distinct = rep.seeds_with_distinct_best_depth();
  const json verdict = {{"best_depth_per_seed", rep.best_depth},
                        {"seeds_with_distinct_best_depth", distinct},
                        {"seeds", seeds},
                        {"signal_decay", decay},
                        {"depths_differ_in_most_seeds", 5 * distinct >= 4 * seeds}};
  write_text(out / "verdicts.json", verdict.dump(2) + "\n");
  print(verdict);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive-scope node classification toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "experiment config (JSON)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--seed", g.seed, "seed override")->check(CLI::NonNegativeNumber);

  std::string spec_path, manifest, lrange = "1:6";
  int gap_seeds = 5;
  double train_fraction = 0.5;
  bool standardize = false;

  auto* gen = app.add_subcommand("generate-csbm", "sample a CSBM graph and write it as a dataset");
  gen->add_option("--spec", spec_path, "CSBM spec (JSON)")->required();
  auto* ingest = app.add_subcommand("ingest-check", "validate a dataset manifest and print a summary");
  ingest->add_option("--manifest", manifest, "dataset manifest");
  ingest->add_flag("--standardize", standardize, "standardize feature columns");
  auto* family = app.add_subcommand("train-family", "train depths 0..lmax and store checkpoints and logits");
  auto* encode = app.add_subcommand("encode", "compute the structural encoding");
  auto* labels = app.add_subcommand("build-labels", "derive per-depth correctness labels from stored logits");
  auto* train_as = app.add_subcommand("train-as", "train the scope predictor");
  auto* predict_as = app.add_subcommand("predict-as", "route test nodes and write routing.csv");
  auto* oracle = app.add_subcommand("oracle", "oracle accuracy curve of a stored family");
  auto* pipeline = app.add_subcommand("pipeline", "run every stage for every configured seed");
  auto* theory = app.add_subcommand("theory-check", "per-subgroup train/test gap against depth");
  theory->add_option("--spec", spec_path, "CSBM spec (JSON); an optional \"model\" key sets the classifier")->required();
  theory->add_option("--lrange", lrange, "depth range lo:hi");
  theory->add_option("--seeds", gap_seeds, "number of samples")->check(CLI::PositiveNumber);
  theory->add_option("--train-fraction", train_fraction, "fraction of nodes used for training");
  for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_generate(g, spec_path);
    if (*ingest) return cmd_ingest_check(g, manifest, standardize);
    if (*family) return cmd_train_family(g);
    if (*encode) return cmd_encode(g);
    if (*labels) return cmd_build_labels(g);
    if (*train_as) return cmd_train_as(g);
    if (*predict_as) return cmd_predict_as(g);
    if (*oracle) return cmd_oracle(g);
    if (*pipeline) return cmd_pipeline(g);
    if (*theory) return cmd_theory_check(g, spec_path, lrange, gap_seeds, train_fraction);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
