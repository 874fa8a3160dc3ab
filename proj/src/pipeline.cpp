#include "adascope/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "adascope/error.hpp"

namespace adascope {

DataSplits split_dataset(std::size_t n, const SplitRatios& r, std::uint64_t seed) {
  if (!(r.train > 0 && r.val > 0 && r.test > 0) || std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    fail(ErrorKind::kConfig, "split ratios must be positive and sum to 1");
  }
  NodeSet order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(std::span<NodeId>(order));
  const auto n_train = static_cast<std::size_t>(std::llround(r.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::llround(r.val * static_cast<double>(n)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    fail(ErrorKind::kConfig, "split of " + std::to_string(n) + " nodes leaves an empty part");
  }
  DataSplits s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<double> oracle_accuracy(const DepthFamily& family, const LabelVector& y, const NodeSet& nodes) {
  std::vector<double> curve(static_cast<std::size_t>(family.lmax) + 1, 0.0);
  if (nodes.empty()) return curve;
  std::vector<bool> covered(nodes.size(), false);
  std::size_t hits = 0;
  for (int depth = 0; depth <= family.lmax; ++depth) {
    const Matrix block = family.block(depth);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!covered[i] && argmax_row(block, nodes[i]) == y[nodes[i]]) {
        covered[i] = true;
        ++hits;
      }
    }
    curve[static_cast<std::size_t>(depth)] = static_cast<double>(hits) / static_cast<double>(nodes.size());
  }
  return curve;
}

std::vector<double> ensemble_baseline(const std::vector<std::vector<int>>& member_predictions,
                                      const LabelVector& y, const NodeSet& nodes) {
  std::vector<double> curve;
  if (nodes.empty()) return std::vector<double>(member_predictions.size(), 0.0);
  std::vector<bool> covered(nodes.size(), false);
  std::size_t hits = 0;
  for (const auto& preds : member_predictions) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (!covered[i] && preds[nodes[i]] == y[nodes[i]]) {
        covered[i] = true;
        ++hits;
      }
    }
    curve.push_back(static_cast<double>(hits) / static_cast<double>(nodes.size()));
  }
  return curve;
}

DepthFamily family_from_logits(Matrix logits, int num_classes, Architecture arch) {
  require(num_classes >= 2 && logits.cols() % num_classes == 0 && logits.cols() / num_classes >= 2,
          "family logits must hold at least two depth blocks");
  DepthFamily f;
  f.arch = arch;
  f.num_classes = num_classes;
  f.lmax = static_cast<int>(logits.cols() / num_classes) - 1;
  f.logits = std::move(logits);
  return f;
}

void ExperimentConfig::validate() const {
  if (dataset.has_value() == csbm.has_value()) {
    fail(ErrorKind::kConfig, "config must name exactly one of 'dataset' or 'csbm'");
  }
  if (dataset && !fs::exists(*dataset)) fail(ErrorKind::kConfig, "dataset manifest " + dataset->string() + " does not exist");
  if (lmax < 1 || lmax > 8) fail(ErrorKind::kConfig, "lmax must lie in [1, 8]");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) fail(ErrorKind::kConfig, "split ratios must sum to 1");
  if (seeds.empty()) fail(ErrorKind::kConfig, "config lists no seeds");
  if (ensemble_size < 0) fail(ErrorKind::kConfig, "ensemble_size must be non-negative");
  if (!(split.eta == 0.0 || split.eta == 1.0 || std::abs(split.eta - 0.1) < 1e-12)) {
    fail(ErrorKind::kConfig, "eta must be 0, 0.1 or 1");
  }
  if (csbm) csbm->validate();
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  ExperimentConfig c;
  try {
    if (j.contains("dataset")) {
      fs::path p = j.at("dataset").get<std::string>();
      c.dataset = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
    }
    if (j.contains("csbm")) c.csbm = csbm_spec_from_json(j.at("csbm"));
    c.regenerate_csbm_per_seed = j.value("regenerate_csbm_per_seed", c.regenerate_csbm_per_seed);
    c.standardize_features = j.value("standardize_features", c.standardize_features);
    if (j.contains("arch")) c.arch = parse_architecture(j.at("arch").get<std::string>());
    c.lmax = j.value("lmax", c.lmax);
    if (j.contains("ratios")) {
      const auto r = j.at("ratios").get<std::vector<double>>();
      if (r.size() != 3) fail(ErrorKind::kConfig, "ratios must list train, val and test fractions");
      c.ratios = {r[0], r[1], r[2]};
    }
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("model")) c.model = model_spec_from_json(j.at("model"), c.model);
    if (j.contains("scope")) {
      const json& s = j.at("scope");
      c.scope.width = s.value("width", c.scope.width);
      c.scope.head_layers = s.value("head_layers", c.scope.head_layers);
      c.scope.lr = s.value("lr", c.scope.lr);
      c.scope.epochs = s.value("epochs", c.scope.epochs);
      c.scope.patience = s.value("patience", c.scope.patience);
      c.scope.tau = s.value("tau", c.scope.tau);
      if (s.contains("inputs")) c.scope.inputs = parse_modalities(s.at("inputs").get<std::string>());
      c.split.eta = s.value("eta", c.split.eta);
      c.split.mask_all_correct = s.value("mask_all_correct", c.split.mask_all_correct);
      c.split.mask_all_wrong = s.value("mask_all_wrong", c.split.mask_all_wrong);
    }
    if (j.contains("encoding")) {
      const json& e = j.at("encoding");
      c.encoding.standardize = e.value("standardize", c.encoding.standardize);
      c.encoding.pagerank.damping = e.value("damping", c.encoding.pagerank.damping);
      c.encoding.pagerank.tol = e.value("tol", c.encoding.pagerank.tol);
      c.encoding.pagerank.max_iter = e.value("max_iter", c.encoding.pagerank.max_iter);
    }
    c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
    if (j.contains("out")) c.out_dir = j.at("out").get<std::string>();
    c.save_checkpoints = j.value("save_checkpoints", c.save_checkpoints);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("invalid experiment config: ") + e.what());
  }
  c.encoding.lmax = c.lmax;
  return c;
}

json to_json(const ExperimentConfig& c) {
  json j;
  if (c.dataset) j["dataset"] = c.dataset->string();
  if (c.csbm) j["csbm"] = to_json(*c.csbm);
  j["regenerate_csbm_per_seed"] = c.regenerate_csbm_per_seed;
  j["standardize_features"] = c.standardize_features;
  j["arch"] = to_string(c.arch);
  j["lmax"] = c.lmax;
  j["ratios"] = {c.ratios.train, c.ratios.val, c.ratios.test};
  j["seeds"] = c.seeds;
  j["model"] = to_json(c.model);
  j["scope"] = {{"width", c.scope.width},     {"head_layers", c.scope.head_layers},
                {"lr", c.scope.lr},           {"epochs", c.scope.epochs},
                {"patience", c.scope.patience}, {"tau", c.scope.tau},
                {"inputs", to_string(c.scope.inputs)}, {"eta", c.split.eta},
                {"mask_all_correct", c.split.mask_all_correct},
                {"mask_all_wrong", c.split.mask_all_wrong}};
  j["encoding"] = {{"standardize", c.encoding.standardize},
                   {"damping", c.encoding.pagerank.damping},
                   {"tol", c.encoding.pagerank.tol},
                   {"max_iter", c.encoding.pagerank.max_iter}};
  j["ensemble_size"] = c.ensemble_size;
  j["save_checkpoints"] = c.save_checkpoints;
  return j;
}

namespace {

using Clock = std::chrono::steady_clock;

// Runs one stage, prefixing any library error with the stage name and
// recording the elapsed wall-clock time.
template <typename F>
auto stage(const std::string& name, std::vector<std::pair<std::string, double>>* timings, F&& body) {
  const auto start = Clock::now();
  auto record = [&] {
    if (timings) timings->emplace_back(name, std::chrono::duration<double>(Clock::now() - start).count());
  };
  try {
    if constexpr (std::is_void_v<decltype(body())>) {
      body();
      record();
    } else {
      auto result = body();
      record();
      return result;
    }
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + name + ": " + e.what());
  }
}

}  // namespace

Dataset load_experiment_data(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.dataset) {
    return ingest_dataset(*cfg.dataset, IngestOptions{cfg.standardize_features});
  }
  CsbmSpec spec = *cfg.csbm;
  if (cfg.regenerate_csbm_per_seed) spec.seed = Rng(spec.seed).derive(seed).seed();
  CsbmSample s = generate_csbm(spec);
  Dataset d;
  d.name = "csbm";
  d.graph = std::move(s.graph);
  d.features = cfg.standardize_features ? standardize_columns(s.features) : std::move(s.features);
  d.labels = std::move(s.labels);
  d.split_seed = seed;
  return d;
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, SeedArtifacts* keep,
                    std::vector<std::pair<std::string, double>>* timings) {
  SeedArtifacts local;
  SeedArtifacts& a = keep ? *keep : local;
  const std::string tag = "seed " + std::to_string(seed) + " ";

  a.data = stage(tag + "load", timings, [&] { return load_experiment_data(cfg, seed); });
  const Dataset& d = a.data;
  const LabelVector& y = d.labels;
  a.splits = stage(tag + "split", timings, [&] {
    return split_dataset(d.graph.num_nodes(), cfg.ratios, Rng(d.split_seed).derive(seed).seed());
  });
  const DataSplits& sp = a.splits;

  ModelSpec base = cfg.model;
  base.seed = Rng(seed).derive(11).seed();
  a.family = stage(tag + "train-family", timings, [&] {
    return train_depth_family(cfg.arch, cfg.lmax, d.graph, d.features, y, sp.train, sp.val, base);
  });
  const DepthFamily& fam = a.family;

  EncodingConfig enc_cfg = cfg.encoding;
  enc_cfg.lmax = cfg.lmax;
  a.encoding = stage(tag + "encode", timings, [&] { return structural_encoding(d.graph, d.features, enc_cfg); });

  NodeSet labelled = sp.train;
  labelled.insert(labelled.end(), sp.val.begin(), sp.val.end());
  std::sort(labelled.begin(), labelled.end());
  a.labels = stage(tag + "build-labels", timings, [&] { return build_scope_labels(y, fam, labelled); });

  SplitConfig split_cfg = cfg.split;
  split_cfg.seed = Rng(seed).derive(13).seed();
  SeedResult r;
  a.scope_split = stage(tag + "resplit", timings, [&] {
    ScopeSplit s = resplit(sp.train, sp.val, split_cfg);
    const std::size_t before = s.train.size();
    for (NodeId v : s.train) {
      if (a.labels.all_correct[v]) ++r.masked_all_correct;
      if (a.labels.all_wrong[v]) ++r.masked_all_wrong;
    }
    if (!split_cfg.mask_all_correct) r.masked_all_correct = 0;
    if (!split_cfg.mask_all_wrong) r.masked_all_wrong = 0;
    s.train = mask_uninformative(s.train, a.labels, split_cfg);
    require(before - s.train.size() == r.masked_all_correct + r.masked_all_wrong, "masking count mismatch");
    return s;
  });

  const FusionInputs inputs{a.encoding.features, d.features, fam.logits};
  ScopeTrainConfig scope_cfg = cfg.scope;
  scope_cfg.seed = Rng(seed).derive(17).seed();
  a.predictor = stage(tag + "train-as", timings, [&] {
    return train_scope_predictor(inputs, a.labels, a.scope_split, fam, y, scope_cfg);
  });

  const Routing routing = stage(tag + "predict-as", timings, [&] {
    return select_and_predict(a.predictor.params, inputs, fam, sp.test);
  });

  r.seed = seed;
  for (int depth = 0; depth <= cfg.lmax; ++depth) {
    const Matrix block = fam.block(depth);
    r.depth_train.push_back(accuracy(block, y, sp.train));
    r.depth_val.push_back(accuracy(block, y, sp.val));
    r.depth_test.push_back(accuracy(block, y, sp.test));
  }
  r.best_depth_by_val = static_cast<int>(std::max_element(r.depth_val.begin(), r.depth_val.end()) - r.depth_val.begin());
  r.best_single_test = r.depth_test[static_cast<std::size_t>(r.best_depth_by_val)];
  r.as_test = routed_accuracy(routing, y, sp.test);
  r.as_val_routing = a.predictor.best_val_routing;
  r.oracle_curve = oracle_accuracy(fam, y, sp.test);
  r.selection_histogram.assign(static_cast<std::size_t>(cfg.lmax) + 1, 0);
  for (int depth : routing.depth) ++r.selection_histogram[static_cast<std::size_t>(depth)];
  r.average_homophily = average_node_homophily(d.graph, y);
  r.scope_train_size = a.scope_split.train.size();
  r.scope_val_size = a.scope_split.val.size();
  r.test_nodes = sp.test;
  r.chosen_depth = routing.depth;
  r.prediction = routing.prediction;
  for (NodeId v : sp.test) r.truth.push_back(y[v]);

  if (cfg.ensemble_size > 0) {
    r.ensemble_curve = stage(tag + "ensemble", timings, [&] {
      std::vector<std::vector<int>> preds{fam.predictions(r.best_depth_by_val)};
      ModelSpec spec = base;
      spec.arch = cfg.arch;
      spec.depth = r.best_depth_by_val;
      for (int k = 1; k < cfg.ensemble_size; ++k) {
        spec.seed = Rng(base.seed).derive(1000 + static_cast<std::uint64_t>(k)).seed();
        const TrainedClassifier extra = train_classifier(spec, d.graph, d.features, y, sp.train, sp.val);
        preds.push_back(predictions(extra.model.predict_logits(d.graph, d.features)));
      }
      return ensemble_baseline(preds, y, sp.test);
    });
  }

  if (cfg.save_checkpoints) {
    stage(tag + "checkpoint", timings, [&] {
      const fs::path dir = cfg.out_dir / ("seed_" + std::to_string(seed));
      for (int depth = 0; depth <= cfg.lmax; ++depth) {
        const TrainedClassifier& m = fam.members[static_cast<std::size_t>(depth)];
        save_classifier(dir / ("depth_" + std::to_string(depth)), m.model,
                        {{"best_val_accuracy", m.best_val_accuracy}, {"best_epoch", m.best_epoch}});
      }
      write_checkpoint(dir / "family_logits", {{"num_classes", fam.num_classes}, {"lmax", fam.lmax}},
                       {{"logits", fam.logits}});
      save_fusion(dir / "scope_predictor", a.predictor.params, {{"best_val_routing", a.predictor.best_val_routing}});
    });
  }
  return r;
}

MetricsReport run_pipeline(const ExperimentConfig& cfg) {
  cfg.validate();
  MetricsReport rep;
  rep.config = to_json(cfg);
  rep.lmax = cfg.lmax;
  for (std::uint64_t seed : cfg.seeds) rep.seeds.push_back(run_seed(cfg, seed, nullptr, &rep.timings));
  check_report(rep);
  return rep;
}

void check_report(const MetricsReport& report) {
  if (report.seeds.empty()) fail(ErrorKind::kConfig, "report has no completed trials");
  for (const SeedResult& r : report.seeds) {
    if (r.oracle_curve.empty()) fail(ErrorKind::kContract, "seed result lacks an oracle curve");
    for (std::size_t k = 1; k < r.oracle_curve.size(); ++k) {
      if (r.oracle_curve[k] < r.oracle_curve[k - 1]) {
        fail(ErrorKind::kContract, "oracle curve decreases for seed " + std::to_string(r.seed));
      }
    }
    if (r.as_test > r.oracle_curve.back()) {
      std::ostringstream msg;
      msg << "routed accuracy " << r.as_test << " exceeds oracle accuracy " << r.oracle_curve.back()
          << " for seed " << r.seed;
      fail(ErrorKind::kContract, msg.str());
    }
  }
}

Stat mean_sd(const std::vector<double>& v) {
  Stat s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double acc = 0.0;
    for (double x : v) acc += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(acc / static_cast<double>(v.size() - 1));
  }
  return s;
}

namespace {

std::vector<double> column_mean(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  std::size_t width = rows.front().size();
  for (const auto& r : rows) width = std::min(width, r.size());
  std::vector<double> out(width, 0.0);
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < width; ++i) out[i] += r[i] / static_cast<double>(rows.size());
  }
  return out;
}

}  // namespace

json report_to_json(const MetricsReport& rep) {
  json seeds = json::array();
  std::vector<double> as, best;
  std::vector<std::vector<double>> tests, oracles, ensembles;
  for (const SeedResult& r : rep.seeds) {
    seeds.push_back({{"seed", r.seed},
                     {"depth_train", r.depth_train},
                     {"depth_val", r.depth_val},
                     {"depth_test", r.depth_test},
                     {"best_depth_by_val", r.best_depth_by_val},
                     {"best_single_test", r.best_single_test},
                     {"as_test", r.as_test},
                     {"as_val_routing", r.as_val_routing},
                     {"oracle_curve", r.oracle_curve},
                     {"ensemble_curve", r.ensemble_curve},
                     {"selection_histogram", r.selection_histogram},
                     {"average_homophily", r.average_homophily},
                     {"scope_train_size", r.scope_train_size},
                     {"scope_val_size", r.scope_val_size},
                     {"masked_all_correct", r.masked_all_correct},
                     {"masked_all_wrong", r.masked_all_wrong},
                     {"test_nodes", r.test_nodes},
                     {"chosen_depth", r.chosen_depth},
                     {"prediction", r.prediction},
                     {"truth", r.truth}});
    as.push_back(r.as_test);
    best.push_back(r.best_single_test);
    tests.push_back(r.depth_test);
    oracles.push_back(r.oracle_curve);
    if (!r.ensemble_curve.empty()) ensembles.push_back(r.ensemble_curve);
  }
  const Stat as_stat = mean_sd(as);
  const Stat best_stat = mean_sd(best);
  json j;
  j["config"] = rep.config;
  j["lmax"] = rep.lmax;
  j["seeds"] = std::move(seeds);
  j["summary"] = {{"as_test_mean", as_stat.mean},
                  {"as_test_sd", as_stat.sd},
                  {"best_single_test_mean", best_stat.mean},
                  {"best_single_test_sd", best_stat.sd},
                  {"depth_test_mean", column_mean(tests)},
                  {"oracle_curve_mean", column_mean(oracles)},
                  {"ensemble_curve_mean", column_mean(ensembles)}};
  return j;
}

MetricsReport report_from_json(const json& j) {
  MetricsReport rep;
  try {
    rep.config = j.at("config");
    rep.lmax = j.at("lmax").get<int>();
    for (const json& s : j.at("seeds")) {
      SeedResult r;
      r.seed = s.at("seed").get<std::uint64_t>();
      r.depth_train = s.at("depth_train").get<std::vector<double>>();
      r.depth_val = s.at("depth_val").get<std::vector<double>>();
      r.depth_test = s.at("depth_test").get<std::vector<double>>();
      r.best_depth_by_val = s.at("best_depth_by_val").get<int>();
      r.best_single_test = s.at("best_single_test").get<double>();
      r.as_test = s.at("as_test").get<double>();
      r.as_val_routing = s.at("as_val_routing").get<double>();
      r.oracle_curve = s.at("oracle_curve").get<std::vector<double>>();
      r.ensemble_curve = s.at("ensemble_curve").get<std::vector<double>>();
      r.selection_histogram = s.at("selection_histogram").get<std::vector<int>>();
      r.average_homophily = s.at("average_homophily").get<double>();
      r.scope_train_size = s.at("scope_train_size").get<std::size_t>();
      r.scope_val_size = s.at("scope_val_size").get<std::size_t>();
      r.masked_all_correct = s.at("masked_all_correct").get<std::size_t>();
      r.masked_all_wrong = s.at("masked_all_wrong").get<std::size_t>();
      r.test_nodes = s.at("test_nodes").get<NodeSet>();
      r.chosen_depth = s.at("chosen_depth").get<std::vector<int>>();
      r.prediction = s.at("prediction").get<std::vector<int>>();
      r.truth = s.at("truth").get<std::vector<int>>();
      rep.seeds.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, std::string("malformed report: ") + e.what());
  }
  return rep;
}

void export_metrics(const MetricsReport& report, const fs::path& dir) {
  check_report(report);
  const json j = report_to_json(report);
  write_text(dir / "report.json", j.dump(2) + "\n");

  json t = json::array();
  for (const auto& [name, secs] : report.timings) t.push_back({{"stage", name}, {"seconds", secs}});
  write_text(dir / "timings.json", t.dump(2) + "\n");

  const auto& s = j.at("summary");
  const auto depth_test = s.at("depth_test_mean").get<std::vector<double>>();
  const auto oracle = s.at("oracle_curve_mean").get<std::vector<double>>();
  const auto ensemble = s.at("ensemble_curve_mean").get<std::vector<double>>();
  std::ostringstream curves;
  curves << "depth,depth_test_mean,oracle_mean,ensemble_mean\n";
  for (int l = 0; l <= report.lmax; ++l) {
    const auto i = static_cast<std::size_t>(l);
    curves << l << ',' << (i < depth_test.size() ? depth_test[i] : 0.0) << ','
           << (i < oracle.size() ? oracle[i] : 0.0) << ',';
    if (i < ensemble.size()) curves << ensemble[i];
    curves << '\n';
  }
  write_text(dir / "curves.csv", curves.str());

  for (const SeedResult& r : report.seeds) {
    std::ostringstream nodes;
    nodes << "node,chosen_depth,prediction,label\n";
    for (std::size_t i = 0; i < r.test_nodes.size(); ++i) {
      nodes << r.test_nodes[i] << ',' << r.chosen_depth[i] << ',' << r.prediction[i] << ',' << r.truth[i] << '\n';
    }
    write_text(dir / ("nodes_seed" + std::to_string(r.seed) + ".csv"), nodes.str());
  }
}

}  // namespace adascope
