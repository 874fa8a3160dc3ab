#include "adascope/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "adascope/encoding.hpp"
#include "adascope/error.hpp"

namespace adascope {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

std::ifstream open_in(const fs::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string() + " for reading");
  return in;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::kIo, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, mode);
  if (!out) fail(ErrorKind::kIo, "cannot open " + path.string() + " for writing");
  return out;
}

fs::path with_suffix(const fs::path& stem, const char* ext) {
  return fs::path(stem.string() + ext);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

[[noreturn]] void bad_line(const fs::path& file, std::size_t line, const std::string& why) {
  fail(ErrorKind::kInput, file.string() + ":" + std::to_string(line) + ": " + why);
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

json read_json(const fs::path& path) {
  auto in = open_in(path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, path.string() + ": invalid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

void write_checkpoint(const fs::path& stem, const json& meta, const std::vector<NamedTensor>& tensors) {
  const fs::path bin = with_suffix(stem, ".bin");
  auto out = open_out(bin, std::ios::binary);
  json manifest;
  manifest["meta"] = meta;
  manifest["blob"] = bin.filename().string();
  manifest["dtype"] = "float32-le";
  json list = json::array();
  std::uint64_t offset = 0;
  std::vector<float> buf;
  for (const NamedTensor& t : tensors) {
    buf.resize(static_cast<std::size_t>(t.value.size()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) buf[static_cast<std::size_t>(i)] = static_cast<float>(t.value.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    list.push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}, {"offset", offset}});
    offset += buf.size() * sizeof(float);
  }
  if (!out) fail(ErrorKind::kIo, "write failed for " + bin.string());
  manifest["tensors"] = std::move(list);
  write_text(with_suffix(stem, ".json"), manifest.dump(2) + "\n");
}

const Matrix& Checkpoint::at(const std::string& name) const {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return t.value;
  }
  fail(ErrorKind::kInput, "checkpoint has no tensor named '" + name + "'");
}

Checkpoint read_checkpoint(const fs::path& stem) {
  const json manifest = read_json(with_suffix(stem, ".json"));
  Checkpoint ck;
  try {
    ck.meta = manifest.value("meta", json::object());
    const fs::path bin = stem.parent_path() / manifest.at("blob").get<std::string>();
    auto in = open_in(bin, std::ios::binary);
    for (const json& t : manifest.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      std::vector<float> buf(static_cast<std::size_t>(rows * cols));
      in.seekg(static_cast<std::streamoff>(offset));
      in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
      if (!in) fail(ErrorKind::kIo, "truncated checkpoint blob " + bin.string());
      Matrix m(rows, cols);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = buf[static_cast<std::size_t>(i)];
      ck.tensors.push_back({t.at("name").get<std::string>(), std::move(m)});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, "malformed checkpoint manifest " + stem.string() + ".json: " + e.what());
  }
  return ck;
}

json to_json(const ModelSpec& s) {
  return {{"arch", to_string(s.arch)},   {"depth", s.depth},
          {"hidden", s.hidden},          {"mlp_layers", s.mlp_layers},
          {"norm", to_string(s.norm)},   {"input_dropout", s.input_dropout},
          {"dropout", s.dropout},        {"lr", s.lr},
          {"max_epochs", s.max_epochs},  {"patience", s.patience},
          {"seed", s.seed}};
}

ModelSpec model_spec_from_json(const json& j, const ModelSpec& d) {
  ModelSpec s = d;
  try {
    if (j.contains("arch")) s.arch = parse_architecture(j.at("arch").get<std::string>());
    s.depth = j.value("depth", d.depth);
    s.hidden = j.value("hidden", d.hidden);
    s.mlp_layers = j.value("mlp_layers", d.mlp_layers);
    if (j.contains("norm")) s.norm = parse_norm(j.at("norm").get<std::string>());
    s.input_dropout = j.value("input_dropout", d.input_dropout);
    s.dropout = j.value("dropout", d.dropout);
    s.lr = j.value("lr", d.lr);
    s.max_epochs = j.value("max_epochs", d.max_epochs);
    s.patience = j.value("patience", d.patience);
    s.seed = j.value("seed", d.seed);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("invalid model settings: ") + e.what());
  }
  return s;
}

void save_classifier(const fs::path& stem, const NodeClassifier& model, const json& extra) {
  json meta = extra;
  meta["kind"] = "node-classifier";
  meta["spec"] = to_json(model.spec());
  meta["in_features"] = model.in_features();
  meta["num_classes"] = model.num_classes();
  std::vector<NamedTensor> tensors;
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) tensors.push_back({"p" + std::to_string(i), *params[i]});
  write_checkpoint(stem, meta, tensors);
}

NodeClassifier load_classifier(const fs::path& stem) {
  const Checkpoint ck = read_checkpoint(stem);
  if (ck.meta.value("kind", "") != "node-classifier") {
    fail(ErrorKind::kInput, stem.string() + " is not a classifier checkpoint");
  }
  NodeClassifier model(model_spec_from_json(ck.meta.at("spec")),
                       ck.meta.at("in_features").get<Eigen::Index>(),
                       ck.meta.at("num_classes").get<int>());
  auto params = model.parameters();
  if (params.size() != ck.tensors.size()) fail(ErrorKind::kInput, "checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& t = ck.tensors[i].value;
    if (t.rows() != params[i]->rows() || t.cols() != params[i]->cols()) {
      fail(ErrorKind::kInput, "checkpoint tensor " + ck.tensors[i].name + " has the wrong shape");
    }
    *params[i] = t;
  }
  return model;
}

void save_fusion(const fs::path& stem, const FusionParams& p, const json& extra) {
  json meta = extra;
  const FusionConfig& c = p.config;
  meta["kind"] = "scope-predictor";
  meta["config"] = {{"xi_dim", c.xi_dim},          {"x_dim", c.x_dim},
                    {"zeta_dim", c.zeta_dim},      {"width", c.width},
                    {"head_layers", c.head_layers}, {"num_depths", c.num_depths},
                    {"inputs", to_string(c.active)}};
  std::vector<NamedTensor> tensors;
  const auto params = p.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) tensors.push_back({"p" + std::to_string(i), *params[i]});
  write_checkpoint(stem, meta, tensors);
}

FusionParams load_fusion(const fs::path& stem) {
  const Checkpoint ck = read_checkpoint(stem);
  if (ck.meta.value("kind", "") != "scope-predictor") {
    fail(ErrorKind::kInput, stem.string() + " is not a scope-predictor checkpoint");
  }
  const json& j = ck.meta.at("config");
  FusionConfig c;
  c.xi_dim = j.at("xi_dim").get<Eigen::Index>();
  c.x_dim = j.at("x_dim").get<Eigen::Index>();
  c.zeta_dim = j.at("zeta_dim").get<Eigen::Index>();
  c.width = j.at("width").get<Eigen::Index>();
  c.head_layers = j.at("head_layers").get<int>();
  c.num_depths = j.at("num_depths").get<int>();
  c.active = parse_modalities(j.at("inputs").get<std::string>());
  Rng rng(0);
  FusionParams p = init_fusion(c, rng);
  auto params = p.parameters();
  if (params.size() != ck.tensors.size()) fail(ErrorKind::kInput, "checkpoint tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& t = ck.tensors[i].value;
    if (t.rows() != params[i]->rows() || t.cols() != params[i]->cols()) {
      fail(ErrorKind::kInput, "checkpoint tensor " + ck.tensors[i].name + " has the wrong shape");
    }
    *params[i] = t;
  }
  return p;
}

Dataset ingest_dataset(const fs::path& manifest_path, const IngestOptions& opts) {
  const json m = read_json(manifest_path);
  const fs::path base = manifest_path.parent_path();
  Dataset d;
  std::size_t n = 0;
  bool directed = false;
  fs::path edges_path, features_path, labels_path;
  int declared_classes = 0;
  try {
    n = m.at("num_nodes").get<std::size_t>();
    directed = m.value("directed", false);
    d.split_seed = m.value("split_seed", std::uint64_t{0});
    d.name = m.value("name", manifest_path.stem().string());
    edges_path = base / m.at("edges").get<std::string>();
    features_path = base / m.at("features").get<std::string>();
    labels_path = base / m.at("labels").get<std::string>();
    declared_classes = m.value("num_classes", 0);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInput, manifest_path.string() + ": " + e.what());
  }

  std::vector<Edge> edges;
  {
    auto in = open_in(edges_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string_view sv = trim(line);
      if (sv.empty()) continue;
      const auto tab = sv.find('\t');
      std::uint64_t src = 0, dst = 0;
      if (tab == std::string_view::npos || !parse_number(sv.substr(0, tab), src) ||
          !parse_number(sv.substr(tab + 1), dst)) {
        bad_line(edges_path, lineno, "expected 'src<TAB>dst'");
      }
      if (src >= n || dst >= n) {
        bad_line(edges_path, lineno, "node id outside [0, " + std::to_string(n) + ")");
      }
      edges.emplace_back(static_cast<NodeId>(src), static_cast<NodeId>(dst));
    }
  }
  d.graph = build_graph(edges, n, directed);

  {
    auto in = open_in(features_path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string_view sv = trim(line);
      if (sv.empty()) continue;
      std::vector<double> row;
      std::size_t start = 0;
      while (true) {
        const auto comma = sv.find(',', start);
        double value = 0.0;
        const auto field = sv.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        if (!parse_number(field, value)) bad_line(features_path, lineno, "malformed number '" + std::string(field) + "'");
        row.push_back(value);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      if (!rows.empty() && row.size() != rows.front().size()) {
        bad_line(features_path, lineno, "row has " + std::to_string(row.size()) + " columns, expected " +
                                            std::to_string(rows.front().size()));
      }
      rows.push_back(std::move(row));
    }
    if (rows.size() != n) {
      fail(ErrorKind::kInput, features_path.string() + ": " + std::to_string(rows.size()) +
                                  " feature rows but the manifest declares " + std::to_string(n) + " nodes");
    }
    const auto cols = rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size());
    d.features.resize(static_cast<Eigen::Index>(n), cols);
    for (std::size_t r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) d.features(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
    }
  }

  {
    auto in = open_in(labels_path);
    std::vector<int> labels;
    std::string line;
    std::size_t lineno = 0;
    int max_label = -1;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string_view sv = trim(line);
      if (sv.empty()) continue;
      int value = 0;
      if (!parse_number(sv, value) || value < 0) bad_line(labels_path, lineno, "expected a non-negative class id");
      if (declared_classes > 0 && value >= declared_classes) {
        bad_line(labels_path, lineno, "class id " + std::to_string(value) + " outside [0, " +
                                          std::to_string(declared_classes) + ")");
      }
      max_label = std::max(max_label, value);
      labels.push_back(value);
    }
    if (labels.size() != n) {
      fail(ErrorKind::kInput, labels_path.string() + ": " + std::to_string(labels.size()) +
                                  " labels but the manifest declares " + std::to_string(n) + " nodes");
    }
    d.labels = make_labels(std::move(labels), declared_classes > 0 ? declared_classes : max_label + 1);
  }
  if (opts.standardize_features) d.features = standardize_columns(d.features);
  return d;
}

void write_dataset(const fs::path& dir, const Dataset& data) {
  std::ostringstream edges;
  const bool directed = data.graph.directed();
  for (const auto& [src, dst] : data.graph.arcs()) {
    if (!directed && src > dst) continue;  // one line per undirected edge
    edges << src << '\t' << dst << '\n';
  }
  write_text(dir / "edges.tsv", edges.str());

  std::ostringstream feats;
  for (Eigen::Index r = 0; r < data.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
      if (c) feats << ',';
      feats << format_double(data.features(r, c));
    }
    feats << '\n';
  }
  write_text(dir / "features.csv", feats.str());

  std::ostringstream labels;
  for (int l : data.labels.labels) labels << l << '\n';
  write_text(dir / "labels.txt", labels.str());

  json m = {{"name", data.name},
            {"edges", "edges.tsv"},
            {"features", "features.csv"},
            {"labels", "labels.txt"},
            {"num_nodes", data.graph.num_nodes()},
            {"num_classes", data.labels.num_classes},
            {"directed", directed},
            {"split_seed", data.split_seed}};
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

json to_json(const CsbmSpec& s) {
  json groups = json::array();
  for (const Subgroup& g : s.subgroups) groups.push_back({{"p", g.p}, {"prior", g.prior}});
  return {{"mu1", s.mu1},
          {"mu2", s.mu2},
          {"subgroups", groups},
          {"nodes_per_class", s.nodes_per_class},
          {"avg_degree", s.avg_degree},
          {"seed", s.seed}};
}

CsbmSpec csbm_spec_from_json(const json& j) {
  CsbmSpec s;
  try {
    s.mu1 = j.at("mu1").get<std::vector<double>>();
    s.mu2 = j.at("mu2").get<std::vector<double>>();
    for (const json& g : j.at("subgroups")) s.subgroups.push_back({g.at("p").get<double>(), g.at("prior").get<double>()});
    s.nodes_per_class = j.value("nodes_per_class", s.nodes_per_class);
    s.avg_degree = j.value("avg_degree", s.avg_degree);
    s.seed = j.value("seed", s.seed);
  } catch (const json::exception& e) {
    fail(ErrorKind::kConfig, std::string("invalid CSBM spec: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace adascope
