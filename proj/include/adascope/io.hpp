#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adascope/csbm.hpp"
#include "adascope/graph.hpp"
#include "adascope/matrix.hpp"
#include "adascope/models.hpp"
#include "adascope/scope.hpp"

namespace adascope {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Checkpoints: <stem>.json lists every tensor (name, rows, cols, byte offset)
// and carries free-form metadata; <stem>.bin holds the tensors back to back as
// row-major little-endian float32.

struct NamedTensor {
  std::string name;
  Matrix value;
};

void write_checkpoint(const fs::path& stem, const json& meta, const std::vector<NamedTensor>& tensors);

struct Checkpoint {
  json meta;
  std::vector<NamedTensor> tensors;

  const Matrix& at(const std::string& name) const;
};

Checkpoint read_checkpoint(const fs::path& stem);

json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const json& j, const ModelSpec& defaults = {});

void save_classifier(const fs::path& stem, const NodeClassifier& model, const json& extra = {});
NodeClassifier load_classifier(const fs::path& stem);

void save_fusion(const fs::path& stem, const FusionParams& params, const json& extra = {});
FusionParams load_fusion(const fs::path& stem);

// ---------------------------------------------------------------------------
// Dataset format. A JSON manifest names three files relative to itself:
//   edges:    "src<TAB>dst" per line, node ids in [0, num_nodes)
//   features: comma-separated decimals, one row per node
//   labels:   one integer class id per line
// plus num_nodes, directed, split_seed and optionally num_classes.

struct Dataset {
  std::string name;
  Graph graph;
  Matrix features;
  LabelVector labels;
  std::uint64_t split_seed = 0;
};

struct IngestOptions {
  bool standardize_features = false;
};

Dataset ingest_dataset(const fs::path& manifest, const IngestOptions& opts = {});

/// Writes manifest.json, edges.tsv, features.csv and labels.txt into `dir`.
void write_dataset(const fs::path& dir, const Dataset& data);

json to_json(const CsbmSpec& spec);
CsbmSpec csbm_spec_from_json(const json& j);

json read_json(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace adascope
