#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mvgib/error.hpp"
#include "mvgib/graph.hpp"
#include "mvgib/log.hpp"

namespace mvgib {

struct Dataset {
  std::vector<Graph> graphs;
  DatasetMeta meta;
};

namespace detail {

inline std::vector<long> parse_ints(std::string_view line, const std::string& file, long line_no) {
  std::vector<long> out;
  const char* p = line.data();
  const char* end = p + line.size();
  while (p < end) {
    while (p < end && (*p == ' ' || *p == '\t' || *p == ',' || *p == '\r')) ++p;
    if (p >= end) break;
    long v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc()) {
      throw IngestionError(file + ":" + std::to_string(line_no) + ": expected an integer");
    }
    out.push_back(v);
    p = next;
  }
  return out;
}

inline std::vector<std::vector<long>> read_int_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  std::vector<std::vector<long>> rows;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto vals = parse_ints(line, path.filename().string(), line_no);
    if (!vals.empty()) rows.push_back(std::move(vals));
  }
  return rows;
}

inline std::vector<long> read_column(const std::filesystem::path& path) {
  std::vector<long> col;
  for (auto& row : read_int_rows(path)) {
    if (row.size() != 1) {
      throw IngestionError(path.filename().string() + ": expected one value per line");
    }
    col.push_back(row[0]);
  }
  return col;
}

inline std::filesystem::path require(const std::filesystem::path& dir, const std::string& file) {
  auto p = dir / file;
  if (!std::filesystem::exists(p)) throw IngestionError("missing required file: " + p.string());
  return p;
}

}  // namespace detail

/// Reads a dataset in the TU benchmark text format from `root_dir/name/`
/// (or from `root_dir` itself when it already contains the files).
///
/// Graph labels are remapped to 0..C-1 in ascending order of the original
/// values. Node labels, when present, become one-hot features (also remapped
/// to contiguous ids); otherwise features are left empty.
inline Dataset load_tu_dataset(const std::filesystem::path& root_dir, const std::string& name) {
  namespace fs = std::filesystem;
  fs::path dir = root_dir / name;
  if (!fs::exists(dir / (name + "_A.txt")) && fs::exists(root_dir / (name + "_A.txt"))) {
    dir = root_dir;
  }

  const auto edges_raw = detail::read_int_rows(detail::require(dir, name + "_A.txt"));
  const auto indicator = detail::read_column(detail::require(dir, name + "_graph_indicator.txt"));
  const auto graph_labels = detail::read_column(detail::require(dir, name + "_graph_labels.txt"));

  std::vector<long> node_labels;
  const auto node_label_path = dir / (name + "_node_labels.txt");
  const bool has_node_labels = fs::exists(node_label_path);
  if (has_node_labels) {
    node_labels = detail::read_column(node_label_path);
    if (node_labels.size() != indicator.size()) {
      throw IngestionError(name + "_node_labels.txt has " + std::to_string(node_labels.size()) +
                           " lines, expected " + std::to_string(indicator.size()));
    }
  }

  const long total_nodes = static_cast<long>(indicator.size());
  const long graph_count = static_cast<long>(graph_labels.size());
  if (graph_count == 0) throw IngestionError(name + "_graph_labels.txt is empty");

  // Graph ids are 1-based and nodes of one graph are contiguous in the format,
  // but only the id mapping is relied on here.
  std::vector<int> local_index(total_nodes);
  std::vector<int> sizes(graph_count, 0);
  for (long v = 0; v < total_nodes; ++v) {
    const long gid = indicator[v];
    if (gid < 1 || gid > graph_count) {
      throw IngestionError(name + "_graph_indicator.txt: graph id " + std::to_string(gid) +
                           " out of range at node " + std::to_string(v + 1));
    }
    local_index[v] = sizes[gid - 1]++;
  }
  for (long g = 0; g < graph_count; ++g) {
    if (sizes[g] == 0) throw IngestionError("graph " + std::to_string(g + 1) + " has no nodes");
  }

  std::vector<std::vector<std::pair<int, int>>> pairs(graph_count);
  std::set<std::pair<long, long>> directed;
  for (std::size_t i = 0; i < edges_raw.size(); ++i) {
    const auto& row = edges_raw[i];
    if (row.size() != 2) {
      throw IngestionError(name + "_A.txt:" + std::to_string(i + 1) + ": expected 'row, col'");
    }
    const long a = row[0], b = row[1];
    if (a < 1 || b < 1 || a > total_nodes || b > total_nodes) {
      throw IngestionError(name + "_A.txt:" + std::to_string(i + 1) + ": dangling node index " +
                           std::to_string(a < 1 || a > total_nodes ? a : b));
    }
    const long ga = indicator[a - 1], gb = indicator[b - 1];
    if (ga != gb) {
      throw IngestionError(name + "_A.txt:" + std::to_string(i + 1) + ": edge joins two graphs");
    }
    pairs[ga - 1].emplace_back(local_index[a - 1], local_index[b - 1]);
    if (a != b) directed.emplace(a, b);
  }
  std::size_t missing_reverse = 0;
  for (const auto& [a, b] : directed) {
    if (!directed.count({b, a})) ++missing_reverse;
  }
  if (missing_reverse > 0) {
    log::warn(name + "_A.txt is not symmetric (" + std::to_string(missing_reverse) +
              " edges lack a reverse entry); symmetrizing");
  }

  std::vector<long> label_values(graph_labels.begin(), graph_labels.end());
  std::sort(label_values.begin(), label_values.end());
  label_values.erase(std::unique(label_values.begin(), label_values.end()), label_values.end());
  std::map<long, int> label_map;
  for (std::size_t c = 0; c < label_values.size(); ++c) label_map[label_values[c]] = static_cast<int>(c);

  std::map<long, int> node_label_map;
  if (has_node_labels) {
    std::set<long> distinct(node_labels.begin(), node_labels.end());
    int next = 0;
    for (long l : distinct) node_label_map[l] = next++;
  }
  const int node_feature_dim = static_cast<int>(node_label_map.size());

  std::vector<Matrix> feats(graph_count);
  for (long g = 0; g < graph_count; ++g) feats[g] = Matrix::Zero(sizes[g], node_feature_dim);
  if (has_node_labels) {
    for (long v = 0; v < total_nodes; ++v) {
      feats[indicator[v] - 1](local_index[v], node_label_map[node_labels[v]]) = 1.0;
    }
  }

  Dataset ds;
  ds.graphs.reserve(graph_count);
  for (long g = 0; g < graph_count; ++g) {
    ds.graphs.emplace_back(sizes[g], pairs[g], std::move(feats[g]), label_map[graph_labels[g]]);
  }
  ds.meta.name = name;
  ds.meta.graph_count = static_cast<int>(graph_count);
  ds.meta.num_classes = static_cast<int>(label_values.size());
  ds.meta.feature_dim = node_feature_dim;
  ds.meta.max_degree = max_degree(ds.graphs);
  ds.meta.original_labels.assign(label_values.begin(), label_values.end());
  return ds;
}

/// Writes graphs in the TU text format under `dir/name/`.
///
/// Node labels are written when every feature row is one-hot; the argmax
/// becomes the node label. Graph labels are written as stored.
inline void write_tu_dataset(const std::filesystem::path& dir, const std::string& name,
                             std::span<const Graph> graphs) {
  namespace fs = std::filesystem;
  const fs::path out = dir / name;
  fs::create_directories(out);
  std::ofstream a(out / (name + "_A.txt"));
  std::ofstream ind(out / (name + "_graph_indicator.txt"));
  std::ofstream gl(out / (name + "_graph_labels.txt"));
  if (!a || !ind || !gl) throw IngestionError("cannot write dataset files under " + out.string());

  bool one_hot = !graphs.empty();
  for (const auto& g : graphs) {
    const Matrix& f = g.features();
    if (f.cols() == 0) {
      one_hot = false;
      break;
    }
    for (int r = 0; r < f.rows() && one_hot; ++r) {
      int ones = 0;
      for (int c = 0; c < f.cols(); ++c) {
        if (f(r, c) == 1.0) ++ones;
        else if (f(r, c) != 0.0) one_hot = false;
      }
      if (ones != 1) one_hot = false;
    }
  }
  std::ofstream nl;
  if (one_hot) nl.open(out / (name + "_node_labels.txt"));

  long base = 0;
  for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
    const Graph& g = graphs[gi];
    // Both orientations, row-major order, as in the published files.
    std::vector<std::pair<int, int>> directed;
    for (const auto& e : g.edges()) {
      directed.emplace_back(e.u, e.v);
      directed.emplace_back(e.v, e.u);
    }
    std::sort(directed.begin(), directed.end());
    for (auto [u, v] : directed) a << (base + u + 1) << ", " << (base + v + 1) << '\n';
    for (int v = 0; v < g.node_count(); ++v) {
      ind << (gi + 1) << '\n';
      if (one_hot) {
        Eigen::Index col = 0;
        g.features().row(v).maxCoeff(&col);
        nl << col << '\n';
      }
    }
    gl << g.label() << '\n';
    base += g.node_count();
  }
}

}  // namespace mvgib
