// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0
//
// DAG view of the residual stream. Sources are the embedding and every
// branch output; destinations are every branch input plus the readout. An
// edge (s, d) exists iff s <= d under the indexing described in
// transformer.hpp, giving (2L+1)(L+1) edges. Edge ids run row-major over
// (source, destination).

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace csc {

enum class NodeKind { embedding, attention, ffn, readout };

struct GraphNode {
  NodeKind kind;
  std::size_t layer;  // 1-based; 0 for embedding and readout
  std::string name;
};

struct Edge {
  std::size_t id;
  std::size_t source;
  std::size_t destination;
};

class CircuitGraph {
 public:
  std::size_t n_layers() const { return n_layers_; }
  std::size_t n_sources() const { return sources_.size(); }
  std::size_t n_destinations() const { return destinations_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  const GraphNode& source(std::size_t s) const { return sources_.at(s); }
  const GraphNode& destination(std::size_t d) const { return destinations_.at(d); }
  std::span<const Edge> edges() const { return edges_; }
  const Edge& edge(std::size_t id) const { return edges_.at(id); }

  bool is_valid(std::size_t source, std::size_t destination) const {
    return source < n_sources() && destination < n_destinations() && source <= destination;
  }
  // Throws RangeError for a pair that is not an edge.
  std::size_t edge_index(std::size_t source, std::size_t destination) const;
  // Row-major n_sources x n_destinations mask.
  std::vector<bool> mask() const;

  // Node indices by role; `layer` is 1-based.
  static std::size_t embedding_source() { return 0; }
  static std::size_t attention_source(std::size_t layer) { return 2 * layer - 1; }
  static std::size_t ffn_source(std::size_t layer) { return 2 * layer; }
  static std::size_t attention_input(std::size_t layer) { return 2 * layer - 2; }
  static std::size_t ffn_input(std::size_t layer) { return 2 * layer - 1; }
  std::size_t readout_input() const { return 2 * n_layers_; }

  // One "source<TAB>destination<TAB>edge_id" line per edge.
  std::string dump() const;

  // Entries of a row-major n_sources x n_destinations matrix at valid
  // positions, in edge-id order.
  std::vector<double> valid_entries(std::span<const double> matrix) const;

 private:
  friend CircuitGraph build_graph(std::size_t n_layers);

  std::size_t n_layers_ = 0;
  std::vector<GraphNode> sources_;
  std::vector<GraphNode> destinations_;
  std::vector<Edge> edges_;
  std::vector<std::size_t> id_of_;  // row-major; npos for invalid
};

// Throws ConfigError when n_layers < 1.
CircuitGraph build_graph(std::size_t n_layers);

}  // namespace csc
