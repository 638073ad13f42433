// Copyright 2026 The CircuitScope Authors
// SPDX-License-Identifier: Apache-2.0

#include "csc/circuit_graph.hpp"

#include <limits>
#include <sstream>

#include "csc/error.hpp"

namespace csc {

namespace {
constexpr std::size_t kNoEdge = std::numeric_limits<std::size_t>::max();
}  // namespace

CircuitGraph build_graph(std::size_t n_layers) {
  if (n_layers < 1) throw ConfigError("build_graph: need at least one layer");
  CircuitGraph g;
  g.n_layers_ = n_layers;
  g.sources_.push_back({NodeKind::embedding, 0, "H0"});
  for (std::size_t l = 1; l <= n_layers; ++l) {
    g.sources_.push_back({NodeKind::attention, l, "A" + std::to_string(l)});
    g.sources_.push_back({NodeKind::ffn, l, "F" + std::to_string(l)});
    g.destinations_.push_back({NodeKind::attention, l, "A" + std::to_string(l) + ".in"});
    g.destinations_.push_back({NodeKind::ffn, l, "F" + std::to_string(l) + ".in"});
  }
  g.destinations_.push_back({NodeKind::readout, 0, "readout"});

  const std::size_t n_o = g.sources_.size();
  const std::size_t n_i = g.destinations_.size();
  g.id_of_.assign(n_o * n_i, kNoEdge);
  for (std::size_t s = 0; s < n_o; ++s) {
    for (std::size_t d = s; d < n_i; ++d) {
      g.id_of_[s * n_i + d] = g.edges_.size();
      g.edges_.push_back({g.edges_.size(), s, d});
    }
  }
  return g;
}

std::size_t CircuitGraph::edge_index(std::size_t source, std::size_t destination) const {
  if (!is_valid(source, destination)) {
    const std::string s = source < n_sources() ? sources_[source].name : std::to_string(source);
    const std::string d = destination < n_destinations() ? destinations_[destination].name : std::to_string(destination);
    throw RangeError("edge_index: (" + s + ", " + d + ") is not an edge");
  }
  return id_of_[source * n_destinations() + destination];
}

std::vector<bool> CircuitGraph::mask() const {
  std::vector<bool> m(id_of_.size());
  for (std::size_t i = 0; i < id_of_.size(); ++i) m[i] = id_of_[i] != kNoEdge;
  return m;
}

std::string CircuitGraph::dump() const {
  std::ostringstream os;
  for (const Edge& e : edges_) {
    os << sources_[e.source].name << '\t' << destinations_[e.destination].name << '\t' << e.id << '\n';
  }
  return os.str();
}

std::vector<double> CircuitGraph::valid_entries(std::span<const double> matrix) const {
  if (matrix.size() != n_sources() * n_destinations()) {
    throw DimensionError("valid_entries: matrix has " + std::to_string(matrix.size()) + " entries, graph needs " +
                         std::to_string(n_sources() * n_destinations()));
  }
  std::vector<double> out;
  out.reserve(edges_.size());
  for (const Edge& e : edges_) out.push_back(matrix[e.source * n_destinations() + e.destination]);
  return out;
}

}  // namespace csc
