// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lttd/errors.hpp"

namespace lttd {

// Directed silo graph. Self-membership is implicit in the averaging rule,
// so self-loops are rejected. File format, line oriented:
//
//   # comment
//   silos N
//   strict            (optional: keep edges directed as written)
//   src dst           (one directed edge per line)
//
// Without `strict` the loader applies the symmetric closure, which the
// Metropolis construction needs.

struct Topology {
  std::size_t n_silos = 0;
  std::set<std::pair<std::size_t, std::size_t>> edges;  // src -> dst
  std::string name;
  bool strict = false;

  std::vector<std::size_t> in_neighbors(std::size_t silo) const {
    std::vector<std::size_t> out;
    for (const auto& [src, dst] : edges)
      if (dst == silo) out.push_back(src);
    return out;
  }

  std::size_t in_degree(std::size_t silo) const {
    std::size_t n = 0;
    for (const auto& [src, dst] : edges)
      if (dst == silo) ++n;
    return n;
  }

  bool symmetric() const {
    for (const auto& [src, dst] : edges)
      if (!edges.count({dst, src})) return false;
    return true;
  }

  bool strongly_connected() const {
    if (n_silos == 0) return false;
    auto reaches_all = [&](bool reversed) {
      std::vector<char> seen(n_silos, 0);
      std::deque<std::size_t> queue{0};
      seen[0] = 1;
      std::size_t count = 1;
      while (!queue.empty()) {
        const std::size_t at = queue.front();
        queue.pop_front();
        for (const auto& [src, dst] : edges) {
          const std::size_t from = reversed ? dst : src;
          const std::size_t to = reversed ? src : dst;
          if (from == at && !seen[to]) {
            seen[to] = 1;
            ++count;
            queue.push_back(to);
          }
        }
      }
      return count == n_silos;
    };
    return reaches_all(false) && reaches_all(true);
  }

  void validate() const {
    if (n_silos == 0) throw config_error("Topology: silo count is zero");
    for (const auto& [src, dst] : edges) {
      if (src == dst)
        throw config_error("Topology: self-loop at silo " +
                           std::to_string(src));
      if (src >= n_silos || dst >= n_silos)
        throw config_error("Topology: edge endpoint out of range");
    }
  }
};

inline Topology load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw io_error("topology: cannot open " + path.string());
  Topology t;
  t.name = path.stem().string();
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;  // blank or comment-only
    if (first == "silos") {
      long long n = -1;
      if (!(ls >> n) || n < 0)
        throw io_error("topology: bad silos header at line " +
                       std::to_string(lineno));
      t.n_silos = static_cast<std::size_t>(n);
      have_header = true;
    } else if (first == "strict") {
      t.strict = true;
    } else {
      if (!have_header)
        throw io_error("topology: edge before silos header at line " +
                       std::to_string(lineno));
      long long src = 0, dst = 0;
      std::istringstream es(line);
      if (!(es >> src >> dst) || src < 0 || dst < 0)
        throw io_error("topology: bad edge at line " + std::to_string(lineno));
      t.edges.emplace(static_cast<std::size_t>(src),
                      static_cast<std::size_t>(dst));
    }
  }
  if (!have_header) throw io_error("topology: missing silos header");
  if (!t.strict) {
    // symmetric closure
    std::set<std::pair<std::size_t, std::size_t>> closed = t.edges;
    for (const auto& [src, dst] : t.edges) closed.emplace(dst, src);
    t.edges = std::move(closed);
  }
  t.validate();
  return t;
}

inline Topology make_ring(std::size_t n, std::string name = "ring") {
  Topology t;
  t.n_silos = n;
  t.name = std::move(name);
  for (std::size_t i = 0; i < n; ++i) {
    t.edges.emplace(i, (i + 1) % n);
    t.edges.emplace((i + 1) % n, i);
  }
  t.validate();
  return t;
}

inline Topology make_complete(std::size_t n, std::string name = "complete") {
  Topology t;
  t.n_silos = n;
  t.name = std::move(name);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) t.edges.emplace(i, j);
  t.validate();
  return t;
}

inline Topology make_path(std::size_t n, std::string name = "path") {
  Topology t;
  t.n_silos = n;
  t.name = std::move(name);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    t.edges.emplace(i, i + 1);
    t.edges.emplace(i + 1, i);
  }
  t.validate();
  return t;
}

struct ConsensusMatrix {
  std::size_t n = 0;
  std::vector<double> a;  // row-major n x n

  double at(std::size_t i, std::size_t j) const { return a[i * n + j]; }
  double& at(std::size_t i, std::size_t j) { return a[i * n + j]; }
};

/// Metropolis-Hastings mixing weights on a symmetric topology:
///   a[i][j] = 1 / (1 + max(deg_i, deg_j)) for neighbors,
///   a[i][i] = 1 - sum of the off-diagonal row.
/// Doubly stochastic by construction.
inline ConsensusMatrix metropolis_weights(const Topology& t) {
  t.validate();
  if (!t.symmetric())
    throw config_error(
        "metropolis_weights: topology is not symmetric (strict file without "
        "closure?)");
  ConsensusMatrix m;
  m.n = t.n_silos;
  m.a.assign(m.n * m.n, 0.0);
  std::vector<std::size_t> deg(t.n_silos, 0);
  for (const auto& [src, dst] : t.edges) ++deg[dst];
  for (const auto& [src, dst] : t.edges)
    m.at(dst, src) =
        1.0 / (1.0 + static_cast<double>(std::max(deg[src], deg[dst])));
  for (std::size_t i = 0; i < m.n; ++i) {
    double off = 0.0;
    for (std::size_t j = 0; j < m.n; ++j)
      if (j != i) off += m.at(i, j);
    m.at(i, i) = 1.0 - off;
  }
  return m;
}

/// Uniform weights 1/n. Only meaningful on a complete topology, where the
/// mixing step becomes the plain mean; rejected elsewhere because entries
/// must vanish outside the neighbor pattern.
inline ConsensusMatrix uniform_weights(const Topology& t) {
  t.validate();
  if (t.edges.size() != t.n_silos * (t.n_silos - 1))
    throw config_error("uniform_weights: topology must be complete");
  ConsensusMatrix m;
  m.n = t.n_silos;
  m.a.assign(m.n * m.n, 1.0 / static_cast<double>(m.n));
  return m;
}

}  // namespace lttd
