// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "lttd/topology.hpp"

using lttd::ConsensusMatrix;
using lttd::Topology;

namespace {

std::filesystem::path write_temp(const std::string& name,
                                 const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

void check_doubly_stochastic(const ConsensusMatrix& m, double tol) {
  for (std::size_t i = 0; i < m.n; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < m.n; ++j) {
      row += m.at(i, j);
      col += m.at(j, i);
    }
    CHECK(std::abs(row - 1.0) <= tol);
    CHECK(std::abs(col - 1.0) <= tol);
  }
}

}  // namespace

TEST_CASE("load_topology: strict directed ring keeps direction") {
  auto path = write_temp("ring3_strict.topo",
                         "silos 3\nstrict\n0 1\n1 2\n2 0\n");
  auto t = lttd::load_topology(path);
  CHECK(t.n_silos == 3);
  CHECK(t.strict);
  auto in0 = t.in_neighbors(0);
  REQUIRE(in0.size() == 1);
  CHECK(in0[0] == 2);
  CHECK_FALSE(t.symmetric());
  CHECK(t.strongly_connected());
}

TEST_CASE("load_topology: symmetric closure by default") {
  auto path = write_temp("ring3.topo", "# a comment\nsilos 3\n0 1\n1 2\n2 0\n");
  auto t = lttd::load_topology(path);
  CHECK(t.edges.size() == 6);
  auto in0 = t.in_neighbors(0);
  CHECK(in0.size() == 2);
}

TEST_CASE("load_topology: bundled files") {
  const std::filesystem::path repo = LTTD_REPO_DIR;
  auto gaia = lttd::load_topology(repo / "topologies" / "gaia.topo");
  CHECK(gaia.n_silos == 11);
  CHECK(gaia.symmetric());
  CHECK(gaia.strongly_connected());
  auto nws = lttd::load_topology(repo / "topologies" / "nws.topo");
  CHECK(nws.n_silos == 22);
  CHECK(nws.strongly_connected());
  auto exodus = lttd::load_topology(repo / "topologies" / "exodus.topo");
  CHECK(exodus.n_silos == 79);
  CHECK(exodus.strongly_connected());
}

TEST_CASE("load_topology: errors") {
  auto self_loop = write_temp("selfloop.topo", "silos 3\n2 2\n");
  CHECK_THROWS_AS(lttd::load_topology(self_loop), lttd::config_error);

  auto zero = write_temp("zero.topo", "silos 0\n");
  CHECK_THROWS_AS(lttd::load_topology(zero), lttd::config_error);

  auto garbage = write_temp("garbage.topo", "silos 3\n0 x\n");
  CHECK_THROWS_AS(lttd::load_topology(garbage), lttd::io_error);

  auto headerless = write_temp("headerless.topo", "0 1\n");
  CHECK_THROWS_AS(lttd::load_topology(headerless), lttd::io_error);

  auto out_of_range = write_temp("range.topo", "silos 2\n0 5\n");
  CHECK_THROWS_AS(lttd::load_topology(out_of_range), lttd::config_error);

  CHECK_THROWS_AS(lttd::load_topology("/nonexistent/nowhere.topo"),
                  lttd::io_error);
}

TEST_CASE("metropolis_weights") {
  SECTION("two silos, one edge pair") {
    auto t = lttd::make_complete(2);
    auto m = lttd::metropolis_weights(t);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) CHECK(m.at(i, j) == 0.5);
  }
  SECTION("complete graph is uniform") {
    for (std::size_t n : {3, 5, 8}) {
      auto m = lttd::metropolis_weights(lttd::make_complete(n));
      const double want = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          CHECK(std::abs(m.at(i, j) - want) <= 1e-15);
    }
  }
  SECTION("path graph is doubly stochastic") {
    auto m = lttd::metropolis_weights(lttd::make_path(3));
    check_doubly_stochastic(m, 1e-12);
  }
  SECTION("bundled topologies are doubly stochastic") {
    const std::filesystem::path repo = LTTD_REPO_DIR;
    for (const char* name : {"gaia.topo", "nws.topo", "exodus.topo"}) {
      auto t = lttd::load_topology(repo / "topologies" / name);
      check_doubly_stochastic(lttd::metropolis_weights(t), 1e-12);
    }
  }
  SECTION("asymmetric topology rejected") {
    auto path = write_temp("asym.topo", "silos 3\nstrict\n0 1\n1 2\n2 0\n");
    auto t = lttd::load_topology(path);
    CHECK_THROWS_AS(lttd::metropolis_weights(t), lttd::config_error);
  }
}

TEST_CASE("uniform_weights require a complete topology") {
  auto m = lttd::uniform_weights(lttd::make_complete(4));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(m.at(i, j) == 0.25);
  CHECK_THROWS_AS(lttd::uniform_weights(lttd::make_ring(5)),
                  lttd::config_error);
}

TEST_CASE("topology helpers") {
  auto ring = lttd::make_ring(3);
  CHECK(ring.in_degree(0) == 2);
  CHECK(ring.strongly_connected());

  auto path = lttd::make_path(4);
  CHECK(path.in_degree(0) == 1);
  CHECK(path.in_degree(1) == 2);
  CHECK(path.strongly_connected());

  // two disconnected pairs
  Topology two;
  two.n_silos = 4;
  two.edges = {{0, 1}, {1, 0}, {2, 3}, {3, 2}};
  CHECK_FALSE(two.strongly_connected());
}
