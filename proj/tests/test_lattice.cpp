#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "pespec/lattice.hpp"

using namespace pespec;

TEST_CASE("row-major linearization, last dimension fastest", "[lattice]") {
  std::vector<int> dims{3, 4, 5};
  REQUIRE(cell_count(dims) == 60);
  REQUIRE(linear_index(dims, {0, 0, 0}) == 0);
  REQUIRE(linear_index(dims, {0, 0, 1}) == 1);
  REQUIRE(linear_index(dims, {0, 1, 0}) == 5);
  REQUIRE(linear_index(dims, {1, 0, 0}) == 20);
  REQUIRE(linear_index(dims, {2, 3, 4}) == 59);

  for (std::size_t i = 0; i < 60; ++i)
    REQUIRE(linear_index(dims, coord_at(dims, i)) == i);
}

TEST_CASE("next_coord walks the lattice in linear order", "[lattice]") {
  std::vector<int> dims{2, 3};
  std::vector<int> c(2, 0);
  std::size_t i = 0;
  do {
    REQUIRE(linear_index(dims, c) == i);
    ++i;
  } while (next_coord(dims, c));
  REQUIRE(i == 6);
}

TEST_CASE("reflection is an involution with the right fixed points",
          "[lattice]") {
  std::vector<int> dims{4, 6};
  for (std::size_t k = 0; k < 24; ++k)
    REQUIRE(reflect_index(dims, reflect_index(dims, k)) == k);
  REQUIRE(reflect_index(dims, 0) == 0);
  REQUIRE(reflect_index(dims, linear_index(dims, {1, 2})) ==
          linear_index(dims, {3, 4}));
  // Self-conjugate cells are those with every coordinate 0 or dims/2.
  std::set<std::size_t> fixed;
  for (std::size_t k = 0; k < 24; ++k)
    if (reflect_index(dims, k) == k) fixed.insert(k);
  REQUIRE(fixed == std::set<std::size_t>{linear_index(dims, {0, 0}),
                                         linear_index(dims, {0, 3}),
                                         linear_index(dims, {2, 0}),
                                         linear_index(dims, {2, 3})});
}

TEST_CASE("embedding dimensions round up per axis", "[lattice]") {
  REQUIRE(build_embedding({32, 32}, 34.0 / 32.0).z == std::vector<int>{34, 34});
  REQUIRE(build_embedding({32, 32}, 36.0 / 32.0).z == std::vector<int>{36, 36});
  REQUIRE(build_embedding({32, 32}, 1.0625).z == std::vector<int>{34, 34});
  REQUIRE(build_embedding({80, 80}, 1.1).z == std::vector<int>{88, 88});
  REQUIRE(build_embedding({500, 300}, 1.1).z == std::vector<int>{550, 330});
  REQUIRE(build_embedding({40, 40}, 1.1).z == std::vector<int>{44, 44});
  REQUIRE(build_embedding({10, 12}, 1.0).z == std::vector<int>{10, 12});
  REQUIRE(build_embedding({10}, 1.15).z == std::vector<int>{12});

  REQUIRE_THROWS_AS(build_embedding({32, 32}, 0.9), std::invalid_argument);
  REQUIRE_THROWS_AS(build_embedding({1, 5}, 1.2), std::invalid_argument);
  REQUIRE_THROWS_AS(build_embedding({}, 1.2), std::invalid_argument);
}

TEST_CASE("fourier frequencies are k_j / z_j", "[lattice]") {
  REQUIRE(frequency_at({4}, 3) == std::vector<double>{0.75});
  std::vector<int> dims{2, 5};
  std::vector<double> w = frequency_at(dims, linear_index(dims, {1, 2}));
  REQUIRE(w[0] == 0.5);
  REQUIRE(w[1] == Catch::Approx(0.4));
}

TEST_CASE("mask embedding places J_y in the low corner of J_z", "[lattice]") {
  LatticeSpec spec = build_embedding({2, 2}, 2.0);
  REQUIRE(spec.z == std::vector<int>{4, 4});
  ObservationMask mask = embed_mask({1, 1, 1, 1}, spec);
  REQUIRE(mask.n() == 4);
  REQUIRE(mask.w() == 12);
  REQUIRE(mask.observed_cells ==
          std::vector<std::size_t>{0, 1, 4, 5});
  for (std::size_t i = 0; i + 1 < mask.missing_cells.size(); ++i)
    REQUIRE(mask.missing_cells[i] < mask.missing_cells[i + 1]);

  ObservationMask partial = embed_mask({1, 0, 0, 1}, spec);
  REQUIRE(partial.observed_cells == std::vector<std::size_t>{0, 5});

  REQUIRE_THROWS_AS(embed_mask({1, 1, 1}, spec), std::invalid_argument);
}
