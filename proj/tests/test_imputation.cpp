#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include "oracle_utils.hpp"
#include "pespec/imputation.hpp"

using namespace pespec;
using Catch::Approx;

namespace {

struct DenseLaw {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

DenseLaw dense_conditional(const LatticeSpec& spec, const SpectrumGrid& f,
                           const ObservationMask& mask,
                           const std::vector<double>& data) {
  auto Rv = oracle::direct_cov_from_spectrum(spec.z, f.values);
  Eigen::MatrixXd full = oracle::dense_circulant(spec.z, Rv);
  oracle::DenseBlocks blocks = oracle::dense_blocks(mask, full);
  Eigen::VectorXd u =
      Eigen::Map<const Eigen::VectorXd>(data.data(), data.size());
  Eigen::MatrixXd AinvB = blocks.A.llt().solve(blocks.B);
  return {AinvB.transpose() * u,
          blocks.C - blocks.B.transpose() * AinvB};
}

}  // namespace

TEST_CASE("conditional expectation matches the dense formula", "[imputation]") {
  LatticeSpec spec{{4, 6}, {4, 6}, 1.0};
  RngStream rng(401);
  SpectrumGrid f{spec, oracle::random_spectrum(spec.z, rng, 0.4, 3.0)};
  ObservationMask mask = oracle::random_mask(spec, 0.6, rng);
  std::vector<double> data(mask.n());
  for (double& v : data) v = rng.normal();

  DenseLaw law = dense_conditional(spec, f, mask, data);
  PcgConfig tight{1e-11, 2000};

  for (PrecondKind kind :
       {PrecondKind::inverse_spectrum, PrecondKind::vecchia}) {
    PrecondChoice pc{kind, 8};
    ImputationResult r = conditional_expectation(data, mask, f, pc, tight);
    REQUIRE(r.report.converged);
    REQUIRE(r.missing_values.size() == mask.w());
    for (std::size_t i = 0; i < mask.w(); ++i)
      REQUIRE(r.missing_values[i] == Approx(law.mean(i)).margin(1e-7));
    // observed cells pass through bit-identically
    for (std::size_t i = 0; i < mask.n(); ++i)
      REQUIRE(r.completed.values[mask.observed_cells[i]] == data[i]);
    for (std::size_t i = 0; i < mask.w(); ++i)
      REQUIRE(r.completed.values[mask.missing_cells[i]] ==
              r.missing_values[i]);
  }
}

TEST_CASE("conditional simulations follow the exact conditional law",
          "[imputation]") {
  LatticeSpec spec{{4, 4}, {4, 4}, 1.0};
  RngStream rng(402);
  SpectrumGrid f{spec, oracle::random_spectrum(spec.z, rng, 0.5, 2.0)};
  ObservationMask mask =
      embed_mask({1, 1, 0, 1, 1, 0, 1, 1, 1, 1, 1, 0, 1, 1, 1, 1}, spec);
  std::vector<double> data(mask.n());
  for (double& v : data) v = rng.normal();

  DenseLaw law = dense_conditional(spec, f, mask, data);
  const std::size_t w = mask.w();
  REQUIRE(w == 3);

  const int draws = 6000;
  PcgConfig tight{1e-10, 2000};
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(w);
  Eigen::MatrixXd second = Eigen::MatrixXd::Zero(w, w);
  for (int i = 0; i < draws; ++i) {
    RngStream sim_rng(777, static_cast<std::uint64_t>(i));
    ImputationResult r =
        conditional_simulation(data, mask, f, sim_rng, {}, tight);
    Eigen::VectorXd x = Eigen::Map<Eigen::VectorXd>(r.missing_values.data(), w);
    mean += x / draws;
    second += x * x.transpose() / draws;
  }
  Eigen::MatrixXd cov = second - mean * mean.transpose();

  for (std::size_t i = 0; i < w; ++i) {
    double se = std::sqrt(law.cov(i, i) / draws);
    REQUIRE(std::abs(mean(i) - law.mean(i)) < 5.0 * se);
  }
  for (std::size_t i = 0; i < w; ++i)
    for (std::size_t j = 0; j < w; ++j) {
      double scale = std::sqrt(law.cov(i, i) * law.cov(j, j));
      REQUIRE(std::abs(cov(i, j) - law.cov(i, j)) < 5.0 * 2.0 * scale /
                                                        std::sqrt(draws));
    }
}

TEST_CASE("simulations replay by stream", "[imputation]") {
  LatticeSpec spec{{4, 4}, {4, 4}, 1.0};
  RngStream rng(403);
  SpectrumGrid f{spec, oracle::random_spectrum(spec.z, rng, 0.5, 2.0)};
  ObservationMask mask = oracle::random_mask(spec, 0.7, rng);
  std::vector<double> data(mask.n());
  for (double& v : data) v = rng.normal();

  RngStream a(5, 1), b(5, 1), c(5, 2);
  auto ra = conditional_simulation(data, mask, f, a);
  auto rb = conditional_simulation(data, mask, f, b);
  auto rc = conditional_simulation(data, mask, f, c);
  REQUIRE(ra.missing_values == rb.missing_values);
  REQUIRE(ra.missing_values != rc.missing_values);
}

TEST_CASE("complete data passes through untouched", "[imputation]") {
  LatticeSpec spec{{3, 5}, {3, 5}, 1.0};
  RngStream rng(404);
  SpectrumGrid f{spec, oracle::random_spectrum(spec.z, rng, 0.5, 2.0)};
  ObservationMask mask = embed_mask(std::vector<std::uint8_t>(15, 1), spec);
  std::vector<double> data(15);
  for (double& v : data) v = rng.normal();

  ImputationResult e = conditional_expectation(data, mask, f);
  REQUIRE(e.missing_values.empty());
  REQUIRE(e.report.iterations == 0);
  REQUIRE(e.report.converged);
  REQUIRE(e.completed.values == data);

  RngStream sim_rng(1, 1);
  ImputationResult s = conditional_simulation(data, mask, f, sim_rng);
  REQUIRE(s.completed.values == data);
}

TEST_CASE("imputation error paths", "[imputation]") {
  LatticeSpec spec{{4, 4}, {4, 4}, 1.0};
  RngStream rng(405);
  SpectrumGrid f{spec, oracle::random_spectrum(spec.z, rng, 0.5, 2.0)};
  ObservationMask mask = oracle::random_mask(spec, 0.6, rng);

  std::vector<double> wrong(mask.n() + 1, 1.0);
  REQUIRE_THROWS_AS(conditional_expectation(wrong, mask, f),
                    std::invalid_argument);

  std::vector<double> data(mask.n(), 1.0);
  data[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(conditional_expectation(data, mask, f), numerical_error);

  data[0] = 1.0;
  PcgConfig starved{1e-14, 1};
  try {
    conditional_expectation(data, mask, f, {}, starved);
    FAIL("expected convergence_error");
  } catch (const convergence_error& e) {
    REQUIRE(e.iterations == 1);
    REQUIRE(e.relative_residual > 0.0);
  }
}

TEST_CASE("conditional sd is thread-count invariant and calibrated",
          "[imputation]") {
  LatticeSpec spec{{4, 6}, {4, 6}, 1.0};
  RngStream rng(406);
  SpectrumGrid f{spec, oracle::random_spectrum(spec.z, rng, 0.5, 2.5)};
  ObservationMask mask = oracle::random_mask(spec, 0.7, rng);
  std::vector<double> data(mask.n());
  for (double& v : data) v = rng.normal();

  std::vector<double> sd1 =
      conditional_sd(data, mask, f, 400, 99, 10, {}, {}, 1);
  std::vector<double> sd4 =
      conditional_sd(data, mask, f, 400, 99, 10, {}, {}, 4);
  REQUIRE(sd1 == sd4);

  DenseLaw law = dense_conditional(spec, f, mask, data);
  for (std::size_t i = 0; i < mask.w(); ++i) {
    REQUIRE(sd1[i] > 0.0);
    REQUIRE(sd1[i] == Approx(std::sqrt(law.cov(i, i))).epsilon(0.25));
  }

  ObservationMask full = embed_mask(std::vector<std::uint8_t>(24, 1), spec);
  std::vector<double> all(24, 0.5);
  REQUIRE(conditional_sd(all, full, f, 10, 1).empty());
  REQUIRE_THROWS_AS(conditional_sd(data, mask, f, 0, 1),
                    std::invalid_argument);
}
