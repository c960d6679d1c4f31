#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fastkci/dgp.hpp"
#include "fastkci/fast_kci.hpp"
#include "test_support.hpp"

using namespace fastkci;
using test_support::random_matrix;

namespace {

CiDataset small_dataset(Eigen::Index n, std::uint64_t seed) {
  CoverageSpec spec;
  spec.n = n;
  spec.D = 2;
  spec.V_true = 2;
  RngEngine rng = make_engine(seed);
  return gen_coverage(spec, rng);
}

double skewness(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (double x : xs) {
    const double d = x - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  return m3 / std::pow(m2, 1.5);
}

}  // namespace

TEST_CASE("local_block_test on the full sample equals the KCI pipeline") {
  const auto ds = small_dataset(80, 1);
  KciConfig cfg;
  cfg.null_samples_B = 300;
  cfg.seed = 9;

  RngEngine rng = make_engine(derive_seed(cfg.seed, stream_tag::null_draws, 0, 0));
  const LocalTestResult local = local_block_test(ds.x, ds.y, ds.z, cfg, rng);
  const TestOutcome whole = kci_test(ds.x, ds.y, ds.z, cfg);
  CHECK(local.statistic == whole.statistic);
  REQUIRE(local.null_samples.size() == whole.null_samples.size());
  CHECK(std::equal(local.null_samples.begin(), local.null_samples.end(),
                   whole.null_samples.begin()));
}

TEST_CASE("local_block_test vanishes for constant X") {
  const auto ds = small_dataset(40, 2);
  const DataMatrix constant_x(Eigen::MatrixXd::Constant(40, 1, 2.5));
  KciConfig cfg;
  cfg.null_samples_B = 100;
  RngEngine rng = make_engine(3);
  const LocalTestResult local = local_block_test(constant_x, ds.y, ds.z, cfg, rng);
  CHECK(std::abs(local.statistic) <= 1e-10);

  RngEngine rng2 = make_engine(3);
  CHECK_THROWS_AS(local_block_test(DataMatrix(ds.x.values().topRows(5)),
                                   DataMatrix(ds.y.values().topRows(5)),
                                   DataMatrix(ds.z.values().topRows(5)), cfg, rng2),
                  TooFewSamples);
}

TEST_CASE("disjoint block statistics reproduce the block-diagonal trace") {
  const Eigen::Index n = 60;
  const auto ds = small_dataset(n, 4);
  const double lambda = 1e-3;

  std::vector<std::vector<int>> blocks(3);
  for (int i = 0; i < n; ++i) blocks[static_cast<std::size_t>(i % 3)].push_back(i);

  double block_trace_sum = 0.0;
  Eigen::MatrixXd bd_x = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd bd_y = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index offset = 0;
  for (const auto& idx : blocks) {
    const auto rk = detail::residual_kernels(DataMatrix(take_rows(ds.x.values(), idx)),
                                             DataMatrix(take_rows(ds.y.values(), idx)),
                                             DataMatrix(take_rows(ds.z.values(), idx)), lambda);
    const Eigen::Index nv = rk.kx.entries.rows();
    block_trace_sum += (rk.kx.entries.array() * rk.ky.entries.array()).sum();
    bd_x.block(offset, offset, nv, nv) = rk.kx.entries;
    bd_y.block(offset, offset, nv, nv) = rk.ky.entries;
    offset += nv;
  }
  const double oracle = (bd_x * bd_y).trace();
  CHECK(block_trace_sum == Catch::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("run_partition_replicate with V=1 is a whole-sample KCI run") {
  const auto ds = small_dataset(70, 5);
  FastKciConfig cfg;
  cfg.V = 1;
  cfg.J = 1;
  cfg.inner.null_samples_B = 200;
  cfg.inner.seed = 31;

  RngEngine rng = make_engine(derive_seed(cfg.inner.seed, stream_tag::partition, 0));
  const PartitionResult rep = run_partition_replicate(ds.x, ds.y, ds.z, cfg, 0, rng);
  CHECK(rep.V_effective == 1);
  CHECK(rep.cluster_sizes == std::vector<int>{70});

  const TestOutcome whole = kci_test(ds.x, ds.y, ds.z, cfg.inner);
  CHECK(rep.statistic_Tj == whole.statistic);
  CHECK(std::equal(rep.null_samples.begin(), rep.null_samples.end(),
                   whole.null_samples.begin()));
}

TEST_CASE("aggregated null samples stay nonnegative") {
  const auto ds = small_dataset(90, 6);
  FastKciConfig cfg;
  cfg.V = 3;
  cfg.J = 2;
  cfg.inner.null_samples_B = 150;
  cfg.inner.seed = 8;
  RngEngine rng = make_engine(derive_seed(cfg.inner.seed, stream_tag::partition, 0));
  const PartitionResult rep = run_partition_replicate(ds.x, ds.y, ds.z, cfg, 0, rng);
  for (double t : rep.null_samples) CHECK(t >= 0.0);
  CHECK(rep.statistic_Tj >= -1e-10);
}

TEST_CASE("importance_weights closed forms") {
  const auto equal = importance_weights({3.0, 3.0, 3.0, 3.0});
  for (double w : equal) CHECK(w == Catch::Approx(0.25).epsilon(1e-14));
  CHECK(std::accumulate(equal.begin(), equal.end(), 0.0) == Catch::Approx(1.0).margin(1e-12));

  const auto saturated = importance_weights({0.0, 100.0, -5.0});
  CHECK(saturated[1] > 1.0 - 1e-10);

  const auto base = importance_weights({0.2, -1.4, 2.2});
  const auto shifted = importance_weights({0.2 + 55.0, -1.4 + 55.0, 2.2 + 55.0});
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK(std::abs(base[i] - shifted[i]) <= 1e-14);
  }

  CHECK_THROWS_AS(importance_weights({1.0, std::nan("")}), NonFiniteLogWeight);
  CHECK_THROWS_AS(importance_weights({}), ConfigError);
}

TEST_CASE("fastkci_test with V=1, J=1 matches kci_test") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ds = small_dataset(60, 100 + seed);
    FastKciConfig cfg;
    cfg.V = 1;
    cfg.J = 1;
    cfg.inner.null_samples_B = 400;
    cfg.inner.seed = 500 + seed;

    const TestOutcome fast = fastkci_test(ds.x, ds.y, ds.z, cfg);
    const TestOutcome classic = kci_test(ds.x, ds.y, ds.z, cfg.inner);
    CHECK(std::abs(fast.statistic - classic.statistic) <=
          1e-10 * std::max(1.0, std::abs(classic.statistic)));
    CHECK(fast.p_value == classic.p_value);
  }
}

TEST_CASE("duplicated replicates aggregate to the single-replicate result") {
  const auto ds = small_dataset(80, 7);
  FastKciConfig cfg;
  cfg.V = 2;
  cfg.J = 1;
  cfg.inner.null_samples_B = 200;
  cfg.inner.seed = 77;

  auto make_rep = [&] {
    RngEngine rng = make_engine(derive_seed(cfg.inner.seed, stream_tag::partition, 0));
    return run_partition_replicate(ds.x, ds.y, ds.z, cfg, 0, rng);
  };
  const PartitionResult a = make_rep();
  const PartitionResult b = make_rep();
  const auto weights = importance_weights(
      {a.log_weight_unnormalized, b.log_weight_unnormalized});

  const double combined_stat = weights[0] * a.statistic_Tj + weights[1] * b.statistic_Tj;
  CHECK(combined_stat == a.statistic_Tj);

  auto tail = [&](const PartitionResult& r, double ref) {
    std::size_t count = 0;
    for (double t : r.null_samples) {
      if (t >= ref) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(r.null_samples.size());
  };
  const double combined_p =
      weights[0] * tail(a, combined_stat) + weights[1] * tail(b, combined_stat);
  const TestOutcome single = fastkci_test(ds.x, ds.y, ds.z, cfg);
  CHECK(combined_p == single.p_value);
}

TEST_CASE("fastkci statistic is a convex combination of replicate statistics") {
  const auto ds = small_dataset(120, 8);
  FastKciConfig cfg;
  cfg.V = 3;
  cfg.J = 6;
  cfg.inner.null_samples_B = 150;
  cfg.inner.seed = 21;

  std::vector<double> stats;
  for (int j = 0; j < cfg.J; ++j) {
    RngEngine rng = make_engine(derive_seed(cfg.inner.seed, stream_tag::partition, j));
    stats.push_back(run_partition_replicate(ds.x, ds.y, ds.z, cfg, j, rng).statistic_Tj);
  }
  const TestOutcome out = fastkci_test(ds.x, ds.y, ds.z, cfg);
  CHECK(out.statistic >= *std::min_element(stats.begin(), stats.end()) - 1e-12);
  CHECK(out.statistic <= *std::max_element(stats.begin(), stats.end()) + 1e-12);
  CHECK(out.p_value >= 0.0);
  CHECK(out.p_value <= 1.0);
}

TEST_CASE("fastkci_test is bitwise invariant to the thread cap") {
  const auto ds = small_dataset(150, 9);
  FastKciConfig base;
  base.V = 3;
  base.J = 8;
  base.inner.null_samples_B = 150;
  base.inner.seed = 4242;

  std::vector<TestOutcome> outcomes;
  for (int cap : {1, 2, 8}) {
    FastKciConfig cfg = base;
    cfg.max_parallel = cap;
    outcomes.push_back(fastkci_test(ds.x, ds.y, ds.z, cfg));
  }
  for (std::size_t i = 1; i < outcomes.size(); ++i) {
    CHECK(outcomes[i].statistic == outcomes[0].statistic);
    CHECK(outcomes[i].p_value == outcomes[0].p_value);
    CHECK(std::equal(outcomes[i].null_samples.begin(), outcomes[i].null_samples.end(),
                     outcomes[0].null_samples.begin()));
  }
}

TEST_CASE("pooled weighted null is right skewed with nonnegative support") {
  const auto ds = small_dataset(120, 10);
  FastKciConfig cfg;
  cfg.V = 2;
  cfg.J = 4;
  cfg.inner.null_samples_B = 400;
  cfg.inner.seed = 11;
  const TestOutcome out = fastkci_test(ds.x, ds.y, ds.z, cfg);
  CHECK(*std::min_element(out.null_samples.begin(), out.null_samples.end()) >= 0.0);
  CHECK(skewness(out.null_samples) > 0.0);
}

TEST_CASE("per-partition p-value aggregation stays in range") {
  const auto ds = small_dataset(100, 12);
  FastKciConfig cfg;
  cfg.V = 2;
  cfg.J = 4;
  cfg.inner.null_samples_B = 200;
  cfg.inner.seed = 5;
  cfg.aggregation = NullAggregation::PerPartitionPValues;
  const TestOutcome out = fastkci_test(ds.x, ds.y, ds.z, cfg);
  CHECK(out.p_value >= 0.0);
  CHECK(out.p_value <= 1.0);
}

TEST_CASE("fastkci_test input validation") {
  const auto ds = small_dataset(50, 13);
  FastKciConfig cfg;
  cfg.V = 10;  // needs 100 samples
  CHECK_THROWS_AS(fastkci_test(ds.x, ds.y, ds.z, cfg), TooFewSamples);

  FastKciConfig bad;
  bad.V = 0;
  CHECK_THROWS_AS(fastkci_test(ds.x, ds.y, ds.z, bad), ConfigError);
  bad.V = 2;
  bad.J = 0;
  CHECK_THROWS_AS(fastkci_test(ds.x, ds.y, ds.z, bad), ConfigError);
}

TEST_CASE("fastkci_test is calibrated on mixture-confounded data") {
  // n = 1200, D = 2, V_true = 3 conditional-independence data; V = 3 keeps
  // blocks comfortably above the n/V >~ 100 rule of thumb
  const int seeds = 200;
  int rejections = 0;
  for (int s = 0; s < seeds; ++s) {
    CoverageSpec spec;
    spec.n = 1200;
    spec.D = 2;
    spec.V_true = 3;
    spec.seed = 600000 + static_cast<std::uint64_t>(s);
    RngEngine rng = make_engine(spec.seed);
    const CiDataset ds = gen_coverage(spec, rng);

    FastKciConfig cfg;
    cfg.V = 3;
    cfg.J = 16;
    cfg.inner.seed = static_cast<std::uint64_t>(s);
    cfg.max_parallel = 1;
    if (fastkci_test(ds.x, ds.y, ds.z, cfg).p_value <= 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / seeds;
  CHECK(rate >= 0.02);
  CHECK(rate <= 0.10);
}
