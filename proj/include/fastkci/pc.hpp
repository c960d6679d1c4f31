#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fastkci/data.hpp"
#include "fastkci/dgp.hpp"
#include "fastkci/errors.hpp"
#include "fastkci/fast_kci.hpp"
#include "fastkci/kci.hpp"
#include "fastkci/parallel.hpp"

namespace fastkci {

/// Undirected adjacency structure plus the separating sets found for
/// removed edges.
struct Skeleton {
  int num_nodes = 0;
  std::set<std::pair<int, int>> edges;  // pairs with first < second
  std::map<std::pair<int, int>, std::vector<int>> sepsets;

  bool has_edge(int i, int j) const {
    return edges.count({std::min(i, j), std::max(i, j)}) > 0;
  }
};

struct EdgeMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int true_positive = 0;
  int false_positive = 0;
  int false_negative = 0;
};

/// p-value of a CI test of columns i and j given the columns in cond.
using CiTestFn =
    std::function<double(const DataMatrix& data, int i, int j, const std::vector<int>& cond)>;

namespace detail {

/// Next size-k combination of indices into a pool, in ascending order.
inline bool next_combination(std::vector<int>& comb, int pool_size) {
  const int k = static_cast<int>(comb.size());
  for (int i = k - 1; i >= 0; --i) {
    if (comb[static_cast<std::size_t>(i)] < pool_size - (k - i)) {
      ++comb[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < k; ++j) {
        comb[static_cast<std::size_t>(j)] = comb[static_cast<std::size_t>(j - 1)] + 1;
      }
      return true;
    }
  }
  return false;
}

inline std::string describe_cond(const std::vector<int>& cond) {
  std::ostringstream oss;
  oss << "{";
  for (std::size_t i = 0; i < cond.size(); ++i) {
    if (i > 0) oss << ",";
    oss << cond[i];
  }
  oss << "}";
  return oss.str();
}

}  // namespace detail

/// Stable PC adjacency search. For each level l = 0..max_cond_size the
/// adjacency snapshot is fixed, every ordered adjacent pair (i, j) scans the
/// size-l subsets of adj(i) \ {j} in ascending index order, and removals are
/// applied at the level boundary. Pairs within a level may be evaluated
/// concurrently; the result is identical for any thread count.
inline Skeleton pc_skeleton(const DataMatrix& data, const CiTestFn& ci_test, double alpha,
                            int max_cond_size, int threads = 1) {
  const int m = static_cast<int>(data.cols());
  if (m < 2) throw ConfigError("pc_skeleton needs at least 2 variables");
  if (!(alpha > 0.0) || !(alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (max_cond_size < 0) throw ConfigError("max_cond_size must be nonnegative");

  std::vector<std::vector<bool>> adj(static_cast<std::size_t>(m),
                                     std::vector<bool>(static_cast<std::size_t>(m), true));
  for (int i = 0; i < m; ++i) adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = false;

  Skeleton skeleton;
  skeleton.num_nodes = m;

  struct Removal {
    int i = 0;
    int j = 0;
    bool found = false;
    std::vector<int> sepset;
  };

  for (int level = 0; level <= max_cond_size; ++level) {
    const auto snapshot = adj;
    std::vector<std::pair<int, int>> pairs;
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) {
        if (i == j || !snapshot[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
          continue;
        }
        int neighbours = 0;
        for (int k = 0; k < m; ++k) {
          if (k != j && snapshot[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]) {
            ++neighbours;
          }
        }
        if (neighbours >= level) pairs.emplace_back(i, j);
      }
    }
    if (pairs.empty()) break;

    std::vector<Removal> removals(pairs.size());
    parallel_for(pairs.size(), threads, [&](std::size_t t) {
      const auto [i, j] = pairs[t];
      std::vector<int> pool;
      for (int k = 0; k < m; ++k) {
        if (k != j && snapshot[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)]) {
          pool.push_back(k);
        }
      }
      std::vector<int> comb(static_cast<std::size_t>(level));
      for (int c = 0; c < level; ++c) comb[static_cast<std::size_t>(c)] = c;
      Removal rem;
      rem.i = i;
      rem.j = j;
      bool more = true;
      while (more) {
        std::vector<int> cond;
        cond.reserve(static_cast<std::size_t>(level));
        for (int c : comb) cond.push_back(pool[static_cast<std::size_t>(c)]);
        double p = 0.0;
        try {
          p = ci_test(data, i, j, cond);
        } catch (const std::exception& e) {
          throw Error("CI test failed for pair (" + std::to_string(i) + "," +
                      std::to_string(j) + ") given " + detail::describe_cond(cond) + ": " +
                      e.what());
        }
        if (p > alpha) {
          rem.found = true;
          rem.sepset = std::move(cond);
          break;
        }
        more = level > 0 && detail::next_combination(comb, static_cast<int>(pool.size()));
      }
      removals[t] = std::move(rem);
    });

    for (const auto& rem : removals) {
      if (!rem.found) continue;
      const auto key = std::make_pair(std::min(rem.i, rem.j), std::max(rem.i, rem.j));
      adj[static_cast<std::size_t>(rem.i)][static_cast<std::size_t>(rem.j)] = false;
      adj[static_cast<std::size_t>(rem.j)][static_cast<std::size_t>(rem.i)] = false;
      if (skeleton.sepsets.find(key) == skeleton.sepsets.end()) {
        skeleton.sepsets.emplace(key, rem.sepset);
      }
    }
  }

  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (adj[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]) {
        skeleton.edges.insert({i, j});
      }
    }
  }
  return skeleton;
}

/// Undirected-edge precision/recall/F1 against the ground-truth DAG.
inline EdgeMetrics score_edges(const Skeleton& estimated, const GroundTruthDag& truth) {
  if (estimated.num_nodes != truth.num_nodes) {
    throw NodeCountMismatch("skeleton and truth have different node counts");
  }
  std::set<std::pair<int, int>> true_edges;
  for (int i = 0; i < truth.num_nodes; ++i) {
    for (int j = i + 1; j < truth.num_nodes; ++j) {
      if (truth.adjacency(i, j) || truth.adjacency(j, i)) true_edges.insert({i, j});
    }
  }

  EdgeMetrics metrics;
  for (const auto& e : estimated.edges) {
    if (true_edges.count(e) > 0) {
      ++metrics.true_positive;
    } else {
      ++metrics.false_positive;
    }
  }
  for (const auto& e : true_edges) {
    if (estimated.edges.count(e) == 0) ++metrics.false_negative;
  }

  const int predicted = metrics.true_positive + metrics.false_positive;
  const int actual = metrics.true_positive + metrics.false_negative;
  metrics.precision =
      predicted > 0 ? static_cast<double>(metrics.true_positive) / predicted : 1.0;
  metrics.recall = actual > 0 ? static_cast<double>(metrics.true_positive) / actual : 1.0;
  const double denom = metrics.precision + metrics.recall;
  metrics.f1 = denom > 0.0 ? 2.0 * metrics.precision * metrics.recall / denom : 0.0;
  return metrics;
}

namespace detail {

inline std::uint64_t hash_cond(const std::vector<int>& cond) {
  std::uint64_t h = 0x636f6e6468617368ull;
  for (int c : cond) h = mix64(h ^ static_cast<std::uint64_t>(c + 1));
  return h;
}

/// Empty conditioning sets are mapped to a constant (all-zero) Z column;
/// the centered Z kernel is then zero, the ridge projection is the
/// identity and the test degenerates to an unconditional kernel
/// independence test.
inline DataMatrix cond_matrix(const DataMatrix& data, const std::vector<int>& cond) {
  if (cond.empty()) {
    return DataMatrix(Eigen::MatrixXd::Zero(data.rows(), 1));
  }
  return DataMatrix(take_cols(data.values(), cond));
}

}  // namespace detail

/// KCI as a PC oracle: the per-query seed is derived from the pair and the
/// conditioning set, so results do not depend on the order in which the PC
/// search issues tests.
inline CiTestFn make_kci_ci_test(const KciConfig& cfg) {
  return [cfg](const DataMatrix& data, int i, int j, const std::vector<int>& cond) {
    KciConfig query = cfg;
    query.seed = derive_seed(cfg.seed, stream_tag::ci_query, static_cast<std::uint64_t>(i),
                             static_cast<std::uint64_t>(j), detail::hash_cond(cond));
    const DataMatrix x(data.values().col(i));
    const DataMatrix y(data.values().col(j));
    return kci_test(x, y, detail::cond_matrix(data, cond), query).p_value;
  };
}

inline CiTestFn make_fastkci_ci_test(const FastKciConfig& cfg) {
  return [cfg](const DataMatrix& data, int i, int j, const std::vector<int>& cond) {
    FastKciConfig query = cfg;
    query.inner.seed =
        derive_seed(cfg.inner.seed, stream_tag::ci_query, static_cast<std::uint64_t>(i),
                    static_cast<std::uint64_t>(j), detail::hash_cond(cond));
    const DataMatrix x(data.values().col(i));
    const DataMatrix y(data.values().col(j));
    return fastkci_test(x, y, detail::cond_matrix(data, cond), query).p_value;
  };
}

}  // namespace fastkci
