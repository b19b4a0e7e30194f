#pragma once

// Brute-force references for the clustering tests.

#include <algorithm>
#include <string>
#include <vector>

#include "protsent/cluster.hpp"

namespace ref {

/// Exhaustive LCS via the textbook full table.
inline std::size_t lcs(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  return t[a.size()][b.size()];
}

/// O(n^2) greedy clustering straight from the definition: visit by length
/// descending then id, compare against every representative in creation
/// order, join the first that passes both thresholds.
inline std::vector<std::string> greedy(const std::vector<protsent::SequenceRecord>& recs, double min_id, double min_cov) {
  std::vector<std::size_t> order(recs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (recs[x].sequence.size() != recs[y].sequence.size()) return recs[x].sequence.size() > recs[y].sequence.size();
    return recs[x].id < recs[y].id;
  });
  std::vector<std::string> rep(recs.size());
  std::vector<std::size_t> reps;
  for (std::size_t i : order) {
    bool placed = false;
    for (std::size_t r : reps) {
      const auto ic = protsent::pairwise_identity(recs[i].sequence, recs[r].sequence);
      if (ic.identity >= min_id && ic.coverage >= min_cov) {
        rep[i] = recs[r].id;
        placed = true;
        break;
      }
    }
    if (!placed) {
      rep[i] = recs[i].id;
      reps.push_back(i);
    }
  }
  return rep;
}

}  // namespace ref
