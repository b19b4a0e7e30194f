#pragma once

// Quadratic-time metric and neighbor references, written without sorting so
// they share no code path with the library.

#include <cmath>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "protsent/common.hpp"

namespace brute {

inline double auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      den += 1.0;
      num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return num / den;
}

/// rank_i = #{x_j < x_i} + (#{x_j == x_i} + 1) / 2
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, eq = 0;
    for (double v : x) {
      less += v < x[i];
      eq += v == x[i];
    }
    r[i] = less + (eq + 1.0) / 2.0;
  }
  return r;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  std::set<int> classes(truth.begin(), truth.end());
  double sum = 0.0;
  for (int c : classes) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      tp += pred[i] == c && truth[i] == c;
      fp += pred[i] == c && truth[i] != c;
      fn += pred[i] != c && truth[i] == c;
    }
    sum += tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
  }
  return sum / static_cast<double>(classes.size());
}

/// k nearest by repeated linear scans for the minimum (ties to lower index).
inline std::vector<std::size_t> knn(const protsent::Matrix& train, const protsent::Matrix& q, Eigen::Index row,
                                    std::size_t k, bool cosine) {
  std::vector<bool> taken(static_cast<std::size_t>(train.rows()), false);
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < k; ++r) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (Eigen::Index i = 0; i < train.rows(); ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      const double d = cosine ? 1.0 - train.row(i).dot(q.row(row)) / (train.row(i).norm() * q.row(row).norm())
                              : (train.row(i) - q.row(row)).squaredNorm();
      if (d < best) {
        best = d;
        arg = static_cast<std::size_t>(i);
      }
    }
    taken[arg] = true;
    out.push_back(arg);
  }
  return out;
}

/// Recall@k where a query hits if any same-label item has fewer than k
/// items strictly more similar, counting ties before it at lower indices.
inline double recall_at_k(const protsent::Matrix& unit, const std::vector<std::string>& labels, std::size_t k) {
  double hits = 0, queries = 0;
  const std::size_t n = labels.size();
  for (std::size_t q = 0; q < n; ++q) {
    bool has_mate = false;
    for (std::size_t i = 0; i < n; ++i) has_mate |= i != q && labels[i] == labels[q];
    if (!has_mate) continue;
    queries += 1;
    bool hit = false;
    for (std::size_t i = 0; i < n && !hit; ++i) {
      if (i == q || labels[i] != labels[q]) continue;
      const double si = unit.row(static_cast<Eigen::Index>(q)).dot(unit.row(static_cast<Eigen::Index>(i)));
      std::size_t ahead = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == q || j == i) continue;
        const double sj = unit.row(static_cast<Eigen::Index>(q)).dot(unit.row(static_cast<Eigen::Index>(j)));
        ahead += sj > si || (sj == si && j < i);
      }
      hit = ahead < k;
    }
    hits += hit;
  }
  return queries == 0 ? 0.0 : hits / queries;
}

}  // namespace brute
