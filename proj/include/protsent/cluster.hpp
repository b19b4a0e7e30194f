#pragma once

// Greedy identity clustering, cross-family filtering, train/test
// decontamination and two-stage cluster composition.

#include <algorithm>
#include <map>
#include <numeric>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "protsent/common.hpp"
#include "protsent/seqio.hpp"

namespace protsent {

struct IdentityCoverage {
  double identity = 0.0;
  double coverage = 0.0;
};

/// Length of the longest common subsequence, i.e. the match count of an
/// optimal global alignment with unit match score and free mismatches/gaps.
inline std::size_t lcs_length(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::uint32_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (char ca : a) {
    cur[0] = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      cur[j + 1] = ca == b[j] ? prev[j] + 1 : std::max(prev[j + 1], cur[j]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// identity = matches / min(|a|, |b|); coverage = span (first to last matched
/// residue) of the shorter sequence over its length, using a canonical
/// traceback that prefers matches, then gaps in the shorter sequence.
/// When lengths are equal `a` plays the shorter role.
inline IdentityCoverage pairwise_identity(std::string_view a, std::string_view b) {
  if (a.empty() || b.empty()) throw Error("pairwise_identity: empty sequence");
  const bool swap_ab = b.size() < a.size();
  std::string_view s = swap_ab ? b : a;  // shorter
  std::string_view t = swap_ab ? a : b;
  const std::size_t n = s.size(), m = t.size();
  std::vector<std::uint32_t> dp((n + 1) * (m + 1), 0);
  auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return dp[i * (m + 1) + j]; };
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      at(i, j) = s[i - 1] == t[j - 1] ? at(i - 1, j - 1) + 1 : std::max(at(i - 1, j), at(i, j - 1));
    }
  }
  const std::uint32_t matches = at(n, m);
  IdentityCoverage out;
  out.identity = static_cast<double>(matches) / static_cast<double>(n);
  if (matches == 0) return out;

  std::size_t i = n, j = m;
  std::size_t first = n, last = 0;
  bool any = false;
  while (i > 0 && j > 0) {
    if (s[i - 1] == t[j - 1] && at(i, j) == at(i - 1, j - 1) + 1) {
      if (!any) last = i - 1;
      any = true;
      first = i - 1;
      --i;
      --j;
    } else if (at(i, j - 1) >= at(i - 1, j)) {
      --j;
    } else {
      --i;
    }
  }
  out.coverage = static_cast<double>(last - first + 1) / static_cast<double>(n);
  return out;
}

struct ClusterAssignment {
  std::string member_id;
  std::string rep_id;
  double identity = 1.0;
  double coverage = 1.0;

  bool operator==(const ClusterAssignment&) const = default;
};

enum class Prefilter { automatic, on, off };

struct ClusterOptions {
  double min_id = 0.7;
  double min_cov = 0.8;
  Prefilter prefilter = Prefilter::automatic;
  std::size_t kmer = 6;
  std::size_t auto_threshold = 10000;  // records above which `automatic` enables the prefilter
};

/// Processing order: length descending, ties by id ascending.
inline std::vector<std::size_t> cluster_order(const std::vector<SequenceRecord>& records) {
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = records[x];
    const auto& b = records[y];
    if (a.sequence.size() != b.sequence.size()) return a.sequence.size() > b.sequence.size();
    return a.id < b.id;
  });
  return order;
}

namespace detail {

/// Shared-k-mer candidate index over cluster representatives.
class KmerIndex {
public:
  explicit KmerIndex(std::size_t k) : k_(k) {}

  void add(std::size_t rep_ordinal, std::string_view seq) {
    for_each_kmer(seq, [&](std::uint64_t key) {
      auto& list = postings_[key];
      if (list.empty() || list.back() != rep_ordinal) list.push_back(rep_ordinal);
    });
  }

  /// Representatives sharing at least one k-mer with `seq`, ascending.
  std::vector<std::size_t> candidates(std::string_view seq) const {
    std::vector<std::size_t> out;
    for_each_kmer(seq, [&](std::uint64_t key) {
      if (auto it = postings_.find(key); it != postings_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
    });
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

private:
  template <typename Fn>
  void for_each_kmer(std::string_view seq, Fn&& fn) const {
    if (seq.size() < k_) return;
    for (std::size_t i = 0; i + k_ <= seq.size(); ++i) fn(fnv1a64(seq.substr(i, k_)));
  }

  std::size_t k_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> postings_;
};

}  // namespace detail

/// Greedy incremental clustering. Records are visited in cluster_order(); each
/// joins the earliest-created representative with identity >= min_id and
/// coverage >= min_cov, otherwise it founds a new cluster. With the k-mer
/// prefilter only representatives sharing a k-mer with the record are tried.
/// Assignments are returned in input order.
inline std::vector<ClusterAssignment> greedy_cluster(const std::vector<SequenceRecord>& records,
                                                     const ClusterOptions& opts = {}) {
  {
    std::unordered_set<std::string_view> ids;
    for (const auto& r : records) {
      if (!ids.insert(r.id).second) throw Error("greedy_cluster: duplicate id '" + r.id + "'");
    }
  }
  const bool use_prefilter =
      opts.prefilter == Prefilter::on || (opts.prefilter == Prefilter::automatic && records.size() > opts.auto_threshold);

  std::vector<ClusterAssignment> out(records.size());
  std::vector<std::size_t> reps;  // record indices, creation order
  detail::KmerIndex index(opts.kmer);

  auto try_rep = [&](std::size_t rec, std::size_t rep) -> bool {
    const auto& s = records[rec].sequence;
    const auto& r = records[rep].sequence;
    // Cheap rejection before the traceback pass.
    const double ub = static_cast<double>(std::min(s.size(), r.size()));
    if (static_cast<double>(lcs_length(s, r)) / ub < opts.min_id) return false;
    const auto ic = pairwise_identity(s, r);
    if (ic.identity >= opts.min_id && ic.coverage >= opts.min_cov) {
      out[rec] = {records[rec].id, records[rep].id, ic.identity, ic.coverage};
      return true;
    }
    return false;
  };

  for (std::size_t rec : cluster_order(records)) {
    bool placed = false;
    if (use_prefilter) {
      for (std::size_t ord : index.candidates(records[rec].sequence)) {
        if ((placed = try_rep(rec, reps[ord]))) break;
      }
    } else {
      for (std::size_t rep : reps) {
        if ((placed = try_rep(rec, rep))) break;
      }
    }
    if (!placed) {
      out[rec] = {records[rec].id, records[rec].id, 1.0, 1.0};
      if (use_prefilter) index.add(reps.size(), records[rec].sequence);
      reps.push_back(rec);
    }
  }
  return out;
}

/// Removes members whose representative carries a different group_id.
/// Representatives are always retained. Input order is preserved.
inline std::vector<SequenceRecord> drop_cross_group(const std::vector<ClusterAssignment>& assignments,
                                                    const std::vector<SequenceRecord>& records) {
  std::unordered_map<std::string, const SequenceRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.id, &r);
  std::unordered_map<std::string, const ClusterAssignment*> assignment_of;
  for (const auto& a : assignments) assignment_of.emplace(a.member_id, &a);

  std::vector<SequenceRecord> out;
  for (const auto& r : records) {
    if (!r.group_id) throw Error("drop_cross_group: record '" + r.id + "' has no group_id");
    auto it = assignment_of.find(r.id);
    if (it == assignment_of.end()) throw Error("drop_cross_group: record '" + r.id + "' is unassigned");
    const auto& rep_id = it->second->rep_id;
    if (rep_id == r.id) {
      out.push_back(r);
      continue;
    }
    const auto* rep = by_id.at(rep_id);
    if (rep->group_id == r.group_id) out.push_back(r);
  }
  return out;
}

struct DecontaminationResult {
  std::vector<SequenceRecord> survivors;
  std::vector<std::string> removed_ids;
};

/// Clusters train ∪ test at (min_id, min_cov) and drops every train record
/// whose cluster contains a test record. Test ids are prefixed internally so
/// they cannot collide with train ids.
inline DecontaminationResult decontaminate(const std::vector<SequenceRecord>& train,
                                           const std::vector<SequenceRecord>& test, double min_id = 0.5,
                                           double min_cov = 0.8, Prefilter prefilter = Prefilter::automatic,
                                           const std::string& test_prefix = "BERNETT_") {
  std::vector<SequenceRecord> all;
  all.reserve(train.size() + test.size());
  for (const auto& r : train) all.push_back(r);
  for (const auto& r : test) {
    SequenceRecord t = r;
    t.id = test_prefix + r.id;
    all.push_back(std::move(t));
  }
  ClusterOptions opts;
  opts.min_id = min_id;
  opts.min_cov = min_cov;
  opts.prefilter = prefilter;
  const auto assignments = greedy_cluster(all, opts);

  std::unordered_set<std::string> contaminated_reps;
  for (std::size_t i = train.size(); i < all.size(); ++i) contaminated_reps.insert(assignments[i].rep_id);

  DecontaminationResult out;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (contaminated_reps.count(assignments[i].rep_id)) out.removed_ids.push_back(train[i].id);
    else out.survivors.push_back(train[i]);
  }
  return out;
}

struct Thresholds {
  double min_id;
  double min_cov;
};

/// Stage-1 clustering of all records, stage-2 clustering of the stage-1
/// representatives, composed as member -> rep1 -> rep2.
inline std::map<std::string, std::string> two_stage_cluster(const std::vector<SequenceRecord>& records,
                                                            Thresholds stage1 = {0.65, 0.85},
                                                            Thresholds stage2 = {0.50, 0.75},
                                                            Prefilter prefilter = Prefilter::automatic) {
  ClusterOptions o1{stage1.min_id, stage1.min_cov, prefilter};
  const auto a1 = greedy_cluster(records, o1);
  std::vector<SequenceRecord> reps;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (a1[i].rep_id == records[i].id) reps.push_back(records[i]);
  }
  ClusterOptions o2{stage2.min_id, stage2.min_cov, prefilter};
  const auto a2 = greedy_cluster(reps, o2);
  std::unordered_map<std::string, std::string> rep2;
  for (const auto& a : a2) rep2.emplace(a.member_id, a.rep_id);

  std::map<std::string, std::string> out;
  for (const auto& a : a1) out.emplace(a.member_id, rep2.at(a.rep_id));
  return out;
}

}  // namespace protsent
