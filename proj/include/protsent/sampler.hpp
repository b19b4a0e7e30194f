#pragma once

// Multi-dataset batch scheduling. Every plan step draws one micro-batch from
// exactly one dataset; the dataset sequence is either round-robin or drawn
// proportionally to dataset size.

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "protsent/common.hpp"

namespace protsent {

/// One training row. For grouped record streams (anchor, positive) are two
/// stream positions of the same group; for pair-native datasets both equal
/// the row index.
struct RowRef {
  std::size_t anchor = 0;
  std::size_t positive = 0;

  bool operator==(const RowRef&) const = default;
};

struct Batch {
  std::vector<RowRef> rows;
  bool short_batch = false;
};

struct PlanStep {
  std::size_t dataset = 0;
  std::vector<RowRef> rows;
  bool short_batch = false;

  bool operator==(const PlanStep&) const = default;
};

struct BatchPlan {
  std::vector<PlanStep> steps;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;

  std::size_t total_rows() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.rows.size();
    return n;
  }
};

enum class SamplerKind { round_robin, proportional };

inline SamplerKind parse_sampler_kind(const std::string& s) {
  if (s == "round_robin") return SamplerKind::round_robin;
  if (s == "proportional") return SamplerKind::proportional;
  throw Error("unknown sampler '" + s + "' (expected round_robin or proportional)");
}

inline const char* to_string(SamplerKind k) { return k == SamplerKind::round_robin ? "round_robin" : "proportional"; }

// ---------------------------------------------------------------------------
// Dataset schedules
// ---------------------------------------------------------------------------

/// Cyclic order over the non-empty datasets.
inline std::vector<std::size_t> round_robin_schedule(const std::vector<std::size_t>& sizes, std::size_t steps) {
  std::vector<std::size_t> active;
  for (std::size_t d = 0; d < sizes.size(); ++d) {
    if (sizes[d] > 0) active.push_back(d);
  }
  std::vector<std::size_t> out;
  if (active.empty()) return out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) out.push_back(active[t % active.size()]);
  return out;
}

/// Each step's dataset drawn with probability size / total.
inline std::vector<std::size_t> proportional_schedule(const std::vector<std::size_t>& sizes, std::size_t steps,
                                                      std::uint64_t seed) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  std::vector<std::size_t> out;
  if (total == 0) return out;
  Rng rng(seed);
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    std::uint64_t x = rng.uniform_index(total);
    std::size_t d = 0;
    while (x >= sizes[d]) {
      x -= sizes[d];
      ++d;
    }
    out.push_back(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch sources
// ---------------------------------------------------------------------------

class BatchSource {
public:
  virtual ~BatchSource() = default;
  virtual std::size_t size() const = 0;
  /// Next batch; sources restart from their beginning when exhausted.
  virtual Batch next(std::size_t batch_size) = 0;
};

/// Consecutive rows with wrap-around; a batch never repeats a row.
class SequentialSource final : public BatchSource {
public:
  explicit SequentialSource(std::size_t n) : n_(n) {}
  std::size_t size() const override { return n_; }

  Batch next(std::size_t batch_size) override {
    Batch b;
    const std::size_t take = std::min(batch_size, n_);
    for (std::size_t i = 0; i < take; ++i) {
      b.rows.push_back({cursor_, cursor_});
      cursor_ = (cursor_ + 1) % n_;
    }
    b.short_batch = take < batch_size;
    return b;
  }

private:
  std::size_t n_;
  std::size_t cursor_ = 0;
};

/// Group-labelled record stream (records of one group ideally adjacent).
/// compose() fills a batch with pairs from pairwise-distinct groups.
class GroupedStream {
public:
  explicit GroupedStream(const std::vector<std::string>& groups) : consumed_(groups.size(), 0) {
    std::unordered_map<std::string, std::size_t> ids;
    group_of_.reserve(groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
      auto [it, inserted] = ids.emplace(groups[i], members_.size());
      if (inserted) members_.emplace_back();
      group_of_.push_back(it->second);
      members_[it->second].push_back(i);
    }
    next_member_.assign(members_.size(), 0);
  }

  std::size_t size() const { return group_of_.size(); }
  std::size_t cursor() const { return cursor_; }
  std::size_t group_of(std::size_t pos) const { return group_of_[pos]; }

  /// Scans from the cursor, taking for each not-yet-batched group its two
  /// earliest unconsumed members as (anchor, positive). Rows whose group is
  /// already in the batch are skipped and revisited by later calls; a group's
  /// last unpaired member is skipped for the rest of the epoch. A batch with
  /// fewer than batch_size rows is flagged short.
  Batch compose(std::size_t batch_size) {
    Batch b;
    std::unordered_set<std::size_t> in_batch;
    for (std::size_t p = cursor_; p < group_of_.size() && b.rows.size() < batch_size; ++p) {
      if (consumed_[p]) continue;
      const std::size_t g = group_of_[p];
      if (in_batch.count(g)) continue;
      auto& ptr = next_member_[g];
      const auto& list = members_[g];
      // Unconsumed members of a group always form a suffix of its list.
      if (ptr + 1 >= list.size()) {
        consumed_[list[ptr]] = 1;
        ++ptr;
        continue;
      }
      const std::size_t anchor = list[ptr];
      const std::size_t positive = list[ptr + 1];
      consumed_[anchor] = consumed_[positive] = 1;
      ptr += 2;
      in_batch.insert(g);
      b.rows.push_back({anchor, positive});
    }
    while (cursor_ < consumed_.size() && consumed_[cursor_]) ++cursor_;
    b.short_batch = b.rows.size() < batch_size;
    return b;
  }

  void reset() {
    std::fill(consumed_.begin(), consumed_.end(), 0);
    std::fill(next_member_.begin(), next_member_.end(), 0);
    cursor_ = 0;
  }

private:
  std::vector<std::size_t> group_of_;
  std::vector<std::vector<std::size_t>> members_;
  std::vector<std::size_t> next_member_;
  std::vector<char> consumed_;
  std::size_t cursor_ = 0;
};

/// Returns the batch and the stream's new cursor.
inline std::pair<Batch, std::size_t> compose_group_batch(GroupedStream& stream, std::size_t batch_size) {
  Batch b = stream.compose(batch_size);
  return {std::move(b), stream.cursor()};
}

namespace detail {

/// Restarts an exhausted epoch, discarding its short tail batch, unless the
/// whole dataset cannot fill one batch.
template <typename Compose, typename Reset>
Batch next_with_epoch_wrap(std::size_t batch_size, Compose&& compose, Reset&& reset) {
  Batch b = compose(batch_size);
  if (!b.short_batch) return b;
  reset();
  Batch fresh = compose(batch_size);
  return fresh.rows.empty() ? b : fresh;
}

}  // namespace detail

class GroupedStreamSource final : public BatchSource {
public:
  explicit GroupedStreamSource(const std::vector<std::string>& groups) : stream_(groups) {}
  std::size_t size() const override { return stream_.size(); }
  Batch next(std::size_t batch_size) override {
    return detail::next_with_epoch_wrap(
        batch_size, [&](std::size_t bs) { return stream_.compose(bs); }, [&] { stream_.reset(); });
  }

private:
  GroupedStream stream_;
};

/// Pair rows with optional group labels; a batch never holds two rows of the
/// same non-empty group. Skipped rows are revisited by later batches.
class LabeledPairSource final : public BatchSource {
public:
  explicit LabeledPairSource(const std::vector<std::string>& groups) : groups_(groups), consumed_(groups.size(), 0) {}
  std::size_t size() const override { return groups_.size(); }

  Batch next(std::size_t batch_size) override {
    return detail::next_with_epoch_wrap(
        batch_size, [&](std::size_t bs) { return compose(bs); },
        [&] {
          std::fill(consumed_.begin(), consumed_.end(), 0);
          cursor_ = 0;
        });
  }

private:
  Batch compose(std::size_t batch_size) {
    Batch b;
    std::unordered_set<std::string_view> in_batch;
    for (std::size_t p = cursor_; p < groups_.size() && b.rows.size() < batch_size; ++p) {
      if (consumed_[p]) continue;
      if (!groups_[p].empty() && !in_batch.insert(groups_[p]).second) continue;
      consumed_[p] = 1;
      b.rows.push_back({p, p});
    }
    while (cursor_ < consumed_.size() && consumed_[cursor_]) ++cursor_;
    b.short_batch = b.rows.size() < batch_size;
    return b;
  }

  std::vector<std::string> groups_;
  std::vector<char> consumed_;
  std::size_t cursor_ = 0;
};

// ---------------------------------------------------------------------------
// Plans
// ---------------------------------------------------------------------------

/// Materializes a plan: step count is max_pairs / batch_size, the dataset of
/// each step comes from the schedule and rows from that dataset's source.
inline BatchPlan build_plan(std::vector<std::unique_ptr<BatchSource>>& sources, SamplerKind kind,
                            std::size_t batch_size, std::size_t max_pairs, std::uint64_t seed) {
  if (batch_size == 0) throw Error("batch_size must be positive");
  std::vector<std::size_t> sizes;
  for (const auto& s : sources) sizes.push_back(s ? s->size() : 0);
  const std::size_t steps = max_pairs / batch_size;
  const auto schedule =
      kind == SamplerKind::round_robin ? round_robin_schedule(sizes, steps) : proportional_schedule(sizes, steps, seed);
  BatchPlan plan;
  plan.batch_size = batch_size;
  plan.seed = seed;
  plan.steps.reserve(schedule.size());
  for (std::size_t d : schedule) {
    Batch b = sources[d]->next(batch_size);
    plan.steps.push_back({d, std::move(b.rows), b.short_batch});
  }
  return plan;
}

inline BatchPlan round_robin_plan(const std::vector<std::size_t>& sizes, std::size_t batch_size, std::size_t max_pairs) {
  std::vector<std::unique_ptr<BatchSource>> sources;
  for (auto n : sizes) sources.push_back(std::make_unique<SequentialSource>(n));
  return build_plan(sources, SamplerKind::round_robin, batch_size, max_pairs, 0);
}

inline BatchPlan proportional_plan(const std::vector<std::size_t>& sizes, std::size_t batch_size, std::size_t max_pairs,
                                   std::uint64_t seed) {
  std::vector<std::unique_ptr<BatchSource>> sources;
  for (auto n : sizes) sources.push_back(std::make_unique<SequentialSource>(n));
  return build_plan(sources, SamplerKind::proportional, batch_size, max_pairs, seed);
}

/// One JSON object per step: {"step","dataset","short","rows":[[a,p],...]}.
inline void write_plan_jsonl(std::ostream& out, const BatchPlan& plan) {
  for (std::size_t i = 0; i < plan.steps.size(); ++i) {
    const auto& s = plan.steps[i];
    nlohmann::ordered_json obj;
    obj["step"] = i;
    obj["dataset"] = s.dataset;
    obj["short"] = s.short_batch;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& r : s.rows) rows.push_back({r.anchor, r.positive});
    obj["rows"] = std::move(rows);
    out << obj.dump() << '\n';
  }
}

}  // namespace protsent
