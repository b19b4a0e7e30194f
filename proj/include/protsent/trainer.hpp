#pragma once

// Training loop: walks a BatchPlan, applies MNRL or CoSENT per step depending
// on the dataset, accumulates micro-batch gradients to the effective batch and
// steps AdamW under the warmup-cosine schedule.

#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protsent/model.hpp"
#include "protsent/optim.hpp"
#include "protsent/sampler.hpp"

namespace protsent {

enum class LossKind { mnrl, cosent };

/// A training dataset whose rows reference rows of a shared embedding matrix.
struct TrainingSet {
  enum class Layout { grouped, pairs, scored };

  struct Pair {
    std::size_t anchor;
    std::size_t positive;
    std::optional<std::size_t> hard_negative;
  };
  struct Scored {
    std::size_t first;
    std::size_t second;
    double score;
  };

  std::string name;
  Layout layout = Layout::grouped;
  std::vector<std::size_t> rows;    // grouped: embedding row per stream position
  std::vector<std::string> groups;  // grouped: per position; pairs: per pair ("" = unlabeled)
  std::vector<Pair> pairs;
  std::vector<Scored> scored;

  LossKind loss() const { return layout == Layout::scored ? LossKind::cosent : LossKind::mnrl; }

  std::size_t size() const {
    switch (layout) {
      case Layout::grouped: return rows.size();
      case Layout::pairs: return pairs.size();
      case Layout::scored: return scored.size();
    }
    return 0;
  }

  std::unique_ptr<BatchSource> make_source() const {
    switch (layout) {
      case Layout::grouped: return std::make_unique<GroupedStreamSource>(groups);
      case Layout::pairs: return std::make_unique<LabeledPairSource>(groups);
      case Layout::scored: return std::make_unique<SequentialSource>(scored.size());
    }
    return nullptr;
  }
};

inline BatchPlan make_training_plan(const std::vector<TrainingSet>& sets, SamplerKind kind, std::size_t micro_batch,
                                    std::size_t max_pairs, std::uint64_t seed) {
  std::vector<std::unique_ptr<BatchSource>> sources;
  for (const auto& s : sets) {
    if (s.loss() == LossKind::mnrl && micro_batch < 2) throw Error("MNRL datasets need batch_size >= 2");
    sources.push_back(s.make_source());
  }
  return build_plan(sources, kind, micro_batch, max_pairs, seed);
}

struct TrainerConfig {
  std::size_t micro_batch = 64;
  std::size_t effective_batch = 1024;
  std::size_t warmup_steps = 500;
  double base_lr = 3e-4;
  double min_lr = 0.0;
  AdamWConfig adamw;
  double scale = kDefaultScale;
  double init_scale = 1e-3;
  bool bias = false;

  std::size_t accumulation() const { return std::max<std::size_t>(1, effective_batch / std::max<std::size_t>(1, micro_batch)); }
};

struct LogEntry {
  std::size_t step = 0;            // plan (micro-batch) step
  std::size_t optimizer_step = 0;  // effective-batch step the micro-batch belongs to
  std::size_t dataset = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  AdapterParams params;
  std::vector<LogEntry> log;
  std::size_t optimizer_steps = 0;
};

namespace detail {

inline Matrix gather_rows(const Matrix& h, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), h.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = h.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace detail

/// Loss and adapter gradients of one plan step.
inline LossOutput step_loss(const AdapterParams& params, const Matrix& embeddings, const TrainingSet& set,
                            const PlanStep& step, double scale) {
  std::vector<std::size_t> a, b, hn;
  std::vector<double> scores;
  for (const auto& r : step.rows) {
    switch (set.layout) {
      case TrainingSet::Layout::grouped:
        a.push_back(set.rows.at(r.anchor));
        b.push_back(set.rows.at(r.positive));
        break;
      case TrainingSet::Layout::pairs: {
        const auto& p = set.pairs.at(r.anchor);
        a.push_back(p.anchor);
        b.push_back(p.positive);
        if (p.hard_negative) hn.push_back(*p.hard_negative);
        break;
      }
      case TrainingSet::Layout::scored: {
        const auto& s = set.scored.at(r.anchor);
        a.push_back(s.first);
        b.push_back(s.second);
        scores.push_back(s.score);
        break;
      }
    }
  }
  const Matrix ha = detail::gather_rows(embeddings, a);
  const Matrix hb = detail::gather_rows(embeddings, b);
  if (set.loss() == LossKind::cosent) return adapter_cosent_loss(params, ha, hb, scores, scale);
  const Matrix hh = detail::gather_rows(embeddings, hn);
  return adapter_mnrl_loss(params, ha, hb, hn.empty() ? nullptr : &hh, scale);
}

/// Runs the plan. Every `accumulation()` consecutive plan steps form one
/// optimizer step whose gradient is the mean of their gradients; the learning
/// rate of optimizer step s is cosine_lr(s).
inline TrainResult train_adapter(const Matrix& embeddings, const std::vector<TrainingSet>& sets, const BatchPlan& plan,
                                 const TrainerConfig& cfg, AdapterParams init) {
  TrainResult result;
  result.params = std::move(init);
  const std::size_t accum = cfg.accumulation();
  const std::size_t n_steps = plan.steps.size();
  result.optimizer_steps = (n_steps + accum - 1) / accum;

  ScheduleConfig sched;
  sched.total_steps = result.optimizer_steps;
  sched.warmup_steps = std::min(cfg.warmup_steps, sched.total_steps);
  sched.base_lr = cfg.base_lr;
  sched.min_lr = cfg.min_lr;
  sched.validate();

  auto state = OptimizerState::for_params(result.params, cfg.adamw);
  for (std::size_t opt = 0; opt < result.optimizer_steps; ++opt) {
    const double lr = cosine_lr(opt, sched);
    auto grads = AdapterGrads::zeros_like(result.params);
    const std::size_t lo = opt * accum;
    const std::size_t hi = std::min(n_steps, lo + accum);
    std::size_t used = 0;
    for (std::size_t s = lo; s < hi; ++s) {
      const auto& step = plan.steps[s];
      if (step.rows.empty()) continue;
      const auto out = step_loss(result.params, embeddings, sets.at(step.dataset), step, cfg.scale);
      if (!std::isfinite(out.value) || !out.grads.weight.allFinite()) {
        throw NumericError("non-finite loss at plan step " + std::to_string(s) + " (dataset " +
                           std::to_string(step.dataset) + ", optimizer step " + std::to_string(opt) + ", lr " +
                           format_double(lr) + ")");
      }
      grads += out.grads;
      ++used;
      result.log.push_back({s, opt, step.dataset, out.value, lr});
    }
    if (used == 0) continue;
    grads *= 1.0 / static_cast<double>(used);
    adamw_step(state, result.params, grads, lr);
  }
  return result;
}

inline void write_loss_log(std::ostream& out, const std::vector<LogEntry>& log,
                           const std::vector<std::string>& dataset_names = {}) {
  for (const auto& e : log) {
    nlohmann::ordered_json obj;
    obj["step"] = e.step;
    obj["optimizer_step"] = e.optimizer_step;
    obj["dataset"] = e.dataset < dataset_names.size() ? nlohmann::ordered_json(dataset_names[e.dataset])
                                                      : nlohmann::ordered_json(e.dataset);
    obj["loss"] = e.loss;
    obj["lr"] = e.lr;
    out << obj.dump() << '\n';
  }
}

}  // namespace protsent
