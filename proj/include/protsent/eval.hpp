#pragma once

// Frozen-embedding evaluation: KNN probe, metrics, Recall@K retrieval,
// few-shot subsampling and delta reporting.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <array>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "protsent/common.hpp"
#include "protsent/model.hpp"
#include "protsent/seqio.hpp"

namespace protsent {

// ---------------------------------------------------------------------------
// KNN
// ---------------------------------------------------------------------------

enum class DistanceMetric { euclidean, cosine };

inline constexpr std::size_t kProbeK = 3;

/// Indices of the k nearest training rows for every query, nearest first.
/// Euclidean ranks by squared distance, cosine by 1 - cos; ties go to the
/// lower training index.
inline std::vector<std::vector<std::size_t>> knn_neighbors(const Matrix& train, const Matrix& queries, std::size_t k,
                                                           DistanceMetric metric, unsigned threads = 1) {
  if (train.cols() != queries.cols()) throw Error("knn: dimension mismatch");
  if (static_cast<std::size_t>(train.rows()) < k) throw Error("knn: fewer training points than k");
  const Eigen::Index n = train.rows();
  Vector train_norm;
  if (metric == DistanceMetric::cosine) train_norm = train.rowwise().norm();

  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(queries.rows()));
  parallel_for(out.size(), threads, [&](std::size_t q) {
    const auto query = queries.row(static_cast<Eigen::Index>(q));
    std::vector<std::pair<double, std::size_t>> d(static_cast<std::size_t>(n));
    const double qn = metric == DistanceMetric::cosine ? query.norm() : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double dist;
      if (metric == DistanceMetric::euclidean) dist = (train.row(i) - query).squaredNorm();
      else dist = 1.0 - train.row(i).dot(query) / (train_norm(i) * qn);
      d[static_cast<std::size_t>(i)] = {dist, static_cast<std::size_t>(i)};
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    auto& nb = out[q];
    nb.reserve(k);
    for (std::size_t j = 0; j < k; ++j) nb.push_back(d[j].second);
  });
  return out;
}

struct KnnClassification {
  Matrix probabilities;     // queries x classes, unweighted vote fractions
  std::vector<int> predicted;  // argmax, lowest class index on ties
};

inline KnnClassification knn_predict(const Matrix& train, const std::vector<int>& labels, const Matrix& queries,
                                     std::size_t num_classes, std::size_t k = kProbeK,
                                     DistanceMetric metric = DistanceMetric::euclidean, unsigned threads = 1) {
  if (labels.size() != static_cast<std::size_t>(train.rows())) throw Error("knn: label count mismatch");
  const auto nb = knn_neighbors(train, queries, k, metric, threads);
  KnnClassification out;
  out.probabilities = Matrix::Zero(queries.rows(), static_cast<Eigen::Index>(num_classes));
  out.predicted.resize(nb.size());
  for (std::size_t q = 0; q < nb.size(); ++q) {
    for (std::size_t i : nb[q]) out.probabilities(static_cast<Eigen::Index>(q), labels[i]) += 1.0;
    out.probabilities.row(static_cast<Eigen::Index>(q)) /= static_cast<double>(k);
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < out.probabilities.cols(); ++c) {
      if (out.probabilities(static_cast<Eigen::Index>(q), c) > out.probabilities(static_cast<Eigen::Index>(q), best)) best = c;
    }
    out.predicted[q] = static_cast<int>(best);
  }
  return out;
}

/// Regression probe: unweighted mean of the k neighbors' values.
inline std::vector<double> knn_predict(const Matrix& train, const std::vector<double>& values, const Matrix& queries,
                                       std::size_t k = kProbeK, DistanceMetric metric = DistanceMetric::euclidean,
                                       unsigned threads = 1) {
  if (values.size() != static_cast<std::size_t>(train.rows())) throw Error("knn: value count mismatch");
  const auto nb = knn_neighbors(train, queries, k, metric, threads);
  std::vector<double> out(nb.size());
  for (std::size_t q = 0; q < nb.size(); ++q) {
    double s = 0.0;
    for (std::size_t i : nb[q]) s += values[i];
    out[q] = s / static_cast<double>(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// 1-based ranks, ties receiving the mean of their rank span.
inline std::vector<double> average_ranks(const std::vector<double>& x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
    i = j + 1;
  }
  return r;
}

/// Tie-aware Mann-Whitney AUC: P(s_pos > s_neg) + 0.5 P(s_pos == s_neg).
inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("auc: length mismatch");
  const auto ranks = average_ranks(scores);
  double pos_rank_sum = 0.0;
  std::size_t npos = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw Error("auc: labels must be 0/1");
    if (labels[i] == 1) {
      pos_rank_sum += ranks[i];
      ++npos;
    }
  }
  const std::size_t nneg = labels.size() - npos;
  if (npos == 0 || nneg == 0) throw Error("auc: both classes must be present");
  const double u = pos_rank_sum - 0.5 * static_cast<double>(npos) * static_cast<double>(npos + 1);
  return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

/// Unweighted mean of per-class F1 over the classes present in `truth`.
inline double macro_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size() || truth.empty()) throw Error("macro_f1: empty or mismatched inputs");
  std::map<int, std::array<std::size_t, 3>> counts;  // tp, fp, fn
  for (int c : truth) counts[c];
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] == truth[i]) {
      ++counts[truth[i]][0];
    } else {
      ++counts[truth[i]][2];
      if (auto it = counts.find(pred[i]); it != counts.end()) ++it->second[1];
    }
  }
  double sum = 0.0;
  for (const auto& [c, k] : counts) {
    const std::size_t denom = 2 * k[0] + k[1] + k[2];
    sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(k[0]) / static_cast<double>(denom);
  }
  return sum / static_cast<double>(counts.size());
}

/// Pearson correlation of average ranks.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw Error("spearman: need two equal-length inputs of size >= 2");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("spearman: constant input");
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

struct RecallResult {
  std::map<std::size_t, double> recall;  // k -> recall
  std::size_t queries = 0;
  std::size_t excluded_singletons = 0;
};

/// Every item with a non-singleton label queries all other items ranked by
/// cosine similarity (ties to the lower index); a hit at k means one of the
/// top k shares the label.
inline RecallResult recall_at_k(const Matrix& embeddings, const std::vector<std::string>& labels,
                                const std::vector<std::size_t>& ks = {1, 10, 30}, unsigned threads = 1) {
  const std::size_t n = labels.size();
  if (static_cast<std::size_t>(embeddings.rows()) != n) throw Error("recall_at_k: label count mismatch");
  std::unordered_map<std::string, std::size_t> count;
  for (const auto& l : labels) ++count[l];
  const Matrix unit = l2_normalize_rows(embeddings);
  const std::size_t kmax = ks.empty() ? 0 : *std::max_element(ks.begin(), ks.end());

  // first_hit[q] = 1-based rank of the first same-label item (0 = excluded).
  std::vector<std::size_t> first_hit(n, 0);
  parallel_for(n, threads, [&](std::size_t q) {
    if (count[labels[q]] < 2) return;
    std::vector<std::pair<double, std::size_t>> sims;
    sims.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      if (i == q) continue;
      sims.push_back({-unit.row(static_cast<Eigen::Index>(q)).dot(unit.row(static_cast<Eigen::Index>(i))), i});
    }
    const std::size_t top = std::min(kmax, sims.size());
    std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(top), sims.end());
    first_hit[q] = std::numeric_limits<std::size_t>::max();
    for (std::size_t r = 0; r < top; ++r) {
      if (labels[sims[r].second] == labels[q]) {
        first_hit[q] = r + 1;
        break;
      }
    }
  });
  RecallResult out;
  for (std::size_t q = 0; q < n; ++q) {
    if (first_hit[q] == 0) ++out.excluded_singletons;
    else ++out.queries;
  }
  for (std::size_t k : ks) {
    std::size_t hits = 0;
    for (std::size_t q = 0; q < n; ++q) hits += first_hit[q] != 0 && first_hit[q] <= k;
    out.recall[k] = out.queries == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(out.queries);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tasks
// ---------------------------------------------------------------------------

enum class TaskKind { binary, multiclass, regression, retrieval };
enum class TaskMetric { auc, macro_f1, spearman, recall_at_k };

inline TaskKind parse_task_kind(const std::string& s) {
  if (s == "binary") return TaskKind::binary;
  if (s == "multiclass") return TaskKind::multiclass;
  if (s == "regression") return TaskKind::regression;
  if (s == "retrieval") return TaskKind::retrieval;
  throw Error("unknown task kind '" + s + "'");
}

inline TaskMetric parse_task_metric(const std::string& s) {
  if (s == "auc") return TaskMetric::auc;
  if (s == "macro_f1") return TaskMetric::macro_f1;
  if (s == "spearman") return TaskMetric::spearman;
  if (s == "recall_at_k") return TaskMetric::recall_at_k;
  throw Error("unknown metric '" + s + "'");
}

inline bool metric_compatible(TaskKind kind, TaskMetric metric) {
  switch (kind) {
    case TaskKind::binary: return metric == TaskMetric::auc || metric == TaskMetric::macro_f1;
    case TaskKind::multiclass: return metric == TaskMetric::macro_f1;
    case TaskKind::regression: return metric == TaskMetric::spearman;
    case TaskKind::retrieval: return metric == TaskMetric::recall_at_k;
  }
  return false;
}

/// A labelled evaluation task over the rows of one embedding matrix. Items
/// are (embedding row, label string); `train`/`test` index into items. Empty
/// train/test means cross-validation with `cv_folds` folds.
struct EvalTask {
  std::string name;
  TaskKind kind = TaskKind::multiclass;
  TaskMetric metric = TaskMetric::macro_f1;
  std::vector<std::size_t> rows;
  std::vector<std::string> labels;
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::size_t cv_folds = 4;
  std::size_t recall_k = 1;

  void validate() const {
    if (!metric_compatible(kind, metric)) throw Error("task '" + name + "': metric incompatible with kind");
    if (rows.size() != labels.size()) throw Error("task '" + name + "': rows/labels length mismatch");
    if (train.empty() != test.empty()) throw Error("task '" + name + "': give both train and test, or neither");
    if (train.empty() && cv_folds < 2 && kind != TaskKind::retrieval) throw Error("task '" + name + "': cv_folds must be >= 2");
  }
};

/// Seeded fold assignment: shuffle, stable-sort by label, deal round-robin.
inline std::vector<std::size_t> cv_fold_assignment(const std::vector<std::string>& labels, std::size_t folds,
                                                   std::uint64_t seed, bool numeric_labels) {
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  if (numeric_labels) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return std::stod(labels[a]) < std::stod(labels[b]); });
  } else {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return labels[a] < labels[b]; });
  }
  std::vector<std::size_t> fold(labels.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) fold[order[pos]] = pos % folds;
  return fold;
}

namespace detail {

inline Matrix rows_of(const Matrix& emb, const std::vector<std::size_t>& item_rows, const std::vector<std::size_t>& items) {
  Matrix out(static_cast<Eigen::Index>(items.size()), emb.cols());
  for (std::size_t i = 0; i < items.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = emb.row(static_cast<Eigen::Index>(item_rows.at(items[i])));
  }
  return out;
}

}  // namespace detail

/// Metric of a KNN probe fit on `train` items and scored on `test` items.
/// Returns nullopt when the metric is undefined for this split (AUC with a
/// single-class test set or training subsample, Spearman on constant
/// predictions, fewer than k training items).
inline std::optional<double> evaluate_split(const Matrix& emb, const EvalTask& task, const std::vector<std::size_t>& train,
                                            const std::vector<std::size_t>& test, unsigned threads = 1) {
  if (train.size() < kProbeK || test.empty()) return std::nullopt;
  const Matrix xtr = detail::rows_of(emb, task.rows, train);
  const Matrix xte = detail::rows_of(emb, task.rows, test);
  if (task.kind == TaskKind::regression) {
    std::vector<double> ytr, yte;
    for (auto i : train) ytr.push_back(std::stod(task.labels[i]));
    for (auto i : test) yte.push_back(std::stod(task.labels[i]));
    const auto pred = knn_predict(xtr, ytr, xte, kProbeK, DistanceMetric::euclidean, threads);
    if (std::adjacent_find(pred.begin(), pred.end(), std::not_equal_to<>()) == pred.end()) return std::nullopt;
    if (std::adjacent_find(yte.begin(), yte.end(), std::not_equal_to<>()) == yte.end()) return std::nullopt;
    return spearman(pred, yte);
  }
  // Classes indexed by sorted label string over all task items.
  std::map<std::string, int> classes;
  for (const auto& l : task.labels) classes.emplace(l, 0);
  int next = 0;
  for (auto& [l, c] : classes) c = next++;
  std::vector<int> ytr, yte;
  for (auto i : train) ytr.push_back(classes.at(task.labels[i]));
  for (auto i : test) yte.push_back(classes.at(task.labels[i]));
  const auto res = knn_predict(xtr, ytr, xte, classes.size(), kProbeK, DistanceMetric::euclidean, threads);
  if (task.metric == TaskMetric::macro_f1) return macro_f1(res.predicted, yte);
  // AUC: positive class is the larger of the two labels.
  if (classes.size() != 2) throw Error("task '" + task.name + "': AUC needs exactly two classes");
  const bool both_train = std::find(ytr.begin(), ytr.end(), 0) != ytr.end() && std::find(ytr.begin(), ytr.end(), 1) != ytr.end();
  const bool both_test = std::find(yte.begin(), yte.end(), 0) != yte.end() && std::find(yte.begin(), yte.end(), 1) != yte.end();
  if (!both_train || !both_test) return std::nullopt;
  std::vector<double> scores(yte.size());
  for (std::size_t q = 0; q < yte.size(); ++q) scores[q] = res.probabilities(static_cast<Eigen::Index>(q), 1);
  return auc(scores, yte);
}

/// Explicit split when given, else mean over `cv_folds` folds (folds whose
/// metric is undefined are skipped). Retrieval tasks report Recall@recall_k
/// over all items.
inline double evaluate_task(const Matrix& emb, const EvalTask& task, std::uint64_t seed = 42, unsigned threads = 1) {
  task.validate();
  if (task.kind == TaskKind::retrieval) {
    const Matrix x = detail::rows_of(emb, task.rows, [&] {
      std::vector<std::size_t> all(task.rows.size());
      std::iota(all.begin(), all.end(), 0);
      return all;
    }());
    return recall_at_k(x, task.labels, {task.recall_k}, threads).recall.at(task.recall_k);
  }
  if (!task.train.empty()) {
    auto v = evaluate_split(emb, task, task.train, task.test, threads);
    if (!v) throw Error("task '" + task.name + "': metric undefined on the given split");
    return *v;
  }
  const auto fold = cv_fold_assignment(task.labels, task.cv_folds, seed, task.kind == TaskKind::regression);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t f = 0; f < task.cv_folds; ++f) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
    if (auto v = evaluate_split(emb, task, tr, te, threads)) {
      sum += *v;
      ++used;
    }
  }
  if (used == 0) throw Error("task '" + task.name + "': metric undefined on every fold");
  return sum / static_cast<double>(used);
}

// ---------------------------------------------------------------------------
// Few-shot
// ---------------------------------------------------------------------------

struct FewShotRow {
  std::size_t n = 0;
  bool skipped = false;  // n >= training size
  std::optional<double> baseline;
  std::optional<double> trained;
  std::optional<double> delta_pct;
};

inline std::optional<double> delta_pct(double baseline, double trained) {
  if (baseline == 0.0) return std::nullopt;
  return 100.0 * (trained - baseline) / baseline;
}

/// For each N, a seeded subsample of N training items (uniform, or
/// round-robin over labels when `stratified`) is probed under both embedding
/// spaces against the fixed test items. Undefined metrics are reported as
/// absent (N/A).
inline std::vector<FewShotRow> few_shot(const Matrix& baseline, const Matrix& trained, const EvalTask& task,
                                        const std::vector<std::size_t>& n_values = {50, 100, 500, 1000},
                                        std::uint64_t seed = 42, bool stratified = false, unsigned threads = 1) {
  task.validate();
  if (task.train.empty()) throw Error("few_shot: task '" + task.name + "' needs an explicit train/test split");
  std::vector<FewShotRow> out;
  for (std::size_t n : n_values) {
    FewShotRow row;
    row.n = n;
    if (n >= task.train.size()) {
      row.skipped = true;
      out.push_back(row);
      continue;
    }
    Rng rng(splitmix64(seed + n));
    std::vector<std::size_t> sub;
    if (!stratified) {
      for (std::size_t j : rng.sample_without_replacement(task.train.size(), n)) sub.push_back(task.train[j]);
    } else {
      std::map<std::string, std::vector<std::size_t>> by_label;
      for (std::size_t i : task.train) by_label[task.labels[i]].push_back(i);
      for (auto& [l, v] : by_label) rng.shuffle(v);
      for (std::size_t r = 0; sub.size() < n; ++r) {
        for (auto& [l, v] : by_label) {
          if (r < v.size() && sub.size() < n) sub.push_back(v[r]);
        }
      }
    }
    std::sort(sub.begin(), sub.end());
    row.baseline = evaluate_split(baseline, task, sub, task.test, threads);
    row.trained = evaluate_split(trained, task, sub, task.test, threads);
    if (row.baseline && row.trained) row.delta_pct = delta_pct(*row.baseline, *row.trained);
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct TaskResult {
  std::string name;
  std::string metric;
  double baseline = 0.0;
  double trained = 0.0;
  std::optional<double> delta_pct;
};

struct EvalReport {
  std::vector<TaskResult> tasks;
  std::size_t improved = 0;
  double mean_delta_pct = 0.0;
  std::uint64_t seed = 42;
  std::string config_hash;
};

inline const char* to_string(TaskMetric m) {
  switch (m) {
    case TaskMetric::auc: return "auc";
    case TaskMetric::macro_f1: return "macro_f1";
    case TaskMetric::spearman: return "spearman";
    case TaskMetric::recall_at_k: return "recall_at_k";
  }
  return "?";
}

/// Per-task delta % = 100 (trained - baseline) / baseline, the count of tasks
/// where trained > baseline, and the mean delta over tasks where it is defined.
inline EvalReport delta_report(const std::vector<std::string>& names, const std::vector<double>& baseline,
                               const std::vector<double>& trained, const std::vector<std::string>& metrics = {}) {
  if (names.size() != baseline.size() || names.size() != trained.size()) throw Error("delta_report: task sets differ");
  EvalReport r;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    TaskResult t{names[i], i < metrics.size() ? metrics[i] : "", baseline[i], trained[i], delta_pct(baseline[i], trained[i])};
    if (trained[i] > baseline[i]) ++r.improved;
    if (t.delta_pct) {
      sum += *t.delta_pct;
      ++defined;
    }
    r.tasks.push_back(std::move(t));
  }
  r.mean_delta_pct = defined ? sum / static_cast<double>(defined) : 0.0;
  return r;
}

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  auto tasks = nlohmann::ordered_json::array();
  for (const auto& t : r.tasks) {
    nlohmann::ordered_json o;
    o["task"] = t.name;
    o["metric"] = t.metric;
    o["baseline"] = t.baseline;
    o["trained"] = t.trained;
    o["delta_pct"] = t.delta_pct ? nlohmann::ordered_json(*t.delta_pct) : nlohmann::ordered_json(nullptr);
    tasks.push_back(std::move(o));
  }
  j["tasks"] = std::move(tasks);
  j["tasks_improved"] = r.improved;
  j["tasks_total"] = r.tasks.size();
  j["mean_delta_pct"] = r.mean_delta_pct;
  j["seed"] = r.seed;
  j["config_hash"] = r.config_hash;
  return j;
}

/// Aligned text table: Task | Metric | Baseline | Trained | Delta %.
inline std::string format_table(const EvalReport& r) {
  std::size_t w = 4;
  for (const auto& t : r.tasks) w = std::max(w, t.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "Task" << "  " << std::setw(12) << "Metric" << std::right
     << std::setw(10) << "Baseline" << std::setw(10) << "Trained" << std::setw(10) << "Delta %" << '\n';
  os << std::fixed;
  for (const auto& t : r.tasks) {
    os << std::left << std::setw(static_cast<int>(w)) << t.name << "  " << std::setw(12) << t.metric << std::right
       << std::setprecision(3) << std::setw(10) << t.baseline << std::setw(10) << t.trained;
    if (t.delta_pct) os << std::setw(9) << std::showpos << std::setprecision(1) << *t.delta_pct << std::noshowpos << '%';
    else os << std::setw(10) << "N/A";
    os << '\n';
  }
  os << "Tasks improved: " << r.improved << "/" << r.tasks.size() << "   Mean delta: " << std::showpos
     << std::setprecision(1) << r.mean_delta_pct << std::noshowpos << "%\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Task manifests
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, std::string>> read_label_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(lineno, "expected 'id<TAB>label' in " + path);
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

inline std::vector<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

/// Loads a JSON task manifest ({"name","kind","metric","labels", optional
/// "train"/"test" id-list files, "cv_folds", "k"}) against an embedding id
/// index. Relative paths resolve against the manifest's directory.
inline EvalTask load_task_manifest(const std::string& path, const std::unordered_map<std::string, std::size_t>& id_index) {
  nlohmann::json j;
  try {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error("task manifest '" + path + "': " + e.what());
  }
  const auto dir = std::filesystem::path(path).parent_path();
  auto resolve = [&](const std::string& p) { return std::filesystem::path(p).is_absolute() ? p : (dir / p).string(); };
  auto str = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string()) throw Error("task manifest '" + path + "': missing '" + key + "'");
    return j[key].get<std::string>();
  };
  EvalTask t;
  t.name = str("name");
  t.kind = parse_task_kind(str("kind"));
  t.metric = parse_task_metric(str("metric"));
  if (j.contains("cv_folds")) t.cv_folds = j["cv_folds"].get<std::size_t>();
  if (j.contains("k")) t.recall_k = j["k"].get<std::size_t>();

  std::unordered_map<std::string, std::size_t> item_of;
  for (const auto& [id, label] : read_label_tsv(resolve(str("labels")))) {
    auto it = id_index.find(id);
    if (it == id_index.end()) throw Error("task '" + t.name + "': id '" + id + "' has no embedding");
    if (!item_of.emplace(id, t.rows.size()).second) throw Error("task '" + t.name + "': duplicate label for '" + id + "'");
    t.rows.push_back(it->second);
    t.labels.push_back(label);
  }
  auto split = [&](const char* key, std::vector<std::size_t>& dst) {
    if (!j.contains(key)) return;
    for (const auto& id : read_id_list(resolve(j[key].get<std::string>()))) {
      auto it = item_of.find(id);
      if (it == item_of.end()) throw Error("task '" + t.name + "': split id '" + id + "' has no label");
      dst.push_back(it->second);
    }
  };
  split("train", t.train);
  split("test", t.test);
  t.validate();
  return t;
}

}  // namespace protsent
