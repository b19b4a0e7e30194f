#pragma once

// End-to-end wiring shared by the CLI and the tests: dataset files to
// TrainingSets, config to trainer settings, train/eval runs and ablations.

#include <array>
#include <charconv>
#include <fstream>
#include <map>
#include <unordered_set>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "protsent/cluster.hpp"
#include "protsent/config.hpp"
#include "protsent/datasets.hpp"
#include "protsent/eval.hpp"
#include "protsent/profile.hpp"
#include "protsent/seqio.hpp"
#include "protsent/trainer.hpp"

namespace protsent {

using Counts = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

inline Prefilter parse_prefilter(const std::string& s) {
  if (s == "auto") return Prefilter::automatic;
  if (s == "on") return Prefilter::on;
  if (s == "off") return Prefilter::off;
  throw Error("cluster_prefilter must be auto, on or off (got '" + s + "')");
}

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

/// Family from the header (group= tag or first PF accession), clan from a
/// clan= tag. Records without a family are dropped and counted.
inline std::vector<SequenceRecord> tag_families(std::vector<SequenceRecord> records, std::size_t* untagged = nullptr) {
  std::vector<SequenceRecord> out;
  std::size_t missing = 0;
  for (auto& r : records) {
    const auto desc = r.meta.count("desc") ? r.meta.at("desc") : std::string();
    auto fam = pfam_family_from_header(desc);
    if (!fam) {
      ++missing;
      continue;
    }
    r.group_id = *fam;
    const auto tags = parse_header_tags(desc);
    if (auto it = tags.find("clan"); it != tags.end()) r.meta["clan"] = it->second;
    out.push_back(std::move(r));
  }
  if (untagged) *untagged = missing;
  return out;
}

/// Pfam stream: family tagging, redundancy clustering, cross-family member
/// removal, then representatives only unless `keep_members`.
inline std::vector<SequenceRecord> prep_pfam(std::vector<SequenceRecord> records, const RunConfig& cfg,
                                             bool keep_members, Counts& counts) {
  counts["input"] = records.size();
  std::size_t untagged = 0;
  records = tag_families(std::move(records), &untagged);
  counts["no_family"] = untagged;
  ClusterOptions opts;
  opts.min_id = cfg.real("data.pfam_min_id");
  opts.min_cov = cfg.real("data.pfam_min_cov");
  opts.prefilter = parse_prefilter(cfg.text("data.cluster_prefilter"));
  const auto assignments = greedy_cluster(records, opts);
  auto kept = drop_cross_group(assignments, records);
  counts["cross_family_dropped"] = records.size() - kept.size();
  if (!keep_members) {
    std::unordered_set<std::string> reps;
    for (const auto& a : assignments) reps.insert(a.rep_id);
    const std::size_t before = kept.size();
    std::erase_if(kept, [&](const SequenceRecord& r) { return !reps.count(r.id); });
    counts["redundant_dropped"] = before - kept.size();
  }
  GroupedBuildReport rep;
  auto out = build_grouped_pairs(std::move(kept), GroupedLayout::pfam, cfg.seed(), &rep);
  counts["singleton_records_dropped"] = rep.records_dropped;
  counts["groups"] = rep.groups;
  counts["output"] = out.size();
  return out;
}

/// Reads a TSV with a header row; the first column is the record id.
inline std::map<std::string, std::map<std::string, std::string>> read_meta_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::string line;
  std::vector<std::string> header;
  std::map<std::string, std::map<std::string, std::string>> out;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, '\t')) cols.push_back(cell);
    if (header.empty()) {
      header = cols;
      continue;
    }
    if (cols.size() != header.size()) throw ParseError(lineno, path + ": expected " + std::to_string(header.size()) + " columns");
    auto& row = out[cols[0]];
    for (std::size_t i = 1; i < cols.size(); ++i) row[header[i]] = cols[i];
  }
  return out;
}

/// AFDB-style stream: metadata join by id, quality filters, cluster-sorted layout.
inline std::vector<SequenceRecord> prep_afdb(std::vector<SequenceRecord> records,
                                             const std::map<std::string, std::map<std::string, std::string>>& meta,
                                             const RunConfig& cfg, Counts& counts) {
  counts["input"] = records.size();
  std::size_t missing = 0;
  std::vector<SequenceRecord> joined;
  for (auto& r : records) {
    auto it = meta.find(r.id);
    if (it == meta.end()) {
      ++missing;
      continue;
    }
    for (const auto& [k, v] : it->second) r.meta[k] = v;
    joined.push_back(std::move(r));
  }
  counts["missing_meta"] = missing;
  AfdbFilterReport fr;
  auto kept = filter_afdb(joined, &fr);
  counts["low_plddt"] = fr.low_plddt;
  counts["fragment"] = fr.fragment;
  counts["cluster_flag"] = fr.cluster_flag;
  GroupedBuildReport rep;
  auto out = build_grouped_pairs(std::move(kept), GroupedLayout::afdb, cfg.seed(), &rep);
  counts["singleton_records_dropped"] = rep.records_dropped;
  counts["groups"] = rep.groups;
  counts["output"] = out.size();
  return out;
}

/// Whitespace-separated "id1 id2 score"; a first line whose score is not an
/// integer is treated as a header.
inline std::vector<PpiEdge> read_edges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<PpiEdge> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string a, b, score;
    if (!(ls >> a)) continue;
    if (!(ls >> b >> score)) throw ParseError(lineno, path + ": expected 'id1 id2 score'");
    int v = 0;
    const auto res = std::from_chars(score.data(), score.data() + score.size(), v);
    if (res.ec != std::errc() || res.ptr != score.data() + score.size()) {
      if (lineno == 1) continue;
      throw ParseError(lineno, path + ": score '" + score + "' is not an integer");
    }
    out.push_back({a, b, v});
  }
  return out;
}

inline std::vector<PairExample> prep_ppi(const std::vector<PpiEdge>& edges, const std::vector<SequenceRecord>& proteins,
                                         const std::vector<SequenceRecord>* test_set, const RunConfig& cfg,
                                         Counts& counts) {
  const auto prefilter = parse_prefilter(cfg.text("data.cluster_prefilter"));
  std::vector<SequenceRecord> pool = proteins;
  counts["proteins"] = pool.size();
  if (test_set) {
    auto res = decontaminate(pool, *test_set, cfg.real("data.decontam_min_id"), cfg.real("data.decontam_min_cov"),
                             prefilter, cfg.text("data.decontam_prefix"));
    counts["decontaminated"] = res.removed_ids.size();
    pool = std::move(res.survivors);
  }
  const auto clusters = two_stage_cluster(pool, {cfg.real("data.stage1_min_id"), cfg.real("data.stage1_min_cov")},
                                          {cfg.real("data.stage2_min_id"), cfg.real("data.stage2_min_cov")}, prefilter);
  std::unordered_map<std::string, std::string> sequences;
  for (const auto& r : pool) sequences.emplace(r.id, r.sequence);
  PpiOptions opts;
  opts.min_score = static_cast<int>(cfg.integer("data.string_min_score"));
  opts.len_min = cfg.count("data.ppi_len_min");
  opts.len_max = cfg.count("data.ppi_len_max");
  opts.seed = cfg.seed();
  PpiReport rep;
  auto out = build_ppi_pairs(edges, clusters, sequences, opts, &rep);
  counts["edges_in"] = rep.edges_in;
  counts["below_score"] = rep.below_score;
  counts["missing_endpoint"] = rep.missing_endpoint;
  counts["self_cluster"] = rep.self_cluster;
  counts["duplicate_cluster_pair"] = rep.duplicate_cluster_pair;
  counts["length_filtered"] = rep.length_filtered;
  counts["output"] = rep.pairs_out;
  return out;
}

inline std::vector<DmsRow> read_dms_file(const std::string& path) {
  return with_input_file(path, [](std::istream& in) {
    DmsReader reader(in);
    std::vector<DmsRow> rows;
    while (auto r = reader.next()) rows.push_back(std::move(*r));
    return rows;
  });
}

/// Per-assay normalization over all rows, then the split; pairs whose source
/// row landed in a test fold are removed.
inline std::vector<ScoredPair> prep_dms(const std::vector<DmsRow>& rows, const RunConfig& cfg, Counts& counts) {
  counts["input"] = rows.size();
  const auto norm = normalize_dms(rows, split_list(cfg.text("data.dms_drop_prefixes")));
  counts["dropped_prefix"] = norm.dropped_prefix;
  counts["dropped_nonfinite"] = norm.dropped_nonfinite;
  counts["skipped_assay_rows"] = norm.skipped_rows;
  counts["skipped_assays"] = norm.skipped_assays;
  const auto split = split_dms(rows, cfg.seed(), cfg.real("data.dms_test_frac"), cfg.count("data.dms_min_group"));
  counts["dropped_hint"] = split.dropped_hint;
  counts["dropped_split"] = split.dropped_split;
  counts["dropped_global"] = split.dropped_global;
  counts["groups_split"] = split.groups_split;
  counts["groups_unsplit"] = split.groups_unsplit;
  std::vector<char> keep(rows.size(), 0);
  for (auto i : split.train) keep[i] = 1;
  std::vector<ScoredPair> out;
  for (std::size_t k = 0; k < norm.pairs.size(); ++k) {
    if (keep[norm.source[k]]) out.push_back(norm.pairs[k]);
  }
  counts["output"] = out.size();
  return out;
}

inline HardNegativeDataset prep_hard_negatives(std::vector<SequenceRecord> records,
                                               const std::vector<ProfileMatrix>& profiles, const RunConfig& cfg,
                                               unsigned threads, Counts& counts) {
  counts["input"] = records.size();
  std::size_t untagged = 0;
  records = tag_families(std::move(records), &untagged);
  counts["no_family"] = untagged;
  std::map<std::string, ProfileMatrix> pmap;
  for (const auto& p : profiles) pmap.emplace(p.family_id, p);
  auto ds = build_hard_negative_dataset(group_families(records), pmap, cfg.hard_negatives(), cfg.seed(), threads);
  counts["families"] = ds.families_total;
  counts["families_ineligible"] = ds.families_ineligible;
  counts["families_missing_profile"] = ds.families_missing_profile;
  counts["anchors"] = ds.anchors;
  counts["with_hard_negative"] = ds.with_hard_negative;
  counts["hard_negative_fraction"] = ds.hard_negative_fraction();
  counts["output"] = ds.rows.size();
  return ds;
}

/// Dataset slots in plan order.
enum class Slot : std::size_t { pfam, hard_neg, afdb, string, dms };
inline constexpr std::array<const char*, 5> kSlotNames = {"pfam", "hard_neg", "afdb", "string", "dms"};

struct DataFiles {
  std::array<std::optional<std::string>, 5> paths;

  std::optional<std::string>& operator[](Slot s) { return paths[static_cast<std::size_t>(s)]; }
  const std::optional<std::string>& operator[](Slot s) const { return paths[static_cast<std::size_t>(s)]; }
};

inline TrainingSet grouped_set(const std::string& name, const std::vector<SequenceRecord>& records,
                               const EmbeddingResolver& resolver) {
  TrainingSet s;
  s.name = name;
  s.layout = TrainingSet::Layout::grouped;
  for (const auto& r : records) {
    auto row = resolver.find(r.id);
    s.rows.push_back(row ? *row : resolver.resolve(r.sequence));
    s.groups.push_back(r.group_id.value_or(""));
  }
  return s;
}

inline TrainingSet pair_set(const std::string& name, const std::vector<PairExample>& pairs,
                            const EmbeddingResolver& resolver) {
  TrainingSet s;
  s.name = name;
  s.layout = TrainingSet::Layout::pairs;
  for (const auto& p : pairs) {
    TrainingSet::Pair row{resolver.resolve(p.anchor), resolver.resolve(p.positive), std::nullopt};
    if (p.hard_negative) row.hard_negative = resolver.resolve(*p.hard_negative);
    s.pairs.push_back(row);
    s.groups.push_back(p.group);
  }
  return s;
}

inline TrainingSet scored_set(const std::string& name, const std::vector<ScoredPair>& rows,
                              const EmbeddingResolver& resolver) {
  TrainingSet s;
  s.name = name;
  s.layout = TrainingSet::Layout::scored;
  for (const auto& r : rows) s.scored.push_back({resolver.resolve(r.seq1), resolver.resolve(r.seq2), r.score});
  return s;
}

/// Loads every present slot in plan order; pfam/afdb are grouped JSONL,
/// hard_neg/string pair JSONL, dms scored JSONL.
inline std::vector<TrainingSet> load_training_sets(const DataFiles& files, const EmbeddingResolver& resolver) {
  std::vector<TrainingSet> sets;
  for (std::size_t i = 0; i < files.paths.size(); ++i) {
    if (!files.paths[i]) continue;
    const std::string& path = *files.paths[i];
    const auto slot = static_cast<Slot>(i);
    try {
      switch (slot) {
        case Slot::pfam:
        case Slot::afdb: {
          const auto recs = with_input_file(path, [](std::istream& in) { return read_grouped(in); });
          sets.push_back(grouped_set(kSlotNames[i], recs, resolver));
          break;
        }
        case Slot::hard_neg:
        case Slot::string: sets.push_back(pair_set(kSlotNames[i], read_pairs_file(path), resolver)); break;
        case Slot::dms: sets.push_back(scored_set(kSlotNames[i], read_scored_file(path), resolver)); break;
      }
    } catch (const ParseError& e) {
      throw Error(std::string(kSlotNames[i]) + " (" + path + "): " + e.what());
    }
  }
  return sets;
}

inline TrainerConfig trainer_config(const RunConfig& cfg) {
  TrainerConfig t;
  t.micro_batch = cfg.count("sampler.batch_size");
  t.effective_batch = cfg.count("trainer.effective_batch");
  t.warmup_steps = cfg.count("trainer.warmup_steps");
  t.base_lr = cfg.real("trainer.lr");
  t.min_lr = cfg.real("trainer.min_lr");
  t.adamw.beta1 = cfg.real("trainer.beta1");
  t.adamw.beta2 = cfg.real("trainer.beta2");
  t.adamw.eps = cfg.real("trainer.eps");
  t.adamw.weight_decay = cfg.real("trainer.weight_decay");
  t.scale = cfg.real("trainer.scale");
  t.init_scale = cfg.real("trainer.init_scale");
  t.bias = cfg.boolean("trainer.bias");
  return t;
}

struct TrainRun {
  BatchPlan plan;
  TrainResult result;
};

inline TrainRun run_training(const Matrix& embeddings, const std::vector<TrainingSet>& sets, const RunConfig& cfg,
                             SamplerKind sampler) {
  if (sets.empty()) throw Error("no training datasets given");
  const auto tc = trainer_config(cfg);
  TrainRun run;
  run.plan = make_training_plan(sets, sampler, tc.micro_batch, cfg.count("sampler.max_pairs"), cfg.seed());
  const auto init = AdapterParams::identity(static_cast<std::size_t>(embeddings.cols()), tc.init_scale, cfg.seed(), tc.bias);
  run.result = train_adapter(embeddings, sets, run.plan, tc, init);
  return run;
}

/// Baseline = row-normalized input embeddings (identity adapter); trained =
/// adapter output. Both sides are probed identically.
inline EvalReport run_eval(const Matrix& baseline, const Matrix& trained, const std::vector<EvalTask>& tasks,
                           const RunConfig& cfg, unsigned threads = 1) {
  std::vector<std::string> names, metrics;
  std::vector<double> b, t;
  for (const auto& task : tasks) {
    names.push_back(task.name);
    std::string metric = to_string(task.metric);
    if (task.metric == TaskMetric::recall_at_k) metric = "recall@" + std::to_string(task.recall_k);
    metrics.push_back(metric);
    b.push_back(evaluate_task(baseline, task, cfg.seed(), threads));
    t.push_back(evaluate_task(trained, task, cfg.seed(), threads));
  }
  auto report = delta_report(names, b, t, metrics);
  report.seed = cfg.seed();
  return report;
}

// ---------------------------------------------------------------------------
// Ablations
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {"drop_pfam", "drop_hard_neg", "drop_afdb",
                                                 "drop_string", "drop_dms", "proportional"};
  return names;
}

/// Applies an ablation to the dataset list and sampler; "full" is the
/// unmodified configuration.
inline std::pair<std::vector<TrainingSet>, SamplerKind> apply_ablation(const std::string& ablation,
                                                                       const std::vector<TrainingSet>& sets,
                                                                       SamplerKind sampler) {
  if (ablation == "full") return {sets, sampler};
  if (ablation == "proportional") return {sets, SamplerKind::proportional};
  if (ablation.rfind("drop_", 0) != 0) throw Error("unknown ablation '" + ablation + "'");
  const std::string victim = ablation.substr(5);
  bool known = false;
  for (const char* n : kSlotNames) known |= victim == n;
  if (!known) throw Error("unknown ablation '" + ablation + "'");
  std::vector<TrainingSet> kept;
  for (const auto& s : sets) {
    if (s.name != victim) kept.push_back(s);
  }
  return {kept, sampler};
}

struct AblationRow {
  std::string config;
  std::size_t improved = 0;
  std::size_t total = 0;
  double mean_delta_pct = 0.0;
  std::size_t cosent_steps = 0;
  std::size_t plan_steps = 0;
};

inline std::size_t count_steps(const BatchPlan& plan, const std::vector<TrainingSet>& sets, LossKind kind) {
  std::size_t n = 0;
  for (const auto& s : plan.steps) n += sets.at(s.dataset).loss() == kind;
  return n;
}

inline nlohmann::ordered_json to_json(const std::vector<AblationRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"config", r.config},
                   {"tasks_improved", r.improved},
                   {"tasks_total", r.total},
                   {"mean_delta_pct", r.mean_delta_pct},
                   {"plan_steps", r.plan_steps},
                   {"cosent_steps", r.cosent_steps}});
  }
  return arr;
}

/// Config | Tasks improved | Mean delta %.
inline std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.config.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w)) << "Config" << "  " << std::right << std::setw(14) << "Tasks improved"
     << std::setw(14) << "Mean delta %" << '\n';
  os << std::fixed << std::setprecision(1);
  for (const auto& r : rows) {
    const std::string frac = std::to_string(r.improved) + "/" + std::to_string(r.total);
    os << std::left << std::setw(static_cast<int>(w)) << r.config << "  " << std::right << std::setw(14) << frac
       << std::setw(13) << std::showpos << r.mean_delta_pct << std::noshowpos << "%\n";
  }
  return os.str();
}

}  // namespace protsent
