// protsent: data preparation, adapter training, evaluation and ablations.
//
// Exit codes: 0 success, 2 usage or input error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "protsent/manifest.hpp"
#include "protsent/pipeline.hpp"
#include "protsent/synthetic.hpp"

namespace fs = std::filesystem;
using namespace protsent;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string out;
  unsigned threads = default_threads();
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI run config (defaults reproduce the reference recipe)");
  cmd->add_option("--set", c.overrides, "Override a config key: section.key=value (repeatable)");
  cmd->add_option("--out", c.out, "Output directory")->required();
  cmd->add_option("--threads", c.threads, "Worker threads (default: PROTSENT_THREADS or 1)")->check(CLI::PositiveNumber);
}

void require_input(const std::string& path) {
  if (!fs::is_regular_file(path)) throw Error("input not found: " + path);
}

RunConfig load_config(const Common& c) {
  RunConfig cfg;
  if (!c.config.empty()) {
    require_input(c.config);
    cfg = RunConfig::load(c.config);
  }
  for (const auto& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

std::string out_path(const Common& c, const std::string& name) { return (fs::path(c.out) / name).string(); }

template <typename Fn>
std::string write_output(const Common& c, const std::string& name, Fn&& fn) {
  fs::create_directories(c.out);
  const auto path = out_path(c, name);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  fn(out);
  out.close();
  if (!out) throw Error("write failed: '" + path + "'");
  return path;
}

void finish(const Common& c, Manifest& m, const std::vector<std::string>& outputs) {
  for (const auto& p : outputs) m.add_output(p);
  fs::create_directories(c.out);
  m.write(out_path(c, "manifest.json"));
}

std::string write_records(const Common& c, const std::string& name, const std::vector<SequenceRecord>& recs) {
  return write_output(c, name, [&](std::ostream& o) { write_grouped(o, recs); });
}

// ---------------------------------------------------------------------------
// prep-*
// ---------------------------------------------------------------------------

struct PrepPfam {
  Common common;
  std::string fasta;
  bool keep_members = false;

  void run() {
    require_input(fasta);
    const auto cfg = load_config(common);
    Manifest m("prep-pfam", cfg, common.threads);
    m.add_input("fasta", fasta);
    Counts counts;
    const auto recs = prep_pfam(read_fasta_file(fasta), cfg, keep_members, counts);
    m.extra()["counts"] = counts;
    finish(common, m, {write_records(common, "pfam.jsonl", recs)});
  }
};

struct PrepGrouped {
  Common common;
  std::string fasta;
  std::string meta;

  void run() {
    require_input(fasta);
    require_input(meta);
    const auto cfg = load_config(common);
    Manifest m("prep-grouped", cfg, common.threads);
    m.add_input("fasta", fasta);
    m.add_input("meta", meta);
    Counts counts;
    const auto recs = prep_afdb(read_fasta_file(fasta), read_meta_tsv(meta), cfg, counts);
    m.extra()["counts"] = counts;
    finish(common, m, {write_records(common, "afdb.jsonl", recs)});
  }
};

struct PrepPpi {
  Common common;
  std::string edges;
  std::string fasta;
  std::string test_fasta;

  void run() {
    require_input(edges);
    require_input(fasta);
    if (!test_fasta.empty()) require_input(test_fasta);
    const auto cfg = load_config(common);
    Manifest m("prep-ppi", cfg, common.threads);
    m.add_input("edges", edges);
    m.add_input("fasta", fasta);
    std::vector<SequenceRecord> test;
    if (!test_fasta.empty()) {
      m.add_input("test_fasta", test_fasta);
      test = read_fasta_file(test_fasta);
    }
    Counts counts;
    const auto pairs = prep_ppi(read_edges(edges), read_fasta_file(fasta), test_fasta.empty() ? nullptr : &test, cfg, counts);
    m.extra()["counts"] = counts;
    finish(common, m, {write_output(common, "string.jsonl", [&](std::ostream& o) { write_pairs(o, pairs); })});
  }
};

struct PrepDms {
  Common common;
  std::string input;

  void run() {
    require_input(input);
    const auto cfg = load_config(common);
    Manifest m("prep-dms", cfg, common.threads);
    m.add_input("dms", input);
    Counts counts;
    const auto pairs = prep_dms(read_dms_file(input), cfg, counts);
    m.extra()["counts"] = counts;
    finish(common, m, {write_output(common, "dms.jsonl", [&](std::ostream& o) { write_scored(o, pairs); })});
  }
};

struct PrepHardNegatives {
  Common common;
  std::string fasta;
  std::string profiles;

  void run() {
    require_input(fasta);
    require_input(profiles);
    const auto cfg = load_config(common);
    Manifest m("prep-hard-negatives", cfg, common.threads);
    m.add_input("fasta", fasta);
    m.add_input("profiles", profiles);
    const auto pms = with_input_file(profiles, [&](std::istream& in) { return parse_hmm_profiles(in, cfg.background()); });
    Counts counts;
    const auto ds = prep_hard_negatives(read_fasta_file(fasta), pms, cfg, common.threads, counts);
    m.extra()["counts"] = counts;
    for (const auto& w : ds.warnings) std::cerr << "warning: " << w << '\n';
    finish(common, m, {write_output(common, "hard_neg.jsonl", [&](std::ostream& o) { write_pairs(o, ds.rows); })});
  }
};

// ---------------------------------------------------------------------------
// gen-synthetic
// ---------------------------------------------------------------------------

struct GenSynthetic {
  Common common;
  SyntheticSpec spec;

  void run() {
    const auto cfg = load_config(common);
    Manifest m("gen-synthetic", cfg, common.threads);
    const auto c = gen_synthetic(spec, cfg.seed(), cfg.hard_negatives());
    auto& sp = m.extra()["synthetic"];
    sp = {{"groups", spec.groups},       {"members", spec.members},   {"heldout", spec.heldout},
          {"dim", spec.dim},             {"signal_dims", spec.signal_dims}, {"noise", spec.noise},
          {"nuisance_scale", spec.nuisance_scale}, {"len_min", spec.len_min}, {"len_max", spec.len_max},
          {"dms_assays", spec.dms_assays}, {"dms_per_assay", spec.dms_per_assay}};

    std::vector<std::string> outs;
    auto fasta = [&](const std::string& name, const std::vector<SequenceRecord>& recs) {
      outs.push_back(write_output(common, name, [&](std::ostream& o) { write_fasta(o, recs); }));
    };
    // Raw sources for the prep commands.
    fasta("members.fasta", c.members);
    fasta("heldout.fasta", c.heldout);
    fasta("afdb.fasta", c.afdb);
    outs.push_back(write_output(common, "afdb_meta.tsv", [&](std::ostream& o) {
      o << "id\tplddt\tfragment\tcluFlag\tafdb50_cluster\tfoldseek_rep\n";
      for (const auto& r : c.afdb) {
        o << r.id << '\t' << r.meta.at("plddt") << '\t' << r.meta.at("fragment") << '\t' << r.meta.at("cluFlag") << '\t'
          << r.meta.at("afdb50_cluster") << '\t' << r.meta.at("foldseek_rep") << '\n';
      }
    }));
    outs.push_back(write_output(common, "profiles.hmm", [&](std::ostream& o) {
      for (const auto& p : c.profiles) write_hmm_profile(o, p);
    }));
    fasta("string_proteins.fasta", c.string_proteins);
    outs.push_back(write_output(common, "string_edges.tsv", [&](std::ostream& o) {
      o << "protein1 protein2 combined_score\n";
      for (const auto& e : c.string_edges) o << e.id1 << ' ' << e.id2 << ' ' << e.combined_score << '\n';
    }));
    outs.push_back(write_output(common, "dms_raw.jsonl", [&](std::ostream& o) {
      for (const auto& r : c.dms) o << encode_dms_row(r) << '\n';
    }));

    // Embeddings and training-ready datasets.
    fasta("sequences.fasta", c.sidecar);
    write_embeddings(c.embeddings, out_path(common, "embeddings.pemb"));
    outs.push_back(out_path(common, "embeddings.pemb"));
    Counts counts;
    outs.push_back(write_records(common, "pfam.jsonl", build_grouped_pairs(c.members, GroupedLayout::pfam, cfg.seed())));
    Counts afdb_counts;
    auto afdb_meta = std::map<std::string, std::map<std::string, std::string>>{};
    for (const auto& r : c.afdb) afdb_meta[r.id] = r.meta;
    outs.push_back(write_records(common, "afdb.jsonl", prep_afdb(c.afdb, afdb_meta, cfg, afdb_counts)));
    outs.push_back(write_output(common, "hard_neg.jsonl", [&](std::ostream& o) { write_pairs(o, c.hard_negatives.rows); }));
    outs.push_back(write_output(common, "string.jsonl", [&](std::ostream& o) { write_pairs(o, c.ppi); }));
    Counts dms_counts;
    const auto dms = prep_dms(c.dms, cfg, dms_counts);
    outs.push_back(write_output(common, "dms.jsonl", [&](std::ostream& o) { write_scored(o, dms); }));
    for (const auto& p : write_synthetic_tasks(c.tasks, out_path(common, "tasks"))) outs.push_back(p);

    counts["members"] = c.members.size();
    counts["heldout"] = c.heldout.size();
    counts["embeddings"] = c.embeddings.size();
    counts["hard_negative_rows"] = c.hard_negatives.rows.size();
    counts["hard_negative_fraction"] = c.hard_negatives.hard_negative_fraction();
    counts["afdb"] = afdb_counts;
    counts["dms"] = dms_counts;
    m.extra()["counts"] = counts;
    finish(common, m, outs);
  }
};

// ---------------------------------------------------------------------------
// train / eval / ablate / few-shot
// ---------------------------------------------------------------------------

struct EmbeddingInputs {
  std::string embeddings;
  std::vector<std::string> sidecars;

  void add(CLI::App* cmd) {
    cmd->add_option("--embeddings", embeddings, "PEMB1 embedding file")->required();
    cmd->add_option("--fasta", sidecars, "Sidecar FASTA mapping sequences to embedding ids (repeatable)");
  }

  EmbeddingSet load(Manifest& m) const {
    require_input(embeddings);
    for (const auto& s : sidecars) require_input(s);
    m.add_input("embeddings", embeddings);
    for (const auto& s : sidecars) m.add_input("fasta", s);
    return read_embeddings(embeddings);
  }

  EmbeddingResolver resolver(const EmbeddingSet& set) const {
    EmbeddingResolver r(set);
    for (const auto& s : sidecars) r.add_sidecar(read_fasta_file(s));
    return r;
  }
};

struct DataInputs {
  DataFiles files;
  std::array<std::string, 5> raw;

  void add(CLI::App* cmd) {
    cmd->add_option("--pfam", raw[0], "Grouped Pfam stream (JSONL)");
    cmd->add_option("--hard-neg", raw[1], "Hard-negative pairs (JSONL)");
    cmd->add_option("--afdb", raw[2], "Grouped AFDB-style stream (JSONL)");
    cmd->add_option("--string", raw[3], "Interaction pairs (JSONL)");
    cmd->add_option("--dms", raw[4], "Scored DMS pairs (JSONL)");
  }

  const DataFiles& resolve(Manifest& m) {
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i].empty()) continue;
      require_input(raw[i]);
      m.add_input(kSlotNames[i], raw[i]);
      files.paths[i] = raw[i];
    }
    return files;
  }
};

std::vector<EvalTask> load_tasks(const std::vector<std::string>& paths, const EmbeddingSet& set, Manifest& m) {
  const auto index = set.index();
  std::vector<EvalTask> tasks;
  for (const auto& p : paths) {
    require_input(p);
    m.add_input("task", p);
    tasks.push_back(load_task_manifest(p, index));
  }
  return tasks;
}

Matrix trained_matrix(const std::string& adapter_path, const EmbeddingSet& set, Manifest& m) {
  if (adapter_path.empty()) return l2_normalize_rows(set.matrix);
  require_input(adapter_path);
  m.add_input("adapter", adapter_path);
  const auto params = decode_adapter(read_file_bytes(adapter_path));
  return adapter_forward(params, set.matrix);
}

struct Train {
  Common common;
  EmbeddingInputs emb;
  DataInputs data;
  std::string sampler;

  void run() {
    const auto cfg = load_config(common);
    Manifest m("train", cfg, common.threads);
    const auto set = emb.load(m);
    const auto sets = load_training_sets(data.resolve(m), emb.resolver(set));
    const auto kind = parse_sampler_kind(sampler.empty() ? cfg.text("sampler.kind") : sampler);
    const auto run = run_training(set.matrix, sets, cfg, kind);

    std::vector<std::string> names;
    Counts counts;
    for (const auto& s : sets) {
      names.push_back(s.name);
      counts["rows"][s.name] = s.size();
    }
    counts["plan_steps"] = run.plan.steps.size();
    counts["optimizer_steps"] = run.result.optimizer_steps;
    counts["cosent_steps"] = count_steps(run.plan, sets, LossKind::cosent);
    if (!run.result.log.empty()) counts["final_loss"] = run.result.log.back().loss;
    m.extra()["sampler"] = to_string(kind);
    m.extra()["counts"] = counts;

    std::vector<std::string> outs;
    outs.push_back(write_output(common, "adapter.padp", [&](std::ostream& o) { o << encode_adapter(run.result.params); }));
    outs.push_back(write_output(common, "loss_log.jsonl", [&](std::ostream& o) { write_loss_log(o, run.result.log, names); }));
    outs.push_back(write_output(common, "plan.jsonl", [&](std::ostream& o) { write_plan_jsonl(o, run.plan); }));
    finish(common, m, outs);
  }
};

struct Eval {
  Common common;
  EmbeddingInputs emb;
  std::string adapter;
  std::vector<std::string> task_paths;

  void run() {
    const auto cfg = load_config(common);
    Manifest m("eval", cfg, common.threads);
    const auto set = emb.load(m);
    const auto tasks = load_tasks(task_paths, set, m);
    const Matrix baseline = l2_normalize_rows(set.matrix);
    const Matrix trained = trained_matrix(adapter, set, m);
    auto report = run_eval(baseline, trained, tasks, cfg, common.threads);
    report.config_hash = config_hash(cfg);

    auto json = to_json(report);
    // Full Recall@K curves for retrieval tasks.
    for (const auto& t : tasks) {
      if (t.kind != TaskKind::retrieval) continue;
      const auto ks = cfg.counts("eval.recall_k");
      for (const auto& [side, mat] : {std::pair{"baseline", &baseline}, std::pair{"trained", &trained}}) {
        const auto r = recall_at_k(detail::rows_of(*mat, t.rows, [&] {
                                     std::vector<std::size_t> all(t.rows.size());
                                     std::iota(all.begin(), all.end(), 0);
                                     return all;
                                   }()),
                                   t.labels, ks, common.threads);
        auto& node = json["retrieval"][t.name];
        for (const auto& [k, v] : r.recall) node[side]["recall@" + std::to_string(k)] = v;
        node["queries"] = r.queries;
        node["excluded_singletons"] = r.excluded_singletons;
      }
    }
    std::vector<std::string> outs;
    outs.push_back(write_output(common, "report.json", [&](std::ostream& o) { o << json.dump(2) << '\n'; }));
    outs.push_back(write_output(common, "report.txt", [&](std::ostream& o) { o << format_table(report); }));
    std::cout << format_table(report);
    finish(common, m, outs);
  }
};

struct Ablate {
  Common common;
  EmbeddingInputs emb;
  DataInputs data;
  std::vector<std::string> task_paths;
  std::vector<std::string> ablations;
  std::string sampler;

  void run() {
    const auto cfg = load_config(common);
    Manifest m("ablate", cfg, common.threads);
    const auto set = emb.load(m);
    const auto sets = load_training_sets(data.resolve(m), emb.resolver(set));
    const auto tasks = load_tasks(task_paths, set, m);
    const auto base_kind = parse_sampler_kind(sampler.empty() ? cfg.text("sampler.kind") : sampler);

    std::vector<std::string> configs = {"full"};
    if (ablations.empty() || (ablations.size() == 1 && ablations[0] == "all")) {
      for (const auto& a : ablation_names()) configs.push_back(a);
    } else {
      for (const auto& a : ablations) configs.push_back(a);
    }

    const Matrix baseline = l2_normalize_rows(set.matrix);
    std::vector<AblationRow> rows;
    std::vector<std::string> outs;
    for (const auto& name : configs) {
      auto [ab_sets, kind] = apply_ablation(name, sets, base_kind);
      const auto run = run_training(set.matrix, ab_sets, cfg, kind);
      const Matrix trained = adapter_forward(run.result.params, set.matrix);
      auto report = run_eval(baseline, trained, tasks, cfg, common.threads);
      report.config_hash = config_hash(cfg);
      rows.push_back({name, report.improved, report.tasks.size(), report.mean_delta_pct,
                      count_steps(run.plan, ab_sets, LossKind::cosent), run.plan.steps.size()});
      outs.push_back(write_output(common, "report_" + name + ".json", [&](std::ostream& o) { o << to_json(report).dump(2) << '\n'; }));
    }
    outs.push_back(write_output(common, "ablation.json", [&](std::ostream& o) { o << to_json(rows).dump(2) << '\n'; }));
    outs.push_back(write_output(common, "ablation.txt", [&](std::ostream& o) { o << format_ablation_table(rows); }));
    std::cout << format_ablation_table(rows);
    finish(common, m, outs);
  }
};

struct FewShot {
  Common common;
  EmbeddingInputs emb;
  std::string adapter;
  std::string task_path;
  std::vector<std::size_t> n_values;
  bool stratified = false;

  void run() {
    const auto cfg = load_config(common);
    Manifest m("few-shot", cfg, common.threads);
    const auto set = emb.load(m);
    const auto tasks = load_tasks({task_path}, set, m);
    const Matrix baseline = l2_normalize_rows(set.matrix);
    const Matrix trained = trained_matrix(adapter, set, m);
    const auto ns = n_values.empty() ? cfg.counts("eval.few_shot_n") : n_values;
    const bool strat = stratified || cfg.boolean("eval.few_shot_stratified");
    const auto rows = few_shot(baseline, trained, tasks[0], ns, cfg.seed(), strat, common.threads);

    nlohmann::ordered_json j;
    j["task"] = tasks[0].name;
    j["stratified"] = strat;
    auto arr = nlohmann::ordered_json::array();
    std::ostringstream txt;
    txt << std::setw(8) << "N" << std::setw(12) << "Baseline" << std::setw(12) << "Trained" << std::setw(10) << "Delta %" << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr); };
    auto cell = [](const std::optional<double>& v, int w, int prec) {
      std::ostringstream os;
      os << std::setw(w);
      if (v) os << std::fixed << std::setprecision(prec) << *v;
      else os << "N/A";
      return os.str();
    };
    for (const auto& r : rows) {
      arr.push_back({{"n", r.n}, {"skipped", r.skipped}, {"baseline", opt(r.baseline)}, {"trained", opt(r.trained)},
                     {"delta_pct", opt(r.delta_pct)}});
      if (r.skipped) continue;
      txt << std::setw(8) << r.n << cell(r.baseline, 12, 3) << cell(r.trained, 12, 3) << cell(r.delta_pct, 10, 1) << '\n';
    }
    j["rows"] = std::move(arr);
    std::vector<std::string> outs;
    outs.push_back(write_output(common, "fewshot.json", [&](std::ostream& o) { o << j.dump(2) << '\n'; }));
    outs.push_back(write_output(common, "fewshot.txt", [&](std::ostream& o) { o << txt.str(); }));
    std::cout << txt.str();
    finish(common, m, outs);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"protsent: contrastive fine-tuning toolkit for protein embeddings"};
  app.require_subcommand(1);

  PrepPfam prep_pfam_cmd;
  auto* c = app.add_subcommand("prep-pfam", "Cluster and sort a family-tagged FASTA into a grouped stream");
  add_common(c, prep_pfam_cmd.common);
  c->add_option("--fasta", prep_pfam_cmd.fasta, "FASTA with Pfam accessions or group=/clan= tags")->required();
  c->add_flag("--keep-members", prep_pfam_cmd.keep_members, "Keep same-family cluster members, not only representatives");

  PrepGrouped prep_grouped_cmd;
  c = app.add_subcommand("prep-grouped", "Filter and cluster-sort an AFDB-style FASTA + metadata TSV");
  add_common(c, prep_grouped_cmd.common);
  c->add_option("--fasta", prep_grouped_cmd.fasta, "Sequences")->required();
  c->add_option("--meta", prep_grouped_cmd.meta, "TSV: id, plddt, fragment, cluFlag, afdb50_cluster, foldseek_rep")->required();

  PrepPpi prep_ppi_cmd;
  c = app.add_subcommand("prep-ppi", "Build interaction pairs from an edge list");
  add_common(c, prep_ppi_cmd.common);
  c->add_option("--edges", prep_ppi_cmd.edges, "Edge list: id1 id2 combined_score")->required();
  c->add_option("--fasta", prep_ppi_cmd.fasta, "Protein sequences")->required();
  c->add_option("--test-fasta", prep_ppi_cmd.test_fasta, "Held-out test proteins for decontamination");

  PrepDms prep_dms_cmd;
  c = app.add_subcommand("prep-dms", "Normalize and split DMS / clinical rows");
  add_common(c, prep_dms_cmd.common);
  c->add_option("--input", prep_dms_cmd.input, "DMS JSONL rows")->required();

  PrepHardNegatives prep_hn_cmd;
  c = app.add_subcommand("prep-hard-negatives", "Sample profile-guided hard negatives");
  add_common(c, prep_hn_cmd.common);
  c->add_option("--fasta", prep_hn_cmd.fasta, "Family-tagged FASTA")->required();
  c->add_option("--profiles", prep_hn_cmd.profiles, "HMMER3 ASCII profiles")->required();

  GenSynthetic gen_cmd;
  c = app.add_subcommand("gen-synthetic", "Write a synthetic corpus with embeddings, datasets and tasks");
  add_common(c, gen_cmd.common);
  c->add_option("--groups", gen_cmd.spec.groups, "Groups")->capture_default_str();
  c->add_option("--members", gen_cmd.spec.members, "Training members per group")->capture_default_str();
  c->add_option("--heldout", gen_cmd.spec.heldout, "Held-out members per group")->capture_default_str();
  c->add_option("--dim", gen_cmd.spec.dim, "Embedding dimension")->capture_default_str();
  c->add_option("--signal-dims", gen_cmd.spec.signal_dims, "Dimensions carrying group signal")->capture_default_str();
  c->add_option("--noise", gen_cmd.spec.noise, "Within-group noise std")->capture_default_str();
  c->add_option("--nuisance-scale", gen_cmd.spec.nuisance_scale, "Nuisance std relative to noise")->capture_default_str();
  c->add_option("--len-min", gen_cmd.spec.len_min, "Minimum sequence length")->capture_default_str();
  c->add_option("--len-max", gen_cmd.spec.len_max, "Maximum sequence length")->capture_default_str();
  c->add_option("--afdb-members", gen_cmd.spec.afdb_members, "AFDB-style members per group")->capture_default_str();
  c->add_option("--string-groups", gen_cmd.spec.string_groups, "Groups in the raw edge list")->capture_default_str();
  c->add_option("--dms-assays", gen_cmd.spec.dms_assays, "DMS assays")->capture_default_str();
  c->add_option("--dms-per-assay", gen_cmd.spec.dms_per_assay, "Mutants per assay")->capture_default_str();

  Train train_cmd;
  c = app.add_subcommand("train", "Train the adapter over a multi-dataset plan");
  add_common(c, train_cmd.common);
  train_cmd.emb.add(c);
  train_cmd.data.add(c);
  c->add_option("--sampler", train_cmd.sampler, "round_robin or proportional (default from config)");

  Eval eval_cmd;
  c = app.add_subcommand("eval", "KNN-probe and retrieval evaluation, baseline vs adapter");
  add_common(c, eval_cmd.common);
  eval_cmd.emb.add(c);
  c->add_option("--adapter", eval_cmd.adapter, "Adapter checkpoint (omit to compare the baseline with itself)");
  c->add_option("--tasks", eval_cmd.task_paths, "Task manifests (JSON)")->required();

  Ablate ablate_cmd;
  c = app.add_subcommand("ablate", "Retrain and evaluate under dataset / sampler ablations");
  add_common(c, ablate_cmd.common);
  ablate_cmd.emb.add(c);
  ablate_cmd.data.add(c);
  c->add_option("--tasks", ablate_cmd.task_paths, "Task manifests (JSON)")->required();
  c->add_option("--ablation", ablate_cmd.ablations,
                "drop_pfam, drop_hard_neg, drop_afdb, drop_string, drop_dms, proportional, or all (default)");
  c->add_option("--sampler", ablate_cmd.sampler, "Base sampler (default from config)");

  FewShot few_cmd;
  c = app.add_subcommand("few-shot", "Few-shot probe curves on one task");
  add_common(c, few_cmd.common);
  few_cmd.emb.add(c);
  c->add_option("--adapter", few_cmd.adapter, "Adapter checkpoint");
  c->add_option("--task", few_cmd.task_path, "Task manifest with an explicit train/test split")->required();
  c->add_option("--n", few_cmd.n_values, "Training subsample sizes (default from config)")->delimiter(',');
  c->add_flag("--stratified", few_cmd.stratified, "Round-robin over labels when subsampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "prep-pfam") prep_pfam_cmd.run();
    else if (cmd == "prep-grouped") prep_grouped_cmd.run();
    else if (cmd == "prep-ppi") prep_ppi_cmd.run();
    else if (cmd == "prep-dms") prep_dms_cmd.run();
    else if (cmd == "prep-hard-negatives") prep_hn_cmd.run();
    else if (cmd == "gen-synthetic") gen_cmd.run();
    else if (cmd == "train") train_cmd.run();
    else if (cmd == "eval") eval_cmd.run();
    else if (cmd == "ablate") ablate_cmd.run();
    else if (cmd == "few-shot") few_cmd.run();
  } catch (const NumericError& e) {
    std::cerr << "protsent " << cmd << ": numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "protsent " << cmd << ": " << e.what() << '\n';
    return 2;
  }
  return 0;
}
