#pragma once

// Desk-scale synthetic corpora standing in for the real sources. Groups are
// sequence families (a random template plus point mutations) whose
// embeddings carry the group in "signal" dimensions and per-record noise in
// "nuisance" dimensions. A linear adapter can learn to suppress the nuisance
// part, which is what the training tests exercise.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "protsent/common.hpp"
#include "protsent/datasets.hpp"
#include "protsent/profile.hpp"
#include "protsent/seqio.hpp"

namespace protsent {

struct SyntheticSpec {
  std::size_t groups = 64;
  std::size_t members = 32;           // training members per group
  std::size_t heldout = 8;            // evaluation members per group
  std::size_t heldout_train = 5;      // of which used as probe training items
  std::size_t groups_per_clan = 4;
  std::size_t dim = 32;
  std::size_t signal_dims = 16;
  double group_scale = 1.0;           // std of group-mean coordinates
  double noise = 0.5;                 // within-group std in signal dims
  double nuisance_scale = 3.5;        // nuisance std = noise * nuisance_scale
  std::size_t len_min = 40;
  std::size_t len_max = 80;
  double mutation_rate = 0.2;         // per-residue substitution rate vs template
  double profile_peak = 0.6;          // template residue emission probability
  std::size_t afdb_members = 8;       // extra members per group in the AFDB-style source
  std::size_t ppi_per_group = 8;
  std::size_t string_groups = 8;      // groups exported as raw interaction input
  std::size_t dms_assays = 4;
  std::size_t dms_per_assay = 40;
  double dms_shift = 1.5;

  void validate() const {
    if (groups < 2 || members < 2) throw Error("synthetic: need >= 2 groups and >= 2 members");
    if (signal_dims == 0 || signal_dims > dim) throw Error("synthetic: need 0 < signal_dims <= dim");
    if (len_min < 10 || len_max < len_min) throw Error("synthetic: need 10 <= len_min <= len_max");
    if (heldout_train > heldout) throw Error("synthetic: heldout_train exceeds heldout");
    if (dms_assays > groups) throw Error("synthetic: more DMS assays than groups");
    if (noise < 0.0 || nuisance_scale < 0.0 || group_scale < 0.0) throw Error("synthetic: scales must be >= 0");
  }
};

struct SyntheticTask {
  std::string name;
  std::string kind;
  std::string metric;
  std::vector<std::pair<std::string, std::string>> labels;  // id -> label
  std::vector<std::string> train;
  std::vector<std::string> test;
};

struct SyntheticCorpus {
  std::vector<SequenceRecord> members;  // group_id = family, meta clan
  std::vector<SequenceRecord> heldout;
  std::vector<SequenceRecord> afdb;     // meta plddt/fragment/cluFlag/afdb50_cluster/foldseek_rep
  std::vector<ProfileMatrix> profiles;
  HardNegativeDataset hard_negatives;
  std::vector<PairExample> ppi;
  std::vector<PpiEdge> string_edges;
  std::vector<SequenceRecord> string_proteins;
  std::vector<DmsRow> dms;
  std::vector<SequenceRecord> sidecar;  // every embedded id with its sequence
  EmbeddingSet embeddings;
  std::vector<SyntheticTask> tasks;
};

namespace detail {

inline std::string random_protein(Rng& rng, std::size_t len) {
  std::string s(len, 'A');
  for (auto& c : s) c = kAminoAcids[rng.uniform_index(kNumAminoAcids)];
  return s;
}

inline std::string point_mutate(const std::string& tmpl, double rate, Rng& rng) {
  std::string s = tmpl;
  for (auto& c : s) {
    if (rng.uniform01() < rate) {
      char r;
      do {
        r = kAminoAcids[rng.uniform_index(kNumAminoAcids)];
      } while (r == c);
      c = r;
    }
  }
  return s;
}

inline std::string pad_id(const char* prefix, std::size_t i, int width = 4) {
  std::string n = std::to_string(i);
  if (n.size() < static_cast<std::size_t>(width)) n.insert(0, static_cast<std::size_t>(width) - n.size(), '0');
  return prefix + n;
}

}  // namespace detail

/// Profile peaked at each template residue; the remaining mass is spread in
/// proportion to the background.
inline ProfileMatrix template_profile(const std::string& family, const std::string& tmpl, double peak,
                                      const ResidueRow& background = default_background()) {
  ProfileMatrix pm;
  pm.family_id = family;
  pm.model_len = tmpl.size();
  pm.background = background;
  for (char c : tmpl) {
    const auto t = static_cast<std::size_t>(residue_index(c));
    ResidueRow row;
    for (std::size_t a = 0; a < kNumAminoAcids; ++a) {
      row[a] = a == t ? peak : (1.0 - peak) * background[a] / (1.0 - background[t]);
    }
    pm.emissions.push_back(row);
  }
  pm.log_odds = build_log_odds(pm.emissions, background);
  return pm;
}

inline SyntheticCorpus gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed = 42,
                                     const HardNegConfig& hn_cfg = {}) {
  spec.validate();
  SyntheticCorpus c;
  Rng rng(seed);
  const auto d = static_cast<Eigen::Index>(spec.dim);
  const auto sd = static_cast<Eigen::Index>(spec.signal_dims);
  const double nuisance_std = spec.noise * spec.nuisance_scale;

  // Group structure.
  std::vector<std::string> family(spec.groups), templates(spec.groups);
  Matrix means(static_cast<Eigen::Index>(spec.groups), sd);
  for (std::size_t g = 0; g < spec.groups; ++g) {
    family[g] = detail::pad_id("PF", g + 1, 5);
    const std::size_t len = spec.len_min + rng.uniform_index(spec.len_max - spec.len_min + 1);
    templates[g] = detail::random_protein(rng, len);
    for (Eigen::Index j = 0; j < sd; ++j) means(static_cast<Eigen::Index>(g), j) = spec.group_scale * rng.normal();
    c.profiles.push_back(template_profile(family[g], templates[g], spec.profile_peak));
  }
  auto clan_of = [&](std::size_t g) { return detail::pad_id("CL", g / spec.groups_per_clan + 1); };

  // Embeddings are generated per id from an id-derived stream so that they
  // do not depend on generation order.
  std::vector<std::string> emb_ids;
  std::vector<Vector> emb_rows;
  std::map<std::string, std::size_t> row_of_sequence;
  auto id_rng = [&](const std::string& id) { return Rng(splitmix64(seed ^ fnv1a64(id))); };
  auto add_embedding = [&](const std::string& id, const std::string& seq, const Vector& v) {
    row_of_sequence.emplace(seq, emb_rows.size());
    emb_ids.push_back(id);
    emb_rows.push_back(v);
    c.sidecar.push_back({id, seq, std::nullopt, {}});
  };
  auto member_vector = [&](const std::string& id, std::size_t g) {
    Rng r = id_rng(id);
    Vector v(d);
    for (Eigen::Index j = 0; j < sd; ++j) v(j) = means(static_cast<Eigen::Index>(g), j) + spec.noise * r.normal();
    for (Eigen::Index j = sd; j < d; ++j) v(j) = nuisance_std * r.normal();
    return v;
  };
  auto make_member = [&](const std::string& id, std::size_t g) {
    SequenceRecord rec{id, detail::point_mutate(templates[g], spec.mutation_rate, rng), family[g], {}};
    rec.meta["clan"] = clan_of(g);
    rec.meta["desc"] = "group=" + family[g] + " clan=" + clan_of(g);
    add_embedding(id, rec.sequence, member_vector(id, g));
    return rec;
  };

  std::size_t serial = 0;
  for (std::size_t g = 0; g < spec.groups; ++g) {
    for (std::size_t m = 0; m < spec.members; ++m) c.members.push_back(make_member(detail::pad_id("syn", ++serial, 6), g));
  }
  for (std::size_t g = 0; g < spec.groups; ++g) {
    for (std::size_t m = 0; m < spec.heldout; ++m) c.heldout.push_back(make_member(detail::pad_id("evl", ++serial, 6), g));
  }
  for (std::size_t g = 0; g < spec.groups; ++g) {
    for (std::size_t m = 0; m < spec.afdb_members; ++m) {
      auto rec = make_member(detail::pad_id("afd", ++serial, 6), g);
      const std::string cluster = detail::pad_id("AFC", g + 1);
      rec.group_id.reset();
      rec.meta = {{"plddt", m % 7 == 6 ? "55.0" : "85.0"},
                  {"fragment", "0"},
                  {"cluFlag", m % 2 ? "2" : "1"},
                  {"afdb50_cluster", cluster},
                  {"foldseek_rep", cluster}};
      c.afdb.push_back(std::move(rec));
    }
  }

  // Hard negatives: mutants of members whose embedding takes the anchor's
  // nuisance part and another group's signal.
  {
    std::map<std::string, ProfileMatrix> pmap;
    for (const auto& p : c.profiles) pmap.emplace(p.family_id, p);
    c.hard_negatives = build_hard_negative_dataset(group_families(c.members), pmap, hn_cfg, seed);
    std::map<std::string, std::size_t> group_index;
    for (std::size_t g = 0; g < spec.groups; ++g) group_index[family[g]] = g;
    std::size_t k = 0;
    for (const auto& row : c.hard_negatives.rows) {
      if (!row.hard_negative || row_of_sequence.count(*row.hard_negative)) continue;
      const std::string id = detail::pad_id("hng", ++k, 6);
      const std::size_t g = group_index.at(row.group);
      const std::size_t other = (g + 1 + fnv1a64(id) % (spec.groups - 1)) % spec.groups;
      Vector v = member_vector(id, other);
      const Vector anchor = emb_rows.at(row_of_sequence.at(row.anchor));
      v.tail(d - sd) = anchor.tail(d - sd);
      add_embedding(id, *row.hard_negative, v);
    }
  }

  // Interaction pairs within a group, plus a raw edge list over a few groups.
  for (std::size_t g = 0; g < spec.groups; ++g) {
    for (std::size_t p = 0; p < spec.ppi_per_group; ++p) {
      const auto pick = rng.sample_without_replacement(spec.members, 2);
      PairExample e;
      e.anchor = c.members[g * spec.members + pick[0]].sequence;
      e.positive = c.members[g * spec.members + pick[1]].sequence;
      c.ppi.push_back(std::move(e));
    }
  }
  for (std::size_t g = 0; g < std::min(spec.string_groups, spec.groups); ++g) {
    for (std::size_t m = 0; m < spec.members; ++m) {
      const auto& rec = c.members[g * spec.members + m];
      c.string_proteins.push_back({rec.id, rec.sequence, std::nullopt, {}});
    }
    for (std::size_t p = 0; p < spec.ppi_per_group; ++p) {
      const auto pick = rng.sample_without_replacement(spec.members, 2);
      c.string_edges.push_back({c.members[g * spec.members + pick[0]].id, c.members[g * spec.members + pick[1]].id,
                                static_cast<int>(150 + rng.uniform_index(850))});
    }
  }

  // DMS: mutants drift from the wild type along a per-assay direction in
  // proportion to their loss of fitness.
  for (std::size_t a = 0; a < spec.dms_assays; ++a) {
    const auto& wt = c.members[a * spec.members];
    const Vector wt_vec = emb_rows.at(row_of_sequence.at(wt.sequence));
    const std::string assay = detail::pad_id("SYN_ASSAY", a + 1, 2);
    Vector dir(d);
    for (Eigen::Index j = 0; j < sd; ++j) dir(j) = rng.normal();
    dir.tail(d - sd).setZero();
    dir.normalize();
    for (std::size_t m = 0; m < spec.dms_per_assay; ++m) {
      std::string mut;
      do {
        mut = wt.sequence;
        const std::size_t nsub = 1 + rng.uniform_index(3);
        for (std::size_t s = 0; s < nsub; ++s) {
          auto& ch = mut[rng.uniform_index(mut.size())];
          char r;
          do {
            r = kAminoAcids[rng.uniform_index(kNumAminoAcids)];
          } while (r == ch);
          ch = r;
        }
      } while (row_of_sequence.count(mut));
      const double fitness = rng.uniform01();
      const std::string id = detail::pad_id("dms", a * spec.dms_per_assay + m + 1, 6);
      Rng r = id_rng(id);
      Vector v = wt_vec + (1.0 - fitness) * spec.dms_shift * spec.group_scale * dir;
      for (Eigen::Index j = 0; j < d; ++j) v(j) += 0.1 * spec.noise * r.normal();
      add_embedding(id, mut, v);
      DmsRow row;
      row.assay_id = assay;
      row.wild_type = wt.sequence;
      row.mutant = mut;
      row.raw_score = 4.0 * fitness - 1.0 + 0.05 * rng.normal();
      c.dms.push_back(std::move(row));
    }
  }

  c.embeddings.ids = emb_ids;
  c.embeddings.matrix.resize(static_cast<Eigen::Index>(emb_rows.size()), d);
  for (std::size_t i = 0; i < emb_rows.size(); ++i) c.embeddings.matrix.row(static_cast<Eigen::Index>(i)) = emb_rows[i].transpose();

  // Evaluation tasks over the held-out members.
  SyntheticTask cls{"group_class", "multiclass", "macro_f1", {}, {}, {}};
  SyntheticTask ret{"group_retrieval", "retrieval", "recall_at_k", {}, {}, {}};
  SyntheticTask bin{"group_parity", "binary", "auc", {}, {}, {}};
  SyntheticTask reg{"group_score", "regression", "spearman", {}, {}, {}};
  Vector probe(sd);
  for (Eigen::Index j = 0; j < sd; ++j) probe(j) = rng.normal();
  probe.normalize();
  for (std::size_t i = 0; i < c.heldout.size(); ++i) {
    const auto& rec = c.heldout[i];
    const std::size_t g = i / spec.heldout;
    const bool train = i % spec.heldout < spec.heldout_train;
    cls.labels.emplace_back(rec.id, *rec.group_id);
    ret.labels.emplace_back(rec.id, *rec.group_id);
    bin.labels.emplace_back(rec.id, g % 2 ? "1" : "0");
    reg.labels.emplace_back(rec.id, format_double(means.row(static_cast<Eigen::Index>(g)).dot(probe)));
    for (auto* t : {&cls, &bin, &reg}) (train ? t->train : t->test).push_back(rec.id);
  }
  c.tasks = {cls, ret, bin, reg};
  return c;
}

/// Writes task manifests (<name>.json + labels/splits) into `dir`; returns
/// the manifest paths.
inline std::vector<std::string> write_synthetic_tasks(const std::vector<SyntheticTask>& tasks, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  for (const auto& t : tasks) {
    const auto base = std::filesystem::path(dir);
    {
      std::ofstream out(base / (t.name + ".labels.tsv"), std::ios::binary);
      for (const auto& [id, label] : t.labels) out << id << '\t' << label << '\n';
    }
    nlohmann::ordered_json j;
    j["name"] = t.name;
    j["kind"] = t.kind;
    j["metric"] = t.metric;
    j["labels"] = t.name + ".labels.tsv";
    if (!t.train.empty()) {
      for (const auto& [key, ids] : {std::pair{"train", &t.train}, std::pair{"test", &t.test}}) {
        std::ofstream out(base / (t.name + "." + key + ".txt"), std::ios::binary);
        for (const auto& id : *ids) out << id << '\n';
        j[key] = t.name + "." + key + ".txt";
      }
    }
    if (t.kind == "retrieval") j["k"] = 1;
    const auto path = (base / (t.name + ".json")).string();
    std::ofstream(path, std::ios::binary) << j.dump(2) << '\n';
    paths.push_back(path);
  }
  return paths;
}

}  // namespace protsent
