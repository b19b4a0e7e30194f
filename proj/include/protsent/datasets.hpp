#pragma once

// Builders for the training datasets: grouped record streams (Pfam families,
// Foldseek structural clusters), STRING-style interaction pairs and DMS
// continuous-score pairs.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "protsent/cluster.hpp"
#include "protsent/common.hpp"
#include "protsent/seqio.hpp"

namespace protsent {

// ---------------------------------------------------------------------------
// Grouped streams
// ---------------------------------------------------------------------------

/// Extracts the Pfam family accession (version stripped) from a FASTA
/// description: a `group=` tag wins, otherwise the first token that starts
/// with "PF" followed by digits, e.g. "A0A0.1 PF00001.23;7tm_1;" -> "PF00001".
inline std::optional<std::string> pfam_family_from_header(const std::string& desc) {
  const auto tags = parse_header_tags(desc);
  if (auto it = tags.find("group"); it != tags.end()) return it->second;
  for (std::size_t pos = desc.find("PF"); pos != std::string::npos; pos = desc.find("PF", pos + 1)) {
    if (pos > 0 && std::isalnum(static_cast<unsigned char>(desc[pos - 1]))) continue;
    std::size_t end = pos + 2;
    while (end < desc.size() && std::isdigit(static_cast<unsigned char>(desc[end]))) ++end;
    if (end > pos + 2) return desc.substr(pos, end - pos);
  }
  return std::nullopt;
}

enum class GroupedLayout {
  pfam,  // sort by (clan, family); orphan families use their own id as clan
  afdb,  // seeded shuffle, then stable sort by the AFDB50 cluster key
};

struct GroupedBuildReport {
  std::size_t input = 0;
  std::size_t singleton_groups_dropped = 0;
  std::size_t records_dropped = 0;
  std::size_t groups = 0;
};

/// Drops singleton groups and orders the stream. Pfam layout reads the clan
/// from meta["clan"]; AFDB layout reads meta["afdb50_cluster"]. The key used
/// is stored in meta["sort_key"]. Pairs are materialized later by the sampler.
inline std::vector<SequenceRecord> build_grouped_pairs(std::vector<SequenceRecord> records, GroupedLayout layout,
                                                       std::uint64_t seed = 42, GroupedBuildReport* report = nullptr) {
  GroupedBuildReport rep;
  rep.input = records.size();
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& r : records) {
    if (!r.group_id || r.group_id->empty()) throw Error("record '" + r.id + "' has no group_id");
    ++counts[*r.group_id];
  }
  for (const auto& [g, c] : counts) rep.singleton_groups_dropped += c == 1;
  std::erase_if(records, [&](const SequenceRecord& r) { return counts[*r.group_id] < 2; });
  rep.records_dropped = rep.input - records.size();
  rep.groups = counts.size() - rep.singleton_groups_dropped;

  auto meta_or = [](const SequenceRecord& r, const char* key, const std::string& fallback) {
    auto it = r.meta.find(key);
    return it == r.meta.end() || it->second.empty() ? fallback : it->second;
  };

  if (layout == GroupedLayout::pfam) {
    for (auto& r : records) r.meta["sort_key"] = meta_or(r, "clan", *r.group_id);
    std::stable_sort(records.begin(), records.end(), [](const SequenceRecord& a, const SequenceRecord& b) {
      const auto& ka = a.meta.at("sort_key");
      const auto& kb = b.meta.at("sort_key");
      if (ka != kb) return ka < kb;
      return *a.group_id < *b.group_id;
    });
  } else {
    for (auto& r : records) r.meta["sort_key"] = meta_or(r, "afdb50_cluster", *r.group_id);
    Rng rng(seed);
    rng.shuffle(records);
    std::stable_sort(records.begin(), records.end(), [](const SequenceRecord& a, const SequenceRecord& b) {
      return a.meta.at("sort_key") < b.meta.at("sort_key");
    });
  }
  if (report) *report = rep;
  return records;
}

struct AfdbFilterReport {
  std::size_t input = 0;
  std::size_t low_plddt = 0;
  std::size_t fragment = 0;
  std::size_t cluster_flag = 0;
  std::size_t kept = 0;
};

namespace detail {

inline double meta_number(const SequenceRecord& r, const char* key) {
  auto it = r.meta.find(key);
  if (it == r.meta.end()) throw Error("record '" + r.id + "' lacks meta '" + key + "'");
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw Error("record '" + r.id + "': meta '" + key + "' is not numeric ('" + it->second + "')");
  }
}

}  // namespace detail

/// Keeps plddt > 70, fragment == 0 and cluFlag in {1, 2}; group_id becomes the
/// Foldseek representative (meta["foldseek_rep"]).
inline std::vector<SequenceRecord> filter_afdb(const std::vector<SequenceRecord>& records,
                                               AfdbFilterReport* report = nullptr) {
  AfdbFilterReport rep;
  rep.input = records.size();
  std::vector<SequenceRecord> out;
  for (const auto& r : records) {
    if (!(detail::meta_number(r, "plddt") > 70.0)) {
      ++rep.low_plddt;
      continue;
    }
    if (detail::meta_number(r, "fragment") != 0.0) {
      ++rep.fragment;
      continue;
    }
    const double flag = detail::meta_number(r, "cluFlag");
    if (flag != 1.0 && flag != 2.0) {
      ++rep.cluster_flag;
      continue;
    }
    SequenceRecord k = r;
    auto it = r.meta.find("foldseek_rep");
    if (it == r.meta.end() || it->second.empty()) throw Error("record '" + r.id + "' lacks meta 'foldseek_rep'");
    k.group_id = it->second;
    out.push_back(std::move(k));
  }
  rep.kept = out.size();
  if (report) *report = rep;
  return out;
}

// ---------------------------------------------------------------------------
// Protein-protein interaction pairs
// ---------------------------------------------------------------------------

struct PpiEdge {
  std::string id1;
  std::string id2;
  int combined_score = 0;
};

struct PpiOptions {
  int min_score = 400;
  std::size_t len_min = 10;
  std::size_t len_max = 1024;
  std::uint64_t seed = 42;
};

struct PpiReport {
  std::size_t edges_in = 0;
  std::size_t below_score = 0;
  std::size_t missing_endpoint = 0;
  std::size_t self_cluster = 0;
  std::size_t duplicate_cluster_pair = 0;
  std::size_t length_filtered = 0;
  std::size_t pairs_out = 0;
};

/// Score filter, cluster mapping, self-cluster drop, unordered canonicalization
/// (lexicographic rep order), score-descending dedup keeping the best edge per
/// cluster pair, endpoint length filter and a final seeded shuffle. Output rows
/// carry the endpoint sequences as (anchor, positive), canonical order.
inline std::vector<PairExample> build_ppi_pairs(const std::vector<PpiEdge>& edges,
                                                const std::map<std::string, std::string>& cluster_map,
                                                const std::unordered_map<std::string, std::string>& sequences,
                                                const PpiOptions& opts = {}, PpiReport* report = nullptr) {
  PpiReport rep;
  rep.edges_in = edges.size();
  struct Candidate {
    std::string rep1, rep2;   // canonical, rep1 < rep2
    std::string seq1, seq2;   // aligned with rep1, rep2
    int score;
    std::size_t order;
  };
  std::vector<Candidate> cands;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const auto& edge = edges[e];
    if (edge.combined_score < opts.min_score) {
      ++rep.below_score;
      continue;
    }
    auto c1 = cluster_map.find(edge.id1);
    auto c2 = cluster_map.find(edge.id2);
    auto s1 = sequences.find(edge.id1);
    auto s2 = sequences.find(edge.id2);
    if (c1 == cluster_map.end() || c2 == cluster_map.end() || s1 == sequences.end() || s2 == sequences.end()) {
      ++rep.missing_endpoint;
      continue;
    }
    if (c1->second == c2->second) {
      ++rep.self_cluster;
      continue;
    }
    Candidate c{c1->second, c2->second, s1->second, s2->second, edge.combined_score, e};
    if (c.rep2 < c.rep1) {
      std::swap(c.rep1, c.rep2);
      std::swap(c.seq1, c.seq2);
    }
    cands.push_back(std::move(c));
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  std::set<std::pair<std::string, std::string>> seen;
  std::vector<PairExample> out;
  for (auto& c : cands) {
    if (!seen.emplace(c.rep1, c.rep2).second) {
      ++rep.duplicate_cluster_pair;
      continue;
    }
    auto in_range = [&](const std::string& s) { return s.size() >= opts.len_min && s.size() <= opts.len_max; };
    if (!in_range(c.seq1) || !in_range(c.seq2)) {
      ++rep.length_filtered;
      continue;
    }
    PairExample p;
    p.anchor = std::move(c.seq1);
    p.positive = std::move(c.seq2);
    out.push_back(std::move(p));
  }
  Rng rng(opts.seed);
  rng.shuffle(out);
  rep.pairs_out = out.size();
  if (report) *report = rep;
  return out;
}

// ---------------------------------------------------------------------------
// DMS / clinical continuous scores
// ---------------------------------------------------------------------------

enum class ClinicalLabel { pathogenic, benign };
enum class SplitHint { train, test };

struct DmsRow {
  std::string assay_id;
  std::string wild_type;
  std::string mutant;
  std::optional<double> raw_score;
  std::optional<ClinicalLabel> clinical;
  std::optional<SplitHint> split_hint;
  std::string protein_id;  // group key for clinical rows

  bool is_clinical() const { return clinical.has_value(); }
  const std::string& group_key() const { return is_clinical() && !protein_id.empty() ? protein_id : assay_id; }
};

/// Decodes one DMS JSONL object: assay_id, wild_type, mutant, then exactly one
/// of "score" (number) or "label" ("Pathogenic"/"Benign"); optional "split"
/// (also accepted as "stage", "set" or "fold") and "protein_id".
inline DmsRow decode_dms_row(const nlohmann::json& obj, std::size_t line) {
  DmsRow r;
  r.assay_id = detail::required_string(obj, "assay_id", line);
  r.wild_type = detail::required_string(obj, "wild_type", line);
  r.mutant = detail::required_string(obj, "mutant", line);
  const bool has_score = obj.contains("score") && !obj["score"].is_null();
  const bool has_label = obj.contains("label") && !obj["label"].is_null();
  if (has_score == has_label) throw SchemaError(line, "exactly one of 'score' and 'label' is required");
  if (has_score) {
    if (!obj["score"].is_number()) throw SchemaError(line, "'score' must be numeric");
    r.raw_score = obj["score"].get<double>();
  } else {
    const auto label = obj["label"].is_string() ? obj["label"].get<std::string>() : "";
    if (label == "Pathogenic") r.clinical = ClinicalLabel::pathogenic;
    else if (label == "Benign") r.clinical = ClinicalLabel::benign;
    else throw SchemaError(line, "label must be 'Pathogenic' or 'Benign'");
  }
  for (const char* key : {"split", "stage", "set", "fold"}) {
    if (auto it = obj.find(key); it != obj.end() && it->is_string()) {
      const auto v = it->get<std::string>();
      if (v == "train") r.split_hint = SplitHint::train;
      else if (v == "test") r.split_hint = SplitHint::test;
      if (r.split_hint) break;
    }
  }
  if (auto it = obj.find("protein_id"); it != obj.end() && it->is_string()) r.protein_id = it->get<std::string>();
  return r;
}

inline std::string encode_dms_row(const DmsRow& r) {
  nlohmann::ordered_json obj;
  obj["assay_id"] = r.assay_id;
  obj["wild_type"] = r.wild_type;
  obj["mutant"] = r.mutant;
  if (r.raw_score) obj["score"] = *r.raw_score;
  if (r.clinical) obj["label"] = *r.clinical == ClinicalLabel::pathogenic ? "Pathogenic" : "Benign";
  if (r.split_hint) obj["split"] = *r.split_hint == SplitHint::test ? "test" : "train";
  if (!r.protein_id.empty()) obj["protein_id"] = r.protein_id;
  return obj.dump();
}

using DmsReader = JsonlReader<DmsRow, &decode_dms_row>;

struct DmsNormalization {
  std::vector<ScoredPair> pairs;
  std::vector<std::size_t> source;  // input row index of each pair
  std::size_t dropped_prefix = 0;
  std::size_t dropped_nonfinite = 0;
  std::vector<std::string> skipped_assays;  // too few rows or zero spread
  std::size_t skipped_rows = 0;
};

/// Per assay: z = (x - mean) / std (population std), clipped to [-3, 3] and
/// mapped to (z + 3) / 6. Clinical rows map Pathogenic -> 0, Benign -> 1.
/// Assays whose id starts with a drop prefix are removed.
inline DmsNormalization normalize_dms(const std::vector<DmsRow>& rows,
                                      const std::vector<std::string>& drop_prefixes = {"GB1_", "GFP_AEQVI_"}) {
  DmsNormalization out;
  auto dropped = [&](const std::string& assay) {
    return std::any_of(drop_prefixes.begin(), drop_prefixes.end(),
                       [&](const std::string& p) { return assay.rfind(p, 0) == 0; });
  };
  struct Stats {
    double sum = 0.0;
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
    bool usable = false;
  };
  std::map<std::string, Stats> stats;
  for (const auto& r : rows) {
    if (r.is_clinical() || dropped(r.assay_id) || !std::isfinite(*r.raw_score)) continue;
    auto& s = stats[r.assay_id];
    s.sum += *r.raw_score;
    ++s.n;
  }
  for (auto& [id, s] : stats) s.mean = s.n ? s.sum / static_cast<double>(s.n) : 0.0;
  for (const auto& r : rows) {
    if (r.is_clinical() || dropped(r.assay_id) || !std::isfinite(*r.raw_score)) continue;
    auto& s = stats[r.assay_id];
    const double d = *r.raw_score - s.mean;
    s.sd += d * d;
  }
  for (auto& [id, s] : stats) {
    s.sd = s.n ? std::sqrt(s.sd / static_cast<double>(s.n)) : 0.0;
    s.usable = s.n >= 2 && s.sd > 0.0;
    if (!s.usable) out.skipped_assays.push_back(id);
  }

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (dropped(r.assay_id)) {
      ++out.dropped_prefix;
      continue;
    }
    double score;
    if (r.is_clinical()) {
      score = *r.clinical == ClinicalLabel::pathogenic ? 0.0 : 1.0;
    } else {
      if (!std::isfinite(*r.raw_score)) {
        ++out.dropped_nonfinite;
        continue;
      }
      const auto& s = stats.at(r.assay_id);
      if (!s.usable) {
        ++out.skipped_rows;
        continue;
      }
      const double z = std::clamp((*r.raw_score - s.mean) / s.sd, -3.0, 3.0);
      score = (z + 3.0) / 6.0;
    }
    ScoredPair p;
    p.seq1 = r.wild_type;
    p.seq2 = r.mutant;
    p.score = score;
    p.assay_id = r.assay_id;
    out.pairs.push_back(std::move(p));
    out.source.push_back(i);
  }
  return out;
}

struct DmsSplit {
  std::vector<std::size_t> train;    // ascending input indices
  std::vector<std::size_t> dropped;  // ascending input indices
  std::size_t dropped_hint = 0;
  std::size_t dropped_split = 0;
  std::size_t dropped_global = 0;
  std::size_t groups_split = 0;
  std::size_t groups_unsplit = 0;
};

/// Test-fold removal. Rows with an explicit split hint follow it. Remaining
/// rows are grouped (assay id, or protein id for clinical rows); groups with
/// at least `min_group` rows lose round(test_frac * n) rows chosen by a
/// per-group seeded shuffle, smaller groups are kept whole. Finally every
/// train row whose (wild_type, mutant) pair appears among dropped rows is
/// dropped too.
inline DmsSplit split_dms(const std::vector<DmsRow>& rows, std::uint64_t seed = 42, double test_frac = 0.2,
                          std::size_t min_group = 10) {
  DmsSplit out;
  std::vector<char> is_test(rows.size(), 0);
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].split_hint) {
      if (*rows[i].split_hint == SplitHint::test) {
        is_test[i] = 1;
        ++out.dropped_hint;
      }
      continue;
    }
    groups[rows[i].group_key()].push_back(i);
  }
  for (auto& [key, idx] : groups) {
    if (idx.size() < min_group) {
      ++out.groups_unsplit;
      continue;
    }
    ++out.groups_split;
    Rng rng(splitmix64(seed ^ fnv1a64(key)));
    auto order = idx;
    rng.shuffle(order);
    const auto n_test = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(idx.size())));
    for (std::size_t j = 0; j < n_test; ++j) is_test[order[j]] = 1;
    out.dropped_split += n_test;
  }
  std::set<std::pair<std::string, std::string>> test_pairs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (is_test[i]) test_pairs.emplace(rows[i].wild_type, rows[i].mutant);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!is_test[i] && test_pairs.count({rows[i].wild_type, rows[i].mutant})) {
      is_test[i] = 2;
      ++out.dropped_global;
    }
    (is_test[i] ? out.dropped : out.train).push_back(i);
  }
  return out;
}

}  // namespace protsent
