#pragma once

// Profile-HMM ingestion, log-odds PSSMs and the hard-negative sampler.
//
// A hard negative is a point mutant of an anchor sequence whose substitutions
// each drop the profile log-odds score by more than a per-position threshold
// and together by at least a total threshold, with substituted positions
// spaced apart so the mutant stays near-identical to the anchor.

#include <algorithm>
#include <array>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "protsent/common.hpp"
#include "protsent/seqio.hpp"

namespace protsent {

using ResidueRow = std::array<double, kNumAminoAcids>;

/// Amino-acid background frequencies (BLOSUM62 composition, the HMMER/Easel
/// null model), renormalized to sum to one.
inline ResidueRow default_background() {
  ResidueRow b = {0.0787945, 0.0151600, 0.0535222, 0.0668298, 0.0397062, 0.0695071, 0.0229198,
                  0.0590092, 0.0594422, 0.0963728, 0.0237718, 0.0414386, 0.0482904, 0.0395639,
                  0.0540978, 0.0683364, 0.0540687, 0.0673417, 0.0114135, 0.0304133};
  double sum = 0.0;
  for (double v : b) sum += v;
  for (double& v : b) v /= sum;
  return b;
}

inline constexpr double kProbabilityFloor = 1e-9;

struct ProfileMatrix {
  std::string family_id;
  std::size_t model_len = 0;
  std::vector<ResidueRow> emissions;  // model_len rows
  ResidueRow background{};
  std::vector<ResidueRow> log_odds;  // bits
};

class UnsupportedAlphabetError : public ParseError {
public:
  using ParseError::ParseError;
};

/// S[i][a] = log2(max(e[i][a], 1e-9)) - log2(max(b[a], 1e-9)).
inline std::vector<ResidueRow> build_log_odds(const std::vector<ResidueRow>& emissions, const ResidueRow& background) {
  std::vector<ResidueRow> s(emissions.size());
  for (std::size_t i = 0; i < emissions.size(); ++i) {
    for (std::size_t a = 0; a < kNumAminoAcids; ++a) {
      s[i][a] = std::log2(std::max(emissions[i][a], kProbabilityFloor)) -
                std::log2(std::max(background[a], kProbabilityFloor));
    }
  }
  return s;
}

namespace detail {

inline double hmmer_value_to_probability(const std::string& tok, std::size_t line) {
  if (tok == "*") return 0.0;
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return std::exp(-v);
  } catch (const std::exception&) {
    throw ParseError(line, "bad emission value '" + tok + "'");
  }
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

inline bool is_unsigned_integer(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace detail

/// Reads the next HMMER3 ASCII model from `in`; returns nullopt at end of
/// input. Only match-state emissions are consumed: the first 20 numbers of
/// each numbered state line, stored as -ln(p) ('*' meaning p = 0).
/// The family id is ACC without its version suffix, or NAME when ACC is absent.
inline std::optional<ProfileMatrix> read_hmm_profile(std::istream& in, std::size_t& lineno,
                                                     const ResidueRow& background = default_background()) {
  std::string line;
  bool started = false;
  bool in_model = false;
  bool saw_alph = false;
  std::size_t header_line = 0;
  std::optional<std::size_t> leng;
  std::string name, acc;
  ProfileMatrix pm;
  pm.background = background;

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    if (!started) {
      if (toks[0].rfind("HMMER3", 0) != 0) throw ParseError(lineno, "expected HMMER3 header");
      started = true;
      header_line = lineno;
      continue;
    }
    if (toks[0] == "//") {
      if (!in_model) throw ParseError(lineno, "model section missing");
      if (!saw_alph) throw ParseError(header_line, "missing ALPH line");
      if (!leng) throw ParseError(header_line, "missing LENG line");
      if (pm.emissions.size() != *leng) {
        throw ParseError(lineno, "LENG " + std::to_string(*leng) + " but " + std::to_string(pm.emissions.size()) +
                                     " match states parsed");
      }
      pm.model_len = *leng;
      pm.family_id = acc.empty() ? name : acc.substr(0, acc.find('.'));
      pm.log_odds = build_log_odds(pm.emissions, pm.background);
      return pm;
    }
    if (!in_model) {
      if (toks[0] == "NAME" && toks.size() > 1) name = toks[1];
      else if (toks[0] == "ACC" && toks.size() > 1) acc = toks[1];
      else if (toks[0] == "LENG" && toks.size() > 1) {
        if (!detail::is_unsigned_integer(toks[1])) throw ParseError(lineno, "bad LENG");
        leng = std::stoul(toks[1]);
      } else if (toks[0] == "ALPH" && toks.size() > 1) {
        if (toks[1] != "amino") throw UnsupportedAlphabetError(lineno, "unsupported alphabet '" + toks[1] + "'");
        saw_alph = true;
      } else if (toks[0] == "HMM") {
        if (!saw_alph) throw ParseError(lineno, "missing ALPH line before model");
        for (std::size_t a = 0; a < kNumAminoAcids; ++a) {
          if (toks.size() <= a + 1 || toks[a + 1].size() != 1 || toks[a + 1][0] != kAminoAcids[a]) {
            throw ParseError(lineno, "unexpected residue order in HMM line");
          }
        }
        in_model = true;
      }
      continue;
    }
    // Inside the model: match lines start with the state number 1..M.
    if (detail::is_unsigned_integer(toks[0])) {
      const std::size_t state = std::stoul(toks[0]);
      if (state != pm.emissions.size() + 1) throw ParseError(lineno, "unexpected state number " + toks[0]);
      if (toks.size() < kNumAminoAcids + 1) throw ParseError(lineno, "match line has fewer than 20 emissions");
      ResidueRow row{};
      for (std::size_t a = 0; a < kNumAminoAcids; ++a) row[a] = detail::hmmer_value_to_probability(toks[a + 1], lineno);
      pm.emissions.push_back(row);
    }
  }
  if (started) throw ParseError(lineno, "unterminated model (missing //)");
  return std::nullopt;
}

inline ProfileMatrix parse_hmm_profile(std::istream& in, const ResidueRow& background = default_background()) {
  std::size_t lineno = 0;
  auto pm = read_hmm_profile(in, lineno, background);
  if (!pm) throw ParseError(lineno, "no HMMER3 model found");
  return *pm;
}

inline ProfileMatrix parse_hmm_profile(std::string_view text, const ResidueRow& background = default_background()) {
  std::istringstream in{std::string(text)};
  return parse_hmm_profile(in, background);
}

/// All models of a concatenated HMM file (e.g. a Pfam-A.hmm slice).
inline std::vector<ProfileMatrix> parse_hmm_profiles(std::istream& in, const ResidueRow& background = default_background()) {
  std::vector<ProfileMatrix> out;
  std::size_t lineno = 0;
  while (auto pm = read_hmm_profile(in, lineno, background)) out.push_back(std::move(*pm));
  return out;
}

/// Writes match emissions in HMMER3 ASCII layout. Insert-state and transition
/// lines are filled with neutral placeholders; readers here ignore them.
inline void write_hmm_profile(std::ostream& out, const ProfileMatrix& pm) {
  auto fmt = [](double p) {
    if (p <= 0.0) return std::string("       *");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%8.5f", -std::log(p));
    return std::string(buf);
  };
  out << "HMMER3/f [protsent]\n";
  out << "NAME  " << pm.family_id << "\n";
  out << "ACC   " << pm.family_id << "\n";
  out << "LENG  " << pm.emissions.size() << "\n";
  out << "ALPH  amino\n";
  out << "HMM     ";
  for (char c : kAminoAcids) out << "     " << c << "  ";
  out << "\n            m->m     m->i     m->d     i->m     i->i     d->m     d->d\n";
  std::string insert_line = "        ";
  for (std::size_t a = 0; a < kNumAminoAcids; ++a) insert_line += fmt(pm.background[a]) + " ";
  const std::string trans_line = "         0.00000        *        *  0.00000        *  0.00000        *";
  out << insert_line << "\n" << trans_line << "\n";
  for (std::size_t i = 0; i < pm.emissions.size(); ++i) {
    char idx[16];
    std::snprintf(idx, sizeof idx, "%7zu ", i + 1);
    out << idx;
    for (std::size_t a = 0; a < kNumAminoAcids; ++a) out << fmt(pm.emissions[i][a]) << " ";
    out << i + 1 << " - - -\n" << insert_line << "\n" << trans_line << "\n";
  }
  out << "//\n";
}

/// |median - model_len| <= tolerance * model_len.
inline bool family_eligible(double median_seq_len, std::size_t model_len, double tolerance) {
  return std::abs(median_seq_len - static_cast<double>(model_len)) <= tolerance * static_cast<double>(model_len);
}

/// Median of member sequence lengths (mean of the two middle values for even
/// counts).
inline double median_length(const std::vector<SequenceRecord>& members) {
  if (members.empty()) return 0.0;
  std::vector<std::size_t> lens;
  lens.reserve(members.size());
  for (const auto& m : members) lens.push_back(m.sequence.size());
  std::sort(lens.begin(), lens.end());
  const std::size_t n = lens.size();
  return n % 2 ? static_cast<double>(lens[n / 2]) : 0.5 * static_cast<double>(lens[n / 2 - 1] + lens[n / 2]);
}

/// Per-position score drop of every substitution, using the direct map
/// anchor position i -> model state i. Rows past min(L, model_len), rows
/// whose wild type is non-standard, and the wild-type column are all zero.
inline std::vector<ResidueRow> delta_scores(const ProfileMatrix& profile, std::string_view anchor) {
  std::vector<ResidueRow> ds(anchor.size());
  for (auto& row : ds) row.fill(0.0);
  const std::size_t n = std::min(anchor.size(), profile.model_len);
  for (std::size_t i = 0; i < n; ++i) {
    const int wt = residue_index(anchor[i]);
    if (wt < 0) continue;
    for (std::size_t a = 0; a < kNumAminoAcids; ++a) {
      ds[i][a] = static_cast<int>(a) == wt ? 0.0 : profile.log_odds[i][a] - profile.log_odds[i][static_cast<std::size_t>(wt)];
    }
  }
  return ds;
}

struct HardNegConfig {
  double per_pos_threshold = -1.0;
  double sum_threshold = -16.0;
  std::size_t spacing_min_abs = 6;
  std::size_t spacing_len_divisor = 8;
  std::size_t k_floor = 6;
  std::size_t k_max = 50;
  std::size_t proposals_per_k = 2048;
  double family_len_tolerance = 0.10;
  std::size_t per_family_cap = 100;
  std::size_t len_min = 6;
  std::size_t len_max = 1023;

  void validate() const {
    if (!(per_pos_threshold < 0.0)) throw Error("hard_negatives: per_pos_threshold must be < 0");
    if (!(sum_threshold < per_pos_threshold)) throw Error("hard_negatives: sum_threshold must be < per_pos_threshold");
    if (k_floor < 1 || k_floor > k_max) throw Error("hard_negatives: need 1 <= k_floor <= k_max");
    if (spacing_len_divisor == 0) throw Error("hard_negatives: spacing_len_divisor must be > 0");
  }

  std::size_t min_spacing(std::size_t len) const { return std::max(spacing_min_abs, len / spacing_len_divisor); }
};

struct Substitution {
  std::size_t position;
  char residue;
  double delta;
};

struct HardNegative {
  std::string mutant;
  std::vector<Substitution> substitutions;  // ascending position
  double total_delta = 0.0;
  std::size_t k_min = 0;
};

/// Rejection-samples a hard-negative mutant of `anchor` (see file comment).
///
/// Candidates are (position, residue) entries with delta < per_pos_threshold.
/// For k = k_min .. k_max, up to proposals_per_k proposals each draw k distinct
/// candidates uniformly; the first proposal whose positions are pairwise at
/// least max(spacing_min_abs, L / spacing_len_divisor) apart and whose total
/// delta is <= sum_threshold is returned. Infeasibility returns nullopt.
inline std::optional<HardNegative> sample_hard_negative(std::string_view anchor, const std::vector<ResidueRow>& delta,
                                                        const HardNegConfig& cfg, Rng& rng) {
  const std::size_t len = anchor.size();
  if (len < cfg.len_min || len > cfg.len_max || delta.size() != len) return std::nullopt;

  struct Candidate {
    std::size_t pos;
    std::size_t residue;
    double delta;
  };
  std::vector<Candidate> pool;
  double most_negative = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t a = 0; a < kNumAminoAcids; ++a) {
      if (delta[i][a] < cfg.per_pos_threshold) {
        pool.push_back({i, a, delta[i][a]});
        most_negative = std::min(most_negative, delta[i][a]);
      }
    }
  }
  if (pool.empty()) return std::nullopt;

  const auto k_needed = static_cast<std::size_t>(std::ceil(cfg.sum_threshold / most_negative));
  const std::size_t k_min = std::max(cfg.k_floor, k_needed);
  const std::size_t spacing = cfg.min_spacing(len);

  std::size_t distinct_positions = 0;
  for (std::size_t c = 0; c < pool.size(); ++c) distinct_positions += (c == 0 || pool[c].pos != pool[c - 1].pos);

  std::vector<std::size_t> picks;
  for (std::size_t k = k_min; k <= cfg.k_max; ++k) {
    if (k > distinct_positions || (k - 1) * spacing >= len) break;
    for (std::size_t trial = 0; trial < cfg.proposals_per_k; ++trial) {
      picks = rng.sample_without_replacement(pool.size(), k);
      std::sort(picks.begin(), picks.end());  // pool is position-ordered
      double total = 0.0;
      bool ok = true;
      for (std::size_t j = 0; j < k && ok; ++j) {
        total += pool[picks[j]].delta;
        if (j > 0 && pool[picks[j]].pos - pool[picks[j - 1]].pos < spacing) ok = false;
      }
      if (!ok || total > cfg.sum_threshold) continue;

      HardNegative hn;
      hn.mutant = std::string(anchor);
      hn.total_delta = total;
      hn.k_min = k_min;
      for (std::size_t j : picks) {
        const auto& c = pool[j];
        hn.mutant[c.pos] = kAminoAcids[c.residue];
        hn.substitutions.push_back({c.pos, kAminoAcids[c.residue], c.delta});
      }
      return hn;
    }
  }
  return std::nullopt;
}

inline std::optional<HardNegative> sample_hard_negative(std::string_view anchor, const std::vector<ResidueRow>& delta,
                                                        const HardNegConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return sample_hard_negative(anchor, delta, cfg, rng);
}

struct Family {
  std::string id;
  std::vector<SequenceRecord> members;
};

struct HardNegativeDataset {
  std::vector<PairExample> rows;
  std::size_t families_total = 0;
  std::size_t families_ineligible = 0;
  std::size_t families_missing_profile = 0;
  std::size_t anchors = 0;
  std::size_t with_hard_negative = 0;
  std::vector<std::string> warnings;

  double hard_negative_fraction() const {
    return anchors == 0 ? 0.0 : static_cast<double>(with_hard_negative) / static_cast<double>(anchors);
  }
};

/// Groups records by group_id, preserving first-appearance order of groups
/// and input order within each group.
inline std::vector<Family> group_families(const std::vector<SequenceRecord>& records) {
  std::vector<Family> families;
  std::map<std::string, std::size_t> index;
  for (const auto& r : records) {
    if (!r.group_id) throw Error("record '" + r.id + "' has no group_id");
    auto [it, inserted] = index.emplace(*r.group_id, families.size());
    if (inserted) families.push_back({*r.group_id, {}});
    families[it->second].members.push_back(r);
  }
  return families;
}

/// Builds the hard-negative pair dataset. Family i (input order) uses seed
/// base_seed + i. Within an eligible family the first per_family_cap anchors
/// with len_min <= L <= len_max are processed; each row pairs the anchor with
/// the next family member (cyclic, input order; itself for one-member
/// families) and carries the mutant, or null when none was found.
inline HardNegativeDataset build_hard_negative_dataset(const std::vector<Family>& families,
                                                       const std::map<std::string, ProfileMatrix>& profiles,
                                                       const HardNegConfig& cfg, std::uint64_t base_seed = 42,
                                                       unsigned threads = 1) {
  cfg.validate();
  HardNegativeDataset out;
  out.families_total = families.size();

  struct FamilyResult {
    std::vector<PairExample> rows;
    std::size_t with_hn = 0;
    int status = 0;  // 0 ok, 1 ineligible, 2 missing profile
  };
  std::vector<FamilyResult> results(families.size());

  parallel_for(families.size(), threads, [&](std::size_t fi) {
    const Family& fam = families[fi];
    auto& res = results[fi];
    auto pit = profiles.find(fam.id);
    if (pit == profiles.end()) {
      res.status = 2;
      return;
    }
    const ProfileMatrix& profile = pit->second;
    if (!family_eligible(median_length(fam.members), profile.model_len, cfg.family_len_tolerance)) {
      res.status = 1;
      return;
    }
    Rng rng(base_seed + fi);
    const std::size_t n = fam.members.size();
    for (std::size_t m = 0; m < n && res.rows.size() < cfg.per_family_cap; ++m) {
      const auto& anchor = fam.members[m];
      const std::size_t len = anchor.sequence.size();
      if (len < cfg.len_min || len > cfg.len_max) continue;
      PairExample row;
      row.anchor = anchor.sequence;
      row.positive = fam.members[(m + 1) % n].sequence;
      row.group = fam.id;
      if (auto hn = sample_hard_negative(anchor.sequence, delta_scores(profile, anchor.sequence), cfg, rng)) {
        row.hard_negative = std::move(hn->mutant);
        ++res.with_hn;
      }
      res.rows.push_back(std::move(row));
    }
  });

  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    auto& res = results[fi];
    if (res.status == 2) {
      ++out.families_missing_profile;
      out.warnings.push_back("family '" + families[fi].id + "' has no profile; skipped");
      continue;
    }
    if (res.status == 1) {
      ++out.families_ineligible;
      continue;
    }
    out.anchors += res.rows.size();
    out.with_hard_negative += res.with_hn;
    for (auto& r : res.rows) out.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace protsent
