#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include "oracle_values.hpp"
#include "protsent/profile.hpp"

using namespace protsent;

namespace {

// Five match states in HMMER3 ASCII layout, including COMPO, insert and
// transition lines that the reader must skip.
const char* kFiveState = R"(HMMER3/f [3.1b2 | February 2015]
NAME  toy
ACC   PF99999.3
DESC  hand-written five-state model
LENG  5
ALPH  amino
RF    no
STATS LOCAL MSV      -9.0  0.7
HMM          A        C        D        E        F        G        H        I        K        L        M        N        P        Q        R        S        T        V        W        Y
            m->m     m->i     m->d     i->m     i->i     d->m     d->d
  COMPO   2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5 2.5
          2.68618  4.42225  2.77519  2.73123  3.46354  2.40513  3.72494  3.29354  2.67741  2.69355  4.24690  2.90347  2.73739  3.18146  2.89801  2.37887  2.77519  2.98518  4.58477  3.61503
          0.00000        *        *  0.00000        *  0.00000        *
      1   0.0 * * * * * * * * * * * * * * * * * * *      1 a - -
          2.68618  4.42225  2.77519  2.73123  3.46354  2.40513  3.72494  3.29354  2.67741  2.69355  4.24690  2.90347  2.73739  3.18146  2.89801  2.37887  2.77519  2.98518  4.58477  3.61503
          0.01 4.6 5.3 0.61 0.78 0.00 *
      2   2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573 2.99573      2 c - -
          2.68618  4.42225  2.77519  2.73123  3.46354  2.40513  3.72494  3.29354  2.67741  2.69355  4.24690  2.90347  2.73739  3.18146  2.89801  2.37887  2.77519  2.98518  4.58477  3.61503
          0.01 4.6 5.3 0.61 0.78 0.48 0.95
      3   0.5 1.5 3.1 3.2 3.3 3.4 3.5 3.6 3.7 3.8 3.9 4.0 4.1 4.2 4.3 4.4 4.5 4.6 4.7 4.8      3 d - -
          2.68618  4.42225  2.77519  2.73123  3.46354  2.40513  3.72494  3.29354  2.67741  2.69355  4.24690  2.90347  2.73739  3.18146  2.89801  2.37887  2.77519  2.98518  4.58477  3.61503
          0.01 4.6 5.3 0.61 0.78 0.48 0.95
      4   * * * * * * * * * * * * * * * * * * * 0.0      4 y - -
          2.68618  4.42225  2.77519  2.73123  3.46354  2.40513  3.72494  3.29354  2.67741  2.69355  4.24690  2.90347  2.73739  3.18146  2.89801  2.37887  2.77519  2.98518  4.58477  3.61503
          0.01 4.6 5.3 0.61 0.78 0.48 0.95
      5   1.2 1.3 1.4 1.5 1.6 1.7 1.8 1.9 2.0 2.1 2.2 2.3 2.4 2.5 2.6 2.7 2.8 2.9 3.0 3.1      5 k - -
          2.68618  4.42225  2.77519  2.73123  3.46354  2.40513  3.72494  3.29354  2.67741  2.69355  4.24690  2.90347  2.73739  3.18146  2.89801  2.37887  2.77519  2.98518  4.58477  3.61503
          0.0 * * 0.0 * 0.0 *
//
)";

// Reference reader written directly against the file layout: match lines are
// the lines after the "HMM" header whose first field is the state number;
// the next 20 fields are -ln(p).
std::vector<std::array<double, 20>> reference_parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  bool model = false;
  std::vector<std::array<double, 20>> rows;
  while (std::getline(in, line)) {
    if (line.rfind("HMM ", 0) == 0) {
      model = true;
      continue;
    }
    if (!model || line.rfind("//", 0) == 0) continue;
    std::istringstream ls(line);
    std::string first;
    ls >> first;
    char* end = nullptr;
    const long state = std::strtol(first.c_str(), &end, 10);
    if (*end != '\0' || state != static_cast<long>(rows.size()) + 1) continue;
    std::array<double, 20> row{};
    for (auto& v : row) {
      std::string tok;
      ls >> tok;
      v = tok == "*" ? 0.0 : std::exp(-std::strtod(tok.c_str(), nullptr));
    }
    rows.push_back(row);
  }
  return rows;
}

ProfileMatrix profile_from_log_odds(const std::vector<ResidueRow>& s) {
  ProfileMatrix pm;
  pm.family_id = "F";
  pm.model_len = s.size();
  pm.log_odds = s;
  pm.background = default_background();
  return pm;
}

}  // namespace

TEST(HmmParse, FiveStateMatchesReferenceReader) {
  const auto pm = parse_hmm_profile(kFiveState);
  const auto ref = reference_parse(kFiveState);
  EXPECT_EQ(pm.family_id, "PF99999");
  ASSERT_EQ(pm.model_len, 5u);
  ASSERT_EQ(ref.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t a = 0; a < 20; ++a) EXPECT_DOUBLE_EQ(pm.emissions[i][a], ref[i][a]) << i << "," << a;
  EXPECT_EQ(pm.emissions[0][0], 1.0);  // -ln p = 0
  EXPECT_EQ(pm.emissions[0][1], 0.0);  // '*'
  EXPECT_EQ(pm.emissions[3][19], 1.0);
}

TEST(HmmParse, LogOddsUseFlooredProbabilities) {
  const auto pm = parse_hmm_profile(kFiveState);
  const auto bg = default_background();
  EXPECT_DOUBLE_EQ(pm.log_odds[0][1], std::log2(1e-9) - std::log2(bg[1]));
}

TEST(HmmParse, RejectsNonAminoAlphabet) {
  std::string text = kFiveState;
  text.replace(text.find("ALPH  amino"), 11, "ALPH  DNA  ");
  EXPECT_THROW(parse_hmm_profile(text), UnsupportedAlphabetError);
}

TEST(HmmParse, LengMismatchIsFormatError) {
  std::string text = kFiveState;
  text.replace(text.find("LENG  5"), 7, "LENG  6");
  try {
    parse_hmm_profile(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("LENG"), std::string::npos);
  }
}

TEST(HmmParse, WriterRoundTripsAndConcatenates) {
  auto pm = parse_hmm_profile(kFiveState);
  std::ostringstream os;
  write_hmm_profile(os, pm);
  pm.family_id = "PF00002";
  write_hmm_profile(os, pm);
  std::istringstream in(os.str());
  const auto all = parse_hmm_profiles(in);
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[1].family_id, "PF00002");
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t a = 0; a < 20; ++a) EXPECT_NEAR(all[0].emissions[i][a], pm.emissions[i][a], 1e-5);
}

TEST(LogOdds, Examples) {
  ResidueRow bg;
  bg.fill(0.05);
  std::vector<ResidueRow> e(2);
  e[0] = bg;
  e[1].fill(0.05);
  e[1][0] = 0.0;
  e[1][1] = 0.1;
  const auto s = build_log_odds(e, bg);
  for (double v : s[0]) EXPECT_EQ(v, 0.0);
  EXPECT_NEAR(s[1][0], oracle::kFlooredLogOdds, 1e-12);
  EXPECT_NEAR(s[1][1], 1.0, 1e-15);
}

TEST(FamilyEligible, Boundaries) {
  EXPECT_TRUE(family_eligible(100, 100, 0.10));
  EXPECT_FALSE(family_eligible(111, 100, 0.10));
  EXPECT_TRUE(family_eligible(90, 100, 0.10));
  EXPECT_TRUE(family_eligible(110, 100, 0.10));
}

TEST(DeltaScores, SubtractionAndWildTypeZero) {
  std::vector<ResidueRow> s(3);
  for (auto& r : s) r.fill(0.0);
  s[1][residue_index('C')] = 2.0;
  s[1][residue_index('W')] = -7.0;
  const auto pm = profile_from_log_odds(s);
  const auto ds = delta_scores(pm, "ACDK");  // 4 > model_len
  EXPECT_EQ(ds.size(), 4u);
  EXPECT_EQ(ds[1][residue_index('W')], -9.0);
  EXPECT_EQ(ds[1][residue_index('C')], 0.0);
  for (double v : ds[3]) EXPECT_EQ(v, 0.0);
}

TEST(DeltaScores, RandomProfileMatchesBruteForce) {
  Rng rng(21);
  std::vector<ResidueRow> s(30);
  for (auto& r : s)
    for (auto& v : r) v = 4.0 * rng.normal();
  const auto pm = profile_from_log_odds(s);
  std::string anchor;
  for (int i = 0; i < 30; ++i) anchor += kAminoAcids[rng.uniform_index(20)];
  anchor[4] = 'X';
  const auto ds = delta_scores(pm, anchor);
  for (std::size_t i = 0; i < 30; ++i) {
    const auto wt = kAminoAcids.find(anchor[i]);
    for (std::size_t a = 0; a < 20; ++a) {
      const double expect = wt == std::string_view::npos ? 0.0 : s[i][a] - s[i][wt];
      ASSERT_EQ(ds[i][a], expect);
    }
  }
}

TEST(SampleHardNegative, NoCandidatesIsAbsent) {
  std::vector<ResidueRow> ds(40);
  for (auto& r : ds) r.fill(-0.5);
  EXPECT_FALSE(sample_hard_negative(std::string(40, 'A'), ds, HardNegConfig{}, 42));
}

TEST(SampleHardNegative, TwoSpacedCandidates) {
  const std::string anchor = "ACDEFGHIKLMN";
  std::vector<ResidueRow> ds(12);
  for (auto& r : ds) r.fill(0.0);
  ds[0][residue_index('W')] = -9.0;
  ds[7][residue_index('W')] = -9.0;
  HardNegConfig cfg;
  cfg.k_floor = 2;
  const auto hn = sample_hard_negative(anchor, ds, cfg, 42);
  ASSERT_TRUE(hn);
  ASSERT_EQ(hn->substitutions.size(), 2u);
  EXPECT_EQ(hn->total_delta, -18.0);
  EXPECT_EQ(hn->mutant, "WCDEFGHWKLMN");
  // Independent audit.
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < anchor.size(); ++i) diffs += anchor[i] != hn->mutant[i];
  EXPECT_EQ(diffs, 2u);

  EXPECT_FALSE(sample_hard_negative(anchor, ds, HardNegConfig{}, 42));  // k_floor 6
}

TEST(SampleHardNegative, SpacingTooTightIsAbsent) {
  std::vector<ResidueRow> ds(12);
  for (auto& r : ds) r.fill(0.0);
  ds[0][0 + 1] = -9.0;
  ds[5][0] = -9.0;  // distance 5 < 6
  HardNegConfig cfg;
  cfg.k_floor = 2;
  EXPECT_FALSE(sample_hard_negative("ACDEFGHIKLMN", ds, cfg, 1));
}

TEST(SampleHardNegative, LengthLimits) {
  std::vector<ResidueRow> ds5(5);
  for (auto& r : ds5) r.fill(-20.0);
  HardNegConfig cfg;
  cfg.k_floor = 1;
  EXPECT_FALSE(sample_hard_negative("ACDEF", ds5, cfg, 1));
}

TEST(SampleHardNegative, DeterministicAndMonotone) {
  Rng rng(3);
  const std::size_t L = 120;
  std::vector<ResidueRow> s(L);
  for (auto& r : s)
    for (auto& v : r) v = 3.0 * rng.normal();
  std::string anchor;
  for (std::size_t i = 0; i < L; ++i) anchor += kAminoAcids[rng.uniform_index(20)];
  const auto ds = delta_scores(profile_from_log_odds(s), anchor);
  const auto a = sample_hard_negative(anchor, ds, HardNegConfig{}, 99);
  const auto b = sample_hard_negative(anchor, ds, HardNegConfig{}, 99);
  ASSERT_TRUE(a);
  ASSERT_TRUE(b);
  EXPECT_EQ(a->mutant, b->mutant);
  HardNegConfig relaxed;
  relaxed.sum_threshold = -8.0;
  EXPECT_TRUE(sample_hard_negative(anchor, ds, relaxed, 99));
}

TEST(HardNegativeDataset, FeasibleFamilyAndSkips) {
  Rng rng(8);
  const std::size_t L = 60;
  std::vector<ResidueRow> s(L);
  for (auto& r : s)
    for (auto& v : r) v = 3.0 * rng.normal();
  ProfileMatrix pm = profile_from_log_odds(s);
  pm.family_id = "PF1";
  std::vector<SequenceRecord> recs;
  for (int m = 0; m < 3; ++m) {
    SequenceRecord r;
    r.id = "m" + std::to_string(m);
    for (std::size_t i = 0; i < L; ++i) r.sequence += kAminoAcids[rng.uniform_index(20)];
    r.group_id = "PF1";
    recs.push_back(r);
  }
  SequenceRecord orphan = recs[0];
  orphan.id = "o";
  orphan.group_id = "PF2";
  recs.push_back(orphan);
  const auto fams = group_families(recs);
  std::map<std::string, ProfileMatrix> profiles{{"PF1", pm}};
  const auto ds = build_hard_negative_dataset(fams, profiles, HardNegConfig{}, 42);
  EXPECT_EQ(ds.rows.size(), 3u);
  EXPECT_EQ(ds.with_hard_negative, 3u);
  EXPECT_EQ(ds.families_missing_profile, 1u);
  EXPECT_EQ(ds.warnings.size(), 1u);
  EXPECT_EQ(ds.rows[0].positive, recs[1].sequence);
  EXPECT_EQ(ds.rows[2].positive, recs[0].sequence);
  const auto again = build_hard_negative_dataset(fams, profiles, HardNegConfig{}, 42, 4);
  ASSERT_EQ(again.rows.size(), ds.rows.size());
  for (std::size_t i = 0; i < ds.rows.size(); ++i) EXPECT_EQ(encode_pair(again.rows[i]), encode_pair(ds.rows[i]));

  profiles["PF1"].model_len = 80;  // median 60 is 25% off
  const auto inel = build_hard_negative_dataset(fams, profiles, HardNegConfig{}, 42);
  EXPECT_EQ(inel.families_ineligible, 1u);
  EXPECT_TRUE(inel.rows.empty());
}

TEST(HardNegConfig, Validation) {
  HardNegConfig c;
  EXPECT_NO_THROW(c.validate());
  c.per_pos_threshold = 0.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.sum_threshold = -0.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.k_floor = 60;
  EXPECT_THROW(c.validate(), Error);
  EXPECT_EQ(HardNegConfig{}.min_spacing(12), 6u);
  EXPECT_EQ(HardNegConfig{}.min_spacing(200), 25u);
}
