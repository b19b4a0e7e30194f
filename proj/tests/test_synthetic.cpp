#include <gtest/gtest.h>

#include "protsent/model.hpp"
#include "protsent/synthetic.hpp"

using namespace protsent;

namespace {

SyntheticSpec tiny(double noise) {
  SyntheticSpec s;
  s.groups = 4;
  s.members = 3;
  s.heldout = 2;
  s.heldout_train = 1;
  s.dim = 8;
  s.signal_dims = 8;
  s.noise = noise;
  s.dms_assays = 1;
  s.dms_per_assay = 5;
  return s;
}

double mean_cos(const Matrix& u, const std::vector<std::pair<Eigen::Index, Eigen::Index>>& pairs) {
  double s = 0;
  for (auto [i, j] : pairs) s += u.row(i).dot(u.row(j));
  return s / static_cast<double>(pairs.size());
}

}  // namespace

TEST(Synthetic, WithinGroupCloserThanAcross) {
  const auto c = gen_synthetic(tiny(0.3), 42);
  ASSERT_EQ(c.members.size(), 12u);
  const Matrix u = l2_normalize_rows(c.embeddings.matrix);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> within, across;
  for (Eigen::Index i = 0; i < 12; ++i)
    for (Eigen::Index j = i + 1; j < 12; ++j) (i / 3 == j / 3 ? within : across).emplace_back(i, j);
  EXPECT_GT(mean_cos(u, within), mean_cos(u, across));
}

TEST(Synthetic, ZeroNoiseCollapsesGroups) {
  const auto c = gen_synthetic(tiny(0.0), 42);
  const Matrix u = l2_normalize_rows(c.embeddings.matrix);
  for (Eigen::Index g = 0; g < 4; ++g) {
    EXPECT_NEAR(u.row(3 * g).dot(u.row(3 * g + 1)), 1.0, 1e-12);
    EXPECT_NEAR(u.row(3 * g).dot(u.row(3 * g + 2)), 1.0, 1e-12);
  }
}

TEST(Synthetic, SeedRepeatsExactly) {
  const auto a = gen_synthetic(tiny(0.5), 9);
  const auto b = gen_synthetic(tiny(0.5), 9);
  const auto d = gen_synthetic(tiny(0.5), 10);
  EXPECT_EQ(a.members, b.members);
  EXPECT_EQ(a.embeddings.matrix, b.embeddings.matrix);
  EXPECT_EQ(encode_embeddings(a.embeddings), encode_embeddings(b.embeddings));
  EXPECT_NE(a.embeddings.matrix, d.embeddings.matrix);
}

TEST(Synthetic, EveryTrainingSequenceIsEmbedded) {
  const auto c = gen_synthetic(tiny(0.5), 11);
  EmbeddingResolver r(c.embeddings);
  r.add_sidecar(c.sidecar);
  for (const auto& m : c.members) EXPECT_NO_THROW(r.resolve(m.sequence));
  for (const auto& p : c.ppi) EXPECT_NO_THROW(r.resolve(p.anchor));
  for (const auto& row : c.dms) EXPECT_NO_THROW(r.resolve(row.mutant));
  for (const auto& row : c.hard_negatives.rows) {
    if (row.hard_negative) {
      EXPECT_NO_THROW(r.resolve(*row.hard_negative));
    }
  }
}

TEST(Synthetic, RejectsBadSpec) {
  auto s = tiny(0.5);
  s.signal_dims = 9;
  EXPECT_THROW(gen_synthetic(s), Error);
}
