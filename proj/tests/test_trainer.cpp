#include <gtest/gtest.h>

#include <sstream>

#include "protsent/synthetic.hpp"
#include "protsent/trainer.hpp"

using namespace protsent;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.groups = 8;
  s.members = 8;
  s.heldout = 4;
  s.heldout_train = 2;
  s.dim = 8;
  s.signal_dims = 4;
  s.dms_assays = 2;
  s.dms_per_assay = 12;
  return s;
}

TrainingSet grouped_from(const SyntheticCorpus& c) {
  TrainingSet s;
  s.name = "pfam";
  s.layout = TrainingSet::Layout::grouped;
  const auto index = c.embeddings.index();
  for (const auto& r : c.members) {
    s.rows.push_back(index.at(r.id));
    s.groups.push_back(*r.group_id);
  }
  return s;
}

TrainerConfig small_trainer() {
  TrainerConfig t;
  t.micro_batch = 8;
  t.effective_batch = 16;
  t.warmup_steps = 5;
  t.base_lr = 5e-2;
  return t;
}

}  // namespace

TEST(Trainer, EmptyPlanReturnsInit) {
  const auto c = gen_synthetic(small_spec(), 1);
  const std::vector<TrainingSet> sets{grouped_from(c)};
  BatchPlan plan;
  plan.batch_size = 8;
  const auto init = AdapterParams::identity(8, 1e-3, 3);
  const auto r = train_adapter(c.embeddings.matrix, sets, plan, small_trainer(), init);
  EXPECT_EQ(r.params.weight, init.weight);
  EXPECT_EQ(r.optimizer_steps, 0u);
  EXPECT_TRUE(r.log.empty());
}

TEST(Trainer, LossDecreasesAndRunsRepeatBitwise) {
  const auto c = gen_synthetic(small_spec(), 2);
  const std::vector<TrainingSet> sets{grouped_from(c)};
  const auto plan = make_training_plan(sets, SamplerKind::round_robin, 8, 8 * 400, 42);
  ASSERT_EQ(plan.steps.size(), 400u);
  const auto init = AdapterParams::identity(8, 1e-3, 42);
  const auto a = train_adapter(c.embeddings.matrix, sets, plan, small_trainer(), init);
  const auto b = train_adapter(c.embeddings.matrix, sets, plan, small_trainer(), init);
  EXPECT_EQ(a.optimizer_steps, 200u);
  double head = 0, tail = 0;
  for (std::size_t i = 0; i < 40; ++i) {
    head += a.log[i].loss;
    tail += a.log[a.log.size() - 1 - i].loss;
  }
  EXPECT_LT(tail, 0.8 * head);
  std::ostringstream la, lb;
  write_loss_log(la, a.log, {"pfam"});
  write_loss_log(lb, b.log, {"pfam"});
  EXPECT_EQ(la.str(), lb.str());
  EXPECT_EQ(a.params.weight, b.params.weight);
  EXPECT_NE(la.str().find("\"dataset\":\"pfam\""), std::string::npos);
}

TEST(Trainer, AccumulationGroupsPlanSteps) {
  const auto c = gen_synthetic(small_spec(), 3);
  const std::vector<TrainingSet> sets{grouped_from(c)};
  const auto plan = make_training_plan(sets, SamplerKind::round_robin, 8, 8 * 7, 42);
  auto cfg = small_trainer();
  cfg.effective_batch = 32;
  const auto r = train_adapter(c.embeddings.matrix, sets, plan, cfg, AdapterParams::identity(8, 1e-3, 1));
  EXPECT_EQ(r.optimizer_steps, 2u);
  ASSERT_EQ(r.log.size(), 7u);
  EXPECT_EQ(r.log[3].optimizer_step, 0u);
  EXPECT_EQ(r.log[4].optimizer_step, 1u);
}

TEST(Trainer, ScoredSetUsesCosent) {
  const auto c = gen_synthetic(small_spec(), 4);
  TrainingSet s;
  s.name = "dms";
  s.layout = TrainingSet::Layout::scored;
  for (std::size_t i = 0; i + 1 < 10; ++i) s.scored.push_back({i, i + 1, 0.1 * static_cast<double>(i)});
  EXPECT_EQ(s.loss(), LossKind::cosent);
  const std::vector<TrainingSet> sets{s};
  const auto plan = make_training_plan(sets, SamplerKind::round_robin, 4, 40, 42);
  const auto r = train_adapter(c.embeddings.matrix, sets, plan, small_trainer(), AdapterParams::identity(8, 1e-3, 1));
  for (const auto& e : r.log) EXPECT_TRUE(std::isfinite(e.loss));
}

TEST(Trainer, NonFiniteInputRaises) {
  auto c = gen_synthetic(small_spec(), 5);
  c.embeddings.matrix(3, 0) = std::numeric_limits<double>::quiet_NaN();
  const std::vector<TrainingSet> sets{grouped_from(c)};
  const auto plan = make_training_plan(sets, SamplerKind::round_robin, 8, 8 * 20, 42);
  EXPECT_THROW(train_adapter(c.embeddings.matrix, sets, plan, small_trainer(), AdapterParams::identity(8, 1e-3, 1)),
               NumericError);
}

TEST(Trainer, MnrlRejectsBatchOfOne) {
  const auto c = gen_synthetic(small_spec(), 6);
  const std::vector<TrainingSet> sets{grouped_from(c)};
  EXPECT_THROW(make_training_plan(sets, SamplerKind::round_robin, 1, 10, 42), Error);
}
