#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "eval_oracle.hpp"
#include "gradcheck.hpp"
#include "oracle_values.hpp"
#include "protsent/eval.hpp"

using namespace protsent;

TEST(Metrics, AucExamples) {
  EXPECT_NEAR(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), oracle::kAucExample, 1e-12);
  EXPECT_DOUBLE_EQ(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(auc({0.1, 0.2, 0.9, 0.95}, {0, 0, 1, 1}), 1.0);
  EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), Error);
}

TEST(Metrics, MacroF1Example) {
  // two balanced classes, all predicted as class 0: (2/3 + 0) / 2
  EXPECT_NEAR(macro_f1({0, 0, 0, 0}, {0, 0, 1, 1}), 1.0 / 3.0, 1e-12);
  // classes come from the truth labels only; class 1 appears only as a prediction
  EXPECT_NEAR(macro_f1({0, 1, 1}, {0, 0, 2}), (2.0 / 3.0 + 0.0) / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(macro_f1({0, 1, 2}, {0, 1, 2}), 1.0);
}

TEST(Metrics, SpearmanExamples) {
  EXPECT_NEAR(spearman({1, 2, 3}, {3, 1, 2}), oracle::kSpearmanExample, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {10, 20, 30, 40}), 1.0, 1e-12);
  EXPECT_NEAR(spearman({1, 2, 3, 4}, {4, 3, 2, 1}), -1.0, 1e-12);
  EXPECT_THROW(spearman({1, 1, 1}, {1, 2, 3}), Error);
}

TEST(Metrics, AgreeWithBruteForce) {
  Rng rng(7);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 2 + rng.uniform_index(120);
    std::vector<double> s(n), y(n);
    std::vector<int> b(n), p(n), c(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.uniform_index(20));  // many ties
      y[i] = rng.uniform01();
      b[i] = static_cast<int>(i < 2 ? i : rng.uniform_index(2));
      c[i] = static_cast<int>(rng.uniform_index(4));
      p[i] = static_cast<int>(rng.uniform_index(5));
    }
    EXPECT_NEAR(auc(s, b), brute::auc(s, b), 1e-12);
    EXPECT_NEAR(macro_f1(p, c), brute::macro_f1(p, c), 1e-12);
    if (std::adjacent_find(s.begin(), s.end(), std::not_equal_to<>()) != s.end()) {
      EXPECT_NEAR(spearman(s, y), brute::spearman(s, y), 1e-12);
    }
  }
}

TEST(Knn, MatchesBruteForce) {
  Rng rng(8);
  const Matrix train = gradcheck::random_matrix(rng, 80, 6);
  const Matrix q = gradcheck::random_matrix(rng, 20, 6);
  for (auto metric : {DistanceMetric::euclidean, DistanceMetric::cosine}) {
    const auto nb = knn_neighbors(train, q, 5, metric, 3);
    for (Eigen::Index r = 0; r < q.rows(); ++r) {
      EXPECT_EQ(nb[static_cast<std::size_t>(r)], brute::knn(train, q, r, 5, metric == DistanceMetric::cosine));
    }
  }
}

TEST(Knn, IdenticalPointThreeTimes) {
  Matrix train(5, 2);
  train << 1, 1, 1, 1, 1, 1, 9, 9, -9, 9;
  const auto r = knn_predict(train, std::vector<int>{1, 1, 1, 0, 0}, Matrix(Matrix::Constant(1, 2, 1.0)), 2);
  EXPECT_EQ(r.predicted[0], 1);
  EXPECT_DOUBLE_EQ(r.probabilities(0, 1), 1.0);
  const auto v = knn_predict(train, std::vector<double>{2, 4, 6, 0, 0}, Matrix(Matrix::Constant(1, 2, 1.0)));
  EXPECT_DOUBLE_EQ(v[0], 4.0);
}

TEST(Knn, EuclideanEqualsCosineOnUnitRows) {
  Rng rng(9);
  const Matrix train = gradcheck::random_unit_rows(rng, 300, 8);
  const Matrix q = gradcheck::random_unit_rows(rng, 50, 8);
  EXPECT_EQ(knn_neighbors(train, q, 10, DistanceMetric::euclidean),
            knn_neighbors(train, q, 10, DistanceMetric::cosine));
}

TEST(Recall, TwinsGiveOne) {
  Rng rng(10);
  const Matrix base = gradcheck::random_unit_rows(rng, 20, 16);
  Matrix emb(40, 16);
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < 20; ++i) {
    emb.row(2 * i) = base.row(i);
    emb.row(2 * i + 1) = base.row(i);
    labels.push_back("g" + std::to_string(i));
    labels.push_back("g" + std::to_string(i));
  }
  const auto r = recall_at_k(emb, labels, {1});
  EXPECT_DOUBLE_EQ(r.recall.at(1), 1.0);
  EXPECT_EQ(r.queries, 40u);
}

TEST(Recall, SingletonsExcludedAndBruteForce) {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const std::size_t n = 10 + rng.uniform_index(60);
    const Matrix emb = gradcheck::random_unit_rows(rng, static_cast<Eigen::Index>(n), 4);
    std::vector<std::string> labels(n);
    for (auto& l : labels) l = std::to_string(rng.uniform_index(n / 3 + 1));
    labels[0] = "singleton";
    const auto r = recall_at_k(emb, labels, {1, 3, 10}, 2);
    EXPECT_GE(r.excluded_singletons, 1u);
    double prev = 0.0;
    for (std::size_t k : {1, 3, 10}) {
      EXPECT_NEAR(r.recall.at(k), brute::recall_at_k(emb, labels, k), 1e-12);
      EXPECT_GE(r.recall.at(k), prev);
      prev = r.recall.at(k);
    }
  }
}

namespace {

EvalTask duplicated_task(TaskKind kind, TaskMetric metric) {
  EvalTask t;
  t.name = "dup";
  t.kind = kind;
  t.metric = metric;
  for (std::size_t i = 0; i < 40; ++i) {
    t.rows.push_back(i);
    t.labels.push_back(kind == TaskKind::regression ? std::to_string(i / 4) : std::to_string(i / 4 % 2));
  }
  return t;
}

// Rows come in clusters of 4 identical points, so every held-out item has
// three exact copies in training.
Matrix clustered_rows() {
  Rng rng(12);
  const Matrix base = gradcheck::random_unit_rows(rng, 10, 8);
  Matrix m(40, 8);
  for (Eigen::Index i = 0; i < 40; ++i) m.row(i) = base.row(i / 4);
  return m;
}

}  // namespace

TEST(Tasks, CrossValidationOnDuplicatedData) {
  const Matrix emb = clustered_rows();
  auto t = duplicated_task(TaskKind::multiclass, TaskMetric::macro_f1);
  t.cv_folds = 4;
  EXPECT_GT(evaluate_task(emb, t), 0.5);
  auto r = duplicated_task(TaskKind::regression, TaskMetric::spearman);
  EXPECT_GT(evaluate_task(emb, r), 0.5);
  auto b = duplicated_task(TaskKind::binary, TaskMetric::auc);
  EXPECT_GT(evaluate_task(emb, b), 0.5);
  EXPECT_EQ(evaluate_task(emb, b, 5), evaluate_task(emb, b, 5));
}

TEST(Tasks, ValidationErrors) {
  auto t = duplicated_task(TaskKind::regression, TaskMetric::auc);
  EXPECT_THROW(t.validate(), Error);
  auto u = duplicated_task(TaskKind::multiclass, TaskMetric::macro_f1);
  u.train = {1};
  EXPECT_THROW(u.validate(), Error);
}

TEST(Tasks, FoldsAreBalancedPartition) {
  std::vector<std::string> labels;
  for (int i = 0; i < 103; ++i) labels.push_back(std::to_string(i % 3));
  const auto f = cv_fold_assignment(labels, 4, 42, false);
  std::vector<std::size_t> sizes(4, 0);
  for (auto x : f) ++sizes[x];
  for (auto s : sizes) EXPECT_GE(s, 25u);
  EXPECT_EQ(f, cv_fold_assignment(labels, 4, 42, false));
}

TEST(FewShot, SkipsAndReportsUndefined) {
  const Matrix emb = clustered_rows();
  auto t = duplicated_task(TaskKind::binary, TaskMetric::auc);
  for (std::size_t i = 0; i < 40; ++i) (i % 4 == 0 ? t.test : t.train).push_back(i);
  const auto rows = few_shot(emb, emb, t, {3, 10, 30, 100});
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[1].skipped);
  EXPECT_TRUE(rows[3].skipped);
  for (const auto& r : rows) {
    if (r.baseline && r.trained) {
      EXPECT_EQ(*r.baseline, *r.trained);
      ASSERT_TRUE(r.delta_pct.has_value());
      EXPECT_EQ(*r.delta_pct, 0.0);
    }
  }
  // a single-class training subsample leaves AUC undefined rather than guessed
  auto single = t;
  single.train.clear();
  for (std::size_t i = 0; i < 40; ++i)
    if (i % 4 && t.labels[i] == "0") single.train.push_back(i);
  EXPECT_FALSE(evaluate_split(emb, single, single.train, single.test).has_value());
}

TEST(Report, DeltaExampleAndCounts) {
  const auto r = delta_report({"a", "b", "c"}, {0.385, 0.5, 0.0}, {0.445, 0.4, 0.1});
  ASSERT_TRUE(r.tasks[0].delta_pct.has_value());
  EXPECT_NEAR(*r.tasks[0].delta_pct, oracle::kDeltaExample, 1e-9);
  EXPECT_NEAR(*r.tasks[1].delta_pct, -20.0, 1e-9);
  EXPECT_FALSE(r.tasks[2].delta_pct.has_value());
  EXPECT_EQ(r.improved, 2u);
  EXPECT_NEAR(r.mean_delta_pct, (oracle::kDeltaExample - 20.0) / 2.0, 1e-9);
  const auto table = format_table(r);
  EXPECT_NE(table.find("+15.6%"), std::string::npos);
  EXPECT_NE(table.find("N/A"), std::string::npos);
  EXPECT_TRUE(to_json(r)["tasks"][2]["delta_pct"].is_null());
  EXPECT_THROW(delta_report({"a"}, {1.0, 2.0}, {1.0}), Error);
}

TEST(Manifest, LoadsTaskFiles) {
  const auto dir = std::filesystem::temp_directory_path() / "protsent_task_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "labels.tsv") << "a\tx\nb\ty\nc\tx\n";
  std::ofstream(dir / "train.txt") << "a\nb\n";
  std::ofstream(dir / "test.txt") << "c\n";
  std::ofstream(dir / "task.json") << R"({"name":"t","kind":"multiclass","metric":"macro_f1","labels":"labels.tsv","train":"train.txt","test":"test.txt"})";
  const std::unordered_map<std::string, std::size_t> idx{{"a", 5}, {"b", 6}, {"c", 7}};
  const auto t = load_task_manifest((dir / "task.json").string(), idx);
  EXPECT_EQ(t.rows, (std::vector<std::size_t>{5, 6, 7}));
  EXPECT_EQ(t.test, (std::vector<std::size_t>{2}));
  std::ofstream(dir / "bad.json") << R"({"name":"t","kind":"multiclass"})";
  EXPECT_THROW(load_task_manifest((dir / "bad.json").string(), idx), Error);
  std::ofstream(dir / "broken.json") << "{";
  EXPECT_THROW(load_task_manifest((dir / "broken.json").string(), idx), Error);
  std::filesystem::remove_all(dir);
}
