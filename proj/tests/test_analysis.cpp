#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "mergeopt/analysis.hpp"
#include "mergeopt/errors.hpp"

using namespace mergeopt;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MERGEOPT_FIXTURE_DIR;

ScoreMatrix reference_matrix() {
  return read_score_csv((kFixtures / "pool_scores.csv").string());
}

}  // namespace

TEST_CASE("score csv roundtrip") {
  const ScoreMatrix m = reference_matrix();
  REQUIRE(m.row_labels.size() == 16);
  REQUIRE(m.task_names.size() == 7);
  const fs::path out = fs::temp_directory_path() / "mergeopt_scores_rt.csv";
  write_score_csv(m, out.string());
  const ScoreMatrix back = read_score_csv(out.string());
  CHECK(back.row_labels == m.row_labels);
  CHECK(back.task_names == m.task_names);
  CHECK(back.values == m.values);
}

TEST_CASE("spearman basics") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) == doctest::Approx(-1.0));
  // monotone but nonlinear is still exactly 1
  CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 1000}) == doctest::Approx(1.0));
}

TEST_CASE("spearman averages ranks on ties") {
  // x ranks: 1, 2.5, 2.5, 4 ; y ranks: 1, 2, 3, 4
  const double r = spearman({1, 2, 2, 3}, {1, 2, 3, 4});
  // pearson of the rank series above
  CHECK(r == doctest::Approx(0.9486832980505138).epsilon(1e-12));
}

TEST_CASE("spearman degenerate inputs") {
  try {
    spearman({1, 2}, {1, 2, 3});
    FAIL("expected LengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LengthMismatch);
  }
  try {
    spearman({5, 5, 5}, {1, 2, 3});
    FAIL("expected ConstantSeries");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ConstantSeries);
  }
}

TEST_CASE("reference pool tradeoffs reproduce within 0.05") {
  const ScoreMatrix m = reference_matrix();
  CHECK(spearman(m.column("MBPP"), m.column("IFEval")) ==
        doctest::Approx(-0.35).epsilon(0.15));
  CHECK(std::fabs(spearman(m.column("MBPP"), m.column("IFEval")) - (-0.3536)) <=
        0.05);
  CHECK(std::fabs(spearman(m.column("MBPP"), m.column("MUSR")) - (-0.4019)) <=
        0.05);
}

TEST_CASE("correlation matrix is symmetric with unit diagonal") {
  const ScoreMatrix m = reference_matrix();
  const auto c = correlation_matrix(m);
  REQUIRE(c.size() == 7);
  for (size_t i = 0; i < 7; ++i) {
    CHECK(c[i][i] == doctest::Approx(1.0));
    for (size_t j = 0; j < 7; ++j)
      CHECK(c[i][j] == doctest::Approx(c[j][i]).epsilon(1e-12));
  }
  const size_t mbpp = m.task_index("MBPP");
  const size_t musr = m.task_index("MUSR");
  CHECK(std::fabs(c[mbpp][musr] - (-0.4019)) <= 0.05);
}

TEST_CASE("pareto front on hand points") {
  // (1,5) and (5,1) undominated; (2,2) dominated by (3,3); (3,3) undominated
  const auto front = pareto_front({{1, 5}, {5, 1}, {2, 2}, {3, 3}});
  CHECK(front == std::vector<size_t>{0, 1, 3});
}

TEST_CASE("pareto front with duplicates keeps both copies") {
  const auto front = pareto_front({{1, 1}, {1, 1}, {0, 0}});
  CHECK(front == std::vector<size_t>{0, 1});
}

TEST_CASE("pareto front in 3d") {
  const auto front = pareto_front({{1, 2, 3}, {3, 2, 1}, {1, 2, 2}, {2, 2, 2}});
  CHECK(front == std::vector<size_t>{0, 1, 3});
}

TEST_CASE("sparsity counts entries strictly below epsilon") {
  const auto r = sparsity({0.5, 0.4995, 0.0005});
  CHECK(r.count_below == 1);
  CHECK(r.indices_below == std::vector<size_t>{2});

  const auto r2 = sparsity({1e-3, 0.999});  // boundary value is not below
  CHECK(r2.count_below == 0);

  const auto r3 = sparsity({0.2, 0.0, 1e-4, 0.7999}, 1e-3);
  CHECK(r3.count_below == 2);
  CHECK(r3.indices_below == std::vector<size_t>{1, 2});
}

TEST_CASE("centroid is the component-wise mean") {
  const auto c = centroid({{1, 2}, {3, 6}});
  CHECK(c == std::vector<double>{2.0, 4.0});
  CHECK_THROWS_AS(centroid({{1, 2}, {1}}), Error);
  CHECK_THROWS_AS(centroid({}), Error);
}

TEST_CASE("progress tracks the running best") {
  const auto p = progress({1.0, 3.0, 2.0});
  REQUIRE(p.size() == 3);
  CHECK(p[0].running_best == 1.0);
  CHECK(p[1].running_best == 3.0);
  CHECK(p[2].running_best == 3.0);
  CHECK(p[2].fitness == 2.0);
  CHECK(p[2].trial_index == 2);
}

TEST_CASE("flops cost uses 6PBS training and 2P-per-sample inference") {
  // 100B params, SFT 64x1554, PO 64x1182, 2-task search at 500 + 541 samples
  const CostReport r = flops_cost(
      100e9, {64, 1554}, {64, 1182}, {{"MBPP", 500.0}, {"IFEval", 541.0}}, 50);
  CHECK(r.train_flops == doctest::Approx(1.050624e17).epsilon(1e-12));
  CHECK(r.inference_flops_per_task.at("MBPP") ==
        doctest::Approx(1.0e14).epsilon(1e-12));
  CHECK(r.inference_flops_per_task.at("IFEval") ==
        doctest::Approx(1.082e14).epsilon(1e-12));
  CHECK(r.search_flops == doctest::Approx(1.041e16).epsilon(1e-12));
  CHECK(r.ratio_search_to_train ==
        doctest::Approx(r.search_flops / r.train_flops));
  // published round-offs hold to 2%
  CHECK(std::fabs(6 * 100e9 * 64 * 1554 - 6e16) / 6e16 <= 0.02);
  CHECK(std::fabs(6 * 100e9 * 64 * 1182 - 4.57e16) / 4.57e16 <= 0.02);
  CHECK(std::fabs(r.train_flops - 1.057e17) / 1.057e17 <= 0.02);
  CHECK(std::fabs(r.search_flops - 1.05e16) / 1.05e16 <= 0.02);
}

TEST_CASE("flops cost is linear in the sample counts") {
  const CostReport one = flops_cost(1e9, {1, 1}, {1, 1}, {{"t", 100.0}}, 10);
  const CostReport two = flops_cost(1e9, {1, 1}, {1, 1}, {{"t", 200.0}}, 10);
  CHECK(two.search_flops == doctest::Approx(2 * one.search_flops));
  CHECK(two.train_flops == one.train_flops);
}
