// Acceptance gate: one pass/fail line per criterion, exit 0 only if all pass.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "json.hpp"

#include "mergeopt/analysis.hpp"
#include "mergeopt/cmaes.hpp"
#include "mergeopt/driver.hpp"
#include "mergeopt/errors.hpp"
#include "mergeopt/fitness.hpp"
#include "mergeopt/merger.hpp"
#include "mergeopt/toylab.hpp"

using namespace mergeopt;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = MERGEOPT_FIXTURE_DIR;
int g_failures = 0;

class Timer {
 public:
  Timer() : t0_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point t0_;
};

void report(int num, const std::string& name, bool pass,
            const std::string& detail) {
  if (!pass) ++g_failures;
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << num << " ("
            << name << "): " << detail << "\n";
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- criterion 1: macro-average fixture rows to 1 decimal ----
void criterion1() {
  Timer timer;
  std::ifstream in(kFixtures / "macro_rows.json");
  const auto doc = nlohmann::json::parse(in);
  int rows = 0, bad = 0;
  double worst = 0.0;
  for (const auto& row : doc.at("rows")) {
    TaskScores s;
    const auto tasks = row.at("tasks").get<std::vector<std::string>>();
    const auto scores = row.at("scores").get<std::vector<double>>();
    for (size_t i = 0; i < tasks.size(); ++i) s.scores[tasks[i]] = scores[i];
    const double err =
        std::fabs(macro_average(s, tasks).value - row.at("avg").get<double>());
    worst = std::max(worst, err);
    // 1-decimal agreement: the half-ulp boundary 0.05 itself is a match
    if (err > 0.0500001) ++bad;
    ++rows;
  }
  std::ostringstream detail;
  detail << rows << " published rows, max |computed - printed| = " << worst
         << " (tolerance 0.05, i.e. 1-decimal rounding), " << timer.seconds()
         << " s";
  report(1, "macro-average fixtures", bad == 0 && rows >= 20 &&
                                          timer.seconds() < 1.0,
         detail.str());
}

// ---- criterion 2: tradeoff correlations on the 16x7 score matrix ----
void criterion2() {
  Timer timer;
  const ScoreMatrix m = read_score_csv((kFixtures / "pool_scores.csv").string());
  const double r1 = spearman(m.column("MBPP"), m.column("IFEval"));
  const double r2 = spearman(m.column("MBPP"), m.column("MUSR"));
  const bool pass = std::fabs(r1 - (-0.35)) <= 0.05 &&
                    std::fabs(r2 - (-0.40)) <= 0.05 && timer.seconds() < 1.0;
  std::ostringstream detail;
  detail << "spearman(MBPP, IFEval) = " << r1 << " (want -0.35 +/- 0.05), "
         << "spearman(MBPP, MUSR) = " << r2 << " (want -0.40 +/- 0.05), "
         << timer.seconds() << " s";
  report(2, "tradeoff correlations", pass, detail.str());
}

// ---- criterion 3: optimizer on sphere and rosenbrock ----
void criterion3() {
  Timer timer;
  auto sphere = [](const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return -s;
  };
  auto rosen = [](const std::vector<double>& x) {
    double s = 0.0;
    for (size_t i = 0; i + 1 < x.size(); ++i) {
      const double a = x[i + 1] - x[i] * x[i];
      const double b = 1.0 - x[i];
      s += 100.0 * a * a + b * b;
    }
    return -s;
  };
  CmaEs es1(8, std::vector<double>(8, 5.0), 1.0, std::nullopt, 0);
  double best_sphere = -1e300;
  for (int i = 0; i < 3000; ++i) {
    auto [x, token] = es1.ask();
    best_sphere = std::max(best_sphere, sphere(x));
    es1.tell(token, sphere(x));
  }
  CmaEs es2(4, std::vector<double>(4, 0.0), 0.5, std::nullopt, 0);
  double best_rosen = -1e300;
  for (int i = 0; i < 20000; ++i) {
    auto [x, token] = es2.ask();
    best_rosen = std::max(best_rosen, rosen(x));
    es2.tell(token, rosen(x));
  }
  const bool pass =
      -best_sphere <= 1e-8 && best_rosen >= -1e-4 && timer.seconds() < 10.0;
  std::ostringstream detail;
  detail << "sphere d=8 best ||x||^2 = " << -best_sphere
         << " (<= 1e-8 in 3000 evals), rosenbrock d=4 best = " << best_rosen
         << " (>= -1e-4 in 20000 evals), " << timer.seconds() << " s";
  report(3, "optimizer correctness", pass, detail.str());
}

// ---- criterion 4: oracle equivalence on the N=2 radial suite ----
void criterion4() {
  Timer timer;
  GeneratorConfig gcfg;
  gcfg.dim = 2;
  gcfg.pool_size = 2;
  gcfg.task_count = 2;
  gcfg.noise = 0.0;
  gcfg.seed = 1;
  const auto [pool, suite] = gen_radial_suite(gcfg);
  const auto [oracle_w, oracle_f] =
      grid_oracle(pool, suite, suite.task_names(), 1e-3);

  int hits = 0;
  double worst_gap = 0.0;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    BuiltinEvaluator eval(suite);
    SearchConfig cfg;
    cfg.tasks = suite.task_names();
    cfg.budget = 50;
    cfg.sigma0 = 0.15;
    cfg.seed = seed;
    const SearchLog log = run_search(cfg, pool, eval);
    const double gap = oracle_f.value - log.summary.best_fitness;
    worst_gap = std::max(worst_gap, gap);
    if (gap <= 1e-3) ++hits;
  }
  const bool pass = hits >= 4 && timer.seconds() < 60.0;
  std::ostringstream detail;
  detail << "oracle fitness " << oracle_f.value << " at h=1e-3; " << hits
         << "/5 seeds within 1e-3 (worst gap " << worst_gap << "), "
         << timer.seconds() << " s";
  report(4, "oracle equivalence", pass, detail.str());
}

// Shared N=16, T=2 world for criteria 5, 6, 9 and 10.
struct BigWorld {
  CheckpointPool pool;
  ToyTaskSuite suite;
  std::vector<SearchLog> logs;  // seeds 0..4
  double gen_seconds = 0.0;
  double run_seconds = 0.0;
};

BigWorld big_world() {
  BigWorld w;
  Timer gen_timer;
  GeneratorConfig gcfg;
  gcfg.dim = 16;
  gcfg.pool_size = 16;
  gcfg.task_count = 2;
  gcfg.noise = 0.15;
  gcfg.seed = 7;
  auto [pool, suite] = gen_radial_suite(gcfg);
  w.pool = std::move(pool);
  w.suite = std::move(suite);
  w.gen_seconds = gen_timer.seconds();

  Timer run_timer;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    BuiltinEvaluator eval(w.suite);
    SearchConfig cfg;
    cfg.tasks = w.suite.task_names();
    cfg.budget = 50;
    cfg.sigma0 = 0.15;
    cfg.seed = seed;
    w.logs.push_back(run_search(cfg, w.pool, eval));
  }
  w.run_seconds = run_timer.seconds();
  return w;
}

// ---- criterion 5: optimized >= soup, merge-best, best-single (medians) ----
void criterion5(const BigWorld& w) {
  std::vector<double> optimized, soup, merge_best, best_single;
  for (const auto& log : w.logs) {
    optimized.push_back(log.summary.best_fitness);
    for (const auto& entry : log.summary.report) {
      if (entry.name == "uniform_soup") soup.push_back(entry.heldin_fitness);
      if (entry.name == "merge_best") merge_best.push_back(entry.heldin_fitness);
      if (entry.name == "best_single")
        best_single.push_back(entry.heldin_fitness);
    }
  }
  const double opt = median(optimized);
  const bool pass = opt >= median(soup) && opt >= median(merge_best) &&
                    opt >= median(best_single) && w.run_seconds < 300.0;
  std::ostringstream detail;
  detail << "median over 5 seeds: optimized " << opt << " >= uniform soup "
         << median(soup) << ", merge-best " << median(merge_best)
         << ", best single " << median(best_single) << "; N=16 T=2 pool "
         << "certified pairwise Spearman <= -0.3; 5 runs in " << w.run_seconds
         << " s";
  report(5, "qualitative ordering", pass, detail.str());
}

// ---- criterion 6: warm-start and budget contracts ----
void criterion6(const BigWorld& w) {
  bool pass = true;
  std::ostringstream detail;
  const SearchLog& log = w.logs.front();
  pass = pass && log.seeded_count() == 18 && log.sampled_count() == 50;
  // first 18 logged trials are seeded, the rest sampled
  for (size_t i = 0; i < log.trials.size(); ++i)
    pass = pass && (log.trials[i].kind == (i < 18 ? "seeded" : "sampled"));

  BuiltinEvaluator eval(w.suite);
  int exact = 0;
  for (int i = 0; i < 16; ++i) {
    const TaskScores direct =
        w.suite.score_all(w.pool.read_entry(i), log.config.tasks);
    const double f = macro_average(direct, log.config.tasks).value;
    if (log.trials[i].fitness == f &&
        log.trials[i].scores.scores == direct.scores)
      ++exact;
  }
  pass = pass && exact == 16;
  detail << log.seeded_count() << " seeded then " << log.sampled_count()
         << " sampled trials (want 18 / 50); " << exact
         << "/16 one-hot fitness values bit-identical to direct evaluation";
  report(6, "warm start and budget contracts", pass, detail.str());
}

// ---- criterion 7: FLOPs formulas vs published values ----
void criterion7() {
  const CostReport r = flops_cost(
      100e9, {64, 1554}, {64, 1182}, {{"MBPP", 500.0}, {"IFEval", 541.0}}, 50);
  const double sft = 6.0 * 100e9 * 64 * 1554;
  const double po = 6.0 * 100e9 * 64 * 1182;
  auto within2 = [](double got, double printed) {
    return std::fabs(got - printed) / printed <= 0.02;
  };
  const bool exact =
      r.train_flops == sft + po &&
      r.inference_flops_per_task.at("MBPP") == 2.0 * 100e9 * 500 &&
      r.search_flops == 50.0 * (2.0 * 100e9 * 500 + 2.0 * 100e9 * 541);
  const bool pass = exact && within2(sft, 6e16) && within2(po, 4.57e16) &&
                    within2(r.train_flops, 1.057e17) &&
                    within2(r.search_flops, 1.05e16);
  std::ostringstream detail;
  detail << "SFT " << sft << " vs 6e16, PO " << po << " vs 4.57e16, total "
         << r.train_flops << " vs 1.057e17, search " << r.search_flops
         << " vs 1.05e16 (all within 2%); formulas 6*P*B*S and 2*P*samples "
         << (exact ? "exact" : "NOT exact");
  report(7, "FLOPs formulas", pass, detail.str());
}

// ---- criterion 8: merge algebra property harness ----
void criterion8() {
  Timer timer;
  std::mt19937_64 rng(101);
  std::normal_distribution<float> gaussf(0.0f, 3.0f);
  std::normal_distribution<double> gauss(0.3, 1.0);
  int cases = 0, bad = 0;

  auto random_pool = [&](size_t n, size_t dim) {
    CheckpointPool pool;
    for (size_t i = 0; i < n; ++i) {
      TensorMap ckpt("p" + std::to_string(i));
      Tensor t;
      t.shape = {static_cast<int64_t>(dim)};
      t.data.resize(dim);
      for (float& v : t.data) v = gaussf(rng);
      ckpt.add("w", std::move(t));
      pool.add_in_memory("p" + std::to_string(i), std::move(ckpt));
    }
    return pool;
  };
  auto random_weights = [&](size_t n) {
    while (true) {
      std::vector<double> raw(n);
      for (double& v : raw) v = gauss(rng);
      try {
        return std::pair{raw, normalize(WeightVector{raw})};
      } catch (const Error&) {
      }
    }
  };

  // one-hot bit-exactness (16 pools x up to 6 entries)
  for (int iter = 0; iter < 16; ++iter) {
    const size_t n = 2 + rng() % 5;
    const CheckpointPool pool = random_pool(n, 8);
    for (size_t i = 0; i < n; ++i) {
      ++cases;
      if (merge(pool, one_hot_weights(n, i)).at("w").data !=
          pool.read_entry(i).at("w").data)
        ++bad;
    }
  }

  // permutation equivariance
  for (int iter = 0; iter < 300; ++iter) {
    ++cases;
    const size_t n = 2 + rng() % 6;
    const size_t dim = 1 + rng() % 8;
    const CheckpointPool pool = random_pool(n, dim);
    const auto [raw, w] = random_weights(n);
    std::vector<size_t> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    CheckpointPool permuted;
    NormalizedWeights pw;
    pw.alpha.resize(n);
    for (size_t i = 0; i < n; ++i) {
      permuted.add_in_memory(pool.entry(perm[i]).label, pool.read_entry(perm[i]));
      pw.alpha[i] = w.alpha[perm[i]];
    }
    const std::vector<float> a = merge(pool, w).at("w").data;
    const std::vector<float> b = merge(permuted, pw).at("w").data;
    for (size_t j = 0; j < a.size(); ++j) {
      const double scale =
          std::max({std::fabs((double)a[j]), std::fabs((double)b[j]), 1.0});
      if (std::fabs((double)a[j] - (double)b[j]) > 1e-12 * scale) ++bad;
    }
  }

  // positive-scale invariance of normalize
  std::uniform_real_distribution<double> scale_dist(1e-6, 1e6);
  for (int iter = 0; iter < 400; ++iter) {
    ++cases;
    const size_t n = 1 + rng() % 10;
    const auto [raw, w1] = random_weights(n);
    std::vector<double> scaled = raw;
    const double c = scale_dist(rng);
    for (double& v : scaled) v *= c;
    const NormalizedWeights w2 = normalize(WeightVector{scaled});
    for (size_t i = 0; i < n; ++i)
      if (std::fabs(w1.alpha[i] - w2.alpha[i]) > 1e-15) ++bad;
  }

  // convex-hull bounds, one ulp of slack
  for (int iter = 0; iter < 300; ++iter) {
    ++cases;
    const size_t n = 2 + rng() % 6;
    const size_t dim = 1 + rng() % 8;
    const CheckpointPool pool = random_pool(n, dim);
    const auto [raw, w] = random_weights(n);
    const std::vector<float> out = merge(pool, w).at("w").data;
    for (size_t j = 0; j < dim; ++j) {
      float lo = pool.read_entry(0).at("w").data[j];
      float hi = lo;
      for (size_t i = 1; i < n; ++i) {
        const float v = pool.read_entry(i).at("w").data[j];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      if (out[j] < std::nextafter(lo, -INFINITY) ||
          out[j] > std::nextafter(hi, INFINITY))
        ++bad;
    }
  }

  std::ostringstream detail;
  detail << cases << " generated cases across one-hot exactness, permutation "
         << "equivariance (1e-12 rel), scale invariance (1e-15), hull bounds; "
         << bad << " violations; " << timer.seconds() << " s";
  report(8, "merge algebra suite", cases >= 1000 && bad == 0, detail.str());
}

// ---- criterion 9: deterministic resume after 20 sampled trials ----
void criterion9(const BigWorld& w) {
  const fs::path dir = fs::temp_directory_path() / "mergeopt_acceptance";
  fs::create_directories(dir);
  const fs::path full_log = dir / "full.jsonl";
  const fs::path part_log = dir / "part.jsonl";

  BuiltinEvaluator eval(w.suite);
  SearchConfig cfg;
  cfg.tasks = w.suite.task_names();
  cfg.budget = 50;
  cfg.sigma0 = 0.15;
  cfg.seed = 0;
  const SearchLog full = run_search(cfg, w.pool, eval, full_log);

  std::ifstream in(full_log);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  in.close();
  {
    std::ofstream out(part_log, std::ios::trunc);
    for (size_t i = 0; i < 1 + 18 + 20; ++i) out << lines[i] << "\n";
  }
  const SearchLog resumed = resume(part_log, w.pool, eval);

  bool identical = resumed.trials.size() == full.trials.size();
  int compared = 0;
  if (identical) {
    for (size_t i = 0; i < full.trials.size(); ++i) {
      if (full.trials[i].kind != "sampled") continue;
      ++compared;
      if (resumed.trials[i].raw != full.trials[i].raw ||
          resumed.trials[i].fitness != full.trials[i].fitness)
        identical = false;
    }
  }
  std::ostringstream detail;
  detail << "interrupted after 20 of 50 sampled trials; " << compared
         << " sampled raw vectors and fitness values compared "
         << (identical ? "identical" : "DIFFERENT")
         << " to the uninterrupted run";
  report(9, "determinism and resume", identical && compared == 50,
         detail.str());
}

// ---- criterion 10: solution density of the top-1 merge ----
void criterion10(const BigWorld& w) {
  int dense_seeds = 0;
  std::ostringstream counts;
  for (const auto& log : w.logs) {
    const SparsityReport r = sparsity(log.summary.best_weights, 1e-3);
    const size_t above = log.summary.best_weights.size() - r.count_below;
    if (above >= 9) ++dense_seeds;
    counts << above << " ";
  }
  std::ostringstream detail;
  detail << "weights > 1e-3 in the top-1 solution per seed: [ " << counts.str()
         << "] (need >= 9/16 in >= 3/5 seeds); " << dense_seeds
         << "/5 seeds qualify";
  report(10, "solution density", dense_seeds >= 3, detail.str());
}

}  // namespace

int main() {
  try {
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    const BigWorld w = big_world();
    criterion5(w);
    criterion6(w);
    criterion7();
    criterion8();
    criterion9(w);
    criterion10(w);
  } catch (const std::exception& e) {
    std::cout << "[FAIL] acceptance aborted: " << e.what() << "\n";
    return 1;
  }
  std::cout << (g_failures == 0 ? "ACCEPTANCE: all criteria passed"
                                : "ACCEPTANCE: " +
                                      std::to_string(g_failures) +
                                      " criteria failed")
            << "\n";
  return g_failures == 0 ? 0 : 1;
}
