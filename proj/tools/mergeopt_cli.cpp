// Command-line front end: toy pool generation, evaluation, merging,
// baselines, CMA-ES search, analysis exports and FLOPs estimates.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "mergeopt/analysis.hpp"
#include "mergeopt/driver.hpp"
#include "mergeopt/errors.hpp"
#include "mergeopt/fitness.hpp"
#include "mergeopt/merger.hpp"
#include "mergeopt/tensorstore.hpp"
#include "mergeopt/toylab.hpp"

namespace fs = std::filesystem;
using namespace mergeopt;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream ss(s);
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::unique_ptr<Evaluator> make_evaluator(const std::string& suite_dir,
                                          const std::string& command) {
  if (!suite_dir.empty())
    return std::make_unique<BuiltinEvaluator>(
        load_suite(fs::path(suite_dir) / "suite.json"));
  if (!command.empty()) return std::make_unique<ExternalEvaluator>(command);
  throw Error(ErrorCode::InvalidConfig, "need --suite or --evaluator");
}

void print_scores(const TaskScores& scores) {
  nlohmann::ordered_json j;
  j["scores"] = nlohmann::ordered_json::object();
  for (const auto& [task, score] : scores.scores) j["scores"][task] = score;
  std::cout << j.dump(2) << "\n";
}

void print_summary(const SearchLog& log) {
  nlohmann::ordered_json j;
  j["seeded_trials"] = log.seeded_count();
  j["sampled_trials"] = log.sampled_count();
  j["best_trial_id"] = log.summary.best_trial_id;
  j["best_fitness"] = log.summary.best_fitness;
  j["best_weights"] = log.summary.best_weights;
  j["report"] = nlohmann::ordered_json::array();
  for (const auto& r : log.summary.report) {
    nlohmann::ordered_json e;
    e["name"] = r.name;
    e["heldin_fitness"] = r.heldin_fitness;
    e["scores"] = nlohmann::ordered_json::object();
    for (const auto& [task, score] : r.scores.scores) e["scores"][task] = score;
    j["report"].push_back(std::move(e));
  }
  std::cout << j.dump(2) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Checkpoint-pool linear-merge optimization toolkit"};
  app.require_subcommand(1);

  // gen-toys
  auto* gen = app.add_subcommand("gen-toys", "Generate a synthetic pool + task suite");
  std::string gen_kind = "radial", gen_out;
  GeneratorConfig gen_cfg;
  gen->add_option("--kind", gen_kind)->check(CLI::IsMember({"radial", "ridge"}));
  gen->add_option("--dim", gen_cfg.dim);
  gen->add_option("--n", gen_cfg.pool_size);
  gen->add_option("--tasks", gen_cfg.task_count);
  gen->add_option("--noise", gen_cfg.noise);
  gen->add_option("--seed", gen_cfg.seed);
  gen->add_option("--ridge-lambda", gen_cfg.ridge_lambda);
  gen->add_option("--out", gen_out)->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Score one checkpoint");
  std::string ev_ckpt, ev_cmd, ev_suite, ev_tasks;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--evaluator", ev_cmd);
  ev->add_option("--suite", ev_suite);
  ev->add_option("--tasks", ev_tasks)->required();

  // merge
  auto* mg = app.add_subcommand("merge", "Merge a pool with given weights");
  std::string mg_pool, mg_weights, mg_out;
  mg->add_option("--pool", mg_pool)->required();
  mg->add_option("--weights", mg_weights, "JSON array, inline or a file path")
      ->required();
  mg->add_option("--out", mg_out)->required();

  // baselines
  auto* bl = app.add_subcommand("baselines", "Uniform / merge-best / best-single");
  std::string bl_pool, bl_suite, bl_cmd, bl_tasks;
  bl->add_option("--pool", bl_pool)->required();
  bl->add_option("--suite", bl_suite);
  bl->add_option("--evaluator", bl_cmd);
  bl->add_option("--tasks", bl_tasks)->required();

  // optimize
  auto* op = app.add_subcommand("optimize", "Run the merge-weight search");
  std::string op_pool, op_suite, op_cmd, op_tasks, op_heldout, op_resume,
      op_log = "search_log.jsonl", op_policy = "abort";
  SearchConfig op_cfg;
  int op_top_n = 0;
  bool op_no_warm = false;
  op->add_option("--pool", op_pool);
  op->add_option("--suite", op_suite);
  op->add_option("--evaluator", op_cmd);
  op->add_option("--tasks", op_tasks);
  op->add_option("--heldout", op_heldout);
  op->add_option("--budget", op_cfg.budget);
  op->add_option("--sigma0", op_cfg.sigma0);
  op->add_option("--seed", op_cfg.seed);
  op->add_option("--resume", op_resume);
  op->add_option("--top-n", op_top_n);
  op->add_option("--on-eval-error", op_policy)
      ->check(CLI::IsMember({"abort", "penalize"}));
  op->add_option("--log", op_log);
  op->add_flag("--no-warm-start", op_no_warm);

  // analyze
  auto* an = app.add_subcommand("analyze", "Export analysis CSVs");
  std::string an_mode, an_scores, an_out;
  std::vector<std::string> an_logs;
  double an_epsilon = 1e-3;
  int an_top_k = 5;
  an->add_option("mode", an_mode)
      ->required()
      ->check(CLI::IsMember({"corr", "pareto", "sparsity", "progress", "subsets"}));
  an->add_option("--log", an_logs);
  an->add_option("--scores", an_scores);
  an->add_option("--out", an_out)->required();
  an->add_option("--epsilon", an_epsilon);
  an->add_option("--top-k", an_top_k);

  // cost
  auto* co = app.add_subcommand("cost", "FLOPs estimate for training vs search");
  double co_params = 0.0;
  std::string co_sft, co_po, co_samples;
  int64_t co_budget = 50;
  co->add_option("--params", co_params)->required();
  co->add_option("--sft", co_sft, "batch,steps")->required();
  co->add_option("--po", co_po, "batch,steps")->required();
  co->add_option("--samples", co_samples, "task=n,task=n,...")->required();
  co->add_option("--budget", co_budget);

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    auto [pool, suite] = gen_kind == "radial" ? gen_radial_suite(gen_cfg)
                                              : gen_ridge_suite(gen_cfg);
    save_pool(pool, gen_out);
    save_suite(suite, fs::path(gen_out) / "suite.json");
    std::cout << "wrote " << pool.size() << " checkpoints and suite to "
              << gen_out << "\n";
    return 0;
  }

  if (ev->parsed()) {
    auto evaluator = make_evaluator(ev_suite, ev_cmd);
    print_scores(evaluator->evaluate_path(ev_ckpt, split_list(ev_tasks)));
    return 0;
  }

  if (mg->parsed()) {
    CheckpointPool pool = load_pool(mg_pool);
    nlohmann::json wj;
    if (fs::exists(mg_weights)) {
      std::ifstream in(mg_weights);
      in >> wj;
    } else {
      wj = nlohmann::json::parse(mg_weights);
    }
    NormalizedWeights w = normalize(WeightVector{wj.get<std::vector<double>>()});
    write_checkpoint(mg_out, merge(pool, w));
    std::cout << "wrote merged checkpoint to " << mg_out << "\n";
    return 0;
  }

  if (bl->parsed()) {
    CheckpointPool pool = load_pool(bl_pool);
    auto evaluator = make_evaluator(bl_suite, bl_cmd);
    const auto tasks = split_list(bl_tasks);
    std::vector<TaskScores> pool_scores;
    for (size_t i = 0; i < pool.size(); ++i)
      pool_scores.push_back(evaluator->evaluate(pool.read_entry(i), tasks));

    nlohmann::ordered_json j;
    auto add = [&](const std::string& name, const NormalizedWeights& w) {
      const TaskScores s = evaluator->evaluate(merge(pool, w), tasks);
      j[name] = {{"weights", w.alpha},
                 {"fitness", macro_average(s, tasks).value}};
    };
    add("uniform_soup", baseline_uniform(pool.size()));
    add("merge_best", baseline_merge_best(pool_scores, tasks));
    const auto [idx, fit] = best_single(pool_scores, tasks);
    j["best_single"] = {{"index", idx + 1}, {"fitness", fit.value}};
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  if (op->parsed()) {
    if (!op_resume.empty()) {
      SearchLog log = resume(op_resume);
      print_summary(log);
      return 0;
    }
    if (op_pool.empty() || op_tasks.empty())
      throw Error(ErrorCode::InvalidConfig, "optimize needs --pool and --tasks");
    op_cfg.tasks = split_list(op_tasks);
    op_cfg.heldout_tasks = split_list(op_heldout);
    op_cfg.warm_start = !op_no_warm;
    op_cfg.on_eval_error =
        op_policy == "penalize" ? EvalErrorPolicy::Penalize : EvalErrorPolicy::Abort;
    if (op_top_n > 0) op_cfg.top_n = op_top_n;
    op_cfg.pool_dir = op_pool;
    if (!op_suite.empty())
      op_cfg.suite_path = (fs::path(op_suite) / "suite.json").string();
    op_cfg.evaluator_command = op_cmd;

    CheckpointPool pool = load_pool(op_pool);
    auto evaluator = make_evaluator(op_suite, op_cmd);
    SearchLog log = run_search(op_cfg, pool, *evaluator, fs::path(op_log));
    print_summary(log);
    return 0;
  }

  if (an->parsed()) {
    std::ofstream out(an_out);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + an_out);

    if (an_mode == "corr") {
      if (an_scores.empty())
        throw Error(ErrorCode::InvalidConfig, "corr needs --scores CSV");
      const ScoreMatrix m = read_score_csv(an_scores);
      const auto corr = correlation_matrix(m);
      out << "task";
      for (const auto& t : m.task_names) out << "," << t;
      out << "\n";
      for (size_t a = 0; a < m.task_names.size(); ++a) {
        out << m.task_names[a];
        for (size_t b = 0; b < m.task_names.size(); ++b) out << "," << corr[a][b];
        out << "\n";
      }
    } else if (an_mode == "pareto") {
      if (an_scores.empty())
        throw Error(ErrorCode::InvalidConfig, "pareto needs --scores CSV");
      const ScoreMatrix m = read_score_csv(an_scores);
      const auto front = pareto_front(m.values);
      out << "label";
      for (const auto& t : m.task_names) out << "," << t;
      out << "\n";
      for (size_t i : front) {
        out << m.row_labels[i];
        for (double v : m.values[i]) out << "," << v;
        out << "\n";
      }
    } else if (an_mode == "sparsity") {
      if (an_logs.empty())
        throw Error(ErrorCode::InvalidConfig, "sparsity needs --log");
      SearchLog log = read_search_log(an_logs.front());
      std::vector<const TrialRecord*> sorted;
      for (const auto& t : log.trials) sorted.push_back(&t);
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const TrialRecord* a, const TrialRecord* b) {
                         return a->fitness > b->fitness;
                       });
      const size_t k = std::min<size_t>(an_top_k, sorted.size());
      out << "rank,trial_id,fitness,count_below";
      if (k > 0)
        for (size_t i = 0; i < sorted.front()->weights.size(); ++i)
          out << ",alpha_" << (i + 1);
      out << "\n";
      for (size_t r = 0; r < k; ++r) {
        const auto report = sparsity(sorted[r]->weights, an_epsilon);
        out << (r + 1) << "," << sorted[r]->trial_id << "," << sorted[r]->fitness
            << "," << report.count_below;
        for (double w : sorted[r]->weights) out << "," << w;
        out << "\n";
      }
    } else if (an_mode == "progress") {
      if (an_logs.empty())
        throw Error(ErrorCode::InvalidConfig, "progress needs --log");
      SearchLog log = read_search_log(an_logs.front());
      std::vector<double> series;
      for (const auto& t : log.trials) series.push_back(t.fitness);
      out << "trial_index,fitness,running_best\n";
      for (const auto& p : progress(series))
        out << p.trial_index << "," << p.fitness << "," << p.running_best << "\n";
    } else if (an_mode == "subsets") {
      if (an_logs.empty())
        throw Error(ErrorCode::InvalidConfig, "subsets needs one --log per run");
      out << "log,n,best_fitness,centroid\n";
      for (const auto& path : an_logs) {
        SearchLog log = read_search_log(path);
        std::vector<std::vector<double>> sampled;
        for (const auto& t : log.trials)
          if (t.kind == "sampled") sampled.push_back(t.weights);
        const auto c = centroid(sampled);
        out << path << "," << c.size() << "," << log.summary.best_fitness << ",";
        for (size_t i = 0; i < c.size(); ++i) out << (i ? ";" : "") << c[i];
        out << "\n";
      }
    }
    std::cout << "wrote " << an_out << "\n";
    return 0;
  }

  if (co->parsed()) {
    auto parse_stage = [](const std::string& s) {
      const auto parts = split_list(s);
      if (parts.size() != 2)
        throw Error(ErrorCode::InvalidConfig, "expected batch,steps: " + s);
      return TrainStage{std::stod(parts[0]), std::stod(parts[1])};
    };
    std::map<std::string, double> samples;
    for (const auto& kv : split_list(co_samples)) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos)
        throw Error(ErrorCode::InvalidConfig, "expected task=n: " + kv);
      samples[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    const CostReport r = flops_cost(co_params, parse_stage(co_sft),
                                    parse_stage(co_po), samples, co_budget);
    nlohmann::ordered_json j;
    j["train_flops"] = r.train_flops;
    j["inference_flops_per_task"] = r.inference_flops_per_task;
    j["search_flops"] = r.search_flops;
    j["ratio_search_to_train"] = r.ratio_search_to_train;
    std::cout << j.dump(2) << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code()) << "]: " << e.what()
              << "\n";
    return e.is_evaluator_failure() ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
