#include "mergeopt/driver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "mergeopt/cmaes.hpp"
#include "mergeopt/errors.hpp"

namespace mergeopt {

namespace {

using Clock = std::chrono::steady_clock;
constexpr int kLogVersion = 1;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

nlohmann::ordered_json scores_to_json(const TaskScores& s) {
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [task, score] : s.scores) out[task] = score;
  return out;
}

TaskScores scores_from_json(const nlohmann::json& j) {
  TaskScores s;
  for (auto it = j.begin(); it != j.end(); ++it)
    s.scores[it.key()] = it.value().get<double>();
  return s;
}

nlohmann::ordered_json trial_to_json(const TrialRecord& t) {
  return {{"trial_id", t.trial_id},
          {"kind", t.kind},
          {"raw", t.raw},
          {"weights", t.weights},
          {"scores", scores_to_json(t.scores)},
          {"fitness", t.fitness},
          {"generation", t.generation},
          {"degenerate", t.degenerate},
          {"penalized", t.penalized},
          {"wall_time_s", t.wall_time_s},
          {"evaluator_stderr", t.evaluator_stderr}};
}

TrialRecord trial_from_json(const nlohmann::json& j) {
  TrialRecord t;
  t.trial_id = j.at("trial_id").get<int64_t>();
  t.kind = j.at("kind").get<std::string>();
  t.raw = j.at("raw").get<std::vector<double>>();
  t.weights = j.at("weights").get<std::vector<double>>();
  t.scores = scores_from_json(j.at("scores"));
  t.fitness = j.at("fitness").get<double>();
  t.generation = j.at("generation").get<int>();
  t.degenerate = j.at("degenerate").get<bool>();
  t.penalized = j.value("penalized", false);
  t.wall_time_s = j.value("wall_time_s", 0.0);
  t.evaluator_stderr = j.value("evaluator_stderr", std::string{});
  return t;
}

nlohmann::ordered_json config_to_json(const SearchConfig& cfg,
                                      uint64_t pool_hash) {
  nlohmann::ordered_json j;
  j["version"] = kLogVersion;
  j["pool_hash"] = pool_hash;
  j["budget"] = cfg.budget;
  j["sigma0"] = cfg.sigma0;
  if (cfg.lambda)
    j["lambda"] = *cfg.lambda;
  else
    j["lambda"] = nullptr;
  j["seed"] = cfg.seed;
  j["tasks"] = cfg.tasks;
  j["heldout_tasks"] = cfg.heldout_tasks;
  j["warm_start"] = cfg.warm_start;
  j["on_eval_error"] =
      cfg.on_eval_error == EvalErrorPolicy::Abort ? "abort" : "penalize";
  if (cfg.top_n)
    j["top_n"] = *cfg.top_n;
  else
    j["top_n"] = nullptr;
  j["epsilon_cache"] = cfg.epsilon_cache;
  j["pool_dir"] = cfg.pool_dir;
  j["suite_path"] = cfg.suite_path;
  j["evaluator_command"] = cfg.evaluator_command;
  return j;
}

std::pair<SearchConfig, uint64_t> config_from_json(const nlohmann::json& j) {
  SearchConfig cfg;
  const uint64_t pool_hash = j.at("pool_hash").get<uint64_t>();
  cfg.budget = j.at("budget").get<int>();
  cfg.sigma0 = j.at("sigma0").get<double>();
  if (!j.at("lambda").is_null()) cfg.lambda = j.at("lambda").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  cfg.tasks = j.at("tasks").get<std::vector<std::string>>();
  cfg.heldout_tasks = j.at("heldout_tasks").get<std::vector<std::string>>();
  cfg.warm_start = j.at("warm_start").get<bool>();
  cfg.on_eval_error = j.at("on_eval_error").get<std::string>() == "penalize"
                          ? EvalErrorPolicy::Penalize
                          : EvalErrorPolicy::Abort;
  if (!j.at("top_n").is_null()) cfg.top_n = j.at("top_n").get<int>();
  cfg.epsilon_cache = j.at("epsilon_cache").get<double>();
  cfg.pool_dir = j.value("pool_dir", std::string{});
  cfg.suite_path = j.value("suite_path", std::string{});
  cfg.evaluator_command = j.value("evaluator_command", std::string{});
  return {cfg, pool_hash};
}

double max_norm_distance(const std::vector<double>& a,
                         const std::vector<double>& b) {
  double d = 0.0;
  for (size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
  return d;
}

}  // namespace

void SearchConfig::validate() const {
  if (budget < 1) throw Error(ErrorCode::InvalidConfig, "budget must be >= 1");
  if (!(sigma0 > 0.0)) throw Error(ErrorCode::InvalidConfig, "sigma0 must be > 0");
  if (tasks.empty()) throw Error(ErrorCode::InvalidConfig, "no held-in tasks");
  if (epsilon_cache < 0.0)
    throw Error(ErrorCode::InvalidConfig, "epsilon_cache must be >= 0");
}

TaskScores Evaluator::evaluate_path(const std::filesystem::path& path,
                                    const std::vector<std::string>& tasks) {
  return evaluate(read_checkpoint(path), tasks);
}

TaskScores BuiltinEvaluator::evaluate(const TensorMap& model,
                                      const std::vector<std::string>& tasks) {
  return suite_.score_all(model, tasks);
}

TaskScores ExternalEvaluator::evaluate(const TensorMap& model,
                                       const std::vector<std::string>& tasks) {
  const std::filesystem::path tmp =
      std::filesystem::temp_directory_path() /
      ("mergeopt_candidate_" + std::to_string(::getpid()) + ".mrgc");
  write_checkpoint(tmp, model);
  try {
    TaskScores scores = evaluate_path(tmp, tasks);
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    return scores;
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

TaskScores ExternalEvaluator::evaluate_path(
    const std::filesystem::path& path, const std::vector<std::string>& tasks) {
  ExternalEvalResult result =
      evaluate_external(path, command_, tasks, timeout_seconds_);
  last_stderr_ = result.stderr_text;
  return result.scores;
}

int64_t SearchLog::sampled_count() const {
  return std::count_if(trials.begin(), trials.end(),
                       [](const TrialRecord& t) { return t.kind == "sampled"; });
}

int64_t SearchLog::seeded_count() const {
  return std::count_if(trials.begin(), trials.end(),
                       [](const TrialRecord& t) { return t.kind == "seeded"; });
}

std::vector<double> SearchLog::sampled_fitness_series() const {
  std::vector<double> out;
  for (const auto& t : trials)
    if (t.kind == "sampled") out.push_back(t.fitness);
  return out;
}

namespace {

struct PlannedSeed {
  std::string name;
  std::vector<double> raw;
  NormalizedWeights weights;
};

class LogWriter {
 public:
  explicit LogWriter(const std::optional<std::filesystem::path>& path)
      : path_(path) {}

  void write_config(const nlohmann::ordered_json& snapshot) {
    if (!path_) return;
    out_.open(*path_, std::ios::trunc);
    if (!out_)
      throw Error(ErrorCode::IoError, "cannot write log: " + path_->string());
    out_ << snapshot.dump() << "\n";
    out_.flush();
  }

  void write_trial(const TrialRecord& t) {
    if (!path_) return;
    out_ << trial_to_json(t).dump() << "\n";
    out_.flush();
  }

 private:
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
};

SearchLog run_impl(const SearchConfig& cfg, const CheckpointPool& full_pool,
                   Evaluator& evaluator,
                   const std::optional<std::filesystem::path>& log_path,
                   const std::vector<TrialRecord>* replay) {
  cfg.validate();
  {
    const SchemaReport schema_report = validate_pool(full_pool);
    if (!schema_report.pass())
      throw Error(ErrorCode::PoolInvalid,
                  "pool schema mismatch at entry " +
                      std::to_string(schema_report.first_mismatch->entry_index) +
                      ", tensor " + schema_report.first_mismatch->tensor_name);
  }

  SearchLog log;
  log.config = cfg;
  log.pool_hash = full_pool.content_hash();

  // Individual held-in scores for every pool member: needed for top-n
  // restriction, warm start and the merge-best/best-single baselines.
  std::vector<TaskScores> individual_scores;
  std::vector<double> individual_wall;
  std::vector<std::string> individual_stderr;
  for (size_t i = 0; i < full_pool.size(); ++i) {
    const auto t0 = Clock::now();
    TaskScores s;
    const PoolEntry& e = full_pool.entry(i);
    if (e.on_disk())
      s = evaluator.evaluate_path(std::get<std::filesystem::path>(e.source),
                                  cfg.tasks);
    else
      s = evaluator.evaluate(*std::get<std::shared_ptr<const TensorMap>>(e.source),
                             cfg.tasks);
    individual_scores.push_back(std::move(s));
    individual_wall.push_back(seconds_since(t0));
    individual_stderr.push_back(evaluator.last_stderr());
  }

  // Top-n restriction by individual fitness, ties to the lowest index;
  // selected entries keep their original pool order.
  std::vector<size_t> selected(full_pool.size());
  std::iota(selected.begin(), selected.end(), 0);
  if (cfg.top_n) {
    const int n = *cfg.top_n;
    if (n < 2 || n > static_cast<int>(full_pool.size()))
      throw Error(ErrorCode::InvalidConfig, "top_n out of range");
    std::stable_sort(selected.begin(), selected.end(), [&](size_t a, size_t b) {
      return macro_average(individual_scores[a], cfg.tasks).value >
             macro_average(individual_scores[b], cfg.tasks).value;
    });
    selected.resize(n);
    std::sort(selected.begin(), selected.end());
  }
  log.summary.selected_entries = selected;

  CheckpointPool pool;
  std::vector<TaskScores> pool_scores;
  std::vector<double> pool_wall;
  std::vector<std::string> pool_stderr;
  for (size_t idx : selected) {
    const PoolEntry& e = full_pool.entry(idx);
    if (e.on_disk())
      pool.add_file(e.label, std::get<std::filesystem::path>(e.source));
    else {
      TensorMap copy = *std::get<std::shared_ptr<const TensorMap>>(e.source);
      pool.add_in_memory(e.label, std::move(copy));
    }
    pool_scores.push_back(individual_scores[idx]);
    pool_wall.push_back(individual_wall[idx]);
    pool_stderr.push_back(individual_stderr[idx]);
  }

  const int d = static_cast<int>(pool.size());
  const std::vector<double> m0(d, 1.0 / static_cast<double>(d));
  CmaEs optimizer(d, m0, cfg.sigma0, cfg.lambda, cfg.seed);

  LogWriter writer(log_path);
  writer.write_config(config_to_json(cfg, log.pool_hash));

  int64_t next_trial_id = 1;
  auto append = [&](TrialRecord t) {
    log.trials.push_back(std::move(t));
    writer.write_trial(log.trials.back());
  };

  // Cached fitness lookup over every logged trial so far.
  auto find_cached = [&](const std::vector<double>& weights)
      -> const TrialRecord* {
    for (const auto& t : log.trials) {
      if (t.weights.size() != weights.size() || t.penalized) continue;
      if (max_norm_distance(t.weights, weights) <= cfg.epsilon_cache) return &t;
    }
    return nullptr;
  };

  size_t replay_pos = 0;
  const size_t replay_count = replay ? replay->size() : 0;

  // ---- Warm start: one-hots, uniform soup, merge-best, in that order ----
  if (cfg.warm_start) {
    std::vector<PlannedSeed> seeds;
    for (int i = 0; i < d; ++i) {
      PlannedSeed s;
      s.name = pool.entry(i).label;
      s.raw.assign(d, 0.0);
      s.raw[i] = 1.0;
      s.weights = one_hot_weights(d, i);
      seeds.push_back(std::move(s));
    }
    {
      PlannedSeed s;
      s.name = "uniform_soup";
      s.raw.assign(d, 1.0 / static_cast<double>(d));
      s.weights = baseline_uniform(d);
      seeds.push_back(std::move(s));
    }
    {
      PlannedSeed s;
      s.name = "merge_best";
      s.weights = baseline_merge_best(pool_scores, cfg.tasks);
      s.raw = s.weights.alpha;
      seeds.push_back(std::move(s));
    }

    for (size_t k = 0; k < seeds.size(); ++k) {
      if (replay_pos < replay_count && (*replay)[replay_pos].kind == "seeded") {
        const TrialRecord& rec = (*replay)[replay_pos++];
        if (rec.raw.size() != static_cast<size_t>(d) ||
            max_norm_distance(rec.raw, seeds[k].raw) > 1e-9)
          throw Error(ErrorCode::CorruptLog,
                      "seeded trial does not match the warm-start plan");
        optimizer.inject(rec.raw, rec.fitness);
        TrialRecord copy = rec;
        copy.generation = optimizer.generation();
        append(std::move(copy));
        next_trial_id = rec.trial_id + 1;
        continue;
      }

      TrialRecord rec;
      rec.trial_id = next_trial_id++;
      rec.kind = "seeded";
      rec.raw = seeds[k].raw;
      rec.weights = seeds[k].weights.alpha;
      if (k < static_cast<size_t>(d)) {
        // One-hot seeds reuse the checkpoint's directly measured scores.
        rec.scores = pool_scores[k];
        rec.wall_time_s = pool_wall[k];
        rec.evaluator_stderr = pool_stderr[k];
      } else {
        const auto t0 = Clock::now();
        const TensorMap merged = merge(pool, seeds[k].weights);
        rec.scores = evaluator.evaluate(merged, cfg.tasks);
        rec.wall_time_s = seconds_since(t0);
        rec.evaluator_stderr = evaluator.last_stderr();
      }
      rec.fitness = macro_average(rec.scores, cfg.tasks).value;
      optimizer.inject(rec.raw, rec.fitness);
      rec.generation = optimizer.generation();
      append(std::move(rec));
    }
  }

  // ---- Sampled trials, replayed then fresh, until the budget is spent ----
  int64_t sampled = 0;
  while (replay_pos < replay_count) {
    const TrialRecord& rec = (*replay)[replay_pos++];
    if (rec.kind != "sampled")
      throw Error(ErrorCode::CorruptLog, "unexpected trial kind in replay");
    auto [x, token] = optimizer.ask();
    if (x.size() != rec.raw.size() || max_norm_distance(x, rec.raw) > 1e-6)
      throw Error(ErrorCode::CorruptLog,
                  "log does not replay deterministically (seed/config drift?)");
    optimizer.tell(token, rec.fitness);
    TrialRecord copy = rec;
    append(std::move(copy));
    next_trial_id = rec.trial_id + 1;
    ++sampled;
  }

  double min_fitness_seen = std::numeric_limits<double>::infinity();
  for (const auto& t : log.trials)
    min_fitness_seen = std::min(min_fitness_seen, t.fitness);

  while (sampled < cfg.budget) {
    const auto t0 = Clock::now();
    auto [x, token] = optimizer.ask();

    TrialRecord rec;
    rec.trial_id = next_trial_id++;
    rec.kind = "sampled";
    rec.raw = x;

    NormalizedWeights weights;
    try {
      weights = normalize(WeightVector{x});
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateWeights) throw;
      weights = baseline_uniform(d);
      rec.degenerate = true;
    }
    rec.weights = weights.alpha;

    if (const TrialRecord* hit = find_cached(rec.weights)) {
      rec.scores = hit->scores;
      rec.fitness = hit->fitness;
      rec.degenerate = rec.degenerate || hit->degenerate;
    } else {
      try {
        const TensorMap merged = merge(pool, weights);
        rec.scores = evaluator.evaluate(merged, cfg.tasks);
        rec.fitness = macro_average(rec.scores, cfg.tasks).value;
        rec.evaluator_stderr = evaluator.last_stderr();
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EvaluatorCrashed &&
            e.code() != ErrorCode::ProtocolError)
          throw;
        if (cfg.on_eval_error == EvalErrorPolicy::Abort) throw;
        rec.penalized = true;
        rec.scores = TaskScores{};
        rec.fitness =
            (std::isfinite(min_fitness_seen) ? min_fitness_seen : 0.0) - 1.0;
        rec.evaluator_stderr = e.what();
      }
    }
    min_fitness_seen = std::min(min_fitness_seen, rec.fitness);

    optimizer.tell(token, rec.fitness);
    rec.generation = optimizer.generation();
    rec.wall_time_s = seconds_since(t0);
    append(std::move(rec));
    ++sampled;
  }

  // ---- Final report over held-in plus held-out tasks ----
  const TrialRecord* best = nullptr;
  for (const auto& t : log.trials)
    if (best == nullptr || t.fitness > best->fitness) best = &t;
  log.summary.best_trial_id = best->trial_id;
  log.summary.best_weights = best->weights;
  log.summary.best_fitness = best->fitness;

  std::vector<std::string> all_tasks = cfg.tasks;
  for (const auto& t : cfg.heldout_tasks) all_tasks.push_back(t);

  auto report_entry = [&](const std::string& name,
                          const NormalizedWeights& w) {
    BaselineReport r;
    r.name = name;
    r.weights = w.alpha;
    r.scores = evaluator.evaluate(merge(pool, w), all_tasks);
    r.heldin_fitness = macro_average(r.scores, cfg.tasks).value;
    log.summary.report.push_back(std::move(r));
  };

  report_entry("optimized", NormalizedWeights{log.summary.best_weights});
  report_entry("uniform_soup", baseline_uniform(d));
  report_entry("merge_best", baseline_merge_best(pool_scores, cfg.tasks));
  const auto [best_idx, best_fit] = best_single(pool_scores, cfg.tasks);
  report_entry("best_single", one_hot_weights(d, best_idx));

  return log;
}

}  // namespace

SearchLog run_search(const SearchConfig& cfg, const CheckpointPool& pool,
                     Evaluator& evaluator,
                     const std::optional<std::filesystem::path>& log_path) {
  return run_impl(cfg, pool, evaluator, log_path, nullptr);
}

SearchLog read_search_log(const std::filesystem::path& log_path) {
  std::ifstream in(log_path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open log: " + log_path.string());
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::CorruptLog, "empty log file");

  SearchLog log;
  try {
    auto [cfg, hash] = config_from_json(nlohmann::json::parse(line));
    log.config = std::move(cfg);
    log.pool_hash = hash;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptLog,
                std::string("bad config snapshot: ") + e.what());
  }

  int64_t prev_id = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      log.trials.push_back(trial_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::CorruptLog,
                  std::string("bad trial record: ") + e.what());
    }
    if (log.trials.back().trial_id <= prev_id)
      throw Error(ErrorCode::CorruptLog, "trial ids are not strictly increasing");
    prev_id = log.trials.back().trial_id;
  }
  return log;
}

SearchLog resume(const std::filesystem::path& log_path,
                 const CheckpointPool& pool, Evaluator& evaluator) {
  SearchLog parsed = read_search_log(log_path);
  if (pool.content_hash() != parsed.pool_hash)
    throw Error(ErrorCode::ConfigMismatch,
                "pool content hash differs from the log's snapshot");
  return run_impl(parsed.config, pool, evaluator, log_path, &parsed.trials);
}

SearchLog resume(const std::filesystem::path& log_path) {
  SearchLog parsed = read_search_log(log_path);
  if (parsed.config.pool_dir.empty())
    throw Error(ErrorCode::CorruptLog, "log snapshot does not record a pool dir");
  CheckpointPool pool = load_pool(parsed.config.pool_dir);
  std::unique_ptr<Evaluator> evaluator;
  if (!parsed.config.suite_path.empty())
    evaluator =
        std::make_unique<BuiltinEvaluator>(load_suite(parsed.config.suite_path));
  else if (!parsed.config.evaluator_command.empty())
    evaluator = std::make_unique<ExternalEvaluator>(parsed.config.evaluator_command);
  else
    throw Error(ErrorCode::CorruptLog, "log snapshot does not record an evaluator");
  return resume(log_path, pool, *evaluator);
}

std::vector<SubsetResult> subset_experiment(const SearchConfig& cfg,
                                            const CheckpointPool& pool,
                                            Evaluator& evaluator,
                                            const std::vector<int>& n_values) {
  std::vector<SubsetResult> results;
  for (int n : n_values) {
    if (n < 2 || n > static_cast<int>(pool.size()))
      throw Error(ErrorCode::InvalidConfig,
                  "subset size " + std::to_string(n) + " out of range");
    SearchConfig sub_cfg = cfg;
    sub_cfg.top_n = n;
    SubsetResult r;
    r.n = n;
    r.log = run_search(sub_cfg, pool, evaluator);
    r.selected_entries = r.log.summary.selected_entries;
    r.best_fitness = r.log.summary.best_fitness;
    std::vector<std::vector<double>> sampled_weights;
    for (const auto& t : r.log.trials)
      if (t.kind == "sampled") sampled_weights.push_back(t.weights);
    if (!sampled_weights.empty()) {
      r.centroid_weights.assign(sampled_weights.front().size(), 0.0);
      for (const auto& w : sampled_weights)
        for (size_t i = 0; i < w.size(); ++i) r.centroid_weights[i] += w[i];
      for (double& v : r.centroid_weights)
        v /= static_cast<double>(sampled_weights.size());
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace mergeopt
