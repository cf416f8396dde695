#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mergeopt/fitness.hpp"
#include "mergeopt/merger.hpp"
#include "mergeopt/tensorstore.hpp"
#include "mergeopt/toylab.hpp"

namespace mergeopt {

/// Fitness oracle for the search loop. evaluate() scores an in-memory model;
/// evaluate_path() scores a checkpoint already on disk (the default reads the
/// file and delegates).
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual TaskScores evaluate(const TensorMap& model,
                              const std::vector<std::string>& tasks) = 0;
  virtual TaskScores evaluate_path(const std::filesystem::path& path,
                                   const std::vector<std::string>& tasks);
  virtual std::string last_stderr() const { return {}; }
};

/// Scores single-tensor toy checkpoints against a ToyTaskSuite, in process.
class BuiltinEvaluator : public Evaluator {
 public:
  explicit BuiltinEvaluator(ToyTaskSuite suite) : suite_(std::move(suite)) {}
  TaskScores evaluate(const TensorMap& model,
                      const std::vector<std::string>& tasks) override;
  const ToyTaskSuite& suite() const { return suite_; }

 private:
  ToyTaskSuite suite_;
};

/// Shells out per the evaluator wire protocol; in-memory models are written
/// to a temporary MRGC file first.
class ExternalEvaluator : public Evaluator {
 public:
  explicit ExternalEvaluator(std::string command, int timeout_seconds = 0)
      : command_(std::move(command)), timeout_seconds_(timeout_seconds) {}
  TaskScores evaluate(const TensorMap& model,
                      const std::vector<std::string>& tasks) override;
  TaskScores evaluate_path(const std::filesystem::path& path,
                           const std::vector<std::string>& tasks) override;
  std::string last_stderr() const override { return last_stderr_; }

 private:
  std::string command_;
  int timeout_seconds_;
  std::string last_stderr_;
};

enum class EvalErrorPolicy { Abort, Penalize };

struct SearchConfig {
  int budget = 50;  // sampled-candidate evaluations; seeded trials are free
  double sigma0 = 1.0;
  std::optional<int> lambda;
  uint64_t seed = 0;
  std::vector<std::string> tasks;          // held-in
  std::vector<std::string> heldout_tasks;  // report-time only
  bool warm_start = true;
  EvalErrorPolicy on_eval_error = EvalErrorPolicy::Abort;
  std::optional<int> top_n;
  double epsilon_cache = 1e-9;

  // Recorded in the snapshot so `resume <log>` can reload its inputs.
  std::string pool_dir;
  std::string suite_path;
  std::string evaluator_command;

  void validate() const;
};

struct TrialRecord {
  int64_t trial_id = 0;
  std::string kind;  // "seeded" | "sampled"
  std::vector<double> raw;
  std::vector<double> weights;
  TaskScores scores;
  double fitness = 0.0;
  int generation = 0;
  bool degenerate = false;
  bool penalized = false;
  double wall_time_s = 0.0;
  std::string evaluator_stderr;
};

struct BaselineReport {
  std::string name;
  std::vector<double> weights;
  TaskScores scores;  // held-in plus held-out
  double heldin_fitness = 0.0;
};

struct SearchSummary {
  int64_t best_trial_id = 0;
  std::vector<double> best_weights;
  double best_fitness = 0.0;
  std::vector<size_t> selected_entries;  // 0-based pool indices after top-n
  std::vector<BaselineReport> report;
};

struct SearchLog {
  SearchConfig config;
  uint64_t pool_hash = 0;
  std::vector<TrialRecord> trials;
  SearchSummary summary;

  int64_t sampled_count() const;
  int64_t seeded_count() const;
  std::vector<double> sampled_fitness_series() const;
};

/// Warm start, then propose -> normalize -> merge -> evaluate -> tell until
/// `budget` sampled trials are logged; finishes with the baseline report.
/// When log_path is given, the config snapshot and each trial are appended
/// to it as JSON lines as they happen.
SearchLog run_search(const SearchConfig& cfg, const CheckpointPool& pool,
                     Evaluator& evaluator,
                     const std::optional<std::filesystem::path>& log_path =
                         std::nullopt);

/// Replays a (possibly partial) trial log to reconstruct optimizer state,
/// then continues to the original budget. A completed log gains no trials.
SearchLog resume(const std::filesystem::path& log_path,
                 const CheckpointPool& pool, Evaluator& evaluator);

/// Convenience overload reloading pool/suite from the log's config snapshot.
SearchLog resume(const std::filesystem::path& log_path);

/// Reads a trial log without replaying it.
SearchLog read_search_log(const std::filesystem::path& log_path);

struct SubsetResult {
  int n = 0;
  std::vector<size_t> selected_entries;  // 0-based indices into the full pool
  SearchLog log;
  double best_fitness = 0.0;
  std::vector<double> centroid_weights;  // centroid of sampled solutions
};

/// For each n, restricts the pool to the top-n checkpoints by individual
/// fitness (ties -> lowest index) and runs the search.
std::vector<SubsetResult> subset_experiment(const SearchConfig& cfg,
                                            const CheckpointPool& pool,
                                            Evaluator& evaluator,
                                            const std::vector<int>& n_values);

}  // namespace mergeopt
