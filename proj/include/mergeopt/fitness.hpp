#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mergeopt/merger.hpp"

namespace mergeopt {

/// Per-task performance map. Higher is better; units are task-specific.
struct TaskScores {
  std::map<std::string, double> scores;

  double at(const std::string& task) const;
};

struct FitnessValue {
  double value = 0.0;
};

/// Unweighted arithmetic mean of the selected task scores.
/// An optional per-task weight map turns this into a weighted average;
/// weights default to uniform.
FitnessValue macro_average(
    const TaskScores& s, const std::vector<std::string>& tasks,
    const std::optional<std::map<std::string, double>>& task_weights =
        std::nullopt);

struct ExternalEvalResult {
  TaskScores scores;
  std::string stderr_text;
};

/// Runs `command --checkpoint <path> --tasks <t1,t2,...>`, expecting a JSON
/// object {"scores": {"<task>": <number>, ...}} on stdout and exit 0.
/// timeout_seconds = 0 means no timeout.
ExternalEvalResult evaluate_external(const std::filesystem::path& ckpt_path,
                                     const std::string& command,
                                     const std::vector<std::string>& tasks,
                                     int timeout_seconds = 0);

/// alpha_i = 1/n for all i.
NormalizedWeights baseline_uniform(size_t n);

/// Uniform weight over the deduplicated set of per-task argmax checkpoints
/// (ties broken by lowest index), zero elsewhere.
NormalizedWeights baseline_merge_best(const std::vector<TaskScores>& pool_scores,
                                      const std::vector<std::string>& tasks);

/// Checkpoint with the highest macro-average; ties broken by lowest index.
/// Returned index is 0-based.
std::pair<size_t, FitnessValue> best_single(
    const std::vector<TaskScores>& pool_scores,
    const std::vector<std::string>& tasks);

}  // namespace mergeopt
