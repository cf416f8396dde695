#include "mergeopt/fitness.hpp"

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "mergeopt/errors.hpp"

namespace mergeopt {

double TaskScores::at(const std::string& task) const {
  auto it = scores.find(task);
  if (it == scores.end())
    throw Error(ErrorCode::MissingTask, "no score for task " + task);
  return it->second;
}

FitnessValue macro_average(
    const TaskScores& s, const std::vector<std::string>& tasks,
    const std::optional<std::map<std::string, double>>& task_weights) {
  if (tasks.empty())
    throw Error(ErrorCode::InvalidConfig, "empty task list");
  double acc = 0.0;
  double wsum = 0.0;
  for (const std::string& task : tasks) {
    double w = 1.0;
    if (task_weights) {
      auto it = task_weights->find(task);
      if (it == task_weights->end())
        throw Error(ErrorCode::MissingTask, "no weight for task " + task);
      w = it->second;
    }
    acc += w * s.at(task);
    wsum += w;
  }
  if (wsum == 0.0)
    throw Error(ErrorCode::InvalidConfig, "task weights sum to zero");
  return {acc / wsum};
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  out += "'";
  return out;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ExternalEvalResult evaluate_external(const std::filesystem::path& ckpt_path,
                                     const std::string& command,
                                     const std::vector<std::string>& tasks,
                                     int timeout_seconds) {
  std::string task_list;
  for (size_t i = 0; i < tasks.size(); ++i) {
    if (i) task_list += ",";
    task_list += tasks[i];
  }

  const std::filesystem::path stderr_path =
      std::filesystem::temp_directory_path() /
      ("mergeopt_eval_stderr_" + std::to_string(::getpid()) + "_" +
       std::to_string(reinterpret_cast<uintptr_t>(&task_list)) + ".log");

  std::string cmdline;
  if (timeout_seconds > 0)
    cmdline += "timeout " + std::to_string(timeout_seconds) + " ";
  cmdline += command + " --checkpoint " + shell_quote(ckpt_path.string()) +
             " --tasks " + shell_quote(task_list) + " 2>" +
             shell_quote(stderr_path.string());

  FILE* pipe = popen(cmdline.c_str(), "r");
  if (pipe == nullptr)
    throw Error(ErrorCode::EvaluatorCrashed, "failed to spawn evaluator");
  std::string stdout_text;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof(buf), pipe)) > 0) stdout_text.append(buf, n);
  const int status = pclose(pipe);

  ExternalEvalResult result;
  result.stderr_text = read_file(stderr_path);
  std::error_code ec;
  std::filesystem::remove(stderr_path, ec);

  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw Error(ErrorCode::EvaluatorCrashed,
                "evaluator exited with status " +
                    std::to_string(WIFEXITED(status) ? WEXITSTATUS(status)
                                                     : -1) +
                    (result.stderr_text.empty() ? ""
                                                : ": " + result.stderr_text));

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(stdout_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ProtocolError,
                std::string("evaluator output is not valid JSON: ") + e.what());
  }
  if (!parsed.is_object() || !parsed.contains("scores") ||
      !parsed["scores"].is_object())
    throw Error(ErrorCode::ProtocolError, "missing \"scores\" object");

  for (auto it = parsed["scores"].begin(); it != parsed["scores"].end(); ++it) {
    if (!it.value().is_number())
      throw Error(ErrorCode::ProtocolError,
                  "non-numeric score for task " + it.key());
    result.scores.scores[it.key()] = it.value().get<double>();
  }
  for (const std::string& task : tasks)
    if (result.scores.scores.find(task) == result.scores.scores.end())
      throw Error(ErrorCode::ProtocolError, "evaluator omitted task " + task);
  return result;
}

NormalizedWeights baseline_uniform(size_t n) {
  if (n < 1)
    throw Error(ErrorCode::InvalidConfig, "pool size must be >= 1");
  NormalizedWeights w;
  w.alpha.assign(n, 1.0 / static_cast<double>(n));
  return w;
}

NormalizedWeights baseline_merge_best(const std::vector<TaskScores>& pool_scores,
                                      const std::vector<std::string>& tasks) {
  if (pool_scores.empty())
    throw Error(ErrorCode::InvalidConfig, "empty score list");
  std::vector<size_t> selected;
  for (const std::string& task : tasks) {
    size_t best = 0;
    double best_score = pool_scores[0].at(task);
    for (size_t i = 1; i < pool_scores.size(); ++i) {
      const double s = pool_scores[i].at(task);
      if (s > best_score) {  // ties keep the lowest index
        best = i;
        best_score = s;
      }
    }
    if (std::find(selected.begin(), selected.end(), best) == selected.end())
      selected.push_back(best);
  }
  NormalizedWeights w;
  w.alpha.assign(pool_scores.size(), 0.0);
  for (size_t i : selected) w.alpha[i] = 1.0 / static_cast<double>(selected.size());
  return w;
}

std::pair<size_t, FitnessValue> best_single(
    const std::vector<TaskScores>& pool_scores,
    const std::vector<std::string>& tasks) {
  if (pool_scores.empty())
    throw Error(ErrorCode::InvalidConfig, "empty score list");
  size_t best = 0;
  double best_fit = macro_average(pool_scores[0], tasks).value;
  for (size_t i = 1; i < pool_scores.size(); ++i) {
    const double f = macro_average(pool_scores[i], tasks).value;
    if (f > best_fit) {
      best = i;
      best_fit = f;
    }
  }
  return {best, {best_fit}};
}

}  // namespace mergeopt
