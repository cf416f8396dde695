#include "mergeopt/toylab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "json.hpp"

#include "mergeopt/analysis.hpp"
#include "mergeopt/errors.hpp"

namespace mergeopt {

namespace {

constexpr const char* kWeightTensor = "w";

TensorMap make_point_checkpoint(const std::string& label,
                                const Eigen::VectorXd& point) {
  TensorMap ckpt(label);
  Tensor t;
  t.shape = {static_cast<int64_t>(point.size())};
  t.data.resize(point.size());
  for (Eigen::Index i = 0; i < point.size(); ++i)
    t.data[i] = static_cast<float>(point[i]);
  ckpt.add(kWeightTensor, std::move(t));
  return ckpt;
}

Eigen::VectorXd checkpoint_point(const TensorMap& ckpt) {
  const Tensor& t = ckpt.at(kWeightTensor);
  Eigen::VectorXd p(t.data.size());
  for (size_t i = 0; i < t.data.size(); ++i) p[i] = t.data[i];
  return p;
}

// All task-pair Spearman correlations over the pool at most -0.3.
bool certify_tradeoff(const CheckpointPool& pool, const ToyTaskSuite& suite) {
  const auto names = suite.task_names();
  std::vector<std::vector<double>> cols(names.size());
  for (size_t i = 0; i < pool.size(); ++i) {
    TensorMap ckpt = pool.read_entry(i);
    for (size_t t = 0; t < names.size(); ++t)
      cols[t].push_back(suite.score(ckpt, names[t]));
  }
  for (size_t a = 0; a < names.size(); ++a)
    for (size_t b = a + 1; b < names.size(); ++b)
      if (spearman(cols[a], cols[b]) > -0.3) return false;
  return true;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (dim < 1) throw Error(ErrorCode::InvalidConfig, "dim must be >= 1");
  if (pool_size < 2) throw Error(ErrorCode::InvalidConfig, "N must be >= 2");
  if (task_count < 2) throw Error(ErrorCode::InvalidConfig, "T must be >= 2");
  if (noise < 0.0) throw Error(ErrorCode::InvalidConfig, "noise must be >= 0");
  if (dim < task_count)
    throw Error(ErrorCode::InvalidConfig, "dim must be >= task count");
}

const ToyTask& ToyTaskSuite::task(const std::string& name) const {
  for (const auto& t : tasks)
    if (t.name == name) return t;
  throw Error(ErrorCode::MissingTask, "no such task: " + name);
}

std::vector<std::string> ToyTaskSuite::task_names() const {
  std::vector<std::string> names;
  names.reserve(tasks.size());
  for (const auto& t : tasks) names.push_back(t.name);
  return names;
}

double ToyTaskSuite::score(const TensorMap& ckpt,
                           const std::string& task_name) const {
  const ToyTask& t = task(task_name);
  const Eigen::VectorXd w = checkpoint_point(ckpt);
  if (t.kind == ToyTask::Kind::Radial) {
    if (static_cast<size_t>(w.size()) != t.center.size())
      throw Error(ErrorCode::ShapeMismatch, "checkpoint/center dimension mismatch");
    double r2 = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double d = w[i] - t.center[i];
      r2 += d * d;
    }
    return 100.0 / (1.0 + r2);
  }
  if (w.size() != t.eval_x.cols())
    throw Error(ErrorCode::ShapeMismatch, "checkpoint/design dimension mismatch");
  const Eigen::VectorXd residual = t.eval_x * w - t.eval_y;
  const double mse = residual.squaredNorm() / static_cast<double>(t.eval_y.size());
  return 100.0 / (1.0 + mse);
}

TaskScores ToyTaskSuite::score_all(
    const TensorMap& ckpt, const std::vector<std::string>& names) const {
  TaskScores out;
  for (const auto& name : names) out.scores[name] = score(ckpt, name);
  return out;
}

std::pair<CheckpointPool, ToyTaskSuite> gen_radial_suite(
    const GeneratorConfig& cfg) {
  cfg.validate();

  ToyTaskSuite suite;
  std::vector<Eigen::VectorXd> centers;
  for (int t = 0; t < cfg.task_count; ++t) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(cfg.dim);
    c[t] = 1.0;
    centers.push_back(c);
    ToyTask task;
    task.name = "task" + std::to_string(t + 1);
    task.kind = ToyTask::Kind::Radial;
    task.center.assign(c.data(), c.data() + cfg.dim);
    suite.tasks.push_back(std::move(task));
  }

  // Placement sites: the task centers, then every pairwise midpoint.
  std::vector<Eigen::VectorXd> sites = centers;
  for (int a = 0; a < cfg.task_count; ++a)
    for (int b = a + 1; b < cfg.task_count; ++b)
      sites.push_back(0.5 * (centers[a] + centers[b]));

  for (int attempt = 0; attempt < 100; ++attempt) {
    std::mt19937_64 rng(cfg.seed + static_cast<uint64_t>(attempt) * 0x9e3779b9ull);
    std::normal_distribution<double> gauss(0.0, 1.0);

    CheckpointPool pool;
    for (int i = 0; i < cfg.pool_size; ++i) {
      Eigen::VectorXd p = sites[i % sites.size()];
      for (int k = 0; k < cfg.dim; ++k) p[k] += cfg.noise * gauss(rng);
      pool.add_in_memory("toy_" + std::to_string(i + 1),
                         make_point_checkpoint("toy_" + std::to_string(i + 1), p));
    }
    if (certify_tradeoff(pool, suite)) return {std::move(pool), std::move(suite)};
  }
  throw Error(ErrorCode::GenerationRetriesExhausted,
              "could not generate a pool with pairwise Spearman <= -0.3");
}

Eigen::VectorXd ridge_solve(const std::vector<Eigen::MatrixXd>& xs,
                            const std::vector<Eigen::VectorXd>& ys,
                            const std::vector<double>& proportions,
                            double ridge_lambda) {
  if (ridge_lambda <= 0.0)
    throw Error(ErrorCode::InvalidConfig, "ridge lambda must be > 0");
  if (xs.empty() || xs.size() != ys.size() || xs.size() != proportions.size())
    throw Error(ErrorCode::InvalidConfig, "mismatched ridge inputs");
  const Eigen::Index d = xs.front().cols();
  Eigen::MatrixXd gram = ridge_lambda * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (size_t t = 0; t < xs.size(); ++t) {
    if (proportions[t] == 0.0) continue;
    gram += proportions[t] * (xs[t].transpose() * xs[t]);
    rhs += proportions[t] * (xs[t].transpose() * ys[t]);
  }
  return gram.ldlt().solve(rhs);
}

std::pair<CheckpointPool, ToyTaskSuite> gen_ridge_suite(
    const GeneratorConfig& cfg) {
  cfg.validate();
  if (cfg.ridge_lambda <= 0.0)
    throw Error(ErrorCode::InvalidConfig, "ridge lambda must be > 0");

  const int n_train = 8 * cfg.dim;
  const int n_eval = 8 * cfg.dim;

  for (int attempt = 0; attempt < 100; ++attempt) {
    std::mt19937_64 rng(cfg.seed + static_cast<uint64_t>(attempt) * 0x51ed2701ull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto randn_mat = [&](int rows, int cols) {
      Eigen::MatrixXd m(rows, cols);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = gauss(rng);
      return m;
    };

    ToyTaskSuite suite;
    std::vector<Eigen::MatrixXd> train_x;
    std::vector<Eigen::VectorXd> train_y;
    for (int t = 0; t < cfg.task_count; ++t) {
      // Orthogonal true coefficients: scaled coordinate axes.
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(cfg.dim);
      beta[t] = 1.0;

      Eigen::MatrixXd xtr = randn_mat(n_train, cfg.dim);
      Eigen::VectorXd ytr = xtr * beta;
      for (int r = 0; r < n_train; ++r) ytr[r] += cfg.noise * gauss(rng);
      Eigen::MatrixXd xev = randn_mat(n_eval, cfg.dim);
      Eigen::VectorXd yev = xev * beta;
      for (int r = 0; r < n_eval; ++r) yev[r] += cfg.noise * gauss(rng);

      train_x.push_back(std::move(xtr));
      train_y.push_back(std::move(ytr));

      ToyTask task;
      task.name = "task" + std::to_string(t + 1);
      task.kind = ToyTask::Kind::Ridge;
      task.eval_x = std::move(xev);
      task.eval_y = std::move(yev);
      task.true_coef = beta;
      suite.tasks.push_back(std::move(task));
    }

    CheckpointPool pool;
    for (int i = 0; i < cfg.pool_size; ++i) {
      const int dominant = i % cfg.task_count;
      // Dominance strength cycles so mixtures differ across the pool.
      const double r = 0.65 + 0.3 * (((i / cfg.task_count) % 4) / 4.0);
      std::vector<double> proportions(cfg.task_count,
                                      (1.0 - r) / (cfg.task_count - 1));
      proportions[dominant] = r;
      const Eigen::VectorXd w =
          ridge_solve(train_x, train_y, proportions, cfg.ridge_lambda);
      pool.add_in_memory("ridge_" + std::to_string(i + 1),
                         make_point_checkpoint("ridge_" + std::to_string(i + 1), w));
    }
    if (certify_tradeoff(pool, suite)) return {std::move(pool), std::move(suite)};
  }
  throw Error(ErrorCode::GenerationRetriesExhausted,
              "could not generate a ridge pool with pairwise Spearman <= -0.3");
}

std::pair<NormalizedWeights, FitnessValue> grid_oracle(
    const CheckpointPool& pool, const ToyTaskSuite& suite,
    const std::vector<std::string>& tasks, double resolution) {
  if (pool.size() > 3)
    throw Error(ErrorCode::PoolTooLarge, "grid oracle supports N <= 3");
  if (!(resolution > 0.0) || resolution > 0.5)
    throw Error(ErrorCode::InvalidConfig, "resolution must be in (0, 0.5]");

  const size_t n = pool.size();
  const int64_t steps = std::llround(1.0 / resolution);

  NormalizedWeights best_w;
  double best_f = -std::numeric_limits<double>::infinity();
  auto consider = [&](const std::vector<double>& alpha) {
    NormalizedWeights w{alpha};
    const TensorMap merged = merge(pool, w);
    const double f = macro_average(suite.score_all(merged, tasks), tasks).value;
    // Ties keep the lexicographically smallest weights; the enumeration
    // below visits weight vectors in lexicographic order.
    if (f > best_f) {
      best_f = f;
      best_w = std::move(w);
    }
  };

  if (n == 1) {
    consider({1.0});
  } else if (n == 2) {
    for (int64_t i = 0; i <= steps; ++i) {
      const double a = static_cast<double>(i) / static_cast<double>(steps);
      consider({a, 1.0 - a});
    }
  } else {
    for (int64_t i = 0; i <= steps; ++i) {
      for (int64_t j = 0; i + j <= steps; ++j) {
        const double a = static_cast<double>(i) / static_cast<double>(steps);
        const double b = static_cast<double>(j) / static_cast<double>(steps);
        consider({a, b, 1.0 - a - b});
      }
    }
  }
  return {best_w, {best_f}};
}

void save_suite(const ToyTaskSuite& suite, const std::filesystem::path& path) {
  nlohmann::ordered_json tasks = nlohmann::ordered_json::array();
  for (const auto& t : suite.tasks) {
    nlohmann::ordered_json task;
    task["name"] = t.name;
    if (t.kind == ToyTask::Kind::Radial) {
      task["kind"] = "radial";
      task["center"] = t.center;
    } else {
      task["kind"] = "ridge";
      std::vector<std::vector<double>> x(t.eval_x.rows());
      for (Eigen::Index r = 0; r < t.eval_x.rows(); ++r)
        x[r].assign(t.eval_x.row(r).begin(), t.eval_x.row(r).end());
      task["eval_x"] = x;
      task["eval_y"] = std::vector<double>(t.eval_y.begin(), t.eval_y.end());
      task["true_coef"] =
          std::vector<double>(t.true_coef.begin(), t.true_coef.end());
    }
    tasks.push_back(std::move(task));
  }
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write suite: " + path.string());
  out << nlohmann::ordered_json{{"tasks", tasks}}.dump(2) << "\n";
}

ToyTaskSuite load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot read suite: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptHeader, std::string("suite JSON: ") + e.what());
  }
  ToyTaskSuite suite;
  for (const auto& entry : doc.at("tasks")) {
    ToyTask task;
    task.name = entry.at("name").get<std::string>();
    const std::string kind = entry.at("kind").get<std::string>();
    if (kind == "radial") {
      task.kind = ToyTask::Kind::Radial;
      task.center = entry.at("center").get<std::vector<double>>();
    } else if (kind == "ridge") {
      task.kind = ToyTask::Kind::Ridge;
      const auto x = entry.at("eval_x").get<std::vector<std::vector<double>>>();
      const auto y = entry.at("eval_y").get<std::vector<double>>();
      const auto coef = entry.at("true_coef").get<std::vector<double>>();
      task.eval_x.resize(x.size(), x.empty() ? 0 : x.front().size());
      for (size_t r = 0; r < x.size(); ++r)
        for (size_t c = 0; c < x[r].size(); ++c) task.eval_x(r, c) = x[r][c];
      task.eval_y = Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
      task.true_coef = Eigen::Map<const Eigen::VectorXd>(coef.data(), coef.size());
    } else {
      throw Error(ErrorCode::CorruptHeader, "unknown task kind: " + kind);
    }
    suite.tasks.push_back(std::move(task));
  }
  return suite;
}

}  // namespace mergeopt
