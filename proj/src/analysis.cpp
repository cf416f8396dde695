#include "mergeopt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mergeopt/errors.hpp"

namespace mergeopt {

std::vector<double> ScoreMatrix::column(const std::string& task) const {
  const size_t j = task_index(task);
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& row : values) out.push_back(row.at(j));
  return out;
}

size_t ScoreMatrix::task_index(const std::string& task) const {
  for (size_t j = 0; j < task_names.size(); ++j)
    if (task_names[j] == task) return j;
  throw Error(ErrorCode::MissingTask, "no such task column: " + task);
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

ScoreMatrix read_score_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw Error(ErrorCode::IoError, "cannot open CSV: " + path);
  ScoreMatrix m;
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorCode::IoError, "empty CSV: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  if (header.size() < 2)
    throw Error(ErrorCode::IoError, "CSV needs a label column plus tasks");
  m.task_names.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorCode::IoError, "ragged CSV row: " + line);
    m.row_labels.push_back(fields[0]);
    std::vector<double> row;
    for (size_t j = 1; j < fields.size(); ++j) {
      try {
        row.push_back(std::stod(fields[j]));
      } catch (const std::exception&) {
        throw Error(ErrorCode::IoError, "non-numeric CSV field: " + fields[j]);
      }
    }
    m.values.push_back(std::move(row));
  }
  return m;
}

void write_score_csv(const ScoreMatrix& m, const std::string& path) {
  std::ofstream out(path);
  if (!out)
    throw Error(ErrorCode::IoError, "cannot write CSV: " + path);
  out << "label";
  for (const auto& t : m.task_names) out << "," << t;
  out << "\n";
  for (size_t i = 0; i < m.values.size(); ++i) {
    out << (i < m.row_labels.size() ? m.row_labels[i] : std::to_string(i + 1));
    for (double v : m.values[i]) out << "," << v;
    out << "\n";
  }
}

namespace {

// Average ranks, ties share the mean of their rank range.
std::vector<double> average_ranks(const std::vector<double>& x) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw Error(ErrorCode::ConstantSeries, "correlation undefined for constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw Error(ErrorCode::LengthMismatch, "series lengths differ");
  if (x.size() < 2)
    throw Error(ErrorCode::LengthMismatch, "need at least 2 points");
  return pearson(average_ranks(x), average_ranks(y));
}

std::vector<std::vector<double>> correlation_matrix(const ScoreMatrix& m) {
  if (m.values.size() < 2)
    throw Error(ErrorCode::LengthMismatch, "need at least 2 checkpoints");
  const size_t t = m.task_names.size();
  std::vector<std::vector<double>> out(t, std::vector<double>(t, 1.0));
  for (size_t a = 0; a < t; ++a) {
    for (size_t b = a + 1; b < t; ++b) {
      const double rho =
          spearman(m.column(m.task_names[a]), m.column(m.task_names[b]));
      out[a][b] = rho;
      out[b][a] = rho;
    }
  }
  return out;
}

std::vector<size_t> pareto_front(
    const std::vector<std::vector<double>>& points) {
  if (points.empty())
    throw Error(ErrorCode::InvalidConfig, "no points");
  const size_t arity = points.front().size();
  for (const auto& p : points)
    if (p.size() != arity)
      throw Error(ErrorCode::LengthMismatch, "points of different arity");

  auto dominates = [arity](const std::vector<double>& a,
                           const std::vector<double>& b) {
    bool strict = false;
    for (size_t k = 0; k < arity; ++k) {
      if (a[k] < b[k]) return false;
      if (a[k] > b[k]) strict = true;
    }
    return strict;
  };

  std::vector<size_t> front;
  for (size_t i = 0; i < points.size(); ++i) {
    bool dominated = false;
    for (size_t j = 0; j < points.size() && !dominated; ++j)
      if (j != i && dominates(points[j], points[i])) dominated = true;
    if (!dominated) front.push_back(i);
  }
  return front;
}

SparsityReport sparsity(const std::vector<double>& weights, double epsilon) {
  if (epsilon < 0.0)
    throw Error(ErrorCode::InvalidConfig, "epsilon must be >= 0");
  SparsityReport report;
  for (size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < epsilon) {
      ++report.count_below;
      report.indices_below.push_back(i);
    }
  }
  return report;
}

std::vector<double> centroid(const std::vector<std::vector<double>>& vectors) {
  if (vectors.empty())
    throw Error(ErrorCode::InvalidConfig, "no vectors");
  const size_t n = vectors.front().size();
  std::vector<double> mean(n, 0.0);
  for (const auto& v : vectors) {
    if (v.size() != n)
      throw Error(ErrorCode::LengthMismatch, "vectors of different length");
    for (size_t i = 0; i < n; ++i) mean[i] += v[i];
  }
  for (double& m : mean) m /= static_cast<double>(vectors.size());
  return mean;
}

std::vector<ProgressPoint> progress(const std::vector<double>& fitness_series) {
  if (fitness_series.empty())
    throw Error(ErrorCode::InvalidConfig, "empty log");
  std::vector<ProgressPoint> out;
  out.reserve(fitness_series.size());
  double best = fitness_series.front();
  for (size_t i = 0; i < fitness_series.size(); ++i) {
    best = std::max(best, fitness_series[i]);
    out.push_back({static_cast<int64_t>(i), fitness_series[i], best});
  }
  return out;
}

CostReport flops_cost(double param_count, const TrainStage& sft,
                      const TrainStage& po,
                      const std::map<std::string, double>& samples_per_task,
                      int64_t budget) {
  if (param_count <= 0.0 || sft.batch_size <= 0.0 || sft.steps <= 0.0 ||
      po.batch_size <= 0.0 || po.steps <= 0.0 || budget <= 0)
    throw Error(ErrorCode::InvalidConfig, "all cost inputs must be positive");
  for (const auto& [task, samples] : samples_per_task)
    if (samples <= 0.0)
      throw Error(ErrorCode::InvalidConfig, "non-positive samples for " + task);

  CostReport report;
  report.train_flops = 6.0 * param_count * sft.batch_size * sft.steps +
                       6.0 * param_count * po.batch_size * po.steps;
  double inference_total = 0.0;
  for (const auto& [task, samples] : samples_per_task) {
    const double f = 2.0 * param_count * samples;
    report.inference_flops_per_task[task] = f;
    inference_total += f;
  }
  report.search_flops = static_cast<double>(budget) * inference_total;
  report.ratio_search_to_train = report.search_flops / report.train_flops;
  return report;
}

}  // namespace mergeopt
