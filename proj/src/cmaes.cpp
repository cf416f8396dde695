#include "mergeopt/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mergeopt/errors.hpp"

namespace mergeopt {

int CmaEs::default_lambda(int dim) {
  return static_cast<int>(std::floor(4.0 + 3.0 * std::log(static_cast<double>(dim))));
}

CmaEs::CmaEs(int dim, const std::vector<double>& m0, double sigma0,
             std::optional<int> lambda, uint64_t seed)
    : dim_(dim), rng_(seed) {
  if (dim < 1)
    throw Error(ErrorCode::InvalidConfig, "dimension must be >= 1");
  if (static_cast<int>(m0.size()) != dim)
    throw Error(ErrorCode::InvalidConfig, "m0 length does not match dimension");
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0))
    throw Error(ErrorCode::InvalidConfig, "sigma0 must be positive and finite");

  lambda_ = lambda.value_or(default_lambda(dim));
  if (lambda_ < 2)
    throw Error(ErrorCode::InvalidConfig, "lambda must be >= 2");
  mu_ = lambda_ / 2;

  // w_i proportional to ln(mu + 1/2) - ln i, normalized to sum 1.
  weights_.resize(mu_);
  double wsum = 0.0;
  for (int i = 0; i < mu_; ++i) {
    weights_[i] = std::log(mu_ + 0.5) - std::log(static_cast<double>(i + 1));
    wsum += weights_[i];
  }
  double w2sum = 0.0;
  for (double& w : weights_) {
    w /= wsum;
    w2sum += w * w;
  }
  mu_eff_ = 1.0 / w2sum;

  const double d = static_cast<double>(dim_);
  c_sigma_ = (mu_eff_ + 2.0) / (d + mu_eff_ + 5.0);
  d_sigma_ = 1.0 +
             2.0 * std::max(0.0, std::sqrt((mu_eff_ - 1.0) / (d + 1.0)) - 1.0) +
             c_sigma_;
  c_c_ = (4.0 + mu_eff_ / d) / (d + 4.0 + 2.0 * mu_eff_ / d);
  c_1_ = 2.0 / ((d + 1.3) * (d + 1.3) + mu_eff_);
  c_mu_ = std::min(1.0 - c_1_, 2.0 * (mu_eff_ - 2.0 + 1.0 / mu_eff_) /
                                   ((d + 2.0) * (d + 2.0) + mu_eff_));
  chi_d_ = std::sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));

  mean_ = Eigen::Map<const Eigen::VectorXd>(m0.data(), dim_);
  sigma_ = sigma0;
  cov_ = Eigen::MatrixXd::Identity(dim_, dim_);
  path_sigma_ = Eigen::VectorXd::Zero(dim_);
  path_c_ = Eigen::VectorXd::Zero(dim_);
  refresh_eigendecomposition();
}

int CmaEs::pending_told() const {
  return static_cast<int>(
      std::count_if(pending_.begin(), pending_.end(),
                    [](const Slot& s) { return s.told; }));
}

std::pair<std::vector<double>, uint64_t> CmaEs::ask() {
  const int outstanding = static_cast<int>(pending_.size()) - pending_told();
  if (outstanding >= lambda_)
    throw Error(ErrorCode::GenerationFull,
                "lambda un-told candidates outstanding");

  Eigen::VectorXd z(dim_);
  for (int i = 0; i < dim_; ++i) z[i] = gauss_(rng_);
  Eigen::VectorXd x = mean_ + sigma_ * (eig_basis_ * (eig_sqrt_.asDiagonal() * z));

  Slot slot;
  slot.token = next_token_++;
  slot.x = x;
  pending_.push_back(std::move(slot));
  return {std::vector<double>(x.data(), x.data() + dim_), pending_.back().token};
}

void CmaEs::tell(uint64_t token, double fitness) {
  if (!std::isfinite(fitness))
    throw Error(ErrorCode::InvalidConfig, "non-finite fitness");
  auto it = std::find_if(pending_.begin(), pending_.end(),
                         [token](const Slot& s) { return s.token == token; });
  if (it == pending_.end())
    throw Error(ErrorCode::UnknownToken, "no such outstanding candidate");
  if (it->told)
    throw Error(ErrorCode::DoubleTell, "candidate already told");
  it->fitness = fitness;
  it->told = true;
  if (pending_told() >= lambda_) update_generation();
}

void CmaEs::inject(const std::vector<double>& x, double fitness) {
  if (static_cast<int>(x.size()) != dim_)
    throw Error(ErrorCode::InvalidConfig, "injected point has wrong dimension");
  if (!std::isfinite(fitness))
    throw Error(ErrorCode::InvalidConfig, "non-finite injected fitness");
  for (double v : x)
    if (!std::isfinite(v))
      throw Error(ErrorCode::InvalidConfig, "non-finite injected coordinate");

  Slot slot;
  slot.token = 0;
  slot.x = Eigen::Map<const Eigen::VectorXd>(x.data(), dim_);
  slot.fitness = fitness;
  slot.told = true;
  pending_.push_back(std::move(slot));
  if (pending_told() >= lambda_) update_generation();
}

void CmaEs::update_generation() {
  // Collect the lambda told candidates in creation order; un-told asked
  // candidates stay pending and count toward the next generation.
  std::vector<size_t> told_idx;
  for (size_t i = 0; i < pending_.size(); ++i)
    if (pending_[i].told) told_idx.push_back(i);

  // Descending fitness, stable in creation order (we maximize).
  std::stable_sort(told_idx.begin(), told_idx.end(), [this](size_t a, size_t b) {
    return pending_[a].fitness > pending_[b].fitness;
  });

  const Eigen::VectorXd mean_prev = mean_;

  Eigen::VectorXd new_mean = Eigen::VectorXd::Zero(dim_);
  for (int i = 0; i < mu_; ++i)
    new_mean += weights_[i] * pending_[told_idx[i]].x;
  mean_ = new_mean;

  const Eigen::VectorXd shift = (mean_ - mean_prev) / sigma_;

  path_sigma_ = (1.0 - c_sigma_) * path_sigma_ +
                std::sqrt(c_sigma_ * (2.0 - c_sigma_) * mu_eff_) *
                    (inv_sqrt_cov_ * shift);

  // Stall guard: suppress the rank-1 update while the step-size path is
  // abnormally long, otherwise C can blow up on flat regions.
  const double path_norm = path_sigma_.norm();
  const double denom =
      std::sqrt(1.0 - std::pow(1.0 - c_sigma_, 2.0 * (generation_ + 1)));
  const bool h_sigma =
      path_norm / denom / chi_d_ < 1.4 + 2.0 / (dim_ + 1.0);

  path_c_ = (1.0 - c_c_) * path_c_ +
            (h_sigma ? std::sqrt(c_c_ * (2.0 - c_c_) * mu_eff_) : 0.0) * shift;

  Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(dim_, dim_);
  for (int i = 0; i < mu_; ++i) {
    const Eigen::VectorXd y = (pending_[told_idx[i]].x - mean_prev) / sigma_;
    rank_mu += weights_[i] * (y * y.transpose());
  }

  cov_ = (1.0 - c_1_ - c_mu_) * cov_ +
         c_1_ * (path_c_ * path_c_.transpose() +
                 (h_sigma ? 0.0 : c_c_ * (2.0 - c_c_)) * cov_) +
         c_mu_ * rank_mu;

  sigma_ *= std::exp((c_sigma_ / d_sigma_) * (path_norm / chi_d_ - 1.0));

  repair_covariance();
  refresh_eigendecomposition();

  // Drop the consumed generation, keep outstanding asked candidates.
  std::vector<Slot> remaining;
  for (auto& slot : pending_)
    if (!slot.told) remaining.push_back(std::move(slot));
  pending_ = std::move(remaining);
  ++generation_;
}

void CmaEs::repair_covariance() {
  cov_ = 0.5 * (cov_ + cov_.transpose().eval());
  const double floor =
      std::max(1e-14 * cov_.trace() / dim_, std::numeric_limits<double>::min());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov_);
  Eigen::VectorXd evals = solver.eigenvalues();
  bool clamped = false;
  for (int i = 0; i < dim_; ++i) {
    if (evals[i] < floor) {
      evals[i] = floor;
      clamped = true;
    }
  }
  if (clamped) {
    cov_ = solver.eigenvectors() * evals.asDiagonal() *
           solver.eigenvectors().transpose();
    cov_ = 0.5 * (cov_ + cov_.transpose().eval());
  }
}

void CmaEs::refresh_eigendecomposition() {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov_);
  eig_basis_ = solver.eigenvectors();
  Eigen::VectorXd evals = solver.eigenvalues().cwiseMax(
      std::numeric_limits<double>::min());
  eig_sqrt_ = evals.cwiseSqrt();
  inv_sqrt_cov_ = eig_basis_ * eig_sqrt_.cwiseInverse().asDiagonal() *
                  eig_basis_.transpose();
}

}  // namespace mergeopt
