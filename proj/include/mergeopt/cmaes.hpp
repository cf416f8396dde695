#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace mergeopt {

/// Covariance matrix adaptation evolution strategy with ask/tell semantics.
///
/// The engine MAXIMIZES fitness: a generation is ranked by descending
/// fitness, ties broken by candidate creation order (stable).
/// Pre-evaluated candidates can be fed in via inject(); they fill generations
/// in injection order and trigger the same distribution update once lambda
/// told candidates accumulate.
class CmaEs {
 public:
  CmaEs(int dim, const std::vector<double>& m0, double sigma0,
        std::optional<int> lambda, uint64_t seed);

  /// floor(4 + 3 ln d), the default population size.
  static int default_lambda(int dim);

  // Draws x ~ N(m, sigma^2 C) and registers a token for the eventual tell.
  // Throws GenerationFull when lambda un-told candidates are outstanding.
  std::pair<std::vector<double>, uint64_t> ask();

  // Records fitness for an asked candidate. The lambda-th told candidate of
  // a generation triggers the mean/path/covariance/step-size update.
  void tell(uint64_t token, double fitness);

  // Enqueues an already-evaluated candidate as a told member of the current
  // generation (warm start).
  void inject(const std::vector<double>& x, double fitness);

  int dimension() const { return dim_; }
  int lambda() const { return lambda_; }
  int mu() const { return mu_; }
  int generation() const { return generation_; }
  int pending_told() const;
  double sigma() const { return sigma_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }
  const std::vector<double>& recombination_weights() const { return weights_; }
  double chi_d() const { return chi_d_; }
  double mu_eff() const { return mu_eff_; }

 private:
  struct Slot {
    uint64_t token;  // 0 for injected candidates
    Eigen::VectorXd x;
    double fitness = 0.0;
    bool told = false;
  };

  void refresh_eigendecomposition();
  void update_generation();
  void repair_covariance();

  int dim_;
  int lambda_;
  int mu_;
  std::vector<double> weights_;  // w_1 >= ... >= w_mu > 0, sum 1
  double mu_eff_;
  double c_sigma_, d_sigma_, c_c_, c_1_, c_mu_;
  double chi_d_;

  Eigen::VectorXd mean_;
  double sigma_;
  Eigen::MatrixXd cov_;
  Eigen::VectorXd path_sigma_, path_c_;
  int generation_ = 0;

  // Cached eigendecomposition of C, refreshed after every update.
  Eigen::MatrixXd eig_basis_;     // B
  Eigen::VectorXd eig_sqrt_;      // sqrt of eigenvalues (diagonal of D)
  Eigen::MatrixXd inv_sqrt_cov_;  // B D^-1 B^T

  std::vector<Slot> pending_;
  uint64_t next_token_ = 1;

  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace mergeopt
