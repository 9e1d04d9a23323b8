#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace txsentry {

struct KernelSpec {
  enum class Kind { Linear, Polynomial, Rbf };
  Kind kind = Kind::Rbf;
  int degree = 3;      // Polynomial
  double coef0 = 1.0;  // Polynomial
  double gamma = 1.0;  // Rbf

  static KernelSpec linear() { return {Kind::Linear, 1, 0.0, 1.0}; }
  static KernelSpec polynomial(int degree, double coef0);
  static KernelSpec rbf(double gamma);
};

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                   const Eigen::Ref<const Eigen::RowVectorXd>& y);

/// Symmetric matrix of pairwise kernel values between the rows of X.
Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& rows);

/// 1 / (d * mean column variance); falls back to 1 / d for constant data.
double default_rbf_gamma(const Eigen::MatrixXd& rows);

struct KernelRidge {
  KernelSpec kernel;
  Eigen::MatrixXd inputs;
  Eigen::VectorXd weights;  // dual coefficients

  double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Solves (G + lambda I) a = y by Cholesky.
KernelRidge kernel_ridge_fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                             const KernelSpec& spec, double lambda);

// Solution of the nu-one-class dual
//   min 1/2 a'Ga  s.t.  0 <= a_i <= 1/(nu n),  sum a_i = 1.
struct OneClassModel {
  KernelSpec kernel;
  double nu = 0.05;
  Eigen::MatrixXd support_vectors;
  std::vector<double> alphas;  // one per support vector
  double rho = 0.0;
  bool converged = false;
  std::int64_t iterations = 0;

  /// sum_i alpha_i k(sv_i, x) - rho; negative means outside the support.
  double decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct OneClassOptions {
  double tolerance = 1e-4;
  std::int64_t max_iterations = 100000;
};

struct OneClassFit {
  OneClassModel model;
  std::vector<double> alphas;       // full length-n dual vector
  std::vector<double> objective;    // dual objective after each update
};

/// Pairwise (most violating pair) coordinate descent. `trace_objective`
/// records the dual objective after every update, at O(n) extra cost.
OneClassFit one_class_solve(const Eigen::MatrixXd& rows, const KernelSpec& spec, double nu,
                            const OneClassOptions& options = {}, bool trace_objective = false);

OneClassModel one_class_fit(const Eigen::MatrixXd& rows, const KernelSpec& spec, double nu,
                            const OneClassOptions& options = {});

inline double one_class_decision(const OneClassModel& model,
                                 const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return model.decision(x);
}

struct GammaSearch {
  double gamma = 1.0;
  double held_out_outlier_fraction = 0.0;
};

/// k-fold search over an RBF gamma grid for a fixed nu: keeps the gamma whose
/// held-out outlier fraction is closest to nu (ties to the smaller gamma).
GammaSearch cross_validate_gamma(const Eigen::MatrixXd& rows, double nu,
                                 const std::vector<double>& gamma_grid, int folds,
                                 const OneClassOptions& options = {});

/// {2^lo, 2^(lo+2), ..., 2^hi}.
std::vector<double> power_of_two_grid(int lo, int hi);

}  // namespace txsentry
