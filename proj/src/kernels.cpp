#include "txsentry/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "txsentry/error.hpp"

namespace txsentry {

KernelSpec KernelSpec::polynomial(int degree, double coef0) {
  if (degree < 1) throw std::invalid_argument("polynomial kernel degree must be >= 1");
  return {Kind::Polynomial, degree, coef0, 1.0};
}

KernelSpec KernelSpec::rbf(double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("RBF gamma must be positive");
  return {Kind::Rbf, 1, 0.0, gamma};
}

double kernel_eval(const KernelSpec& spec, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                   const Eigen::Ref<const Eigen::RowVectorXd>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
  switch (spec.kind) {
    case KernelSpec::Kind::Linear:
      return x.dot(y);
    case KernelSpec::Kind::Polynomial:
      return std::pow(x.dot(y) + spec.coef0, spec.degree);
    case KernelSpec::Kind::Rbf:
      return std::exp(-spec.gamma * (x - y).squaredNorm());
  }
  return 0.0;
}

Eigen::MatrixXd gram(const KernelSpec& spec, const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double k = kernel_eval(spec, rows.row(i), rows.row(j));
      g(i, j) = k;
      g(j, i) = k;
    }
  }
  return g;
}

double default_rbf_gamma(const Eigen::MatrixXd& rows) {
  const auto d = static_cast<double>(rows.cols());
  if (rows.rows() < 2 || d == 0) return 1.0;
  const Eigen::RowVectorXd mu = rows.colwise().mean();
  const double var =
      (rows.rowwise() - mu).array().square().colwise().mean().mean();
  return var > 0.0 ? 1.0 / (d * var) : 1.0 / d;
}

double KernelRidge::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double y = 0.0;
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) y += weights(i) * kernel_eval(kernel, inputs.row(i), x);
  return y;
}

KernelRidge kernel_ridge_fit(const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                             const KernelSpec& spec, double lambda) {
  if (inputs.rows() < 1 || inputs.rows() != targets.size())
    throw std::invalid_argument("kernel_ridge_fit: need matching, non-empty inputs and targets");
  if (!(lambda > 0.0)) throw std::invalid_argument("kernel_ridge_fit: lambda must be positive");
  Eigen::MatrixXd system = gram(spec, inputs);
  system.diagonal().array() += lambda;
  Eigen::LLT<Eigen::MatrixXd> llt(system);
  if (llt.info() != Eigen::Success) throw NumericError("kernel ridge: system not positive definite");
  KernelRidge model{spec, inputs, llt.solve(targets)};
  if (!model.weights.allFinite()) throw NumericError("kernel ridge: non-finite dual weights");
  return model;
}

double OneClassModel::decision(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < alphas.size(); ++i)
    s += alphas[i] * kernel_eval(kernel, support_vectors.row(static_cast<Eigen::Index>(i)), x);
  return s - rho;
}

namespace {

// Kernel rows on demand; the full Gram matrix is cached when it is small.
class KernelRows {
 public:
  KernelRows(const Eigen::MatrixXd& rows, const KernelSpec& spec) : rows_(rows), spec_(spec) {
    const Eigen::Index n = rows.rows();
    diag_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) diag_(i) = kernel_eval(spec, rows.row(i), rows.row(i));
    if (n <= kFullCacheRows) full_ = gram(spec, rows);
  }

  const Eigen::VectorXd& diagonal() const { return diag_; }

  // Column i of the Gram matrix, written into `out`.
  void column(Eigen::Index i, Eigen::VectorXd& out) const {
    if (full_.size() > 0) {
      out = full_.col(i);
      return;
    }
    const Eigen::Index n = rows_.rows();
    out.resize(n);
    if (spec_.kind == KernelSpec::Kind::Rbf) {
      const Eigen::RowVectorXd xi = rows_.row(i);
      out = (-spec_.gamma * (rows_.rowwise() - xi).rowwise().squaredNorm()).array().exp().matrix();
    } else {
      for (Eigen::Index j = 0; j < n; ++j) out(j) = kernel_eval(spec_, rows_.row(i), rows_.row(j));
    }
  }

 private:
  static constexpr Eigen::Index kFullCacheRows = 2500;
  const Eigen::MatrixXd& rows_;
  KernelSpec spec_;
  Eigen::VectorXd diag_;
  Eigen::MatrixXd full_;
};

}  // namespace

OneClassFit one_class_solve(const Eigen::MatrixXd& rows, const KernelSpec& spec, double nu,
                            const OneClassOptions& options, bool trace_objective) {
  const Eigen::Index n = rows.rows();
  if (n < 2) throw std::invalid_argument("one_class_fit: need at least 2 rows");
  const double dn = static_cast<double>(n);
  if (!(nu * dn >= 1.0 - 1e-12) || nu > 1.0)
    throw std::invalid_argument("one_class_fit: nu must lie in [1/n, 1]");
  if (!rows.allFinite()) throw NumericError("one_class_fit: non-finite input");

  const double bound = 1.0 / (nu * dn);
  KernelRows kernel(rows, spec);

  // Feasible start: fill the first floor(nu n) coefficients to the bound.
  std::vector<double> a(static_cast<std::size_t>(n), 0.0);
  double remaining = 1.0;
  for (Eigen::Index i = 0; i < n && remaining > 0.0; ++i) {
    const double v = std::min(bound, remaining);
    a[static_cast<std::size_t>(i)] = v;
    remaining -= v;
    if (remaining < 1e-15) remaining = 0.0;
  }

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd col_i, col_j;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (a[static_cast<std::size_t>(i)] == 0.0) continue;
    kernel.column(i, col_i);
    grad += a[static_cast<std::size_t>(i)] * col_i;
  }

  OneClassFit fit;
  auto objective = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += a[static_cast<std::size_t>(i)] * grad(i);
    return 0.5 * s;
  };
  if (trace_objective) fit.objective.push_back(objective());

  const auto& diag = kernel.diagonal();
  std::int64_t iter = 0;
  bool converged = false;
  for (; iter < options.max_iterations; ++iter) {
    // i: coefficient that can grow with the smallest gradient;
    // j: coefficient that can shrink with the largest gradient.
    Eigen::Index up = -1, down = -1;
    double g_up = std::numeric_limits<double>::infinity();
    double g_down = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k) {
      const double ak = a[static_cast<std::size_t>(k)];
      if (ak < bound && grad(k) < g_up) { g_up = grad(k); up = k; }
      if (ak > 0.0 && grad(k) > g_down) { g_down = grad(k); down = k; }
    }
    if (up < 0 || down < 0 || g_down - g_up < options.tolerance) {
      converged = true;
      break;
    }
    kernel.column(up, col_i);
    kernel.column(down, col_j);
    double curvature = diag(up) + diag(down) - 2.0 * col_i(down);
    if (curvature <= 1e-12) curvature = 1e-12;
    double& a_up = a[static_cast<std::size_t>(up)];
    double& a_down = a[static_cast<std::size_t>(down)];
    const double room = std::min(bound - a_up, a_down);
    double delta = (g_down - g_up) / curvature;
    if (delta >= room) {
      delta = room;
      if (room == bound - a_up) {
        a_down -= delta;
        a_up = bound;
      } else {
        a_up += delta;
        a_down = 0.0;
      }
    } else {
      a_up += delta;
      a_down -= delta;
    }
    grad += delta * (col_i - col_j);
    if (trace_objective) fit.objective.push_back(objective());
  }

  // Refresh the gradient to drop the drift of the incremental updates.
  grad.setZero();
  for (Eigen::Index k = 0; k < n; ++k) {
    if (a[static_cast<std::size_t>(k)] == 0.0) continue;
    kernel.column(k, col_i);
    grad += a[static_cast<std::size_t>(k)] * col_i;
  }

  // rho: mean gradient over free coefficients, else the middle of the KKT
  // interval; capped at the smallest gradient among coefficients below the
  // bound so that only bounded points can fall outside.
  double free_sum = 0.0;
  int free_count = 0;
  double lower = -std::numeric_limits<double>::infinity();  // max grad at bound
  double upper = std::numeric_limits<double>::infinity();   // min grad at zero
  double below_bound = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) {
    const double ak = a[static_cast<std::size_t>(k)];
    if (ak < bound) below_bound = std::min(below_bound, grad(k));
    if (ak > 0.0 && ak < bound) {
      free_sum += grad(k);
      ++free_count;
    } else if (ak >= bound) {
      lower = std::max(lower, grad(k));
    } else {
      upper = std::min(upper, grad(k));
    }
  }
  double rho;
  if (free_count > 0) rho = free_sum / free_count;
  else if (std::isfinite(lower) && std::isfinite(upper)) rho = 0.5 * (lower + upper);
  else rho = std::isfinite(lower) ? lower : upper;
  if (std::isfinite(below_bound) && rho > below_bound) rho = below_bound;
  rho -= 1e-12 * (1.0 + std::abs(rho));

  OneClassModel& model = fit.model;
  model.kernel = spec;
  model.nu = nu;
  model.rho = rho;
  model.converged = converged;
  model.iterations = iter;
  std::vector<Eigen::Index> sv;
  for (Eigen::Index k = 0; k < n; ++k)
    if (a[static_cast<std::size_t>(k)] > 0.0) sv.push_back(k);
  model.support_vectors.resize(static_cast<Eigen::Index>(sv.size()), rows.cols());
  for (std::size_t s = 0; s < sv.size(); ++s) {
    model.support_vectors.row(static_cast<Eigen::Index>(s)) = rows.row(sv[s]);
    model.alphas.push_back(a[static_cast<std::size_t>(sv[s])]);
  }
  fit.alphas = std::move(a);
  return fit;
}

OneClassModel one_class_fit(const Eigen::MatrixXd& rows, const KernelSpec& spec, double nu,
                            const OneClassOptions& options) {
  return one_class_solve(rows, spec, nu, options, false).model;
}

std::vector<double> power_of_two_grid(int lo, int hi) {
  std::vector<double> out;
  for (int e = lo; e <= hi; e += 2) out.push_back(std::ldexp(1.0, e));
  return out;
}

GammaSearch cross_validate_gamma(const Eigen::MatrixXd& rows, double nu,
                                 const std::vector<double>& gamma_grid, int folds,
                                 const OneClassOptions& options) {
  if (gamma_grid.empty()) throw std::invalid_argument("cross_validate_gamma: empty grid");
  if (folds < 2 || rows.rows() < 2 * folds)
    throw std::invalid_argument("cross_validate_gamma: too few rows for the folds");
  std::vector<double> grid = gamma_grid;
  std::sort(grid.begin(), grid.end());
  const Eigen::Index n = rows.rows();
  GammaSearch best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (double gamma : grid) {
    std::size_t flagged = 0, tested = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train, test;
      for (Eigen::Index i = 0; i < n; ++i) (i % folds == f ? test : train).push_back(i);
      Eigen::MatrixXd tr(static_cast<Eigen::Index>(train.size()), rows.cols());
      for (std::size_t k = 0; k < train.size(); ++k) tr.row(static_cast<Eigen::Index>(k)) = rows.row(train[k]);
      const double fold_nu = std::max(nu, 1.0 / static_cast<double>(train.size()));
      const auto model = one_class_fit(tr, KernelSpec::rbf(gamma), fold_nu, options);
      for (auto i : test) {
        ++tested;
        if (model.decision(rows.row(i)) < 0.0) ++flagged;
      }
    }
    const double frac = static_cast<double>(flagged) / static_cast<double>(tested);
    const double gap = std::abs(frac - nu);
    if (gap < best_gap) {
      best_gap = gap;
      best = {gamma, frac};
    }
  }
  return best;
}

}  // namespace txsentry
