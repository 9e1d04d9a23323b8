#include "txsentry/reduction.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "txsentry/error.hpp"
#include "txsentry/rng.hpp"
#include "txsentry/series.hpp"

namespace txsentry {

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance, int max_sweeps) {
  const Eigen::Index d = symmetric.rows();
  if (d != symmetric.cols()) throw std::invalid_argument("jacobi_eigen: matrix must be square");
  if (!symmetric.allFinite()) throw NumericError("jacobi_eigen: non-finite input");
  Eigen::MatrixXd a = 0.5 * (symmetric + symmetric.transpose());
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(d, d);
  const double limit = tolerance * std::max(1.0, a.norm());

  auto off_norm = [&] {
    double s = 0.0;
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        if (i != j) s += a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  SymmetricEigen out;
  for (; out.sweeps < max_sweeps && off_norm() >= limit; ++out.sweeps) {
    for (Eigen::Index p = 0; p + 1 < d; ++p) {
      for (Eigen::Index q = p + 1; q < d; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < d; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < d; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < d; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  if (off_norm() >= limit) throw NumericError("jacobi_eigen: no convergence");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
  out.values.resize(d);
  out.vectors.resize(d, d);
  for (Eigen::Index k = 0; k < d; ++k) {
    out.values(k) = a(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

double PcaModel::score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (x.size() != mean.size()) throw std::invalid_argument("pca_score: dimension mismatch");
  const Eigen::RowVectorXd c = x - mean;
  const Eigen::RowVectorXd proj = c * components.transpose();
  return (c - proj * components).norm();
}

PcaModel pca_fit(const Eigen::MatrixXd& rows, double explained) {
  if (rows.rows() < 2) throw std::invalid_argument("pca_fit: need at least 2 rows");
  if (!(explained > 0.0 && explained <= 1.0)) throw std::invalid_argument("pca_fit: explained must be in (0, 1]");
  if (!rows.allFinite()) throw NumericError("pca_fit: non-finite input");
  PcaModel model;
  model.mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - model.mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(rows.rows());
  const auto eig = jacobi_eigen(cov);
  model.eigenvalues = eig.values;

  const double total = eig.values.cwiseMax(0.0).sum();
  Eigen::Index m = 1;
  if (total > 0.0) {
    double mass = 0.0;
    for (m = 0; m < eig.values.size();) {
      mass += std::max(0.0, eig.values(m));
      ++m;
      if (mass >= explained * total * (1.0 - 1e-12)) break;
    }
    model.explained_fraction = mass / total;
  } else {
    model.explained_fraction = 1.0;
  }
  model.components = eig.vectors.leftCols(m).transpose();
  return model;
}

double average_path_length(std::size_t n) {
  if (n <= 1) return 0.0;
  double harmonic = 0.0;
  for (std::size_t i = 1; i < n; ++i) harmonic += 1.0 / static_cast<double>(i);
  const double dn = static_cast<double>(n);
  return 2.0 * harmonic - 2.0 * (dn - 1.0) / dn;
}

double IsolationTree::path_length(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  int i = 0;
  int depth = 0;
  while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
    const auto& node = nodes[static_cast<std::size_t>(i)];
    i = x(node.feature) < node.split ? node.left : node.right;
    ++depth;
  }
  return depth + nodes[static_cast<std::size_t>(i)].adjustment;
}

int IsolationTree::height() const {
  std::vector<int> level(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (nodes[i].feature >= 0) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

namespace {

struct IsolationBuilder {
  const Eigen::MatrixXd& rows;
  int height_limit;
  Rng rng;
  IsolationTree tree;

  int build(std::vector<Eigen::Index> idx, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    IsolationTree::Node node;
    node.size = idx.size();
    node.adjustment = average_path_length(idx.size());
    tree.nodes.push_back(node);
    if (depth >= height_limit || idx.size() <= 1) return id;

    std::vector<int> candidates;
    std::vector<std::pair<double, double>> ranges(static_cast<std::size_t>(rows.cols()));
    for (Eigen::Index f = 0; f < rows.cols(); ++f) {
      double lo = rows(idx[0], f), hi = lo;
      for (auto r : idx) {
        lo = std::min(lo, rows(r, f));
        hi = std::max(hi, rows(r, f));
      }
      ranges[static_cast<std::size_t>(f)] = {lo, hi};
      if (std::nextafter(lo, hi) < hi) candidates.push_back(static_cast<int>(f));
    }
    if (candidates.empty()) return id;

    const int f = candidates[uniform_index(rng, candidates.size())];
    const auto [lo, hi] = ranges[static_cast<std::size_t>(f)];
    double split;
    do {
      split = lo + uniform01(rng) * (hi - lo);
    } while (!(split > lo && split < hi));

    std::vector<Eigen::Index> left, right;
    for (auto r : idx) (rows(r, f) < split ? left : right).push_back(r);
    idx.clear();
    idx.shrink_to_fit();
    const int l = build(std::move(left), depth + 1);
    const int r = build(std::move(right), depth + 1);
    auto& n = tree.nodes[static_cast<std::size_t>(id)];
    n.feature = f;
    n.split = split;
    n.min = lo;
    n.max = hi;
    n.left = l;
    n.right = r;
    return id;
  }
};

}  // namespace

double IsolationForest::expected_path_length(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  double sum = 0.0;
  for (const auto& t : trees) sum += t.path_length(x);
  return sum / static_cast<double>(trees.size());
}

double IsolationForest::score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  return std::exp2(-expected_path_length(x) / average_path_length(subsample_size));
}

IsolationForest iforest_fit(const Eigen::MatrixXd& rows, int tree_count, std::size_t subsample_size,
                            std::uint64_t seed) {
  if (tree_count < 1) throw std::invalid_argument("iforest_fit: tree_count must be >= 1");
  if (subsample_size < 2) throw std::invalid_argument("iforest_fit: subsample_size must be >= 2");
  if (rows.rows() < 2) throw std::invalid_argument("iforest_fit: need at least 2 rows");
  if (!rows.allFinite()) throw NumericError("iforest_fit: non-finite input");
  const auto n = static_cast<std::size_t>(rows.rows());
  const std::size_t psi = std::min(subsample_size, n);

  IsolationForest forest;
  forest.subsample_size = psi;
  forest.tree_count = tree_count;
  forest.seed = seed;
  forest.height_limit = static_cast<int>(std::ceil(std::log2(static_cast<double>(psi))));
  forest.trees.reserve(static_cast<std::size_t>(tree_count));
  std::vector<Eigen::Index> all(n);
  for (int t = 0; t < tree_count; ++t) {
    IsolationBuilder builder{rows, forest.height_limit, Rng(derive_seed(seed, static_cast<std::uint64_t>(t))), {}};
    // Partial Fisher-Yates: the first psi entries form the subsample.
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    for (std::size_t i = 0; i < psi; ++i) std::swap(all[i], all[i + uniform_index(builder.rng, n - i)]);
    builder.build({all.begin(), all.begin() + static_cast<std::ptrdiff_t>(psi)}, 0);
    forest.trees.push_back(std::move(builder.tree));
  }
  return forest;
}

Eigen::VectorXd AutoencoderModel::reconstruct(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input) throw std::invalid_argument("autoencoder: window length mismatch");
  const Eigen::VectorXd a = (w1 * x + b1).array().tanh().matrix();
  return w2 * a + b2;
}

double AutoencoderModel::score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return (reconstruct(x) - x).squaredNorm() / static_cast<double>(input);
}

AutoencoderModel ae_init(int input, int hidden, std::uint64_t seed) {
  if (hidden < 1 || hidden >= input) throw std::invalid_argument("autoencoder: need 1 <= hidden < input");
  AutoencoderModel m;
  m.input = input;
  m.hidden = hidden;
  const double r = std::sqrt(6.0 / static_cast<double>(input + hidden));
  Rng rng(seed);
  auto draw = [&] { return -r + 2.0 * r * uniform01(rng); };
  m.w1.resize(hidden, input);
  m.w2.resize(input, hidden);
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = draw();
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) m.w2.data()[i] = draw();
  m.b1 = Eigen::VectorXd::Zero(hidden);
  m.b2 = Eigen::VectorXd::Zero(input);
  return m;
}

AeGradient ae_loss_gradient(const AutoencoderModel& model, const Eigen::MatrixXd& windows) {
  if (windows.cols() != model.input) throw std::invalid_argument("autoencoder: window length mismatch");
  const double scale = static_cast<double>(windows.rows()) * static_cast<double>(model.input);
  const Eigen::MatrixXd z = (windows * model.w1.transpose()).rowwise() + model.b1.transpose();
  const Eigen::MatrixXd a = z.array().tanh().matrix();
  const Eigen::MatrixXd y = (a * model.w2.transpose()).rowwise() + model.b2.transpose();
  const Eigen::MatrixXd r = y - windows;

  AeGradient g;
  g.loss = r.squaredNorm() / scale;
  const Eigen::MatrixXd dy = 2.0 * r / scale;
  g.w2 = dy.transpose() * a;
  g.b2 = dy.colwise().sum().transpose();
  const Eigen::MatrixXd dz = ((dy * model.w2).array() * (1.0 - a.array().square())).matrix();
  g.w1 = dz.transpose() * windows;
  g.b1 = dz.colwise().sum().transpose();
  return g;
}

AutoencoderModel ae_train(const Eigen::MatrixXd& windows, int hidden, int epochs, double learning_rate,
                          std::uint64_t seed) {
  if (windows.rows() < 10) throw std::invalid_argument("ae_train: need at least 10 windows");
  if (epochs < 1 || !(learning_rate > 0.0)) throw std::invalid_argument("ae_train: bad epochs or learning rate");
  if (!windows.allFinite()) throw NumericError("ae_train: non-finite input");
  auto model = ae_init(static_cast<int>(windows.cols()), hidden, seed);
  model.loss_history.reserve(static_cast<std::size_t>(epochs));
  auto g = ae_loss_gradient(model, windows);
  if (!std::isfinite(g.loss)) throw NumericError("ae_train: non-finite loss at epoch 0");
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    model.w1 -= learning_rate * g.w1;
    model.b1 -= learning_rate * g.b1;
    model.w2 -= learning_rate * g.w2;
    model.b2 -= learning_rate * g.b2;
    g = ae_loss_gradient(model, windows);
    if (!std::isfinite(g.loss)) throw NumericError("ae_train: non-finite loss at epoch " + std::to_string(epoch));
    model.loss_history.push_back(g.loss);
  }
  std::vector<double> errors(static_cast<std::size_t>(windows.rows()));
  for (Eigen::Index i = 0; i < windows.rows(); ++i)
    errors[static_cast<std::size_t>(i)] = model.score(windows.row(i).transpose());
  model.training_error_mean = mean(errors);
  model.training_error_std = stddev(errors);
  return model;
}

double score_threshold(std::span<const double> train_scores, double multiplier) {
  if (train_scores.empty()) throw std::invalid_argument("score_threshold: no training scores");
  return mean(train_scores) + multiplier * stddev(train_scores);
}

}  // namespace txsentry
