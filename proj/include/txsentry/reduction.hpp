#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace txsentry {

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column k pairs with values(k)
  int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// tolerance * max(1, ||A||_F).
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance = 1e-12,
                            int max_sweeps = 100);

struct PcaModel {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd components;  // m x d, orthonormal rows
  Eigen::VectorXd eigenvalues;  // all d covariance eigenvalues, descending
  double explained_fraction = 0.0;

  double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Population covariance, then the smallest m whose eigenvalue mass reaches
/// `explained`.
PcaModel pca_fit(const Eigen::MatrixXd& rows, double explained);

inline double pca_score(const PcaModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return model.score(x);
}

// ---------------------------------------------------------------------------
// Isolation forest
// ---------------------------------------------------------------------------

/// c(n) = 2 H(n-1) - 2 (n-1)/n with the exact harmonic number; c(1) = 0.
double average_path_length(std::size_t n);

struct IsolationTree {
  struct Node {
    int feature = -1;  // -1 for leaves
    double split = 0.0;
    double min = 0.0, max = 0.0;  // range of the split feature at this node
    int left = -1, right = -1;
    std::size_t size = 0;
    double adjustment = 0.0;  // c(size)
  };
  std::vector<Node> nodes;

  /// Depth of the leaf reached by x plus c(leaf size).
  double path_length(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  int height() const;
};

struct IsolationForest {
  std::vector<IsolationTree> trees;
  std::size_t subsample_size = 0;
  int tree_count = 0;
  std::uint64_t seed = 0;
  int height_limit = 0;

  double expected_path_length(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
  /// 2^(-E[h(x)] / c(subsample_size)).
  double score(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// Subsamples larger than the data are clipped to the row count.
IsolationForest iforest_fit(const Eigen::MatrixXd& rows, int tree_count, std::size_t subsample_size,
                            std::uint64_t seed);

inline double iforest_score(const IsolationForest& forest,
                            const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  return forest.score(x);
}

// ---------------------------------------------------------------------------
// Dense autoencoder w -> h (tanh) -> w (identity)
// ---------------------------------------------------------------------------

struct AutoencoderModel {
  int input = 0, hidden = 0;
  Eigen::MatrixXd w1;  // hidden x input
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // input x hidden
  Eigen::VectorXd b2;
  double training_error_mean = 0.0;
  double training_error_std = 0.0;
  std::vector<double> loss_history;  // loss after each epoch

  Eigen::VectorXd reconstruct(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Mean squared reconstruction error of one window.
  double score(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

struct AeGradient {
  double loss = 0.0;
  Eigen::MatrixXd w1, w2;
  Eigen::VectorXd b1, b2;
};

/// Seeded U(-r, r) weights with r = sqrt(6 / (input + hidden)); zero biases.
AutoencoderModel ae_init(int input, int hidden, std::uint64_t seed);

/// Loss = mean over rows and columns of the squared reconstruction error,
/// with its gradient by backpropagation.
AeGradient ae_loss_gradient(const AutoencoderModel& model, const Eigen::MatrixXd& windows);

/// Full-batch gradient descent. Throws NumericError naming the epoch when
/// the loss becomes non-finite.
AutoencoderModel ae_train(const Eigen::MatrixXd& windows, int hidden, int epochs,
                          double learning_rate, std::uint64_t seed);

inline double ae_score(const AutoencoderModel& model, const Eigen::Ref<const Eigen::VectorXd>& window) {
  return model.score(window);
}

/// mean + multiplier * std (population) of the training scores.
double score_threshold(std::span<const double> train_scores, double multiplier = 3.0);

}  // namespace txsentry
