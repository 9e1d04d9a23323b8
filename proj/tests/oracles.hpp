#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "txsentry/clustering.hpp"

namespace txsentry::testing {

inline Eigen::MatrixXd gaussian_rows(int n, int d, std::uint64_t seed, double sigma = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, sigma);
  Eigen::MatrixXd m(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = dist(rng);
  return m;
}

// Roots of det(A - tI) for symmetric 3x3 A via the trigonometric cubic
// formula; descending.
inline std::vector<double> cubic_eigenvalues(const Eigen::Matrix3d& a) {
  const double c2 = -a.trace();
  const double c1 = a(0, 0) * a(1, 1) + a(0, 0) * a(2, 2) + a(1, 1) * a(2, 2) - a(0, 1) * a(1, 0) -
                    a(0, 2) * a(2, 0) - a(1, 2) * a(2, 1);
  const double c0 = -a.determinant();
  // t^3 + c2 t^2 + c1 t + c0, depressed with t = s - c2/3.
  const double p = c1 - c2 * c2 / 3.0;
  const double q = 2.0 * c2 * c2 * c2 / 27.0 - c2 * c1 / 3.0 + c0;
  std::vector<double> roots;
  const double r = std::sqrt(std::max(0.0, -p / 3.0));
  const double arg = r > 0.0 ? std::clamp(-q / (2.0 * r * r * r), -1.0, 1.0) : 0.0;
  const double phi = std::acos(arg);
  for (int k = 0; k < 3; ++k) roots.push_back(2.0 * r * std::cos((phi - 2.0 * M_PI * k) / 3.0) - c2 / 3.0);
  // Polish with Newton on the characteristic polynomial.
  for (double& t : roots)
    for (int it = 0; it < 20; ++it) {
      const double f = ((t + c2) * t + c1) * t + c0;
      const double df = (3.0 * t + 2.0 * c2) * t + c1;
      if (df == 0.0) break;
      t -= f / df;
    }
  std::sort(roots.rbegin(), roots.rend());
  return roots;
}

// Reference DBSCAN: core points from a full distance matrix, components by
// union-find, border points join the adjacent component whose smallest core
// index is lowest; components numbered by smallest core index.
inline std::vector<int> naive_dbscan(const Eigen::MatrixXd& x, double eps, int min_pts) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::vector<bool>> near(n, std::vector<bool>(n));
  std::vector<bool> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    for (std::size_t j = 0; j < n; ++j) {
      near[i][j] = (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).squaredNorm() <= eps * eps;
      count += near[i][j];
    }
    core[i] = count >= min_pts;
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (core[i] && core[j] && near[i][j]) {
        const auto a = find(i), b = find(j);
        parent[std::max(a, b)] = std::min(a, b);
      }
  // Roots are the smallest core index in each component.
  std::map<std::size_t, int> id;
  for (std::size_t i = 0; i < n; ++i)
    if (core[i] && !id.count(find(i))) id.emplace(find(i), static_cast<int>(id.size()));
  std::vector<int> labels(n, kNoise);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      labels[i] = id[find(i)];
      continue;
    }
    for (std::size_t j = 0; j < n; ++j)
      if (core[j] && near[i][j]) {
        const int c = id[find(j)];
        if (labels[i] == kNoise || c < labels[i]) labels[i] = c;
      }
  }
  return labels;
}

// Cluster ids renamed by first appearance; noise kept.
inline std::vector<int> canonical(const std::vector<int>& labels) {
  std::map<int, int> rename;
  std::vector<int> out;
  for (int l : labels) {
    if (l == kNoise) {
      out.push_back(kNoise);
      continue;
    }
    auto it = rename.emplace(l, static_cast<int>(rename.size())).first;
    out.push_back(it->second);
  }
  return out;
}

}  // namespace txsentry::testing
