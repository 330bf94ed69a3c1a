#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dgmeval/ensemble_io.hpp"
#include "dgmeval/features.hpp"

namespace dgmeval {

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

inline constexpr int kDefaultComponents = 10;

struct pca_model {
  std::vector<std::string> columns;  // kept input columns, in order
  std::vector<std::size_t> kept;     // their indices in the fitted matrix
  std::vector<std::string> dropped;  // zero-variance or all-NaN columns
  Eigen::VectorXd median;            // training medians used to impute NaN
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // z-score denominators (sample std)
  bool standardized = true;
  Eigen::MatrixXd components;  // kept x k, orthonormal columns
  Eigen::VectorXd explained_variance;
  double total_variance = 0.0;

  [[nodiscard]] int k() const noexcept { return static_cast<int>(components.cols()); }
  // Rows of m (same column schema as the training matrix) in PC space.
  [[nodiscard]] Eigen::MatrixXd project(const feature_matrix& m) const;
  // Imputed and standardized rows before rotation.
  [[nodiscard]] Eigen::MatrixXd project_input(const feature_matrix& m) const;
};

// Number of columns that are neither all-NaN nor constant.
std::size_t usable_column_count(const feature_matrix& m);

// Standardize, impute, then SVD of the centred matrix. The largest-magnitude
// loading of each component is made positive.
pca_model fit_pca(const feature_matrix& train, int k = kDefaultComponents);
// Plain (already numeric, NaN-free) variant used by tests and toy data.
pca_model fit_pca(const Eigen::MatrixXd& x, int k, bool standardize = true);

// ---------------------------------------------------------------------------
// Pair distributions and KS
// ---------------------------------------------------------------------------

struct pair_sample {
  std::vector<double> distances;
  std::size_t redraws = 0;  // draws rejected for a zero-norm vector
};

// Cosine distances 1 - <x,y>/(|x||y|) for x uniform from rows of a and y
// from rows of b. With `alias`, a and b are the same set and x == y is
// excluded.
pair_sample cosine_pair_distribution(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::size_t n_pairs,
                                     std::uint64_t seed, bool alias = false);

// Two-sample Kolmogorov-Smirnov statistic by a merge over sorted copies.
double ks_statistic(std::span<const double> u, std::span<const double> v);

// ---------------------------------------------------------------------------
// Ranking metric
// ---------------------------------------------------------------------------

struct ranking_options {
  int k = kDefaultComponents;
  std::size_t n_pairs = 10000;
  std::size_t n_boot = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

struct ranking_result {
  double ks_mean = 0.0;
  double ks_std = 0.0;
  std::vector<double> replicates;
  int k = 0;
  std::size_t n_pairs = 0;
  std::vector<std::string> dropped_columns;
  [[nodiscard]] ranking_summary summary() const;
};

ranking_result ranking_metric(const feature_matrix& train, const feature_matrix& gen, const ranking_options& opts = {});
// Restricted to one family's columns with k = min(opts.k, usable columns).
ranking_result per_family_metric(const feature_matrix& train, const feature_matrix& gen, feature_family family,
                                 const ranking_options& opts = {});
// Restricted to the nine public-metric columns.
ranking_result public_metric(const feature_matrix& train, const feature_matrix& gen, const ranking_options& opts = {});

// ---------------------------------------------------------------------------
// Frechet distance
// ---------------------------------------------------------------------------

struct gaussian_fit {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

// Sample mean and unbiased covariance of the rows.
gaussian_fit fit_gaussian(const Eigen::MatrixXd& rows);
gaussian_fit fit_gaussian(const embedding_matrix& e);

double frechet_distance(const gaussian_fit& a, const gaussian_fit& b);

// ---------------------------------------------------------------------------
// Density and coverage
// ---------------------------------------------------------------------------

struct density_coverage_result {
  double density = 0.0;
  double coverage = 0.0;
};

density_coverage_result density_coverage(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int k_nn = 5);

}  // namespace dgmeval
