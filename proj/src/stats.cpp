#include "dgmeval/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dgmeval/error.hpp"
#include "dgmeval/parallel.hpp"
#include "dgmeval/rng.hpp"

namespace dgmeval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double median_of(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct column_profile {
  bool usable = false;
  double median = kNaN;
  double mean = 0.0;
  double sd = 0.0;
};

// Statistics of column c after median imputation of NaNs.
column_profile profile_column(const feature_matrix& m, std::size_t c) {
  column_profile p;
  std::vector<double> finite;
  finite.reserve(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    if (std::isfinite(m.at(r, c))) finite.push_back(m.at(r, c));
  if (finite.empty()) return p;
  p.median = median_of(finite);
  const double missing = static_cast<double>(m.rows - finite.size());
  double sum = missing * p.median;
  for (const double v : finite) sum += v;
  p.mean = sum / static_cast<double>(m.rows);
  double ss = missing * (p.median - p.mean) * (p.median - p.mean);
  for (const double v : finite) ss += (v - p.mean) * (v - p.mean);
  p.sd = m.rows > 1 ? std::sqrt(ss / static_cast<double>(m.rows - 1)) : 0.0;
  p.usable = p.sd > 0.0 && p.sd > 1e-12 * std::abs(p.mean);
  return p;
}

pca_model fit_pca_impl(const feature_matrix& train, int k, bool standardize) {
  if (k < 1) throw argument_error("PCA needs at least one component");
  if (train.rows <= static_cast<std::size_t>(k))
    throw argument_error("PCA needs more than " + std::to_string(k) + " training rows, got " +
                         std::to_string(train.rows));
  pca_model model;
  model.standardized = standardize;
  std::vector<column_profile> prof;
  for (std::size_t c = 0; c < train.cols(); ++c) {
    auto p = profile_column(train, c);
    if (!p.usable) {
      model.dropped.push_back(train.columns[c].name);
      continue;
    }
    model.kept.push_back(c);
    model.columns.push_back(train.columns[c].name);
    prof.push_back(p);
  }
  const auto d = static_cast<Eigen::Index>(model.kept.size());
  if (d < k)
    throw argument_error("PCA needs at least " + std::to_string(k) + " usable columns, got " + std::to_string(d));
  model.median.resize(d);
  model.mean.resize(d);
  model.scale.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    model.median[j] = prof[static_cast<std::size_t>(j)].median;
    model.mean[j] = prof[static_cast<std::size_t>(j)].mean;
    model.scale[j] = standardize ? prof[static_cast<std::size_t>(j)].sd : 1.0;
  }
  const Eigen::MatrixXd x = model.project_input(train);
  Eigen::BDCSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double denom = static_cast<double>(train.rows - 1);
  model.components = svd.matrixV().leftCols(k);
  model.explained_variance = s.head(k).array().square() / denom;
  model.total_variance = s.array().square().sum() / denom;
  for (int j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    model.components.col(j).cwiseAbs().maxCoeff(&arg);
    if (model.components(arg, j) < 0.0) model.components.col(j) *= -1.0;
  }
  return model;
}

}  // namespace

Eigen::MatrixXd pca_model::project_input(const feature_matrix& m) const {
  for (std::size_t j = 0; j < kept.size(); ++j)
    if (kept[j] >= m.cols() || m.columns[kept[j]].name != columns[j])
      throw validation_error("feature matrix does not match the PCA training schema");
  Eigen::MatrixXd x(static_cast<Eigen::Index>(m.rows), static_cast<Eigen::Index>(kept.size()));
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t j = 0; j < kept.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      double v = m.at(r, kept[j]);
      if (!std::isfinite(v)) v = median[jj];
      x(static_cast<Eigen::Index>(r), jj) = (v - mean[jj]) / scale[jj];
    }
  }
  return x;
}

Eigen::MatrixXd pca_model::project(const feature_matrix& m) const { return project_input(m) * components; }

std::size_t usable_column_count(const feature_matrix& m) {
  std::size_t n = 0;
  for (std::size_t c = 0; c < m.cols(); ++c) n += profile_column(m, c).usable;
  return n;
}

pca_model fit_pca(const feature_matrix& train, int k) { return fit_pca_impl(train, k, true); }

pca_model fit_pca(const Eigen::MatrixXd& x, int k, bool standardize) {
  feature_matrix m;
  for (Eigen::Index c = 0; c < x.cols(); ++c) m.columns.push_back({"c" + std::to_string(c), feature_family::texture});
  m.rows = static_cast<std::size_t>(x.rows());
  m.values.resize(m.rows * m.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) m.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = x(r, c);
  return fit_pca_impl(m, k, standardize);
}

// ---------------------------------------------------------------------------

namespace {

// Row-normalized copy of a point set; zero-norm rows are marked.
struct unit_rows {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> u;
  std::vector<std::uint8_t> zero;
  std::size_t nonzero = 0;

  explicit unit_rows(const Eigen::MatrixXd& m)
      : n(static_cast<std::size_t>(m.rows())), dim(static_cast<std::size_t>(m.cols())), u(n * dim), zero(n, 0) {
    for (std::size_t r = 0; r < n; ++r) {
      const double norm = m.row(static_cast<Eigen::Index>(r)).norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) {
        zero[r] = 1;
        continue;
      }
      ++nonzero;
      for (std::size_t c = 0; c < dim; ++c)
        u[r * dim + c] = m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) / norm;
    }
  }
  [[nodiscard]] double cosine_distance(const unit_rows& o, std::size_t i, std::size_t j) const {
    double dot = 0.0;
    for (std::size_t c = 0; c < dim; ++c) dot += u[i * dim + c] * o.u[j * o.dim + c];
    return std::clamp(1.0 - dot, 0.0, 2.0);
  }
};

// Draws pairs (ia[s], ib[t]) uniformly. Indices refer to original rows, so
// with `alias` a row is never paired with itself even if resampled twice.
pair_sample draw_pairs(const unit_rows& a, std::span<const std::size_t> ia, const unit_rows& b,
                       std::span<const std::size_t> ib, std::size_t n_pairs, rng& g, bool alias) {
  pair_sample out;
  out.distances.reserve(n_pairs);
  const std::size_t max_attempts = 1000 * n_pairs + 10000;
  std::size_t attempts = 0;
  while (out.distances.size() < n_pairs) {
    if (++attempts > max_attempts) throw validation_error("cannot draw valid vector pairs (degenerate point sets)");
    const std::size_t i = ia[g.below(ia.size())];
    const std::size_t j = ib[g.below(ib.size())];
    if (alias && i == j) continue;
    if (a.zero[i] || b.zero[j]) {
      ++out.redraws;
      continue;
    }
    out.distances.push_back(a.cosine_distance(b, i, j));
  }
  return out;
}

void check_drawable(const unit_rows& a, const unit_rows& b, bool alias) {
  if (a.n == 0 || b.n == 0) throw argument_error("pair distribution needs nonempty point sets");
  if (a.dim != b.dim) throw argument_error("pair distribution: dimension mismatch");
  if (a.nonzero == 0 || b.nonzero == 0) throw validation_error("all vectors have zero norm");
  if (alias && a.nonzero < 2) throw validation_error("an aliased set needs two nonzero vectors to form a pair");
}

}  // namespace

pair_sample cosine_pair_distribution(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, std::size_t n_pairs,
                                     std::uint64_t seed, bool alias) {
  const unit_rows ua(a);
  const unit_rows ub = alias ? ua : unit_rows(b);
  check_drawable(ua, ub, alias);
  std::vector<std::size_t> ia(ua.n), ib(ub.n);
  std::iota(ia.begin(), ia.end(), std::size_t{0});
  std::iota(ib.begin(), ib.end(), std::size_t{0});
  rng g(split_seed(seed, streams::pairs));
  return draw_pairs(ua, ia, ub, ib, n_pairs, g, alias);
}

double ks_statistic(std::span<const double> u, std::span<const double> v) {
  if (u.empty() || v.empty()) throw argument_error("KS statistic needs two nonempty samples");
  std::vector<double> a(u.begin(), u.end()), b(v.begin(), v.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

// ---------------------------------------------------------------------------

ranking_summary ranking_result::summary() const {
  return {ks_mean, ks_std, static_cast<int>(replicates.size()), static_cast<int>(n_pairs), k};
}

ranking_result ranking_metric(const feature_matrix& train, const feature_matrix& gen, const ranking_options& opts) {
  if (train.columns != gen.columns) throw validation_error("training and generated feature schemas differ");
  if (gen.rows == 0) throw argument_error("generated feature matrix is empty");
  if (opts.n_pairs == 0 || opts.n_boot == 0) throw argument_error("n_pairs and n_boot must be positive");
  const auto pca = fit_pca(train, opts.k);
  const unit_rows ut(pca.project(train));
  const unit_rows ug(pca.project(gen));
  check_drawable(ut, ut, true);
  check_drawable(ut, ug, false);

  ranking_result res;
  res.k = pca.k();
  res.n_pairs = opts.n_pairs;
  res.dropped_columns = pca.dropped;
  res.replicates.assign(opts.n_boot, 0.0);
  parallel_for(opts.n_boot, resolve_threads(opts.threads), [&](std::size_t b) {
    rng g(split_seed(opts.seed, streams::bootstrap, b));
    std::vector<std::size_t> it(ut.n), ig(ug.n);
    for (auto& i : it) i = g.below(ut.n);
    for (auto& i : ig) i = g.below(ug.n);
    const auto rr = draw_pairs(ut, it, ut, it, opts.n_pairs, g, true);
    const auto rg = draw_pairs(ut, it, ug, ig, opts.n_pairs, g, false);
    res.replicates[b] = ks_statistic(rr.distances, rg.distances);
  });
  double sum = 0.0;
  for (const double v : res.replicates) sum += v;
  res.ks_mean = sum / static_cast<double>(opts.n_boot);
  double ss = 0.0;
  for (const double v : res.replicates) ss += (v - res.ks_mean) * (v - res.ks_mean);
  res.ks_std = opts.n_boot > 1 ? std::sqrt(ss / static_cast<double>(opts.n_boot - 1)) : 0.0;
  return res;
}

ranking_result per_family_metric(const feature_matrix& train, const feature_matrix& gen, feature_family family,
                                 const ranking_options& opts) {
  const auto t = train.select_family(family);
  if (t.cols() == 0) throw argument_error("feature family " + std::string(to_string(family)) + " is not in the schema");
  const auto usable = static_cast<int>(usable_column_count(t));
  if (usable == 0)
    throw validation_error("feature family " + std::string(to_string(family)) + " has no usable columns");
  auto o = opts;
  o.k = std::min(opts.k, usable);
  return ranking_metric(t, gen.select_family(family), o);
}

ranking_result public_metric(const feature_matrix& train, const feature_matrix& gen, const ranking_options& opts) {
  std::vector<std::size_t> keep;
  for (const auto& name : public_metric_columns()) {
    const auto c = train.column_index(name);
    if (!c) throw validation_error("public metric column " + name + " missing from the feature schema");
    keep.push_back(*c);
  }
  const auto t = train.select_columns(keep);
  auto o = opts;
  o.k = std::min(opts.k, static_cast<int>(usable_column_count(t)));
  if (o.k < 1) throw validation_error("public metric columns are all constant");
  return ranking_metric(t, gen.select_columns(keep), o);
}

// ---------------------------------------------------------------------------

gaussian_fit fit_gaussian(const Eigen::MatrixXd& rows) {
  if (rows.rows() < 2) throw argument_error("a Gaussian fit needs at least two rows");
  gaussian_fit g;
  g.mean = rows.colwise().mean().transpose();
  const Eigen::MatrixXd c = rows.rowwise() - g.mean.transpose();
  g.covariance = (c.transpose() * c) / static_cast<double>(rows.rows() - 1);
  return g;
}

gaussian_fit fit_gaussian(const embedding_matrix& e) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(e.rows), static_cast<Eigen::Index>(e.cols));
  for (std::size_t r = 0; r < e.rows; ++r)
    for (std::size_t c = 0; c < e.cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = static_cast<double>(e.at(r, c));
  return fit_gaussian(m);
}

namespace {

// Eigen-decomposition of a symmetric PSD matrix with small negative
// eigenvalues clipped to zero.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m, const char* what,
                                                        Eigen::VectorXd& values) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw validation_error(std::string("eigendecomposition failed for ") + what);
  values = es.eigenvalues();
  const double tol = 1e-8 * std::max(1.0, values.cwiseAbs().maxCoeff());
  if (values.minCoeff() < -tol) throw validation_error(std::string(what) + " is not positive semidefinite");
  values = values.cwiseMax(0.0);
  return es;
}

}  // namespace

double frechet_distance(const gaussian_fit& a, const gaussian_fit& b) {
  const auto n = a.mean.size();
  if (b.mean.size() != n || a.covariance.rows() != n || a.covariance.cols() != n || b.covariance.rows() != n ||
      b.covariance.cols() != n)
    throw argument_error("Frechet distance: dimension mismatch");
  Eigen::VectorXd la, lm;
  const auto ea = psd_eigen(a.covariance, "first covariance", la);
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * la.cwiseSqrt().asDiagonal() * ea.eigenvectors().transpose();
  const Eigen::MatrixXd sb = 0.5 * (b.covariance + b.covariance.transpose());
  psd_eigen(sb, "second covariance", lm);
  // sqrt(A) B sqrt(A) is symmetric and shares its spectrum with A B.
  psd_eigen(sqrt_a * sb * sqrt_a, "covariance product", lm);
  const double tr_sqrt = lm.cwiseSqrt().sum();
  const double tr = a.covariance.trace() + sb.trace();
  const double d = (a.mean - b.mean).squaredNorm() + tr - 2.0 * tr_sqrt;
  if (d < 0.0) {
    if (d < -1e-6 * std::max(1.0, tr)) throw validation_error("Frechet distance came out negative");
    return 0.0;
  }
  return d;
}

// ---------------------------------------------------------------------------

density_coverage_result density_coverage(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, int k_nn) {
  if (k_nn < 1) throw argument_error("k_nn must be positive");
  if (real.rows() <= k_nn || fake.rows() <= k_nn)
    throw argument_error("density/coverage needs more than k_nn points in each set");
  if (real.cols() != fake.cols()) throw argument_error("density/coverage: dimension mismatch");
  const auto nr = real.rows(), nf = fake.rows();
  // Squared distance from each real point to its k-th nearest real neighbour.
  std::vector<double> radius2(static_cast<std::size_t>(nr));
  std::vector<double> d2(static_cast<std::size_t>(nr - 1));
  for (Eigen::Index i = 0; i < nr; ++i) {
    std::size_t t = 0;
    for (Eigen::Index j = 0; j < nr; ++j)
      if (j != i) d2[t++] = (real.row(i) - real.row(j)).squaredNorm();
    std::nth_element(d2.begin(), d2.begin() + (k_nn - 1), d2.end());
    radius2[static_cast<std::size_t>(i)] = d2[static_cast<std::size_t>(k_nn - 1)];
  }
  std::size_t inside = 0, covered = 0;
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(nr), 0);
  for (Eigen::Index f = 0; f < nf; ++f) {
    for (Eigen::Index i = 0; i < nr; ++i) {
      if ((fake.row(f) - real.row(i)).squaredNorm() < radius2[static_cast<std::size_t>(i)]) {
        ++inside;
        hit[static_cast<std::size_t>(i)] = 1;
      }
    }
  }
  for (const auto h : hit) covered += h;
  return {static_cast<double>(inside) / (static_cast<double>(k_nn) * static_cast<double>(nf)),
          static_cast<double>(covered) / static_cast<double>(nr)};
}

}  // namespace dgmeval
