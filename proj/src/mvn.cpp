/*
 * Licensed under the Apache License Version 2.0. See LICENSE file in the
 * project root for license information.
 */
#include "qeikit/mvn.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "qeikit/normal.hpp"

namespace qeikit {

namespace {

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace

SpdMatrix::SpdMatrix(Matrix m) {
  if (m.rows() != m.cols()) throw ContractError("SpdMatrix: not square");
  const int p = static_cast<int>(m.rows());
  if (p > 0) {
    double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-12 * scale)
      throw ContractError("SpdMatrix: matrix not symmetric");
  }
  mat_ = symmetrized(m);
  if (p == 0) {
    chol_.resize(0, 0);
    return;
  }
  Eigen::LLT<Matrix> llt(mat_);
  if (llt.info() != Eigen::Success) {
    jitter_ = 1e-10 * mat_.diagonal().mean();
    if (!(jitter_ > 0.0)) jitter_ = 1e-300;
    mat_.diagonal().array() += jitter_;
    llt.compute(mat_);
    if (llt.info() != Eigen::Success)
      throw DegenerateCovariance("SpdMatrix: not PD after jitter");
  }
  chol_ = llt.matrixL();
}

Vector SpdMatrix::solve(const Vector& b) const {
  Vector y = chol_.triangularView<Eigen::Lower>().solve(b);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

Matrix SpdMatrix::solve(const Matrix& b) const {
  Matrix y = chol_.triangularView<Eigen::Lower>().solve(b);
  return chol_.transpose().triangularView<Eigen::Upper>().solve(y);
}

double SpdMatrix::log_det() const {
  return 2.0 * chol_.diagonal().array().log().sum();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace qeikit

namespace qeikit::mvn {

namespace {

constexpr double kTailCut = 37.5;  // standardized limit treated as +-infinity

// Sobol sequence setup for up to 24 integration dimensions: primitive
// polynomials and Joe-Kuo initial direction numbers.
constexpr int kSobolDims = 24;
constexpr int kSobolBits = 31;
const unsigned kSobolPoly[kSobolDims] = {1,  3,  7,   11,  13,  19,  25,  37,
                                         41, 47, 55,  59,  61,  67,  91,  97,
                                         103, 109, 115, 131, 137, 143, 145, 157};
const unsigned kSobolVinit[kSobolDims][8] = {
    {1, 0, 0, 0, 0, 0, 0, 0},    {1, 0, 0, 0, 0, 0, 0, 0},
    {1, 3, 0, 0, 0, 0, 0, 0},    {1, 3, 1, 0, 0, 0, 0, 0},
    {1, 1, 1, 0, 0, 0, 0, 0},    {1, 1, 3, 3, 0, 0, 0, 0},
    {1, 3, 5, 13, 0, 0, 0, 0},   {1, 1, 5, 5, 17, 0, 0, 0},
    {1, 1, 5, 5, 5, 0, 0, 0},    {1, 1, 7, 11, 19, 0, 0, 0},
    {1, 1, 5, 1, 1, 0, 0, 0},    {1, 1, 1, 3, 11, 0, 0, 0},
    {1, 3, 5, 5, 31, 0, 0, 0},   {1, 3, 3, 9, 7, 49, 0, 0},
    {1, 1, 1, 15, 21, 21, 0, 0}, {1, 3, 1, 13, 27, 49, 0, 0},
    {1, 1, 1, 15, 7, 5, 0, 0},   {1, 3, 1, 15, 13, 25, 0, 0},
    {1, 1, 5, 5, 19, 61, 0, 0},  {1, 3, 7, 11, 23, 15, 103, 0},
    {1, 3, 7, 13, 13, 15, 69, 0}, {1, 1, 3, 13, 7, 35, 63, 0},
    {1, 3, 5, 9, 1, 25, 53, 0},  {1, 3, 1, 13, 9, 35, 107, 0}};

// Unscrambled direction numbers, fixed point with kSobolBits fraction bits.
std::vector<std::vector<std::uint32_t>> sobol_directions(int dims) {
  std::vector<std::vector<std::uint32_t>> v(dims,
                                            std::vector<std::uint32_t>(kSobolBits));
  for (int j = 0; j < dims; ++j) {
    unsigned poly = kSobolPoly[j];
    int deg = 0;
    while ((1u << (deg + 1)) <= poly) ++deg;
    std::vector<std::uint32_t> m(kSobolBits);
    if (deg == 0) {
      for (int k = 0; k < kSobolBits; ++k) m[k] = 1;  // van der Corput
    } else {
      for (int k = 0; k < deg; ++k) m[k] = kSobolVinit[j][k];
      for (int k = deg; k < kSobolBits; ++k) {
        std::uint32_t x = m[k - deg] ^ (m[k - deg] << deg);
        for (int i = 1; i < deg; ++i)
          if ((poly >> (deg - i)) & 1u) x ^= m[k - i] << i;
        m[k] = x;
      }
    }
    for (int k = 0; k < kSobolBits; ++k) v[j][k] = m[k] << (kSobolBits - 1 - k);
  }
  return v;
}

// One randomized Sobol stream: Matousek linear matrix scramble plus digital
// shift, generated in Gray-code order so point sets extend across levels.
class SobolStream {
 public:
  SobolStream(const std::vector<std::vector<std::uint32_t>>& raw,
              std::mt19937_64& rng) {
    const int dims = static_cast<int>(raw.size());
    v_.assign(dims, std::vector<std::uint32_t>(kSobolBits));
    shift_.resize(dims);
    state_.assign(dims, 0);
    std::vector<std::uint32_t> rows(kSobolBits);
    for (int j = 0; j < dims; ++j) {
      for (int i = 0; i < kSobolBits; ++i) {
        std::uint32_t row = 1u << (kSobolBits - 1 - i);
        row |= (static_cast<std::uint32_t>(rng()) << (kSobolBits - i)) &
               0x7FFFFFFFu;
        rows[i] = row;
      }
      for (int k = 0; k < kSobolBits; ++k) {
        std::uint32_t out = 0;
        for (int i = 0; i < kSobolBits; ++i) {
          unsigned bit = __builtin_popcount(rows[i] & raw[j][k]) & 1u;
          out |= bit << (kSobolBits - 1 - i);
        }
        v_[j][k] = out;
      }
      shift_[j] = static_cast<std::uint32_t>(rng()) & 0x7FFFFFFFu;
    }
  }

  // Writes the next point into `u` (length = dims).
  void next(double* u) {
    if (index_ > 0) {
      std::uint64_t t = index_ - 1;
      int c = 0;
      while (t & 1) {
        ++c;
        t >>= 1;
      }
      for (std::size_t j = 0; j < state_.size(); ++j) state_[j] ^= v_[j][c];
    }
    ++index_;
    for (std::size_t j = 0; j < state_.size(); ++j)
      u[j] = std::ldexp(static_cast<double>(state_[j] ^ shift_[j]),
                        -kSobolBits);
  }

 private:
  std::vector<std::vector<std::uint32_t>> v_;
  std::vector<std::uint32_t> shift_;
  std::vector<std::uint32_t> state_;
  std::uint64_t index_ = 0;
};

struct OrderedProblem {
  Vector b;  // standardized limits, integration order
  Matrix L;  // Cholesky factor of the reordered correlation matrix
};

// Greedy variable ordering: at each step pick the coordinate with the
// smallest conditional probability, then extend the Cholesky factor using
// truncated-normal expected values for the conditioning variables.
OrderedProblem order_and_factor(Vector b, Matrix c) {
  const int p = static_cast<int>(b.size());
  Matrix L = Matrix::Zero(p, p);
  Vector y = Vector::Zero(p);
  for (int j = 0; j < p; ++j) {
    int best = j;
    double best_beta = 0.0;
    for (int i = j; i < p; ++i) {
      double s2 = c(i, i);
      for (int l = 0; l < j; ++l) s2 -= L(i, l) * L(i, l);
      double denom = std::sqrt(std::max(s2, 1e-20));
      double num = b[i];
      for (int l = 0; l < j; ++l) num -= L(i, l) * y[l];
      double beta = num / denom;
      if (i == j || beta < best_beta) {
        best = i;
        best_beta = beta;
      }
    }
    if (best != j) {
      std::swap(b[j], b[best]);
      c.row(j).swap(c.row(best));
      c.col(j).swap(c.col(best));
      L.row(j).head(j).swap(L.row(best).head(j));
    }
    double s2 = c(j, j);
    for (int l = 0; l < j; ++l) s2 -= L(j, l) * L(j, l);
    L(j, j) = std::sqrt(std::max(s2, 1e-20));
    for (int i = j + 1; i < p; ++i) {
      double v = c(i, j);
      for (int l = 0; l < j; ++l) v -= L(i, l) * L(j, l);
      L(i, j) = v / L(j, j);
    }
    double beta = b[j];
    for (int l = 0; l < j; ++l) beta -= L(j, l) * y[l];
    beta /= L(j, j);
    y[j] = truncated_upper_mean(beta);
  }
  return {std::move(b), std::move(L)};
}

// Adds `n` integrand evaluations from `st` to `sum`.
void sweep(const OrderedProblem& prob, SobolStream& st, long long n, double d0,
           double& sum) {
  const int p = static_cast<int>(prob.b.size());
  const int dims = p - 1;
  std::vector<double> u(dims), ys(dims);
  for (long long t = 0; t < n; ++t) {
    st.next(u.data());
    double f = d0;
    double d_prev = d0;
    for (int l = 1; l < p; ++l) {
      double uc = u[l - 1] * d_prev;
      uc = std::min(std::max(uc, 1e-300), 1.0 - 1e-16);
      ys[l - 1] = norm_quantile(uc);
      double beta = prob.b[l];
      for (int s = 0; s < l; ++s) beta -= prob.L(l, s) * ys[s];
      beta /= prob.L(l, l);
      d_prev = norm_cdf(beta);
      f *= d_prev;
    }
    sum += f;
  }
}

CdfResult genz_qmc(const Vector& b, const Matrix& corr, double abs_tol,
                   std::uint64_t seed, long long max_evals) {
  const int p = static_cast<int>(b.size());
  OrderedProblem prob = order_and_factor(b, corr);
  const int dims = p - 1;
  if (dims > kSobolDims)
    throw ContractError("mvn_cdf: dimension above supported limit");
  const double d0 = norm_cdf(prob.b[0] / prob.L(0, 0));
  if (d0 <= 0.0) return {0.0, 0.0, 0};

  constexpr int kShifts = 8;
  std::mt19937_64 rng(seed);
  auto raw = sobol_directions(dims);
  std::vector<SobolStream> streams;
  streams.reserve(kShifts);
  for (int m = 0; m < kShifts; ++m) streams.emplace_back(raw, rng);

  if (max_evals <= 0) max_evals = 1LL << 22;
  std::vector<double> sums(kShifts, 0.0);
  long long n_done = 0, evals = 0;
  long long target = 64;
  double value = 0.0, err = 0.0;
  while (true) {
    for (int m = 0; m < kShifts; ++m) {
      sweep(prob, streams[m], target - n_done, d0, sums[m]);
      evals += target - n_done;
    }
    n_done = target;
    double mean = 0.0;
    for (double s : sums) mean += s / static_cast<double>(n_done);
    mean /= kShifts;
    double var = 0.0;
    for (double s : sums) {
      double d = s / static_cast<double>(n_done) - mean;
      var += d * d;
    }
    var /= (kShifts - 1);
    value = mean;
    err = 3.0 * std::sqrt(var / kShifts);
    if (err <= abs_tol || evals >= max_evals) break;
    target *= 2;
  }
  return {std::min(1.0, std::max(0.0, value)), err, evals};
}

}  // namespace

CdfResult mvn_cdf(const Vector& x, const SpdMatrix& sigma,
                  const CdfContext& ctx) {
  const int p = sigma.dim();
  if (x.size() != p) throw ContractError("mvn_cdf: dimension mismatch");
  if (ctx.counter) ctx.counter->record(p);
  if (p == 0) return {1.0, 0.0, 0};

  // Standardize and strip coordinates whose limits are effectively infinite.
  Vector sd = sigma.mat().diagonal().cwiseSqrt();
  std::vector<int> keep;
  keep.reserve(p);
  for (int i = 0; i < p; ++i) {
    double bi = x[i] / sd[i];
    if (bi <= -kTailCut) return {0.0, 0.0, 0};
    if (bi < kTailCut) keep.push_back(i);
  }
  const int m = static_cast<int>(keep.size());
  if (m == 0) return {1.0, 0.0, 0};
  Vector b(m);
  Matrix corr(m, m);
  for (int i = 0; i < m; ++i) {
    b[i] = x[keep[i]] / sd[keep[i]];
    for (int j = 0; j < m; ++j)
      corr(i, j) = sigma.mat()(keep[i], keep[j]) / (sd[keep[i]] * sd[keep[j]]);
  }
  if (m == 1) return {norm_cdf(b[0]), 0.0, 1};
  if (m == 2) {
    double r = std::min(1.0, std::max(-1.0, corr(0, 1)));
    return {bvn_cdf(b[0], b[1], r), 0.0, 1};
  }
  long long cap = 0;
  return genz_qmc(b, corr, ctx.abs_tol, ctx.seed, cap);
}

ConditionalSlice condition_out(const SpdMatrix& sigma,
                               const std::vector<int>& indices) {
  const int p = sigma.dim();
  const int m = static_cast<int>(indices.size());
  if (m < 1 || m > 2) throw ContractError("condition_out: pin one or two");
  for (int idx : indices)
    if (idx < 0 || idx >= p) throw ContractError("condition_out: bad index");
  if (m == 2 && indices[0] == indices[1])
    throw ContractError("condition_out: repeated index");
  std::vector<int> pinned = indices;
  std::sort(pinned.begin(), pinned.end());
  std::vector<int> rest;
  rest.reserve(p - m);
  for (int i = 0; i < p; ++i)
    if (std::find(pinned.begin(), pinned.end(), i) == pinned.end())
      rest.push_back(i);

  const Matrix& s = sigma.mat();
  Matrix spp(m, m), srp(p - m, m), srr(p - m, p - m);
  for (int a = 0; a < m; ++a)
    for (int c = 0; c < m; ++c) spp(a, c) = s(pinned[a], pinned[c]);
  for (int a = 0; a < static_cast<int>(rest.size()); ++a) {
    for (int c = 0; c < m; ++c) srp(a, c) = s(rest[a], pinned[c]);
    for (int c = 0; c < static_cast<int>(rest.size()); ++c)
      srr(a, c) = s(rest[a], rest[c]);
  }
  Matrix w;
  if (m == 1) {
    if (spp(0, 0) <= 0.0)
      throw DegenerateCovariance("condition_out: zero pinned variance");
    w = srp / spp(0, 0);
  } else {
    double det = spp(0, 0) * spp(1, 1) - spp(0, 1) * spp(1, 0);
    if (det <= 0.0 || spp(0, 0) <= 0.0)
      throw DegenerateCovariance("condition_out: singular pinned block");
    Matrix inv(2, 2);
    inv << spp(1, 1), -spp(0, 1), -spp(1, 0), spp(0, 0);
    w = srp * inv / det;
  }
  Matrix reduced = srr - w * srp.transpose();
  return {pinned, std::move(w), SpdMatrix(symmetrized(reduced))};
}

Vector mvn_cdf_grad(const Vector& x, const SpdMatrix& sigma,
                    const CdfContext& ctx) {
  const int p = sigma.dim();
  if (x.size() != p) throw ContractError("mvn_cdf_grad: dimension mismatch");
  if (p < 1) throw ContractError("mvn_cdf_grad: empty problem");
  Vector g(p);
  for (int i = 0; i < p; ++i) {
    double s2 = sigma.mat()(i, i);
    double dens = norm_pdf_var(x[i], s2);
    ConditionalSlice slice = condition_out(sigma, {i});
    Vector arg(p - 1);
    for (int a = 0; a < p - 1; ++a) {
      int r = a < i ? a : a + 1;
      arg[a] = x[r] - slice.weights(a, 0) * x[i];
    }
    g[i] = dens * mvn_cdf(arg, slice.reduced, ctx).value;
  }
  return g;
}

Matrix mvn_cdf_hessian(const Vector& x, const SpdMatrix& sigma,
                       const Vector& grad, const CdfContext& ctx) {
  const int p = sigma.dim();
  if (x.size() != p || grad.size() != p)
    throw ContractError("mvn_cdf_hessian: dimension mismatch");
  const Matrix& s = sigma.mat();
  Matrix h = Matrix::Zero(p, p);
  for (int i = 0; i < p; ++i) {
    for (int j = i + 1; j < p; ++j) {
      ConditionalSlice slice = condition_out(sigma, {i, j});
      Vector arg(p - 2);
      int a = 0;
      for (int r = 0; r < p; ++r) {
        if (r == i || r == j) continue;
        arg[a] = x[r] - slice.weights(a, 0) * x[i] - slice.weights(a, 1) * x[j];
        ++a;
      }
      double dens = bvn_pdf(x[i], x[j], s(i, i), s(i, j), s(j, j));
      double v = mvn_cdf(arg, slice.reduced, ctx).value;
      h(i, j) = h(j, i) = dens * v;
    }
  }
  for (int i = 0; i < p; ++i) {
    double acc = x[i] * grad[i];
    for (int j = 0; j < p; ++j)
      if (j != i) acc += s(i, j) * h(i, j);
    h(i, i) = -acc / s(i, i);
  }
  return h;
}

Matrix mvn_cdf_hessian(const Vector& x, const SpdMatrix& sigma,
                       const CdfContext& ctx) {
  return mvn_cdf_hessian(x, sigma, mvn_cdf_grad(x, sigma, ctx), ctx);
}

}  // namespace qeikit::mvn
