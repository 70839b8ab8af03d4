#pragma once

// Small dense complex linear algebra for the closed-form beamformers.
// Everything here is double precision.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "fairbf/error.hpp"

namespace fairbf {

using cplx = std::complex<double>;

// Complex column vector (channel or beamformer coefficients).
class CVec {
 public:
  CVec() = default;
  explicit CVec(std::size_t n) : v_(n, cplx{0.0, 0.0}) {}
  CVec(std::initializer_list<cplx> init) : v_(init) {}
  explicit CVec(std::vector<cplx> v) : v_(std::move(v)) {}

  std::size_t size() const noexcept { return v_.size(); }
  bool empty() const noexcept { return v_.empty(); }

  cplx& operator[](std::size_t i) { return v_[i]; }
  const cplx& operator[](std::size_t i) const { return v_[i]; }

  auto begin() noexcept { return v_.begin(); }
  auto end() noexcept { return v_.end(); }
  auto begin() const noexcept { return v_.begin(); }
  auto end() const noexcept { return v_.end(); }

  std::span<const cplx> view() const noexcept { return v_; }
  const std::vector<cplx>& values() const noexcept { return v_; }

  double squared_norm() const noexcept {
    double s = 0.0;
    for (const auto& z : v_) s += std::norm(z);
    return s;
  }
  double norm() const noexcept { return std::sqrt(squared_norm()); }

  CVec& operator*=(cplx s) {
    for (auto& z : v_) z *= s;
    return *this;
  }

  friend bool operator==(const CVec&, const CVec&) = default;

 private:
  std::vector<cplx> v_;
};

inline CVec operator*(cplx s, CVec v) {
  v *= s;
  return v;
}

// Unit-norm copy. Caller guarantees a nonzero vector.
inline CVec normalized(const CVec& v) {
  const double n = v.norm();
  if (!(n > 0.0)) throw DimensionError("cannot normalize a zero vector");
  return (1.0 / n) * v;
}

// Hermitian matrix, dense row-major storage.
class HermMat {
 public:
  HermMat() = default;
  explicit HermMat(std::size_t dim) : dim_(dim), a_(dim * dim, cplx{}) {}

  static HermMat identity(std::size_t dim, double scale = 1.0) {
    HermMat m(dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = scale;
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }
  cplx& operator()(std::size_t i, std::size_t j) { return a_[i * dim_ + j]; }
  const cplx& operator()(std::size_t i, std::size_t j) const {
    return a_[i * dim_ + j];
  }

  CVec apply(const CVec& x) const {
    if (x.size() != dim_)
      throw DimensionError(detail::concat("matrix of dim ", dim_,
                                          " applied to vector of length ",
                                          x.size()));
    CVec y(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
      cplx acc{};
      for (std::size_t j = 0; j < dim_; ++j) acc += (*this)(i, j) * x[j];
      y[i] = acc;
    }
    return y;
  }

  // Largest |A_ij - conj(A_ji)|.
  double hermitian_defect() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < dim_; ++i)
      for (std::size_t j = 0; j < dim_; ++j)
        worst = std::max(worst, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
    return worst;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<cplx> a_;
};

// sum_i conj(a_i) * b_i
inline cplx hdot(const CVec& a, const CVec& b) {
  if (a.size() != b.size())
    throw DimensionError(detail::concat("hdot: length mismatch ", a.size(),
                                        " vs ", b.size()));
  cplx acc{};
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::conj(a[i]) * b[i];
  return acc;
}

// sum_l w_l * v_l v_l^H + ridge * I. Hermitian by construction: the lower
// triangle is written as the conjugate of the upper one.
inline HermMat rank1_accumulate(std::span<const CVec> vectors,
                                std::span<const double> weights, double ridge,
                                std::size_t dim) {
  if (vectors.size() != weights.size())
    throw DimensionError(detail::concat("rank1_accumulate: ", vectors.size(),
                                        " vectors but ", weights.size(),
                                        " weights"));
  if (ridge < 0.0) throw DimensionError("rank1_accumulate: negative ridge");
  HermMat m = HermMat::identity(dim, ridge);
  for (std::size_t l = 0; l < vectors.size(); ++l) {
    const CVec& v = vectors[l];
    if (v.size() != dim)
      throw DimensionError(detail::concat("rank1_accumulate: vector ", l,
                                          " has length ", v.size(),
                                          ", expected ", dim));
    const double w = weights[l];
    if (w < 0.0) throw DimensionError("rank1_accumulate: negative weight");
    for (std::size_t i = 0; i < dim; ++i) {
      m(i, i) += w * std::norm(v[i]);
      for (std::size_t j = i + 1; j < dim; ++j) {
        const cplx z = w * v[i] * std::conj(v[j]);
        m(i, j) += z;
      }
    }
  }
  for (std::size_t i = 0; i < dim; ++i) {
    m(i, i) = cplx{m(i, i).real(), 0.0};
    for (std::size_t j = i + 1; j < dim; ++j) m(j, i) = std::conj(m(i, j));
  }
  return m;
}

inline HermMat rank1_accumulate(std::span<const CVec> vectors,
                                std::span<const double> weights, double ridge) {
  if (vectors.empty())
    throw DimensionError("rank1_accumulate: dimension unknown for empty input");
  return rank1_accumulate(vectors, weights, ridge, vectors.front().size());
}

// Lower-triangular Cholesky factor A = L L^H.
class Cholesky {
 public:
  explicit Cholesky(const HermMat& a) : n_(a.dim()), l_(a.dim() * a.dim()) {
    for (std::size_t j = 0; j < n_; ++j) {
      double d = a(j, j).real();
      for (std::size_t k = 0; k < j; ++k) d -= std::norm(at(j, k));
      if (!(d > 0.0) || !std::isfinite(d)) throw FactorizationError(j, d);
      const double ljj = std::sqrt(d);
      at(j, j) = ljj;
      for (std::size_t i = j + 1; i < n_; ++i) {
        cplx s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= at(i, k) * std::conj(at(j, k));
        at(i, j) = s / ljj;
      }
    }
  }

  std::size_t dim() const noexcept { return n_; }

  // Diagonal of L; its spread bounds the condition number from below.
  double diag(std::size_t i) const { return l_[i * n_ + i].real(); }

  CVec solve(const CVec& b) const {
    if (b.size() != n_)
      throw DimensionError(detail::concat("pd_solve: matrix dim ", n_,
                                          " vs rhs length ", b.size()));
    CVec y(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      cplx s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= at(i, k) * y[k];
      y[i] = s / at(i, i);
    }
    CVec x(n_);
    for (std::size_t ii = n_; ii-- > 0;) {
      cplx s = y[ii];
      for (std::size_t k = ii + 1; k < n_; ++k) s -= std::conj(at(k, ii)) * x[k];
      x[ii] = s / at(ii, ii).real();
    }
    return x;
  }

 private:
  cplx& at(std::size_t i, std::size_t j) { return l_[i * n_ + j]; }
  const cplx& at(std::size_t i, std::size_t j) const { return l_[i * n_ + j]; }

  std::size_t n_;
  std::vector<cplx> l_;
};

inline CVec pd_solve(const HermMat& a, const CVec& b) {
  return Cholesky(a).solve(b);
}

}  // namespace fairbf
