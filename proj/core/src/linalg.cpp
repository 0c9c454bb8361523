// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlora/linalg.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fedlora {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMajor>;
using View = Eigen::Map<RowMajor>;

ConstView view(const DenseMatrix& m) { return ConstView(m.data().data(), m.rows(), m.cols()); }
View view(DenseMatrix& m) { return View(m.data().data(), m.rows(), m.cols()); }

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ContractViolation(std::string(op) + ": shape mismatch " + describe_shape(a) + " vs " +
                            describe_shape(b));
  }
}

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

__extension__ using u128 = unsigned __int128;

}  // namespace

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

DenseMatrix::DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ContractViolation("DenseMatrix: data length " + std::to_string(data_.size()) +
                            " does not match " + std::to_string(rows_) + "x" +
                            std::to_string(cols_));
  }
}

DenseMatrix DenseMatrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("DenseMatrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return DenseMatrix(r, c, std::move(data));
}

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::column(std::size_t c) const { return columns(c, 1); }

DenseMatrix DenseMatrix::columns(std::size_t begin, std::size_t count) const {
  if (begin + count > cols_) throw ContractViolation("DenseMatrix::columns: out of range");
  DenseMatrix out(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < count; ++c) out(r, c) = (*this)(r, begin + c);
  }
  return out;
}

bool DenseMatrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& other) {
  require_same_shape(*this, other, "operator+=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& other) {
  require_same_shape(*this, other, "operator-=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

DenseMatrix& DenseMatrix::axpy(double s, const DenseMatrix& other) {
  require_same_shape(*this, other, "axpy");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * other.data_[i];
  return *this;
}

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b) { return a += b; }
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b) { return a -= b; }
DenseMatrix operator*(double s, DenseMatrix a) { return a *= s; }

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ContractViolation("matmul: " + describe_shape(a) + " x " + describe_shape(b));
  }
  DenseMatrix out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b);
  return out;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ContractViolation("matmul_tn: " + describe_shape(a) + "^T x " + describe_shape(b));
  }
  DenseMatrix out(a.cols(), b.cols());
  if (a.rows() == 0) return out;
  view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ContractViolation("matmul_nt: " + describe_shape(a) + " x " + describe_shape(b) + "^T");
  }
  DenseMatrix out(a.rows(), b.rows());
  if (a.cols() == 0) return out;
  view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
  DenseMatrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  }
  return out;
}

DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "hadamard");
  DenseMatrix out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bd[i];
  return out;
}

double frobenius_norm(const DenseMatrix& a) noexcept {
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

double max_abs(const DenseMatrix& a) noexcept {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) m = std::max(m, std::abs(ad[i] - bd[i]));
  return m;
}

std::string describe_shape(const DenseMatrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

// ---------------------------------------------------------------------------

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t master_seed, StreamId id) noexcept
    : master_seed_(master_seed), id_(id) {
  std::uint64_t k = mix64(master_seed + kGolden);
  k = mix64(k ^ (static_cast<std::uint64_t>(id.kind) * 0xd1b54a32d192ed03ULL));
  k = mix64(k ^ (id.entity + 0x8cb92ba72f3d8dd7ULL));
  k = mix64(k ^ (id.round * 0xaef17502108ef2d9ULL + 0x2545f4914f6cdd1dULL));
  key_ = k;
}

std::uint64_t RngStream::next_u64() noexcept {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RngStream::uniform() noexcept {
  // (u + 0.5) / 2^53 lies strictly inside (0, 1).
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_index(std::uint64_t bound) noexcept {
  // Lemire's multiply-shift with rejection; unbiased.
  std::uint64_t x = next_u64();
  u128 m = static_cast<u128>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = next_u64();
      m = static_cast<u128>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double RngStream::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(theta);
  has_spare_ = true;
  return radius * std::cos(theta);
}

double RngStream::gamma(double shape) noexcept {
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a)
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = 0.0;
    double v = 0.0;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, RngStream& rng) {
  if (!(sigma >= 0.0)) throw ContractViolation("gaussian_matrix: sigma must be >= 0");
  DenseMatrix out(rows, cols);
  for (double& v : out.data()) {
    const double z = rng.normal();
    v = sigma == 0.0 ? 0.0 : sigma * z;
  }
  return out;
}

}  // namespace fedlora
