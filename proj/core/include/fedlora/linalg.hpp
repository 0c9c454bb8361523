// Copyright 2026 The fedlora Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedlora {

/// Raised when an operation is called with inputs that break its preconditions
/// (shape mismatch, zero rank, and so on).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Row-major dense matrix of doubles.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Nested-list construction, e.g. DenseMatrix::from_rows({{1, 0}, {0, 1}}).
  static DenseMatrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  /// Copy of column `c` as a (rows x 1) matrix.
  DenseMatrix column(std::size_t c) const;
  /// Columns [begin, begin + count) as a new matrix.
  DenseMatrix columns(std::size_t begin, std::size_t count) const;

  bool all_finite() const noexcept;
  bool same_shape(const DenseMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  DenseMatrix& operator+=(const DenseMatrix& other);
  DenseMatrix& operator-=(const DenseMatrix& other);
  DenseMatrix& operator*=(double s) noexcept;

  /// this += s * other
  DenseMatrix& axpy(double s, const DenseMatrix& other);

  friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

DenseMatrix operator+(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator-(DenseMatrix a, const DenseMatrix& b);
DenseMatrix operator*(double s, DenseMatrix a);

/// a * b. Throws ContractViolation when a.cols() != b.rows().
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
/// a^T * b without materializing the transpose.
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
/// a * b^T without materializing the transpose.
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);

DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix hadamard(const DenseMatrix& a, const DenseMatrix& b);
double frobenius_norm(const DenseMatrix& a) noexcept;
double max_abs(const DenseMatrix& a) noexcept;
/// max |a - b| over entries; shapes must agree.
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

std::string describe_shape(const DenseMatrix& m);

// ---------------------------------------------------------------------------
// Random streams
// ---------------------------------------------------------------------------

/// What a random stream is used for. Part of the stream key, so two purposes
/// never share a sequence even with equal indices.
enum class StreamKind : std::uint32_t {
  kAdapterInit = 1,
  kBatch = 2,
  kData = 3,
  kPartition = 4,
  kNetwork = 5,
  kMonteCarlo = 6,
  kTest = 7,
};

struct StreamId {
  StreamKind kind = StreamKind::kTest;
  std::uint64_t entity = 0;
  std::uint64_t round = 0;

  friend bool operator==(const StreamId&, const StreamId&) = default;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// Counter-based random stream. The n-th output is mix64(key + n * golden),
/// where key is a hash of (master_seed, kind, entity, round); there is no
/// other state, so any stream can be reconstructed from its id alone.
///
/// Normal deviates use the Box-Muller transform on two consecutive uniforms;
/// both outputs of a pair are consumed in order.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t master_seed, StreamId id) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return ~result_type{0}; }

  result_type operator()() noexcept { return next_u64(); }

  std::uint64_t next_u64() noexcept;
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform() noexcept;
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_index(std::uint64_t bound) noexcept;
  double normal() noexcept;
  /// Gamma(shape, 1) via Marsaglia-Tsang, with the shape < 1 boost.
  double gamma(double shape) noexcept;

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  const StreamId& id() const noexcept { return id_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t master_seed_;
  StreamId id_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// i.i.d. N(0, sigma^2) entries drawn row-major from `rng`.
DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, double sigma, RngStream& rng);

}  // namespace fedlora
