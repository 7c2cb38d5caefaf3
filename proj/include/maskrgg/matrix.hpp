#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace maskrgg {

/// Latent Gaussian vectors, one per row (vertex); columns are coordinates.
class LatentMatrix {
 public:
  LatentMatrix() = default;
  LatentMatrix(Eigen::Index rows, Eigen::Index dim) : values_(rows, dim) {
    values_.setZero();
  }
  explicit LatentMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {}

  [[nodiscard]] Eigen::Index rows() const noexcept { return values_.rows(); }
  [[nodiscard]] Eigen::Index dim() const noexcept { return values_.cols(); }
  [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return values_; }
  [[nodiscard]] Eigen::MatrixXd& values() noexcept { return values_; }
  double operator()(Eigen::Index row, Eigen::Index col) const { return values_(row, col); }
  double& operator()(Eigen::Index row, Eigen::Index col) { return values_(row, col); }

  /// Rows listed in `indices`, in that order.
  [[nodiscard]] LatentMatrix select_rows(std::span<const int> indices) const;

  /// Normalized Gram matrix <x_u, x_v> / d.
  [[nodiscard]] Eigen::MatrixXd normalized_gram() const;

  friend bool operator==(const LatentMatrix& a, const LatentMatrix& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_;
  }

 private:
  Eigen::MatrixXd values_;
};

/// Dense n x m matrix with entries in {0, 1}, stored row-major one byte per
/// entry. Used for adjacency samples, masks and fill matrices.
class BitMatrix {
 public:
  BitMatrix() = default;
  BitMatrix(int rows, int cols, std::uint8_t fill = 0);

  /// Builds from nested rows; every value must be 0 or 1.
  static BitMatrix from_rows(const std::vector<std::vector<int>>& rows);

  [[nodiscard]] int rows() const noexcept { return rows_; }
  [[nodiscard]] int cols() const noexcept { return cols_; }
  [[nodiscard]] std::size_t size() const noexcept { return bits_.size(); }

  std::uint8_t operator()(int row, int col) const {
    return bits_[static_cast<std::size_t>(row) * cols_ + col];
  }
  void set(int row, int col, bool value) {
    bits_[static_cast<std::size_t>(row) * cols_ + col] = value ? 1 : 0;
  }

  [[nodiscard]] std::span<const std::uint8_t> data() const noexcept { return bits_; }
  [[nodiscard]] std::span<std::uint8_t> data() noexcept { return bits_; }

  [[nodiscard]] bool same_shape(const BitMatrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  [[nodiscard]] double density() const;
  [[nodiscard]] BitMatrix transposed() const;

  friend bool operator==(const BitMatrix& a, const BitMatrix& b) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Binary layout (all integers little-endian):
//   BitMatrix:    u64 rows, u64 cols, then ceil(rows*cols/8) bytes; entry k of
//                 the row-major order is bit (k % 8) of byte k / 8, LSB first;
//                 unused trailing bits are zero.
//   LatentMatrix: u64 rows, u64 cols, then rows*cols IEEE-754 binary64 values
//                 in row-major order.
void write_bits(std::ostream& out, const BitMatrix& matrix);
BitMatrix read_bits(std::istream& in);
void write_latents(std::ostream& out, const LatentMatrix& matrix);
LatentMatrix read_latents(std::istream& in);

// CSV: one line per row, comma separated; latents use shortest round-trip
// decimal form.
void write_bits_csv(std::ostream& out, const BitMatrix& matrix);
BitMatrix read_bits_csv(std::istream& in);
void write_latents_csv(std::ostream& out, const LatentMatrix& matrix);
LatentMatrix read_latents_csv(std::istream& in);

/// File helpers; a ".csv" extension selects CSV, anything else binary.
void save_bits(const std::filesystem::path& path, const BitMatrix& matrix);
BitMatrix load_bits(const std::filesystem::path& path);
void save_latents(const std::filesystem::path& path, const LatentMatrix& matrix);
LatentMatrix load_latents(const std::filesystem::path& path);

/// Shortest round-trip decimal form of a double, always with a decimal point
/// or exponent (0 prints as "0.0").
std::string format_double(double value);

}  // namespace maskrgg
