#include "maskrgg/matrix.hpp"

#include <array>
#include <charconv>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace maskrgg {

LatentMatrix LatentMatrix::select_rows(std::span<const int> indices) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(indices.size()), values_.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= values_.rows()) {
      throw std::out_of_range("LatentMatrix::select_rows: index out of range");
    }
    out.row(static_cast<Eigen::Index>(i)) = values_.row(indices[i]);
  }
  return LatentMatrix(std::move(out));
}

Eigen::MatrixXd LatentMatrix::normalized_gram() const {
  Eigen::MatrixXd gram = values_ * values_.transpose();
  gram /= static_cast<double>(values_.cols());
  return gram;
}

BitMatrix::BitMatrix(int rows, int cols, std::uint8_t fill)
    : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("BitMatrix: negative shape");
  if (fill > 1) throw std::invalid_argument("BitMatrix: fill must be 0 or 1");
  bits_.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), fill);
}

BitMatrix BitMatrix::from_rows(const std::vector<std::vector<int>>& rows) {
  const int n = static_cast<int>(rows.size());
  const int m = n == 0 ? 0 : static_cast<int>(rows.front().size());
  BitMatrix out(n, m);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != m) {
      throw std::invalid_argument("BitMatrix::from_rows: ragged rows");
    }
    for (int j = 0; j < m; ++j) {
      if (rows[i][j] != 0 && rows[i][j] != 1) {
        throw std::invalid_argument("BitMatrix::from_rows: entries must be 0 or 1");
      }
      out.set(i, j, rows[i][j] == 1);
    }
  }
  return out;
}

double BitMatrix::density() const {
  if (bits_.empty()) return 0.0;
  std::size_t ones = 0;
  for (auto b : bits_) ones += b;
  return static_cast<double>(ones) / static_cast<double>(bits_.size());
}

BitMatrix BitMatrix::transposed() const {
  BitMatrix out(cols_, rows_);
  for (int i = 0; i < rows_; ++i) {
    for (int j = 0; j < cols_; ++j) out.set(j, i, (*this)(i, j) != 0);
  }
  return out;
}

namespace {

void write_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes.data(), bytes.size());
}

std::uint64_t read_u64(std::istream& in) {
  std::array<unsigned char, 8> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("truncated matrix header");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void check_dims(std::uint64_t rows, std::uint64_t cols) {
  constexpr std::uint64_t kMaxEntries = std::uint64_t{1} << 40;
  if (rows > (1U << 30) || cols > (1U << 30) || rows * cols > kMaxEntries) {
    throw std::runtime_error("matrix header has implausible dimensions");
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream stream(line);
  while (std::getline(stream, field, ',')) fields.push_back(field);
  return fields;
}

double parse_double(const std::string& text) {
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  while (used < text.size() && (text[used] == ' ' || text[used] == '\r')) ++used;
  if (used != text.size()) throw std::runtime_error("bad number in CSV: " + text);
  return v;
}

}  // namespace

void write_bits(std::ostream& out, const BitMatrix& matrix) {
  write_u64(out, static_cast<std::uint64_t>(matrix.rows()));
  write_u64(out, static_cast<std::uint64_t>(matrix.cols()));
  std::vector<char> packed((matrix.size() + 7) / 8, 0);
  const auto data = matrix.data();
  for (std::size_t k = 0; k < data.size(); ++k) {
    if (data[k]) packed[k / 8] = static_cast<char>(packed[k / 8] | (1 << (k % 8)));
  }
  out.write(packed.data(), static_cast<std::streamsize>(packed.size()));
}

BitMatrix read_bits(std::istream& in) {
  const std::uint64_t rows = read_u64(in);
  const std::uint64_t cols = read_u64(in);
  check_dims(rows, cols);
  BitMatrix out(static_cast<int>(rows), static_cast<int>(cols));
  std::vector<unsigned char> packed((out.size() + 7) / 8);
  in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (!in) throw std::runtime_error("truncated bit matrix payload");
  auto data = out.data();
  for (std::size_t k = 0; k < data.size(); ++k) data[k] = (packed[k / 8] >> (k % 8)) & 1;
  return out;
}

void write_latents(std::ostream& out, const LatentMatrix& matrix) {
  write_u64(out, static_cast<std::uint64_t>(matrix.rows()));
  write_u64(out, static_cast<std::uint64_t>(matrix.dim()));
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.dim(); ++j) {
      std::uint64_t bits = 0;
      const double v = matrix(i, j);
      std::memcpy(&bits, &v, sizeof bits);
      write_u64(out, bits);
    }
  }
}

LatentMatrix read_latents(std::istream& in) {
  const std::uint64_t rows = read_u64(in);
  const std::uint64_t cols = read_u64(in);
  check_dims(rows, cols);
  LatentMatrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.dim(); ++j) {
      const std::uint64_t bits = read_u64(in);
      double v = 0.0;
      std::memcpy(&v, &bits, sizeof v);
      out(i, j) = v;
    }
  }
  return out;
}

void write_bits_csv(std::ostream& out, const BitMatrix& matrix) {
  for (int i = 0; i < matrix.rows(); ++i) {
    for (int j = 0; j < matrix.cols(); ++j) {
      if (j > 0) out << ',';
      out << static_cast<int>(matrix(i, j));
    }
    out << '\n';
  }
}

BitMatrix read_bits_csv(std::istream& in) {
  std::vector<std::vector<int>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<int> row;
    for (const auto& field : split_csv_line(line)) {
      const double v = parse_double(field);
      if (v != 0.0 && v != 1.0) throw std::runtime_error("bit CSV entries must be 0 or 1");
      row.push_back(static_cast<int>(v));
    }
    rows.push_back(std::move(row));
  }
  return BitMatrix::from_rows(rows);
}

void write_latents_csv(std::ostream& out, const LatentMatrix& matrix) {
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.dim(); ++j) {
      if (j > 0) out << ',';
      out << format_double(matrix(i, j));
    }
    out << '\n';
  }
}

LatentMatrix read_latents_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<double> row;
    for (const auto& field : split_csv_line(line)) row.push_back(parse_double(field));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw std::runtime_error("latent CSV has ragged rows");
    }
    rows.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = n == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.front().size());
  LatentMatrix out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) out(i, j) = rows[i][j];
  }
  return out;
}

namespace {

bool is_csv(const std::filesystem::path& path) { return path.extension() == ".csv"; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return in;
}

}  // namespace

void save_bits(const std::filesystem::path& path, const BitMatrix& matrix) {
  auto out = open_out(path);
  is_csv(path) ? write_bits_csv(out, matrix) : write_bits(out, matrix);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

BitMatrix load_bits(const std::filesystem::path& path) {
  auto in = open_in(path);
  return is_csv(path) ? read_bits_csv(in) : read_bits(in);
}

void save_latents(const std::filesystem::path& path, const LatentMatrix& matrix) {
  auto out = open_out(path);
  is_csv(path) ? write_latents_csv(out, matrix) : write_latents(out, matrix);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

LatentMatrix load_latents(const std::filesystem::path& path) {
  auto in = open_in(path);
  return is_csv(path) ? read_latents_csv(in) : read_latents(in);
}

std::string format_double(double value) {
  std::array<char, 64> buffer{};
  const auto [end, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  std::string text(buffer.data(), end);
  if (text.find_first_of(".eEn") == std::string::npos) text += ".0";
  return text;
}

}  // namespace maskrgg
