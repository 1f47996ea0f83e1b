#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace bearingmon {

// Little-endian binary record builder used by every serialized model.
// Layout of a finished record: payload bytes followed by a u64 FNV-1a
// checksum of the payload.
class BinaryWriter {
 public:
  void magic(std::string_view tag);  // exactly 8 bytes
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void matrix(const Eigen::MatrixXd& m);  // rows, cols, row-major values
  void vector(const Eigen::VectorXd& v);  // size, values

  std::string finish() const;

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  // Verifies the trailing checksum; throws ModelFormatError on mismatch.
  explicit BinaryReader(std::string bytes);

  void expect_magic(std::string_view tag);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  Eigen::MatrixXd matrix();
  Eigen::VectorXd vector();
  void expect_end() const;

 private:
  void need(std::size_t n) const;

  std::string bytes_;
  std::size_t pos_ = 0;
  std::size_t end_ = 0;
};

void write_bytes(const std::filesystem::path& path, const std::string& bytes);
// Throws ModelFormatError when the file cannot be opened.
std::string read_bytes(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace bearingmon
