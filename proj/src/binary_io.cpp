#include "bearingmon/binary_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "bearingmon/errors.hpp"

namespace bearingmon {

namespace {

constexpr std::size_t kMaxElements = std::size_t{1} << 32;

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelFormatError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void BinaryWriter::magic(std::string_view tag) {
  if (tag.size() != 8) throw ModelFormatError("magic tag must be 8 bytes");
  buf_.append(tag);
}

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::matrix(const Eigen::MatrixXd& m) {
  u64(static_cast<std::uint64_t>(m.rows()));
  u64(static_cast<std::uint64_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) f64(m(r, c));
}

void BinaryWriter::vector(const Eigen::VectorXd& v) {
  u64(static_cast<std::uint64_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
}

std::string BinaryWriter::finish() const {
  BinaryWriter tail;
  tail.u64(fnv1a(buf_));
  return buf_ + tail.buf_;
}

BinaryReader::BinaryReader(std::string bytes) : bytes_(std::move(bytes)) {
  if (bytes_.size() < 8) throw ModelFormatError("truncated record");
  end_ = bytes_.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[end_ + i])) << (8 * i);
  if (stored != fnv1a(std::string_view(bytes_).substr(0, end_)))
    throw ModelFormatError("checksum mismatch (corrupted file)");
}

void BinaryReader::need(std::size_t n) const {
  if (pos_ + n > end_) throw ModelFormatError("truncated record");
}

void BinaryReader::expect_magic(std::string_view tag) {
  need(8);
  if (std::string_view(bytes_).substr(pos_, 8) != tag)
    throw ModelFormatError("bad magic, expected " + std::string(tag));
  pos_ += 8;
}

std::uint32_t BinaryReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
  pos_ += 4;
  return v;
}

std::uint64_t BinaryReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
  pos_ += 8;
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

Eigen::MatrixXd BinaryReader::matrix() {
  const std::uint64_t rows = u64();
  const std::uint64_t cols = u64();
  if (rows > kMaxElements || cols > kMaxElements || rows * cols * 8 > end_ - pos_)
    throw ModelFormatError("matrix shape exceeds record size");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = f64();
  return m;
}

Eigen::VectorXd BinaryReader::vector() {
  const std::uint64_t n = u64();
  if (n > kMaxElements || n * 8 > end_ - pos_)
    throw ModelFormatError("vector length exceeds record size");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
  return v;
}

void BinaryReader::expect_end() const {
  if (pos_ != end_) throw ModelFormatError("trailing bytes in record");
}

}  // namespace bearingmon
