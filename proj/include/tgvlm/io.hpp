#pragma once

// Little-endian binary encoding helpers and atomic file replacement.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tgvlm::io {

class ByteWriter {
 public:
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);
  void bytes(std::string_view s);
  void f64s(std::span<const double> values);

  std::size_t size() const { return buf_.size(); }
  const std::string& buffer() const { return buf_; }

 private:
  std::string buf_;
};

// Reads from an in-memory byte buffer; every read is bounds-checked and
// raises FormatError on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data, std::string context = "file")
      : data_(data), context_(std::move(context)) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string bytes(std::size_t n);
  std::vector<double> f64s(std::size_t n);

  std::size_t position() const { return pos_; }
  void seek(std::size_t pos);
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t size() const { return data_.size(); }

 private:
  void need(std::size_t n) const;
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string context_;
};

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace tgvlm::io
