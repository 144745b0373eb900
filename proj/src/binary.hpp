#pragma once

// Little-endian container helpers shared by the artifact formats.

#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbmloc/checkpoint.hpp"

namespace cbmloc::detail {

class Writer {
 public:
  void magic(const char (&m)[9]) { raw(m, 8); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void text(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }
  template <typename T>
  void pod(std::span<const T> values) {
    raw(values.data(), values.size_bytes());
  }
  void f64(const std::vector<double>& v) { pod<double>(v); }
  Bytes take() { return std::move(out_); }

 private:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  Bytes out_;
};

class Reader {
 public:
  Reader(const Bytes& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  void magic(const char (&m)[9]) {
    need(8);
    if (std::memcmp(bytes_.data() + pos_, m, 8) != 0) throw FormatError(what_ + ": bad magic");
    pos_ += 8;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    need(sizeof v);
    std::memcpy(&v, bytes_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string text() {
    const std::uint64_t n = u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  nlohmann::json json_doc() {
    try {
      return nlohmann::json::parse(text());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(what_ + ": malformed manifest: " + e.what());
    }
  }
  template <typename T>
  std::vector<T> pod(std::uint64_t count) {
    if (count > (bytes_.size() - pos_) / sizeof(T)) throw FormatError(what_ + ": length mismatch (truncated blob)");
    std::vector<T> v(count);
    std::memcpy(v.data(), bytes_.data() + pos_, count * sizeof(T));
    pos_ += count * sizeof(T);
    return v;
  }
  std::vector<double> f64(std::uint64_t count) { return pod<double>(count); }
  void finish() const {
    if (pos_ != bytes_.size()) throw FormatError(what_ + ": length mismatch (trailing bytes)");
  }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw FormatError(what_ + ": length mismatch (truncated)");
  }
  const Bytes& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace cbmloc::detail
