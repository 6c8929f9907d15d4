#pragma once
// Reader/writer for the NPY v1.0 tensor container, restricted to
// little-endian float32, float64 and int32 payloads in C order.
//
// Layout: bytes 0-5 magic "\x93NUMPY", bytes 6-7 version (1, 0), bytes 8-9
// little-endian header length H, then H bytes of ASCII dict terminated by
// '\n' and padded with spaces so the payload starts on a 64-byte boundary.

#include "mahavar/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace mahavar::npy {

enum class Dtype { f32, f64, i32 };

inline std::string_view descr(Dtype t) {
  switch (t) {
    case Dtype::f32: return "<f4";
    case Dtype::f64: return "<f8";
    case Dtype::i32: return "<i4";
  }
  return "";
}

inline std::size_t item_size(Dtype t) { return t == Dtype::f64 ? 8 : 4; }

/// Decoded tensor. Values are promoted to double; int32 and float32 promote
/// exactly, so writing back at the stored dtype reproduces the payload bytes.
struct Array {
  Dtype dtype = Dtype::f64;
  std::vector<std::size_t> shape;
  std::vector<double> values;
  std::size_t payload_offset = 0;

  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
};

namespace detail {

inline constexpr char kMagic[] = "\x93NUMPY";
inline constexpr std::size_t kAlignment = 64;

template <typename T>
void put_le(std::string& out, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(buf), std::end(buf));
  out.append(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(std::begin(buf), std::end(buf));
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

[[noreturn]] inline void fail(std::string_view source, std::size_t offset, const std::string& what) {
  std::ostringstream os;
  os << source << ": byte " << offset << ": " << what;
  throw ValidationError(os.str());
}

// Returns the text following `'key':` (or `"key":`) with leading blanks removed.
inline std::string_view value_of(std::string_view dict, std::string_view key, std::string_view source,
                                 std::size_t base) {
  for (char q : {'\'', '"'}) {
    std::string needle;
    needle += q;
    needle += key;
    needle += q;
    auto pos = dict.find(needle);
    if (pos == std::string_view::npos) continue;
    pos = dict.find(':', pos + needle.size());
    if (pos == std::string_view::npos) break;
    ++pos;
    while (pos < dict.size() && dict[pos] == ' ') ++pos;
    return dict.substr(pos);
  }
  fail(source, base, "header is missing key '" + std::string(key) + "'");
}

}  // namespace detail

/// Serialises a tensor to container bytes. float32 output rounds each value
/// to nearest; int32 output requires integral values in range.
inline std::string encode(Dtype dtype, std::span<const std::size_t> shape, std::span<const double> values) {
  std::size_t count = 1;
  for (auto s : shape) count *= s;
  if (count != values.size())
    throw ValidationError("npy encode: shape holds " + std::to_string(count) + " elements but " +
                          std::to_string(values.size()) + " were given");

  std::string dict = "{'descr': '" + std::string(descr(dtype)) + "', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) dict += ", ";
    dict += std::to_string(shape[i]);
  }
  if (shape.size() == 1) dict += ",";
  dict += "), }";
  std::size_t unpadded = 10 + dict.size() + 1;
  std::size_t padded = (unpadded + detail::kAlignment - 1) / detail::kAlignment * detail::kAlignment;
  dict.append(padded - unpadded, ' ');
  dict += '\n';

  std::string out;
  out.reserve(padded + count * item_size(dtype));
  out.append(detail::kMagic, 6);
  out.push_back(char{1});
  out.push_back(char{0});
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(dict.size()));
  out += dict;

  for (double v : values) {
    switch (dtype) {
      case Dtype::f32: detail::put_le<float>(out, static_cast<float>(v)); break;
      case Dtype::f64: detail::put_le<double>(out, v); break;
      case Dtype::i32: {
        if (!(v == std::floor(v)) || v < std::numeric_limits<std::int32_t>::min() ||
            v > std::numeric_limits<std::int32_t>::max())
          throw ValidationError("npy encode: value " + std::to_string(v) + " is not representable as int32");
        detail::put_le<std::int32_t>(out, static_cast<std::int32_t>(v));
        break;
      }
    }
  }
  return out;
}

/// Parses container bytes. `source` names the origin in error messages.
inline Array decode(std::string_view bytes, std::string_view source = "<memory>") {
  using detail::fail;
  if (bytes.size() < 10) fail(source, 0, "file too short for a container header");
  if (bytes.substr(0, 6) != std::string_view(detail::kMagic, 6)) fail(source, 0, "bad magic string");
  auto major = static_cast<unsigned char>(bytes[6]);
  auto minor = static_cast<unsigned char>(bytes[7]);
  if (major != 1 || minor != 0)
    fail(source, 6, "unsupported format version " + std::to_string(major) + "." + std::to_string(minor));
  std::size_t header_len = detail::get_le<std::uint16_t>(bytes.data() + 8);
  if (bytes.size() < 10 + header_len) fail(source, 8, "header length exceeds file size");
  std::string_view dict = bytes.substr(10, header_len);
  if (dict.empty() || dict.back() != '\n') fail(source, 10 + header_len - 1, "header not terminated by newline");

  Array out;
  out.payload_offset = 10 + header_len;

  auto d = detail::value_of(dict, "descr", source, 10);
  if (d.size() < 5 || (d[0] != '\'' && d[0] != '"')) fail(source, 10, "malformed descr value");
  auto code = d.substr(1, 3);
  if (code == "<f4")
    out.dtype = Dtype::f32;
  else if (code == "<f8")
    out.dtype = Dtype::f64;
  else if (code == "<i4")
    out.dtype = Dtype::i32;
  else
    fail(source, 10, "unsupported descr '" + std::string(code) + "' (expected <f4, <f8 or <i4)");

  auto fo = detail::value_of(dict, "fortran_order", source, 10);
  if (fo.starts_with("True")) fail(source, 10, "fortran_order=True is not supported");
  if (!fo.starts_with("False")) fail(source, 10, "malformed fortran_order value");

  auto sh = detail::value_of(dict, "shape", source, 10);
  if (sh.empty() || sh[0] != '(') fail(source, 10, "malformed shape value");
  auto close = sh.find(')');
  if (close == std::string_view::npos) fail(source, 10, "unterminated shape tuple");
  std::string_view tuple = sh.substr(1, close - 1);
  std::size_t i = 0;
  while (i < tuple.size()) {
    while (i < tuple.size() && (tuple[i] == ' ' || tuple[i] == ',')) ++i;
    if (i >= tuple.size()) break;
    std::size_t v = 0;
    bool any = false;
    while (i < tuple.size() && tuple[i] >= '0' && tuple[i] <= '9') {
      v = v * 10 + static_cast<std::size_t>(tuple[i] - '0');
      ++i;
      any = true;
    }
    if (!any) fail(source, 10, "non-integer entry in shape tuple");
    out.shape.push_back(v);
  }
  if (out.shape.empty() || out.shape.size() > 2) fail(source, 10, "only 1-D and 2-D tensors are supported");

  std::size_t count = 1;
  for (auto s : out.shape) count *= s;
  std::size_t need = count * item_size(out.dtype);
  std::size_t have = bytes.size() - out.payload_offset;
  if (have != need)
    fail(source, out.payload_offset,
         "payload holds " + std::to_string(have) + " bytes, shape requires " + std::to_string(need));

  out.values.resize(count);
  const char* p = bytes.data() + out.payload_offset;
  for (std::size_t k = 0; k < count; ++k) {
    switch (out.dtype) {
      case Dtype::f32: out.values[k] = detail::get_le<float>(p + 4 * k); break;
      case Dtype::f64: out.values[k] = detail::get_le<double>(p + 8 * k); break;
      case Dtype::i32: out.values[k] = detail::get_le<std::int32_t>(p + 4 * k); break;
    }
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(path.string() + ": read failed");
  return bytes;
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

inline Array load(const std::filesystem::path& path) { return decode(read_file(path), path.string()); }

inline void save(const std::filesystem::path& path, Dtype dtype, std::span<const std::size_t> shape,
                 std::span<const double> values) {
  write_file(path, encode(dtype, shape, values));
}

}  // namespace mahavar::npy
