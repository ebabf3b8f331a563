#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gmix/errors.hpp"
#include "gmix/linalg.hpp"

namespace gmix::io {

/// Flat binary container:
///   8-byte magic "GMIXBIN1" | u64 LE header length | JSON header | f64 LE payload (row-major).
/// The header carries at least {"shape": [rows, cols], "dtype": "f64le", "order": "row-major"}.
inline constexpr char kMagic[8] = {'G', 'M', 'I', 'X', 'B', 'I', 'N', '1'};

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

struct Container {
  nlohmann::json header;
  Mat data;  // rows x cols as given by the header shape
};

/// Serialize `data` (rows x cols) with extra header fields.
inline std::string encode(const Mat& data, nlohmann::json header) {
  header["shape"] = {data.rows(), data.cols()};
  header["dtype"] = "f64le";
  header["order"] = "row-major";
  const std::string hs = header.dump();
  std::string out(kMagic, 8);
  const std::uint64_t hl = hs.size();
  out.append(reinterpret_cast<const char*>(&hl), 8);
  out += hs;
  std::vector<double> buf(static_cast<std::size_t>(data.size()));
  std::size_t k = 0;
  for (Index i = 0; i < data.rows(); ++i)
    for (Index j = 0; j < data.cols(); ++j) buf[k++] = data(i, j);
  out.append(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(double));
  return out;
}

inline Container decode(const std::string& bytes) {
  if (bytes.size() < 16) throw FormatError("file shorter than the fixed preamble", bytes.size());
  if (std::memcmp(bytes.data(), kMagic, 8) != 0) throw FormatError("bad magic", 0);
  std::uint64_t hl = 0;
  std::memcpy(&hl, bytes.data() + 8, 8);
  if (hl > bytes.size() - 16) throw FormatError("header length exceeds file size", 8);
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(hl));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed JSON header: ") + e.what(), 16);
  }
  const std::size_t payload = 16 + hl;
  if (!c.header.contains("shape") || !c.header["shape"].is_array() || c.header["shape"].size() != 2)
    throw FormatError("header lacks a two-dimensional shape", 16);
  if (c.header.value("dtype", "") != "f64le" || c.header.value("order", "") != "row-major")
    throw FormatError("unsupported dtype or order", 16);
  const auto rows = c.header["shape"][0].get<std::int64_t>();
  const auto cols = c.header["shape"][1].get<std::int64_t>();
  if (rows < 0 || cols < 0) throw FormatError("negative shape", 16);
  const std::size_t need = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * sizeof(double);
  if (bytes.size() - payload < need) throw FormatError("payload truncated", bytes.size());
  if (bytes.size() - payload > need) throw FormatError("trailing bytes after payload", payload + need);
  c.data.resize(rows, cols);
  const char* p = bytes.data() + payload;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      double v;
      std::memcpy(&v, p, sizeof(double));
      p += sizeof(double);
      c.data(i, j) = v;
    }
  return c;
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed for " + path.string());
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return s;
}

inline void write_container(const std::filesystem::path& path, const Mat& data, nlohmann::json header = {}) {
  write_bytes(path, encode(data, std::move(header)));
}

inline Container read_container(const std::filesystem::path& path) { return decode(read_bytes(path)); }

/// Sparse matrix as COO triplets: rows (row, col, value).
inline Mat sparse_to_coo(const SpMat& a) {
  Mat out(a.nonZeros(), 3);
  Index k = 0;
  for (Index j = 0; j < a.outerSize(); ++j)
    for (SpMat::InnerIterator it(a, j); it; ++it) {
      out(k, 0) = static_cast<double>(it.row());
      out(k, 1) = static_cast<double>(it.col());
      out(k, 2) = it.value();
      ++k;
    }
  return out;
}

inline SpMat coo_to_sparse(const Mat& coo, Index rows, Index cols) {
  if (coo.cols() != 3) throw FormatError("COO payload must have three columns", 0);
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(static_cast<std::size_t>(coo.rows()));
  for (Index k = 0; k < coo.rows(); ++k) t.emplace_back(static_cast<Index>(coo(k, 0)), static_cast<Index>(coo(k, 1)), coo(k, 2));
  SpMat a(rows, cols);
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

}  // namespace gmix::io
