#include "otreg/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

namespace otreg {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

void put_u32le(std::string& buf, std::uint32_t v) {
  buf.push_back(static_cast<char>(v & 0xFF));
  buf.push_back(static_cast<char>((v >> 8) & 0xFF));
  buf.push_back(static_cast<char>((v >> 16) & 0xFF));
  buf.push_back(static_cast<char>((v >> 24) & 0xFF));
}

std::uint32_t get_u32le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

std::string ext_of(const std::string& path) {
  return std::filesystem::path(path).extension().string();
}

}  // namespace

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open file for writing: " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw io_error("write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("rename failed: " + tmp + " -> " + path + " (" + ec.message() + ")");
}

void write_emb(const std::string& path, const Matrix& m) {
  std::string buf;
  buf.reserve(12 + m.size() * 4);
  buf.append(kMagic, 4);
  put_u32le(buf, static_cast<std::uint32_t>(m.rows()));
  put_u32le(buf, static_cast<std::uint32_t>(m.cols()));
  for (size_t i = 0; i < m.size(); ++i) {
    const double d = m.data()[i];
    if (!std::isfinite(d))
      throw io_error("write_emb: non-finite value at byte offset " + std::to_string(12 + 4 * i));
    const float f = static_cast<float>(d);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32le(buf, bits);
  }
  write_text_atomic(path, buf);
}

Matrix read_emb(const std::string& path) {
  const std::string buf = read_file_bytes(path);
  if (buf.size() < 12)
    throw io_error("read_emb: truncated header in " + path + ": expected at least 12 bytes, got " +
                   std::to_string(buf.size()));
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (std::memcmp(p, kMagic, 4) != 0)
    throw io_error("read_emb: bad magic at byte offset 0 in " + path);
  const std::uint32_t rows = get_u32le(p + 4);
  const std::uint32_t cols = get_u32le(p + 8);
  const size_t expected = 12 + static_cast<size_t>(rows) * cols * 4;
  if (buf.size() != expected)
    throw io_error("read_emb: truncated file " + path + ": expected " + std::to_string(expected) +
                   " bytes, got " + std::to_string(buf.size()));
  Matrix m(static_cast<int>(rows), static_cast<int>(cols));
  for (size_t i = 0; i < m.size(); ++i) {
    const std::uint32_t bits = get_u32le(p + 12 + 4 * i);
    float f;
    std::memcpy(&f, &bits, 4);
    if (!std::isfinite(f))
      throw io_error("read_emb: non-finite value at byte offset " + std::to_string(12 + 4 * i) +
                     " in " + path);
    m.data()[i] = static_cast<double>(f);
  }
  return m;
}

Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open file: " + path);
  std::vector<double> values;
  int cols = -1, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() && in.peek() == std::char_traits<char>::eof() && rows == 0) break;
    int this_cols = 0;
    size_t pos = 0;
    while (pos <= line.size()) {
      size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string field = line.substr(pos, comma - pos);
      char* end = nullptr;
      const double v = std::strtod(field.c_str(), &end);
      if (end == field.c_str() || *end != '\0')
        throw io_error("read_csv: parse failure at line " + std::to_string(line_no) + " in " +
                       path);
      values.push_back(v);
      ++this_cols;
      pos = comma + 1;
      if (comma == line.size()) break;
    }
    if (cols < 0)
      cols = this_cols;
    else if (this_cols != cols)
      throw io_error("read_csv: ragged row at line " + std::to_string(line_no) + " in " + path +
                     ": expected " + std::to_string(cols) + " fields, got " +
                     std::to_string(this_cols));
    ++rows;
  }
  if (rows == 0) return Matrix();
  return Matrix(rows, cols, std::move(values));
}

void write_csv_matrix(const std::string& path, const Matrix& m) {
  std::string buf;
  char num[64];
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      std::snprintf(num, sizeof(num), "%.17g", m(i, j));
      if (j) buf.push_back(',');
      buf.append(num);
    }
    buf.push_back('\n');
  }
  write_text_atomic(path, buf);
}

Matrix read_matrix_auto(const std::string& path) {
  const std::string ext = ext_of(path);
  if (ext == ".emb") return read_emb(path);
  if (ext == ".csv") return read_csv_matrix(path);
  throw io_error("unsupported matrix extension '" + ext + "' for " + path +
                 " (use .emb or .csv)");
}

void write_matrix_auto(const std::string& path, const Matrix& m) {
  const std::string ext = ext_of(path);
  if (ext == ".emb") {
    write_emb(path, m);
    return;
  }
  if (ext == ".csv") {
    write_csv_matrix(path, m);
    return;
  }
  throw io_error("unsupported matrix extension '" + ext + "' for " + path +
                 " (use .emb or .csv)");
}

std::string file_digest(const std::string& path) {
  const std::string bytes = read_file_bytes(path);
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace otreg
