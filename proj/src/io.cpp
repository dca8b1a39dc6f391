#include "coldrec/io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "coldrec/errors.hpp"

namespace coldrec {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

void put_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw DataError(path + ": truncated EMB1 header");
  }
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_emb1(const std::string& path, const Mat& matrix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out.write(kMagic, 4);
  put_u32le(out, static_cast<std::uint32_t>(matrix.rows()));
  put_u32le(out, static_cast<std::uint32_t>(matrix.cols()));
  std::vector<float> buf(matrix.values().size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    buf[i] = static_cast<float>(matrix.values()[i]);
  }
  static_assert(sizeof(float) == 4);
  if (!buf.empty()) {
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw DataError(path + ": write failed");
}

Mat read_emb1(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(path + ": missing EMB1 magic");
  }
  const std::uint32_t rows = get_u32le(in, path);
  const std::uint32_t cols = get_u32le(in, path);
  const std::size_t n = static_cast<std::size_t>(rows) * cols;
  std::vector<float> buf(n);
  if (n > 0 &&
      !in.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(n * sizeof(float)))) {
    throw DataError(path + ": truncated EMB1 payload");
  }
  Mat m(rows, cols);
  for (std::size_t i = 0; i < n; ++i) {
    m.values()[i] = static_cast<double>(buf[i]);
  }
  if (!m.all_finite()) throw DataError(path + ": non-finite value in matrix");
  return m;
}

Mat read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::string header;
  if (!std::getline(in, header)) throw DataError(path + ": empty CSV file");
  if (header.rfind("dim0", 0) != 0) {
    throw DataError(path + ": expected CSV header starting with dim0");
  }
  std::size_t cols = 1;
  for (char c : header) {
    if (c == ',') ++cols;
  }
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::size_t fields = 0;
    while (std::getline(ss, field, ',')) {
      try {
        values.push_back(std::stod(field));
      } catch (const std::exception&) {
        throw DataError(path + ": bad number at line " +
                        std::to_string(line_no));
      }
      ++fields;
    }
    if (fields != cols) {
      throw DataError(path + ": wrong field count at line " +
                      std::to_string(line_no));
    }
  }
  Mat m(values.size() / cols, cols);
  m.values() = std::move(values);
  if (!m.all_finite()) throw DataError(path + ": non-finite value in matrix");
  return m;
}

void write_features_csv(const std::string& path, const Mat& matrix) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  for (std::size_t c = 0; c < matrix.cols(); ++c) {
    out << (c ? "," : "") << "dim" << c;
  }
  out << "\n";
  char buf[64];
  for (std::size_t r = 0; r < matrix.rows(); ++r) {
    for (std::size_t c = 0; c < matrix.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.9g", matrix.at(r, c));
      out << (c ? "," : "") << buf;
    }
    out << "\n";
  }
}

Mat read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.close();
  if (std::memcmp(magic, kMagic, 4) == 0) return read_emb1(path);
  return read_features_csv(path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << text;
  if (!out) throw DataError(path + ": write failed");
}

void write_index_csv(const std::string& path, std::span<const Index> ids,
                     const std::string& header) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << header << "\n";
  for (Index id : ids) out << id << "\n";
}

std::vector<Index> read_index_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty index file");
  std::vector<Index> ids;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      ids.push_back(static_cast<Index>(std::stoul(line)));
    } catch (const std::exception&) {
      throw DataError(path + ": bad index at line " + std::to_string(line_no));
    }
  }
  return ids;
}

}  // namespace coldrec
