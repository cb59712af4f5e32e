#include "latred/matrix_io.hpp"

#include <bit>
#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace latred {

static_assert(std::endian::native == std::endian::little,
              "matrix files are little-endian; big-endian hosts are not supported");

namespace {
constexpr char kMagic[6] = {'L', 'R', 'M', 'A', 'T', '1'};
}

void write_lrmat(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  f.write(kMagic, sizeof(kMagic));
  const std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  const std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  f.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
  f.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    f.write(reinterpret_cast<const char*>(m.col(c).data()),
            static_cast<std::streamsize>(sizeof(double) * m.rows()));
  if (!f) throw IoError("write failed: " + path.string());
}

Eigen::MatrixXd read_lrmat(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  char magic[6];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ParseError(path.string() + ": not a LRMAT1 matrix file");
  std::uint64_t rows = 0, cols = 0;
  f.read(reinterpret_cast<char*>(&rows), sizeof(rows));
  f.read(reinterpret_cast<char*>(&cols), sizeof(cols));
  if (!f || rows > (1ull << 32) || cols > (1ull << 32))
    throw ParseError(path.string() + ": corrupt matrix header");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    f.read(reinterpret_cast<char*>(m.col(c).data()),
           static_cast<std::streamsize>(sizeof(double) * m.rows()));
  }
  if (!f && !(rows == 0 || cols == 0)) throw ParseError(path.string() + ": truncated matrix file");
  return m;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m) {
  CsvWriter w(path);
  std::vector<std::string> names;
  names.reserve(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) names.push_back("c" + std::to_string(c));
  w.header(names);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) w.field(m(r, c));
    w.end_row();
  }
}

CsvWriter::CsvWriter(const std::filesystem::path& path) {
  f_ = std::fopen(path.string().c_str(), "wb");
  if (f_ == nullptr) throw IoError("cannot open for writing: " + path.string());
}

CsvWriter::~CsvWriter() {
  if (f_ != nullptr) std::fclose(f_);
}

void CsvWriter::header(const std::vector<std::string>& names) {
  for (const auto& n : names) field(n);
  end_row();
}

void CsvWriter::separator() {
  if (row_open_) std::fputc(',', f_);
  row_open_ = true;
}

void CsvWriter::field(const std::string& s) {
  separator();
  std::fputs(s.c_str(), f_);
}

void CsvWriter::field(double v) {
  separator();
  std::fprintf(f_, "%.17g", v);
}

void CsvWriter::field(long v) {
  separator();
  std::fprintf(f_, "%ld", v);
}

void CsvWriter::field(int v) {
  separator();
  std::fprintf(f_, "%d", v);
}

void CsvWriter::end_row() {
  std::fputs("\r\n", f_);
  row_open_ = false;
}

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open: " + path.string());
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) fields.push_back(cell);
    if (!ss && line.back() == ',') fields.push_back("");
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  return table;
}

}  // namespace latred
