#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "latred/errors.hpp"

namespace latred {

/// Binary matrix file: magic "LRMAT1", u64 rows, u64 cols, then column-major
/// little-endian 64-bit floats. Round trips are bit exact.
void write_lrmat(const std::filesystem::path& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_lrmat(const std::filesystem::path& path);

/// CSV export of a matrix for inspection (one row per matrix row).
void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m);

/// Minimal RFC-4180 writer: comma separated, CRLF line endings, numbers
/// printed with 17 significant digits so reruns are byte identical.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void header(const std::vector<std::string>& names);
  void field(const std::string& s);
  void field(double v);
  void field(long v);
  void field(int v);
  void end_row();

 private:
  void separator();
  std::FILE* f_ = nullptr;
  bool row_open_ = false;
};

/// Parsed CSV table (numeric payload with a header row).
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 when absent
};

CsvTable read_csv(const std::filesystem::path& path);

}  // namespace latred
