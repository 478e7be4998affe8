#pragma once

#include <string>
#include <vector>

#include "common.hpp"

namespace mscluster::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const;       // -1 if absent
  int col_required(const std::string& name) const;
};

Table read_file(const std::string& path);

// Cell helpers; row/col reported in error messages are 1-based.
double to_double(const std::string& cell, const std::string& context);
bool is_missing(const std::string& cell);

std::string format_double(double v);  // round-trip exact (max_digits10)

class Writer {
 public:
  explicit Writer(const std::string& path);
  ~Writer();
  void row(const std::vector<std::string>& cells);
  void close();

 private:
  struct Impl;
  Impl* impl_;
};

void write_matrix(const std::string& path, const Matrix& m);
Matrix read_matrix(const std::string& path);

}  // namespace mscluster::csv
