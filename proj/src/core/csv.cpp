#include "csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mscluster::csv {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(trim(cur));
  return out;
}

}  // namespace

int Table::col(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

int Table::col_required(const std::string& name) const {
  int c = col(name);
  require(c >= 0, errc::schema, "missing required column '" + name + "'");
  return c;
}

Table read_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io, "cannot open '" + path + "'");
  Table t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    if (first) {
      t.header = cells;
      first = false;
    } else {
      require(cells.size() == t.header.size(), errc::parse,
              path + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                  std::to_string(t.header.size()));
      t.rows.push_back(std::move(cells));
    }
  }
  require(!first, errc::parse, path + ": empty file (header row required)");
  return t;
}

bool is_missing(const std::string& cell) {
  if (cell.empty()) return true;
  std::string lower;
  for (char ch : cell) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  return lower == "na" || lower == "nan" || lower == "null";
}

double to_double(const std::string& cell, const std::string& context) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(b, e, v);
  require(ec == std::errc() && ptr == e, errc::parse, context + ": not a number: '" + cell + "'");
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Writer::Impl {
  std::ofstream out;
};

Writer::Writer(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path);
  require(impl_->out.good(), errc::io, "cannot write '" + path + "'");
}

Writer::~Writer() { delete impl_; }

void Writer::row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) impl_->out << ',';
    impl_->out << cells[i];
  }
  impl_->out << '\n';
}

void Writer::close() {
  impl_->out.close();
  require(impl_->out.good(), errc::io, "write failed on close");
}

void write_matrix(const std::string& path, const Matrix& m) {
  std::ofstream out(path);
  require(out.good(), errc::io, "cannot write '" + path + "'");
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << format_double(m(i, j));
    }
    out << '\n';
  }
}

Matrix read_matrix(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io, "cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_line(line);
    std::vector<double> row;
    row.reserve(cells.size());
    for (auto& c : cells) row.push_back(to_double(c, path));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), errc::parse, path + ": empty matrix");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows[0].size(), errc::parse, path + ": ragged matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace mscluster::csv
