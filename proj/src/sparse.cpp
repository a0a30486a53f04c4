#include "wfrflow/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "text_util.hpp"
#include "wfrflow/error.hpp"

namespace wfrflow {

SupportMask::SupportMask(Index rows, Index cols, std::vector<IndexPair> allowed)
    : rows_(rows), cols_(cols), allowed_(std::move(allowed)) {
  std::sort(allowed_.begin(), allowed_.end());
  allowed_.erase(std::unique(allowed_.begin(), allowed_.end()), allowed_.end());
  for (const auto& p : allowed_) {
    if (p.row < 0 || p.row >= rows_ || p.col < 0 || p.col >= cols_)
      throw InvalidArgument("mask entry out of range");
  }
}

SupportMask SupportMask::full(Index rows, Index cols) {
  std::vector<IndexPair> all;
  all.reserve(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols));
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) all.push_back({i, j});
  SupportMask m(rows, cols);
  m.allowed_ = std::move(all);
  return m;
}

bool SupportMask::contains(Index i, Index j) const {
  return std::binary_search(allowed_.begin(), allowed_.end(), IndexPair{i, j});
}

SparseMatrix::SparseMatrix(Index rows, Index cols, std::vector<Triplet> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  if (rows < 0 || cols < 0) throw InvalidArgument("negative matrix shape");
  auto less = [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  };
  if (!std::is_sorted(entries_.begin(), entries_.end(), less))
    std::sort(entries_.begin(), entries_.end(), less);
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    const auto& t = entries_[e];
    if (t.row < 0 || t.row >= rows_ || t.col < 0 || t.col >= cols_)
      throw InvalidArgument("sparse entry out of range");
    if (e > 0 && entries_[e - 1].row == t.row && entries_[e - 1].col == t.col)
      throw InvalidArgument("duplicate sparse entry");
  }
}

double SparseMatrix::value_at(Index i, Index j, double fallback) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), IndexPair{i, j},
                             [](const Triplet& t, const IndexPair& p) {
                               return t.row != p.row ? t.row < p.row : t.col < p.col;
                             });
  if (it != entries_.end() && it->row == i && it->col == j) return it->value;
  return fallback;
}

std::vector<double> SparseMatrix::row_sums() const {
  std::vector<double> s(static_cast<std::size_t>(rows_), 0.0);
  for (const auto& t : entries_) s[t.row] += t.value;
  return s;
}

std::vector<double> SparseMatrix::col_sums() const {
  std::vector<double> s(static_cast<std::size_t>(cols_), 0.0);
  for (const auto& t : entries_) s[t.col] += t.value;
  return s;
}

double SparseMatrix::total() const {
  double s = 0.0;
  for (const auto& t : entries_) s += t.value;
  return s;
}

SupportMask SparseMatrix::support() const {
  std::vector<IndexPair> pairs;
  pairs.reserve(entries_.size());
  for (const auto& t : entries_) pairs.push_back({t.row, t.col});
  return SupportMask(rows_, cols_, std::move(pairs));
}

void write_triplets(std::ostream& out, const SparseMatrix& m) {
  out << m.rows() << ' ' << m.cols() << ' ' << m.nnz() << '\n';
  out << std::setprecision(17);
  for (const auto& t : m.entries()) out << t.row << ' ' << t.col << ' ' << t.value << '\n';
}

void write_triplets(const std::string& path, const SparseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_triplets(out, m);
  if (!out) throw IoError("write failed: " + path);
}

SparseMatrix read_triplets(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ParseError("missing triplet header", lineno);
  long long rows = 0, cols = 0, nnz = 0;
  {
    std::istringstream hs(line);
    if (!(hs >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0)
      throw ParseError("malformed triplet header", lineno);
  }
  std::vector<Triplet> entries;
  entries.reserve(static_cast<std::size_t>(nnz));
  for (long long e = 0; e < nnz; ++e) {
    if (!next_line()) throw ParseError("fewer entries than declared", lineno);
    std::istringstream ls(line);
    long long i = 0, j = 0;
    std::string value_text;
    if (!(ls >> i >> j >> value_text)) throw ParseError("malformed triplet entry", lineno);
    if (i < 0 || i >= rows || j < 0 || j >= cols) throw ParseError("triplet index out of range", lineno);
    const auto parsed = detail::parse_double(value_text);
    if (!parsed) throw ParseError("malformed triplet value", lineno);
    const double v = *parsed;
    if (std::isnan(v)) throw ParseError("NaN triplet value", lineno);
    entries.push_back({static_cast<Index>(i), static_cast<Index>(j), v});
  }
  if (next_line()) throw ParseError("more entries than declared", lineno);
  try {
    return SparseMatrix(static_cast<Index>(rows), static_cast<Index>(cols), std::move(entries));
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), lineno);
  }
}

SparseMatrix read_triplets_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open: " + path);
  return read_triplets(in);
}

}  // namespace wfrflow
