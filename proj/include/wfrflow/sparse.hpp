#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wfrflow/types.hpp"

namespace wfrflow {

struct IndexPair {
  Index row = 0;
  Index col = 0;
  friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

struct Triplet {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

// Set of admissible (row, col) pairs, kept sorted by (row, col) without duplicates.
class SupportMask {
public:
  SupportMask() = default;
  SupportMask(Index rows, Index cols) : rows_(rows), cols_(cols) {}
  SupportMask(Index rows, Index cols, std::vector<IndexPair> allowed);

  static SupportMask full(Index rows, Index cols);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::size_t size() const { return allowed_.size(); }
  bool empty() const { return allowed_.empty(); }
  const std::vector<IndexPair>& allowed() const { return allowed_; }
  bool contains(Index i, Index j) const;

private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<IndexPair> allowed_;
};

// Row-major sorted triplet storage. Absent entries are structural zeros for
// couplings and +inf for costs.
class SparseMatrix {
public:
  SparseMatrix() = default;
  SparseMatrix(Index rows, Index cols) : rows_(rows), cols_(cols) {}
  // Sorts by (row, col); rejects duplicates and out-of-range indices.
  SparseMatrix(Index rows, Index cols, std::vector<Triplet> entries);

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  std::size_t nnz() const { return entries_.size(); }
  std::span<const Triplet> entries() const { return entries_; }
  std::vector<Triplet>& mutable_entries() { return entries_; }

  // Binary search; returns fallback when (i, j) is not stored.
  double value_at(Index i, Index j, double fallback = 0.0) const;
  std::vector<double> row_sums() const;
  std::vector<double> col_sums() const;
  double total() const;
  SupportMask support() const;

private:
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Triplet> entries_;
};

class CostMatrix : public SparseMatrix {
public:
  using SparseMatrix::SparseMatrix;
  explicit CostMatrix(SparseMatrix m) : SparseMatrix(std::move(m)) {}
};

class SparseCoupling : public SparseMatrix {
public:
  using SparseMatrix::SparseMatrix;
  explicit SparseCoupling(SparseMatrix m) : SparseMatrix(std::move(m)) {}
};

// Text format: header "rows cols nnz", then one "i j value" line per entry.
void write_triplets(std::ostream& out, const SparseMatrix& m);
void write_triplets(const std::string& path, const SparseMatrix& m);
SparseMatrix read_triplets(std::istream& in);
SparseMatrix read_triplets_file(const std::string& path);

}  // namespace wfrflow
