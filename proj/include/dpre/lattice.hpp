#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dpre {

inline constexpr int kMaxDim = 8;

// Row-compressed storage of {x in Z^d : |x|_1 <= R, |x|_1 = R (mod 2)}, the
// support of an R-step walk. A row fixes the first d-1 coordinates (the
// prefix P); it holds the last coordinate z = -r, -r+2, ..., r with
// r = R - |P|_1, so every row has r + 1 entries. Rows are looked up through a
// dense table over [-R, R]^{d-1}.
class BallLayout {
 public:
  struct Row {
    std::size_t offset;
    int radius;
  };

  BallLayout(int dim, int radius);

  int dim() const { return dim_; }
  int radius() const { return radius_; }
  std::size_t size() const { return size_; }
  std::size_t row_count() const { return rows_.size(); }
  const Row& row(std::size_t i) const { return rows_[i]; }
  std::span<const int> prefix(std::size_t i) const {
    return {prefixes_.data() + i * static_cast<std::size_t>(dim_ - 1), static_cast<std::size_t>(dim_ - 1)};
  }

  // Row index for a prefix, or -1 when |prefix|_1 > radius.
  std::ptrdiff_t find_row(std::span<const int> prefix) const;
  // Flat index of x, or -1 if x is outside the support.
  std::ptrdiff_t index_of(std::span<const int> x) const;
  // Coordinates of entry i of row r.
  void site(std::size_t r, int i, std::span<int> x) const;

  // Number of sites of the layout, computed without building it.
  static double count_sites(int dim, int radius);
  static double prefix_table_size(int dim, int radius);

 private:
  int dim_;
  int radius_;
  std::size_t size_ = 0;
  std::vector<Row> rows_;
  std::vector<int> prefixes_;
  std::vector<std::int32_t> table_;
};

}  // namespace dpre
