#include "dpre/lattice.hpp"

#include <cmath>
#include <cstdlib>

#include "dpre/error.hpp"

namespace dpre {

namespace {

// Enumerates prefixes in lexicographic order with |P|_1 <= budget.
void enumerate_prefixes(int depth, int budget, std::vector<int>& current,
                        std::vector<std::vector<int>>& out) {
  if (depth == 0) {
    out.push_back(current);
    return;
  }
  for (int v = -budget; v <= budget; ++v) {
    current.push_back(v);
    enumerate_prefixes(depth - 1, budget - std::abs(v), current, out);
    current.pop_back();
  }
}

}  // namespace

BallLayout::BallLayout(int dim, int radius) : dim_(dim), radius_(radius) {
  if (dim < 1 || dim > kMaxDim) throw DomainError("BallLayout: dimension out of range");
  if (radius < 0) throw DomainError("BallLayout: negative radius");
  const double table_size = prefix_table_size(dim, radius);
  if (table_size > 2e8) throw ResourceError("BallLayout: prefix table too large");
  table_.assign(static_cast<std::size_t>(table_size), -1);

  std::vector<std::vector<int>> prefixes;
  std::vector<int> current;
  enumerate_prefixes(dim - 1, radius, current, prefixes);
  rows_.reserve(prefixes.size());
  prefixes_.reserve(prefixes.size() * static_cast<std::size_t>(dim - 1));
  const std::size_t side = 2 * static_cast<std::size_t>(radius) + 1;
  for (const auto& p : prefixes) {
    int norm = 0;
    std::size_t key = 0;
    std::size_t stride = 1;
    for (int c : p) {
      norm += std::abs(c);
      key += static_cast<std::size_t>(c + radius) * stride;
      stride *= side;
    }
    table_[key] = static_cast<std::int32_t>(rows_.size());
    const int r = radius - norm;
    rows_.push_back({size_, r});
    size_ += static_cast<std::size_t>(r) + 1;
    prefixes_.insert(prefixes_.end(), p.begin(), p.end());
  }
}

std::ptrdiff_t BallLayout::find_row(std::span<const int> prefix) const {
  const std::size_t side = 2 * static_cast<std::size_t>(radius_) + 1;
  std::size_t key = 0;
  std::size_t stride = 1;
  int norm = 0;
  for (int c : prefix) {
    if (c < -radius_ || c > radius_) return -1;
    norm += std::abs(c);
    key += static_cast<std::size_t>(c + radius_) * stride;
    stride *= side;
  }
  if (norm > radius_) return -1;
  return table_[key];
}

std::ptrdiff_t BallLayout::index_of(std::span<const int> x) const {
  const std::ptrdiff_t r = find_row(x.first(static_cast<std::size_t>(dim_ - 1)));
  if (r < 0) return -1;
  const Row& row = rows_[static_cast<std::size_t>(r)];
  const int z = x[static_cast<std::size_t>(dim_ - 1)];
  if (z < -row.radius || z > row.radius || ((z + row.radius) & 1) != 0) return -1;
  return static_cast<std::ptrdiff_t>(row.offset) + (z + row.radius) / 2;
}

void BallLayout::site(std::size_t r, int i, std::span<int> x) const {
  const auto p = prefix(r);
  for (std::size_t j = 0; j < p.size(); ++j) x[j] = p[j];
  x[static_cast<std::size_t>(dim_ - 1)] = -rows_[r].radius + 2 * i;
}

double BallLayout::count_sites(int dim, int radius) {
  // c[k] = number of points of Z^{dim-1} with l1-norm k.
  std::vector<double> c(static_cast<std::size_t>(radius) + 1, 0.0);
  c[0] = 1.0;
  for (int m = 1; m < dim; ++m) {
    std::vector<double> next(c.size(), 0.0);
    for (std::size_t k = 0; k < c.size(); ++k) {
      next[k] = c[k];
      for (std::size_t i = 1; i <= k; ++i) next[k] += 2.0 * c[k - i];
    }
    c = std::move(next);
  }
  double total = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) total += c[k] * static_cast<double>(radius - static_cast<int>(k) + 1);
  return total;
}

double BallLayout::prefix_table_size(int dim, int radius) {
  return std::pow(2.0 * radius + 1.0, dim - 1);
}

}  // namespace dpre
