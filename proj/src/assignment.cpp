#include "slotforge/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "slotforge/errors.hpp"

namespace slotforge {

namespace {

void require_square(const Tensor& values, const char* who) {
  if (values.rank() != 2 || values.rows() != values.cols()) {
    throw ContractError(std::string(who) + " needs a square matrix, got " +
                        shape_to_string(values.shape()));
  }
}

// Minimum-cost assignment on an n×n cost matrix given as row-major doubles.
// Returns row -> column.
std::vector<std::size_t> solve_min_cost(const std::vector<double>& cost, std::size_t n) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> rows(n, 0);
  for (std::size_t j = 1; j <= n; ++j) rows[p[j] - 1] = j - 1;
  return rows;
}

// Best total (as a cost to minimize) over rows `rows` and columns `cols`.
double sub_optimum(const std::vector<double>& cost, std::size_t n,
                   const std::vector<std::size_t>& rows, const std::vector<std::size_t>& cols) {
  const std::size_t m = rows.size();
  if (m == 0) return 0.0;
  std::vector<double> sub(m * m);
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = 0; b < m; ++b) sub[a * m + b] = cost[rows[a] * n + cols[b]];
  const auto map = solve_min_cost(sub, m);
  double s = 0.0;
  for (std::size_t a = 0; a < m; ++a) s += sub[a * m + map[a]];
  return s;
}

}  // namespace

double assignment_score(const Tensor& values, const std::vector<std::size_t>& mapping) {
  double s = 0.0;
  for (std::size_t a = 0; a < mapping.size(); ++a) s += values(a, mapping[a]);
  return s;
}

Assignment hungarian(const Tensor& values, Objective objective) {
  require_square(values, "hungarian");
  const std::size_t n = values.rows();
  if (n == 0) return {};
  const double sign = objective == Objective::kMaximize ? -1.0 : 1.0;
  std::vector<double> cost(n * n);
  double scale = 1.0;
  for (std::size_t i = 0; i < n * n; ++i) {
    if (!std::isfinite(values[i])) throw ContractError("hungarian: non-finite matrix entry");
    cost[i] = sign * values[i];
    scale = std::max(scale, std::abs(values[i]));
  }

  const auto first = solve_min_cost(cost, n);
  double best = 0.0;
  for (std::size_t a = 0; a < n; ++a) best += cost[a * n + first[a]];

  // Lexicographic refinement: fix rows in order to the smallest column that
  // still admits an optimal completion.
  const double tol = 1e-10 * scale * static_cast<double>(n);
  std::vector<std::size_t> mapping(n);
  std::vector<std::size_t> free_cols(n);
  for (std::size_t j = 0; j < n; ++j) free_cols[j] = j;
  double fixed = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    std::vector<std::size_t> rest_rows;
    for (std::size_t r = a + 1; r < n; ++r) rest_rows.push_back(r);
    bool chosen = false;
    for (std::size_t ci = 0; ci < free_cols.size() && !chosen; ++ci) {
      const std::size_t c = free_cols[ci];
      std::vector<std::size_t> rest_cols = free_cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(ci));
      const double total = fixed + cost[a * n + c] + sub_optimum(cost, n, rest_rows, rest_cols);
      if (total <= best + tol) {
        mapping[a] = c;
        fixed += cost[a * n + c];
        free_cols.erase(free_cols.begin() + static_cast<std::ptrdiff_t>(ci));
        chosen = true;
      }
    }
    if (!chosen) return {first, assignment_score(values, first)};  // unreachable in exact arithmetic
  }
  return {mapping, assignment_score(values, mapping)};
}

Assignment greedy_match(const Tensor& values, Objective objective) {
  require_square(values, "greedy_match");
  const std::size_t n = values.rows();
  std::vector<std::size_t> mapping(n, 0);
  std::vector<char> taken(n, 0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t best_row = n;
    for (std::size_t row = 0; row < n; ++row) {
      if (taken[row]) continue;
      if (best_row == n) {
        best_row = row;
        continue;
      }
      const double cand = values(row, col), cur = values(best_row, col);
      if (objective == Objective::kMaximize ? cand > cur : cand < cur) best_row = row;
    }
    taken[best_row] = 1;
    mapping[best_row] = col;
  }
  return {mapping, assignment_score(values, mapping)};
}

}  // namespace slotforge
