#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rbir/error.hpp"
#include "rbir/signature.hpp"

namespace rbir {

/// Per-block weights in percent units.
using WeightVector = std::vector<double>;

/// Dense row-major matrix of reals.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), v_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), v_(std::move(values)) {
    if (v_.size() != rows * cols) fail(Errc::shape_mismatch, "matrix value count does not match shape");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }
  std::vector<double>& values() noexcept { return v_; }
  const std::vector<double>& values() const noexcept { return v_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> v_;
};

/// Symmetric n x n ground distance with a zero diagonal.
class GroundDistance {
 public:
  GroundDistance() = default;
  explicit GroundDistance(Matrix d) : d_(std::move(d)) {
    if (d_.rows() != d_.cols()) fail(Errc::shape_mismatch, "ground distance must be square");
    for (std::size_t i = 0; i < d_.rows(); ++i) {
      if (d_(i, i) != 0.0) fail(Errc::invalid_input, "ground distance diagonal must be zero");
      for (std::size_t j = 0; j < i; ++j) {
        if (!(d_(i, j) >= 0.0) || !std::isfinite(d_(i, j)))
          fail(Errc::invalid_input, "ground distance entries must be finite and non-negative");
        if (d_(i, j) != d_(j, i)) fail(Errc::invalid_input, "ground distance must be symmetric");
      }
    }
  }

  std::size_t size() const noexcept { return d_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return d_(i, j); }
  const Matrix& matrix() const noexcept { return d_; }

 private:
  Matrix d_;
};

/// Sum over set levels i of (i/m)*100.
inline double block_weight(std::uint64_t block_mask, int m) {
  double w = 0.0;
  for (int i = 1; i <= m; ++i)
    if (block_mask >> (i - 1) & 1u) w += static_cast<double>(i) / m * 100.0;
  return w;
}

inline WeightVector weight_vector(const BinarySignature& sig) {
  WeightVector w(static_cast<std::size_t>(sig.blocks()));
  for (int k = 0; k < sig.blocks(); ++k) w[k] = block_weight(sig.block_mask(k), sig.bits());
  return w;
}

inline double total_weight(std::span<const double> w) { return std::accumulate(w.begin(), w.end(), 0.0); }

inline GroundDistance ground_distance(const ColorPalette& palette) {
  const std::size_t n = palette.size();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) d(i, j) = d(j, i) = std::sqrt(squared_distance(palette[i], palette[j]));
  return GroundDistance(std::move(d));
}

struct TransportSolution {
  Matrix flow;          ///< supplies x demands
  double cost = 0.0;    ///< sum c_ij f_ij
  double shipped = 0.0; ///< sum f_ij, equals min(sum x, sum y)
  int pivots = 0;
};

namespace detail {

/// Balanced transportation simplex: least-cost start, MODI potentials, Dantzig pricing
/// with a switch to Bland's rule after a run of degenerate pivots. The basis is a spanning
/// tree over R row nodes and C column nodes, kept as adjacency lists.
class TransportSimplex {
 public:
  TransportSimplex(std::vector<double> supply, std::vector<double> demand, Matrix cost)
      : R_(supply.size()),
        C_(demand.size()),
        cost_(std::move(cost)),
        flow_(R_, C_),
        basic_(R_ * C_, 0),
        row_adj_(R_),
        col_adj_(C_),
        parent_(R_ + C_),
        order_(),
        u_(R_),
        v_(C_) {
    double cmax = 0.0;
    for (double c : cost_.values()) cmax = std::max(cmax, std::abs(c));
    tol_ = 1e-9 * std::max(1.0, cmax);
    least_cost_start(std::move(supply), std::move(demand));
  }

  int solve() {
    constexpr int degenerate_run_limit = 32;
    const int max_pivots = 1000 + static_cast<int>(50 * R_ * C_);
    int pivots = 0;
    int degenerate_run = 0;
    while (true) {
      potentials();
      const bool bland = degenerate_run >= degenerate_run_limit;
      std::size_t ei = R_, ej = C_;
      double best = -tol_;
      for (std::size_t i = 0; i < R_ && !(bland && ei < R_); ++i) {
        for (std::size_t j = 0; j < C_; ++j) {
          if (basic_[i * C_ + j]) continue;
          const double r = cost_(i, j) - u_[i] - v_[j];
          if (r < best) {
            best = r;
            ei = i;
            ej = j;
            if (bland) break;
          }
        }
      }
      if (ei == R_) return pivots;
      if (++pivots > max_pivots) fail(Errc::invalid_input, "transportation simplex failed to converge");
      const double step = pivot(ei, ej);
      degenerate_run = step > 0.0 ? 0 : degenerate_run + 1;
    }
  }

  const Matrix& flow() const noexcept { return flow_; }

 private:
  void add_basic(std::size_t i, std::size_t j) {
    basic_[i * C_ + j] = 1;
    row_adj_[i].push_back(j);
    col_adj_[j].push_back(i);
  }

  void remove_basic(std::size_t i, std::size_t j) {
    basic_[i * C_ + j] = 0;
    std::erase(row_adj_[i], j);
    std::erase(col_adj_[j], i);
  }

  /// Cells in ascending cost (ties by position). Each allocation crosses out exactly one
  /// line, the last one both, which yields R+C-1 cells forming a spanning tree.
  void least_cost_start(std::vector<double> sup, std::vector<double> dem) {
    std::vector<std::size_t> cells(R_ * C_);
    for (std::size_t k = 0; k < cells.size(); ++k) cells[k] = k;
    std::stable_sort(cells.begin(), cells.end(),
                     [this](std::size_t a, std::size_t b) { return cost_.values()[a] < cost_.values()[b]; });
    std::vector<char> row_out(R_, 0), col_out(C_, 0);
    std::size_t rows_left = R_, cols_left = C_;
    for (const std::size_t cell : cells) {
      const std::size_t i = cell / C_, j = cell % C_;
      if (row_out[i] || col_out[j]) continue;
      const double q = std::min(sup[i], dem[j]);
      flow_(i, j) = q;
      add_basic(i, j);
      if (rows_left == 1 && cols_left == 1) break;
      const bool cross_row = cols_left == 1 || (rows_left > 1 && sup[i] <= dem[j]);
      if (cross_row) {
        row_out[i] = 1;
        --rows_left;
        dem[j] = std::max(0.0, dem[j] - q);
      } else {
        col_out[j] = 1;
        --cols_left;
        sup[i] = std::max(0.0, sup[i] - q);
      }
    }
  }

  void potentials() {
    constexpr std::size_t unset = std::numeric_limits<std::size_t>::max();
    std::fill(parent_.begin(), parent_.end(), unset);
    order_.clear();
    u_[0] = 0.0;
    parent_[0] = 0;
    order_.push_back(0);  // row ids < R_, column ids offset by R_
    for (std::size_t head = 0; head < order_.size(); ++head) {
      const std::size_t node = order_[head];
      if (node < R_) {
        for (const std::size_t j : row_adj_[node]) {
          if (parent_[R_ + j] != unset) continue;
          v_[j] = cost_(node, j) - u_[node];
          parent_[R_ + j] = node;
          order_.push_back(R_ + j);
        }
      } else {
        const std::size_t j = node - R_;
        for (const std::size_t i : col_adj_[j]) {
          if (parent_[i] != unset) continue;
          u_[i] = cost_(i, j) - v_[j];
          parent_[i] = node;
          order_.push_back(i);
        }
      }
    }
  }

  /// Cells on the basis-tree path from column node `from_col` to row node `to_row`.
  void tree_path(std::size_t from_col, std::size_t to_row) {
    constexpr std::size_t unset = std::numeric_limits<std::size_t>::max();
    std::fill(parent_.begin(), parent_.end(), unset);
    order_.clear();
    const std::size_t start = R_ + from_col;
    parent_[start] = start;
    order_.push_back(start);
    for (std::size_t head = 0; head < order_.size() && parent_[to_row] == unset; ++head) {
      const std::size_t node = order_[head];
      if (node < R_) {
        for (const std::size_t j : row_adj_[node])
          if (parent_[R_ + j] == unset) {
            parent_[R_ + j] = node;
            order_.push_back(R_ + j);
          }
      } else {
        for (const std::size_t i : col_adj_[node - R_])
          if (parent_[i] == unset) {
            parent_[i] = node;
            order_.push_back(i);
          }
      }
    }
    path_.clear();  // walk back from to_row, then reverse
    for (std::size_t node = to_row; node != start; node = parent_[node]) {
      const std::size_t p = parent_[node];
      path_.push_back(node < R_ ? node * C_ + (p - R_) : p * C_ + (node - R_));
    }
    std::reverse(path_.begin(), path_.end());
  }

  double pivot(std::size_t ei, std::size_t ej) {
    tree_path(ej, ei);
    // path_[0] touches column ej and loses flow; signs then alternate.
    double step = std::numeric_limits<double>::infinity();
    std::size_t leave = R_ * C_;
    auto& fv = flow_.values();
    for (std::size_t k = 0; k < path_.size(); k += 2) {
      const double f = fv[path_[k]];
      if (f < step || (f == step && path_[k] < leave)) {
        step = f;
        leave = path_[k];
      }
    }
    for (std::size_t k = 0; k < path_.size(); ++k) {
      if (k % 2 == 0) fv[path_[k]] -= step;
      else fv[path_[k]] += step;
    }
    flow_(ei, ej) = step;
    add_basic(ei, ej);
    remove_basic(leave / C_, leave % C_);
    fv[leave] = 0.0;
    return step;
  }

  std::size_t R_;
  std::size_t C_;
  Matrix cost_;
  Matrix flow_;
  std::vector<char> basic_;
  std::vector<std::vector<std::size_t>> row_adj_;
  std::vector<std::vector<std::size_t>> col_adj_;
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> order_;
  std::vector<std::size_t> path_;
  std::vector<double> u_;
  std::vector<double> v_;
  double tol_;
};

}  // namespace detail

/// Minimum-cost flow shipping exactly min(sum x, sum y) with row sums <= x and column
/// sums <= y. Zero rows and columns are dropped; the surplus side gets a zero-cost slack node.
inline TransportSolution solve_transportation(std::span<const double> supplies, std::span<const double> demands,
                                              const Matrix& costs) {
  if (costs.rows() != supplies.size() || costs.cols() != demands.size())
    fail(Errc::shape_mismatch, "cost matrix shape does not match supplies x demands");
  for (double v : supplies)
    if (!(v >= 0.0) || !std::isfinite(v)) fail(Errc::invalid_input, "supplies must be finite and non-negative");
  for (double v : demands)
    if (!(v >= 0.0) || !std::isfinite(v)) fail(Errc::invalid_input, "demands must be finite and non-negative");

  TransportSolution sol{Matrix(supplies.size(), demands.size()), 0.0, 0.0, 0};
  std::vector<std::size_t> rows, cols;
  for (std::size_t i = 0; i < supplies.size(); ++i)
    if (supplies[i] > 0.0) rows.push_back(i);
  for (std::size_t j = 0; j < demands.size(); ++j)
    if (demands[j] > 0.0) cols.push_back(j);
  if (rows.empty() || cols.empty()) return sol;

  std::vector<double> sup, dem;
  for (auto i : rows) sup.push_back(supplies[i]);
  for (auto j : cols) dem.push_back(demands[j]);
  const double S = total_weight(sup);
  const double D = total_weight(dem);
  const bool slack_col = S > D;
  const bool slack_row = D > S;
  if (slack_col) dem.push_back(S - D);
  if (slack_row) sup.push_back(D - S);

  Matrix c(sup.size(), dem.size(), 0.0);
  for (std::size_t a = 0; a < rows.size(); ++a)
    for (std::size_t b = 0; b < cols.size(); ++b) c(a, b) = costs(rows[a], cols[b]);

  detail::TransportSimplex simplex(std::move(sup), std::move(dem), std::move(c));
  sol.pivots = simplex.solve();
  const Matrix& f = simplex.flow();
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (std::size_t b = 0; b < cols.size(); ++b) {
      const double q = f(a, b);
      sol.flow(rows[a], cols[b]) = q;
      sol.cost += q * costs(rows[a], cols[b]);
      sol.shipped += q;
    }
  }
  return sol;
}

inline TransportSolution solve_transportation(std::span<const double> supplies, std::span<const double> demands,
                                              const GroundDistance& d) {
  return solve_transportation(supplies, demands, d.matrix());
}

/// Optimal cost over the forced flow total W_m = min(sum w_I, sum w_J), divided by W_m.
/// Two empty vectors are at distance 0; one empty vector is infinitely far from a non-empty one.
inline double emd(std::span<const double> wi, std::span<const double> wj, const GroundDistance& d) {
  if (wi.size() != wj.size() || wi.size() != d.size())
    fail(Errc::shape_mismatch, "EMD operands and ground distance differ in size");
  const double si = total_weight(wi);
  const double sj = total_weight(wj);
  const double wm = std::min(si, sj);
  if (wm <= 0.0) return (si <= 0.0 && sj <= 0.0) ? 0.0 : std::numeric_limits<double>::infinity();
  return solve_transportation(wi, wj, d).cost / wm;
}

/// The heavier of the two totals. Reported for completeness; the distance itself uses only W_m.
inline double max_total_weight(std::span<const double> wi, std::span<const double> wj) {
  return std::max(total_weight(wi), total_weight(wj));
}

}  // namespace rbir
