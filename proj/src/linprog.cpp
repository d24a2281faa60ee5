#include "stratdef/linprog.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stratdef/error.hpp"

namespace stratdef {

namespace {

constexpr double kEps = 1e-9;

// Tableau with one slack per inequality and one artificial per row that
// needs it; phase 1 drives the artificials to zero, phase 2 optimizes c.
class Simplex {
 public:
  Simplex(const LpProblem& p) {
    n_vars_ = p.c.size();
    const std::size_t n_ub = p.a_ub.size();
    const std::size_t n_eq = p.a_eq.size();
    n_rows_ = n_ub + n_eq;
    n_slack_ = n_ub;

    // columns: structural | slack | artificial | rhs
    n_art_ = n_rows_;
    cols_ = n_vars_ + n_slack_ + n_art_ + 1;
    t_.assign(n_rows_ + 1, std::vector<double>(cols_, 0.0));
    basis_.assign(n_rows_, 0);

    for (std::size_t r = 0; r < n_ub; ++r) {
      double sign = p.b_ub[r] < 0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < n_vars_; ++j) t_[r][j] = sign * p.a_ub[r][j];
      t_[r][n_vars_ + r] = sign * 1.0;  // slack keeps its sign with the row
      t_[r][rhs()] = sign * p.b_ub[r];
    }
    for (std::size_t r = 0; r < n_eq; ++r) {
      const std::size_t row = n_ub + r;
      double sign = p.b_eq[r] < 0 ? -1.0 : 1.0;
      for (std::size_t j = 0; j < n_vars_; ++j) {
        t_[row][j] = sign * p.a_eq[r][j];
      }
      t_[row][rhs()] = sign * p.b_eq[r];
    }
    for (std::size_t r = 0; r < n_rows_; ++r) {
      t_[r][n_vars_ + n_slack_ + r] = 1.0;
      basis_[r] = n_vars_ + n_slack_ + r;
    }
  }

  LpSolution solve(const LpProblem& p) {
    // Phase 1: minimize sum of artificials == maximize -sum.
    auto& obj = t_[n_rows_];
    std::fill(obj.begin(), obj.end(), 0.0);
    for (std::size_t a = 0; a < n_art_; ++a) {
      obj[n_vars_ + n_slack_ + a] = -1.0;
    }
    price_out();
    run();
    if (t_[n_rows_][rhs()] < -1e-7) {
      return {LpSolution::Status::Infeasible, {}, 0.0};
    }
    // Pivot any artificial still in the basis out (degenerate rows).
    for (std::size_t r = 0; r < n_rows_; ++r) {
      if (basis_[r] < n_vars_ + n_slack_) continue;
      bool pivoted = false;
      for (std::size_t j = 0; j < n_vars_ + n_slack_ && !pivoted; ++j) {
        if (std::abs(t_[r][j]) > kEps) {
          pivot(r, j);
          pivoted = true;
        }
      }
      // an all-zero row is redundant; the artificial stays at value 0
    }

    // Phase 2: the real objective.
    std::fill(obj.begin(), obj.end(), 0.0);
    for (std::size_t j = 0; j < n_vars_; ++j) obj[j] = p.c[j];
    blocked_ = n_vars_ + n_slack_;  // artificials may not re-enter
    price_out();
    if (!run()) return {LpSolution::Status::Unbounded, {}, 0.0};

    LpSolution s;
    s.status = LpSolution::Status::Optimal;
    s.x.assign(n_vars_, 0.0);
    for (std::size_t r = 0; r < n_rows_; ++r) {
      if (basis_[r] < n_vars_) s.x[basis_[r]] = t_[r][rhs()];
    }
    s.value = 0.0;
    for (std::size_t j = 0; j < n_vars_; ++j) s.value += p.c[j] * s.x[j];
    return s;
  }

 private:
  std::size_t rhs() const { return cols_ - 1; }

  // Express the objective row in terms of the current nonbasic variables.
  void price_out() {
    auto& obj = t_[n_rows_];
    for (std::size_t r = 0; r < n_rows_; ++r) {
      const double coef = obj[basis_[r]];
      if (coef == 0.0) continue;
      for (std::size_t j = 0; j < cols_; ++j) obj[j] -= coef * t_[r][j];
    }
  }

  void pivot(std::size_t row, std::size_t col) {
    const double p = t_[row][col];
    for (std::size_t j = 0; j < cols_; ++j) t_[row][j] /= p;
    for (std::size_t r = 0; r <= n_rows_; ++r) {
      if (r == row) continue;
      const double f = t_[r][col];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < cols_; ++j) t_[r][j] -= f * t_[row][j];
    }
    basis_[row] = col;
  }

  // Bland's rule; returns false on unboundedness.
  bool run() {
    const std::size_t limit = blocked_ ? blocked_ : cols_ - 1;
    for (int iter = 0; iter < 10000; ++iter) {
      std::size_t enter = limit;
      for (std::size_t j = 0; j < limit; ++j) {
        if (t_[n_rows_][j] > kEps) {
          enter = j;
          break;
        }
      }
      if (enter == limit) return true;  // optimal
      std::size_t leave = n_rows_;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (std::size_t r = 0; r < n_rows_; ++r) {
        if (t_[r][enter] > kEps) {
          const double ratio = t_[r][rhs()] / t_[r][enter];
          if (ratio < best_ratio - kEps ||
              (ratio < best_ratio + kEps &&
               (leave == n_rows_ || basis_[r] < basis_[leave]))) {
            best_ratio = ratio;
            leave = r;
          }
        }
      }
      if (leave == n_rows_) return false;  // unbounded
      pivot(leave, enter);
    }
    throw SolverError("simplex iteration limit exceeded");
  }

  std::vector<std::vector<double>> t_;
  std::vector<std::size_t> basis_;
  std::size_t n_vars_ = 0, n_rows_ = 0, n_slack_ = 0, n_art_ = 0, cols_ = 0;
  std::size_t blocked_ = 0;
};

}  // namespace

LpSolution solve_lp(const LpProblem& p) {
  for (const auto& row : p.a_ub) {
    if (row.size() != p.c.size()) throw ContractError("lp: ragged a_ub");
  }
  for (const auto& row : p.a_eq) {
    if (row.size() != p.c.size()) throw ContractError("lp: ragged a_eq");
  }
  if (p.a_ub.size() != p.b_ub.size() || p.a_eq.size() != p.b_eq.size()) {
    throw ContractError("lp: rhs size mismatch");
  }
  Simplex s(p);
  return s.solve(p);
}

}  // namespace stratdef
