#pragma once

#include <vector>

namespace stratdef {

// Dense LP in the form
//   maximize c.x  subject to  A_ub x <= b_ub,  A_eq x = b_eq,  x >= 0.
// Solved with a two-phase primal simplex (Bland's rule). Sized for the tiny
// dense problems the game solver produces.
struct LpProblem {
  std::vector<double> c;
  std::vector<std::vector<double>> a_ub;
  std::vector<double> b_ub;
  std::vector<std::vector<double>> a_eq;
  std::vector<double> b_eq;
};

struct LpSolution {
  enum class Status { Optimal, Infeasible, Unbounded };
  Status status = Status::Infeasible;
  std::vector<double> x;
  double value = 0.0;
};

LpSolution solve_lp(const LpProblem& p);

}  // namespace stratdef
