#include "stratdef/game.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stratdef/error.hpp"
#include "stratdef/linprog.hpp"
#include "stratdef/textio.hpp"

namespace stratdef {

void GameInstance::validate() const {
  if (leader_moves.empty()) throw ContractError("game: no leader moves");
  double total_prob = 0.0;
  for (const FollowerType& t : followers) {
    total_prob += t.probability;
    if (t.probability < -1e-12) throw ContractError("game: negative type prob");
    if (t.moves.empty()) throw ContractError("game: follower has no moves");
    if (t.follower_payoff.size() != t.moves.size() ||
        t.leader_payoff.size() != t.moves.size()) {
      throw ContractError("game: payoff row count mismatch");
    }
    for (std::size_t m = 0; m < t.moves.size(); ++m) {
      if (t.follower_payoff[m].size() != leader_moves.size() ||
          t.leader_payoff[m].size() != leader_moves.size()) {
        throw ContractError("game: payoff column count mismatch");
      }
    }
  }
  if (std::abs(total_prob - 1.0) > 1e-9) {
    throw ContractError("game: type probabilities must sum to 1");
  }
}

GameInstance build_game(const std::vector<std::string>& leader_moves,
                        const std::vector<AttackerMove>& attacker_moves,
                        const RateTable& rates,
                        const std::map<std::string, double>& clean_accuracy,
                        double alpha) {
  if (alpha < 0.0 || alpha > 1.0) {
    throw ContractError("build_game: alpha must be in [0,1]");
  }
  if (attacker_moves.empty()) {
    throw ContractError("build_game: no attacker moves");
  }
  GameInstance g;
  g.leader_moves = leader_moves;

  FollowerType attacker;
  attacker.name = "attacker";
  attacker.probability = alpha;
  for (const AttackerMove& mv : attacker_moves) {
    attacker.moves.push_back(attack_name(mv.attack) + ":" + mv.substitute);
    std::vector<double> att_row, def_row;
    for (const std::string& model : leader_moves) {
      if (!rates.has(mv.attack, mv.substitute, model)) {
        throw ConfigError("build_game: missing rate for (" +
                          attack_name(mv.attack) + ", " + mv.substitute +
                          ") vs " + model);
      }
      const double r = rates.get(mv.attack, mv.substitute, model);
      att_row.push_back(r);
      def_row.push_back(100.0 - r);  // constant-sum block
    }
    attacker.follower_payoff.push_back(std::move(att_row));
    attacker.leader_payoff.push_back(std::move(def_row));
  }

  FollowerType legit;
  legit.name = "legitimate";
  legit.probability = 1.0 - alpha;
  legit.moves = {"use"};
  std::vector<double> acc_row;
  for (const std::string& model : leader_moves) {
    auto it = clean_accuracy.find(model);
    if (it == clean_accuracy.end()) {
      throw ConfigError("build_game: missing clean accuracy for " + model);
    }
    if (it->second < 0.0 || it->second > 1.0) {
      throw ContractError("build_game: accuracy out of [0,1] for " + model);
    }
    acc_row.push_back(100.0 * it->second);
  }
  legit.follower_payoff.push_back(acc_row);
  legit.leader_payoff.push_back(acc_row);

  g.followers.push_back(std::move(attacker));
  g.followers.push_back(std::move(legit));
  g.validate();
  return g;
}

GameSolution solve_stackelberg(const GameInstance& g) {
  g.validate();
  const std::size_t n = g.leader_moves.size();
  const std::size_t n_types = g.followers.size();

  // Enumerate joint pure-response profiles; for each, the LP maximizes the
  // leader's expected value subject to the simplex and the incentive
  // constraints that make every enumerated response optimal for its type.
  std::vector<std::size_t> profile(n_types, 0);
  GameSolution best;
  bool found = false;

  for (;;) {
    LpProblem lp;
    lp.c.assign(n, 0.0);
    for (std::size_t t = 0; t < n_types; ++t) {
      const FollowerType& ft = g.followers[t];
      const auto& lp_row = ft.leader_payoff[profile[t]];
      for (std::size_t z = 0; z < n; ++z) {
        lp.c[z] += ft.probability * lp_row[z];
      }
      for (std::size_t alt = 0; alt < ft.moves.size(); ++alt) {
        if (alt == profile[t]) continue;
        // follower_payoff[chosen].x >= follower_payoff[alt].x
        std::vector<double> row(n, 0.0);
        for (std::size_t z = 0; z < n; ++z) {
          row[z] = ft.follower_payoff[alt][z] -
                   ft.follower_payoff[profile[t]][z];
        }
        lp.a_ub.push_back(std::move(row));
        lp.b_ub.push_back(0.0);
      }
    }
    lp.a_eq.push_back(std::vector<double>(n, 1.0));
    lp.b_eq.push_back(1.0);

    LpSolution sol = solve_lp(lp);
    if (sol.status == LpSolution::Status::Optimal) {
      if (!found || sol.value > best.leader_value + 1e-12) {
        best.leader_strategy = sol.x;
        best.leader_value = sol.value;
        best.follower_best_responses = profile;
        found = true;
      }
    }

    // next profile
    std::size_t t = 0;
    while (t < n_types && ++profile[t] == g.followers[t].moves.size()) {
      profile[t] = 0;
      ++t;
    }
    if (t == n_types) break;
  }

  if (!found) {
    throw SolverError("no follower-response profile yielded a feasible LP");
  }

  // Clean numerical residue: clamp and renormalize.
  double total = 0.0;
  for (double& p : best.leader_strategy) {
    if (p < 0.0) p = 0.0;
    total += p;
  }
  if (total <= 0.0) throw SolverError("degenerate leader strategy");
  for (double& p : best.leader_strategy) p /= total;
  return best;
}

namespace {

// Best response of one type to a fixed leader mix; follower ties break in
// the leader's favor, then by lowest move index.
std::size_t best_response(const FollowerType& ft,
                          const std::vector<double>& x, double* leader_payoff) {
  std::size_t best = 0;
  double best_follower = -1e300, best_leader = -1e300;
  for (std::size_t m = 0; m < ft.moves.size(); ++m) {
    double ef = 0.0, el = 0.0;
    for (std::size_t z = 0; z < x.size(); ++z) {
      ef += ft.follower_payoff[m][z] * x[z];
      el += ft.leader_payoff[m][z] * x[z];
    }
    if (ef > best_follower + 1e-12 ||
        (ef > best_follower - 1e-12 && el > best_leader + 1e-12)) {
      best = m;
      best_follower = std::max(best_follower, ef);
      best_leader = el;
    }
    best_follower = std::max(best_follower, ef);
  }
  if (leader_payoff) *leader_payoff = best_leader;
  return best;
}

}  // namespace

double leader_value_against_best_response(const GameInstance& g,
                                          const std::vector<double>& strategy) {
  double value = 0.0;
  for (const FollowerType& ft : g.followers) {
    double leader_payoff = 0.0;
    best_response(ft, strategy, &leader_payoff);
    value += ft.probability * leader_payoff;
  }
  return value;
}

GameSolution brute_force_stackelberg(const GameInstance& g,
                                     double resolution) {
  g.validate();
  const std::size_t n = g.leader_moves.size();
  if (n > 4) {
    throw ContractError("brute force limited to <= 4 leader moves");
  }
  const auto steps = static_cast<std::size_t>(std::llround(1.0 / resolution));

  GameSolution best;
  best.leader_value = -1e300;
  std::vector<double> x(n, 0.0);

  // Enumerate compositions of `steps` into n parts.
  std::vector<std::size_t> parts(n, 0);
  auto evaluate = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(parts[i]) / static_cast<double>(steps);
    }
    const double value = leader_value_against_best_response(g, x);
    if (value > best.leader_value) {
      best.leader_value = value;
      best.leader_strategy = x;
    }
  };
  // iterative odometer over compositions
  std::size_t level = 0;
  std::vector<std::size_t> remaining(n + 1, 0);
  remaining[0] = steps;
  for (;;) {
    if (level == n - 1) {
      parts[level] = remaining[level];
      evaluate();
      if (n == 1) break;
      --level;
      ++parts[level];
      continue;
    }
    if (parts[level] > remaining[level]) {
      if (level == 0) break;
      parts[level] = 0;
      --level;
      ++parts[level];
      continue;
    }
    remaining[level + 1] = remaining[level] - parts[level];
    ++level;
    parts[level] = 0;
  }

  best.follower_best_responses.clear();
  for (const FollowerType& ft : g.followers) {
    best.follower_best_responses.push_back(
        best_response(ft, best.leader_strategy, nullptr));
  }
  return best;
}

void save_game_dump(const std::filesystem::path& path, const GameInstance& g,
                    const GameSolution& s) {
  std::ostringstream out;
  out << "leader";
  for (const auto& m : g.leader_moves) out << ' ' << m;
  out << '\n';
  for (const FollowerType& ft : g.followers) {
    out << "type " << ft.name << " prob " << fmt_double(ft.probability)
        << '\n';
    for (std::size_t m = 0; m < ft.moves.size(); ++m) {
      out << "  " << ft.moves[m] << " follower";
      for (double v : ft.follower_payoff[m]) out << ' ' << fmt_double(v);
      out << " leader";
      for (double v : ft.leader_payoff[m]) out << ' ' << fmt_double(v);
      out << '\n';
    }
  }
  out << "solution";
  for (double p : s.leader_strategy) out << ' ' << fmt_fixed(p, 6);
  out << '\n';
  out << "value " << fmt_double(s.leader_value) << '\n';
  out << "responses";
  for (std::size_t r : s.follower_best_responses) out << ' ' << r;
  out << '\n';
  write_text_file(path, out.str());
}

}  // namespace stratdef
