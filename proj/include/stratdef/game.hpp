#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stratdef/threat.hpp"

namespace stratdef {

// One follower type in the Bayesian Stackelberg game. The leader mixes over
// columns; the follower picks a row after observing the mixed strategy.
struct FollowerType {
  std::string name;
  double probability = 0.0;
  std::vector<std::string> moves;
  // payoff[follower_move][leader_move]
  std::vector<std::vector<double>> follower_payoff;
  std::vector<std::vector<double>> leader_payoff;
};

struct GameInstance {
  std::vector<std::string> leader_moves;
  std::vector<FollowerType> followers;

  void validate() const;  // throws on shape/probability errors
};

struct GameSolution {
  std::vector<double> leader_strategy;
  double leader_value = 0.0;
  std::vector<std::size_t> follower_best_responses;  // one per type
};

// Defender-vs-attacker constant-sum block (attacker reward = R, defender
// reward = 100 - R) plus a single-move legitimate-user block whose shared
// reward is clean accuracy x 100. Type probabilities are (alpha, 1 - alpha).
struct AttackerMove {
  AttackTag attack = AttackTag::Saliency;
  std::string substitute;
};

GameInstance build_game(const std::vector<std::string>& leader_moves,
                        const std::vector<AttackerMove>& attacker_moves,
                        const RateTable& rates,
                        const std::map<std::string, double>& clean_accuracy,
                        double alpha);

// Strong-Stackelberg solution by follower-response enumeration: one LP per
// joint pure-response profile, keeping the feasible profile with the best
// leader value. Ties break in the leader's favor by construction.
GameSolution solve_stackelberg(const GameInstance& g);

// Grid search over the leader simplex; verification oracle for small games.
GameSolution brute_force_stackelberg(const GameInstance& g, double resolution);

// Expected leader value of a fixed mixed strategy against best-responding
// followers (leader-favorable tie break).
double leader_value_against_best_response(const GameInstance& g,
                                          const std::vector<double>& strategy);

void save_game_dump(const std::filesystem::path& path, const GameInstance& g,
                    const GameSolution& s);

}  // namespace stratdef
