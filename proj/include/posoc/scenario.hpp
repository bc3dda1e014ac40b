#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "posoc/model.hpp"
#include "posoc/pmp.hpp"

namespace posoc {

/// A resolved scenario file: problem data plus training and evaluation
/// settings. Every field has a value after parsing, so `resolved()` fully
/// describes the run.
struct Scenario {
  std::string id;
  std::string kind;  // "lqg" or "obstacle"
  double horizon = 1.0;
  std::optional<LqgSpec> lqg;
  std::optional<ObstacleSpec> obstacle;

  /// Explicit schedule; empty means uniform with n_obs_list.front() points.
  std::vector<double> obs_times;
  std::vector<std::size_t> n_obs_list;
  /// Fixed-beta baselines for noise studies (scalar levels, broadcast).
  std::vector<double> baseline_betas;
  /// Symmetric box |a_i| <= alpha_bound on the control; 0 leaves it unbounded.
  double alpha_bound = 0.0;

  TrainConfig train;
  std::size_t M_eval = 100000;
  std::uint64_t eval_seed = 1;
  double eval_dt = 0.01;
  double riccati_dt = 1e-3;
  /// Trajectories written to the plot dumps.
  std::size_t n_dump = 20;

  /// Observation schedule for N_o observations (explicit schedule when set).
  std::vector<double> schedule(std::size_t n_obs) const;
  std::vector<double> schedule() const;
  ControlProblem problem(const std::vector<double>& obs_times) const;
  /// Problem with the observation control pinned to one candidate.
  ControlProblem problem_with_beta(const std::vector<double>& obs_times, const Vector& beta) const;

  nlohmann::json resolved() const;
  /// FNV-1a of the canonical dump of resolved().
  std::string config_hash() const;
  /// Overrides both training and evaluation seeds.
  void set_seed(std::uint64_t seed);
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::string& path);

std::uint64_t fnv1a(const std::string& s);

}  // namespace posoc
