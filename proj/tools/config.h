#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "relaxmpc/experiments.h"

namespace relaxmpc {
namespace cli {

/// Experiment description read from a sectioned key–value file:
///
///   # comment
///   [model]
///   kind = mass_spring_damper
///   dt_s = 0.05
///
/// Units are part of the key names. Unknown sections or keys, duplicate keys
/// and malformed values raise ConfigError.
struct ExperimentConfig {
  // [model]
  /// mass_spring_damper | four_tank | harmonic_oscillator
  std::string model = "mass_spring_damper";
  /// Sampling time of the linear models.
  double dt_s = 0.05;
  /// zoh | euler (mass-spring-damper only).
  std::string discretization = "zoh";
  double theta_rad = 0.3;
  FourTankParams tank = four_tank_default_params();

  // [controller]
  /// nominal | slack_init | implicit | implicit_soft_input | tube |
  /// tube_slack | soft_p | soft_t | soft_g
  std::string formulation = "slack_init";
  int horizon = 10;
  /// Unset weights take the benchmark defaults.
  std::optional<double> lambda;
  std::optional<double> q_xi;
  double delta = 0.0;
  int implicit_steps = 1;
  int tail_steps = 50;
  std::optional<double> sublevel_cap;

  // [initial]
  /// Either an explicit state or a ray with a list of scalings.
  std::optional<Eigen::VectorXd> x0;
  std::optional<Eigen::VectorXd> ray;
  std::vector<double> scales;

  // [disturbance]
  /// zero | ball | ramp
  std::string disturbance = "zero";
  double radius = 0.0;
  double peak_winf = 5e-2;
  std::uint64_t seed = 1;

  // [run]
  int steps = 200;
  std::string out_dir = ".";
  /// Writes measured solve times into the trace (not reproducible).
  bool timing = false;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical text with every key; parse(serialize(c)) reproduces c.
std::string serialize_config(const ExperimentConfig& config);

/// Fully validated problem described by a config.
struct Experiment {
  OcpSpec spec;
  std::vector<Eigen::VectorXd> initial_states;
  DisturbanceProfile disturbance;
  int steps = 0;
};

/// Throws ConfigError for inconsistent settings and lets design errors of
/// the benchmark construction propagate.
Experiment make_experiment(const ExperimentConfig& config);

Formulation make_formulation(const ExperimentConfig& config,
                             double default_lambda, double default_q_xi);

}  // namespace cli
}  // namespace relaxmpc
