#include "commands.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "relaxmpc/control_design.h"
#include "relaxmpc/errors.h"

namespace relaxmpc {
namespace cli {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;
namespace fm = formulation;
namespace fs = std::filesystem;

int worker_count() {
  const char* env = std::getenv("RELAXMPC_WORKERS");
  if (env == nullptr || *env == '\0') {
    return std::max(1u, std::thread::hardware_concurrency());
  }
  char* end = nullptr;
  const long w = std::strtol(env, &end, 10);
  if (*end != '\0' || w < 1 || w > 1024) {
    throw ConfigError("RELAXMPC_WORKERS must be an integer in [1, 1024]");
  }
  return static_cast<int>(w);
}

void parallel_for(int n, int workers, const std::function<void(int)>& job) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  const fs::path tmp = p.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write '" + tmp.string() + "'");
    f << content;
    if (!f) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, p);
}

namespace {

json to_json(const MatrixXd& M) {
  json rows = json::array();
  for (int i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (int j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(r);
  }
  return rows;
}

json to_json(const VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(); }

std::string path_in(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

std::string trace_csv(const Trace& tr, bool timing) {
  std::ostringstream os;
  write_trace_csv(os, tr, timing);
  return os.str();
}

// Squared-violation total over the steps that were actually taken.
double partial_violation(const Trace& tr) {
  double sum = 0.0;
  for (const TraceStep& s : tr.steps) sum += s.violation * s.violation;
  if (tr.termination == Termination::Completed) {
    sum += tr.final_violation * tr.final_violation;
  }
  return sum;
}

double mean_solve_time(const Trace& tr) {
  if (tr.steps.empty()) return 0.0;
  double t = 0.0;
  for (const TraceStep& s : tr.steps) t += s.solve_time;
  return t / static_cast<double>(tr.steps.size());
}

json summarize(const Trace& tr, bool timing) {
  json j;
  const bool done = tr.termination == Termination::Completed;
  j["termination"] = done ? "Completed" : "StoppedInfeasible";
  j["steps"] = tr.steps.size();
  j["stopped_at"] = done ? json() : json(tr.stopped_at);
  j["closed_loop_cost"] = done ? json(closed_loop_cost(tr)) : json();
  j["cumulative_violation"] = partial_violation(tr);
  j["mean_solve_time_s"] = timing ? json(mean_solve_time(tr)) : json();
  j["x_final"] = to_json(tr.x_final);
  return j;
}

json design_linear(const LinearBenchmark& b, const ExperimentConfig& c) {
  json r;
  r["model"] = c.model;
  // Throws SpectralRadiusError for marginally stable models.
  const MatrixXd P = dlyap(b.sys.A, b.Q);
  r["A"] = to_json(b.sys.A);
  r["B"] = to_json(b.sys.B);
  r["spectral_radius"] = spectral_radius(b.sys.A);
  r["P_dlyap"] = to_json(P);
  r["P_f"] = to_json(b.lqr.P_f);
  r["K"] = to_json(b.lqr.K);
  r["X_f_rows"] = b.lqr.X_f.rows();
  r["alpha_N"] = b.lqr.alpha_N;
  const QuadIncLyap L = contraction_constants(b.sys.A, P, b.Q);
  r["c_delta"] = {L.c[0], L.c[1], L.c[2], L.c[3]};
  r["rho_delta"] = L.rho_delta;
  r["epsilon"] = L.epsilon;
  const double w_bar = c.disturbance == "ball" ? c.radius : 0.0;
  r["w_bar"] = w_bar;
  r["delta"] = rpi_level(L, w_bar);

  // Exact-penalty threshold from a ρ-contractive gauge on X, sampled on a
  // grid of nominally feasible states.
  const double rho = 0.5 * (1.0 + spectral_radius(b.sys.A));
  const PolyIncLyap gauge = max_rho_contractive(b.sys.A, rho, b.X);
  const OcpSpec nom = b.spec(fm::Nominal{});
  std::vector<VectorXd> samples;
  const int n = b.sys.n();
  VectorXd lo(n), hi(n);
  for (int i = 0; i < n; ++i) {
    hi(i) = support(b.X, VectorXd::Unit(n, i));
    lo(i) = -support(b.X, -VectorXd::Unit(n, i));
  }
  if (n == 2) {
    for (int i = 0; i <= 6; ++i) {
      for (int k = 0; k <= 6; ++k) {
        const VectorXd x =
            Eigen::Vector2d(lo(0) + (hi(0) - lo(0)) * i / 6.0,
                            lo(1) + (hi(1) - lo(1)) * k / 6.0);
        if (std::isfinite(nominal_value(nom, x))) samples.push_back(x);
      }
    }
  }
  r["gauge_rows"] = gauge.F.rows();
  r["gauge_rho"] = gauge.rho;
  r["exact_penalty_samples"] = samples.size();
  r["exact_penalty_threshold"] =
      samples.size() >= 2 ? json(exact_penalty_threshold(nom, gauge, samples))
                          : json();
  return r;
}

json design_four_tank(const ExperimentConfig& c) {
  const FourTankBenchmark b = four_tank_benchmark(c.tank);
  json r;
  r["model"] = c.model;
  const ContractionReport cr = check_contraction(c.tank, 2.0, 2.0, 0.02, 2.0);
  r["P"] = to_json(b.lyap.P);
  r["contraction_pass"] = cr.pass;
  r["contraction_margin"] = cr.margin;
  if (!cr.pass) {
    throw NotContractive("P = diag(1,2,1,2) is not contractive on [0.02, 2]^4 (margin " +
                         std::to_string(cr.margin) + ")");
  }
  r["x0"] = to_json(b.x0);
  r["y_target"] = to_json(b.terminal.y_target);
  r["delta"] = c.delta > 0.0 ? c.delta : b.delta;
  r["delta_source"] = "user-supplied level";
  r["w_ball"] = b.w_ball;
  return r;
}

// The design does not depend on the initial state; validate the remaining keys.
void validate_for_design(ExperimentConfig c) {
  if (!c.x0 && !c.ray && c.scales.empty()) c.x0 = Eigen::VectorXd::Zero(2);
  make_experiment(c);
}

}  // namespace

json cmd_design(const ExperimentConfig& c) {
  json r;
  if (c.model == "four_tank") {
    r = design_four_tank(c);
  } else if (c.model == "mass_spring_damper") {
    validate_for_design(c);
    r = design_linear(msd_benchmark(c.discretization == "euler"
                                        ? Discretization::ForwardEuler
                                        : Discretization::ZeroOrderHold,
                                    c.dt_s),
                      c);
  } else if (c.model == "harmonic_oscillator") {
    validate_for_design(c);
    // dlyap rejects the marginal model with a SpectralRadiusError.
    r = design_linear(harmonic_benchmark(c.theta_rad), c);
  } else {
    throw ConfigError("model.kind: unknown model '" + c.model + "'");
  }
  write_file_atomic(path_in(c.out_dir, "design.json"), r.dump(2) + "\n");
  return r;
}

json cmd_simulate(const ExperimentConfig& c) {
  const Experiment e = make_experiment(c);
  const int runs = static_cast<int>(e.initial_states.size());
  std::vector<Trace> traces(runs);
  parallel_for(runs, worker_count(), [&](int i) {
    traces[i] = simulate(e.spec, e.initial_states[i], e.disturbance, e.steps);
  });
  json s;
  s["formulation"] = formulation_name(e.spec.formulation);
  s["runs"] = json::array();
  for (int i = 0; i < runs; ++i) {
    const std::string name = "trace_" + std::to_string(i) + ".csv";
    write_file_atomic(path_in(c.out_dir, name), trace_csv(traces[i], c.timing));
    json r = summarize(traces[i], c.timing);
    r["x0"] = to_json(e.initial_states[i]);
    r["trace"] = name;
    s["runs"].push_back(r);
  }
  write_file_atomic(path_in(c.out_dir, "summary.json"), s.dump(2) + "\n");
  return s;
}

json cmd_reproduce_linear(const std::string& out_dir, int workers) {
  const LinearBenchmark b = msd_benchmark();
  const std::vector<std::pair<std::string, Formulation>> variants = {
      {"proposed", fm::SlackInit{b.lambda}},
      {"nominal", fm::Nominal{}},
      {"soft_p", fm::SoftP{b.q_xi}},
      {"soft_t", fm::SoftT{b.q_xi, b.M_tail, std::nullopt}},
      {"soft_g", fm::SoftG{b.q_xi}}};
  const std::vector<double> scales = {1.0, 1.52, 4.0};
  const int T = 400;
  const int nv = static_cast<int>(variants.size());
  const int nc = static_cast<int>(scales.size());
  std::vector<Trace> traces(nv * nc);
  parallel_for(nv * nc, workers, [&](int job) {
    const int v = job % nv, k = job / nv;
    traces[job] = simulate(b.spec(variants[v].second), scales[k] * b.ray,
                           DisturbanceProfile::zero(), T);
  });

  json out;
  std::string table = "c";
  for (const auto& [name, f] : variants) table += "," + name;
  table += "\n";
  out["cost_table"] = json::array();
  for (int k = 0; k < nc; ++k) {
    const Trace& ref = traces[k * nv];
    const double ref_cost = ref.termination == Termination::Completed
                                ? closed_loop_cost(ref)
                                : std::numeric_limits<double>::quiet_NaN();
    json row;
    row["c"] = scales[k];
    table += std::to_string(scales[k]);
    for (int v = 0; v < nv; ++v) {
      const Trace& tr = traces[k * nv + v];
      if (tr.termination == Termination::Completed) {
        const double pct = 100.0 * closed_loop_cost(tr) / ref_cost;
        row[variants[v].first] = number_or_null(pct);
        char buf[32];
        std::snprintf(buf, sizeof(buf), ",%.2f", pct);
        table += buf;
      } else {
        row[variants[v].first] = "infeasible";
        table += ",x";
      }
    }
    table += "\n";
    out["cost_table"].push_back(row);
  }

  // Solve-time ratios at c = 1, where every variant runs the full horizon.
  json times;
  std::string tcsv = "variant,mean_solve_time_s,ratio_to_proposed\n";
  const double t_ref = mean_solve_time(traces[0]);
  for (int v = 0; v < nv; ++v) {
    const double t = mean_solve_time(traces[v]);
    times[variants[v].first] = {{"mean_solve_time_s", t}, {"ratio", t / t_ref}};
    tcsv += variants[v].first + "," + std::to_string(t) + "," +
            std::to_string(t / t_ref) + "\n";
  }
  out["solve_time"] = times;

  const std::vector<std::pair<std::string, Formulation>> bounded = {
      {"nominal", fm::Nominal{}},
      {"soft_p", fm::SoftP{b.q_xi}},
      {"soft_t", fm::SoftT{b.q_xi, b.M_tail, std::nullopt}}};
  std::vector<double> bounds(bounded.size());
  parallel_for(static_cast<int>(bounded.size()), workers, [&](int i) {
    bounds[i] = feasibility_boundary(b.spec(bounded[i].second), b.ray, 0.5, 8.0);
  });
  std::string bcsv = "variant,boundary_c\n";
  for (size_t i = 0; i < bounded.size(); ++i) {
    out["feasibility_boundary"][bounded[i].first] = bounds[i];
    bcsv += bounded[i].first + "," + std::to_string(bounds[i]) + "\n";
  }

  write_file_atomic(path_in(out_dir, "cost_table.csv"), table);
  write_file_atomic(path_in(out_dir, "solve_time.csv"), tcsv);
  write_file_atomic(path_in(out_dir, "boundaries.csv"), bcsv);
  for (int k = 0; k < nc; ++k) {
    for (int v = 0; v < nv; ++v) {
      char name[64];
      std::snprintf(name, sizeof(name), "trace_c%.2f_%s.csv", scales[k],
                    variants[v].first.c_str());
      write_file_atomic(path_in(out_dir, name), trace_csv(traces[k * nv + v], false));
    }
  }
  write_file_atomic(path_in(out_dir, "summary.json"), out.dump(2) + "\n");
  return out;
}

json cmd_reproduce_fourtank(const ExperimentConfig& c, const std::string& out_dir,
                            int workers) {
  if (c.model != "four_tank") {
    throw ConfigError("reproduce-fourtank needs model.kind = four_tank");
  }
  const Experiment e = make_experiment(c);  // validates the remaining keys
  const FourTankBenchmark b = four_tank_benchmark(c.tank);
  const double lambda = c.lambda.value_or(b.lambda);
  const double delta = c.delta > 0.0 ? c.delta : b.delta;
  const std::vector<std::pair<std::string, Formulation>> variants = {
      {"nominal", fm::Nominal{}},
      {"soft_state", fm::SoftP{c.q_xi.value_or(b.q_xi)}},
      {"proposed", fm::SlackInit{lambda}},
      {"tube_slack", fm::TubeSlack{delta, lambda, std::nullopt}}};
  const DisturbanceProfile dist = DisturbanceProfile::ramp(c.peak_winf, c.seed);
  const int nv = static_cast<int>(variants.size());
  std::vector<Trace> traces(nv);
  parallel_for(nv, workers, [&](int v) {
    OcpSpec s = b.spec(variants[v].second);
    s.N = c.horizon;
    traces[v] = simulate(s, e.initial_states.front(), dist, c.steps);
  });

  json out;
  out["seed"] = c.seed;
  out["steps"] = c.steps;
  for (int v = 0; v < nv; ++v) {
    out["controllers"][variants[v].first] = summarize(traces[v], c.timing);
    write_file_atomic(path_in(out_dir, "trace_" + variants[v].first + ".csv"),
                      trace_csv(traces[v], c.timing));
  }
  const double slack_violation = partial_violation(traces[2]);
  const double tube_violation = partial_violation(traces[3]);
  json verdict;
  verdict["nominal_stopped"] = traces[0].termination != Termination::Completed;
  verdict["soft_state_stopped"] = traces[1].termination != Termination::Completed;
  verdict["proposed_completed"] = traces[2].termination == Termination::Completed;
  verdict["tube_slack_completed"] = traces[3].termination == Termination::Completed;
  verdict["tube_to_proposed_violation_ratio"] =
      slack_violation > 0.0 ? json(tube_violation / slack_violation) : json();
  out["verdict"] = verdict;
  write_file_atomic(path_in(out_dir, "summary.json"), out.dump(2) + "\n");
  return out;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Softened-initial-state MPC experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir = "out";
  CLI::App* design = app.add_subcommand("design", "Run the offline design pipeline");
  design->add_option("config", config_path, "Experiment config file")->required();
  CLI::App* sim = app.add_subcommand("simulate", "Simulate the closed loop");
  sim->add_option("config", config_path, "Experiment config file")->required();
  CLI::App* lin = app.add_subcommand("reproduce-linear",
                                     "Mass-spring-damper comparison tables");
  lin->add_option("--out", out_dir, "Output directory");
  CLI::App* tank = app.add_subcommand("reproduce-fourtank",
                                      "Four-tank controller comparison");
  tank->add_option("config", config_path, "Four-tank config file")->required();
  tank->add_option("--out", out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kConfigError;
  }

  try {
    json result;
    if (*design) {
      try {
        result = cmd_design(load_config(config_path));
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        err << "design error: " << e.what() << "\n";
        return kDesignError;
      }
    } else if (*sim) {
      result = cmd_simulate(load_config(config_path));
    } else if (*lin) {
      result = cmd_reproduce_linear(out_dir, worker_count());
    } else {
      result = cmd_reproduce_fourtank(load_config(config_path), out_dir,
                                      worker_count());
    }
    out << result.dump(2) << "\n";
    return kOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const DesignError& e) {
    err << "design error: " << e.what() << "\n";
    return kDesignError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace cli
}  // namespace relaxmpc
