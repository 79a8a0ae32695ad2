// Command-line driver: spectral density estimation for stationary gridded
// data with missing values, one-shot imputation under a given spectrum,
// synthetic field generation, and the two study harnesses.

#include <cstdio>
#include <exception>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pespec/errors.hpp"
#include "pespec/estimator.hpp"
#include "pespec/imputation.hpp"
#include "pespec/io.hpp"
#include "pespec/simulation.hpp"

namespace {

using namespace pespec;

GridData load_input(const std::string& input, const std::string& mask_file) {
  GridData g = read_grid_file(input);
  if (!mask_file.empty())
    g = apply_mask_grid(std::move(g), read_grid_file(mask_file));
  return g;
}

// Fills options a subcommand did not receive on the command line from a
// key=value file. Explicit flags always win.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  if (path.empty()) return;
  std::ifstream in(path);
  if (!in) throw io_error(path + ": cannot open config file");
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigINI{}.from_config(in);
  } catch (const CLI::Error& e) {
    throw io_error(path + ": " + e.what());
  }
  for (const auto& item : items) {
    std::string key = item.fullname();
    CLI::Option* opt =
        key == "config" ? nullptr : cmd->get_option_no_throw("--" + key);
    if (opt == nullptr)
      throw io_error(path + ": unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    try {
      for (const auto& v : item.inputs) opt->add_result(v);
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw io_error(path + ": bad value for '" + key + "': " + e.what());
    }
  }
}

void require_flag(const std::string& value, const char* flag) {
  if (value.empty())
    throw io_error(std::string(flag) + " is required (flag or config file)");
}

// Spectrum files carry the embedding lattice in their own header.
std::pair<LatticeSpec, SpectrumGrid> load_spectrum(const std::string& path,
                                                   const std::vector<int>& y) {
  GridData s = read_grid_file(path);
  if (s.dims.size() != y.size())
    throw io_error(path + ": spectrum dimensionality does not match the data");
  for (std::size_t j = 0; j < y.size(); ++j)
    if (s.dims[j] < y[j])
      throw io_error(path + ": spectrum grid is smaller than the data grid");
  for (auto o : s.observed)
    if (!o) throw io_error(path + ": spectrum must not contain NA cells");
  double tau = 1.0;
  for (std::size_t j = 0; j < y.size(); ++j)
    tau = std::max(tau, static_cast<double>(s.dims[j]) / y[j]);
  LatticeSpec spec{y, s.dims, tau};
  return {spec, SpectrumGrid{spec, std::move(s.values)}};
}

// Completed fields keep the original observed values byte-for-byte, whatever
// centering or rounding happened on the way through.
void restore_observed(GridField& field, const ObservationMask& mask,
                      const std::vector<double>& original) {
  for (std::size_t i = 0; i < mask.n(); ++i)
    field.values[mask.observed_cells[i]] = original[i];
}

struct EstimateArgs {
  std::string input, mask_file, prefix, config_file;
  RunConfig rc;
};

struct ImputeArgs {
  std::string input, mask_file, spectrum, output, prefix, config_file;
  RunConfig rc;
};

struct StudyArgs {
  std::string output, config_file;
  DenseStudyConfig cfg;
  double nu = 0.5, range = 8.0, variance = 2.0;
};

struct SimulateArgs {
  std::string prefix, config_file;
  std::vector<int> y{32, 32};
  int count = 1;
  int setting = 3;
  double nu = 0.5, range = 8.0, variance = 2.0;
  std::uint64_t seed = 1;
};

struct SimStudyArgs {
  std::string output, config_file;
  SimStudyConfig cfg;
  std::string precond_method = "fft";
  int neighbors = 30;
  double nu = 0.5, range = 8.0, variance = 2.0;
};

void add_config_flag(CLI::App* cmd, std::string& path) {
  cmd->add_option("--config", path,
                  "key=value file supplying options not given as flags");
}

void add_solver_flags(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--precond_method", rc.precond_method,
                  "PCG preconditioner: fft | vecchia");
  cmd->add_option("--neighbors", rc.neighbors,
                  "neighbor count for the vecchia preconditioner");
  cmd->add_option("--pcg_tol", rc.pcg_tol, "PCG relative residual tolerance");
  cmd->add_option("--pcg_max_iterations", rc.pcg_max_iterations,
                  "PCG iteration cap");
}

void add_mean_flag(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--mean", rc.mean, "mean handling: none | constant | linear");
}

int run_estimate(const EstimateArgs& a) {
  require_flag(a.input, "--input");
  require_flag(a.prefix, "--output_prefix");
  GridData g = load_input(a.input, a.mask_file);
  LatticeSpec spec = build_embedding(g.dims, a.rc.embed_fac);
  ObservationMask mask = embed_mask(g.observed, spec);
  std::vector<double> data = gather_observed(g);
  if (data.empty()) throw io_error(a.input + ": no observed cells");

  MeanModel mm = fit_mean(data, mask, mean_mode_from(a.rc.mean));
  if (!mm.warning.empty()) std::fprintf(stderr, "warning: %s\n", mm.warning.c_str());
  std::vector<double> centered = remove_mean(data, mask, mm);

  EstimatorConfig cfg = to_estimator_config(a.rc);
  EstimationResult res = run_estimation(centered, mask, spec, cfg);

  write_grid_file(a.prefix + "_spectrum.grid", spec.z, res.spectrum.values);

  GridField condexp = res.conditional_expectation;
  add_mean(condexp, mm);
  restore_observed(condexp, mask, data);
  write_grid_file(a.prefix + "_condexp.grid", spec.z, condexp.values);

  GridField condsim = res.conditional_simulation;
  add_mean(condsim, mm);
  restore_observed(condsim, mask, data);
  write_grid_file(a.prefix + "_condsim.grid", spec.z, condsim.values);

  std::ofstream log(a.prefix + "_log.txt");
  if (!log) throw io_error(a.prefix + "_log.txt: cannot open for writing");
  const bool filtered = cfg.filter == FilterKind::ar1;
  log << (filtered ? "# iteration stat theta\n" : "# iteration stat\n");
  for (std::size_t k = 0; k < res.stat_trace.size(); ++k) {
    log << (k + 1) << ' ' << detail::format_real(res.stat_trace[k]);
    if (filtered) log << ' ' << detail::format_real(res.theta_trace[k]);
    log << '\n';
  }
  log << "# iterations " << res.iterations << '\n';
  log << "# converged " << (res.converged ? 1 : 0) << '\n';
  if (!log) throw io_error(a.prefix + "_log.txt: write failure");

  if (!res.converged)
    std::fprintf(stderr, "did not converge within %d iterations\n",
                 cfg.max_iterations);
  return res.converged ? 0 : 2;
}

int run_condexp(const ImputeArgs& a) {
  require_flag(a.input, "--input");
  require_flag(a.spectrum, "--spectrum");
  require_flag(a.output, "--output");
  GridData g = load_input(a.input, a.mask_file);
  auto [spec, f] = load_spectrum(a.spectrum, g.dims);
  ObservationMask mask = embed_mask(g.observed, spec);
  std::vector<double> data = gather_observed(g);
  if (data.empty()) throw io_error(a.input + ": no observed cells");

  MeanModel mm = fit_mean(data, mask, mean_mode_from(a.rc.mean));
  if (!mm.warning.empty()) std::fprintf(stderr, "warning: %s\n", mm.warning.c_str());
  std::vector<double> centered = remove_mean(data, mask, mm);

  EstimatorConfig cfg = to_estimator_config(a.rc);
  ImputationResult res = conditional_expectation(centered, mask, f, cfg.precond, cfg.pcg);
  add_mean(res.completed, mm);
  restore_observed(res.completed, mask, data);
  write_grid_file(a.output, spec.z, res.completed.values);
  return 0;
}

int run_condsim(const ImputeArgs& a) {
  require_flag(a.input, "--input");
  require_flag(a.spectrum, "--spectrum");
  require_flag(a.prefix, "--output_prefix");
  GridData g = load_input(a.input, a.mask_file);
  auto [spec, f] = load_spectrum(a.spectrum, g.dims);
  ObservationMask mask = embed_mask(g.observed, spec);
  std::vector<double> data = gather_observed(g);
  if (data.empty()) throw io_error(a.input + ": no observed cells");

  MeanModel mm = fit_mean(data, mask, mean_mode_from(a.rc.mean));
  if (!mm.warning.empty()) std::fprintf(stderr, "warning: %s\n", mm.warning.c_str());
  std::vector<double> centered = remove_mean(data, mask, mm);

  EstimatorConfig cfg = to_estimator_config(a.rc);
  for (int ell = 0; ell < a.rc.L; ++ell) {
    RngStream rng(a.rc.seed, static_cast<std::uint64_t>(ell));
    ImputationResult res =
        conditional_simulation(centered, mask, f, rng, cfg.precond, cfg.pcg);
    add_mean(res.completed, mm);
    restore_observed(res.completed, mask, data);
    write_grid_file(a.prefix + "_sim" + std::to_string(ell + 1) + ".grid",
                    spec.z, res.completed.values);
  }
  return 0;
}

int run_study(const StudyArgs& a) {
  require_flag(a.output, "--output");
  DenseStudyConfig cfg = a.cfg;
  cfg.matern = MaternParams{a.nu, a.range, a.variance};
  std::vector<DenseStudyRow> rows = run_dense_study(cfg);

  std::ofstream out(a.output);
  if (!out) throw io_error(a.output + ": cannot open for writing");
  out << "# setting tau";
  for (int it = 0; it <= cfg.iterations; ++it) out << " insb" << it;
  out << '\n';
  for (const auto& row : rows) {
    out << row.setting << ' ' << detail::format_real(row.tau);
    for (double v : row.insb) out << ' ' << detail::format_real(v);
    out << '\n';
  }
  if (!out) throw io_error(a.output + ": write failure");
  return 0;
}

int run_simulate(const SimulateArgs& a) {
  require_flag(a.prefix, "--output_prefix");
  if (a.count < 1) throw std::invalid_argument("simulate: count must be >= 1");
  MaternFieldSampler sampler(MaternParams{a.nu, a.range, a.variance}, a.y);
  for (int r = 0; r < a.count; ++r) {
    RngStream field_rng(a.seed, 2 * static_cast<std::uint64_t>(r));
    GridField field = sampler.draw(field_rng);
    RngStream mask_rng(a.seed, 2 * static_cast<std::uint64_t>(r) + 1);
    std::vector<std::uint8_t> observed = make_missingness(a.setting, a.y, mask_rng);
    write_grid_file(a.prefix + "_field" + std::to_string(r + 1) + ".grid",
                    a.y, field.values, observed);
  }
  return 0;
}

int run_simstudy(const SimStudyArgs& a) {
  require_flag(a.output, "--output");
  SimStudyConfig cfg = a.cfg;
  cfg.matern = MaternParams{a.nu, a.range, a.variance};
  if (a.precond_method == "fft")
    cfg.precond.kind = PrecondKind::inverse_spectrum;
  else if (a.precond_method == "vecchia")
    cfg.precond.kind = PrecondKind::vecchia;
  else
    throw std::invalid_argument("precond_method: unknown method '" +
                                a.precond_method + "'");
  cfg.precond.neighbors = a.neighbors;
  SimStudyResult res = run_simulation_study(cfg);

  std::ofstream out(a.output);
  if (!out) throw io_error(a.output + ": cannot open for writing");
  out << "# method best_delta best_rimse rimse_per_delta...\n";
  for (const auto& m : res.methods) {
    out << m.method << ' ' << detail::format_real(m.best_delta) << ' '
        << detail::format_real(m.best_rimse);
    for (double v : m.rimse) out << ' ' << detail::format_real(v);
    out << '\n';
  }
  if (!out) throw io_error(a.output + ": write failure");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spectral density estimation for gridded data with missing values"};
  app.require_subcommand(1);

  EstimateArgs est;
  CLI::App* estimate = app.add_subcommand(
      "estimate", "iteratively estimate the spectrum of an incomplete grid");
  add_config_flag(estimate, est.config_file);
  estimate->add_option("--input", est.input,
                       "input grid file, NA = missing (required)");
  estimate->add_option("--mask", est.mask_file, "optional 0/1 mask grid file");
  estimate->add_option("--output_prefix", est.prefix,
                       "prefix for spectrum/condexp/condsim/log outputs (required)");
  estimate->add_option("--embed_fac", est.rc.embed_fac,
                       "periodic embedding expansion factor (>= 1)");
  estimate->add_option("--kern_parm", est.rc.kern_parm,
                       "smoothing kernel bandwidth");
  estimate->add_option("--burn_iters", est.rc.burn_iters, "burn-in iterations");
  estimate->add_option("--par_spec_fun", est.rc.par_spec_fun,
                       "whitening filter: none | ar1");
  estimate->add_option("--epsilon", est.rc.epsilon, "stopping threshold");
  estimate->add_option("--L", est.rc.L, "conditional simulations per iteration");
  estimate->add_option("--seed", est.rc.seed, "random seed");
  estimate->add_option("--max_iterations", est.rc.max_iterations,
                       "iteration cap");
  estimate->add_option("--threads", est.rc.threads,
                       "worker threads (0 = all cores)");
  add_solver_flags(estimate, est.rc);
  add_mean_flag(estimate, est.rc);

  ImputeArgs cde;
  CLI::App* condexp = app.add_subcommand(
      "condexp", "conditional expectation under a given spectrum");
  add_config_flag(condexp, cde.config_file);
  condexp->add_option("--input", cde.input, "input grid file (required)");
  condexp->add_option("--mask", cde.mask_file, "optional 0/1 mask grid file");
  condexp->add_option("--spectrum", cde.spectrum,
                      "spectrum grid file (required)");
  condexp->add_option("--output", cde.output, "output grid file (required)");
  add_solver_flags(condexp, cde.rc);
  add_mean_flag(condexp, cde.rc);

  ImputeArgs cds;
  CLI::App* condsim = app.add_subcommand(
      "condsim", "conditional simulations under a given spectrum");
  add_config_flag(condsim, cds.config_file);
  condsim->add_option("--input", cds.input, "input grid file (required)");
  condsim->add_option("--mask", cds.mask_file, "optional 0/1 mask grid file");
  condsim->add_option("--spectrum", cds.spectrum,
                      "spectrum grid file (required)");
  condsim->add_option("--output_prefix", cds.prefix,
                      "prefix for _simK.grid files (required)");
  condsim->add_option("--L", cds.rc.L, "number of simulations");
  condsim->add_option("--seed", cds.rc.seed, "random seed");
  add_solver_flags(condsim, cds.rc);
  add_mean_flag(condsim, cds.rc);

  StudyArgs stu;
  CLI::App* study = app.add_subcommand(
      "study", "exact dense iteration study (INSB table)");
  add_config_flag(study, stu.config_file);
  study->add_option("--output", stu.output, "output table file (required)");
  study->add_option("--y", stu.cfg.y, "observation grid dimensions")
      ->delimiter(',');
  study->add_option("--taus", stu.cfg.taus, "embedding factors")
      ->delimiter(',');
  study->add_option("--settings", stu.cfg.settings, "missingness settings")
      ->delimiter(',');
  study->add_option("--iterations", stu.cfg.iterations, "iterations per row");
  study->add_option("--seed", stu.cfg.seed, "mask seed");
  study->add_option("--dense_cap", stu.cfg.dense_cap,
                    "largest embedding cell count handled densely");
  study->add_option("--nu", stu.nu, "covariance smoothness");
  study->add_option("--range", stu.range, "covariance range");
  study->add_option("--variance", stu.variance, "covariance variance");

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand(
      "simulate", "draw stationary fields with a missingness pattern");
  add_config_flag(simulate, sim.config_file);
  simulate->add_option("--output_prefix", sim.prefix,
                       "prefix for _fieldK.grid files (required)");
  simulate->add_option("--y", sim.y, "grid dimensions")->delimiter(',');
  simulate->add_option("--count", sim.count, "number of fields");
  simulate->add_option("--setting", sim.setting,
                       "missingness setting (1 random, 2 block, 3 complete)");
  simulate->add_option("--nu", sim.nu, "covariance smoothness");
  simulate->add_option("--range", sim.range, "covariance range");
  simulate->add_option("--variance", sim.variance, "covariance variance");
  simulate->add_option("--seed", sim.seed, "random seed");

  SimStudyArgs sst;
  CLI::App* simstudy = app.add_subcommand(
      "simstudy", "replicated estimator comparison (RIMSE table)");
  add_config_flag(simstudy, sst.config_file);
  simstudy->add_option("--output", sst.output, "output table file (required)");
  simstudy->add_option("--y", sst.cfg.y, "grid dimensions")->delimiter(',');
  simstudy->add_option("--setting", sst.cfg.setting, "missingness setting");
  simstudy->add_option("--replicates", sst.cfg.replicates, "replicates");
  simstudy->add_option("--deltas", sst.cfg.deltas, "bandwidth grid")
      ->delimiter(',');
  simstudy->add_option("--embed_fac", sst.cfg.tau, "embedding factor");
  simstudy->add_option("--burn_iters", sst.cfg.burn_in, "burn-in iterations");
  simstudy->add_option("--epsilon", sst.cfg.epsilon, "stopping threshold");
  simstudy->add_option("--L", sst.cfg.L, "simulations per iteration");
  simstudy->add_option("--max_iterations", sst.cfg.max_iterations,
                       "iteration cap");
  simstudy->add_option("--seed", sst.cfg.seed, "random seed");
  simstudy->add_option("--threads", sst.cfg.threads,
                       "worker threads (0 = all cores)");
  simstudy->add_option("--precond_method", sst.precond_method,
                       "PCG preconditioner: fft | vecchia");
  simstudy->add_option("--neighbors", sst.neighbors, "vecchia neighbor count");
  simstudy->add_option("--nu", sst.nu, "covariance smoothness");
  simstudy->add_option("--range", sst.range, "covariance range");
  simstudy->add_option("--variance", sst.variance, "covariance variance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }

  try {
    if (estimate->parsed()) {
      apply_config_file(estimate, est.config_file);
      return run_estimate(est);
    }
    if (condexp->parsed()) {
      apply_config_file(condexp, cde.config_file);
      return run_condexp(cde);
    }
    if (condsim->parsed()) {
      apply_config_file(condsim, cds.config_file);
      return run_condsim(cds);
    }
    if (study->parsed()) {
      apply_config_file(study, stu.config_file);
      return run_study(stu);
    }
    if (simulate->parsed()) {
      apply_config_file(simulate, sim.config_file);
      return run_simulate(sim);
    }
    if (simstudy->parsed()) {
      apply_config_file(simstudy, sst.config_file);
      return run_simstudy(sst);
    }
  } catch (const io_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const numerical_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
  return 3;
}
