#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "blobflow/scenario.hpp"

namespace {

using namespace blobflow;

/// Parses "22", "7pi", "7*pi", "pi".
double parse_mass(std::string s) {
  double scale = 1.0;
  for (const std::string suffix : {"*pi", "pi"}) {
    if (s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0) {
      scale = std::numbers::pi;
      s.erase(s.size() - suffix.size());
      break;
    }
  }
  if (s.empty()) return scale;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw ConfigError("mass", "cannot parse mass '" + s + "'");
  return v * scale;
}

void print_report(const scenario::ScenarioReport& r) {
  std::printf("scenario   %s (d = %d, m = %g)\n", r.config.name.c_str(), r.config.dimension, r.config.m);
  std::printf("particles  %zu, mass %.12g, eps %.6g\n", r.n_particles, r.total_mass, r.epsilon);
  std::printf("reached    t = %.6g of %.6g%s\n", r.t_reached, r.config.t_final, r.blew_up ? " (blow-up)" : "");
  if (r.blew_up) std::printf("           %s\n", r.stop_reason.c_str());
  for (const auto& e : r.errors) {
    std::printf("t = %-10.6g", e.t);
    for (const auto& m : r.config.metrics)
      if (auto v = e.get(m)) std::printf("  %s = %.6e", m.c_str(), *v);
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Blob method for nonlinear diffusion, drift and interaction"};
  app.require_subcommand(1);
  std::string out = "out";
  app.add_option("--out", out, "Output directory")->capture_default_str();

  std::string run_cfg;
  auto* run = app.add_subcommand("run", "Run one scenario");
  run->add_option("config", run_cfg, "Scenario JSON")->required()->check(CLI::ExistingFile);

  std::string sweep_cfg;
  std::vector<double> hs;
  double t_eval = 0.0;
  auto* sweep = app.add_subcommand("sweep", "Convergence sweep over grid spacings");
  sweep->add_option("config", sweep_cfg, "Scenario JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--grid-h", hs, "Grid spacings (at least three)")->required();
  sweep->add_option("--t", t_eval, "Evaluation time")->required();

  std::string ks_cfg;
  std::vector<std::string> masses;
  auto* ks = app.add_subcommand("ks2d", "Second-moment growth across total masses");
  ks->add_option("config", ks_cfg, "Scenario JSON")->required()->check(CLI::ExistingFile);
  ks->add_option("--mass", masses, "Total masses, e.g. 7pi 8pi 9pi")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    const std::filesystem::path dir(out);
    if (*run) {
      const auto cfg = scenario::load_config(run_cfg);
      scenario::RunOptions opt;
      opt.out_dir = dir;
      print_report(scenario::run_scenario(cfg, opt));
      std::printf("wrote      %s\n", dir.string().c_str());
    } else if (*sweep) {
      const auto cfg = scenario::load_config(sweep_cfg);
      const auto rep = scenario::convergence_sweep(cfg, hs, t_eval, dir);
      for (const auto& p : rep.points) {
        std::printf("h = %-10.6g", p.h);
        for (const auto& m : cfg.metrics)
          if (auto v = p.errors.get(m)) std::printf("  %s = %.6e", m.c_str(), *v);
        std::printf("\n");
      }
      for (const auto& [m, f] : rep.slopes) std::printf("slope %-5s %.4f (R^2 = %.4f)\n", m.c_str(), f.slope, f.r_squared);
    } else if (*ks) {
      const auto cfg = scenario::load_config(ks_cfg);
      std::vector<double> ms;
      for (const auto& s : masses) ms.push_back(parse_mass(s));
      const auto rows = scenario::ks2d_criticality(ms, cfg, dir);
      std::printf("%-10s %-14s %-14s %-8s\n", "M/pi", "fitted slope", "virial slope", "R^2");
      for (const auto& r : rows)
        std::printf("%-10.4g %-14.6g %-14.6g %-8.5f%s\n", r.mass / std::numbers::pi, r.fitted_slope, r.reference_slope,
                    r.r_squared, r.blew_up ? " (blow-up)" : "");
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  }
  return 0;
}
