#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msstokes/experiment.hpp"
#include "msstokes/lod.hpp"

using namespace msstokes;

namespace {

struct Args {
  int m = 0;
  std::vector<std::string> ell;
  std::vector<std::string> H_list;
  int fine_level = 6;
  std::string eps = "2^-6";
  std::uint64_t seed = 1;
  double nu_min = 0.1;
  double nu_max = 1.0;
  double inclusion_value = 10.0;
  double inclusion_width = 4.0;
  std::vector<double> parabola = {4.0, -4.0, 1.25};
  bool constant_nu = false;
  std::string source = "polynomial";
  int threads = 1;
  std::string out;
  std::string mesh_dump;
};

ExperimentConfig to_config(const Args& a, const std::vector<std::string>& default_ell,
                           const std::vector<std::string>& default_H) {
  ExperimentConfig c;
  c.m = a.m;
  c.ell.clear();
  for (const auto& s : a.ell.empty() ? default_ell : a.ell) c.ell.push_back(parse_ell(s));
  c.H_levels.clear();
  for (const auto& s : a.H_list.empty() ? default_H : a.H_list) c.H_levels.push_back(parse_dyadic_level(s));
  c.fine_level = a.fine_level;
  c.coefficient.eps_level = parse_dyadic_level(a.eps);
  c.coefficient.seed = a.seed;
  c.coefficient.nu_min = a.nu_min;
  c.coefficient.nu_max = a.nu_max;
  c.coefficient.inclusion_value = a.inclusion_value;
  c.coefficient.inclusion_width = a.inclusion_width;
  if (a.parabola.size() != 3) throw ValidationError("--parabola takes three coefficients a b c");
  c.coefficient.parabola = Parabola{a.parabola[0], a.parabola[1], a.parabola[2]};
  c.coefficient.constant = a.constant_nu;
  c.source = parse_source(a.source);
  c.threads = a.threads;
  c.out = a.out;
  c.validate();
  return c;
}

void emit_csv(const ExperimentConfig& c, const std::vector<ErrorRecord>& records) {
  if (c.out.empty()) {
    write_csv(std::cout, records);
    return;
  }
  std::ofstream os(c.out);
  if (!os) throw ValidationError("cannot open " + c.out);
  write_csv(os, records);
}

void print_eoc(const std::vector<ErrorRecord>& records) {
  const char* names[] = {"err_u_H1", "err_u_L2", "err_p_pp_L2", "err_PiHp_L2"};
  std::vector<int> ells;
  for (const auto& r : records) {
    if (std::find(ells.begin(), ells.end(), r.ell) == ells.end()) ells.push_back(r.ell);
  }
  for (int ell : ells) {
    std::vector<ErrorRecord> series;
    for (const auto& r : records) {
      if (r.ell == ell) series.push_back(r);
    }
    if (series.size() < 2) continue;
    std::cerr << "EOC ell=" << ell << '\n';
    for (const char* name : names) {
      std::cerr << "  " << std::setw(12) << name;
      try {
        for (const auto& s : fit_eoc(series, parse_column(name))) {
          std::cerr << "  " << std::fixed << std::setprecision(2) << s.rate << (s.flagged ? "*" : "");
        }
      } catch (const ValidationError& e) {
        std::cerr << "  (" << e.what() << ")";
      }
      std::cerr << std::defaultfloat << '\n';
    }
  }
}

int run_converge(const Args& a) {
  const ExperimentConfig c = to_config(a, {"max"}, {"0.5", "0.25", "0.125"});
  const auto records = run_convergence_study(c, &std::cerr);
  emit_csv(c, records);
  print_eoc(records);
  return 0;
}

int run_decay(const Args& a) {
  const ExperimentConfig c = to_config(a, {"1", "2", "3", "max"}, {"0.125"});
  const auto records = run_decay_study(c, &std::cerr);
  emit_csv(c, records);
  for (const auto& r : records) {
    if (r.covers_domain) std::cerr << "patches cover the domain at ell=" << r.ell << '\n';
  }
  return 0;
}

int run_solve(const Args& a) {
  const ExperimentConfig c = to_config(a, {"max"}, {"0.25"});
  const ReferenceProblem ref = make_reference(c);
  if (!a.mesh_dump.empty()) {
    std::ofstream os(a.mesh_dump);
    if (!os) throw ValidationError("cannot open " + a.mesh_dump);
    ref.fine->write(os);
  }
  const ErrorRecord r = run_cell(ref, c, c.H_levels.front(), c.ell.front());
  if (!r.ok()) {
    std::cerr << "solve failed: " << r.failure << '\n';
    return 1;
  }
  emit_csv(c, {r});
  return 0;
}

int run_basis_dump(const Args& a) {
  const ExperimentConfig c = to_config(a, {"1"}, {"0.25"});
  const auto chain = std::make_shared<const RefinementChain>(c.fine_level);
  const auto fine = make_fine_mesh(*chain, c.fine_level);
  const FineSpace space(fine);
  const MeshHierarchy top(chain, 0, c.fine_level, fine);
  const CoefficientField coeff = gen_coefficient(c.coefficient, top);
  const MeshHierarchy hierarchy(chain, c.H_levels.front(), c.fine_level, fine);
  const LodContext ctx(hierarchy, space, coeff, c.m);
  int ell = c.ell.front();
  if (ell == kCoversDomain) ell = saturation_order(hierarchy.coarse());
  BasisOptions options;
  options.threads = c.threads;
  const MultiscaleBasis basis = build_basis(ctx, ell, options);
  if (c.out.empty()) {
    write_basis(std::cout, basis, space.num_velocity_dofs(), space.num_pressure_dofs());
  } else {
    std::ofstream os(c.out);
    if (!os) throw ValidationError("cannot open " + c.out);
    write_basis(os, basis, space.num_velocity_dofs(), space.num_pressure_dofs());
  }
  std::cerr << basis.size() << " basis functions, " << basis.corrector_solves << " corrector solves, "
            << basis.factorizations << " factorizations\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"High-order multiscale solver for heterogeneous Stokes problems"};
  app.set_config("--config", "", "Key-value file mirroring the long flags");
  app.require_subcommand(1);
  Args a;
  app.add_option("--m", a.m, "Method order m");
  app.add_option("--ell", a.ell, "Localization orders (integers or max)")->delimiter(',');
  app.add_option("--H-list", a.H_list, "Coarse mesh sizes 2^-k (e.g. 0.5,0.25 or 2^-3)")->delimiter(',');
  app.add_option("--fine-level", a.fine_level, "Red refinement level of the fine mesh");
  app.add_option("--eps", a.eps, "Coefficient length scale 2^-k");
  app.add_option("--seed", a.seed, "Coefficient seed");
  app.add_option("--nu-min", a.nu_min, "Lower bound of the random viscosity");
  app.add_option("--nu-max", a.nu_max, "Upper bound of the random viscosity");
  app.add_option("--inclusion-value", a.inclusion_value, "Viscosity inside the inclusion");
  app.add_option("--inclusion-width", a.inclusion_width, "Inclusion half-width in units of eps");
  app.add_option("--parabola", a.parabola, "Inclusion curve y = a x^2 + b x + c")->expected(3);
  app.add_flag("--constant-nu", a.constant_nu, "Use nu = 1 instead of the random field");
  app.add_option("--source", a.source, "Source term: polynomial (f = (-y, x^4)) or zero");
  app.add_option("--threads", a.threads, "Worker threads for corrector solves");
  app.add_option("--out", a.out, "Output file (stdout if empty)");
  app.add_option("--mesh-dump", a.mesh_dump, "solve: write the fine mesh here");

  auto* converge = app.add_subcommand("converge", "Convergence study over H")->fallthrough();
  auto* decay = app.add_subcommand("decay", "Localization study over ell at the first H")->fallthrough();
  auto* dump = app.add_subcommand("basis-dump", "Write the multiscale basis of one (H, ell)")->fallthrough();
  auto* solve = app.add_subcommand("solve", "Single (H, ell) solve with errors")->fallthrough();

  CLI11_PARSE(app, argc, argv);
  try {
    if (converge->parsed()) return run_converge(a);
    if (decay->parsed()) return run_decay(a);
    if (dump->parsed()) return run_basis_dump(a);
    if (solve->parsed()) return run_solve(a);
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
