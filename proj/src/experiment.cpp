#include "msstokes/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "msstokes/lod.hpp"

namespace msstokes {

std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + (i + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double uniform01(std::uint64_t seed, std::uint64_t i) {
  return static_cast<double>(splitmix64(seed, i) >> 11) * 0x1.0p-53;
}

double Parabola::distance(const Point& p) const {
  auto d2 = [&](double x) {
    const double dy = (*this)(x) - p.y();
    return (x - p.x()) * (x - p.x()) + dy * dy;
  };
  const int n = 1024;
  int best = 0;
  double best_d = d2(0.0);
  for (int i = 1; i <= n; ++i) {
    const double d = d2(static_cast<double>(i) / n);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  // golden-section refinement around the best sample
  double lo = std::max(0.0, (best - 1.0) / n);
  double hi = std::min(1.0, (best + 1.0) / n);
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 60; ++it) {
    const double x1 = hi - g * (hi - lo);
    const double x2 = lo + g * (hi - lo);
    if (d2(x1) < d2(x2)) {
      hi = x2;
    } else {
      lo = x1;
    }
  }
  return std::sqrt(std::min(best_d, d2(0.5 * (lo + hi))));
}

CoefficientField gen_coefficient(const CoefficientSpec& spec, const MeshHierarchy& hierarchy) {
  if (spec.eps_level < 0 || spec.eps_level > hierarchy.fine_level()) {
    throw ValidationError("eps = 2^-" + std::to_string(spec.eps_level) +
                          " is not representable on the fine mesh (fine level " +
                          std::to_string(hierarchy.fine_level()) + ")");
  }
  if (!(spec.nu_min > 0.0) || spec.nu_max < spec.nu_min || !(spec.inclusion_value > 0.0)) {
    throw ValidationError("coefficient values must be positive with nu_min <= nu_max");
  }
  const int nt = hierarchy.fine().num_triangles();
  CoefficientField field = CoefficientField::constant(nt, 1.0, 0.0);
  field.seed = spec.seed;
  field.eps = std::ldexp(1.0, -spec.eps_level);
  if (spec.constant) return field;

  const SimplicialMesh& eps_mesh = hierarchy.chain().level(spec.eps_level);
  const double radius = spec.inclusion_width * field.eps;
  std::vector<double> values(eps_mesh.num_triangles());
  for (int e = 0; e < eps_mesh.num_triangles(); ++e) {
    if (spec.parabola.distance(eps_mesh.centroid(e)) <= radius) {
      values[e] = spec.inclusion_value;
    } else {
      values[e] = spec.nu_min + (spec.nu_max - spec.nu_min) * uniform01(spec.seed, e);
    }
  }
  for (int t = 0; t < nt; ++t) field.nu[t] = values[hierarchy.red_ancestor(t, spec.eps_level)];
  std::ostringstream desc;
  desc << "random eps=2^-" << spec.eps_level << " seed=" << spec.seed;
  field.description = desc.str();
  return field;
}

VectorFunction make_source(SourceKind kind) {
  if (kind == SourceKind::Zero) return [](const Point&) { return Point(0.0, 0.0); };
  return [](const Point& x) { return Point(-x.y(), std::pow(x.x(), 4)); };
}

SourceKind parse_source(const std::string& name) {
  if (name == "polynomial") return SourceKind::Polynomial;
  if (name == "zero") return SourceKind::Zero;
  throw ValidationError("unknown source '" + name + "' (expected polynomial or zero)");
}

void ExperimentConfig::validate() const {
  if (m < 0 || m > 3) throw ValidationError("m must lie in 0..3");
  if (ell.empty()) throw ValidationError("at least one localization order is required");
  for (int l : ell) {
    if (l < 1 && l != kCoversDomain) throw ValidationError("ell must be a positive integer or max");
  }
  if (H_levels.empty()) throw ValidationError("at least one coarse mesh size is required");
  for (int l : H_levels) {
    // one red level below H leaves the local saddle problems singular
    if (l < 0 || l + 2 > fine_level) {
      throw ValidationError("fine level must lie at least two levels below every coarse mesh size");
    }
  }
  if (coefficient.eps_level > fine_level) throw ValidationError("fine level must resolve eps");
  if (threads < 1) throw ValidationError("threads must be positive");
}

int parse_dyadic_level(const std::string& text) {
  double value = 0.0;
  const auto caret = text.find("^");
  const auto slash = text.find('/');
  try {
    if (caret != std::string::npos) {
      if (std::stod(text.substr(0, caret)) != 2.0) throw ValidationError("base must be 2");
      value = std::ldexp(1.0, std::stoi(text.substr(caret + 1)));
    } else if (slash != std::string::npos) {
      value = std::stod(text.substr(0, slash)) / std::stod(text.substr(slash + 1));
    } else {
      value = std::stod(text);
    }
  } catch (const std::logic_error&) {
    throw ValidationError("cannot parse mesh size '" + text + "'");
  }
  int exponent = 0;
  const double mantissa = std::frexp(value, &exponent);
  if (!(value > 0.0) || mantissa != 0.5 || exponent > 1) {
    throw ValidationError("mesh size '" + text + "' is not of the form 2^-k with k >= 0");
  }
  return 1 - exponent;
}

int parse_ell(const std::string& text) {
  if (text == "max") return kCoversDomain;
  std::size_t pos = 0;
  int value = 0;
  try {
    value = std::stoi(text, &pos);
  } catch (const std::logic_error&) {
    throw ValidationError("cannot parse localization order '" + text + "'");
  }
  if (pos != text.size() || value < 1) throw ValidationError("ell must be a positive integer or max");
  return value;
}

ReferenceProblem make_reference(const ExperimentConfig& config) {
  config.validate();
  ReferenceProblem ref;
  ref.chain = std::make_shared<const RefinementChain>(config.fine_level);
  ref.fine = make_fine_mesh(*ref.chain, config.fine_level);
  ref.space = std::make_unique<FineSpace>(ref.fine);
  const MeshHierarchy top(ref.chain, 0, config.fine_level, ref.fine);
  ref.coeff = gen_coefficient(config.coefficient, top);
  ref.f = make_source(config.source);
  ref.load = assemble_load(*ref.space, ref.f);
  ref.solution = solve_reference(*ref.space, assemble_a(*ref.space, ref.coeff), assemble_b(*ref.space), ref.load);
  return ref;
}

ErrorRecord run_cell(const ReferenceProblem& ref, const ExperimentConfig& config, int H_level, int ell) {
  ErrorRecord rec;
  rec.H = std::ldexp(1.0, -H_level);
  rec.m = config.m;
  rec.ell = ell;
  const auto start = std::chrono::steady_clock::now();
  try {
    const MeshHierarchy hierarchy(ref.chain, H_level, config.fine_level, ref.fine);
    const int saturation = saturation_order(hierarchy.coarse());
    rec.ell = ell == kCoversDomain ? saturation : ell;
    rec.covers_domain = rec.ell >= saturation;
    const LodContext ctx(hierarchy, *ref.space, ref.coeff, config.m);
    BasisOptions options;
    options.threads = config.threads;
    const MultiscaleBasis basis = build_basis(ctx, rec.ell, options);
    MultiscaleSolution sol = assemble_and_solve_coarse(ctx, basis, ref.load);
    postprocess_pressure(ctx, sol, ref.f);
    const VelocityErrors ve = error_norms(*ref.space, ref.solution.u, sol.u);
    rec.err_u_H1 = ve.h1;
    rec.err_u_L2 = ve.l2;
    rec.err_p_pp_L2 = pressure_pp_error(ctx, sol, ref.solution.p);
    rec.err_PiHp_L2 = coarse_pressure_error(ctx, sol, ref.solution.p);
  } catch (const std::exception& e) {
    rec.failure = e.what();
  }
  rec.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

namespace {

void log_record(std::ostream* log, const ErrorRecord& r) {
  if (!log) return;
  *log << "H=" << r.H << " ell=" << r.ell << (r.covers_domain ? " (covers domain)" : "") << " m=" << r.m;
  if (r.ok()) {
    *log << " err_u_H1=" << r.err_u_H1 << " err_u_L2=" << r.err_u_L2 << " err_p_pp=" << r.err_p_pp_L2
         << " err_PiHp=" << r.err_PiHp_L2;
  } else {
    *log << " FAILED: " << r.failure;
  }
  *log << " [" << r.wall_s << " s]" << std::endl;
}

}  // namespace

std::vector<ErrorRecord> run_convergence_study(const ExperimentConfig& config, std::ostream* log) {
  const ReferenceProblem ref = make_reference(config);
  std::vector<ErrorRecord> records;
  for (int level : config.H_levels) {
    for (int ell : config.ell) {
      records.push_back(run_cell(ref, config, level, ell));
      log_record(log, records.back());
    }
  }
  return records;
}

std::vector<ErrorRecord> run_decay_study(const ExperimentConfig& config, std::ostream* log) {
  const ReferenceProblem ref = make_reference(config);
  std::vector<ErrorRecord> records;
  for (int ell : config.ell) {
    records.push_back(run_cell(ref, config, config.H_levels.front(), ell));
    log_record(log, records.back());
  }
  return records;
}

double column_value(const ErrorRecord& r, ErrorColumn column) {
  switch (column) {
    case ErrorColumn::U_H1: return r.err_u_H1;
    case ErrorColumn::U_L2: return r.err_u_L2;
    case ErrorColumn::P_PP_L2: return r.err_p_pp_L2;
    case ErrorColumn::PiHp_L2: return r.err_PiHp_L2;
  }
  return std::numeric_limits<double>::quiet_NaN();
}

ErrorColumn parse_column(const std::string& name) {
  if (name == "err_u_H1") return ErrorColumn::U_H1;
  if (name == "err_u_L2") return ErrorColumn::U_L2;
  if (name == "err_p_pp_L2") return ErrorColumn::P_PP_L2;
  if (name == "err_PiHp_L2") return ErrorColumn::PiHp_L2;
  throw ValidationError("unknown error column '" + name + "'");
}

std::vector<EocStep> fit_eoc(const std::vector<ErrorRecord>& records, ErrorColumn column) {
  if (records.size() < 2) throw ValidationError("fit_eoc needs at least two records");
  std::vector<EocStep> steps;
  for (std::size_t i = 0; i + 1 < records.size(); ++i) {
    const ErrorRecord& a = records[i];
    const ErrorRecord& b = records[i + 1];
    if (std::abs(b.H - 0.5 * a.H) > 1e-12 * a.H) {
      throw ValidationError("fit_eoc expects consecutive records with halving H");
    }
    const double ea = column_value(a, column);
    const double eb = column_value(b, column);
    EocStep step{a.H, b.H, 0.0, false};
    if (!std::isfinite(ea) || !std::isfinite(eb)) {
      step.rate = std::numeric_limits<double>::quiet_NaN();
      step.flagged = true;
    } else if (eb == 0.0) {
      step.rate = std::numeric_limits<double>::infinity();
      step.flagged = true;
    } else {
      step.rate = std::log2(ea / eb);
    }
    steps.push_back(step);
  }
  return steps;
}

void write_csv(std::ostream& os, const std::vector<ErrorRecord>& records) {
  os << kCsvHeader << '\n';
  const auto old = os.precision(17);
  for (const auto& r : records) {
    os << r.H << ',' << r.ell << ',' << r.m << ',' << r.err_u_H1 << ',' << r.err_u_L2 << ','
       << r.err_p_pp_L2 << ',' << r.err_PiHp_L2 << ',' << r.wall_s << '\n';
  }
  os.precision(old);
}

std::vector<ErrorRecord> read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw ValidationError("missing or unexpected CSV header");
  std::vector<ErrorRecord> records;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw ValidationError("malformed CSV row: " + line);
    auto num = [](const std::string& s) { return std::strtod(s.c_str(), nullptr); };
    ErrorRecord r;
    r.H = num(cells[0]);
    r.ell = std::stoi(cells[1]);
    r.m = std::stoi(cells[2]);
    r.err_u_H1 = num(cells[3]);
    r.err_u_L2 = num(cells[4]);
    r.err_p_pp_L2 = num(cells[5]);
    r.err_PiHp_L2 = num(cells[6]);
    r.wall_s = num(cells[7]);
    records.push_back(r);
  }
  return records;
}

}  // namespace msstokes
