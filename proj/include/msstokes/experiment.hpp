#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "msstokes/common.hpp"
#include "msstokes/fem.hpp"
#include "msstokes/mesh.hpp"

namespace msstokes {

/// SplitMix64 output for counter i of a stream:
///   z = seed + (i + 1) * 0x9E3779B97F4A7C15, then the SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t seed, std::uint64_t i);
/// Uniform double in [0, 1) from the top 53 bits of splitmix64(seed, i).
double uniform01(std::uint64_t seed, std::uint64_t i);

/// y = a x² + b x + c over x ∈ [0, 1].
struct Parabola {
  double a = 4.0;
  double b = -4.0;
  double c = 1.25;

  double operator()(double x) const { return (a * x + b) * x + c; }
  /// Euclidean distance from p to the curve segment.
  double distance(const Point& p) const;
};

struct CoefficientSpec {
  int eps_level = 6;  // ε = 2^-eps_level
  std::uint64_t seed = 1;
  double nu_min = 0.1;
  double nu_max = 1.0;
  double inclusion_value = 10.0;
  double inclusion_width = 4.0;  // in units of ε
  Parabola parabola;
  bool constant = false;  // ν ≡ 1 instead of the random field
};

/// Piecewise constant ν on T_ε, i.i.d. uniform in [nu_min, nu_max] by element
/// index of T_ε, with ν = inclusion_value where the T_ε element midpoint lies
/// within inclusion_width·ε of the parabola; σ ≡ 0.
CoefficientField gen_coefficient(const CoefficientSpec& spec, const MeshHierarchy& hierarchy);

enum class SourceKind { Polynomial, Zero };
VectorFunction make_source(SourceKind kind);
SourceKind parse_source(const std::string& name);

/// Localization order value meaning "smallest ℓ whose patches cover Ω".
inline constexpr int kCoversDomain = 0;

struct ExperimentConfig {
  int m = 0;
  std::vector<int> ell = {kCoversDomain};
  std::vector<int> H_levels = {1, 2, 3};  // H = 2^-level
  int fine_level = 6;
  CoefficientSpec coefficient;
  SourceKind source = SourceKind::Polynomial;
  int threads = 1;
  std::string out;

  void validate() const;
};

/// Parses a dyadic mesh size ("0.25", "2^-2" or "1/4") into its level.
int parse_dyadic_level(const std::string& text);
/// Parses a localization order: a positive integer or "max".
int parse_ell(const std::string& text);

struct ErrorRecord {
  double H = 0.0;
  int ell = 0;
  int m = 0;
  double err_u_H1 = std::numeric_limits<double>::quiet_NaN();
  double err_u_L2 = std::numeric_limits<double>::quiet_NaN();
  double err_p_pp_L2 = std::numeric_limits<double>::quiet_NaN();
  double err_PiHp_L2 = std::numeric_limits<double>::quiet_NaN();
  double wall_s = 0.0;
  bool covers_domain = false;
  std::string failure;  // empty on success

  bool ok() const { return failure.empty(); }
};

/// Fine-scale problem shared by all cells of a study.
struct ReferenceProblem {
  std::shared_ptr<const RefinementChain> chain;
  std::shared_ptr<const SimplicialMesh> fine;
  std::unique_ptr<FineSpace> space;
  CoefficientField coeff;
  VectorFunction f;
  Vector load;
  FineSolution solution;
};

ReferenceProblem make_reference(const ExperimentConfig& config);

/// Runs one (H, ℓ) cell against a prepared reference.
ErrorRecord run_cell(const ReferenceProblem& ref, const ExperimentConfig& config, int H_level, int ell);

/// One record per (H, ℓ); failed cells keep NaN errors and a failure message.
std::vector<ErrorRecord> run_convergence_study(const ExperimentConfig& config, std::ostream* log = nullptr);
/// ℓ sweep at the first H of the config.
std::vector<ErrorRecord> run_decay_study(const ExperimentConfig& config, std::ostream* log = nullptr);

enum class ErrorColumn { U_H1, U_L2, P_PP_L2, PiHp_L2 };
double column_value(const ErrorRecord& r, ErrorColumn column);
ErrorColumn parse_column(const std::string& name);

struct EocStep {
  double H_coarse;
  double H_fine;
  double rate;
  bool flagged;  // zero denominator (rate = inf) or non-finite input
};

/// rate = log2(e(H) / e(H/2)) for consecutive records with halving H.
std::vector<EocStep> fit_eoc(const std::vector<ErrorRecord>& records, ErrorColumn column);

inline constexpr const char* kCsvHeader = "H,ell,m,err_u_H1,err_u_L2,err_p_pp_L2,err_PiHp_L2,wall_s";
void write_csv(std::ostream& os, const std::vector<ErrorRecord>& records);
std::vector<ErrorRecord> read_csv(std::istream& is);

}  // namespace msstokes
