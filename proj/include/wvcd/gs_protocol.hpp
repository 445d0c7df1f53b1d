#pragma once

// Ground-state specialization: spectral moments, the energy-shift
// optimization, the shifted-power polynomial, and the end-to-end solvers
// producing driving-coefficient tables over a lambda grid.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "wvcd/weighted_action.hpp"

namespace wvcd::protocol {

using action::ActionPolynomial;
using action::FactorizedTraces;
using action::HamiltonianPowers;
using action::QuadraticForm;
using model::Ansatz;
using model::FactorizedHamiltonian;
using pauli::SparseOperator;

// Normalized moments omega_k = tr[H(lambda)^k] / 2^N for k = 0..2K-1.
struct EnergyShiftProblem {
  int degree = 2;  // K
  std::vector<double> omega;
  double lambda = 0.0;
};

// Moments from exact powers: k <= K reads the identity coefficient of H^k,
// k > K splits as tr[H^K H^(k-K)] so only powers up to K are needed.
EnergyShiftProblem moments(const HamiltonianPowers& powers, int degree,
                           double lambda);
EnergyShiftProblem moments(const SparseOperator& h, int degree, double lambda);
// Factorized route using the cached traces.
EnergyShiftProblem moments(const FactorizedTraces& ft, double lambda);

struct EnergyShiftResult {
  double energy = 0.0;
  int newton_iterations = 0;
  int bracket_expansions = 0;
  // Sign crossings of dOmega/dE found in the scanned window; the typical
  // shape has exactly one of each.
  int interior_minima = 0;
  int interior_maxima = 0;
};

// Minimizer of Omega(E), the weighted spectral average with weight
// (eps - E)^(2K-2). The critical equation is polynomial: quadratic and
// solved exactly for K = 2 (larger root); Newton from the K = 2 value with
// a sign-scan bisection fallback over [omega_1 - 10 sigma, omega_1 + 10
// sigma] (expanded x2 up to 8 times) for K >= 3. Throws OptimizationError
// when no descent-to-ascent crossing exists.
EnergyShiftResult energy_shift(const EnergyShiftProblem& prob,
                               const linalg::RootOptions& opts = {});

// Coefficients of (x - E)^K: p_k = binom(K, k) (-E)^(K-k). K = 1 reduces to
// the conventional action up to an inert constant shift.
std::vector<double> gs_polynomial_coefficients(int degree, double energy);
ActionPolynomial gs_polynomial(int degree, double energy);

// State weight K^2 (eps - E)^(2K-2) and the pair weight in closed form and
// as the defining ratio [(P(eps_m) - P(eps_n)) / (eps_m - eps_n)]^2.
double gs_weight_state(double eps, double energy, int degree);
double gs_weight_pair(double eps_m, double eps_n, double energy, int degree);
double gs_weight_pair_ratio(double eps_m, double eps_n, double energy,
                            int degree);

struct SolveOptions {
  double prune_tolerance = kDefaultPruneTolerance;
  // Exact QR up to this order, conjugate gradient beyond.
  int qr_max_order = 512;
  double cg_tolerance = 1e-10;
  int cg_max_iterations_per_order = 50;  // max_iter = this * M
  // Tikhonov shift eps * trace(Q) / M applied when the plain least-squares
  // residual exceeds residual_tolerance.
  double tikhonov_epsilon = 1e-12;
  double residual_tolerance = 1e-8;
  linalg::RootOptions root;
};

struct LinearSolveInfo {
  double residual_rel = 0.0;  // ||Q a - r|| / ||r||, against the original Q
  int iterations = 0;         // CG iterations; 0 for direct solves
  std::string method;         // "qr", "qr+tikhonov", or "cg"
};

LinearSolveInfo solve_linear(const QuadraticForm& form,
                             std::vector<double>& alpha,
                             const SolveOptions& opts);

struct SingleSolveResult {
  std::vector<double> alpha;
  double energy_shift = std::numeric_limits<double>::quiet_NaN();  // K = 1: NaN
  QuadraticForm form;
  LinearSolveInfo solve;
  EnergyShiftResult shift_diagnostics;  // meaningful for K >= 2
};

// Full single-lambda pipeline: powers, moments, energy shift, shifted
// polynomial, commutators, Q/r, linear solve. K = 1 skips the energy-shift
// machinery entirely.
SingleSolveResult solve_single(const SparseOperator& h,
                               const SparseOperator& dh, const Ansatz& ansatz,
                               int degree, double lambda,
                               const SolveOptions& opts = {});

// Driving coefficients over a lambda grid with per-point diagnostics.
struct ProtocolTable {
  std::vector<double> lambdas;
  int degree = 1;
  std::size_t num_ansatz = 0;
  std::vector<std::vector<double>> alpha;  // [grid point][mu]
  std::vector<double> energy_shift;        // NaN for K = 1
  std::vector<double> residual;
  std::vector<int> iterations;
  std::vector<std::string> flags;  // per-point failure notes, empty = ok

  std::string ansatz_id;
  std::string instance_hash;
  double stage1_seconds = 0.0;
  double stage2_seconds = 0.0;
  bool stage1_cached = false;

  bool has_gaps() const;
  // Linear interpolation of alpha between grid points (clamped at the
  // ends). Throws IntegrationError if the table has flagged gaps.
  std::vector<double> alpha_at(double lambda) const;

  std::string to_csv() const;
  std::string metadata_json() const;
  static ProtocolTable from_csv(const std::string& csv,
                                const std::string& metadata);
};

std::vector<double> uniform_grid(int points);

// Two-stage sweep: stage 1 computes the lambda-independent traces once
// (or reuses `cached`), stage 2 assembles and solves per grid point.
// Per-point failures are recorded in flags; the table is still returned.
// When computed_traces is non-null and stage 1 ran, the traces are moved
// there so callers can persist them.
ProtocolTable solve_protocol(const FactorizedHamiltonian& hf,
                             const Ansatz& ansatz, int degree,
                             const std::vector<double>& grid,
                             const SolveOptions& opts = {},
                             const FactorizedTraces* cached = nullptr,
                             FactorizedTraces* computed_traces = nullptr);

}  // namespace wvcd::protocol
