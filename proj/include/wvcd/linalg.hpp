#pragma once

// Dense symmetric solvers and 1-D root finding shared by the pipelines.
// The QR path delegates to a standard dense backend; CG and the safeguarded
// Newton are small enough to own.

#include <functional>
#include <vector>

#include "wvcd/common.hpp"

namespace wvcd::linalg {

// Real symmetric matrix, row-major.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(int order) : order_(order), data_(order * order, 0.0) {}

  int order() const { return order_; }
  double& at(int i, int j) { return data_[i * order_ + j]; }
  double at(int i, int j) const { return data_[i * order_ + j]; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  // Largest |a_ij - a_ji| relative to the largest entry magnitude.
  double asymmetry() const;
  bool is_symmetric(double rel_tol = 1e-10) const;
  // Averages mirrored entries in place.
  void symmetrize();

  double trace() const;

 private:
  int order_ = 0;
  std::vector<double> data_;
};

// Least-squares solution minimizing ||Qx - r||_2 via column-pivoted
// Householder QR. Deterministic; throws on non-finite input.
std::vector<double> solve_qr(const SymMatrix& q, const std::vector<double>& r);

struct CgResult {
  std::vector<double> x;
  int iterations = 0;
  double residual = 0.0;  // ||Qx - r|| / ||r||
  bool converged = false;
};

// Conjugate gradient for PSD systems; stops at ||Qx-r|| <= tol*||r|| or
// max_iter. Throws OptimizationError if the iteration produces non-finite
// values.
CgResult solve_cg(const SymMatrix& q, const std::vector<double>& r, double tol,
                  int max_iter);

double residual_norm(const SymMatrix& q, const std::vector<double>& x,
                     const std::vector<double>& r);

// Smallest eigenvalue of a symmetric matrix (used for PSD diagnostics).
double min_eigenvalue(const SymMatrix& q);
double condition_estimate(const SymMatrix& q);

struct RootOptions {
  int max_newton_iterations = 100;
  int max_bracket_expansions = 8;
  int scan_points = 512;
  double step_tolerance = 1e-10;  // |dx| <= step_tolerance * (1 + |x|)
};

// Root of g in a bracket with g(lo) and g(hi) of opposite sign: safeguarded
// Newton (falls back to bisection whenever the Newton step leaves the
// bracket or dg vanishes). dg may be empty, in which case a secant step is
// used.
double newton_root(const std::function<double(double)>& g,
                   const std::function<double(double)>& dg, double init,
                   double lo, double hi, const RootOptions& opts = {},
                   int* iterations_out = nullptr);

struct MinimizeResult {
  double x = 0.0;
  int iterations = 0;
  int bracket_expansions = 0;
};

// Local minimizer of f on the bracket: finds a sign change of df by scanning
// the bracket (expanding it up to max_bracket_expansions times by factor 2),
// keeping the rightmost interval where df crosses - to +, then polishes with
// newton_root. Which basin is found depends on init and the bracket.
// Throws OptimizationError when no sign change is found.
MinimizeResult minimize_scalar(const std::function<double(double)>& f,
                               const std::function<double(double)>& df,
                               double init, double lo, double hi,
                               const RootOptions& opts = {});

}  // namespace wvcd::linalg
