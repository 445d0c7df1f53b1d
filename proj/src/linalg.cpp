#include "wvcd/linalg.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace wvcd::linalg {

namespace {

Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                               Eigen::RowMajor>>
as_eigen(const SymMatrix& q) {
  return {q.data().data(), q.order(), q.order()};
}

}  // namespace

double SymMatrix::asymmetry() const {
  double max_entry = 0.0;
  double max_diff = 0.0;
  for (int i = 0; i < order_; ++i) {
    for (int j = 0; j < order_; ++j) {
      max_entry = std::max(max_entry, std::abs(at(i, j)));
      max_diff = std::max(max_diff, std::abs(at(i, j) - at(j, i)));
    }
  }
  return max_entry > 0.0 ? max_diff / max_entry : 0.0;
}

bool SymMatrix::is_symmetric(double rel_tol) const {
  return asymmetry() <= rel_tol;
}

void SymMatrix::symmetrize() {
  for (int i = 0; i < order_; ++i) {
    for (int j = i + 1; j < order_; ++j) {
      const double v = 0.5 * (at(i, j) + at(j, i));
      at(i, j) = v;
      at(j, i) = v;
    }
  }
}

double SymMatrix::trace() const {
  double t = 0.0;
  for (int i = 0; i < order_; ++i) t += at(i, i);
  return t;
}

std::vector<double> solve_qr(const SymMatrix& q, const std::vector<double>& r) {
  const int m = q.order();
  if (static_cast<int>(r.size()) != m) {
    throw DimensionError("solve_qr: size mismatch");
  }
  for (double v : q.data()) {
    if (!std::isfinite(v)) throw OptimizationError("solve_qr: non-finite matrix");
  }
  for (double v : r) {
    if (!std::isfinite(v)) throw OptimizationError("solve_qr: non-finite rhs");
  }
  Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(r.data(), m);
  Eigen::VectorXd x = as_eigen(q).colPivHouseholderQr().solve(rhs);
  return {x.data(), x.data() + m};
}

double residual_norm(const SymMatrix& q, const std::vector<double>& x,
                     const std::vector<double>& r) {
  const int m = q.order();
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    double row = -r[i];
    for (int j = 0; j < m; ++j) row += q.at(i, j) * x[j];
    sum += row * row;
  }
  return std::sqrt(sum);
}

CgResult solve_cg(const SymMatrix& q, const std::vector<double>& r, double tol,
                  int max_iter) {
  const int m = q.order();
  if (static_cast<int>(r.size()) != m) {
    throw DimensionError("solve_cg: size mismatch");
  }
  CgResult out;
  out.x.assign(m, 0.0);
  double rhs_norm = 0.0;
  for (double v : r) rhs_norm += v * v;
  rhs_norm = std::sqrt(rhs_norm);
  if (rhs_norm == 0.0) {
    out.converged = true;
    return out;
  }

  std::vector<double> residual = r;  // r - Qx with x = 0
  std::vector<double> direction = residual;
  std::vector<double> q_dir(m, 0.0);
  double res_sq = 0.0;
  for (double v : residual) res_sq += v * v;

  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(res_sq) <= tol * rhs_norm) break;
    for (int i = 0; i < m; ++i) {
      double row = 0.0;
      for (int j = 0; j < m; ++j) row += q.at(i, j) * direction[j];
      q_dir[i] = row;
    }
    double curvature = 0.0;
    for (int i = 0; i < m; ++i) curvature += direction[i] * q_dir[i];
    if (curvature <= 0.0) break;  // direction in the null space or not PSD
    const double alpha = res_sq / curvature;
    for (int i = 0; i < m; ++i) {
      out.x[i] += alpha * direction[i];
      residual[i] -= alpha * q_dir[i];
    }
    double next_sq = 0.0;
    for (double v : residual) next_sq += v * v;
    if (!std::isfinite(next_sq)) {
      throw OptimizationError("solve_cg: diverged to non-finite values");
    }
    const double beta = next_sq / res_sq;
    for (int i = 0; i < m; ++i) {
      direction[i] = residual[i] + beta * direction[i];
    }
    res_sq = next_sq;
    out.iterations = it + 1;
  }
  out.residual = std::sqrt(res_sq) / rhs_norm;
  out.converged = out.residual <= tol;
  return out;
}

double min_eigenvalue(const SymMatrix& q) {
  Eigen::MatrixXd m = as_eigen(q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      m, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double condition_estimate(const SymMatrix& q) {
  Eigen::MatrixXd m = as_eigen(q);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(
      m, Eigen::EigenvaluesOnly);
  const double lo = solver.eigenvalues().cwiseAbs().minCoeff();
  const double hi = solver.eigenvalues().cwiseAbs().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

double newton_root(const std::function<double(double)>& g,
                   const std::function<double(double)>& dg, double init,
                   double lo, double hi, const RootOptions& opts,
                   int* iterations_out) {
  if (iterations_out) *iterations_out = 0;
  double g_lo = g(lo);
  double g_hi = g(hi);
  if (g_lo == 0.0) return lo;
  if (g_hi == 0.0) return hi;
  if (g_lo * g_hi > 0.0) {
    throw OptimizationError("newton_root: no sign change on bracket");
  }

  double x = std::clamp(init, lo, hi);
  double gx = g(x);
  double x_prev = lo;
  double g_prev = g_lo;
  for (int it = 0; it < opts.max_newton_iterations; ++it) {
    if (iterations_out) *iterations_out = it + 1;
    if (gx == 0.0) return x;
    // Shrink the bracket around the sign change.
    if (gx * g_lo < 0.0) {
      hi = x;
      g_hi = gx;
    } else {
      lo = x;
      g_lo = gx;
    }
    double step_target;
    const double slope = dg ? dg(x)
                            : (x == x_prev ? 0.0 : (gx - g_prev) / (x - x_prev));
    if (slope != 0.0 && std::isfinite(slope)) {
      step_target = x - gx / slope;
    } else {
      step_target = 0.5 * (lo + hi);
    }
    if (!(step_target > lo && step_target < hi)) {
      step_target = 0.5 * (lo + hi);  // Newton left the bracket; bisect
    }
    x_prev = x;
    g_prev = gx;
    const double dx = step_target - x;
    x = step_target;
    gx = g(x);
    if (std::abs(dx) <= opts.step_tolerance * (1.0 + std::abs(x))) return x;
  }
  return x;
}

MinimizeResult minimize_scalar(const std::function<double(double)>& f,
                               const std::function<double(double)>& df,
                               double init, double lo, double hi,
                               const RootOptions& opts) {
  (void)f;  // the minimizer works entirely on df; f kept for diagnostics
  MinimizeResult out;
  double a = lo, b = hi;
  for (int expansion = 0; expansion <= opts.max_bracket_expansions;
       ++expansion) {
    // Scan for the rightmost - to + crossing of df (a local minimum).
    const int n = opts.scan_points;
    double best_lo = 0.0, best_hi = 0.0;
    bool found = false;
    double x_prev = a;
    double d_prev = df(a);
    for (int i = 1; i <= n; ++i) {
      const double x = a + (b - a) * static_cast<double>(i) / n;
      const double d = df(x);
      if (d_prev < 0.0 && d >= 0.0) {
        best_lo = x_prev;
        best_hi = x;
        found = true;
      }
      x_prev = x;
      d_prev = d;
    }
    if (found) {
      out.bracket_expansions = expansion;
      out.x = newton_root(df, {}, std::clamp(init, best_lo, best_hi), best_lo,
                          best_hi, opts);
      return out;
    }
    const double mid = 0.5 * (a + b);
    const double half = (b - a);  // doubles the bracket width
    a = mid - half;
    b = mid + half;
  }
  throw OptimizationError(
      "minimize_scalar: no descent-to-ascent crossing found after bracket "
      "expansion");
}

}  // namespace wvcd::linalg
