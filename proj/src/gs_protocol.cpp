#include "wvcd/gs_protocol.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

namespace wvcd::protocol {

using json = nlohmann::json;

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

double binomial(int n, int k) {
  double v = 1.0;
  for (int i = 1; i <= k; ++i) v = v * (n - k + i) / i;
  return v;
}

// Polynomials as ascending coefficient vectors.
double poly_eval(const std::vector<double>& p, double x) {
  double v = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) v = v * x + p[i];
  return v;
}

std::vector<double> poly_derivative(const std::vector<double>& p) {
  std::vector<double> d;
  for (std::size_t i = 1; i < p.size(); ++i) d.push_back(i * p[i]);
  if (d.empty()) d.push_back(0.0);
  return d;
}

std::vector<double> poly_mul(const std::vector<double>& a,
                             const std::vector<double>& b) {
  std::vector<double> c(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) c[i + j] += a[i] * b[j];
  }
  return c;
}

std::vector<double> poly_sub(std::vector<double> a,
                             const std::vector<double>& b) {
  if (a.size() < b.size()) a.resize(b.size(), 0.0);
  for (std::size_t i = 0; i < b.size(); ++i) a[i] -= b[i];
  while (a.size() > 1 && a.back() == 0.0) a.pop_back();
  return a;
}

// Numerator and denominator of Omega(E) as polynomials in E:
//   numerator_k   = (-1)^k binom(2K-2, k) omega_(2K-1-k)
//   denominator_k = (-1)^k binom(2K-2, k) omega_(2K-2-k)
void omega_fraction(const EnergyShiftProblem& prob, std::vector<double>& num,
                    std::vector<double>& den) {
  const int k2 = 2 * prob.degree - 2;
  num.assign(k2 + 1, 0.0);
  den.assign(k2 + 1, 0.0);
  for (int k = 0; k <= k2; ++k) {
    const double sign = (k % 2 == 0) ? 1.0 : -1.0;
    const double c = sign * binomial(k2, k);
    num[k] = c * prob.omega[2 * prob.degree - 1 - k];
    den[k] = c * prob.omega[2 * prob.degree - 2 - k];
  }
}

// d/dE Omega has the sign of crit = num' den - num den'; the denominator
// tr[(H-E)^(2K-2)] is positive. The top coefficient of crit cancels
// exactly, leaving degree <= 4K-6.
std::vector<double> critical_polynomial(const EnergyShiftProblem& prob) {
  std::vector<double> num, den;
  omega_fraction(prob, num, den);
  return poly_sub(poly_mul(poly_derivative(num), den),
                  poly_mul(num, poly_derivative(den)));
}

// Analytic larger critical point for K = 2:
// crit/2 = (w2 - w1^2) E^2 + (w1 w2 - w3) E + (w1 w3 - w2^2).
double quadratic_shift(const std::vector<double>& omega) {
  const double a = omega[2] - omega[1] * omega[1];
  const double b = omega[1] * omega[2] - omega[3];
  const double c = omega[1] * omega[3] - omega[2] * omega[2];
  if (a <= 0.0) {
    throw OptimizationError("energy_shift: spectrum has no spread");
  }
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) {
    throw OptimizationError("energy_shift: no real critical point (K = 2)");
  }
  return (-b + std::sqrt(disc)) / (2.0 * a);
}

}  // namespace

EnergyShiftProblem moments(const HamiltonianPowers& powers, int degree,
                           double lambda) {
  if (degree < 1 || static_cast<int>(powers.powers.size()) < degree) {
    throw DimensionError("moments: powers do not cover the requested degree");
  }
  EnergyShiftProblem prob;
  prob.degree = degree;
  prob.lambda = lambda;
  prob.omega.assign(2 * degree, 0.0);
  prob.omega[0] = 1.0;
  for (int k = 1; k <= degree; ++k) {
    prob.omega[k] = powers.powers[k - 1].normalized_trace().real();
  }
  for (int k = degree + 1; k <= 2 * degree - 1; ++k) {
    prob.omega[k] = trace_product_normalized(powers.powers[degree - 1],
                                             powers.powers[k - degree - 1])
                        .real();
  }
  return prob;
}

EnergyShiftProblem moments(const SparseOperator& h, int degree,
                           double lambda) {
  return moments(action::hamiltonian_powers(h, h, degree), degree, lambda);
}

EnergyShiftProblem moments(const FactorizedTraces& ft, double lambda) {
  EnergyShiftProblem prob;
  prob.degree = ft.max_degree;
  prob.lambda = lambda;
  prob.omega = ft.moments(lambda);
  return prob;
}

EnergyShiftResult energy_shift(const EnergyShiftProblem& prob,
                               const linalg::RootOptions& opts) {
  if (prob.degree < 2) {
    throw DimensionError("energy_shift: requires degree >= 2");
  }
  if (static_cast<int>(prob.omega.size()) < 2 * prob.degree) {
    throw DimensionError("energy_shift: missing moments");
  }

  EnergyShiftResult out;
  const double mean = prob.omega[1];
  const double variance = prob.omega[2] - mean * mean;
  if (variance <= 0.0) {
    throw OptimizationError("energy_shift: spectrum has no spread");
  }
  const double sigma = std::sqrt(variance);

  const std::vector<double> crit = critical_polynomial(prob);
  const std::vector<double> dcrit = poly_derivative(crit);
  auto crit_fn = [&crit](double e) { return poly_eval(crit, e); };
  auto dcrit_fn = [&dcrit](double e) { return poly_eval(dcrit, e); };

  // Diagnostics plus the bisection bracket: scan for sign crossings of
  // dOmega/dE over the window, keeping the rightmost - to + interval.
  double lo = mean - 10.0 * sigma;
  double hi = mean + 10.0 * sigma;
  double best_lo = 0.0, best_hi = 0.0;
  bool found = false;
  for (int expansion = 0; expansion <= opts.max_bracket_expansions;
       ++expansion) {
    out.interior_minima = 0;
    out.interior_maxima = 0;
    double x_prev = lo;
    double c_prev = crit_fn(lo);
    for (int i = 1; i <= opts.scan_points; ++i) {
      const double x = lo + (hi - lo) * static_cast<double>(i) / opts.scan_points;
      const double c = crit_fn(x);
      if (c_prev < 0.0 && c >= 0.0) {
        ++out.interior_minima;
        best_lo = x_prev;
        best_hi = x;
        found = true;
      } else if (c_prev > 0.0 && c <= 0.0) {
        ++out.interior_maxima;
      }
      x_prev = x;
      c_prev = c;
    }
    if (found) {
      out.bracket_expansions = expansion;
      break;
    }
    const double mid = 0.5 * (lo + hi);
    const double half = hi - lo;
    lo = mid - half;
    hi = mid + half;
  }
  if (!found) {
    std::ostringstream msg;
    msg << "energy_shift: no interior minimum of Omega found (K = "
        << prob.degree << ", lambda = " << prob.lambda << ", mean = " << mean
        << ", sigma = " << sigma << ")";
    throw OptimizationError(msg.str());
  }

  if (prob.degree == 2) {
    out.energy = quadratic_shift(prob.omega);
    return out;
  }

  // Newton from the analytic K = 2 value, safeguarded inside the bracket.
  const double init = quadratic_shift(prob.omega);
  out.energy = linalg::newton_root(crit_fn, dcrit_fn,
                                   std::clamp(init, best_lo, best_hi), best_lo,
                                   best_hi, opts, &out.newton_iterations);
  return out;
}

std::vector<double> gs_polynomial_coefficients(int degree, double energy) {
  if (degree < 1) throw DimensionError("gs_polynomial: degree must be >= 1");
  std::vector<double> p(degree + 1, 0.0);
  for (int k = 0; k <= degree; ++k) {
    p[k] = binomial(degree, k) * std::pow(-energy, degree - k);
  }
  return p;
}

ActionPolynomial gs_polynomial(int degree, double energy) {
  return ActionPolynomial::fixed(gs_polynomial_coefficients(degree, energy));
}

double gs_weight_state(double eps, double energy, int degree) {
  return static_cast<double>(degree) * degree *
         std::pow(eps - energy, 2 * degree - 2);
}

double gs_weight_pair(double eps_m, double eps_n, double energy, int degree) {
  const double xm = eps_m - energy;
  const double xn = eps_n - energy;
  double sum = 0.0;
  for (int s = -(degree - 1); s <= degree - 1; ++s) {
    sum += (degree - std::abs(s)) * std::pow(xn, degree - 1 - s) *
           std::pow(xm, degree - 1 + s);
  }
  return sum;
}

double gs_weight_pair_ratio(double eps_m, double eps_n, double energy,
                            int degree) {
  const double pm = std::pow(eps_m - energy, degree);
  const double pn = std::pow(eps_n - energy, degree);
  const double ratio = (pm - pn) / (eps_m - eps_n);
  return ratio * ratio;
}

LinearSolveInfo solve_linear(const QuadraticForm& form,
                             std::vector<double>& alpha,
                             const SolveOptions& opts) {
  const int m = form.Q.order();
  LinearSolveInfo info;
  double rhs_norm = 0.0;
  for (double v : form.r) rhs_norm += v * v;
  rhs_norm = std::sqrt(rhs_norm);
  if (rhs_norm == 0.0) {
    alpha.assign(m, 0.0);
    info.method = "trivial";
    return info;
  }

  if (m <= opts.qr_max_order) {
    alpha = linalg::solve_qr(form.Q, form.r);
    info.method = "qr";
    info.residual_rel = linalg::residual_norm(form.Q, alpha, form.r) / rhs_norm;
    if (info.residual_rel > opts.residual_tolerance) {
      // Rank-deficient or ill-conditioned; retry with a Tikhonov shift.
      linalg::SymMatrix shifted = form.Q;
      const double shift = opts.tikhonov_epsilon * form.Q.trace() / m;
      for (int i = 0; i < m; ++i) shifted.at(i, i) += shift;
      alpha = linalg::solve_qr(shifted, form.r);
      info.method = "qr+tikhonov";
      info.residual_rel =
          linalg::residual_norm(form.Q, alpha, form.r) / rhs_norm;
    }
  } else {
    linalg::CgResult cg =
        linalg::solve_cg(form.Q, form.r, opts.cg_tolerance,
                         opts.cg_max_iterations_per_order * m);
    alpha = std::move(cg.x);
    info.method = "cg";
    info.iterations = cg.iterations;
    info.residual_rel = linalg::residual_norm(form.Q, alpha, form.r) / rhs_norm;
  }
  return info;
}

SingleSolveResult solve_single(const SparseOperator& h,
                               const SparseOperator& dh, const Ansatz& ansatz,
                               int degree, double lambda,
                               const SolveOptions& opts) {
  if (degree < 1) throw DimensionError("solve_single: degree must be >= 1");
  SingleSolveResult out;

  if (degree == 1) {
    out.form = action::quadratic_form_from(h, dh, ansatz, lambda, 1);
  } else {
    const HamiltonianPowers hp = action::hamiltonian_powers(h, dh, degree);
    const EnergyShiftProblem prob = moments(hp, degree, lambda);
    out.shift_diagnostics = energy_shift(prob, opts.root);
    const double e = out.shift_diagnostics.energy;
    out.energy_shift = e;

    // Shifted power (H - E)^K and its derivative by binomial expansion over
    // the cached powers; H^0 = I contributes only to the operator itself.
    const std::vector<double> p = gs_polynomial_coefficients(degree, e);
    SparseOperator poly_op =
        p[0] * SparseOperator::identity(h.nspins());
    SparseOperator poly_dop(h.nspins());
    for (int k = 1; k <= degree; ++k) {
      if (p[k] == 0.0) continue;
      poly_op += p[k] * hp.powers[k - 1];
      poly_dop += p[k] * hp.dpowers[k - 1];
    }
    out.form = action::quadratic_form_from(poly_op, poly_dop, ansatz, lambda,
                                           degree);
  }

  out.solve = solve_linear(out.form, out.alpha, opts);
  return out;
}

// ---------------------------------------------------------------------------
// Protocol table

std::vector<double> uniform_grid(int points) {
  if (points < 2) throw DimensionError("uniform_grid: need at least 2 points");
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) {
    grid[i] = static_cast<double>(i) / (points - 1);
  }
  return grid;
}

bool ProtocolTable::has_gaps() const {
  for (const std::string& f : flags) {
    if (!f.empty()) return true;
  }
  return false;
}

std::vector<double> ProtocolTable::alpha_at(double lambda) const {
  if (has_gaps()) {
    throw IntegrationError("protocol table has flagged gaps");
  }
  if (lambdas.empty()) throw IntegrationError("protocol table is empty");
  if (lambda <= lambdas.front()) return alpha.front();
  if (lambda >= lambdas.back()) return alpha.back();
  const auto it = std::upper_bound(lambdas.begin(), lambdas.end(), lambda);
  const std::size_t hi = it - lambdas.begin();
  const std::size_t lo = hi - 1;
  const double t = (lambda - lambdas[lo]) / (lambdas[hi] - lambdas[lo]);
  std::vector<double> a(num_ansatz);
  for (std::size_t mu = 0; mu < num_ansatz; ++mu) {
    a[mu] = (1.0 - t) * alpha[lo][mu] + t * alpha[hi][mu];
  }
  return a;
}

std::string ProtocolTable::to_csv() const {
  std::string out = "lambda,E_shift";
  for (std::size_t mu = 1; mu <= num_ansatz; ++mu) {
    out += ",alpha_" + std::to_string(mu);
  }
  out += ",residual\n";
  char buf[64];
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", lambdas[i]);
    out += buf;
    out += ',';
    if (degree >= 2 && std::isfinite(energy_shift[i])) {
      std::snprintf(buf, sizeof(buf), "%.17g", energy_shift[i]);
      out += buf;
    }
    for (std::size_t mu = 0; mu < num_ansatz; ++mu) {
      std::snprintf(buf, sizeof(buf), ",%.17g", alpha[i][mu]);
      out += buf;
    }
    std::snprintf(buf, sizeof(buf), ",%.17g\n", residual[i]);
    out += buf;
  }
  return out;
}

std::string ProtocolTable::metadata_json() const {
  json j;
  j["schema_version"] = 1;
  j["degree"] = degree;
  j["num_ansatz"] = num_ansatz;
  j["ansatz_id"] = ansatz_id;
  j["instance_hash"] = instance_hash;
  j["grid_points"] = lambdas.size();
  j["stage1_seconds"] = stage1_seconds;
  j["stage2_seconds"] = stage2_seconds;
  j["stage1_cached"] = stage1_cached;
  j["flags"] = flags;
  j["iterations"] = iterations;
  return j.dump(2);
}

ProtocolTable ProtocolTable::from_csv(const std::string& csv,
                                      const std::string& metadata) {
  ProtocolTable table;
  json meta;
  try {
    meta = json::parse(metadata);
  } catch (const json::exception& e) {
    throw FormatError(std::string("protocol metadata: ") + e.what());
  }
  table.degree = meta.at("degree").get<int>();
  table.num_ansatz = meta.at("num_ansatz").get<std::size_t>();
  table.ansatz_id = meta.value("ansatz_id", "");
  table.instance_hash = meta.value("instance_hash", "");
  table.stage1_cached = meta.value("stage1_cached", false);
  if (meta.contains("flags")) {
    table.flags = meta["flags"].get<std::vector<std::string>>();
  }
  if (meta.contains("iterations")) {
    table.iterations = meta["iterations"].get<std::vector<int>>();
  }

  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("protocol CSV: empty file");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    // A trailing empty cell is not produced by the writer; the expected
    // column count is lambda, E_shift, M alphas, residual.
    if (cells.size() != table.num_ansatz + 3) {
      throw FormatError("protocol CSV: wrong column count");
    }
    table.lambdas.push_back(std::stod(cells[0]));
    table.energy_shift.push_back(
        cells[1].empty() ? std::numeric_limits<double>::quiet_NaN()
                         : std::stod(cells[1]));
    std::vector<double> a(table.num_ansatz);
    for (std::size_t mu = 0; mu < table.num_ansatz; ++mu) {
      a[mu] = std::stod(cells[2 + mu]);
    }
    table.alpha.push_back(std::move(a));
    table.residual.push_back(std::stod(cells.back()));
  }
  if (table.flags.empty()) table.flags.assign(table.lambdas.size(), "");
  if (table.iterations.empty()) table.iterations.assign(table.lambdas.size(), 0);
  return table;
}

ProtocolTable solve_protocol(const FactorizedHamiltonian& hf,
                             const Ansatz& ansatz, int degree,
                             const std::vector<double>& grid,
                             const SolveOptions& opts,
                             const FactorizedTraces* cached,
                             FactorizedTraces* computed_traces) {
  if (degree < 1) throw DimensionError("solve_protocol: degree must be >= 1");
  for (double lambda : grid) {
    if (lambda < 0.0 || lambda > 1.0) {
      throw DimensionError("solve_protocol: grid outside [0, 1]");
    }
  }

  ProtocolTable table;
  table.lambdas = grid;
  table.degree = degree;
  table.num_ansatz = ansatz.size();
  table.ansatz_id = ansatz.id;

  const double t0 = now_seconds();
  FactorizedTraces local;
  const FactorizedTraces* ft = cached;
  if (ft == nullptr) {
    local = action::precompute_factorized(hf, degree, ansatz);
    ft = &local;
  } else {
    table.stage1_cached = true;
  }
  table.stage1_seconds = now_seconds() - t0;

  const std::size_t n = grid.size();
  table.alpha.assign(n, {});
  table.energy_shift.assign(n, std::numeric_limits<double>::quiet_NaN());
  table.residual.assign(n, 0.0);
  table.iterations.assign(n, 0);
  table.flags.assign(n, "");

  const double t1 = now_seconds();
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    const double lambda = grid[i];
    try {
      ActionPolynomial poly = ActionPolynomial::conventional();
      if (degree >= 2) {
        const EnergyShiftProblem prob = moments(*ft, lambda);
        const EnergyShiftResult shift = energy_shift(prob, opts.root);
        table.energy_shift[i] = shift.energy;
        poly = gs_polynomial(degree, shift.energy);
      }
      QuadraticForm qf = action::assemble_at_lambda(*ft, poly, lambda);
      std::vector<double> alpha;
      const LinearSolveInfo info = solve_linear(qf, alpha, opts);
      table.alpha[i] = std::move(alpha);
      table.residual[i] = info.residual_rel;
      table.iterations[i] = info.iterations;
    } catch (const std::exception& e) {
      table.flags[i] = e.what();
      table.alpha[i].assign(ansatz.size(),
                            std::numeric_limits<double>::quiet_NaN());
    }
  }
  table.stage2_seconds = now_seconds() - t1;

  if (computed_traces != nullptr && cached == nullptr) {
    *computed_traces = std::move(local);
  }
  return table;
}

}  // namespace wvcd::protocol
