#include "wvcd/weighted_action.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace wvcd::action {

using json = nlohmann::json;
using pauli::PauliTerm;
using pauli::SiteIndex;

namespace {

constexpr int kTraceCacheVersion = 1;

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// r entries and Q entries are real by Hermiticity; the residue in the other
// component is checked against this relative bound and dropped.
void check_residue(double residue, double magnitude, const char* what) {
  if (residue > 1e-9 * std::max(1.0, magnitude)) {
    throw OptimizationError(std::string(what) +
                            ": non-real trace residue exceeds tolerance");
  }
}

}  // namespace

ActionPolynomial ActionPolynomial::fixed(std::vector<double> p) {
  if (p.empty()) throw DimensionError("ActionPolynomial: empty coefficients");
  ActionPolynomial poly;
  poly.degree = static_cast<int>(p.size()) - 1;
  poly.coefficients = [p](double) { return p; };
  return poly;
}

ActionPolynomial ActionPolynomial::conventional() {
  return fixed({0.0, 1.0});
}

std::vector<double> ActionPolynomial::eval(double lambda) const {
  std::vector<double> p = coefficients(lambda);
  if (static_cast<int>(p.size()) != degree + 1) {
    throw DimensionError("ActionPolynomial: coefficient count != degree + 1");
  }
  return p;
}

HamiltonianPowers hamiltonian_powers(const SparseOperator& h,
                                     const SparseOperator& dh,
                                     int max_degree) {
  if (max_degree < 1) {
    throw DimensionError("hamiltonian_powers: degree must be >= 1");
  }
  if (h.nspins() != dh.nspins()) {
    throw DimensionError("hamiltonian_powers: mismatched nspins");
  }
  HamiltonianPowers out;
  out.powers.reserve(max_degree);
  out.dpowers.reserve(max_degree);
  out.powers.push_back(h);
  out.dpowers.push_back(dh);
  for (int k = 2; k <= max_degree; ++k) {
    out.powers.push_back(out.powers.back() * h);
    out.dpowers.push_back(out.dpowers.back() * h +
                          out.powers[k - 2] * dh);
  }
  return out;
}

QuadraticForm quadratic_form_from(const SparseOperator& poly_op,
                                  const SparseOperator& poly_op_derivative,
                                  const Ansatz& ansatz, double lambda,
                                  int degree) {
  const double t0 = now_seconds();
  const std::size_t m = ansatz.size();
  QuadraticForm qf;
  qf.lambda = lambda;
  qf.degree = degree;
  qf.Q = linalg::SymMatrix(static_cast<int>(m));
  qf.r.assign(m, 0.0);

  SiteIndex ansatz_index(ansatz.operators);
  std::vector<SparseOperator> inner =
      batched_commutator(poly_op, ansatz_index);

  qf.stats.poly_operator_terms = poly_op.num_terms();
  for (const SparseOperator& c : inner) {
    qf.stats.commutator_terms_total += c.num_terms();
  }

  for (std::size_t mu = 0; mu < m; ++mu) {
    const Complex tr = trace_product_normalized(poly_op_derivative, inner[mu]);
    // i * tr{dP [P, A_mu]} with a Hermitian dP and anti-Hermitian commutator
    // is real; the trace itself is purely imaginary.
    check_residue(std::abs(tr.real()), std::abs(tr.imag()), "r assembly");
    qf.r[mu] = -tr.imag();
  }

#pragma omp parallel for schedule(dynamic)
  for (std::size_t mu = 0; mu < m; ++mu) {
    std::vector<SparseOperator> outer =
        batched_commutator(inner[mu], ansatz_index);
    for (std::size_t nu = 0; nu <= mu; ++nu) {
      const Complex tr = trace_product_normalized(poly_op, outer[nu]);
      check_residue(std::abs(tr.imag()), std::abs(tr.real()), "Q assembly");
      qf.Q.at(static_cast<int>(mu), static_cast<int>(nu)) = tr.real();
      qf.Q.at(static_cast<int>(nu), static_cast<int>(mu)) = tr.real();
    }
  }

  qf.stats.seconds = now_seconds() - t0;
  return qf;
}

QuadraticForm build_quadratic_form(const SparseOperator& h,
                                   const SparseOperator& dh,
                                   const ActionPolynomial& poly,
                                   const Ansatz& ansatz, double lambda) {
  const std::vector<double> p = poly.eval(lambda);
  const int degree = poly.degree;
  if (degree >= 1 && p[degree] == 0.0) {
    throw OptimizationError(
        "build_quadratic_form: leading polynomial coefficient vanished");
  }

  SparseOperator poly_op(h.nspins());
  SparseOperator poly_dop(h.nspins());
  if (p[0] != 0.0) {
    poly_op += p[0] * SparseOperator::identity(h.nspins());
  }
  if (degree >= 1) {
    HamiltonianPowers hp = hamiltonian_powers(h, dh, degree);
    for (int k = 1; k <= degree; ++k) {
      if (p[k] == 0.0) continue;
      poly_op += p[k] * hp.powers[k - 1];
      poly_dop += p[k] * hp.dpowers[k - 1];
    }
  }
  return quadratic_form_from(poly_op, poly_dop, ansatz, lambda, degree);
}

// ---------------------------------------------------------------------------
// Factorized sweep

namespace {

// All exponent vectors with sum <= max_degree in lexicographic order.
void enumerate_monomials(int n_factors, int max_degree,
                         std::vector<int>& current, int remaining,
                         std::vector<Monomial>& out) {
  if (static_cast<int>(current.size()) == n_factors) {
    Monomial m;
    m.exponents = current;
    m.degree = max_degree - remaining;
    out.push_back(std::move(m));
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    current.push_back(e);
    enumerate_monomials(n_factors, max_degree, current, remaining - e, out);
    current.pop_back();
  }
}

std::size_t find_monomial(const std::vector<Monomial>& monomials,
                          const std::vector<int>& exponents) {
  for (std::size_t g = 0; g < monomials.size(); ++g) {
    if (monomials[g].exponents == exponents) return g;
  }
  throw DimensionError("factorized traces: monomial lookup failed");
}

}  // namespace

double FactorizedTraces::monomial_value(std::size_t g, double lambda) const {
  double v = 1.0;
  const Monomial& m = monomials[g];
  for (std::size_t gamma = 0; gamma < m.exponents.size(); ++gamma) {
    for (int e = 0; e < m.exponents[gamma]; ++e) {
      v *= factor_coeffs[gamma](lambda);
    }
  }
  return v;
}

double FactorizedTraces::monomial_derivative(std::size_t g,
                                             double lambda) const {
  const Monomial& m = monomials[g];
  double sum = 0.0;
  for (std::size_t gamma = 0; gamma < m.exponents.size(); ++gamma) {
    const int e = m.exponents[gamma];
    if (e == 0) continue;
    double part = e * factor_derivs[gamma](lambda);
    for (int k = 0; k < e - 1; ++k) part *= factor_coeffs[gamma](lambda);
    for (std::size_t other = 0; other < m.exponents.size(); ++other) {
      if (other == gamma) continue;
      for (int k = 0; k < m.exponents[other]; ++k) {
        part *= factor_coeffs[other](lambda);
      }
    }
    sum += part;
  }
  return sum;
}

std::vector<double> FactorizedTraces::moments(double lambda) const {
  const int k_max = 2 * max_degree - 1;
  std::vector<double> omega(k_max + 1, 0.0);
  omega[0] = 1.0;
  for (std::size_t g = 0; g < monomials.size(); ++g) {
    const int d = monomials[g].degree;
    if (d >= 1 && d <= max_degree) {
      omega[d] += monomial_value(g, lambda) * omega_tilde[g];
    }
  }
  // k > K needs the split tr[H^K H^(k-K)].
  for (std::size_t g = 0; g < monomials.size(); ++g) {
    if (monomials[g].degree != max_degree) continue;
    const double fg = monomial_value(g, lambda);
    for (std::size_t gp = 0; gp < monomials.size(); ++gp) {
      const int d = monomials[gp].degree;
      if (d < 1 || d >= max_degree) continue;
      omega[max_degree + d] +=
          fg * monomial_value(gp, lambda) * omega_pair[g][gp];
    }
  }
  return omega;
}

FactorizedTraces precompute_factorized(const FactorizedHamiltonian& hf,
                                       int max_degree, const Ansatz& ansatz) {
  if (max_degree < 1) {
    throw DimensionError("precompute_factorized: degree must be >= 1");
  }
  if (hf.num_factors() < 1) {
    throw DimensionError("precompute_factorized: no Hamiltonian factors");
  }
  FactorizedTraces ft;
  ft.nspins = hf.nspins;
  ft.max_degree = max_degree;
  ft.num_ansatz = ansatz.size();
  ft.ansatz_id = ansatz.id;
  ft.factor_coeffs = hf.coefficients;
  ft.factor_derivs = hf.derivatives;

  const int n_factors = static_cast<int>(hf.num_factors());
  {
    std::vector<int> scratch;
    enumerate_monomials(n_factors, max_degree, scratch, max_degree,
                        ft.monomials);
  }
  const std::size_t n_g = ft.monomials.size();
  const std::size_t m = ansatz.size();
  const std::size_t n_pairs = m * (m + 1) / 2;

  // Operators by graded recursion: F~_e = sum_gamma F~_(e - 1_gamma) F_gamma,
  // grouping the expansion of H^k = H^(k-1) H by monomial. The sum over all
  // orderings keeps each F~_g Hermitian.
  ft.operators.assign(n_g, SparseOperator::zero(hf.nspins));
  for (std::size_t g = 0; g < n_g; ++g) {
    const Monomial& mono = ft.monomials[g];
    if (mono.degree == 0) {
      ft.operators[g] = SparseOperator::identity(hf.nspins);
      continue;
    }
    SparseOperator acc(hf.nspins);
    std::vector<int> prev = mono.exponents;
    for (int gamma = 0; gamma < n_factors; ++gamma) {
      if (mono.exponents[gamma] == 0) continue;
      prev[gamma] -= 1;
      const std::size_t g_prev = find_monomial(ft.monomials, prev);
      prev[gamma] += 1;
      acc += ft.operators[g_prev] * hf.factors[gamma];
    }
    ft.operators[g] = std::move(acc);
  }

  // Plain traces for the moment machinery.
  ft.omega_tilde.assign(n_g, 0.0);
  ft.omega_pair.assign(n_g, std::vector<double>(n_g, 0.0));
  for (std::size_t g = 0; g < n_g; ++g) {
    ft.omega_tilde[g] = ft.operators[g].normalized_trace().real();
    if (ft.monomials[g].degree != max_degree) continue;
    for (std::size_t gp = 0; gp < n_g; ++gp) {
      const int d = ft.monomials[gp].degree;
      if (d < 1 || d >= max_degree) continue;
      ft.omega_pair[g][gp] =
          trace_product_normalized(ft.operators[g], ft.operators[gp]).real();
    }
  }

  ft.q_tilde.assign(n_g, std::vector<std::vector<double>>(
                             n_g, std::vector<double>(n_pairs, 0.0)));
  ft.r_tilde.assign(
      n_g, std::vector<std::vector<double>>(n_g, std::vector<double>(m, 0.0)));

  SiteIndex ansatz_index(ansatz.operators);
  for (std::size_t g = 0; g < n_g; ++g) {
    if (ft.monomials[g].degree == 0) continue;  // [I, A] = 0
    std::vector<SparseOperator> inner =
        batched_commutator(ft.operators[g], ansatz_index);

#pragma omp parallel for schedule(dynamic)
    for (std::size_t mu = 0; mu < m; ++mu) {
      // r~_(mu, g', g) = tr{F~_g' [F~_g, A_mu]} / 2^N, purely imaginary.
      for (std::size_t gp = 0; gp < n_g; ++gp) {
        const Complex tr =
            trace_product_normalized(ft.operators[gp], inner[mu]);
        check_residue(std::abs(tr.real()), std::abs(tr.imag()),
                      "factorized r trace");
        ft.r_tilde[gp][g][mu] = tr.imag();
      }
      // Q~_(mu nu, g g') = -tr{F~_g' [[F~_g, A_mu], A_nu]} / 2^N, real.
      std::vector<SparseOperator> outer =
          batched_commutator(inner[mu], ansatz_index);
      for (std::size_t nu = 0; nu <= mu; ++nu) {
        const std::size_t pair = FactorizedTraces::pair_index(mu, nu);
        for (std::size_t gp = 0; gp < n_g; ++gp) {
          const Complex tr =
              trace_product_normalized(ft.operators[gp], outer[nu]);
          check_residue(std::abs(tr.imag()), std::abs(tr.real()),
                        "factorized Q trace");
          ft.q_tilde[g][gp][pair] = -tr.real();
        }
      }
    }
  }
  return ft;
}

QuadraticForm assemble_at_lambda(const FactorizedTraces& ft,
                                 const ActionPolynomial& poly, double lambda) {
  if (poly.degree > ft.max_degree) {
    throw DimensionError(
        "assemble_at_lambda: polynomial degree exceeds precomputed degree");
  }
  const double t0 = now_seconds();
  const std::vector<double> p = poly.eval(lambda);
  const std::size_t n_g = ft.num_monomials();
  const std::size_t m = ft.num_ansatz;

  // Per-monomial weights p_(d_g) f~_g(lambda) and the derivative companion.
  std::vector<double> weight(n_g, 0.0), dweight(n_g, 0.0);
  for (std::size_t g = 0; g < n_g; ++g) {
    const int d = ft.monomials[g].degree;
    if (d > poly.degree) continue;
    weight[g] = p[d] * ft.monomial_value(g, lambda);
    dweight[g] = p[d] * ft.monomial_derivative(g, lambda);
  }

  QuadraticForm qf;
  qf.lambda = lambda;
  qf.degree = poly.degree;
  qf.Q = linalg::SymMatrix(static_cast<int>(m));
  qf.r.assign(m, 0.0);

  for (std::size_t g = 0; g < n_g; ++g) {
    for (std::size_t gp = 0; gp < n_g; ++gp) {
      const double wq = weight[g] * weight[gp];
      // r_mu = i sum p p (df~_g) f~_g' tr{F~_g [F~_g', A_mu]}; the stored
      // trace is the imaginary part, so i * (i Im) contributes -Im.
      const double wr = dweight[g] * weight[gp];
      if (wq != 0.0) {
        for (std::size_t mu = 0; mu < m; ++mu) {
          for (std::size_t nu = 0; nu <= mu; ++nu) {
            const double q_term =
                -wq *
                ft.q_tilde[g][gp][FactorizedTraces::pair_index(mu, nu)];
            qf.Q.at(static_cast<int>(mu), static_cast<int>(nu)) += q_term;
          }
        }
      }
      if (wr != 0.0) {
        for (std::size_t mu = 0; mu < m; ++mu) {
          qf.r[mu] -= wr * ft.r_tilde[g][gp][mu];
        }
      }
    }
  }
  for (std::size_t mu = 0; mu < m; ++mu) {
    for (std::size_t nu = 0; nu < mu; ++nu) {
      qf.Q.at(static_cast<int>(nu), static_cast<int>(mu)) =
          qf.Q.at(static_cast<int>(mu), static_cast<int>(nu));
    }
  }
  qf.stats.seconds = now_seconds() - t0;
  return qf;
}

// ---------------------------------------------------------------------------
// Cache file

void save_traces(const FactorizedTraces& ft, const std::string& instance_hash,
                 const std::string& path) {
  json j;
  j["version"] = kTraceCacheVersion;
  j["instance_hash"] = instance_hash;
  j["nspins"] = ft.nspins;
  j["max_degree"] = ft.max_degree;
  j["num_ansatz"] = ft.num_ansatz;
  j["ansatz_id"] = ft.ansatz_id;
  json monomials = json::array();
  for (const Monomial& m : ft.monomials) monomials.push_back(m.exponents);
  j["monomials"] = monomials;
  j["q_tilde"] = ft.q_tilde;
  j["r_tilde"] = ft.r_tilde;
  j["omega_tilde"] = ft.omega_tilde;
  j["omega_pair"] = ft.omega_pair;

  std::ofstream out(path);
  if (!out) throw FormatError("save_traces: cannot open " + path);
  out << j.dump();
}

std::optional<FactorizedTraces> load_traces(const std::string& path,
                                            const std::string& instance_hash,
                                            int max_degree,
                                            const std::string& ansatz_id,
                                            const FactorizedHamiltonian& hf) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json j;
  try {
    in >> j;
  } catch (const json::exception&) {
    return std::nullopt;
  }
  if (!j.contains("version") || j["version"].get<int>() != kTraceCacheVersion) {
    return std::nullopt;
  }
  if (j.value("instance_hash", "") != instance_hash ||
      j.value("max_degree", -1) != max_degree ||
      j.value("ansatz_id", "") != ansatz_id ||
      j.value("nspins", -1) != hf.nspins) {
    return std::nullopt;
  }
  FactorizedTraces ft;
  ft.nspins = j["nspins"].get<int>();
  ft.max_degree = j["max_degree"].get<int>();
  ft.num_ansatz = j["num_ansatz"].get<std::size_t>();
  ft.ansatz_id = j["ansatz_id"].get<std::string>();
  for (const auto& exps : j["monomials"]) {
    Monomial m;
    m.exponents = exps.get<std::vector<int>>();
    m.degree = 0;
    for (int e : m.exponents) m.degree += e;
    ft.monomials.push_back(std::move(m));
  }
  ft.q_tilde = j["q_tilde"].get<std::vector<std::vector<std::vector<double>>>>();
  ft.r_tilde = j["r_tilde"].get<std::vector<std::vector<std::vector<double>>>>();
  ft.omega_tilde = j["omega_tilde"].get<std::vector<double>>();
  ft.omega_pair = j["omega_pair"].get<std::vector<std::vector<double>>>();
  ft.factor_coeffs = hf.coefficients;
  ft.factor_derivs = hf.derivatives;
  return ft;
}

}  // namespace wvcd::action
