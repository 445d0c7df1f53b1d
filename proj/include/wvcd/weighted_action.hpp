#pragma once

// Assembly of the weighted-action quadratic form: the M x M matrix Q and
// vector r whose stationarity condition Q alpha = r determines the driving
// coefficients. Two routes are provided:
//
//   build_quadratic_form  - direct assembly at a single lambda from H and
//                           dH/dlambda;
//   precompute_factorized - one-time computation of lambda-independent
//                           operator traces for a factorized Hamiltonian,
//                           after which assemble_at_lambda produces Q(lambda)
//                           and r(lambda) by scalar contraction only.
//
// All stored traces are 2^-N normalized so magnitudes stay polynomial in N;
// the linear equation is homogeneous in this scale, so solutions are
// unaffected.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wvcd/linalg.hpp"
#include "wvcd/model.hpp"
#include "wvcd/pauli_alg.hpp"

namespace wvcd::action {

using model::Ansatz;
using model::FactorizedHamiltonian;
using pauli::Complex;
using pauli::SparseOperator;

// Polynomial with lambda-dependent coefficients (p_0(lambda)..p_K(lambda)).
struct ActionPolynomial {
  int degree = 1;
  std::function<std::vector<double>(double)> coefficients;

  static ActionPolynomial fixed(std::vector<double> p);
  // P(x) = x, the conventional action.
  static ActionPolynomial conventional();
  std::vector<double> eval(double lambda) const;
};

struct BuildStats {
  double seconds = 0.0;
  std::size_t poly_operator_terms = 0;        // |P(H)|
  std::size_t commutator_terms_total = 0;     // sum over mu of |[P, A_mu]|
};

struct QuadraticForm {
  linalg::SymMatrix Q;
  std::vector<double> r;
  double lambda = 0.0;
  int degree = 1;
  BuildStats stats;
};

// H^1..H^K and their lambda-derivatives, with powers[k-1] = H^k and
// dpowers[k-1] = d/dlambda H^k built by the Leibniz recursion
// d[H^k] = d[H^(k-1)] H + H^(k-1) dH.
struct HamiltonianPowers {
  std::vector<SparseOperator> powers;
  std::vector<SparseOperator> dpowers;
};

HamiltonianPowers hamiltonian_powers(const SparseOperator& h,
                                     const SparseOperator& dh, int max_degree);

// Core assembly from a prepared fictitious Hamiltonian P and its derivative:
// r_mu = Re( i tr{dP * [P, A_mu]} / 2^N ),
// Q_mu_nu = tr{P * [[P, A_mu], A_nu]} / 2^N, filled for mu >= nu and
// mirrored. Traces iterate the commutator side and look up in P; the triple
// products are never formed.
QuadraticForm quadratic_form_from(const SparseOperator& poly_op,
                                  const SparseOperator& poly_op_derivative,
                                  const Ansatz& ansatz, double lambda,
                                  int degree);

QuadraticForm build_quadratic_form(const SparseOperator& h,
                                   const SparseOperator& dh,
                                   const ActionPolynomial& poly,
                                   const Ansatz& ansatz, double lambda);

// Monomial in the factor coefficients: exponents e with
// f~_g = prod_gamma f_gamma^e_gamma and degree d_g = sum e_gamma.
struct Monomial {
  std::vector<int> exponents;
  int degree = 0;
};

// Lambda-independent data for a factorized Hamiltonian: operators F~_g with
// sum_{d_g=k} f~_g F~_g = H^k, plus every trace the per-lambda assembly and
// the moment evaluation need. Monomials are ordered lexicographically by
// exponent vector; pair index for (mu, nu) with mu >= nu is
// mu(mu+1)/2 + nu.
struct FactorizedTraces {
  int nspins = 0;
  int max_degree = 0;
  std::size_t num_ansatz = 0;
  std::string ansatz_id;
  std::vector<Monomial> monomials;

  // q_tilde[g][g'][pair] = tr{[F~_g, A_mu][F~_g', A_nu]} / 2^N
  std::vector<std::vector<std::vector<double>>> q_tilde;
  // r_tilde[g][g'][mu] = Im( tr{F~_g [F~_g', A_mu]} / 2^N )
  std::vector<std::vector<std::vector<double>>> r_tilde;
  // omega_tilde[g] = tr(F~_g) / 2^N
  std::vector<double> omega_tilde;
  // omega_pair[g][g'] = tr(F~_g F~_g') / 2^N for d_g = max_degree and
  // d_g' < max_degree (zero elsewhere); used for moments beyond degree K.
  std::vector<std::vector<double>> omega_pair;

  // In-memory only; empty after a cache load.
  std::vector<SparseOperator> operators;
  // Copies of the Hamiltonian's coefficient functions and derivatives.
  std::vector<std::function<double(double)>> factor_coeffs;
  std::vector<std::function<double(double)>> factor_derivs;

  std::size_t num_monomials() const { return monomials.size(); }
  static std::size_t pair_index(std::size_t mu, std::size_t nu) {
    return mu * (mu + 1) / 2 + nu;
  }
  double monomial_value(std::size_t g, double lambda) const;
  double monomial_derivative(std::size_t g, double lambda) const;

  // Moments tr[H(lambda)^k]/2^N for k = 0..2K-1, using stored traces only.
  std::vector<double> moments(double lambda) const;
};

FactorizedTraces precompute_factorized(const FactorizedHamiltonian& hf,
                                       int max_degree, const Ansatz& ansatz);

QuadraticForm assemble_at_lambda(const FactorizedTraces& ft,
                                 const ActionPolynomial& poly, double lambda);

// Cache file: JSON blob holding the trace tensors keyed by (instance hash,
// degree, ansatz id) plus a format version. Operators and coefficient
// functions are not stored; load_traces rebinds the coefficient functions
// from the Hamiltonian passed in. Returns nullopt on key or version
// mismatch.
void save_traces(const FactorizedTraces& ft, const std::string& instance_hash,
                 const std::string& path);
std::optional<FactorizedTraces> load_traces(const std::string& path,
                                            const std::string& instance_hash,
                                            int max_degree,
                                            const std::string& ansatz_id,
                                            const FactorizedHamiltonian& hf);

}  // namespace wvcd::action
