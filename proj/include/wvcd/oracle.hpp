#pragma once

// Small-N dense ground truth: exact diagonalization, the exact adiabatic
// gauge potential, eigenbasis action values, Schroedinger evolution with
// optional counterdiabatic driving, and the derived analyses (speed-limit
// bound, partial actions, response functions).
//
// Site-ordering convention shared with the sparse algebra: site 1 is the
// leftmost Kronecker factor, i.e. basis index bit (N - s) carries site s.

#include <Eigen/Dense>

#include <complex>
#include <string>
#include <variant>
#include <vector>

#include "wvcd/gs_protocol.hpp"
#include "wvcd/model.hpp"
#include "wvcd/pauli_alg.hpp"

namespace wvcd::oracle {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using model::Ansatz;
using model::FactorizedHamiltonian;
using pauli::SparseOperator;

// Dense representations live in 2^N dimensions; refuse beyond this many
// spins unless the caller raises the guard explicitly.
inline constexpr int kDefaultDenseGuard = 14;

void check_dense_guard(int nspins, int guard);

// Kronecker-product realization of each term, summed with coefficients.
Matrix to_dense(const SparseOperator& op, int guard = kDefaultDenseGuard);

// Matrix-free application of a sparse operator to state vectors; each Pauli
// string becomes a bit flip mask, a sign mask, and a phase.
class CompiledOperator {
 public:
  CompiledOperator() = default;
  explicit CompiledOperator(const SparseOperator& op,
                            int guard = kDefaultDenseGuard);

  int dim() const { return dim_; }
  // out += scale * (op in)
  void apply_add(const Vector& in, Vector& out, Complex scale) const;

 private:
  struct Term {
    std::uint64_t flip = 0;
    std::uint64_t sign = 0;
    Complex coeff;
  };
  int nspins_ = 0;
  int dim_ = 0;
  std::vector<Term> terms_;
};

// Eigendecomposition of a dense Hermitian matrix with ascending eigenvalues
// and a fixed eigenvector phase (largest-magnitude component made real
// positive) so derived matrices are reproducible.
struct DenseSystem {
  int nspins = 0;
  Matrix hamiltonian;
  Eigen::VectorXd eigenvalues;
  Matrix eigenvectors;  // columns

  static DenseSystem build(const SparseOperator& h,
                           int guard = kDefaultDenseGuard);
  static DenseSystem build(Matrix h, int nspins);

  Vector ground_state() const { return eigenvectors.col(0); }
  // A rotated into the eigenbasis: U^dagger A U.
  Matrix to_eigenbasis(const Matrix& a) const;
};

// Degenerate pairs coupled by dH make the gauge potential ill-defined.
// Raise is the default contract; ZeroCoupledBlocks instead zeroes those
// elements, which leaves transport out of a nondegenerate ground state
// untouched and lets evolutions start from degenerate endpoints such as the
// bare transverse field.
enum class DegeneratePolicy { Raise, ZeroCoupledBlocks };

// Exact AGP via first-order perturbation of the eigenvectors:
// [Phi]_nm = i [dH]_nm / (eps_m - eps_n) in the eigenbasis, zero diagonal,
// returned in the computational basis. Pairs closer than
// 1e-10 * max|eps| with coupling above 1e-10 * ||dH||_F follow the
// degenerate policy; smaller couplings are always zeroed.
Matrix exact_agp(const DenseSystem& ds, const Matrix& dh_dense,
                 DegeneratePolicy policy = DegeneratePolicy::Raise);

// The alpha-dependent part of the weighted action in the eigenbasis:
// sum_nm [P(eps_m) - P(eps_n)]^2 |[V - Phi]_mn|^2.
double action_eigenbasis(const DenseSystem& ds,
                         const std::vector<double>& poly_coefficients,
                         const Matrix& v_dense, const Matrix& phi_dense);

struct NoDriving {};
struct ExactAgpDriving {};
using DrivingSpec =
    std::variant<NoDriving, const protocol::ProtocolTable*, ExactAgpDriving>;

struct EvolveConfig {
  int initial_steps = 256;
  int max_doublings = 18;
  // Accept when the final states of consecutive step-doubled runs are
  // within this 2-norm distance.
  double convergence = 1e-6;
  // Interior snapshot count (endpoints always stored). Fidelity against the
  // instantaneous ground state is evaluated at snapshots only when
  // fidelity_trace is set; the final fidelity is always evaluated.
  int store_points = 0;
  bool fidelity_trace = false;
  int dense_guard = kDefaultDenseGuard;
  // Optional shared work: initial state (default: ground state of H(0)) and
  // the ground state of H(1) for the final fidelity.
  const Vector* initial_state = nullptr;
  const Vector* final_ground_state = nullptr;
};

struct EvolutionResult {
  std::vector<double> times;
  std::vector<double> lambdas;
  std::vector<double> fidelities;  // empty unless fidelity_trace
  std::vector<double> norms;       // pre-renormalization norm at snapshots
  double final_fidelity = 0.0;
  double duration = 0.0;
  int steps = 0;
  int doublings = 0;
  double convergence_gap = 0.0;
  // Ground-state continuity between consecutive snapshots (fidelity_trace
  // runs only); values below 0.5 indicate an eigen-ordering problem.
  double min_ground_state_overlap = 1.0;
  Vector final_state;
  std::string driving_label;

  std::string to_csv() const;  // t,lambda,fidelity
  std::string summary_json(double gain = -1.0) const;
};

// Integrates i d/dt psi = [H(lambda_t) + lambdadot_t V(lambda_t)] psi with
// the linear schedule lambda_t = t / t_d (hbar = 1), fixed-step RK4 with
// per-step renormalization, doubling the step count until the final states
// agree to cfg.convergence. Driving options: none, interpolated protocol
// table (ansatz required), or the exact AGP recomputed along the way.
EvolutionResult evolve(const FactorizedHamiltonian& hf,
                       const DrivingSpec& driving, const Ansatz* ansatz,
                       double t_d, const EvolveConfig& cfg = {});

// Gains relative to the entry at k1_index: gains[i] = f[i] / f[k1_index],
// with the reference itself exactly 1 and division by zero reported as
// +infinity.
std::vector<double> fidelity_gains(const std::vector<double>& final_fidelities,
                                   std::size_t k1_index);

// Right-hand side of the speed-limit bound for the linear schedule:
// integral over [0,1] of sqrt(sum_{n != 1} |[V(lambda) - Phi(lambda)]_1n|^2)
// by trapezoidal quadrature on the given grid. The final fidelity then obeys
// arccos(sqrt(F_f)) <= bound.
double speed_limit_bound(const FactorizedHamiltonian& hf,
                         const protocol::ProtocolTable& table,
                         const Ansatz& ansatz, const std::vector<double>& grid,
                         int guard = kDefaultDenseGuard);
// Same quadrature with an arbitrary driving-term provider.
double speed_limit_bound(const FactorizedHamiltonian& hf,
                         const std::function<Matrix(double)>& v_at,
                         const std::vector<double>& grid,
                         int guard = kDefaultDenseGuard);

struct PartialActions {
  // Per-eigenstate decomposition values at the supplied V.
  std::vector<double> values;
  // Ideal action 2 * sum_{n != 1} |[V - Phi]_1n|^2 at the supplied V.
  double ideal_action = 0.0;
  std::vector<double> alpha_ideal;
  std::vector<std::vector<double>> alpha_partial;  // per eigenstate
};

// Decomposition of the weighted action into per-state contributions
// T^(K,n), plus the ideal action and the dense quadratic minimizers of both
// over the ansatz span.
PartialActions partial_actions(const DenseSystem& ds, int degree,
                               double energy,
                               const std::vector<Matrix>& ansatz_dense,
                               const Matrix& v_dense, const Matrix& phi_dense);

// Logarithmic response of the driving coefficients to a fold change of the
// longitudinal field at one site: central difference in ln h_site with
// relative step delta. Entries where the coefficient is bitwise unchanged
// report exactly zero.
std::vector<double> response_function(const model::IsingInstance& inst,
                                      model::AnsatzKind kind, int degree,
                                      double lambda, int site, double delta,
                                      const protocol::SolveOptions& opts = {});

}  // namespace wvcd::oracle
