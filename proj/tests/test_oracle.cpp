#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "wvcd/gs_protocol.hpp"
#include "wvcd/model.hpp"
#include "wvcd/oracle.hpp"
#include "wvcd/rng.hpp"

using namespace wvcd;
using namespace wvcd::oracle;
using model::Ansatz;
using model::FactorizedHamiltonian;
using model::IsingInstance;
using pauli::Axis;
using pauli::PauliTerm;
using pauli::SparseOperator;

TEST_CASE("dense realization conventions") {
  const Matrix id = to_dense(SparseOperator::identity(1));
  CHECK(id.rows() == 2);
  CHECK((id - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);

  // X on site 1 of a 2-spin system is X (x) I: site 1 is the leftmost
  // factor, so it flips the high-order basis bit.
  const Matrix x1 = to_dense(SparseOperator::pauli_x(1, 2));
  Matrix expected = Matrix::Zero(4, 4);
  expected(0, 2) = expected(2, 0) = expected(1, 3) = expected(3, 1) = 1.0;
  CHECK((x1 - expected).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(to_dense(SparseOperator::identity(2), 1), ResourceError);
}

TEST_CASE("compiled operators act like their dense images") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform01() * 3);
    const int dim = 1 << n;
    SparseOperator op(n);
    for (int t = 0; t < 6; ++t) {
      std::vector<pauli::PackedFactor> packed;
      for (int site = 1; site <= n; ++site) {
        const double u = rng.uniform01();
        if (u < 0.25) packed.push_back(pauli::pack_factor(Axis::X, site));
        else if (u < 0.5) packed.push_back(pauli::pack_factor(Axis::Y, site));
        else if (u < 0.75) packed.push_back(pauli::pack_factor(Axis::Z, site));
      }
      op.add_term(PauliTerm(packed.data(),
                            static_cast<std::uint32_t>(packed.size())),
                  Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5));
    }
    Vector psi(dim);
    for (int i = 0; i < dim; ++i) {
      psi[i] = Complex(rng.uniform01() - 0.5, rng.uniform01() - 0.5);
    }
    const CompiledOperator compiled(op);
    Vector fast = Vector::Zero(dim);
    compiled.apply_add(psi, fast, Complex(0.7, -0.1));
    const Vector reference = Complex(0.7, -0.1) * (to_dense(op) * psi);
    CHECK((fast - reference).norm() < 1e-12);
  }
}

TEST_CASE("exact gauge potential: commuting derivative and two-level form") {
  // dH commuting with H gives a vanishing gauge potential.
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 1, 2);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const SparseOperator h = hf.eval(0.5);
  const DenseSystem ds = DenseSystem::build(h);
  const Matrix phi_zero = exact_agp(ds, to_dense(h));
  CHECK(phi_zero.cwiseAbs().maxCoeff() < 1e-12);

  // Single spin H = (1-l) X + l Z: the gauge potential is
  // -1 / (2 (1 - 2l + 2l^2)) Y.
  for (double lambda : {0.1, 0.3, 0.5, 0.8}) {
    SparseOperator h1(1);
    h1.add_term(PauliTerm({{Axis::X, 1}}), 1.0 - lambda);
    h1.add_term(PauliTerm({{Axis::Z, 1}}), lambda);
    SparseOperator dh1(1);
    dh1.add_term(PauliTerm({{Axis::X, 1}}), -1.0);
    dh1.add_term(PauliTerm({{Axis::Z, 1}}), 1.0);
    const DenseSystem ds1 = DenseSystem::build(h1);
    const Matrix phi = exact_agp(ds1, to_dense(dh1));
    const double coeff = -1.0 / (2.0 * (1.0 - 2.0 * lambda + 2.0 * lambda * lambda));
    const Matrix expected = coeff * to_dense(SparseOperator::pauli_y(1, 1));
    CHECK((phi - expected).cwiseAbs().maxCoeff() < 1e-12);
  }

  // Hermitian with zero diagonal in the eigenbasis.
  const Matrix dh = to_dense(hf.eval_derivative(0.5));
  const Matrix phi = exact_agp(ds, dh);
  CHECK((phi - phi.adjoint()).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix phi_eig = ds.to_eigenbasis(phi);
  for (int n = 0; n < phi_eig.rows(); ++n) {
    CHECK(std::abs(phi_eig(n, n)) < 1e-12);
  }
}

TEST_CASE("exact driving keeps the fidelity pinned at one") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 2, 2, 14);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  EvolveConfig cfg;
  cfg.fidelity_trace = true;
  cfg.store_points = 40;
  const EvolutionResult res =
      evolve(hf, ExactAgpDriving{}, nullptr, 0.01, cfg);
  REQUIRE(!res.fidelities.empty());
  for (double f : res.fidelities) {
    CHECK(f >= 1.0 - 1e-6);
    CHECK(f <= 1.0 + 1e-10);
  }
  for (double nrm : res.norms) {
    CHECK(std::abs(nrm - 1.0) <= 1e-8);
  }
  CHECK(res.min_ground_state_overlap > 0.5);
  CHECK(res.driving_label == "exact-agp");
}

TEST_CASE("undriven adiabatic limit reaches high fidelity") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 1, 1);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const EvolutionResult slow = evolve(hf, NoDriving{}, nullptr, 200.0, {});
  CHECK(slow.final_fidelity >= 0.99);
  CHECK(slow.driving_label == "none");
}

TEST_CASE("short-duration fidelity plateaus") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 2, 19);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(4);
  const protocol::ProtocolTable table =
      protocol::solve_protocol(hf, ansatz, 1, protocol::uniform_grid(100));

  const EvolutionResult fast = evolve(hf, &table, &ansatz, 0.01, {});
  const EvolutionResult faster = evolve(hf, &table, &ansatz, 0.001, {});
  CHECK(std::abs(fast.final_fidelity - faster.final_fidelity) < 1e-3);

  const EvolutionResult bare_fast = evolve(hf, NoDriving{}, nullptr, 0.01, {});
  const EvolutionResult bare_faster =
      evolve(hf, NoDriving{}, nullptr, 0.001, {});
  CHECK(std::abs(bare_fast.final_fidelity - bare_faster.final_fidelity) < 1e-3);
}

TEST_CASE("evolution rejects bad inputs") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 1, 3);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  CHECK_THROWS_AS(evolve(hf, NoDriving{}, nullptr, -1.0, {}),
                  IntegrationError);
  const Ansatz ansatz = model::one_body_ansatz(2);
  protocol::ProtocolTable table =
      protocol::solve_protocol(hf, ansatz, 1, protocol::uniform_grid(3));
  CHECK_THROWS_AS(evolve(hf, &table, nullptr, 0.01, {}), IntegrationError);
  table.flags[1] = "synthetic failure";
  CHECK_THROWS_AS(evolve(hf, &table, &ansatz, 0.01, {}), IntegrationError);
}

TEST_CASE("fidelity gains") {
  const std::vector<double> f = {0.2, 0.1, 0.4, 0.8};
  const std::vector<double> g = fidelity_gains(f, 1);
  CHECK(g[1] == 1.0);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[2] == doctest::Approx(4.0));
  CHECK(g[3] == doctest::Approx(8.0));
  const std::vector<double> zero = fidelity_gains({0.5, 0.0}, 1);
  CHECK(std::isinf(zero[0]));
  CHECK(zero[1] == 1.0);
}

TEST_CASE("speed-limit bound") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 2, 2, 33);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const std::vector<double> grid = protocol::uniform_grid(101);

  // Driving with the exact gauge potential makes the bound vanish. The
  // grid touches the degenerate lambda = 0 endpoint, so the tolerant
  // degenerate policy applies.
  auto phi_at = [&](double lambda) {
    const DenseSystem ds = DenseSystem::build(hf.eval(lambda));
    return exact_agp(ds, to_dense(hf.eval_derivative(lambda)),
                     DegeneratePolicy::ZeroCoupledBlocks);
  };
  CHECK(speed_limit_bound(hf, phi_at, grid) < 1e-10);

  // The final infidelity angle never exceeds the bound.
  const Ansatz ansatz = model::one_body_ansatz(4);
  for (int degree : {1, 2}) {
    const protocol::ProtocolTable table =
        protocol::solve_protocol(hf, ansatz, degree, protocol::uniform_grid(100));
    const double bound = speed_limit_bound(hf, table, ansatz, grid);
    const EvolutionResult res = evolve(hf, &table, &ansatz, 0.01, {});
    const double lhs = std::acos(
        std::min(1.0, std::sqrt(std::max(0.0, res.final_fidelity))));
    CHECK(lhs <= bound + 1e-8);
  }
}

TEST_CASE("partial actions reconstruct the weighted action") {
  Rng rng(47);
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 2, 51);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const double lambda = 0.25;
  const SparseOperator h = hf.eval(lambda);
  const SparseOperator dh = hf.eval_derivative(lambda);
  const DenseSystem ds = DenseSystem::build(h);
  const Matrix phi = exact_agp(ds, to_dense(dh));
  const Ansatz ansatz = model::one_body_ansatz(4);
  std::vector<Matrix> a_dense;
  for (const SparseOperator& a : ansatz.operators) {
    a_dense.push_back(to_dense(a));
  }

  for (int degree : {2, 3}) {
    const protocol::EnergyShiftResult shift =
        protocol::energy_shift(protocol::moments(h, degree, lambda));
    std::vector<double> alpha(4);
    for (double& v : alpha) v = 2.0 * rng.uniform01() - 1.0;
    Matrix v = Matrix::Zero(16, 16);
    for (int mu = 0; mu < 4; ++mu) v += alpha[mu] * a_dense[mu];

    const PartialActions pa =
        partial_actions(ds, degree, shift.energy, a_dense, v, phi);

    // 2 sum_n w_n T^(K,n) equals the alpha-dependent eigenbasis expansion.
    double reconstructed = 0.0;
    for (int n = 0; n < 16; ++n) {
      reconstructed += 2.0 *
                       protocol::gs_weight_state(ds.eigenvalues(n),
                                                 shift.energy, degree) *
                       pa.values[n];
    }
    const double direct = action_eigenbasis(
        ds, protocol::gs_polynomial_coefficients(degree, shift.energy), v,
        phi);
    CHECK(std::abs(reconstructed - direct) <=
          1e-8 * std::max(1.0, std::abs(direct)));

    // The ideal action vanishes at the exact gauge potential and is
    // minimized by alpha_ideal within the ansatz span.
    const PartialActions at_phi =
        partial_actions(ds, degree, shift.energy, a_dense, phi, phi);
    CHECK(at_phi.ideal_action < 1e-12);

    auto ideal_of = [&](const std::vector<double>& coeffs) {
      Matrix vv = Matrix::Zero(16, 16);
      for (int mu = 0; mu < 4; ++mu) vv += coeffs[mu] * a_dense[mu];
      const Matrix w = ds.to_eigenbasis(vv - phi);
      double s = 0.0;
      for (int n = 1; n < 16; ++n) s += 2.0 * std::norm(w(0, n));
      return s;
    };
    const double at_min = ideal_of(pa.alpha_ideal);
    std::vector<double> nudged = pa.alpha_ideal;
    nudged[0] += 0.05;
    CHECK(at_min <= ideal_of(nudged) + 1e-12);
  }
}

TEST_CASE("action_eigenbasis ignores constant shifts for degree one") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 2, 1, 8);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const DenseSystem ds = DenseSystem::build(hf.eval(0.4));
  const Matrix phi = exact_agp(ds, to_dense(hf.eval_derivative(0.4)));
  const Matrix v = 0.3 * to_dense(SparseOperator::pauli_y(1, 2));
  const double plain = action_eigenbasis(ds, {0.0, 1.0}, v, phi);
  const double shifted = action_eigenbasis(ds, {-2.7, 1.0}, v, phi);
  CHECK(plain == doctest::Approx(shifted).epsilon(1e-12));
  CHECK(action_eigenbasis(ds, {0.0, 1.0}, phi, phi) < 1e-20);
}

TEST_CASE("response functions: locality at K = 1, nonlocality at K = 2") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 3, 2, 64);
  const double delta = 0.02;

  const std::vector<double> r1 = response_function(
      inst, model::AnsatzKind::OneBody, 1, 0.25, 1, delta);
  REQUIRE(r1.size() == 6);
  CHECK(std::abs(r1[0]) > 1e-4);
  for (std::size_t mu = 1; mu < r1.size(); ++mu) {
    CHECK(std::abs(r1[mu]) < 1e-10);
  }

  const std::vector<double> r2 = response_function(
      inst, model::AnsatzKind::OneBody, 2, 0.25, 1, delta);
  for (double r : r2) CHECK(std::abs(r) > 1e-12);

  // Halving the step moves the response by less than 5%.
  const std::vector<double> r2_half = response_function(
      inst, model::AnsatzKind::OneBody, 2, 0.25, 1, delta / 2.0);
  for (std::size_t mu = 0; mu < r2.size(); ++mu) {
    CHECK(std::abs(r2[mu] - r2_half[mu]) <= 0.05 * std::abs(r2[mu]));
  }
}

TEST_CASE("evolution CSV and summary formats") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 1, 5);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  EvolveConfig cfg;
  cfg.fidelity_trace = true;
  cfg.store_points = 5;
  const EvolutionResult res = evolve(hf, NoDriving{}, nullptr, 0.01, cfg);
  const std::string csv = res.to_csv();
  CHECK(csv.rfind("t,lambda,fidelity\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') ==
        static_cast<long>(res.times.size()) + 1);
  const std::string summary = res.summary_json(1.0);
  CHECK(summary.find("final_fidelity") != std::string::npos);
  CHECK(summary.find("\"driving\": \"none\"") != std::string::npos);
}
