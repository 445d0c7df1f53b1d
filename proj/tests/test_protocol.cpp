#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "wvcd/gs_protocol.hpp"
#include "wvcd/model.hpp"
#include "wvcd/oracle.hpp"
#include "wvcd/rng.hpp"

using namespace wvcd;
using namespace wvcd::protocol;
using model::Ansatz;
using model::FactorizedHamiltonian;
using model::IsingInstance;
using oracle::Matrix;
using oracle::to_dense;
using pauli::Axis;
using pauli::PauliTerm;
using pauli::SparseOperator;

namespace {

// Weighted spectral average over the weight (eps - E)^(2K-2), evaluated
// directly from an eigenvalue list; the independent oracle for the
// energy-shift optimization.
double omega_of(const std::vector<double>& eigenvalues, double energy,
                int degree) {
  double num = 0.0, den = 0.0;
  for (double eps : eigenvalues) {
    const double w = std::pow(eps - energy, 2 * degree - 2);
    num += w * eps;
    den += w;
  }
  return num / den;
}

double grid_minimizer(const std::vector<double>& eigenvalues, int degree,
                      double lo, double hi, double step) {
  double best_e = lo, best = std::numeric_limits<double>::infinity();
  for (double e = lo; e <= hi; e += step) {
    const double v = omega_of(eigenvalues, e, degree);
    if (v < best) {
      best = v;
      best_e = e;
    }
  }
  return best_e;
}

EnergyShiftProblem problem_from_eigenvalues(
    const std::vector<double>& eigenvalues, int degree) {
  EnergyShiftProblem prob;
  prob.degree = degree;
  prob.omega.assign(2 * degree, 0.0);
  for (int k = 0; k < 2 * degree; ++k) {
    double sum = 0.0;
    for (double eps : eigenvalues) sum += std::pow(eps, k);
    prob.omega[k] = sum / eigenvalues.size();
  }
  return prob;
}

std::vector<double> dense_eigenvalues(const SparseOperator& h) {
  const oracle::DenseSystem ds = oracle::DenseSystem::build(h);
  return {ds.eigenvalues.data(), ds.eigenvalues.data() + ds.eigenvalues.size()};
}

// All 15 non-identity Pauli strings on two spins.
Ansatz complete_two_spin_ansatz() {
  Ansatz a;
  a.id = "complete-n2";
  const Axis axes[3] = {Axis::X, Axis::Y, Axis::Z};
  for (int first = 0; first < 4; ++first) {
    for (int second = 0; second < 4; ++second) {
      if (first == 0 && second == 0) continue;
      SparseOperator op(2);
      std::vector<pauli::PackedFactor> packed;
      if (first > 0) packed.push_back(pauli::pack_factor(axes[first - 1], 1));
      if (second > 0) packed.push_back(pauli::pack_factor(axes[second - 1], 2));
      op.add_term(PauliTerm(packed.data(),
                            static_cast<std::uint32_t>(packed.size())),
                  1.0);
      a.operators.push_back(std::move(op));
      a.labels.push_back("P" + std::to_string(first) + std::to_string(second));
    }
  }
  return a;
}

}  // namespace

TEST_CASE("moments from powers") {
  // Any Ising Hamiltonian is traceless.
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 2, 6);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const SparseOperator h = hf.eval(0.41);
  const EnergyShiftProblem prob = moments(h, 3, 0.41);
  CHECK(prob.omega[0] == 1.0);
  CHECK(std::abs(prob.omega[1]) < 1e-14);

  // N = 1, H = Z: even moments 1, odd moments 0.
  const SparseOperator z = SparseOperator::pauli_z(1, 1);
  const EnergyShiftProblem zprob = moments(z, 3, 0.0);
  for (int k = 0; k < 6; ++k) {
    CHECK(zprob.omega[k] == doctest::Approx(k % 2 == 0 ? 1.0 : 0.0));
  }

  // Random N = 4 system vs dense traces up to k = 5.
  const Matrix hd = to_dense(h);
  Matrix pow = Matrix::Identity(hd.rows(), hd.cols());
  for (int k = 0; k <= 5; ++k) {
    const double ref = pow.trace().real() / hd.rows();
    CHECK(std::abs(prob.omega[k] - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
    pow = pow * hd;
  }
}

TEST_CASE("energy shift for a two-level spectrum (K = 2)") {
  // Eigenvalues {+1, -1}: the grid scan of the weighted average lands on
  // E = 1, the larger root of the quadratic critical equation.
  const std::vector<double> eigenvalues = {-1.0, 1.0};
  const double grid_e = grid_minimizer(eigenvalues, 2, -10.0, 10.0, 1e-4);
  const EnergyShiftResult res =
      energy_shift(problem_from_eigenvalues(eigenvalues, 2));
  CHECK(std::abs(res.energy - grid_e) <= 1e-4);
  CHECK(res.energy == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("symmetric spectra give the positive root") {
  // Spectrum {-e, +e} with equal multiplicities: critical points are
  // symmetric about zero; the minimizer is the larger one.
  for (double e : {0.5, 1.5, 3.0}) {
    const std::vector<double> eigenvalues = {-e, -e, e, e};
    const EnergyShiftResult res =
        energy_shift(problem_from_eigenvalues(eigenvalues, 2));
    CHECK(res.energy > 0.0);
    CHECK(res.energy == doctest::Approx(e).epsilon(1e-10));
  }
}

TEST_CASE("energy shift sits above the spectrum midpoint on Ising instances") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    const IsingInstance inst =
        model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 2, seed);
    const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
    const SparseOperator h = hf.eval(0.25);
    const std::vector<double> eigenvalues = dense_eigenvalues(h);
    for (int degree : {2, 3, 4, 5}) {
      const EnergyShiftResult res =
          energy_shift(moments(h, degree, 0.25));
      CHECK(res.energy >
            0.5 * (eigenvalues.front() + eigenvalues.back()));
      // Exactly one interior maximum and minimum in the scanned window.
      CHECK(res.interior_minima == 1);
      CHECK(res.interior_maxima == 1);
    }
  }
}

TEST_CASE("Newton minimizer agrees with the direct grid scan for K >= 3") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 3, 1, 17);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const SparseOperator h = hf.eval(0.6);
  const std::vector<double> eigenvalues = dense_eigenvalues(h);
  for (int degree : {3, 4, 5}) {
    const EnergyShiftResult res = energy_shift(moments(h, degree, 0.6));
    const double grid_e = grid_minimizer(eigenvalues, degree, -10.0, 10.0, 1e-4);
    CHECK(std::abs(res.energy - grid_e) <= 2e-4);
    CHECK(omega_of(eigenvalues, res.energy, degree) <=
          omega_of(eigenvalues, grid_e, degree) + 1e-12);
  }
}

TEST_CASE("ground-state polynomial coefficients") {
  CHECK(gs_polynomial_coefficients(2, 1.0) ==
        std::vector<double>{1.0, -2.0, 1.0});
  CHECK(gs_polynomial_coefficients(1, 2.5) == std::vector<double>{-2.5, 1.0});
  CHECK(gs_polynomial_coefficients(3, 0.0) ==
        std::vector<double>{0.0, 0.0, 0.0, 1.0});
  CHECK_THROWS_AS(gs_polynomial_coefficients(0, 1.0), DimensionError);
}

TEST_CASE("pair weights: closed form, defining ratio, and bounds") {
  Rng rng(71);
  for (int trial = 0; trial < 500; ++trial) {
    const int degree = 1 + static_cast<int>(rng.uniform01() * 5);
    const double energy = 4.0 * rng.uniform01() - 2.0;
    const double em = 6.0 * rng.uniform01() - 3.0;
    double en = 6.0 * rng.uniform01() - 3.0;
    if (std::abs(em - en) < 1e-6) en += 0.5;

    const double closed = gs_weight_pair(em, en, energy, degree);
    const double ratio = gs_weight_pair_ratio(em, en, energy, degree);
    const double wm = gs_weight_state(em, energy, degree);
    const double wn = gs_weight_state(en, energy, degree);
    const double scale = std::max({1.0, std::abs(closed), std::abs(ratio)});
    CHECK(std::abs(closed - ratio) <= 1e-10 * scale);
    CHECK(closed >= -1e-12 * scale);
    CHECK(closed <= std::max(wm, wn) * (1.0 + 1e-10) + 1e-12);
    if ((em - energy) * (en - energy) > 0.0) {
      CHECK(closed >= std::min(wm, wn) * (1.0 - 1e-10) - 1e-12);
    }
  }
}

TEST_CASE("K = 1 pipeline matches an independently assembled conventional solve") {
  // The reference builds Q and r from dense commutators and traces, then
  // solves the same linear system; nothing of the sparse pipeline is used.
  Rng rng(83);
  for (int trial = 0; trial < 5; ++trial) {
    const auto cls = static_cast<model::CouplingClass>(trial % 3);
    const IsingInstance inst = model::sample_ising(cls, 3, 2, 300 + trial);
    const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
    const Ansatz ansatz = model::one_body_ansatz(inst.nspins());
    const double lambda = 0.1 + 0.8 * rng.uniform01();

    const SingleSolveResult got =
        solve_single(hf.eval(lambda), hf.eval_derivative(lambda), ansatz, 1,
                     lambda);
    CHECK(std::isnan(got.energy_shift));

    const Matrix h = to_dense(hf.eval(lambda));
    const Matrix dh = to_dense(hf.eval_derivative(lambda));
    const std::size_t m = ansatz.size();
    linalg::SymMatrix q(static_cast<int>(m));
    std::vector<double> r(m);
    std::vector<Matrix> comms(m);
    for (std::size_t mu = 0; mu < m; ++mu) {
      const Matrix a = to_dense(ansatz.operators[mu]);
      comms[mu] = h * a - a * h;
      r[mu] = (std::complex<double>(0, 1) * (dh * comms[mu]).trace()).real();
    }
    for (std::size_t mu = 0; mu < m; ++mu) {
      for (std::size_t nu = 0; nu < m; ++nu) {
        q.at(static_cast<int>(mu), static_cast<int>(nu)) =
            -((comms[mu] * comms[nu]).trace()).real();
      }
    }
    const std::vector<double> ref = linalg::solve_qr(q, r);
    for (std::size_t mu = 0; mu < m; ++mu) {
      CHECK(std::abs(got.alpha[mu] - ref[mu]) <=
            1e-9 * std::max(1.0, std::abs(ref[mu])));
    }
  }
}

TEST_CASE("complete two-spin ansatz recovers the exact gauge potential") {
  // With an ansatz spanning every non-identity string, the minimizer
  // reproduces the off-diagonal part of the exact AGP for any odd degree
  // (odd powers keep the fictitious spectrum non-degenerate).
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 2, 1, 23);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = complete_two_spin_ansatz();

  for (double lambda : {0.2, 0.65}) {
    const SparseOperator h = hf.eval(lambda);
    const SparseOperator dh = hf.eval_derivative(lambda);
    const oracle::DenseSystem ds = oracle::DenseSystem::build(h);
    const Matrix phi = oracle::exact_agp(ds, to_dense(dh));
    const Matrix phi_eig = ds.to_eigenbasis(phi);

    for (int degree : {1, 3, 5}) {
      const SingleSolveResult res =
          solve_single(h, dh, ansatz, degree, lambda);
      Matrix v = Matrix::Zero(4, 4);
      for (std::size_t mu = 0; mu < ansatz.size(); ++mu) {
        v += res.alpha[mu] * to_dense(ansatz.operators[mu]);
      }
      const Matrix v_eig = ds.to_eigenbasis(v);
      for (int n = 0; n < 4; ++n) {
        for (int m = 0; m < 4; ++m) {
          if (n == m) continue;
          CHECK(std::abs(v_eig(n, m) - phi_eig(n, m)) < 1e-8);
        }
      }
    }
  }
}

TEST_CASE("transverse-field endpoint against a dense action grid") {
  // lambda = 0 on two spins with one-body driving and K = 2: scan the dense
  // weighted action over the two coefficients and compare its minimum with
  // the pipeline value.
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 1, 9);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(2);
  const double lambda = 0.0;
  const SparseOperator h = hf.eval(lambda);
  const SparseOperator dh = hf.eval_derivative(lambda);

  const SingleSolveResult res = solve_single(h, dh, ansatz, 2, lambda);
  const double energy = res.energy_shift;
  CHECK(std::isfinite(energy));

  const Matrix hd = to_dense(h);
  const Matrix dhd = to_dense(dh);
  const Matrix shifted = hd - energy * Matrix::Identity(4, 4);
  const Matrix p = shifted * shifted;
  const Matrix dp = shifted * dhd + dhd * shifted;
  const std::vector<Matrix> a = {to_dense(ansatz.operators[0]),
                                 to_dense(ansatz.operators[1])};
  auto action_value = [&](double a1, double a2) {
    const Matrix v = a1 * a[0] + a2 * a[1];
    const Matrix g = dp - std::complex<double>(0, 1) * (p * v - v * p);
    return (g.adjoint() * g).trace().real();
  };
  double best1 = 0.0, best2 = 0.0, radius = 3.0;
  for (int level = 0; level < 10; ++level) {
    double best = std::numeric_limits<double>::infinity();
    double n1 = best1, n2 = best2;
    for (int i = -8; i <= 8; ++i) {
      for (int j = -8; j <= 8; ++j) {
        const double c1 = best1 + radius * i / 8.0;
        const double c2 = best2 + radius * j / 8.0;
        const double s = action_value(c1, c2);
        if (s < best) {
          best = s;
          n1 = c1;
          n2 = c2;
        }
      }
    }
    best1 = n1;
    best2 = n2;
    radius /= 8.0;
  }
  // The grid minimum must not undercut the pipeline solution, and the
  // minimizers must coincide to grid resolution.
  CHECK(action_value(res.alpha[0], res.alpha[1]) <=
        action_value(best1, best2) + 1e-9);
  CHECK(std::abs(res.alpha[0] - best1) < 1e-5);
  CHECK(std::abs(res.alpha[1] - best2) < 1e-5);
}

TEST_CASE("factorized sweep agrees with per-lambda solves") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 6, 1, 44);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(6);
  const int degree = 3;
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(0.03 + 0.094 * i);

  const ProtocolTable table = solve_protocol(hf, ansatz, degree, grid);
  CHECK(!table.has_gaps());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const SingleSolveResult single =
        solve_single(hf.eval(grid[i]), hf.eval_derivative(grid[i]), ansatz,
                     degree, grid[i]);
    for (std::size_t mu = 0; mu < ansatz.size(); ++mu) {
      CHECK(std::abs(table.alpha[i][mu] - single.alpha[mu]) <=
            1e-8 * std::max(1.0, std::abs(single.alpha[mu])));
    }
    CHECK(std::abs(table.energy_shift[i] - single.energy_shift) <=
          1e-8 * std::max(1.0, std::abs(single.energy_shift)));
  }
}

TEST_CASE("K = 1 sweep is smooth and residuals stay small") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 3, 3, 12);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(9);
  const ProtocolTable table =
      solve_protocol(hf, ansatz, 1, uniform_grid(100));
  CHECK(!table.has_gaps());
  double max_step = 0.0;
  for (std::size_t i = 0; i + 1 < table.lambdas.size(); ++i) {
    for (std::size_t mu = 0; mu < ansatz.size(); ++mu) {
      max_step = std::max(max_step, std::abs(table.alpha[i + 1][mu] -
                                             table.alpha[i][mu]));
    }
  }
  CHECK(max_step < 0.2);  // smooth profile: no jumps across the fine grid
  for (std::size_t i = 0; i < table.lambdas.size(); ++i) {
    CHECK(table.residual[i] <= 1e-8);
    for (double a : table.alpha[i]) CHECK(std::isfinite(a));
    CHECK(std::isnan(table.energy_shift[i]));  // K = 1 has no shift
  }
}

TEST_CASE("protocol CSV and metadata round-trip") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 2, 2, 91);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(4);
  ProtocolTable table = solve_protocol(hf, ansatz, 2, uniform_grid(7));
  table.instance_hash = inst.content_hash();

  const ProtocolTable back =
      ProtocolTable::from_csv(table.to_csv(), table.metadata_json());
  CHECK(back.degree == table.degree);
  CHECK(back.num_ansatz == table.num_ansatz);
  CHECK(back.lambdas == table.lambdas);
  CHECK(back.instance_hash == table.instance_hash);
  for (std::size_t i = 0; i < table.lambdas.size(); ++i) {
    CHECK(back.alpha[i] == table.alpha[i]);
    CHECK(back.energy_shift[i] == table.energy_shift[i]);
    CHECK(back.residual[i] == table.residual[i]);
  }

  // Interpolation midway between grid points.
  const double mid = 0.5 * (table.lambdas[2] + table.lambdas[3]);
  const std::vector<double> a_mid = back.alpha_at(mid);
  for (std::size_t mu = 0; mu < ansatz.size(); ++mu) {
    CHECK(a_mid[mu] ==
          doctest::Approx(0.5 * (table.alpha[2][mu] + table.alpha[3][mu])));
  }

  // K = 1 tables leave the shift column empty.
  ProtocolTable k1 = solve_protocol(hf, ansatz, 1, uniform_grid(3));
  const std::string csv = k1.to_csv();
  CHECK(csv.find("\n0,,") != std::string::npos);
  const ProtocolTable k1_back =
      ProtocolTable::from_csv(csv, k1.metadata_json());
  CHECK(std::isnan(k1_back.energy_shift[0]));
}

TEST_CASE("sweeps reuse cached traces verbatim") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 2, 37);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(4);
  const std::vector<double> grid = uniform_grid(5);

  action::FactorizedTraces computed;
  const ProtocolTable fresh =
      solve_protocol(hf, ansatz, 2, grid, {}, nullptr, &computed);
  const ProtocolTable warm =
      solve_protocol(hf, ansatz, 2, grid, {}, &computed);
  CHECK(warm.stage1_cached);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(warm.alpha[i] == fresh.alpha[i]);
  }

  CHECK_THROWS_AS(solve_protocol(hf, ansatz, 2, {0.5, 1.5}), DimensionError);
  CHECK_THROWS_AS(solve_protocol(hf, ansatz, 0, grid), DimensionError);
}
