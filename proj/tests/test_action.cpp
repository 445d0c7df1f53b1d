#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>

#include "wvcd/gs_protocol.hpp"
#include "wvcd/model.hpp"
#include "wvcd/oracle.hpp"
#include "wvcd/rng.hpp"
#include "wvcd/weighted_action.hpp"

using namespace wvcd;
using namespace wvcd::action;
using model::Ansatz;
using model::FactorizedHamiltonian;
using model::IsingInstance;
using oracle::Matrix;
using oracle::to_dense;
using pauli::Axis;
using pauli::PauliTerm;
using pauli::SparseOperator;

namespace {

// Reference assembly of (Q, r) straight from the definitions with dense
// matrices: Q_mu_nu = -tr{[P, A_mu][P, A_nu]}, r_mu = i tr{dP [P, A_mu]},
// both divided by 2^N to match the library normalization.
void dense_form(const Matrix& p, const Matrix& dp,
                const std::vector<Matrix>& ansatz, double inv_dim,
                linalg::SymMatrix& q_out, std::vector<double>& r_out) {
  const std::size_t m = ansatz.size();
  std::vector<Matrix> comms(m);
  for (std::size_t mu = 0; mu < m; ++mu) {
    comms[mu] = p * ansatz[mu] - ansatz[mu] * p;
  }
  q_out = linalg::SymMatrix(static_cast<int>(m));
  r_out.assign(m, 0.0);
  for (std::size_t mu = 0; mu < m; ++mu) {
    r_out[mu] = (std::complex<double>(0, 1) * (dp * comms[mu]).trace()).real() *
                inv_dim;
    for (std::size_t nu = 0; nu < m; ++nu) {
      q_out.at(static_cast<int>(mu), static_cast<int>(nu)) =
          -((comms[mu] * comms[nu]).trace()).real() * inv_dim;
    }
  }
}

std::vector<Matrix> dense_ansatz(const Ansatz& a) {
  std::vector<Matrix> out;
  for (const SparseOperator& op : a.operators) out.push_back(to_dense(op));
  return out;
}

double max_abs(const linalg::SymMatrix& q) {
  double m = 0.0;
  for (double v : q.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace

TEST_CASE("hamiltonian powers and Leibniz derivatives") {
  // Base case K = 1 returns the inputs unchanged.
  const SparseOperator z1 = SparseOperator::pauli_z(1, 1);
  const SparseOperator x1 = SparseOperator::pauli_x(1, 1);
  const HamiltonianPowers base = hamiltonian_powers(z1, x1, 1);
  CHECK(pauli::is_close(base.powers[0], z1, 0.0));
  CHECK(pauli::is_close(base.dpowers[0], x1, 0.0));

  // H = Z1, dH = X1: H^2 = I and d[H^2] = Z X + X Z = 0.
  const HamiltonianPowers hp = hamiltonian_powers(z1, x1, 2);
  CHECK(hp.powers[1].num_terms() == 1);
  CHECK(hp.powers[1].coefficient(PauliTerm()) == pauli::Complex(1.0));
  CHECK(hp.dpowers[1].num_terms() == 0);

  // Leibniz derivative vs a central difference of H(lambda)^k at N = 4.
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 2, 2, 3);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const double lambda = 0.35, eps = 1e-5;
  const HamiltonianPowers at = hamiltonian_powers(
      hf.eval(lambda), hf.eval_derivative(lambda), 3);
  const HamiltonianPowers hi = hamiltonian_powers(
      hf.eval(lambda + eps), hf.eval_derivative(lambda + eps), 3);
  const HamiltonianPowers lo = hamiltonian_powers(
      hf.eval(lambda - eps), hf.eval_derivative(lambda - eps), 3);
  for (int k = 1; k <= 3; ++k) {
    const Matrix fd =
        (to_dense(hi.powers[k - 1]) - to_dense(lo.powers[k - 1])) / (2 * eps);
    CHECK((to_dense(at.dpowers[k - 1]) - fd).cwiseAbs().maxCoeff() < 1e-6);
  }

  CHECK_THROWS_AS(hamiltonian_powers(z1, x1, 0), DimensionError);
}

TEST_CASE("conventional-action coefficients match a dense grid search") {
  // Two-spin Ising with one-body driving: minimize the conventional action
  // over a refined alpha grid and compare with the linear-solve result.
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 1, 11);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(2);
  const double lambda = 0.4;

  const QuadraticForm qf = build_quadratic_form(
      hf.eval(lambda), hf.eval_derivative(lambda),
      ActionPolynomial::conventional(), ansatz, lambda);
  std::vector<double> alpha;
  protocol::solve_linear(qf, alpha, {});

  const Matrix h = to_dense(hf.eval(lambda));
  const Matrix dh = to_dense(hf.eval_derivative(lambda));
  const std::vector<Matrix> a = dense_ansatz(ansatz);
  auto action_value = [&](double a1, double a2) {
    const Matrix v = a1 * a[0] + a2 * a[1];
    const Matrix g =
        dh - std::complex<double>(0, 1) * (h * v - v * h);
    return (g.adjoint() * g).trace().real();
  };

  // Coarse-to-fine grid search.
  double best1 = 0.0, best2 = 0.0, radius = 2.0;
  for (int level = 0; level < 12; ++level) {
    double best = std::numeric_limits<double>::infinity();
    double next1 = best1, next2 = best2;
    for (int i = -8; i <= 8; ++i) {
      for (int j = -8; j <= 8; ++j) {
        const double c1 = best1 + radius * i / 8.0;
        const double c2 = best2 + radius * j / 8.0;
        const double s = action_value(c1, c2);
        if (s < best) {
          best = s;
          next1 = c1;
          next2 = c2;
        }
      }
    }
    best1 = next1;
    best2 = next2;
    radius /= 8.0;
  }
  CHECK(std::abs(alpha[0] - best1) < 1e-6);
  CHECK(std::abs(alpha[1] - best2) < 1e-6);
}

TEST_CASE("ansatz operator commuting with the fictitious Hamiltonian") {
  // Taking A_mu = H with P(x) = x zeroes that row and column of Q and the
  // corresponding r entry.
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 3, 1, 2);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const double lambda = 0.6;
  Ansatz ansatz = model::one_body_ansatz(3);
  ansatz.operators.push_back(hf.eval(lambda));
  ansatz.labels.push_back("H");

  const QuadraticForm qf = build_quadratic_form(
      hf.eval(lambda), hf.eval_derivative(lambda),
      ActionPolynomial::conventional(), ansatz, lambda);
  const int last = qf.Q.order() - 1;
  CHECK(std::abs(qf.r[last]) < 1e-12);
  for (int i = 0; i <= last; ++i) {
    CHECK(std::abs(qf.Q.at(last, i)) < 1e-12);
    CHECK(std::abs(qf.Q.at(i, last)) < 1e-12);
  }
}

TEST_CASE("quadratic form matches the dense definitions on random systems") {
  Rng rng(31);
  for (int trial = 0; trial < 4; ++trial) {
    const auto cls = trial % 2 == 0 ? model::CouplingClass::SpinGlass
                                    : model::CouplingClass::Antiferromagnetic;
    const IsingInstance inst = model::sample_ising(cls, 2, 2, 100 + trial);
    const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
    const Ansatz ansatz = trial % 2 == 0
                              ? model::one_body_ansatz(4)
                              : model::two_body_ansatz(inst);
    const double lambda = 0.2 + 0.6 * rng.uniform01();
    const int degree = 1 + trial % 3;
    std::vector<double> p(degree + 1, 0.0);
    for (int k = 0; k <= degree; ++k) p[k] = rng.uniform01() - 0.3;
    p[degree] = 1.0 + rng.uniform01();

    const QuadraticForm qf = build_quadratic_form(
        hf.eval(lambda), hf.eval_derivative(lambda),
        ActionPolynomial::fixed(p), ansatz, lambda);

    // Dense P(H) and its primed derivative.
    const Matrix h = to_dense(hf.eval(lambda));
    const Matrix dh = to_dense(hf.eval_derivative(lambda));
    const Eigen::Index dim = h.rows();
    Matrix p_dense = Matrix::Zero(dim, dim);
    Matrix dp_dense = Matrix::Zero(dim, dim);
    Matrix h_pow = Matrix::Identity(dim, dim);
    std::vector<Matrix> powers = {Matrix::Identity(dim, dim)};
    for (int k = 1; k <= degree; ++k) {
      powers.push_back(powers.back() * h);
    }
    for (int k = 0; k <= degree; ++k) p_dense += p[k] * powers[k];
    for (int k = 1; k <= degree; ++k) {
      Matrix d = Matrix::Zero(dim, dim);
      for (int l = 0; l <= k - 1; ++l) {
        d += powers[l] * dh * powers[k - 1 - l];
      }
      dp_dense += p[k] * d;
    }

    linalg::SymMatrix q_ref;
    std::vector<double> r_ref;
    dense_form(p_dense, dp_dense, dense_ansatz(ansatz),
               1.0 / static_cast<double>(dim), q_ref, r_ref);

    const double scale_q = std::max(1e-30, max_abs(q_ref));
    double scale_r = 1e-30;
    for (double v : r_ref) scale_r = std::max(scale_r, std::abs(v));
    for (int i = 0; i < qf.Q.order(); ++i) {
      CHECK(std::abs(qf.r[i] - r_ref[i]) < 1e-9 * scale_r);
      for (int j = 0; j < qf.Q.order(); ++j) {
        CHECK(std::abs(qf.Q.at(i, j) - q_ref.at(i, j)) < 1e-9 * scale_q);
      }
    }

    // Gram structure: Q is symmetric and positive semidefinite.
    CHECK(qf.Q.is_symmetric(1e-10));
    CHECK(linalg::min_eigenvalue(qf.Q) >= -1e-9 * scale_q);
  }
}

TEST_CASE("scaling the polynomial leaves the minimizer unchanged") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 2, 8);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(4);
  const double lambda = 0.55;
  const std::vector<double> p = {0.3, -1.2, 1.0};

  const QuadraticForm base = build_quadratic_form(
      hf.eval(lambda), hf.eval_derivative(lambda), ActionPolynomial::fixed(p),
      ansatz, lambda);
  std::vector<double> p_scaled = p;
  for (double& v : p_scaled) v *= 2.0;
  const QuadraticForm scaled = build_quadratic_form(
      hf.eval(lambda), hf.eval_derivative(lambda),
      ActionPolynomial::fixed(p_scaled), ansatz, lambda);

  for (int i = 0; i < base.Q.order(); ++i) {
    CHECK(scaled.r[i] == doctest::Approx(4.0 * base.r[i]).epsilon(1e-10));
    for (int j = 0; j < base.Q.order(); ++j) {
      CHECK(scaled.Q.at(i, j) ==
            doctest::Approx(4.0 * base.Q.at(i, j)).epsilon(1e-10));
    }
  }
  std::vector<double> alpha_base, alpha_scaled;
  protocol::solve_linear(base, alpha_base, {});
  protocol::solve_linear(scaled, alpha_scaled, {});
  for (std::size_t mu = 0; mu < alpha_base.size(); ++mu) {
    CHECK(std::abs(alpha_base[mu] - alpha_scaled[mu]) < 1e-9);
  }
}

TEST_CASE("action differences agree with the eigenbasis expansion") {
  // S(a1) - S(a2) computed from (Q, r) equals the eigenbasis expansion of
  // the weighted action evaluated with the exact AGP (the V-independent
  // constant cancels in the difference). Traces here are unnormalized, so
  // the (Q, r) side is rescaled by 2^N.
  Rng rng(41);
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 2, 2, 77);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(4);
  const double lambda = 0.45;
  const std::vector<double> p = {0.1, 0.7, 1.3};

  const QuadraticForm qf = build_quadratic_form(
      hf.eval(lambda), hf.eval_derivative(lambda), ActionPolynomial::fixed(p),
      ansatz, lambda);

  const oracle::DenseSystem ds = oracle::DenseSystem::build(hf.eval(lambda));
  const Matrix phi = oracle::exact_agp(ds, to_dense(hf.eval_derivative(lambda)));
  const std::vector<Matrix> a = dense_ansatz(ansatz);
  const double dim = static_cast<double>(1 << 4);

  auto quadratic_side = [&](const std::vector<double>& alpha) {
    double s = 0.0;
    for (int i = 0; i < qf.Q.order(); ++i) {
      s += -2.0 * qf.r[i] * alpha[i];
      for (int j = 0; j < qf.Q.order(); ++j) {
        s += qf.Q.at(i, j) * alpha[i] * alpha[j];
      }
    }
    return dim * s;
  };
  auto eigen_side = [&](const std::vector<double>& alpha) {
    Matrix v = Matrix::Zero(phi.rows(), phi.cols());
    for (std::size_t mu = 0; mu < a.size(); ++mu) v += alpha[mu] * a[mu];
    return oracle::action_eigenbasis(ds, p, v, phi);
  };

  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> a1(4), a2(4);
    for (int i = 0; i < 4; ++i) {
      a1[i] = 2.0 * rng.uniform01() - 1.0;
      a2[i] = 2.0 * rng.uniform01() - 1.0;
    }
    const double lhs = quadratic_side(a1) - quadratic_side(a2);
    const double rhs = eigen_side(a1) - eigen_side(a2);
    CHECK(std::abs(lhs - rhs) < 1e-8 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("factorized monomials for degree 2 with two factors") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 2, 21);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(4);
  const FactorizedTraces ft = precompute_factorized(hf, 2, ansatz);

  REQUIRE(ft.num_monomials() == 6);
  std::vector<int> degree_counts(3, 0);
  for (const Monomial& m : ft.monomials) ++degree_counts[m.degree];
  CHECK(degree_counts[0] == 1);
  CHECK(degree_counts[1] == 2);
  CHECK(degree_counts[2] == 3);

  // The mixed monomial carries F1 F2 + F2 F1.
  for (std::size_t g = 0; g < ft.num_monomials(); ++g) {
    if (ft.monomials[g].exponents == std::vector<int>{1, 1}) {
      const SparseOperator expected =
          hf.factors[0] * hf.factors[1] + hf.factors[1] * hf.factors[0];
      CHECK(pauli::is_close(ft.operators[g], expected, 1e-12));
    }
    if (ft.monomials[g].degree == 0) {
      CHECK(ft.operators[g].num_terms() == 1);
      CHECK(ft.operators[g].coefficient(PauliTerm()) == pauli::Complex(1.0));
    }
  }

  // Graded sum reproduces H(lambda)^k at a spot-checked lambda.
  const double lambda = 0.37;
  for (int k = 1; k <= 2; ++k) {
    SparseOperator sum(hf.nspins);
    for (std::size_t g = 0; g < ft.num_monomials(); ++g) {
      if (ft.monomials[g].degree != k) continue;
      sum += ft.monomial_value(g, lambda) * ft.operators[g];
    }
    SparseOperator direct = hf.eval(lambda);
    for (int j = 1; j < k; ++j) direct = direct * hf.eval(lambda);
    CHECK(pauli::is_close(sum, direct, 1e-10));
  }
}

TEST_CASE("assembled forms match the single-lambda route") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::SpinGlass, 3, 1, 55);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::two_body_ansatz(inst);
  const int degree = 3;
  const FactorizedTraces ft = precompute_factorized(hf, degree, ansatz);

  Rng rng(61);
  for (int trial = 0; trial < 5; ++trial) {
    const double lambda = rng.uniform01();
    std::vector<double> p(degree + 1);
    for (double& v : p) v = 2.0 * rng.uniform01() - 1.0;
    p[degree] = 1.0;
    const ActionPolynomial poly = ActionPolynomial::fixed(p);

    const QuadraticForm fast = assemble_at_lambda(ft, poly, lambda);
    const QuadraticForm slow = build_quadratic_form(
        hf.eval(lambda), hf.eval_derivative(lambda), poly, ansatz, lambda);

    const double scale_q = std::max(1e-30, max_abs(slow.Q));
    double scale_r = 1e-30;
    for (double v : slow.r) scale_r = std::max(scale_r, std::abs(v));
    for (int i = 0; i < fast.Q.order(); ++i) {
      CHECK(std::abs(fast.r[i] - slow.r[i]) < 1e-9 * scale_r);
      for (int j = 0; j < fast.Q.order(); ++j) {
        CHECK(std::abs(fast.Q.at(i, j) - slow.Q.at(i, j)) < 1e-9 * scale_q);
      }
    }
  }
}

TEST_CASE("constant polynomial assembles to zero") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 1, 4);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(2);
  const FactorizedTraces ft = precompute_factorized(hf, 2, ansatz);
  const QuadraticForm qf =
      assemble_at_lambda(ft, ActionPolynomial::fixed({1.7}), 0.5);
  for (int i = 0; i < qf.Q.order(); ++i) {
    CHECK(qf.r[i] == 0.0);
    for (int j = 0; j < qf.Q.order(); ++j) CHECK(qf.Q.at(i, j) == 0.0);
  }
}

TEST_CASE("doubling the polynomial quadruples the form") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 2, 2, 13);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(4);
  const FactorizedTraces ft = precompute_factorized(hf, 2, ansatz);
  const std::vector<double> p = {0.4, -0.9, 1.1};
  const QuadraticForm base =
      assemble_at_lambda(ft, ActionPolynomial::fixed(p), 0.3);
  std::vector<double> doubled = p;
  for (double& v : doubled) v *= 2.0;
  const QuadraticForm four =
      assemble_at_lambda(ft, ActionPolynomial::fixed(doubled), 0.3);
  for (int i = 0; i < base.Q.order(); ++i) {
    CHECK(four.r[i] == doctest::Approx(4.0 * base.r[i]).epsilon(1e-12));
    for (int j = 0; j < base.Q.order(); ++j) {
      CHECK(four.Q.at(i, j) ==
            doctest::Approx(4.0 * base.Q.at(i, j)).epsilon(1e-12));
    }
  }
}

TEST_CASE("factorized moments match dense traces") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Antiferromagnetic, 2, 2, 19);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(4);
  const FactorizedTraces ft = precompute_factorized(hf, 3, ansatz);
  const double lambda = 0.62;
  const std::vector<double> omega = ft.moments(lambda);
  REQUIRE(omega.size() == 6);
  const Matrix h = to_dense(hf.eval(lambda));
  Matrix pow = Matrix::Identity(h.rows(), h.cols());
  for (int k = 0; k <= 5; ++k) {
    const double ref = pow.trace().real() / static_cast<double>(h.rows());
    CHECK(std::abs(omega[k] - ref) < 1e-10 * std::max(1.0, std::abs(ref)));
    pow = pow * h;
  }
}

TEST_CASE("trace cache round-trips and rejects stale keys") {
  const IsingInstance inst =
      model::sample_ising(model::CouplingClass::Ferromagnetic, 3, 1, 99);
  const FactorizedHamiltonian hf = model::ising_hamiltonian(inst);
  const Ansatz ansatz = model::one_body_ansatz(3);
  const FactorizedTraces ft = precompute_factorized(hf, 2, ansatz);
  const std::string path = "test_traces_cache.json";
  save_traces(ft, "abc123", path);

  const auto loaded = load_traces(path, "abc123", 2, "one-body", hf);
  REQUIRE(loaded.has_value());
  const ActionPolynomial poly = ActionPolynomial::fixed({0.2, -1.0, 1.0});
  const QuadraticForm a = assemble_at_lambda(ft, poly, 0.71);
  const QuadraticForm b = assemble_at_lambda(*loaded, poly, 0.71);
  for (int i = 0; i < a.Q.order(); ++i) {
    CHECK(a.r[i] == b.r[i]);
    for (int j = 0; j < a.Q.order(); ++j) {
      CHECK(a.Q.at(i, j) == b.Q.at(i, j));
    }
  }
  CHECK(std::vector<double>(loaded->moments(0.3)) ==
        std::vector<double>(ft.moments(0.3)));

  CHECK(!load_traces(path, "wrong", 2, "one-body", hf).has_value());
  CHECK(!load_traces(path, "abc123", 3, "one-body", hf).has_value());
  CHECK(!load_traces(path, "abc123", 2, "two-body", hf).has_value());
  std::filesystem::remove(path);
}
