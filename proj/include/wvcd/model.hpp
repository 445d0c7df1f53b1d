#pragma once

// Parameterized Hamiltonians in factorized form, driving ansaetze, and
// random transverse-field Ising instances on open rectangular lattices.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wvcd/pauli_alg.hpp"

namespace wvcd::model {

using pauli::SparseOperator;

enum class CouplingClass { Ferromagnetic, Antiferromagnetic, SpinGlass };

// "ferro" / "antiferro" / "spin-glass"; parse throws FormatError on others.
std::string coupling_class_name(CouplingClass c);
CouplingClass parse_coupling_class(const std::string& name);

struct Edge {
  int a;  // 1-based site indices, a < b
  int b;
};

// H(lambda) = sum_gamma f_gamma(lambda) F_gamma with lambda-independent
// Hermitian operators and real coefficient functions on [0, 1].
struct FactorizedHamiltonian {
  int nspins = 0;
  std::vector<SparseOperator> factors;
  std::vector<std::function<double(double)>> coefficients;
  std::vector<std::function<double(double)>> derivatives;

  std::size_t num_factors() const { return factors.size(); }
  SparseOperator eval(double lambda) const;
  SparseOperator eval_derivative(double lambda) const;
};

// A random Ising instance: fields h_i >= 0 drawn from Gamma(4, 0.25) (mean
// 1.0, std 0.5); couplings from the same gamma for ferromagnetic and
// antiferromagnetic classes, from Normal(0, 1) for spin glasses. The
// coupling term enters with a minus sign for the ferromagnetic class and a
// plus sign otherwise.
struct IsingInstance {
  int width = 0;
  int height = 0;
  CouplingClass coupling_class = CouplingClass::Ferromagnetic;
  std::uint64_t seed = 0;
  std::vector<double> fields;     // length N, site order
  std::vector<double> couplings;  // canonical edge order

  int nspins() const { return width * height; }
  double coupling_sign() const {
    return coupling_class == CouplingClass::Ferromagnetic ? -1.0 : 1.0;
  }

  // Canonical edge order: sweep sites row-major; at each site emit the
  // horizontal edge (i, i+1) first, then the vertical edge (i, i+width).
  std::vector<Edge> edges() const;

  std::string to_json() const;
  static IsingInstance from_json(const std::string& text);
  // FNV-1a of the canonical JSON; identifies the instance in caches and
  // output metadata.
  std::string content_hash() const;
};

// Draws fields site by site (1..N), then couplings in canonical edge order.
IsingInstance sample_ising(CouplingClass cls, int width, int height,
                           std::uint64_t seed);

// Gamma = 2: f1 = 1-lambda on the transverse field, f2 = lambda on the
// classical part (fields plus signed couplings).
FactorizedHamiltonian ising_hamiltonian(const IsingInstance& inst);

enum class AnsatzKind { OneBody, TwoBody };
std::string ansatz_kind_name(AnsatzKind k);
AnsatzKind parse_ansatz_kind(const std::string& name);

// Ordered list of Hermitian driving operators A_1..A_M.
struct Ansatz {
  std::vector<SparseOperator> operators;
  std::vector<std::string> labels;
  std::string id;  // "one-body" / "two-body" / custom tag

  std::size_t size() const { return operators.size(); }
};

// A_i = Y_i for i = 1..N.
Ansatz one_body_ansatz(int nspins);

// Y_1..Y_N followed by (Y_i Z_j + Z_i Y_j) per edge in canonical order.
Ansatz two_body_ansatz(const IsingInstance& inst);

Ansatz make_ansatz(AnsatzKind kind, const IsingInstance& inst);

}  // namespace wvcd::model
