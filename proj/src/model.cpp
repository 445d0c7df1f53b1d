#include "wvcd/model.hpp"

#include <nlohmann/json.hpp>

#include "wvcd/rng.hpp"

namespace wvcd::model {

using json = nlohmann::json;
using pauli::Axis;

namespace {
constexpr int kInstanceSchemaVersion = 1;
}

std::string coupling_class_name(CouplingClass c) {
  switch (c) {
    case CouplingClass::Ferromagnetic:
      return "ferro";
    case CouplingClass::Antiferromagnetic:
      return "antiferro";
    case CouplingClass::SpinGlass:
      return "spin-glass";
  }
  return "?";
}

CouplingClass parse_coupling_class(const std::string& name) {
  if (name == "ferro" || name == "ferromagnetic") {
    return CouplingClass::Ferromagnetic;
  }
  if (name == "antiferro" || name == "antiferromagnetic") {
    return CouplingClass::Antiferromagnetic;
  }
  if (name == "spin-glass" || name == "spinglass") {
    return CouplingClass::SpinGlass;
  }
  throw FormatError("unknown coupling class '" + name + "'");
}

std::string ansatz_kind_name(AnsatzKind k) {
  return k == AnsatzKind::OneBody ? "one-body" : "two-body";
}

AnsatzKind parse_ansatz_kind(const std::string& name) {
  if (name == "one-body") return AnsatzKind::OneBody;
  if (name == "two-body") return AnsatzKind::TwoBody;
  throw FormatError("unknown ansatz kind '" + name + "'");
}

SparseOperator FactorizedHamiltonian::eval(double lambda) const {
  SparseOperator h(nspins);
  for (std::size_t g = 0; g < factors.size(); ++g) {
    h += coefficients[g](lambda) * factors[g];
  }
  return h;
}

SparseOperator FactorizedHamiltonian::eval_derivative(double lambda) const {
  SparseOperator dh(nspins);
  for (std::size_t g = 0; g < factors.size(); ++g) {
    dh += derivatives[g](lambda) * factors[g];
  }
  return dh;
}

std::vector<Edge> IsingInstance::edges() const {
  std::vector<Edge> out;
  out.reserve(width * (height - 1) + (width - 1) * height);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const int site = r * width + c + 1;
      if (c + 1 < width) out.push_back({site, site + 1});
      if (r + 1 < height) out.push_back({site, site + width});
    }
  }
  return out;
}

std::string IsingInstance::to_json() const {
  json j;
  j["schema_version"] = kInstanceSchemaVersion;
  j["class"] = coupling_class_name(coupling_class);
  j["width"] = width;
  j["height"] = height;
  j["seed"] = seed;
  j["h"] = fields;
  json couplings_obj = json::object();
  const std::vector<Edge> edge_list = edges();
  for (std::size_t e = 0; e < edge_list.size(); ++e) {
    const std::string key =
        "(" + std::to_string(edge_list[e].a) + "," + std::to_string(edge_list[e].b) + ")";
    couplings_obj[key] = couplings[e];
  }
  j["J"] = couplings_obj;
  return j.dump(2);
}

IsingInstance IsingInstance::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("instance JSON: ") + e.what());
  }
  if (!j.contains("schema_version") ||
      j["schema_version"].get<int>() != kInstanceSchemaVersion) {
    throw FormatError("instance JSON: missing or unsupported schema_version");
  }
  IsingInstance inst;
  inst.coupling_class = parse_coupling_class(j.at("class").get<std::string>());
  inst.width = j.at("width").get<int>();
  inst.height = j.at("height").get<int>();
  inst.seed = j.at("seed").get<std::uint64_t>();
  inst.fields = j.at("h").get<std::vector<double>>();
  if (inst.width < 1 || inst.height < 1) {
    throw FormatError("instance JSON: lattice dimensions must be >= 1");
  }
  if (static_cast<int>(inst.fields.size()) != inst.nspins()) {
    throw FormatError("instance JSON: field array length mismatch");
  }
  const json& couplings_obj = j.at("J");
  const std::vector<Edge> edge_list = inst.edges();
  inst.couplings.reserve(edge_list.size());
  for (const Edge& e : edge_list) {
    const std::string key =
        "(" + std::to_string(e.a) + "," + std::to_string(e.b) + ")";
    if (!couplings_obj.contains(key)) {
      throw FormatError("instance JSON: missing coupling " + key);
    }
    inst.couplings.push_back(couplings_obj.at(key).get<double>());
  }
  if (couplings_obj.size() != edge_list.size()) {
    throw FormatError("instance JSON: unexpected coupling entries");
  }
  return inst;
}

std::string IsingInstance::content_hash() const {
  return hex64(fnv1a64(to_json()));
}

IsingInstance sample_ising(CouplingClass cls, int width, int height,
                           std::uint64_t seed) {
  if (width < 1 || height < 1) {
    throw DimensionError("sample_ising: lattice dimensions must be >= 1");
  }
  IsingInstance inst;
  inst.width = width;
  inst.height = height;
  inst.coupling_class = cls;
  inst.seed = seed;

  Rng rng(seed);
  const int n = inst.nspins();
  inst.fields.reserve(n);
  // Gamma(shape 4, scale 0.25): mean = 4 * 0.25 = 1.0, std = 2 * 0.25 = 0.5.
  for (int i = 0; i < n; ++i) inst.fields.push_back(rng.gamma(4.0, 0.25));
  const std::size_t n_edges = inst.edges().size();
  inst.couplings.reserve(n_edges);
  for (std::size_t e = 0; e < n_edges; ++e) {
    inst.couplings.push_back(cls == CouplingClass::SpinGlass
                                 ? rng.normal()
                                 : rng.gamma(4.0, 0.25));
  }
  return inst;
}

FactorizedHamiltonian ising_hamiltonian(const IsingInstance& inst) {
  const int n = inst.nspins();
  SparseOperator transverse(n);
  for (int i = 1; i <= n; ++i) {
    transverse.add_term(pauli::PauliTerm({{Axis::X, i}}), 1.0);
  }
  SparseOperator classical(n);
  for (int i = 1; i <= n; ++i) {
    classical.add_term(pauli::PauliTerm({{Axis::Z, i}}), inst.fields[i - 1]);
  }
  const double sign = inst.coupling_sign();
  const std::vector<Edge> edge_list = inst.edges();
  for (std::size_t e = 0; e < edge_list.size(); ++e) {
    classical.add_term(
        pauli::PauliTerm({{Axis::Z, edge_list[e].a}, {Axis::Z, edge_list[e].b}}),
        sign * inst.couplings[e]);
  }

  FactorizedHamiltonian h;
  h.nspins = n;
  h.factors = {std::move(transverse), std::move(classical)};
  h.coefficients = {[](double lambda) { return 1.0 - lambda; },
                    [](double lambda) { return lambda; }};
  h.derivatives = {[](double) { return -1.0; }, [](double) { return 1.0; }};
  return h;
}

Ansatz one_body_ansatz(int nspins) {
  Ansatz a;
  a.id = "one-body";
  a.operators.reserve(nspins);
  a.labels.reserve(nspins);
  for (int i = 1; i <= nspins; ++i) {
    a.operators.push_back(SparseOperator::pauli_y(i, nspins));
    a.labels.push_back("Y" + std::to_string(i));
  }
  return a;
}

Ansatz two_body_ansatz(const IsingInstance& inst) {
  const int n = inst.nspins();
  Ansatz a = one_body_ansatz(n);
  a.id = "two-body";
  for (const Edge& e : inst.edges()) {
    SparseOperator op(n);
    op.add_term(pauli::PauliTerm({{Axis::Y, e.a}, {Axis::Z, e.b}}), 1.0);
    op.add_term(pauli::PauliTerm({{Axis::Z, e.a}, {Axis::Y, e.b}}), 1.0);
    a.operators.push_back(std::move(op));
    a.labels.push_back("YZ(" + std::to_string(e.a) + "," + std::to_string(e.b) +
                       ")");
  }
  return a;
}

Ansatz make_ansatz(AnsatzKind kind, const IsingInstance& inst) {
  return kind == AnsatzKind::OneBody ? one_body_ansatz(inst.nspins())
                                     : two_body_ansatz(inst);
}

}  // namespace wvcd::model
