#include "wvcd/oracle.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

namespace wvcd::oracle {

using json = nlohmann::json;
using pauli::Axis;
using pauli::PauliTerm;

void check_dense_guard(int nspins, int guard) {
  if (nspins > guard) {
    std::ostringstream msg;
    msg << "dense representation refused: N = " << nspins
        << " exceeds the guard of " << guard
        << " spins (2^N-dimensional matrices)";
    throw ResourceError(msg.str());
  }
}

Matrix to_dense(const SparseOperator& op, int guard) {
  check_dense_guard(op.nspins(), guard);
  const int n = op.nspins();
  const int dim = 1 << n;
  Matrix out = Matrix::Zero(dim, dim);

  Eigen::Matrix2cd pauli_x, pauli_y, pauli_z, ident;
  pauli_x << 0, 1, 1, 0;
  pauli_y << 0, Complex(0, -1), Complex(0, 1), 0;
  pauli_z << 1, 0, 0, -1;
  ident.setIdentity();

  op.terms().for_each([&](const PauliTerm& term, Complex coeff) {
    // Accumulate right to left so site 1 ends up as the leftmost factor
    // (highest-order basis bit).
    Matrix acc = Matrix::Identity(1, 1);
    std::uint32_t remaining = term.size();
    for (int site = n; site >= 1; --site) {
      const Eigen::Matrix2cd* factor = &ident;
      if (remaining > 0 && term.site(remaining - 1) == site) {
        switch (term.axis(remaining - 1)) {
          case Axis::X:
            factor = &pauli_x;
            break;
          case Axis::Y:
            factor = &pauli_y;
            break;
          case Axis::Z:
            factor = &pauli_z;
            break;
        }
        --remaining;
      }
      const Eigen::Index d = acc.rows();
      Matrix grown(2 * d, 2 * d);
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          grown.block(a * d, b * d, d, d) = (*factor)(a, b) * acc;
        }
      }
      acc = std::move(grown);
    }
    out += coeff * acc;
  });
  return out;
}

// ---------------------------------------------------------------------------
// CompiledOperator

CompiledOperator::CompiledOperator(const SparseOperator& op, int guard)
    : nspins_(op.nspins()) {
  check_dense_guard(nspins_, guard);
  dim_ = 1 << nspins_;
  terms_.reserve(op.num_terms());
  op.terms().for_each([&](const PauliTerm& term, Complex coeff) {
    Term t;
    int n_y = 0;
    for (std::uint32_t f = 0; f < term.size(); ++f) {
      const std::uint64_t bit = 1ull << (nspins_ - term.site(f));
      switch (term.axis(f)) {
        case Axis::X:
          t.flip |= bit;
          break;
        case Axis::Y:
          t.flip |= bit;
          t.sign |= bit;
          ++n_y;
          break;
        case Axis::Z:
          t.sign |= bit;
          break;
      }
    }
    static const Complex i_pow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    t.coeff = coeff * i_pow[n_y & 3];
    terms_.push_back(t);
  });
}

void CompiledOperator::apply_add(const Vector& in, Vector& out,
                                 Complex scale) const {
  for (const Term& t : terms_) {
    const Complex c = scale * t.coeff;
    for (int b = 0; b < dim_; ++b) {
      const int target = static_cast<int>(b ^ t.flip);
      const double sign =
          (std::popcount(static_cast<std::uint64_t>(b) & t.sign) & 1) ? -1.0
                                                                      : 1.0;
      out[target] += c * sign * in[b];
    }
  }
}

// ---------------------------------------------------------------------------
// DenseSystem

DenseSystem DenseSystem::build(const SparseOperator& h, int guard) {
  return build(to_dense(h, guard), h.nspins());
}

DenseSystem DenseSystem::build(Matrix h, int nspins) {
  DenseSystem ds;
  ds.nspins = nspins;
  ds.hamiltonian = std::move(h);
  Eigen::SelfAdjointEigenSolver<Matrix> solver(ds.hamiltonian);
  if (solver.info() != Eigen::Success) {
    throw OptimizationError("DenseSystem: eigendecomposition failed");
  }
  ds.eigenvalues = solver.eigenvalues();
  ds.eigenvectors = solver.eigenvectors();
  // Fix each eigenvector's phase: largest-magnitude component real positive.
  for (Eigen::Index k = 0; k < ds.eigenvectors.cols(); ++k) {
    Eigen::Index arg_max = 0;
    ds.eigenvectors.col(k).cwiseAbs().maxCoeff(&arg_max);
    const Complex z = ds.eigenvectors(arg_max, k);
    if (std::abs(z) > 0.0) {
      ds.eigenvectors.col(k) *= std::conj(z) / std::abs(z);
    }
  }
  return ds;
}

Matrix DenseSystem::to_eigenbasis(const Matrix& a) const {
  return eigenvectors.adjoint() * a * eigenvectors;
}

Matrix exact_agp(const DenseSystem& ds, const Matrix& dh_dense,
                 DegeneratePolicy policy) {
  const Eigen::Index dim = ds.eigenvalues.size();
  const double h_scale = std::max(std::abs(ds.eigenvalues(0)),
                                  std::abs(ds.eigenvalues(dim - 1)));
  const double dh_scale = dh_dense.norm();
  const Matrix dh_eig = ds.to_eigenbasis(dh_dense);

  Matrix phi_eig = Matrix::Zero(dim, dim);
  for (Eigen::Index n = 0; n < dim; ++n) {
    for (Eigen::Index m = 0; m < dim; ++m) {
      if (n == m) continue;
      const double gap = ds.eigenvalues(m) - ds.eigenvalues(n);
      if (std::abs(gap) <= 1e-10 * std::max(1.0, h_scale)) {
        if (std::abs(dh_eig(n, m)) <= 1e-10 * std::max(1.0, dh_scale) ||
            policy == DegeneratePolicy::ZeroCoupledBlocks) {
          continue;  // degenerate block element dropped
        }
        std::ostringstream msg;
        msg << "exact_agp: degenerate pair (" << n << ", " << m
            << ") coupled by dH, gauge potential undefined";
        throw OptimizationError(msg.str());
      }
      phi_eig(n, m) = Complex(0, 1) * dh_eig(n, m) / gap;
    }
  }
  return ds.eigenvectors * phi_eig * ds.eigenvectors.adjoint();
}

double action_eigenbasis(const DenseSystem& ds,
                         const std::vector<double>& poly_coefficients,
                         const Matrix& v_dense, const Matrix& phi_dense) {
  const Eigen::Index dim = ds.eigenvalues.size();
  const Matrix w = ds.to_eigenbasis(v_dense - phi_dense);
  std::vector<double> p_eps(dim);
  for (Eigen::Index n = 0; n < dim; ++n) {
    double v = 0.0;
    for (std::size_t k = poly_coefficients.size(); k-- > 0;) {
      v = v * ds.eigenvalues(n) + poly_coefficients[k];
    }
    p_eps[n] = v;
  }
  double action = 0.0;
  for (Eigen::Index n = 0; n < dim; ++n) {
    for (Eigen::Index m = 0; m < dim; ++m) {
      const double dp = p_eps[m] - p_eps[n];
      action += dp * dp * std::norm(w(m, n));
    }
  }
  return action;
}

// ---------------------------------------------------------------------------
// Evolution

namespace {

// Driving-term evaluator; returns the dense V(lambda) action on a state.
class DrivingTerm {
 public:
  DrivingTerm(const FactorizedHamiltonian& hf, const DrivingSpec& spec,
              const Ansatz* ansatz, int guard)
      : spec_(spec) {
    if (std::holds_alternative<const protocol::ProtocolTable*>(spec_)) {
      const auto* table = std::get<const protocol::ProtocolTable*>(spec_);
      if (ansatz == nullptr) {
        throw IntegrationError("evolve: protocol driving requires an ansatz");
      }
      if (table->num_ansatz != ansatz->size()) {
        throw DimensionError("evolve: table width != ansatz size");
      }
      for (const SparseOperator& op : ansatz->operators) {
        compiled_ansatz_.emplace_back(op, guard);
      }
      table_ = table;
    } else if (std::holds_alternative<ExactAgpDriving>(spec_)) {
      for (std::size_t g = 0; g < hf.num_factors(); ++g) {
        dense_factors_.push_back(to_dense(hf.factors[g], guard));
      }
      coeffs_ = hf.coefficients;
      derivs_ = hf.derivatives;
      nspins_ = hf.nspins;
    }
  }

  bool active() const {
    return !std::holds_alternative<NoDriving>(spec_);
  }

  void apply_add(double lambda, const Vector& in, Vector& out,
                 Complex scale) {
    if (std::holds_alternative<NoDriving>(spec_)) return;
    if (table_ != nullptr) {
      const std::vector<double> alpha = table_->alpha_at(lambda);
      for (std::size_t mu = 0; mu < compiled_ansatz_.size(); ++mu) {
        if (alpha[mu] == 0.0) continue;
        compiled_ansatz_[mu].apply_add(in, out, scale * alpha[mu]);
      }
      return;
    }
    out += scale * (agp_at(lambda) * in);
  }

  // Dense V(lambda) for diagnostics.
  Matrix dense_at(double lambda, const Ansatz* ansatz, int guard) {
    if (table_ != nullptr) {
      const std::vector<double> alpha = table_->alpha_at(lambda);
      Matrix v = alpha[0] * to_dense(ansatz->operators[0], guard);
      for (std::size_t mu = 1; mu < ansatz->size(); ++mu) {
        v += alpha[mu] * to_dense(ansatz->operators[mu], guard);
      }
      return v;
    }
    return agp_at(lambda);
  }

 private:
  const Matrix& agp_at(double lambda) {
    for (auto& [l, phi] : cache_) {
      if (l == lambda) return phi;
    }
    Matrix h = coeffs_[0](lambda) * dense_factors_[0];
    Matrix dh = derivs_[0](lambda) * dense_factors_[0];
    for (std::size_t g = 1; g < dense_factors_.size(); ++g) {
      h += coeffs_[g](lambda) * dense_factors_[g];
      dh += derivs_[g](lambda) * dense_factors_[g];
    }
    DenseSystem ds = DenseSystem::build(std::move(h), nspins_);
    cache_[next_slot_] = {lambda, exact_agp(ds, dh,
                                            DegeneratePolicy::ZeroCoupledBlocks)};
    const Matrix& ref = cache_[next_slot_].second;
    next_slot_ = (next_slot_ + 1) % cache_.size();
    return ref;
  }

  DrivingSpec spec_;
  const protocol::ProtocolTable* table_ = nullptr;
  std::vector<CompiledOperator> compiled_ansatz_;
  // Exact-AGP mode state; RK4 revisits the midpoint lambda, so a tiny
  // rotating cache avoids recomputing the eigendecomposition.
  std::vector<Matrix> dense_factors_;
  std::vector<std::function<double(double)>> coeffs_;
  std::vector<std::function<double(double)>> derivs_;
  int nspins_ = 0;
  std::array<std::pair<double, Matrix>, 3> cache_{
      {{-1.0, {}}, {-1.0, {}}, {-1.0, {}}}};
  std::size_t next_slot_ = 0;
};

Vector ground_state_at(const FactorizedHamiltonian& hf, double lambda,
                       int guard) {
  return DenseSystem::build(hf.eval(lambda), guard).ground_state();
}

}  // namespace

std::string EvolutionResult::to_csv() const {
  std::string out = "t,lambda,fidelity\n";
  char buf[96];
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double f = i < fidelities.size()
                         ? fidelities[i]
                         : std::numeric_limits<double>::quiet_NaN();
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g\n", times[i],
                  lambdas[i], f);
    out += buf;
  }
  return out;
}

std::string EvolutionResult::summary_json(double gain) const {
  json j;
  j["final_fidelity"] = final_fidelity;
  if (gain >= 0.0) j["gain"] = gain;
  j["settings"] = {{"t_d", duration},
                   {"driving", driving_label},
                   {"steps", steps},
                   {"doublings", doublings},
                   {"convergence_gap", convergence_gap}};
  j["min_ground_state_overlap"] = min_ground_state_overlap;
  return j.dump(2);
}

EvolutionResult evolve(const FactorizedHamiltonian& hf,
                       const DrivingSpec& driving, const Ansatz* ansatz,
                       double t_d, const EvolveConfig& cfg) {
  check_dense_guard(hf.nspins, cfg.dense_guard);
  if (t_d <= 0.0) throw IntegrationError("evolve: duration must be positive");

  const int dim = 1 << hf.nspins;
  std::vector<CompiledOperator> compiled_factors;
  for (const SparseOperator& f : hf.factors) {
    compiled_factors.emplace_back(f, cfg.dense_guard);
  }
  DrivingTerm v_term(hf, driving, ansatz, cfg.dense_guard);

  Vector psi0;
  if (cfg.initial_state != nullptr) {
    psi0 = *cfg.initial_state;
  } else {
    psi0 = ground_state_at(hf, 0.0, cfg.dense_guard);
  }

  const double lambda_dot = 1.0 / t_d;
  auto rhs = [&](double t, const Vector& psi, Vector& out) {
    const double lambda = t / t_d;
    out.setZero();
    for (std::size_t g = 0; g < compiled_factors.size(); ++g) {
      const double f = hf.coefficients[g](lambda);
      if (f == 0.0) continue;
      compiled_factors[g].apply_add(psi, out, Complex(0, -f));
    }
    v_term.apply_add(lambda, psi, out, Complex(0, -lambda_dot));
  };

  Vector k1(dim), k2(dim), k3(dim), k4(dim), scratch(dim);
  double max_norm_drift = 0.0;
  auto step = [&](double t, double h, Vector& psi) {
    rhs(t, psi, k1);
    scratch = psi + (0.5 * h) * k1;
    rhs(t + 0.5 * h, scratch, k2);
    scratch = psi + (0.5 * h) * k2;
    rhs(t + 0.5 * h, scratch, k3);
    scratch = psi + h * k3;
    rhs(t + h, scratch, k4);
    psi += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    const double norm = psi.norm();
    max_norm_drift = std::max(max_norm_drift, std::abs(norm - 1.0));
    psi /= norm;  // project back onto the unit sphere
    return norm;
  };
  auto run = [&](long long nsteps, Vector& psi_out) {
    Vector psi = psi0;
    const double h = t_d / static_cast<double>(nsteps);
    for (long long s = 0; s < nsteps; ++s) {
      step(h * static_cast<double>(s), h, psi);
    }
    psi_out = std::move(psi);
  };

  EvolutionResult result;
  result.duration = t_d;
  if (std::holds_alternative<NoDriving>(driving)) {
    result.driving_label = "none";
  } else if (std::holds_alternative<ExactAgpDriving>(driving)) {
    result.driving_label = "exact-agp";
  } else {
    result.driving_label =
        "K" + std::to_string(
                  std::get<const protocol::ProtocolTable*>(driving)->degree);
  }

  long long nsteps = cfg.initial_steps;
  Vector psi_prev(dim), psi(dim);
  run(nsteps, psi_prev);
  bool converged = false;
  for (int d = 1; d <= cfg.max_doublings; ++d) {
    nsteps *= 2;
    run(nsteps, psi);
    result.doublings = d;
    result.convergence_gap = (psi - psi_prev).norm();
    if (result.convergence_gap <= cfg.convergence) {
      converged = true;
      break;
    }
    psi_prev = psi;
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "evolve: step doubling did not converge (gap "
        << result.convergence_gap << " after " << nsteps << " steps)";
    throw IntegrationError(msg.str());
  }
  result.steps = static_cast<int>(std::min<long long>(
      nsteps, std::numeric_limits<int>::max()));

  Vector gs_final;
  if (cfg.final_ground_state != nullptr) {
    gs_final = *cfg.final_ground_state;
  } else {
    gs_final = ground_state_at(hf, 1.0, cfg.dense_guard);
  }

  if (cfg.fidelity_trace) {
    // One more pass at the accepted resolution, storing states at the
    // requested snapshot times (actual step boundaries are recorded).
    std::vector<double> targets;
    for (int i = 1; i <= cfg.store_points; ++i) {
      targets.push_back(t_d * i / (cfg.store_points + 1));
    }
    targets.push_back(t_d);

    std::vector<Vector> snap_states;
    result.times.push_back(0.0);
    result.norms.push_back(psi0.norm());
    snap_states.push_back(psi0);

    Vector state = psi0;
    const double h = t_d / static_cast<double>(nsteps);
    std::size_t next_target = 0;
    for (long long s = 0; s < nsteps; ++s) {
      const double norm = step(h * static_cast<double>(s), h, state);
      const double t_next = h * static_cast<double>(s + 1);
      while (next_target < targets.size() &&
             targets[next_target] <= t_next + 0.25 * h) {
        result.times.push_back(t_next);
        result.norms.push_back(norm);
        snap_states.push_back(state);
        ++next_target;
      }
    }

    result.lambdas.resize(result.times.size());
    result.fidelities.resize(result.times.size());
    Vector gs_prev;
    for (std::size_t i = 0; i < result.times.size(); ++i) {
      result.lambdas[i] = result.times[i] / t_d;
      const Vector gs = (i + 1 == result.times.size())
                            ? gs_final
                            : ground_state_at(hf, result.lambdas[i],
                                              cfg.dense_guard);
      result.fidelities[i] = std::norm(gs.dot(snap_states[i]));
      if (i > 0) {
        result.min_ground_state_overlap = std::min(
            result.min_ground_state_overlap, std::abs(gs.dot(gs_prev)));
      }
      gs_prev = gs;
    }
    result.final_fidelity = result.fidelities.back();
    result.final_state = std::move(snap_states.back());
  } else {
    result.times = {0.0, t_d};
    result.lambdas = {0.0, 1.0};
    result.norms = {psi0.norm(), 1.0};
    result.final_fidelity = std::norm(gs_final.dot(psi));
    result.final_state = std::move(psi);
  }
  (void)max_norm_drift;
  return result;
}

std::vector<double> fidelity_gains(const std::vector<double>& final_fidelities,
                                   std::size_t k1_index) {
  const double reference = final_fidelities.at(k1_index);
  std::vector<double> gains(final_fidelities.size());
  for (std::size_t i = 0; i < final_fidelities.size(); ++i) {
    if (i == k1_index) {
      gains[i] = 1.0;
    } else if (reference == 0.0) {
      gains[i] = std::numeric_limits<double>::infinity();
    } else {
      gains[i] = final_fidelities[i] / reference;
    }
  }
  return gains;
}

double speed_limit_bound(const FactorizedHamiltonian& hf,
                         const std::function<Matrix(double)>& v_at,
                         const std::vector<double>& grid, int guard) {
  check_dense_guard(hf.nspins, guard);
  std::vector<double> integrand(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double lambda = grid[i];
    DenseSystem ds =
        DenseSystem::build(to_dense(hf.eval(lambda), guard), hf.nspins);
    // Only the ground-state row enters the integrand, so degenerate blocks
    // among excited states may be dropped.
    const Matrix phi =
        exact_agp(ds, to_dense(hf.eval_derivative(lambda), guard),
                  DegeneratePolicy::ZeroCoupledBlocks);
    const Matrix w = ds.to_eigenbasis(v_at(lambda) - phi);
    double sum = 0.0;
    for (Eigen::Index n = 1; n < w.rows(); ++n) sum += std::norm(w(0, n));
    integrand[i] = std::sqrt(sum);
  }
  double bound = 0.0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    bound += 0.5 * (integrand[i - 1] + integrand[i]) * (grid[i] - grid[i - 1]);
  }
  return bound;
}

double speed_limit_bound(const FactorizedHamiltonian& hf,
                         const protocol::ProtocolTable& table,
                         const Ansatz& ansatz, const std::vector<double>& grid,
                         int guard) {
  std::vector<Matrix> dense_ansatz;
  dense_ansatz.reserve(ansatz.size());
  for (const SparseOperator& op : ansatz.operators) {
    dense_ansatz.push_back(to_dense(op, guard));
  }
  auto v_at = [&](double lambda) {
    const std::vector<double> alpha = table.alpha_at(lambda);
    Matrix v = Matrix::Zero(dense_ansatz[0].rows(), dense_ansatz[0].cols());
    for (std::size_t mu = 0; mu < ansatz.size(); ++mu) {
      v += alpha[mu] * dense_ansatz[mu];
    }
    return v;
  };
  return speed_limit_bound(hf, v_at, grid, guard);
}

PartialActions partial_actions(const DenseSystem& ds, int degree,
                               double energy,
                               const std::vector<Matrix>& ansatz_dense,
                               const Matrix& v_dense, const Matrix& phi_dense) {
  const Eigen::Index dim = ds.eigenvalues.size();
  const std::size_t m = ansatz_dense.size();
  PartialActions out;

  const Matrix w_v = ds.to_eigenbasis(v_dense - phi_dense);
  const Matrix phi_eig = ds.to_eigenbasis(phi_dense);
  std::vector<Matrix> a_eig;
  a_eig.reserve(m);
  for (const Matrix& a : ansatz_dense) a_eig.push_back(ds.to_eigenbasis(a));

  std::vector<double> w_state(dim);
  for (Eigen::Index n = 0; n < dim; ++n) {
    w_state[n] = protocol::gs_weight_state(ds.eigenvalues(n), energy, degree);
  }

  // Weighted least squares min_alpha sum wf |sum_mu alpha_mu a_mu - phi|^2
  // over a set of (row, col) pairs.
  auto minimize = [&](const std::vector<std::tuple<Eigen::Index, Eigen::Index,
                                                   double>>& pairs) {
    linalg::SymMatrix gram(static_cast<int>(m));
    std::vector<double> rhs(m, 0.0);
    for (const auto& [row, col, wf] : pairs) {
      for (std::size_t mu = 0; mu < m; ++mu) {
        const Complex amu = a_eig[mu](row, col);
        rhs[mu] += wf * (std::conj(amu) * phi_eig(row, col)).real();
        for (std::size_t nu = 0; nu <= mu; ++nu) {
          const double v = wf * (std::conj(amu) * a_eig[nu](row, col)).real();
          gram.at(static_cast<int>(mu), static_cast<int>(nu)) += v;
          if (nu != mu) {
            gram.at(static_cast<int>(nu), static_cast<int>(mu)) += v;
          }
        }
      }
    }
    return linalg::solve_qr(gram, rhs);
  };

  out.values.assign(dim, 0.0);
  out.alpha_partial.resize(dim);
  for (Eigen::Index n = 0; n < dim; ++n) {
    std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> pairs;
    double t_n = 0.0;
    for (Eigen::Index mm = 0; mm < dim; ++mm) {
      if (mm == n || w_state[mm] > w_state[n]) continue;
      if (w_state[n] == 0.0) continue;
      const double chi = (w_state[mm] == w_state[n]) ? 0.5 : 1.0;
      const double gap = ds.eigenvalues(n) - ds.eigenvalues(mm);
      const double w_pair = protocol::gs_weight_pair(
          ds.eigenvalues(mm), ds.eigenvalues(n), energy, degree);
      const double wf = gap * gap * chi * w_pair / w_state[n];
      t_n += wf * std::norm(w_v(mm, n));
      pairs.emplace_back(mm, n, wf);
    }
    out.values[n] = t_n;
    out.alpha_partial[n] =
        pairs.empty() ? std::vector<double>(m, 0.0) : minimize(pairs);
  }

  // Ideal action: only ground-to-excited elements, weight 2.
  std::vector<std::tuple<Eigen::Index, Eigen::Index, double>> ideal_pairs;
  out.ideal_action = 0.0;
  for (Eigen::Index n = 1; n < dim; ++n) {
    out.ideal_action += 2.0 * std::norm(w_v(0, n));
    ideal_pairs.emplace_back(Eigen::Index(0), n, 2.0);
  }
  out.alpha_ideal = minimize(ideal_pairs);
  return out;
}

std::vector<double> response_function(const model::IsingInstance& inst,
                                      model::AnsatzKind kind, int degree,
                                      double lambda, int site, double delta,
                                      const protocol::SolveOptions& opts) {
  if (site < 1 || site > inst.nspins()) {
    throw DimensionError("response_function: site out of range");
  }
  auto alpha_for = [&](double log_step) {
    model::IsingInstance perturbed = inst;
    perturbed.fields[site - 1] *= std::exp(log_step);
    const FactorizedHamiltonian hf = model::ising_hamiltonian(perturbed);
    const Ansatz ansatz = model::make_ansatz(kind, perturbed);
    return protocol::solve_single(hf.eval(lambda), hf.eval_derivative(lambda),
                                  ansatz, degree, lambda, opts)
        .alpha;
  };
  const std::vector<double> plus = alpha_for(delta);
  const std::vector<double> minus = alpha_for(-delta);
  std::vector<double> response(plus.size(), 0.0);
  for (std::size_t mu = 0; mu < plus.size(); ++mu) {
    if (plus[mu] == minus[mu]) continue;  // exact zero, including alpha = 0
    response[mu] = (std::log(std::abs(plus[mu])) -
                    std::log(std::abs(minus[mu]))) /
                   (2.0 * delta);
  }
  return response;
}

}  // namespace wvcd::oracle
