#include "wvcd/pauli_alg.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

namespace wvcd::pauli {

namespace {

constexpr Complex kIPowers[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};

// Smallest power of two >= max(n, 8).
std::size_t pow2_at_least(std::size_t n) {
  std::size_t c = 8;
  while (c < n) c <<= 1;
  return c;
}

}  // namespace

char axis_char(Axis a) {
  switch (a) {
    case Axis::X:
      return 'X';
    case Axis::Y:
      return 'Y';
    case Axis::Z:
      return 'Z';
  }
  return '?';
}

// ---------------------------------------------------------------------------
// PauliTerm

PauliTerm::PauliTerm(std::initializer_list<std::pair<Axis, int>> factors)
    : size_(0) {
  std::vector<PackedFactor> packed;
  packed.reserve(factors.size());
  for (const auto& [axis, site] : factors) packed.push_back(pack_factor(axis, site));
  std::sort(packed.begin(), packed.end());
  *this = PauliTerm(packed.data(), static_cast<std::uint32_t>(packed.size()));
  if (!is_valid()) throw FormatError("PauliTerm: repeated site or invalid factor");
}

PauliTerm::PauliTerm(const PackedFactor* data, std::uint32_t n) : size_(n) {
  PackedFactor* dst = inline_;
  if (n > kInline) {
    heap_ = new PackedFactor[n];
    dst = heap_;
  }
  std::memcpy(dst, data, n * sizeof(PackedFactor));
}

void PauliTerm::copy_from(const PauliTerm& other) {
  size_ = other.size_;
  if (size_ > kInline) {
    heap_ = new PackedFactor[size_];
    std::memcpy(heap_, other.heap_, size_ * sizeof(PackedFactor));
  } else {
    std::memcpy(inline_, other.inline_, size_ * sizeof(PackedFactor));
  }
}

void PauliTerm::move_from(PauliTerm&& other) noexcept {
  size_ = other.size_;
  if (size_ > kInline) {
    heap_ = other.heap_;
    other.size_ = 0;
  } else {
    std::memcpy(inline_, other.inline_, size_ * sizeof(PackedFactor));
  }
}

bool PauliTerm::is_valid() const {
  const PackedFactor* f = data();
  for (std::uint32_t i = 0; i < size_; ++i) {
    unsigned axis = f[i] & 3u;
    if (axis == 0 || factor_site(f[i]) < 1) return false;
    if (i > 0 && factor_site(f[i - 1]) >= factor_site(f[i])) return false;
  }
  return true;
}

bool PauliTerm::lex_less(const PauliTerm& other) const {
  const PackedFactor* a = data();
  const PackedFactor* b = other.data();
  std::uint32_t n = std::min(size_, other.size_);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (a[i] != b[i]) return a[i] < b[i];
  }
  return size_ < other.size_;
}

TermProduct PauliTerm::product(const PauliTerm& a, const PauliTerm& b) {
  const PackedFactor* pa = a.data();
  const PackedFactor* pb = b.data();
  const std::uint32_t na = a.size();
  const std::uint32_t nb = b.size();

  // Scratch buffer; the result has at most na+nb factors.
  PackedFactor small_buf[2 * kInline];
  std::vector<PackedFactor> big_buf;
  PackedFactor* out = small_buf;
  if (na + nb > 2 * kInline) {
    big_buf.resize(na + nb);
    out = big_buf.data();
  }

  std::uint32_t n_out = 0;
  unsigned phase_pow = 0;  // exponent of i, mod 4
  unsigned anti = 0;       // number of anticommuting site overlaps
  std::uint32_t i = 0, j = 0;
  while (i < na && j < nb) {
    const int sa = factor_site(pa[i]);
    const int sb = factor_site(pb[j]);
    if (sa < sb) {
      out[n_out++] = pa[i++];
    } else if (sb < sa) {
      out[n_out++] = pb[j++];
    } else {
      const unsigned axa = pa[i] & 3u;
      const unsigned axb = pb[j] & 3u;
      if (axa != axb) {
        // XY=iZ, YZ=iX, ZX=iY; the reversed pairs contribute i^3.
        const bool cyclic = (axb == axa % 3 + 1);
        phase_pow += cyclic ? 1 : 3;
        ++anti;
        out[n_out++] = (static_cast<PackedFactor>(sa) << 2) | (6u - axa - axb);
      }
      ++i;
      ++j;
    }
  }
  while (i < na) out[n_out++] = pa[i++];
  while (j < nb) out[n_out++] = pb[j++];

  return TermProduct{PauliTerm(out, n_out), kIPowers[phase_pow & 3u],
                     (anti & 1u) != 0};
}

std::string PauliTerm::to_string() const {
  if (size_ == 0) return "I";
  std::string s;
  for (std::uint32_t i = 0; i < size_; ++i) {
    if (i > 0) s.push_back(' ');
    s.push_back(axis_char(axis(i)));
    s += std::to_string(site(i));
  }
  return s;
}

PauliTerm PauliTerm::parse(const std::string& text) {
  std::istringstream in(text);
  std::vector<PackedFactor> packed;
  std::string tok;
  while (in >> tok) {
    if (tok == "I") {
      if (!packed.empty()) throw FormatError("PauliTerm: identity mixed with factors");
      continue;
    }
    Axis axis;
    switch (tok[0]) {
      case 'X':
        axis = Axis::X;
        break;
      case 'Y':
        axis = Axis::Y;
        break;
      case 'Z':
        axis = Axis::Z;
        break;
      default:
        throw FormatError("PauliTerm: bad axis in '" + tok + "'");
    }
    int site = 0;
    try {
      site = std::stoi(tok.substr(1));
    } catch (const std::exception&) {
      throw FormatError("PauliTerm: bad site in '" + tok + "'");
    }
    if (site < 1) throw FormatError("PauliTerm: sites are 1-based");
    packed.push_back(pack_factor(axis, site));
  }
  PauliTerm term(packed.data(), static_cast<std::uint32_t>(packed.size()));
  if (!term.is_valid()) throw FormatError("PauliTerm: unsorted or repeated sites");
  return term;
}

// ---------------------------------------------------------------------------
// TermMap

void TermMap::clear() {
  slots_.clear();
  used_.clear();
  size_ = 0;
  mask_ = 0;
}

void TermMap::reserve(std::size_t n) {
  std::size_t cap = pow2_at_least(n * 4 / 3 + 1);
  if (cap > slots_.size()) grow(cap);
}

std::size_t TermMap::probe(const PauliTerm& key, bool& found) const {
  std::size_t pos = key.hash() & mask_;
  while (used_[pos]) {
    if (slots_[pos].first == key) {
      found = true;
      return pos;
    }
    pos = (pos + 1) & mask_;
  }
  found = false;
  return pos;
}

const Complex* TermMap::find(const PauliTerm& key) const {
  if (slots_.empty()) return nullptr;
  bool found = false;
  std::size_t pos = probe(key, found);
  return found ? &slots_[pos].second : nullptr;
}

Complex* TermMap::find(const PauliTerm& key) {
  return const_cast<Complex*>(static_cast<const TermMap*>(this)->find(key));
}

void TermMap::grow(std::size_t capacity) {
  std::vector<std::pair<PauliTerm, Complex>> old_slots = std::move(slots_);
  std::vector<std::uint8_t> old_used = std::move(used_);
  slots_.clear();
  slots_.resize(capacity);
  used_.assign(capacity, 0);
  mask_ = capacity - 1;
  for (std::size_t i = 0; i < old_slots.size(); ++i) {
    if (!old_used[i]) continue;
    std::size_t pos = old_slots[i].first.hash() & mask_;
    while (used_[pos]) pos = (pos + 1) & mask_;
    slots_[pos] = std::move(old_slots[i]);
    used_[pos] = 1;
  }
}

void TermMap::accumulate(const PauliTerm& key, Complex value) {
  if (slots_.empty()) grow(8);
  bool found = false;
  std::size_t pos = probe(key, found);
  if (found) {
    slots_[pos].second += value;
    return;
  }
  slots_[pos] = {key, value};
  used_[pos] = 1;
  if (++size_ * 4 > slots_.size() * 3) grow(slots_.size() * 2);
}

void TermMap::accumulate(PauliTerm&& key, Complex value) {
  if (slots_.empty()) grow(8);
  bool found = false;
  std::size_t pos = probe(key, found);
  if (found) {
    slots_[pos].second += value;
    return;
  }
  slots_[pos] = {std::move(key), value};
  used_[pos] = 1;
  if (++size_ * 4 > slots_.size() * 3) grow(slots_.size() * 2);
}

void TermMap::set(const PauliTerm& key, Complex value) {
  if (slots_.empty()) grow(8);
  bool found = false;
  std::size_t pos = probe(key, found);
  slots_[pos].second = value;
  if (!found) {
    slots_[pos].first = key;
    used_[pos] = 1;
    if (++size_ * 4 > slots_.size() * 3) grow(slots_.size() * 2);
  }
}

void TermMap::prune(double tol) {
  bool any = false;
  for (std::size_t i = 0; i < slots_.size() && !any; ++i) {
    any = used_[i] && std::abs(slots_[i].second) <= tol;
  }
  if (!any) return;
  TermMap rebuilt;
  rebuilt.reserve(size_);
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    if (used_[i] && std::abs(slots_[i].second) > tol) {
      rebuilt.accumulate(std::move(slots_[i].first), slots_[i].second);
    }
  }
  *this = std::move(rebuilt);
}

// ---------------------------------------------------------------------------
// SparseOperator

SparseOperator::SparseOperator(int nspins) : nspins_(nspins) {
  if (nspins < 1) throw DimensionError("SparseOperator: nspins must be >= 1");
}

SparseOperator SparseOperator::identity(int nspins) {
  SparseOperator op(nspins);
  op.terms_.set(PauliTerm(), Complex(1.0));
  return op;
}

SparseOperator SparseOperator::single(Axis axis, int site, int nspins) {
  SparseOperator op(nspins);
  if (site < 1 || site > nspins) {
    throw DimensionError("SparseOperator: site out of range");
  }
  op.terms_.set(PauliTerm({{axis, site}}), Complex(1.0));
  return op;
}

void SparseOperator::check_site_bound(const PauliTerm& term) const {
  if (term.max_site() > nspins_) {
    throw DimensionError("SparseOperator: term acts beyond nspins");
  }
}

void SparseOperator::add_term(const PauliTerm& term, Complex coeff) {
  check_site_bound(term);
  terms_.accumulate(term, coeff);
}

void SparseOperator::add_term(PauliTerm&& term, Complex coeff) {
  check_site_bound(term);
  terms_.accumulate(std::move(term), coeff);
}

SparseOperator& SparseOperator::operator+=(const SparseOperator& other) {
  if (nspins_ != other.nspins_) {
    throw DimensionError("operator+=: mismatched nspins");
  }
  other.terms_.for_each(
      [this](const PauliTerm& t, Complex c) { terms_.accumulate(t, c); });
  terms_.prune(kDefaultPruneTolerance);
  return *this;
}

SparseOperator& SparseOperator::operator-=(const SparseOperator& other) {
  if (nspins_ != other.nspins_) {
    throw DimensionError("operator-=: mismatched nspins");
  }
  other.terms_.for_each(
      [this](const PauliTerm& t, Complex c) { terms_.accumulate(t, -c); });
  terms_.prune(kDefaultPruneTolerance);
  return *this;
}

SparseOperator& SparseOperator::operator*=(Complex scalar) {
  if (scalar == Complex(0.0)) {
    terms_.clear();
    return *this;
  }
  TermMap scaled;
  scaled.reserve(terms_.size());
  terms_.for_each([&](const PauliTerm& t, Complex c) {
    scaled.accumulate(t, c * scalar);
  });
  terms_ = std::move(scaled);
  return *this;
}

SparseOperator SparseOperator::pruned(double tol) const {
  SparseOperator out = *this;
  out.prune(tol);
  return out;
}

double SparseOperator::max_abs_coefficient() const {
  double m = 0.0;
  terms_.for_each(
      [&m](const PauliTerm&, Complex c) { m = std::max(m, std::abs(c)); });
  return m;
}

bool SparseOperator::is_hermitian(double tol) const {
  bool ok = true;
  terms_.for_each([&](const PauliTerm&, Complex c) {
    if (std::abs(c.imag()) > tol * std::max(1.0, std::abs(c.real()))) ok = false;
  });
  return ok;
}

std::string SparseOperator::to_text() const {
  std::vector<const std::pair<PauliTerm, Complex>*> entries;
  entries.reserve(terms_.size());
  for (const auto& entry : terms_) entries.push_back(&entry);
  std::sort(entries.begin(), entries.end(),
            [](const auto* a, const auto* b) { return a->first.lex_less(b->first); });
  std::string out;
  char buf[64];
  for (const auto* e : entries) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g ", e->second.real(),
                  e->second.imag());
    out += buf;
    out += e->first.to_string();
    out.push_back('\n');
  }
  return out;
}

SparseOperator SparseOperator::from_text(const std::string& text, int nspins) {
  SparseOperator op(nspins);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    double re = 0.0, im = 0.0;
    if (!(ls >> re >> im)) throw FormatError("operator text: bad coefficient");
    std::string rest;
    std::getline(ls, rest);
    op.add_term(PauliTerm::parse(rest), Complex(re, im));
  }
  return op;
}

SparseOperator add(const SparseOperator& a, const SparseOperator& b,
                   double tol) {
  if (a.nspins() != b.nspins()) throw DimensionError("add: mismatched nspins");
  SparseOperator out = a;
  b.terms().for_each([&out](const PauliTerm& t, Complex c) {
    out.add_term(t, c);
  });
  out.prune(tol);
  return out;
}

SparseOperator operator+(const SparseOperator& a, const SparseOperator& b) {
  return add(a, b);
}

SparseOperator operator-(const SparseOperator& a, const SparseOperator& b) {
  SparseOperator out = a;
  out -= b;
  return out;
}

SparseOperator operator-(const SparseOperator& a) {
  SparseOperator out = a;
  out *= Complex(-1.0);
  return out;
}

SparseOperator operator*(Complex scalar, const SparseOperator& a) {
  SparseOperator out = a;
  out *= scalar;
  return out;
}

SparseOperator operator*(const SparseOperator& a, Complex scalar) {
  return scalar * a;
}

SparseOperator operator*(double scalar, const SparseOperator& a) {
  return Complex(scalar) * a;
}

SparseOperator operator*(const SparseOperator& a, double scalar) {
  return Complex(scalar) * a;
}

namespace {

// Multiplies each snapshot entry of `a` in [begin, end) against all of b,
// accumulating into out.
void multiply_range(const std::vector<std::pair<PauliTerm, Complex>>& a,
                    std::size_t begin, std::size_t end, const TermMap& b,
                    TermMap& out) {
  for (std::size_t i = begin; i < end; ++i) {
    const PauliTerm& ta = a[i].first;
    const Complex ca = a[i].second;
    b.for_each([&](const PauliTerm& tb, Complex cb) {
      TermProduct p = PauliTerm::product(ta, tb);
      out.accumulate(std::move(p.term), ca * cb * p.phase);
    });
  }
}

}  // namespace

SparseOperator multiply(const SparseOperator& a, const SparseOperator& b,
                        double tol) {
  if (a.nspins() != b.nspins()) {
    throw DimensionError("multiply: mismatched nspins");
  }
  SparseOperator out(a.nspins());
  const std::size_t pairs = a.num_terms() * b.num_terms();
  if (pairs == 0) return out;

  std::vector<std::pair<PauliTerm, Complex>> snap;
  snap.reserve(a.num_terms());
  a.terms().for_each(
      [&snap](const PauliTerm& t, Complex c) { snap.emplace_back(t, c); });

  TermMap result;
  const int max_threads = omp_get_max_threads();
  if (pairs < (1u << 15) || max_threads <= 1) {
    result.reserve(std::max(a.num_terms(), b.num_terms()));
    multiply_range(snap, 0, snap.size(), b.terms(), result);
  } else {
    // Thread-local partial maps merged in chunk order, so the accumulation
    // order (and hence rounding) is reproducible for a fixed thread count.
    // Chunking uses the actual team size, which can be 1 when this runs
    // inside an outer parallel region.
    std::vector<TermMap> partial(max_threads);
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int t = omp_get_thread_num();
      const std::size_t chunk = (snap.size() + nt - 1) / nt;
      const std::size_t lo = std::min(snap.size(), t * chunk);
      const std::size_t hi = std::min(snap.size(), lo + chunk);
      multiply_range(snap, lo, hi, b.terms(), partial[t]);
    }
    result = std::move(partial[0]);
    for (std::size_t t = 1; t < partial.size(); ++t) {
      partial[t].for_each([&result](const PauliTerm& term, Complex c) {
        result.accumulate(term, c);
      });
    }
  }
  result.prune(tol);

  SparseOperator product(a.nspins());
  result.for_each([&product](const PauliTerm& t, Complex c) {
    product.add_term(t, c);
  });
  return product;
}

SparseOperator operator*(const SparseOperator& a, const SparseOperator& b) {
  return multiply(a, b);
}

Complex trace_product_normalized(const SparseOperator& a,
                                 const SparseOperator& b) {
  if (a.nspins() != b.nspins()) {
    throw DimensionError("trace_product: mismatched nspins");
  }
  const SparseOperator& small = a.num_terms() <= b.num_terms() ? a : b;
  const SparseOperator& large = a.num_terms() <= b.num_terms() ? b : a;
  Complex sum(0.0);
  small.terms().for_each([&](const PauliTerm& t, Complex c) {
    // tr(st) = 2^N only for s == t; distinct strings are trace-orthogonal.
    if (const Complex* other = large.terms().find(t)) sum += c * (*other);
  });
  return sum;
}

Complex trace_product(const SparseOperator& a, const SparseOperator& b) {
  if (a.nspins() >= 1024) {
    throw DimensionError(
        "trace_product: 2^N overflows double, use trace_product_normalized");
  }
  return std::ldexp(1.0, a.nspins()) * trace_product_normalized(a, b);
}

// ---------------------------------------------------------------------------
// SiteIndex

SiteIndex::SiteIndex(std::span<const SparseOperator> ops) {
  if (ops.empty()) throw DimensionError("SiteIndex: no operators");
  nspins_ = ops[0].nspins();
  snapshots_.resize(ops.size());
  offsets_.resize(ops.size());
  buckets_.resize(nspins_ + 1);
  for (std::size_t k = 0; k < ops.size(); ++k) {
    if (ops[k].nspins() != nspins_) {
      throw DimensionError("SiteIndex: mismatched nspins");
    }
    offsets_[k] = total_terms_;
    auto& snap = snapshots_[k];
    snap.reserve(ops[k].num_terms());
    ops[k].terms().for_each([&snap](const PauliTerm& t, Complex c) {
      snap.emplace_back(t, c);
    });
    for (std::uint32_t i = 0; i < snap.size(); ++i) {
      const PauliTerm& term = snap[i].first;
      for (std::uint32_t f = 0; f < term.size(); ++f) {
        buckets_[term.site(f)].push_back(
            Entry{static_cast<std::uint32_t>(k), i});
      }
    }
    total_terms_ += snap.size();
  }
}

SiteIndex::SiteIndex(const SparseOperator& op)
    : SiteIndex(std::span<const SparseOperator>(&op, 1)) {}

namespace {

// Commutator core: for the B-snapshot range [begin, end), visit only indexed
// terms sharing a site, dedup via stamps, and accumulate 2*z_s*z_t*(st) for
// anticommuting pairs ([s,t] = st - ts = 2st when s,t anticommute).
void commutator_range(
    const std::vector<std::pair<PauliTerm, Complex>>& b_snap,
    std::size_t begin, std::size_t end, const SiteIndex& idx,
    std::vector<std::uint32_t>& stamps, std::uint32_t& epoch,
    std::vector<TermMap>& out) {
  for (std::size_t i = begin; i < end; ++i) {
    const PauliTerm& sigma = b_snap[i].first;
    const Complex z_sigma = b_snap[i].second;
    ++epoch;
    for (std::uint32_t f = 0; f < sigma.size(); ++f) {
      for (const SiteIndex::Entry& e : idx.bucket(sigma.site(f))) {
        const std::size_t id = idx.flat_id(e);
        if (stamps[id] == epoch) continue;
        stamps[id] = epoch;
        const auto& [tau, z_tau] = idx.snapshot(e.op)[e.idx];
        TermProduct p = PauliTerm::product(sigma, tau);
        if (!p.anticommutes) continue;
        out[e.op].accumulate(std::move(p.term), 2.0 * z_sigma * z_tau * p.phase);
      }
    }
  }
}

std::vector<std::pair<PauliTerm, Complex>> snapshot_terms(
    const SparseOperator& op) {
  std::vector<std::pair<PauliTerm, Complex>> snap;
  snap.reserve(op.num_terms());
  op.terms().for_each(
      [&snap](const PauliTerm& t, Complex c) { snap.emplace_back(t, c); });
  return snap;
}

}  // namespace

std::vector<SparseOperator> batched_commutator(const SparseOperator& b,
                                               const SiteIndex& idx,
                                               double tol) {
  if (b.nspins() != idx.nspins()) {
    throw DimensionError("batched_commutator: mismatched nspins");
  }
  const std::size_t n_ops = idx.num_operators();
  std::vector<std::pair<PauliTerm, Complex>> b_snap = snapshot_terms(b);

  std::vector<TermMap> merged(n_ops);
  const int max_threads = omp_get_max_threads();
  if (b_snap.size() < 2048 || max_threads <= 1) {
    std::vector<std::uint32_t> stamps(idx.total_terms(), 0);
    std::uint32_t epoch = 0;
    commutator_range(b_snap, 0, b_snap.size(), idx, stamps, epoch, merged);
  } else {
    std::vector<std::vector<TermMap>> partial(max_threads);
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int t = omp_get_thread_num();
      std::vector<TermMap> local(n_ops);
      std::vector<std::uint32_t> stamps(idx.total_terms(), 0);
      std::uint32_t epoch = 0;
      const std::size_t chunk = (b_snap.size() + nt - 1) / nt;
      const std::size_t lo = std::min(b_snap.size(), t * chunk);
      const std::size_t hi = std::min(b_snap.size(), lo + chunk);
      commutator_range(b_snap, lo, hi, idx, stamps, epoch, local);
      partial[t] = std::move(local);
    }
    bool first = true;
    for (std::size_t t = 0; t < partial.size(); ++t) {
      if (partial[t].empty()) continue;
      if (first) {
        merged = std::move(partial[t]);
        first = false;
        continue;
      }
      for (std::size_t k = 0; k < n_ops; ++k) {
        partial[t][k].for_each([&merged, k](const PauliTerm& term, Complex c) {
          merged[k].accumulate(term, c);
        });
      }
    }
  }

  std::vector<SparseOperator> results;
  results.reserve(n_ops);
  for (std::size_t k = 0; k < n_ops; ++k) {
    merged[k].prune(tol);
    SparseOperator op(b.nspins());
    merged[k].for_each(
        [&op](const PauliTerm& t, Complex c) { op.add_term(t, c); });
    results.push_back(std::move(op));
  }
  return results;
}

std::vector<SparseOperator> batched_commutator(
    const SparseOperator& b, std::span<const SparseOperator> ansatz,
    double tol) {
  SiteIndex idx(ansatz);
  return batched_commutator(b, idx, tol);
}

SparseOperator commutator(const SparseOperator& b, const SparseOperator& a,
                          const SiteIndex& idx, double tol) {
  if (idx.num_operators() != 1 || a.nspins() != idx.nspins()) {
    throw DimensionError("commutator: index must cover exactly the rhs operator");
  }
  return std::move(batched_commutator(b, idx, tol)[0]);
}

SparseOperator commutator(const SparseOperator& b, const SparseOperator& a,
                          double tol) {
  SiteIndex idx(a);
  return commutator(b, a, idx, tol);
}

SparseOperator naive_commutator(const SparseOperator& b,
                                const SparseOperator& a, double tol) {
  if (b.nspins() != a.nspins()) {
    throw DimensionError("naive_commutator: mismatched nspins");
  }
  SparseOperator out(b.nspins());
  b.terms().for_each([&](const PauliTerm& sigma, Complex z_sigma) {
    a.terms().for_each([&](const PauliTerm& tau, Complex z_tau) {
      TermProduct st = PauliTerm::product(sigma, tau);
      TermProduct ts = PauliTerm::product(tau, sigma);
      out.add_term(std::move(st.term), z_sigma * z_tau * st.phase);
      out.add_term(std::move(ts.term), -z_sigma * z_tau * ts.phase);
    });
  });
  out.prune(tol);
  return out;
}

bool is_close(const SparseOperator& a, const SparseOperator& b, double tol) {
  return max_coefficient_difference(a, b) <= tol;
}

double max_coefficient_difference(const SparseOperator& a,
                                  const SparseOperator& b) {
  if (a.nspins() != b.nspins()) {
    throw DimensionError("max_coefficient_difference: mismatched nspins");
  }
  double m = 0.0;
  a.terms().for_each([&](const PauliTerm& t, Complex c) {
    m = std::max(m, std::abs(c - b.coefficient(t)));
  });
  b.terms().for_each([&](const PauliTerm& t, Complex c) {
    m = std::max(m, std::abs(c - a.coefficient(t)));
  });
  return m;
}

std::ostream& operator<<(std::ostream& os, const SparseOperator& op) {
  return os << op.to_text();
}

}  // namespace wvcd::pauli
