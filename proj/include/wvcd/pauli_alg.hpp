#pragma once

// Sparse computer algebra for N-spin Pauli-string operators.
//
// An operator is stored as a hash map from Pauli strings (sorted products of
// single-site X/Y/Z factors) to complex coefficients. Addition runs in
// O(|A|+|B|), multiplication in O(|A||B|), the trace of a product in
// O(min{|A|,|B|}), and commutators visit only term pairs with overlapping
// site support via a per-site index.

#include <complex>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wvcd/common.hpp"

namespace wvcd::pauli {

using Complex = std::complex<double>;

enum class Axis : std::uint8_t { X = 1, Y = 2, Z = 3 };

char axis_char(Axis a);

// One factor packed as (site << 2) | axis. Sites are 1-based, so packed
// values sort by site and never collide with the value 0.
using PackedFactor = std::uint32_t;

inline PackedFactor pack_factor(Axis axis, int site) {
  return (static_cast<PackedFactor>(site) << 2) |
         static_cast<PackedFactor>(axis);
}
inline int factor_site(PackedFactor f) { return static_cast<int>(f >> 2); }
inline Axis factor_axis(PackedFactor f) { return static_cast<Axis>(f & 3u); }

struct TermProduct;

// A Pauli string: product of single-site factors with strictly increasing
// sites. The empty string is the identity. Immutable after construction.
// Factor lists up to kInline entries live inside the object; longer strings
// spill to an exact-fit heap block.
class PauliTerm {
 public:
  static constexpr std::uint32_t kInline = 6;

  PauliTerm() noexcept : size_(0) {}
  PauliTerm(std::initializer_list<std::pair<Axis, int>> factors);
  // Takes ownership of a sorted packed-factor buffer.
  PauliTerm(const PackedFactor* data, std::uint32_t n);

  PauliTerm(const PauliTerm& other) { copy_from(other); }
  PauliTerm(PauliTerm&& other) noexcept { move_from(std::move(other)); }
  PauliTerm& operator=(const PauliTerm& other) {
    if (this != &other) {
      destroy();
      copy_from(other);
    }
    return *this;
  }
  PauliTerm& operator=(PauliTerm&& other) noexcept {
    if (this != &other) {
      destroy();
      move_from(std::move(other));
    }
    return *this;
  }
  ~PauliTerm() { destroy(); }

  std::uint32_t size() const { return size_; }
  bool is_identity() const { return size_ == 0; }
  const PackedFactor* data() const {
    return size_ <= kInline ? inline_ : heap_;
  }
  PackedFactor factor(std::uint32_t i) const { return data()[i]; }
  int site(std::uint32_t i) const { return factor_site(data()[i]); }
  Axis axis(std::uint32_t i) const { return factor_axis(data()[i]); }
  int max_site() const { return size_ == 0 ? 0 : factor_site(data()[size_ - 1]); }

  // Sites strictly increasing and axes in {X, Y, Z}.
  bool is_valid() const;

  bool operator==(const PauliTerm& other) const {
    return size_ == other.size_ &&
           std::memcmp(data(), other.data(), size_ * sizeof(PackedFactor)) == 0;
  }
  bool operator!=(const PauliTerm& other) const { return !(*this == other); }

  // Lexicographic order on the packed factor list; used only to canonicalize
  // textual output.
  bool lex_less(const PauliTerm& other) const;

  std::uint64_t hash() const {
    return mix64(fnv1a64(data(), size_ * sizeof(PackedFactor)));
  }

  // Site-by-site product a*b with the single-site rules XY=iZ, YZ=iX, ZX=iY
  // (reversed order picks up -i) and X^2=Y^2=Z^2=I.
  static TermProduct product(const PauliTerm& a, const PauliTerm& b);

  std::string to_string() const;  // "X1 Z3", identity prints "I"
  // Parses the to_string format; throws FormatError on malformed input.
  static PauliTerm parse(const std::string& text);

 private:
  std::uint32_t size_;
  union {
    PackedFactor inline_[kInline];
    PackedFactor* heap_;
  };

  PackedFactor* mutable_data() { return size_ <= kInline ? inline_ : heap_; }
  void destroy() {
    if (size_ > kInline) delete[] heap_;
  }
  void copy_from(const PauliTerm& other);
  void move_from(PauliTerm&& other) noexcept;
};

struct TermProduct {
  PauliTerm term;
  Complex phase;      // one of {1, i, -1, -i}
  bool anticommutes;  // odd number of anticommuting site overlaps
};

static_assert(sizeof(PauliTerm) == 32);

// Open-addressing map from PauliTerm to Complex with power-of-two capacity
// and linear probing. Layout depends only on the insertion sequence and the
// FNV hash values, so iteration order is reproducible run to run. There is
// no single-entry erase; prune() rebuilds the table instead.
class TermMap {
 public:
  TermMap() = default;

  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  void clear();
  void reserve(std::size_t n);

  const Complex* find(const PauliTerm& key) const;
  Complex* find(const PauliTerm& key);

  // Insert-or-add. Entries are kept even when the sum lands on zero; a later
  // prune pass removes them.
  void accumulate(const PauliTerm& key, Complex value);
  void accumulate(PauliTerm&& key, Complex value);
  void set(const PauliTerm& key, Complex value);

  // Removes entries with |coefficient| <= tol by rebuilding the table.
  void prune(double tol);

  template <class F>
  void for_each(F&& f) const {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      if (used_[i]) f(slots_[i].first, slots_[i].second);
    }
  }

  class const_iterator {
   public:
    const_iterator(const TermMap* map, std::size_t pos) : map_(map), pos_(pos) {
      skip();
    }
    const std::pair<PauliTerm, Complex>& operator*() const {
      return map_->slots_[pos_];
    }
    const std::pair<PauliTerm, Complex>* operator->() const {
      return &map_->slots_[pos_];
    }
    const_iterator& operator++() {
      ++pos_;
      skip();
      return *this;
    }
    bool operator!=(const const_iterator& o) const { return pos_ != o.pos_; }

   private:
    void skip() {
      while (pos_ < map_->slots_.size() && !map_->used_[pos_]) ++pos_;
    }
    const TermMap* map_;
    std::size_t pos_;
  };
  const_iterator begin() const { return {this, 0}; }
  const_iterator end() const { return {this, slots_.size()}; }

 private:
  std::vector<std::pair<PauliTerm, Complex>> slots_;
  std::vector<std::uint8_t> used_;
  std::size_t size_ = 0;
  std::size_t mask_ = 0;

  void grow(std::size_t min_capacity);
  std::size_t probe(const PauliTerm& key, bool& found) const;
};

// A sparse N-spin operator: TermMap plus the spin count. Operations validate
// that both operands share nspins and prune results at the given tolerance.
class SparseOperator {
 public:
  explicit SparseOperator(int nspins);
  static SparseOperator zero(int nspins) { return SparseOperator(nspins); }
  static SparseOperator identity(int nspins);
  static SparseOperator single(Axis axis, int site, int nspins);
  static SparseOperator pauli_x(int site, int nspins) {
    return single(Axis::X, site, nspins);
  }
  static SparseOperator pauli_y(int site, int nspins) {
    return single(Axis::Y, site, nspins);
  }
  static SparseOperator pauli_z(int site, int nspins) {
    return single(Axis::Z, site, nspins);
  }

  int nspins() const { return nspins_; }
  std::size_t num_terms() const { return terms_.size(); }
  const TermMap& terms() const { return terms_; }

  Complex coefficient(const PauliTerm& term) const {
    const Complex* c = terms_.find(term);
    return c ? *c : Complex(0.0);
  }

  // Accumulates coeff onto term; throws DimensionError if the term touches a
  // site beyond nspins. Does not prune.
  void add_term(const PauliTerm& term, Complex coeff);
  void add_term(PauliTerm&& term, Complex coeff);

  SparseOperator& operator+=(const SparseOperator& other);
  SparseOperator& operator-=(const SparseOperator& other);
  SparseOperator& operator*=(Complex scalar);

  void prune(double tol = kDefaultPruneTolerance) { terms_.prune(tol); }
  SparseOperator pruned(double tol = kDefaultPruneTolerance) const;

  double max_abs_coefficient() const;
  // All coefficients real within tol (absolute, relative to each magnitude).
  bool is_hermitian(double tol = 1e-12) const;

  // Coefficient of the identity string, i.e. tr(A)/2^N.
  Complex normalized_trace() const { return coefficient(PauliTerm()); }

  // One term per line, "<re> <im> <factors>"; identity factors print "I".
  // Lines are sorted lexicographically by factor list, so output is
  // canonical. Round-trips through from_text exactly.
  std::string to_text() const;
  static SparseOperator from_text(const std::string& text, int nspins);

 private:
  int nspins_;
  TermMap terms_;

  void check_site_bound(const PauliTerm& term) const;
  friend SparseOperator multiply(const SparseOperator&, const SparseOperator&,
                                 double);
};

SparseOperator operator+(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator-(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator*(const SparseOperator& a, const SparseOperator& b);
SparseOperator operator*(Complex scalar, const SparseOperator& a);
SparseOperator operator*(const SparseOperator& a, Complex scalar);
SparseOperator operator*(double scalar, const SparseOperator& a);
SparseOperator operator*(const SparseOperator& a, double scalar);
SparseOperator operator-(const SparseOperator& a);

SparseOperator add(const SparseOperator& a, const SparseOperator& b,
                   double tol = kDefaultPruneTolerance);
SparseOperator multiply(const SparseOperator& a, const SparseOperator& b,
                        double tol = kDefaultPruneTolerance);

// tr(AB)/2^N = sum of z_A(s) z_B(s) over shared strings. Iterates the
// smaller operand and looks up in the larger; never forms the product AB.
Complex trace_product_normalized(const SparseOperator& a,
                                 const SparseOperator& b);
// tr(AB). Throws OptimizationError-free overflow guard for N >= 1024 where
// 2^N is not representable; use the normalized variant there.
Complex trace_product(const SparseOperator& a, const SparseOperator& b);

// Per-site index over the terms of one or more operators: bucket i holds
// (operator id, term id) for every stored term acting on site i. Term ids
// refer to an internal snapshot taken at construction, so the index is valid
// only as long as the indexed operators are not modified; using a stale
// index is a contract violation the implementation does not detect.
class SiteIndex {
 public:
  explicit SiteIndex(std::span<const SparseOperator> ops);
  explicit SiteIndex(const SparseOperator& op);

  struct Entry {
    std::uint32_t op;
    std::uint32_t idx;
  };

  int nspins() const { return nspins_; }
  std::size_t num_operators() const { return snapshots_.size(); }
  std::size_t total_terms() const { return total_terms_; }
  const std::vector<Entry>& bucket(int site) const { return buckets_[site]; }
  const std::vector<std::pair<PauliTerm, Complex>>& snapshot(
      std::size_t op) const {
    return snapshots_[op];
  }
  // Flat id of (op, idx), used for dedup stamps.
  std::size_t flat_id(const Entry& e) const {
    return offsets_[e.op] + e.idx;
  }

 private:
  int nspins_ = 0;
  std::size_t total_terms_ = 0;
  std::vector<std::vector<std::pair<PauliTerm, Complex>>> snapshots_;
  std::vector<std::size_t> offsets_;
  std::vector<std::vector<Entry>> buckets_;  // index 1..N used, 0 unused
};

// [B, A] visiting only the terms of A that share a site with each term of B.
// idx must have been built over exactly {A}.
SparseOperator commutator(const SparseOperator& b, const SparseOperator& a,
                          const SiteIndex& idx,
                          double tol = kDefaultPruneTolerance);
// Convenience overload that builds the index itself.
SparseOperator commutator(const SparseOperator& b, const SparseOperator& a,
                          double tol = kDefaultPruneTolerance);

// All-pairs serial reference implementation, kept for correctness tests and
// as the baseline in kernel benchmarks.
SparseOperator naive_commutator(const SparseOperator& b,
                                const SparseOperator& a,
                                double tol = kDefaultPruneTolerance);

// [B, A_mu] for every operator in the index with a single pass over B.
std::vector<SparseOperator> batched_commutator(
    const SparseOperator& b, const SiteIndex& idx,
    double tol = kDefaultPruneTolerance);
std::vector<SparseOperator> batched_commutator(
    const SparseOperator& b, std::span<const SparseOperator> ansatz,
    double tol = kDefaultPruneTolerance);

bool is_close(const SparseOperator& a, const SparseOperator& b,
              double tol = 1e-10);
double max_coefficient_difference(const SparseOperator& a,
                                  const SparseOperator& b);

std::ostream& operator<<(std::ostream& os, const SparseOperator& op);

}  // namespace wvcd::pauli
