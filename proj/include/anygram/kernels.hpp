#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "anygram/corpus.hpp"
#include "anygram/errors.hpp"

namespace anygram {

// SM matches tokens by string equality, WEST by thresholded word similarity,
// WESS plugs the raw similarity score into the recursion.
enum class Variant { SM, WEST, WESS };

enum class AspectMode { None, Suffix, Flag };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::SM: return "sm";
    case Variant::WEST: return "west";
    case Variant::WESS: return "wess";
  }
  return "?";
}

inline const char* to_string(AspectMode m) {
  switch (m) {
    case AspectMode::None: return "none";
    case AspectMode::Suffix: return "suffix";
    case AspectMode::Flag: return "flag";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "sm") return Variant::SM;
  if (s == "west") return Variant::WEST;
  if (s == "wess") return Variant::WESS;
  throw UsageError("unknown kernel variant '" + s + "' (expected sm|west|wess)");
}

inline AspectMode parse_aspect_mode(const std::string& s) {
  if (s == "none") return AspectMode::None;
  if (s == "suffix") return AspectMode::Suffix;
  if (s == "flag") return AspectMode::Flag;
  throw UsageError("unknown aspect mode '" + s + "' (expected none|suffix|flag)");
}

struct KernelConfig {
  Variant variant = Variant::SM;
  double lambda = 0.5;               // decay factor, in (0,1]
  std::optional<double> theta;       // similarity threshold, WEST only
  bool normalize = false;            // K(a,b)/sqrt(K(a,a)K(b,b))
  AspectMode aspect_mode = AspectMode::None;
  std::string aspect_suffix = "_AT";

  void validate() const {
    if (!(lambda > 0.0 && lambda <= 1.0))
      throw UsageError("lambda must be in (0,1]");
    if (variant == Variant::WEST) {
      if (!theta) throw UsageError("kernel west requires --theta");
      if (!(*theta >= -1.0 && *theta <= 1.0))
        throw UsageError("theta must be in [-1,1]");
    } else if (theta) {
      throw UsageError(std::string("--theta is only valid with kernel west, not ") +
                       to_string(variant));
    }
    if (aspect_mode == AspectMode::Suffix) {
      if (variant != Variant::SM)
        throw UsageError("aspect-mode suffix is only valid with kernel sm");
      if (aspect_suffix.empty())
        throw UsageError("aspect suffix must be non-empty");
    }
    if (aspect_mode == AspectMode::Flag && variant == Variant::SM)
      throw UsageError("aspect-mode flag is only valid with kernel west or wess");
  }
};

// Reusable (L1+1) x (L2+1) delta table shared across kernel evaluations.
// Invariant: all cells are zero on entry; the gated kernels re-zero exactly
// the cells they touched, the dense kernel re-zeroes its rectangle.
class DeltaScratch {
 public:
  double* acquire(size_t rows, size_t cols) {
    stride_ = cols;
    if (table_.size() < rows * cols) table_.assign(rows * cols, 0.0);
    return table_.data();
  }
  size_t stride() const { return stride_; }
  void touch(size_t idx) { touched_.push_back(idx); }
  void release_touched() {
    for (size_t idx : touched_) table_[idx] = 0.0;
    touched_.clear();
  }
  void release_rect(size_t rows, size_t cols) {
    for (size_t i = 0; i < rows; ++i)
      std::fill_n(table_.begin() + static_cast<ptrdiff_t>(i * stride_), cols, 0.0);
  }

 private:
  std::vector<double> table_;
  std::vector<size_t> touched_;
  size_t stride_ = 0;
};

namespace detail {

// String-match any-gram kernel. The outer loop scans s1 in reverse so each
// cell can read the already-computed delta of the following token pair; only
// matching cells are ever visited.
template <class Tok>
double kernel_sm_seq(std::span<const Tok> s1, std::span<const Tok> s2,
                     double lambda, DeltaScratch& scratch) {
  const size_t n1 = s1.size(), n2 = s2.size();
  if (n1 == 0 || n2 == 0) return 0.0;
  std::unordered_map<Tok, std::vector<uint32_t>> where;
  where.reserve(n2);
  for (size_t j = 0; j < n2; ++j) where[s2[j]].push_back(static_cast<uint32_t>(j));
  double* delta = scratch.acquire(n1 + 1, n2 + 1);
  const size_t stride = scratch.stride();
  double kernel = 0.0;
  for (size_t i = n1; i-- > 0;) {
    auto it = where.find(s1[i]);
    if (it == where.end()) continue;
    for (uint32_t j : it->second) {
      const size_t cell = i * stride + j;
      const double d = lambda * (1.0 + delta[cell + stride + 1]);
      delta[cell] = d;
      scratch.touch(cell);
      kernel += d;
    }
  }
  scratch.release_touched();
  return kernel;
}

// Same recursion as SM, with the match predicate sim(t1,t2) >= theta.
template <class Tok, class Sim>
double kernel_west_seq(std::span<const Tok> s1, std::span<const Tok> s2,
                       double lambda, double theta, Sim&& sim,
                       DeltaScratch& scratch) {
  const size_t n1 = s1.size(), n2 = s2.size();
  if (n1 == 0 || n2 == 0) return 0.0;
  double* delta = scratch.acquire(n1 + 1, n2 + 1);
  const size_t stride = scratch.stride();
  double kernel = 0.0;
  for (size_t i = n1; i-- > 0;) {
    for (size_t j = 0; j < n2; ++j) {
      if (!(sim(s1[i], s2[j]) >= theta)) continue;
      const size_t cell = i * stride + j;
      const double d = lambda * (1.0 + delta[cell + stride + 1]);
      delta[cell] = d;
      scratch.touch(cell);
      kernel += d;
    }
  }
  scratch.release_touched();
  return kernel;
}

// Similarity-score kernel: every cell is computed, no match gate.
template <class Tok, class Sim>
double kernel_wess_seq(std::span<const Tok> s1, std::span<const Tok> s2,
                       double lambda, Sim&& sim, DeltaScratch& scratch) {
  const size_t n1 = s1.size(), n2 = s2.size();
  if (n1 == 0 || n2 == 0) return 0.0;
  double* delta = scratch.acquire(n1 + 1, n2 + 1);
  const size_t stride = scratch.stride();
  double kernel = 0.0;
  for (size_t i = n1; i-- > 0;) {
    for (size_t j = 0; j < n2; ++j) {
      const size_t cell = i * stride + j;
      const double d = lambda * (sim(s1[i], s2[j]) + delta[cell + stride + 1]);
      delta[cell] = d;
      kernel += d;
    }
  }
  scratch.release_rect(n1, n2);
  return kernel;
}

inline void check_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw UsageError("lambda must be in (0,1]");
}

}  // namespace detail

// Public per-pair entry points over plain token sequences. Aspect handling is
// a Gram-builder concern and does not appear here.

inline double kernel_sm(std::span<const std::string> s1,
                        std::span<const std::string> s2, double lambda) {
  detail::check_lambda(lambda);
  DeltaScratch scratch;
  return detail::kernel_sm_seq(s1, s2, lambda, scratch);
}

inline double kernel_sm(const Sentence& s1, const Sentence& s2, double lambda) {
  return kernel_sm(std::span<const std::string>(s1.tokens),
                   std::span<const std::string>(s2.tokens), lambda);
}

// sim is any symmetric callable (const std::string&, const std::string&) -> double
// whose range is consistent with theta.
template <class Sim>
double kernel_west(std::span<const std::string> s1,
                   std::span<const std::string> s2, double lambda, double theta,
                   Sim&& sim) {
  detail::check_lambda(lambda);
  DeltaScratch scratch;
  return detail::kernel_west_seq(s1, s2, lambda, theta, std::forward<Sim>(sim),
                                 scratch);
}

template <class Sim>
double kernel_west(const Sentence& s1, const Sentence& s2, double lambda,
                   double theta, Sim&& sim) {
  return kernel_west(std::span<const std::string>(s1.tokens),
                     std::span<const std::string>(s2.tokens), lambda, theta,
                     std::forward<Sim>(sim));
}

template <class Sim>
double kernel_wess(std::span<const std::string> s1,
                   std::span<const std::string> s2, double lambda, Sim&& sim) {
  detail::check_lambda(lambda);
  DeltaScratch scratch;
  return detail::kernel_wess_seq(s1, s2, lambda, std::forward<Sim>(sim), scratch);
}

template <class Sim>
double kernel_wess(const Sentence& s1, const Sentence& s2, double lambda,
                   Sim&& sim) {
  return kernel_wess(std::span<const std::string>(s1.tokens),
                     std::span<const std::string>(s2.tokens), lambda,
                     std::forward<Sim>(sim));
}

}  // namespace anygram
