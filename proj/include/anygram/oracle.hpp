#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "anygram/corpus.hpp"

// Brute-force reference implementations of the three kernels, deliberately
// free of dynamic programming and of any code shared with the fast path.
// Test instrumentation only; O(L^3) and worse is accepted.
namespace anygram::oracle {

// Every q-gram of a sentence (all orders q in [1, len]) mapped to its start
// positions. A sentence of length L indexes L*(L+1)/2 occurrences in total.
using NGramIndex = std::map<std::vector<std::string>, std::vector<uint32_t>>;

inline NGramIndex build_ngram_index(std::span<const std::string> tokens) {
  NGramIndex index;
  for (size_t q = 1; q <= tokens.size(); ++q)
    for (size_t i = 0; i + q <= tokens.size(); ++i)
      index[std::vector<std::string>(tokens.begin() + static_cast<ptrdiff_t>(i),
                                     tokens.begin() + static_cast<ptrdiff_t>(i + q))]
          .push_back(static_cast<uint32_t>(i));
  return index;
}

inline size_t total_occurrences(const NGramIndex& index) {
  size_t n = 0;
  for (const auto& [gram, positions] : index) n += positions.size();
  return n;
}

// sum over q of lambda^q times the number of aligned occurrence pairs of
// common q-grams, counted by explicit enumeration.
inline double oracle_sm(std::span<const std::string> s1,
                        std::span<const std::string> s2, double lambda) {
  const NGramIndex i1 = build_ngram_index(s1);
  const NGramIndex i2 = build_ngram_index(s2);
  double kernel = 0.0;
  for (const auto& [gram, pos1] : i1) {
    auto it = i2.find(gram);
    if (it == i2.end()) continue;
    kernel += std::pow(lambda, static_cast<double>(gram.size())) *
              static_cast<double>(pos1.size() * it->second.size());
  }
  return kernel;
}

inline double oracle_sm(const Sentence& s1, const Sentence& s2, double lambda) {
  return oracle_sm(std::span<const std::string>(s1.tokens),
                   std::span<const std::string>(s2.tokens), lambda);
}

// The SM enumeration applied to the thresholded match relation
// sim(t1,t2) >= theta: counts every aligned run in which all token pairs match.
template <class Sim>
double oracle_west(std::span<const std::string> s1,
                   std::span<const std::string> s2, double lambda, double theta,
                   Sim&& sim) {
  double kernel = 0.0;
  const size_t n1 = s1.size(), n2 = s2.size();
  const size_t max_q = std::min(n1, n2);
  for (size_t q = 1; q <= max_q; ++q) {
    for (size_t i = 0; i + q <= n1; ++i) {
      for (size_t j = 0; j + q <= n2; ++j) {
        bool all = true;
        for (size_t k = 0; k < q && all; ++k)
          all = sim(s1[i + k], s2[j + k]) >= theta;
        if (all) kernel += std::pow(lambda, static_cast<double>(q));
      }
    }
  }
  return kernel;
}

template <class Sim>
double oracle_west(const Sentence& s1, const Sentence& s2, double lambda,
                   double theta, Sim&& sim) {
  return oracle_west(std::span<const std::string>(s1.tokens),
                     std::span<const std::string>(s2.tokens), lambda, theta,
                     std::forward<Sim>(sim));
}

// Unrolled similarity-score kernel: for every start pair (i,j) and offset k,
// lambda^(k+1) times the similarity of the aligned tokens.
template <class Sim>
double oracle_wess(std::span<const std::string> s1,
                   std::span<const std::string> s2, double lambda, Sim&& sim) {
  double kernel = 0.0;
  const size_t n1 = s1.size(), n2 = s2.size();
  for (size_t i = 0; i < n1; ++i) {
    for (size_t j = 0; j < n2; ++j) {
      for (size_t k = 0; i + k < n1 && j + k < n2; ++k) {
        kernel += std::pow(lambda, static_cast<double>(k + 1)) *
                  sim(s1[i + k], s2[j + k]);
      }
    }
  }
  return kernel;
}

template <class Sim>
double oracle_wess(const Sentence& s1, const Sentence& s2, double lambda,
                   Sim&& sim) {
  return oracle_wess(std::span<const std::string>(s1.tokens),
                     std::span<const std::string>(s2.tokens), lambda,
                     std::forward<Sim>(sim));
}

}  // namespace anygram::oracle
