#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "anygram/corpus.hpp"
#include "anygram/embeddings.hpp"
#include "anygram/errors.hpp"
#include "anygram/kernels.hpp"

namespace anygram {

// Dense kernel matrix: symmetric over one corpus (train) or rectangular
// test x train. The fingerprint pins the exact kernel configuration so
// matrices from different configs cannot be mixed downstream.
struct GramMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> values;  // row-major
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;
  KernelConfig config;
  std::string fingerprint;
  std::string embedding_digest;    // empty for SM
  bool symmetric = false;          // row_ids == col_ids
  bool indefinite_warning = false; // WEST grams need not be PSD

  double at(size_t i, size_t j) const { return values[i * cols + j]; }
  double& at(size_t i, size_t j) { return values[i * cols + j]; }
};

inline std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::string gram_fingerprint(const KernelConfig& cfg,
                                    const EmbeddingTable* table) {
  std::string fp = "agk1;variant=";
  fp += to_string(cfg.variant);
  fp += ";lambda=" + format_g17(cfg.lambda);
  if (cfg.theta) fp += ";theta=" + format_g17(*cfg.theta);
  fp += cfg.normalize ? ";normalize=1" : ";normalize=0";
  fp += ";aspect=";
  fp += to_string(cfg.aspect_mode);
  if (cfg.aspect_mode == AspectMode::Suffix) fp += ";suffix=" + cfg.aspect_suffix;
  if (cfg.variant != Variant::SM && table != nullptr) {
    fp += ";sim=cosine";
    fp += table->lowercase_lookup() ? ";lower=1" : ";lower=0";
    fp += ";emb=" + table->content_digest().substr(0, 16);
  }
  return fp;
}

namespace detail {

inline unsigned resolve_threads(unsigned requested, size_t work_items) {
  unsigned t = requested;
  if (t == 0) {
    t = std::thread::hardware_concurrency();
    if (t == 0) t = 1;
  }
  if (work_items < t) t = static_cast<unsigned>(work_items);
  return t == 0 ? 1 : t;
}

// Runs fn(worker, index) over [0, count) on `threads` workers pulling from a
// shared counter. Cell writes must be disjoint; results may not depend on
// the schedule.
template <class Fn>
void parallel_for(size_t count, unsigned threads, Fn&& fn) {
  if (count == 0) return;
  threads = resolve_threads(threads, count);
  if (threads <= 1) {
    for (size_t i = 0; i < count; ++i) fn(0u, i);
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1))
          fn(w, i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Shared (surface, aspect-flag) symbol space for one Gram computation.
// Symbols carry their prepared (possibly flag-augmented) vector so that
// similarity equals token_sim on the original tokens bit for bit.
class SymbolSpace {
 public:
  SymbolSpace(const KernelConfig& cfg, const TokenSimilarity* sim)
      : cfg_(cfg), sim_(sim) {}

  int32_t intern(const std::string& surface, bool flag) {
    auto key = surface + (flag ? "\x1f""1" : "\x1f""0");
    auto it = ids_.find(key);
    if (it != ids_.end()) return it->second;
    int32_t id = static_cast<int32_t>(vectors_.size());
    ids_.emplace(std::move(key), id);
    if (sim_ != nullptr) {
      const EmbeddingTable& table = sim_->table();
      const double* v = table.find(surface);
      if (v == nullptr) {
        vectors_.emplace_back();  // out-of-vocabulary
      } else if (sim_->aspect_aware()) {
        vectors_.push_back(augment_aspect_flag({v, table.dim()}, flag));
      } else {
        vectors_.emplace_back(v, v + table.dim());
      }
    } else {
      vectors_.emplace_back();
    }
    return id;
  }

  // Uncached similarity; self-match is exactly 1, OOV pairs fall back to
  // symbol identity.
  double sim(int32_t a, int32_t b) const {
    if (a == b) return 1.0;
    const auto& va = vectors_[static_cast<size_t>(a)];
    const auto& vb = vectors_[static_cast<size_t>(b)];
    if (va.empty() || vb.empty()) return 0.0;
    return cosine(va, vb);
  }

  size_t size() const { return vectors_.size(); }

 private:
  KernelConfig cfg_;
  const TokenSimilarity* sim_;
  std::unordered_map<std::string, int32_t> ids_;
  std::vector<std::vector<double>> vectors_;
};

// Per-worker memo over unordered symbol pairs. Transparent: hit or miss,
// the value is the same.
class SimMemo {
 public:
  explicit SimMemo(const SymbolSpace& space) : space_(&space) {}

  double operator()(int32_t a, int32_t b) {
    if (a == b) return 1.0;
    const uint64_t key = a < b
        ? (static_cast<uint64_t>(static_cast<uint32_t>(a)) << 32) | static_cast<uint32_t>(b)
        : (static_cast<uint64_t>(static_cast<uint32_t>(b)) << 32) | static_cast<uint32_t>(a);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const double v = space_->sim(a, b);
    cache_.emplace(key, v);
    return v;
  }

 private:
  const SymbolSpace* space_;
  std::unordered_map<uint64_t, double> cache_;
};

struct PreparedInstance {
  std::vector<int32_t> syms;
  // token positions per symbol, for the sparse string-match iteration
  std::unordered_map<int32_t, std::vector<uint32_t>> positions;
};

inline PreparedInstance prepare_instance(const Sentence& s,
                                         const KernelConfig& cfg,
                                         SymbolSpace& space) {
  const Sentence* src = &s;
  Sentence suffixed;
  if (cfg.aspect_mode == AspectMode::Suffix) {
    suffixed = mark_aspect_suffix(s, cfg.aspect_suffix);
    src = &suffixed;
  }
  PreparedInstance out;
  out.syms.reserve(src->tokens.size());
  for (size_t pos = 0; pos < src->tokens.size(); ++pos) {
    const bool flag = cfg.aspect_mode == AspectMode::Flag && s.is_aspect(pos);
    out.syms.push_back(space.intern(src->tokens[pos], flag));
  }
  if (cfg.variant == Variant::SM) {
    for (size_t pos = 0; pos < out.syms.size(); ++pos)
      out.positions[out.syms[pos]].push_back(static_cast<uint32_t>(pos));
  }
  return out;
}

// String-match kernel against a pre-indexed second instance.
inline double kernel_sm_indexed(std::span<const int32_t> s1,
                                const PreparedInstance& inst2, double lambda,
                                DeltaScratch& scratch) {
  const size_t n1 = s1.size(), n2 = inst2.syms.size();
  if (n1 == 0 || n2 == 0) return 0.0;
  double* delta = scratch.acquire(n1 + 1, n2 + 1);
  const size_t stride = scratch.stride();
  double kernel = 0.0;
  for (size_t i = n1; i-- > 0;) {
    auto it = inst2.positions.find(s1[i]);
    if (it == inst2.positions.end()) continue;
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

struct GramWorker {
  DeltaScratch scratch;
  SimMemo memo;
  explicit GramWorker(const SymbolSpace& space) : memo(space) {}
};

inline double cell_kernel(const KernelConfig& cfg, const PreparedInstance& a,
                          const PreparedInstance& b, GramWorker& worker) {
  switch (cfg.variant) {
    case Variant::SM:
      return kernel_sm_indexed(a.syms, b, cfg.lambda, worker.scratch);
    case Variant::WEST:
      return kernel_west_seq(std::span<const int32_t>(a.syms),
                             std::span<const int32_t>(b.syms), cfg.lambda,
                             *cfg.theta, std::ref(worker.memo), worker.scratch);
    case Variant::WESS:
      return kernel_wess_seq(std::span<const int32_t>(a.syms),
                             std::span<const int32_t>(b.syms), cfg.lambda,
                             std::ref(worker.memo), worker.scratch);
  }
  return 0.0;
}

inline void check_gram_args(const KernelConfig& cfg, const TokenSimilarity* sim) {
  cfg.validate();
  if (cfg.variant == Variant::SM) {
    if (sim != nullptr)
      throw UsageError("kernel sm does not take a similarity function");
  } else {
    if (sim == nullptr)
      throw UsageError(std::string("kernel ") + to_string(cfg.variant) +
                       " requires embeddings");
    if (sim->aspect_aware() != (cfg.aspect_mode == AspectMode::Flag))
      throw UsageError("similarity aspect-awareness does not match aspect mode");
  }
}

inline void check_finite(const GramMatrix& g) {
  for (double v : g.values)
    if (!std::isfinite(v))
      throw DataError("non-finite kernel value in Gram matrix");
}

}  // namespace detail

// N x N symmetric Gram matrix over one corpus. Each unordered pair is
// computed once and mirrored; with normalize, entries become
// K(a,b)/sqrt(K(a,a)K(b,b)) with 0 substituted when a self-kernel is 0.
inline GramMatrix gram_train(const Corpus& corpus, const KernelConfig& cfg,
                             const TokenSimilarity* sim = nullptr,
                             unsigned threads = 0) {
  detail::check_gram_args(cfg, sim);
  const size_t n = corpus.size();

  detail::SymbolSpace space(cfg, sim);
  std::vector<detail::PreparedInstance> inst;
  inst.reserve(n);
  for (const auto& s : corpus.sentences)
    inst.push_back(detail::prepare_instance(s, cfg, space));

  GramMatrix g;
  g.rows = g.cols = n;
  g.values.assign(n * n, 0.0);
  g.row_ids = g.col_ids = corpus.ids();
  g.config = cfg;
  g.fingerprint = gram_fingerprint(cfg, sim ? &sim->table() : nullptr);
  g.embedding_digest = sim ? sim->table().content_digest() : "";
  g.symmetric = true;
  g.indefinite_warning = cfg.variant == Variant::WEST;
  if (n == 0) return g;

  const unsigned nthreads = detail::resolve_threads(threads, n);
  std::vector<detail::GramWorker> workers;
  workers.reserve(nthreads);
  for (unsigned w = 0; w < nthreads; ++w) workers.emplace_back(space);

  std::vector<double> diag(n, 0.0);
  detail::parallel_for(n, nthreads, [&](unsigned w, size_t i) {
    diag[i] = detail::cell_kernel(cfg, inst[i], inst[i], workers[w]);
  });
  std::vector<double> factor(n, 0.0);
  if (cfg.normalize)
    for (size_t i = 0; i < n; ++i)
      factor[i] = diag[i] > 0.0 ? std::sqrt(diag[i]) : 0.0;

  detail::parallel_for(n, nthreads, [&](unsigned w, size_t i) {
    for (size_t j = i; j < n; ++j) {
      double raw = j == i ? diag[i]
                          : detail::cell_kernel(cfg, inst[i], inst[j], workers[w]);
      double value = raw;
      if (cfg.normalize)
        value = (factor[i] > 0.0 && factor[j] > 0.0)
                    ? raw / (factor[i] * factor[j])
                    : 0.0;
      g.values[i * n + j] = value;
      g.values[j * n + i] = value;
    }
  });
  detail::check_finite(g);
  return g;
}

// |test| x |train| rectangular matrix under the same configuration;
// normalization uses each instance's own self-kernel.
inline GramMatrix gram_cross(const Corpus& test, const Corpus& train,
                             const KernelConfig& cfg,
                             const TokenSimilarity* sim = nullptr,
                             unsigned threads = 0) {
  detail::check_gram_args(cfg, sim);
  const size_t nr = test.size(), nc = train.size();

  detail::SymbolSpace space(cfg, sim);
  std::vector<detail::PreparedInstance> rows_inst, cols_inst;
  rows_inst.reserve(nr);
  cols_inst.reserve(nc);
  for (const auto& s : test.sentences)
    rows_inst.push_back(detail::prepare_instance(s, cfg, space));
  for (const auto& s : train.sentences)
    cols_inst.push_back(detail::prepare_instance(s, cfg, space));

  GramMatrix g;
  g.rows = nr;
  g.cols = nc;
  g.values.assign(nr * nc, 0.0);
  g.row_ids = test.ids();
  g.col_ids = train.ids();
  g.config = cfg;
  g.fingerprint = gram_fingerprint(cfg, sim ? &sim->table() : nullptr);
  g.embedding_digest = sim ? sim->table().content_digest() : "";
  g.symmetric = false;
  g.indefinite_warning = cfg.variant == Variant::WEST;
  if (nr == 0 || nc == 0) return g;

  const unsigned nthreads = detail::resolve_threads(threads, nr + nc);
  std::vector<detail::GramWorker> workers;
  workers.reserve(nthreads);
  for (unsigned w = 0; w < nthreads; ++w) workers.emplace_back(space);

  std::vector<double> row_factor(nr, 1.0), col_factor(nc, 1.0);
  if (cfg.normalize) {
    detail::parallel_for(nr, nthreads, [&](unsigned w, size_t i) {
      double d = detail::cell_kernel(cfg, rows_inst[i], rows_inst[i], workers[w]);
      row_factor[i] = d > 0.0 ? std::sqrt(d) : 0.0;
    });
    detail::parallel_for(nc, nthreads, [&](unsigned w, size_t j) {
      double d = detail::cell_kernel(cfg, cols_inst[j], cols_inst[j], workers[w]);
      col_factor[j] = d > 0.0 ? std::sqrt(d) : 0.0;
    });
  }

  detail::parallel_for(nr, nthreads, [&](unsigned w, size_t i) {
    for (size_t j = 0; j < nc; ++j) {
      double raw = detail::cell_kernel(cfg, rows_inst[i], cols_inst[j], workers[w]);
      double value = raw;
      if (cfg.normalize)
        value = (row_factor[i] > 0.0 && col_factor[j] > 0.0)
                    ? raw / (row_factor[i] * col_factor[j])
                    : 0.0;
      g.values[i * nc + j] = value;
    }
  });
  detail::check_finite(g);
  return g;
}

}  // namespace anygram
