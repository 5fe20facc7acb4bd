#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "anygram/digest.hpp"
#include "anygram/errors.hpp"

namespace anygram {

// Cosine of two equal-length vectors. Zero-norm input is a degenerate-vector
// error; callers that need an OOV policy must check norms first.
inline double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw std::invalid_argument("cosine: vector length mismatch");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0)
    throw std::domain_error("cosine: zero-norm vector");
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

// Appends the aspect-flag component: 1.0 for an aspect-term occurrence,
// 0.0 otherwise. The first d components are copied bit-exactly.
inline std::vector<double> augment_aspect_flag(std::span<const double> vec,
                                               bool is_aspect) {
  std::vector<double> out(vec.begin(), vec.end());
  out.push_back(is_aspect ? 1.0 : 0.0);
  return out;
}

namespace detail {
inline std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}
}  // namespace detail

// Immutable token -> vector table of fixed dimension. Lookups optionally
// lowercase the query token (pretrained vectors are commonly lowercased);
// zero-norm stored vectors are treated as out-of-vocabulary.
class EmbeddingTable {
 public:
  static constexpr char kCacheMagic[4] = {'A', 'G', 'K', 'E'};
  static constexpr uint32_t kCacheVersion = 1;

  EmbeddingTable() = default;

  // Text format: token followed by dim reals per line, or the binary cache
  // format (auto-detected by magic bytes). Duplicate tokens keep the first
  // occurrence.
  static EmbeddingTable load(const std::string& path,
                             std::optional<size_t> expected_dim = std::nullopt,
                             bool lowercase_lookup = true) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open embeddings file: " + path);
    char magic[4] = {0, 0, 0, 0};
    probe.read(magic, 4);
    probe.close();
    EmbeddingTable t = std::memcmp(magic, kCacheMagic, 4) == 0
                           ? load_cache(path)
                           : load_text(path);
    if (expected_dim && t.dim_ != *expected_dim)
      throw DataError(path + ": dimension " + std::to_string(t.dim_) +
                      " does not match expected " + std::to_string(*expected_dim));
    t.lowercase_lookup_ = lowercase_lookup;
    return t;
  }

  static EmbeddingTable from_entries(
      size_t dim, const std::vector<std::pair<std::string, std::vector<double>>>& entries,
      bool lowercase_lookup = true) {
    EmbeddingTable t;
    t.dim_ = dim;
    t.lowercase_lookup_ = lowercase_lookup;
    if (dim == 0) throw DataError("embedding dimension must be positive");
    for (const auto& [token, vec] : entries) {
      if (vec.size() != dim)
        throw DataError("embedding for '" + token + "' has dimension " +
                        std::to_string(vec.size()) + ", expected " +
                        std::to_string(dim));
      t.insert(token, vec.data());
    }
    t.compute_digest();
    return t;
  }

  // Version-stamped binary cache: magic, version, dim, count, then
  // length-prefixed tokens with raw little-endian doubles.
  void save_cache(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write embedding cache: " + path);
    out.write(kCacheMagic, 4);
    write_u32(out, kCacheVersion);
    write_u32(out, static_cast<uint32_t>(dim_));
    write_u64(out, tokens_.size());
    for (size_t i = 0; i < tokens_.size(); ++i) {
      write_u32(out, static_cast<uint32_t>(tokens_[i].size()));
      out.write(tokens_[i].data(), static_cast<std::streamsize>(tokens_[i].size()));
      out.write(reinterpret_cast<const char*>(data_.data() + i * dim_),
                static_cast<std::streamsize>(dim_ * sizeof(double)));
    }
    if (!out) throw DataError("write failure on embedding cache: " + path);
  }

  size_t dim() const { return dim_; }
  size_t size() const { return tokens_.size(); }
  bool lowercase_lookup() const { return lowercase_lookup_; }

  // Content digest over dim and entries in file order; identical whether the
  // table came from text or from the cache.
  const std::string& content_digest() const { return digest_; }

  // Vector for a token, or nullptr when out-of-vocabulary. Zero-norm entries
  // report as OOV.
  const double* find(std::string_view token) const {
    auto it = lowercase_lookup_ ? index_.find(detail::ascii_lower(token))
                                : index_.find(std::string(token));
    if (it == index_.end()) return nullptr;
    if (norms_sq_[it->second] == 0.0) return nullptr;
    return data_.data() + it->second * dim_;
  }

  std::span<const double> vector_at(size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  static EmbeddingTable load_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embeddings file: " + path);
    EmbeddingTable t;
    std::string line;
    size_t line_no = 0;
    std::vector<double> vec;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      std::istringstream ss(line);
      std::string token;
      ss >> token;
      vec.clear();
      double value;
      while (ss >> value) {
        if (!std::isfinite(value))
          throw DataError(path + ":" + std::to_string(line_no) +
                          ": non-finite embedding value");
        vec.push_back(value);
      }
      if (!ss.eof())
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": unparseable number");
      if (vec.empty())
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": no vector components");
      if (t.dim_ == 0) t.dim_ = vec.size();
      if (vec.size() != t.dim_)
        throw DataError(path + ":" + std::to_string(line_no) + ": dimension " +
                        std::to_string(vec.size()) + " does not match " +
                        std::to_string(t.dim_));
      if (t.index_.count(token)) continue;  // first occurrence wins
      t.insert(token, vec.data());
    }
    if (t.dim_ == 0) throw DataError(path + ": empty embeddings file");
    t.compute_digest();
    return t;
  }

  static EmbeddingTable load_cache(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding cache: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCacheMagic, 4) != 0)
      throw DataError(path + ": bad embedding cache magic");
    uint32_t version = read_u32(in, path);
    if (version != kCacheVersion)
      throw DataError(path + ": unsupported embedding cache version " +
                      std::to_string(version));
    EmbeddingTable t;
    t.dim_ = read_u32(in, path);
    if (t.dim_ == 0) throw DataError(path + ": zero dimension in cache");
    uint64_t count = read_u64(in, path);
    std::vector<double> vec(t.dim_);
    for (uint64_t i = 0; i < count; ++i) {
      uint32_t len = read_u32(in, path);
      std::string token(len, '\0');
      in.read(token.data(), len);
      in.read(reinterpret_cast<char*>(vec.data()),
              static_cast<std::streamsize>(t.dim_ * sizeof(double)));
      if (!in) throw DataError(path + ": truncated embedding cache");
      if (t.index_.count(token)) continue;
      t.insert(token, vec.data());
    }
    t.compute_digest();
    return t;
  }

  void insert(const std::string& token, const double* vec) {
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    double norm_sq = 0.0;
    for (size_t i = 0; i < dim_; ++i) norm_sq += vec[i] * vec[i];
    norms_sq_.push_back(norm_sq);
    data_.insert(data_.end(), vec, vec + dim_);
  }

  void compute_digest() {
    Sha256 h;
    h.update("anygram-embeddings-v1\n");
    uint64_t d = dim_;
    h.update(&d, sizeof(d));
    for (size_t i = 0; i < tokens_.size(); ++i) {
      h.update(tokens_[i]);
      h.update("\n", 1);
      h.update(data_.data() + i * dim_, dim_ * sizeof(double));
    }
    digest_ = h.finish_hex();
  }

  static void write_u32(std::ostream& o, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>(v >> (8 * i));
    o.write(b, 4);
  }
  static void write_u64(std::ostream& o, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>(v >> (8 * i));
    o.write(b, 8);
  }
  static uint32_t read_u32(std::istream& in, const std::string& path) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError(path + ": truncated embedding cache");
    return uint32_t{b[0]} | (uint32_t{b[1]} << 8) | (uint32_t{b[2]} << 16) |
           (uint32_t{b[3]} << 24);
  }
  static uint64_t read_u64(std::istream& in, const std::string& path) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw DataError(path + ": truncated embedding cache");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t{b[i]} << (8 * i);
    return v;
  }

  size_t dim_ = 0;
  bool lowercase_lookup_ = true;
  std::vector<std::string> tokens_;  // insertion order, for serialization
  std::vector<double> data_;         // tokens_.size() * dim_
  std::vector<double> norms_sq_;
  std::unordered_map<std::string, size_t> index_;
  std::string digest_;
};

// Similarity of two (token, aspect-flag) pairs: cosine of the (possibly
// flag-augmented) vectors. If either token has no usable vector, falls back
// to string match on the original surface forms including flags: 1.0 when
// identical, 0.0 otherwise.
inline double token_sim(const EmbeddingTable& table, std::string_view t1,
                        bool aspect1, std::string_view t2, bool aspect2,
                        bool aspect_aware) {
  if (t1 == t2 && (!aspect_aware || aspect1 == aspect2)) return 1.0;
  const double* v1 = table.find(t1);
  const double* v2 = table.find(t2);
  if (v1 == nullptr || v2 == nullptr) return 0.0;
  std::span<const double> s1{v1, table.dim()}, s2{v2, table.dim()};
  if (!aspect_aware) return cosine(s1, s2);
  auto a1 = augment_aspect_flag(s1, aspect1);
  auto a2 = augment_aspect_flag(s2, aspect2);
  return cosine(a1, a2);
}

inline double token_sim(const EmbeddingTable& table, std::string_view t1,
                        std::string_view t2) {
  return token_sim(table, t1, false, t2, false, false);
}

// SimFn over an embedding table; the only shipped kind is cosine.
class TokenSimilarity {
 public:
  TokenSimilarity(const EmbeddingTable& table, bool aspect_aware = false)
      : table_(&table), aspect_aware_(aspect_aware) {}

  double operator()(std::string_view t1, bool a1, std::string_view t2,
                    bool a2) const {
    return token_sim(*table_, t1, a1, t2, a2, aspect_aware_);
  }
  double operator()(std::string_view t1, std::string_view t2) const {
    return (*this)(t1, false, t2, false);
  }

  const EmbeddingTable& table() const { return *table_; }
  bool aspect_aware() const { return aspect_aware_; }

 private:
  const EmbeddingTable* table_;
  bool aspect_aware_;
};

}  // namespace anygram
