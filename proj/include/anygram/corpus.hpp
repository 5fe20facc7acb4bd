#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "anygram/errors.hpp"

namespace anygram {

// One classification instance: a pre-tokenized sentence with an optional
// class label and the token positions of its aspect term(s). Immutable after
// load; safe to share across workers.
struct Sentence {
  std::string id;
  std::vector<std::string> tokens;
  std::optional<std::string> label;
  std::vector<uint32_t> aspect_indices;  // sorted, unique, each < tokens.size()

  bool is_aspect(size_t pos) const {
    return std::binary_search(aspect_indices.begin(), aspect_indices.end(),
                              static_cast<uint32_t>(pos));
  }

  void validate() const {
    if (id.empty()) throw DataError("sentence id must be non-empty");
    if (tokens.empty())
      throw DataError("sentence '" + id + "': tokens must be non-empty");
    for (const auto& t : tokens)
      if (t.empty())
        throw DataError("sentence '" + id + "': empty token");
    for (uint32_t a : aspect_indices)
      if (a >= tokens.size())
        throw DataError("sentence '" + id + "': aspect index " +
                        std::to_string(a) + " out of range (len " +
                        std::to_string(tokens.size()) + ")");
  }
};

inline bool operator==(const Sentence& a, const Sentence& b) {
  return a.id == b.id && a.tokens == b.tokens && a.label == b.label &&
         a.aspect_indices == b.aspect_indices;
}

// Appends `suffix` to each token at an aspect index; everything else is a
// plain copy. Token count never changes.
inline Sentence mark_aspect_suffix(const Sentence& s, const std::string& suffix) {
  if (suffix.empty()) throw UsageError("aspect suffix must be non-empty");
  Sentence out = s;
  for (uint32_t a : s.aspect_indices) out.tokens[a] += suffix;
  return out;
}

struct Corpus {
  std::vector<Sentence> sentences;      // file order
  std::vector<std::string> label_set;   // distinct labels, first-appearance order

  size_t size() const { return sentences.size(); }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(sentences.size());
    for (const auto& s : sentences) out.push_back(s.id);
    return out;
  }

  void append(Sentence s) {
    s.validate();
    if (s.label && std::find(label_set.begin(), label_set.end(), *s.label) ==
                       label_set.end())
      label_set.push_back(*s.label);
    sentences.push_back(std::move(s));
  }
};

inline bool operator==(const Corpus& a, const Corpus& b) {
  return a.sentences == b.sentences && a.label_set == b.label_set;
}

enum class CorpusFormat { Jsonl, Tsv };

inline CorpusFormat corpus_format_from_path(const std::string& path) {
  return path.size() >= 4 && path.compare(path.size() - 4, 4, ".tsv") == 0
             ? CorpusFormat::Tsv
             : CorpusFormat::Jsonl;
}

namespace detail {

inline std::vector<uint32_t> normalize_aspects(std::vector<uint32_t> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

inline Sentence parse_jsonl_line(const std::string& line, const std::string& where) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": " + e.what());
  }
  if (!j.is_object()) throw DataError(where + ": expected a JSON object");
  Sentence s;
  if (!j.contains("id") || !j["id"].is_string())
    throw DataError(where + ": missing or non-string 'id'");
  s.id = j["id"].get<std::string>();
  if (!j.contains("tokens") || !j["tokens"].is_array())
    throw DataError(where + ": missing or non-array 'tokens'");
  for (const auto& t : j["tokens"]) {
    if (!t.is_string()) throw DataError(where + ": non-string token");
    s.tokens.push_back(t.get<std::string>());
  }
  if (j.contains("label") && !j["label"].is_null()) {
    if (!j["label"].is_string()) throw DataError(where + ": non-string 'label'");
    s.label = j["label"].get<std::string>();
  }
  if (j.contains("aspect") && !j["aspect"].is_null()) {
    if (!j["aspect"].is_array()) throw DataError(where + ": non-array 'aspect'");
    std::vector<uint32_t> asp;
    for (const auto& a : j["aspect"]) {
      if (!a.is_number_integer() || a.get<int64_t>() < 0)
        throw DataError(where + ": aspect indices must be non-negative integers");
      asp.push_back(static_cast<uint32_t>(a.get<int64_t>()));
    }
    s.aspect_indices = normalize_aspects(std::move(asp));
  }
  try {
    s.validate();
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  }
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// TSV columns: id, space-joined tokens, label, comma-joined aspect indices.
// The last two are optional; empty fields count as absent.
inline Sentence parse_tsv_line(const std::string& line, const std::string& where) {
  auto fields = split(line, '\t');
  if (fields.size() < 2 || fields.size() > 4)
    throw DataError(where + ": expected 2-4 tab-separated fields, got " +
                    std::to_string(fields.size()));
  Sentence s;
  s.id = fields[0];
  for (const auto& tok : split(fields[1], ' '))
    if (!tok.empty()) s.tokens.push_back(tok);
  if (fields.size() >= 3 && !fields[2].empty()) s.label = fields[2];
  if (fields.size() == 4 && !fields[3].empty()) {
    std::vector<uint32_t> asp;
    for (const auto& part : split(fields[3], ',')) {
      size_t pos = 0;
      unsigned long v = 0;
      try {
        v = std::stoul(part, &pos);
      } catch (const std::exception&) {
        throw DataError(where + ": bad aspect index '" + part + "'");
      }
      if (pos != part.size())
        throw DataError(where + ": bad aspect index '" + part + "'");
      asp.push_back(static_cast<uint32_t>(v));
    }
    s.aspect_indices = normalize_aspects(std::move(asp));
  }
  try {
    s.validate();
  } catch (const DataError& e) {
    throw DataError(where + ": " + e.what());
  }
  return s;
}

}  // namespace detail

// Reads a corpus, preserving record order. Blank lines are skipped; duplicate
// ids are rejected. Errors carry the offending line number.
inline Corpus load_corpus(std::istream& in, CorpusFormat format,
                          const std::string& name = "<stream>") {
  Corpus corpus;
  std::unordered_set<std::string> seen;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = name + ":" + std::to_string(line_no);
    Sentence s = format == CorpusFormat::Jsonl
                     ? detail::parse_jsonl_line(line, where)
                     : detail::parse_tsv_line(line, where);
    if (!seen.insert(s.id).second)
      throw DataError(where + ": duplicate sentence id '" + s.id + "'");
    corpus.append(std::move(s));
  }
  return corpus;
}

inline Corpus load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return load_corpus(in, format, path);
}

inline Corpus load_corpus(const std::string& path) {
  return load_corpus(path, corpus_format_from_path(path));
}

inline void save_corpus(const Corpus& corpus, std::ostream& out, CorpusFormat format) {
  if (format == CorpusFormat::Jsonl) {
    for (const auto& s : corpus.sentences) {
      nlohmann::ordered_json j;
      j["id"] = s.id;
      j["tokens"] = s.tokens;
      if (s.label) j["label"] = *s.label;
      if (!s.aspect_indices.empty()) j["aspect"] = s.aspect_indices;
      out << j.dump() << "\n";
    }
    return;
  }
  for (const auto& s : corpus.sentences) {
    for (const auto& t : s.tokens)
      if (t.find('\t') != std::string::npos || t.find(' ') != std::string::npos)
        throw DataError("sentence '" + s.id + "': token '" + t +
                        "' not representable in TSV");
    out << s.id << '\t';
    for (size_t i = 0; i < s.tokens.size(); ++i) {
      if (i) out << ' ';
      out << s.tokens[i];
    }
    if (s.label || !s.aspect_indices.empty()) out << '\t' << s.label.value_or("");
    if (!s.aspect_indices.empty()) {
      out << '\t';
      for (size_t i = 0; i < s.aspect_indices.size(); ++i) {
        if (i) out << ',';
        out << s.aspect_indices[i];
      }
    }
    out << '\n';
  }
}

inline void save_corpus(const Corpus& corpus, const std::string& path,
                        CorpusFormat format) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path);
  save_corpus(corpus, out, format);
}

}  // namespace anygram
