#pragma once

// Sequence, pair-dataset and embedding file I/O.
//
//   FASTA            records with header "id description"
//   Pair JSONL       {"anchor","positive","hard_negative"|null,"group"}
//   Scored JSONL     {"seq1","seq2","score","assay_id"}
//   Grouped JSONL    {"id","sequence","group","sort_key"}
//   PEMB1            binary embedding matrix, see write_embeddings()

#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "protsent/common.hpp"

namespace protsent {

// ---------------------------------------------------------------------------
// Alphabet
// ---------------------------------------------------------------------------

/// The 20 standard residues in HMMER's canonical (alphabetical) order.
inline constexpr std::string_view kAminoAcids = "ACDEFGHIKLMNPQRSTVWY";
inline constexpr std::size_t kNumAminoAcids = 20;

/// Index of `c` in kAminoAcids, or -1 for anything else (including 'X').
inline int residue_index(char c) {
  static const std::array<int, 256> table = [] {
    std::array<int, 256> t{};
    t.fill(-1);
    for (std::size_t i = 0; i < kAminoAcids.size(); ++i) {
      t[static_cast<unsigned char>(kAminoAcids[i])] = static_cast<int>(i);
    }
    return t;
  }();
  return table[static_cast<unsigned char>(c)];
}

/// Uppercases `s` and checks every residue against the 20 standard amino
/// acids, plus 'X' when `allow_x` is set.
inline std::string validate_sequence(std::string_view s, bool allow_x) {
  std::string out(s);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(out[i])));
    out[i] = c;
    if (residue_index(c) < 0 && !(allow_x && c == 'X')) throw ValidationError(i, s[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct SequenceRecord {
  std::string id;
  std::string sequence;
  std::optional<std::string> group_id;
  std::map<std::string, std::string> meta;

  bool operator==(const SequenceRecord&) const = default;
};

/// Parses FASTA. The first header token is the id and the remainder of the
/// header (if any) is stored in meta["desc"]. Sequences are uppercased,
/// multi-line sequences concatenated and a terminal '*' stripped.
inline std::vector<SequenceRecord> parse_fasta(std::istream& in) {
  std::vector<SequenceRecord> records;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  std::size_t header_line = 0;

  auto finish = [&]() {
    if (records.empty()) return;
    auto& rec = records.back();
    if (!rec.sequence.empty() && rec.sequence.back() == '*') rec.sequence.pop_back();
    if (rec.sequence.empty()) throw ParseError(header_line, "record '" + rec.id + "' has no sequence");
    try {
      rec.sequence = validate_sequence(rec.sequence, true);
    } catch (const ValidationError& e) {
      throw ParseError(header_line, "record '" + rec.id + "': " + e.what());
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '>') {
      finish();
      header_line = lineno;
      const std::string header = line.substr(1);
      const auto ws = header.find_first_of(" \t");
      SequenceRecord rec;
      rec.id = header.substr(0, ws);
      if (rec.id.empty()) throw ParseError(lineno, "empty record id");
      if (ws != std::string::npos) {
        const auto start = header.find_first_not_of(" \t", ws);
        if (start != std::string::npos) rec.meta["desc"] = header.substr(start);
      }
      if (!seen.insert(rec.id).second) throw ParseError(lineno, "duplicate id '" + rec.id + "'");
      records.push_back(std::move(rec));
    } else {
      if (records.empty()) throw ParseError(lineno, "sequence data before the first header");
      for (char c : line) {
        if (c == ' ' || c == '\t') continue;
        records.back().sequence.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
      }
    }
  }
  finish();
  return records;
}

inline std::vector<SequenceRecord> parse_fasta(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_fasta(in);
}

/// Writes records as FASTA; `wrap` = 0 keeps each sequence on one line.
inline void write_fasta(std::ostream& out, const std::vector<SequenceRecord>& records,
                        std::size_t wrap = 0) {
  for (const auto& rec : records) {
    out << '>' << rec.id;
    if (auto it = rec.meta.find("desc"); it != rec.meta.end() && !it->second.empty()) out << ' ' << it->second;
    out << '\n';
    if (wrap == 0) {
      out << rec.sequence << '\n';
    } else {
      for (std::size_t i = 0; i < rec.sequence.size(); i += wrap) out << rec.sequence.substr(i, wrap) << '\n';
    }
  }
}

/// Extracts whitespace-separated `key=value` tokens from a FASTA description.
inline std::map<std::string, std::string> parse_header_tags(std::string_view desc) {
  std::map<std::string, std::string> tags;
  std::istringstream in{std::string(desc)};
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq != std::string::npos && eq > 0) tags[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return tags;
}

// ---------------------------------------------------------------------------
// Embeddings (PEMB1)
// ---------------------------------------------------------------------------

struct EmbeddingSet {
  std::vector<std::string> ids;
  Matrix matrix;  // n x dim
  bool normalized = false;

  std::size_t size() const { return ids.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(matrix.cols()); }

  std::unordered_map<std::string, std::size_t> index() const {
    std::unordered_map<std::string, std::size_t> m;
    m.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) m.emplace(ids[i], i);
    return m;
  }
};

class PembError : public Error {
public:
  enum class Code { bad_magic, unsupported_version, unsupported_dtype, truncated, id_count_mismatch, duplicate_id, id_too_long, norm_mismatch, io };

  PembError(Code code, const std::string& what) : Error("PEMB1: " + what), code_(code) {}
  Code code() const noexcept { return code_; }

private:
  Code code_;
};

namespace pemb {

inline constexpr std::array<char, 6> kMagic = {'P', 'E', 'M', 'B', '1', '\0'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;

template <typename T>
void put_le(std::string& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) buf.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace pemb

/// Serializes to the PEMB1 layout:
///
///   "PEMB1\0" | u32 version=1 | u32 dim | u64 count | u8 normalized | u8 dtype=0
///   | count x (u16 id length, UTF-8 id bytes)
///   | count x dim little-endian f32, row-major
inline std::string encode_embeddings(const EmbeddingSet& set) {
  if (static_cast<std::size_t>(set.matrix.rows()) != set.ids.size()) {
    throw PembError(PembError::Code::id_count_mismatch, "id count does not match matrix rows");
  }
  std::unordered_set<std::string_view> seen;
  std::string buf(pemb::kMagic.begin(), pemb::kMagic.end());
  pemb::put_le<std::uint32_t>(buf, pemb::kVersion);
  pemb::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(set.dim()));
  pemb::put_le<std::uint64_t>(buf, set.ids.size());
  buf.push_back(static_cast<char>(set.normalized ? 1 : 0));
  buf.push_back(static_cast<char>(pemb::kDtypeF32));
  for (const auto& id : set.ids) {
    if (id.size() > 0xFFFF) throw PembError(PembError::Code::id_too_long, "id longer than 65535 bytes");
    if (!seen.insert(id).second) throw PembError(PembError::Code::duplicate_id, "duplicate id '" + id + "'");
    pemb::put_le<std::uint16_t>(buf, static_cast<std::uint16_t>(id.size()));
    buf += id;
  }
  buf.reserve(buf.size() + 4 * set.ids.size() * set.dim());
  for (Eigen::Index r = 0; r < set.matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < set.matrix.cols(); ++c) {
      pemb::put_le<std::uint32_t>(buf, std::bit_cast<std::uint32_t>(static_cast<float>(set.matrix(r, c))));
    }
  }
  return buf;
}

inline EmbeddingSet decode_embeddings(std::string_view bytes) {
  using Code = PembError::Code;
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  constexpr std::size_t kHeader = 6 + 4 + 4 + 8 + 1 + 1;
  if (n < 6 || std::memcmp(p, pemb::kMagic.data(), 6) != 0) throw PembError(Code::bad_magic, "bad magic");
  if (n < kHeader) throw PembError(Code::truncated, "truncated header");
  const auto version = pemb::get_le<std::uint32_t>(p + 6);
  if (version != pemb::kVersion) throw PembError(Code::unsupported_version, "unsupported version " + std::to_string(version));
  const auto dim = pemb::get_le<std::uint32_t>(p + 10);
  const auto count = pemb::get_le<std::uint64_t>(p + 14);
  const std::uint8_t normalized = p[22];
  const std::uint8_t dtype = p[23];
  if (dtype != pemb::kDtypeF32) throw PembError(Code::unsupported_dtype, "unsupported dtype " + std::to_string(dtype));
  if (normalized > 1) throw PembError(Code::bad_magic, "invalid normalized flag at byte 22");

  std::size_t off = kHeader;
  EmbeddingSet set;
  set.normalized = normalized == 1;
  // Each id needs at least its 2-byte length prefix.
  if (count > (n - off) / 2) throw PembError(Code::truncated, "truncated id block (byte " + std::to_string(n) + ")");
  set.ids.reserve(count);
  std::unordered_set<std::string_view> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    if (off + 2 > n) throw PembError(Code::truncated, "truncated id block at byte " + std::to_string(off));
    const auto len = pemb::get_le<std::uint16_t>(p + off);
    off += 2;
    if (off + len > n) throw PembError(Code::truncated, "truncated id at byte " + std::to_string(off));
    set.ids.emplace_back(bytes.substr(off, len));
    off += len;
  }
  for (const auto& id : set.ids) {
    if (!seen.insert(id).second) throw PembError(Code::duplicate_id, "duplicate id '" + id + "'");
  }
  const std::size_t payload = static_cast<std::size_t>(count) * dim * 4;
  if (n - off < payload) throw PembError(Code::truncated, "truncated data block at byte " + std::to_string(n));
  if (n - off > payload) {
    throw PembError(Code::id_count_mismatch, "data block size " + std::to_string(n - off) +
                                                 " does not match count x dim (" + std::to_string(payload) + ")");
  }
  set.matrix.resize(static_cast<Eigen::Index>(count), dim);
  for (std::uint64_t r = 0; r < count; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) {
      set.matrix(static_cast<Eigen::Index>(r), c) = std::bit_cast<float>(pemb::get_le<std::uint32_t>(p + off));
      off += 4;
    }
  }
  if (set.normalized) {
    for (Eigen::Index r = 0; r < set.matrix.rows(); ++r) {
      if (std::abs(set.matrix.row(r).norm() - 1.0) > 1e-5) {
        throw PembError(Code::norm_mismatch, "row " + std::to_string(r) + " is not unit norm but the normalized flag is set");
      }
    }
  }
  return set;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path + "'");
}

inline void write_embeddings(const EmbeddingSet& set, const std::string& path) {
  write_file_bytes(path, encode_embeddings(set));
}

inline EmbeddingSet read_embeddings(const std::string& path) {
  std::string bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const Error& e) {
    throw PembError(PembError::Code::io, e.what());
  }
  return decode_embeddings(bytes);
}

// ---------------------------------------------------------------------------
// Pair and scored-pair JSONL
// ---------------------------------------------------------------------------

struct PairExample {
  std::string anchor;
  std::string positive;
  std::optional<std::string> hard_negative;
  std::string group;
  nlohmann::json meta = nlohmann::json::object();  // unknown keys, preserved

  bool operator==(const PairExample&) const = default;
};

struct ScoredPair {
  std::string seq1;
  std::string seq2;
  double score = 0.0;
  std::string assay_id;
  nlohmann::json meta = nlohmann::json::object();

  bool operator==(const ScoredPair&) const = default;
};

class SchemaError : public ParseError {
public:
  using ParseError::ParseError;
};

namespace detail {

inline std::string required_string(const nlohmann::json& obj, const char* key, std::size_t line, bool allow_empty = false) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) throw SchemaError(line, std::string("missing or non-string key '") + key + "'");
  std::string v = it->get<std::string>();
  if (v.empty() && !allow_empty) throw SchemaError(line, std::string("empty value for '") + key + "'");
  return v;
}

inline nlohmann::json parse_json_line(const std::string& line, std::size_t lineno) {
  try {
    auto obj = nlohmann::json::parse(line);
    if (!obj.is_object()) throw SchemaError(lineno, "expected a JSON object");
    return obj;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(lineno, std::string("invalid JSON: ") + e.what());
  }
}

inline nlohmann::json extras(const nlohmann::json& obj, std::initializer_list<const char*> known) {
  nlohmann::json meta = nlohmann::json::object();
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool is_known = false;
    for (const char* k : known) is_known |= it.key() == k;
    if (!is_known) meta[it.key()] = it.value();
  }
  return meta;
}

}  // namespace detail

inline PairExample decode_pair(const nlohmann::json& obj, std::size_t line) {
  PairExample p;
  p.anchor = detail::required_string(obj, "anchor", line);
  p.positive = detail::required_string(obj, "positive", line);
  if (auto it = obj.find("hard_negative"); it != obj.end() && !it->is_null()) {
    if (!it->is_string() || it->get<std::string>().empty()) throw SchemaError(line, "hard_negative must be null or a non-empty string");
    p.hard_negative = it->get<std::string>();
    if (*p.hard_negative == p.anchor) throw SchemaError(line, "hard_negative equals anchor");
  }
  p.group = detail::required_string(obj, "group", line, true);
  p.meta = detail::extras(obj, {"anchor", "positive", "hard_negative", "group"});
  return p;
}

inline std::string encode_pair(const PairExample& p) {
  nlohmann::ordered_json obj;
  obj["anchor"] = p.anchor;
  obj["positive"] = p.positive;
  obj["hard_negative"] = p.hard_negative ? nlohmann::ordered_json(*p.hard_negative) : nlohmann::ordered_json(nullptr);
  obj["group"] = p.group;
  for (auto it = p.meta.begin(); it != p.meta.end(); ++it) obj[it.key()] = it.value();
  return obj.dump();
}

inline ScoredPair decode_scored(const nlohmann::json& obj, std::size_t line) {
  ScoredPair s;
  s.seq1 = detail::required_string(obj, "seq1", line);
  s.seq2 = detail::required_string(obj, "seq2", line);
  auto it = obj.find("score");
  if (it == obj.end() || !it->is_number()) throw SchemaError(line, "missing or non-numeric 'score'");
  s.score = it->get<double>();
  if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
    throw SchemaError(line, "score " + format_double(s.score) + " outside [0, 1]");
  }
  s.assay_id = detail::required_string(obj, "assay_id", line, true);
  s.meta = detail::extras(obj, {"seq1", "seq2", "score", "assay_id"});
  return s;
}

inline std::string encode_scored(const ScoredPair& s) {
  nlohmann::ordered_json obj;
  obj["seq1"] = s.seq1;
  obj["seq2"] = s.seq2;
  obj["score"] = s.score;
  obj["assay_id"] = s.assay_id;
  for (auto it = s.meta.begin(); it != s.meta.end(); ++it) obj[it.key()] = it.value();
  return obj.dump();
}

/// Streaming reader over one JSON object per line. Blank lines are skipped.
template <typename T, T (*Decode)(const nlohmann::json&, std::size_t)>
class JsonlReader {
public:
  explicit JsonlReader(std::istream& in) : in_(&in) {}

  std::optional<T> next() {
    std::string line;
    while (std::getline(*in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      return Decode(detail::parse_json_line(line, line_), line_);
    }
    return std::nullopt;
  }

  std::size_t line() const noexcept { return line_; }

private:
  std::istream* in_;
  std::size_t line_ = 0;
};

using PairReader = JsonlReader<PairExample, &decode_pair>;
using ScoredReader = JsonlReader<ScoredPair, &decode_scored>;

inline std::vector<PairExample> read_pairs(std::istream& in) {
  PairReader reader(in);
  std::vector<PairExample> out;
  while (auto p = reader.next()) out.push_back(std::move(*p));
  return out;
}

inline std::vector<ScoredPair> read_scored(std::istream& in) {
  ScoredReader reader(in);
  std::vector<ScoredPair> out;
  while (auto s = reader.next()) out.push_back(std::move(*s));
  return out;
}

inline void write_pairs(std::ostream& out, const std::vector<PairExample>& pairs) {
  for (const auto& p : pairs) out << encode_pair(p) << '\n';
}

inline void write_scored(std::ostream& out, const std::vector<ScoredPair>& rows) {
  for (const auto& s : rows) out << encode_scored(s) << '\n';
}

template <typename Fn>
auto with_input_file(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return fn(in);
}

inline std::vector<PairExample> read_pairs_file(const std::string& path) {
  return with_input_file(path, [](std::istream& in) { return read_pairs(in); });
}

inline std::vector<ScoredPair> read_scored_file(const std::string& path) {
  return with_input_file(path, [](std::istream& in) { return read_scored(in); });
}

inline std::vector<SequenceRecord> read_fasta_file(const std::string& path) {
  return with_input_file(path, [](std::istream& in) { return parse_fasta(in); });
}

// ---------------------------------------------------------------------------
// Grouped record JSONL (sorted group-labelled streams)
// ---------------------------------------------------------------------------

inline std::string encode_grouped(const SequenceRecord& rec) {
  nlohmann::ordered_json obj;
  obj["id"] = rec.id;
  obj["sequence"] = rec.sequence;
  obj["group"] = rec.group_id.value_or("");
  auto it = rec.meta.find("sort_key");
  obj["sort_key"] = it == rec.meta.end() ? rec.group_id.value_or("") : it->second;
  return obj.dump();
}

inline std::vector<SequenceRecord> read_grouped(std::istream& in) {
  std::vector<SequenceRecord> out;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto obj = detail::parse_json_line(line, lineno);
    SequenceRecord rec;
    rec.id = detail::required_string(obj, "id", lineno);
    try {
      rec.sequence = validate_sequence(detail::required_string(obj, "sequence", lineno), true);
    } catch (const ValidationError& e) {
      throw SchemaError(lineno, e.what());
    }
    rec.group_id = detail::required_string(obj, "group", lineno);
    if (auto it = obj.find("sort_key"); it != obj.end() && it->is_string()) rec.meta["sort_key"] = it->get<std::string>();
    if (!seen.insert(rec.id).second) throw SchemaError(lineno, "duplicate id '" + rec.id + "'");
    out.push_back(std::move(rec));
  }
  return out;
}

inline void write_grouped(std::ostream& out, const std::vector<SequenceRecord>& records) {
  for (const auto& r : records) out << encode_grouped(r) << '\n';
}

// ---------------------------------------------------------------------------
// Sidecar resolution
// ---------------------------------------------------------------------------

/// Maps pair-file fields to embedding rows. A field is first looked up as an
/// embedding id; failing that, as a sequence registered from a sidecar FASTA.
class EmbeddingResolver {
public:
  explicit EmbeddingResolver(const EmbeddingSet& set) : by_id_(set.index()) {}

  void add_sidecar(const std::vector<SequenceRecord>& records) {
    for (const auto& r : records) {
      if (auto it = by_id_.find(r.id); it != by_id_.end()) by_sequence_.emplace(r.sequence, it->second);
    }
  }

  std::optional<std::size_t> find(const std::string& key) const {
    if (auto it = by_id_.find(key); it != by_id_.end()) return it->second;
    if (auto it = by_sequence_.find(key); it != by_sequence_.end()) return it->second;
    return std::nullopt;
  }

  std::size_t resolve(const std::string& key) const {
    if (auto r = find(key)) return *r;
    throw Error("no embedding for '" + (key.size() > 40 ? key.substr(0, 40) + "..." : key) + "'");
  }

private:
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> by_sequence_;
};

}  // namespace protsent
