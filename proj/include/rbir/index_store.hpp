#pragma once

#include <array>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <unordered_set>
#include <vector>

#include "rbir/error.hpp"
#include "rbir/interest.hpp"
#include "rbir/signature.hpp"
#include "rbir/stree.hpp"

namespace rbir {

inline constexpr std::array<char, 4> signature_magic{'R', 'B', 'I', 'R'};
inline constexpr std::array<char, 4> tree_magic{'R', 'B', 'S', 'T'};
inline constexpr std::uint16_t signature_file_version = 1;
inline constexpr std::uint16_t tree_file_version = 1;
inline constexpr std::size_t signature_header_size = 4 + 2 + 2 + 2 + 8;

struct SignatureRecord {
  std::uint64_t oid = 0;
  BinarySignature sig;

  friend bool operator==(const SignatureRecord&, const SignatureRecord&) = default;
};

struct SignatureFile {
  std::uint16_t version = signature_file_version;
  int blocks = 0;
  int bits = 0;
  std::vector<SignatureRecord> records;
};

/// Settings an index was built with; queries must reuse them.
struct IndexMeta {
  std::uint64_t palette_hash = 0;
  int image_size = 256;
  DetectorParams detector;
  BeamMode beam = BeamMode::all;

  friend bool operator==(const IndexMeta&, const IndexMeta&) = default;
};

namespace detail {

class ByteWriter {
 public:
  void raw(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void magic(const std::array<char, 4>& m) {
    for (char c : m) out_.push_back(static_cast<std::uint8_t>(c));
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { be(v, 2); }
  void u32(std::uint32_t v) { be(v, 4); }
  void u64(std::uint64_t v) { be(v, 8); }
  void f64(double v) { be(std::bit_cast<std::uint64_t>(v), 8); }
  const std::vector<std::uint8_t>& bytes() const noexcept { return out_; }

 private:
  void be(std::uint64_t v, int n) {
    for (int s = 8 * (n - 1); s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  }
  std::vector<std::uint8_t> out_;
};

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> b, std::string what) : b_(b), what_(std::move(what)) {}

  std::span<const std::uint8_t> raw(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  bool magic(const std::array<char, 4>& m) {
    if (b_.size() - pos_ < 4) return false;
    for (std::size_t i = 0; i < 4; ++i)
      if (b_[pos_ + i] != static_cast<std::uint8_t>(m[i])) return false;
    pos_ += 4;
    return true;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(be(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(be(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(be(4)); }
  std::uint64_t u64() { return be(8); }
  double f64() { return std::bit_cast<double>(be(8)); }
  std::size_t remaining() const noexcept { return b_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) fail(Errc::truncated, what_ + ": unexpected end of file");
  }
  std::uint64_t be(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v = (v << 8) | b_[pos_++];
    return v;
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
  std::string what_;
};

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(Errc::io, "read failed for " + path.string());
  return buf;
}

/// Writes to a sibling temporary and renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(Errc::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(Errc::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace detail

/// "RBIR" | version u16 | n u16 | m u16 | count u64 | count x (oid u64, ceil(n*m/8) bytes), big-endian.
inline std::vector<std::uint8_t> encode_signature_file(int blocks, int bits, std::span<const SignatureRecord> records) {
  BinarySignature probe(blocks, bits);
  detail::ByteWriter w;
  w.magic(signature_magic);
  w.u16(signature_file_version);
  w.u16(static_cast<std::uint16_t>(blocks));
  w.u16(static_cast<std::uint16_t>(bits));
  w.u64(records.size());
  std::unordered_set<std::uint64_t> seen;
  for (const auto& r : records) {
    if (r.sig.blocks() != blocks || r.sig.bits() != bits) fail(Errc::shape_mismatch, "record signature shape mismatch");
    if (!seen.insert(r.oid).second) fail(Errc::duplicate_oid, "duplicate oid " + std::to_string(r.oid));
    w.u64(r.oid);
    w.raw(r.sig.bytes());
  }
  return w.bytes();
}

inline void write_signature_file(const std::filesystem::path& path, int blocks, int bits,
                                 std::span<const SignatureRecord> records) {
  detail::write_file_atomic(path, encode_signature_file(blocks, bits, records));
}

inline SignatureFile decode_signature_file(std::span<const std::uint8_t> bytes, const std::string& origin) {
  detail::ByteReader r(bytes, origin);
  if (!r.magic(signature_magic)) fail(Errc::corrupt_header, origin + ": bad signature file magic");
  SignatureFile f;
  f.version = r.u16();
  if (f.version != signature_file_version)
    fail(Errc::version_mismatch, origin + ": unsupported signature file version " + std::to_string(f.version));
  f.blocks = r.u16();
  f.bits = r.u16();
  if (f.blocks < 1 || f.bits < 2 || f.bits > BinarySignature::max_bits)
    fail(Errc::corrupt_header, origin + ": invalid signature shape");
  const std::uint64_t count = r.u64();
  const std::size_t record_size = 8 + BinarySignature::byte_size(f.blocks, f.bits);
  if (count > r.remaining() / record_size)
    fail(Errc::truncated, origin + ": header announces " + std::to_string(count) + " records, payload holds " +
                              std::to_string(r.remaining() / record_size));
  f.records.reserve(count);
  std::unordered_set<std::uint64_t> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    SignatureRecord rec;
    rec.oid = r.u64();
    const auto raw = r.raw(record_size - 8);
    try {
      rec.sig = BinarySignature::from_bytes(f.blocks, f.bits, raw);
    } catch (const Error& e) {
      fail(Errc::corrupt_header, origin + ": record " + std::to_string(i) + ": " + e.what());
    }
    if (!seen.insert(rec.oid).second) fail(Errc::corrupt_header, origin + ": duplicate oid in signature file");
    f.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) fail(Errc::corrupt_header, origin + ": trailing bytes after last record");
  return f;
}

inline SignatureFile read_signature_file(const std::filesystem::path& path) {
  return decode_signature_file(detail::read_file(path), path.string());
}

/// "RBST" | version | shape | bounds | meta | counts | nodes in pre-order.
/// Node: kind u8 (0 leaf, 1 internal) | entries u16 | per entry: signature bytes [+ oid u64 in leaves].
/// Children of an internal node follow it in entry order.
inline std::vector<std::uint8_t> encode_tree(const STree& tree, const IndexMeta& meta) {
  detail::ByteWriter w;
  w.magic(tree_magic);
  w.u16(tree_file_version);
  w.u16(static_cast<std::uint16_t>(tree.blocks()));
  w.u16(static_cast<std::uint16_t>(tree.bits()));
  w.u16(static_cast<std::uint16_t>(tree.config().node_min));
  w.u16(static_cast<std::uint16_t>(tree.config().node_max));
  w.u64(meta.palette_hash);
  w.u32(static_cast<std::uint32_t>(meta.image_size));
  w.u8(meta.beam == BeamMode::all ? 0 : 1);
  const auto& d = meta.detector;
  w.f64(d.theta);
  w.f64(d.alpha);
  w.f64(d.sigma_ratio);
  w.f64(d.r_min);
  w.f64(d.merge_distance);
  w.u32(static_cast<std::uint32_t>(d.max_regions));
  w.u16(static_cast<std::uint16_t>(d.sigma_i_levels.size()));
  for (double s : d.sigma_i_levels) w.f64(s);
  w.u64(tree.size());
  w.u64(tree.node_count());

  std::vector<STree::NodeId> stack{tree.root()};
  while (!stack.empty()) {
    const auto id = stack.back();
    stack.pop_back();
    const auto& n = tree.node(id);
    w.u8(n.leaf ? 0 : 1);
    w.u16(static_cast<std::uint16_t>(n.entries.size()));
    for (const auto& e : n.entries) {
      w.raw(e.sig.bytes());
      if (n.leaf) w.u64(e.ref);
    }
    if (!n.leaf)
      for (auto it = n.entries.rbegin(); it != n.entries.rend(); ++it)
        stack.push_back(static_cast<STree::NodeId>(it->ref));
  }
  return w.bytes();
}

struct LoadedTree {
  STree tree;
  IndexMeta meta;
};

inline LoadedTree decode_tree(std::span<const std::uint8_t> bytes, std::shared_ptr<const GroundDistance> distance,
                              const std::string& origin) {
  detail::ByteReader r(bytes, origin);
  if (!r.magic(tree_magic)) fail(Errc::corrupt_header, origin + ": bad tree file magic");
  const auto version = r.u16();
  if (version != tree_file_version)
    fail(Errc::version_mismatch, origin + ": unsupported tree file version " + std::to_string(version));
  const int blocks = r.u16();
  const int bits = r.u16();
  if (blocks < 1 || bits < 2 || bits > BinarySignature::max_bits)
    fail(Errc::corrupt_header, origin + ": invalid signature shape");
  STreeConfig cfg{r.u16(), r.u16()};
  IndexMeta meta;
  meta.palette_hash = r.u64();
  meta.image_size = static_cast<int>(r.u32());
  meta.beam = r.u8() == 0 ? BeamMode::all : BeamMode::single;
  auto& d = meta.detector;
  d.theta = r.f64();
  d.alpha = r.f64();
  d.sigma_ratio = r.f64();
  d.r_min = r.f64();
  d.merge_distance = r.f64();
  d.max_regions = static_cast<int>(r.u32());
  d.sigma_i_levels.resize(r.u16());
  for (auto& s : d.sigma_i_levels) s = r.f64();
  const std::uint64_t sig_count = r.u64();
  const std::uint64_t node_count = r.u64();
  try {
    cfg.validate();
    d.validate();
  } catch (const Error& e) {
    fail(Errc::corrupt_header, origin + ": " + e.what());
  }
  const std::size_t sig_bytes = BinarySignature::byte_size(blocks, bits);
  if (node_count == 0 || node_count > r.remaining() / 3) fail(Errc::corrupt_header, origin + ": implausible node count");

  // Pre-order ids: a node's id is its position in the stream.
  std::vector<STree::Node> nodes;
  nodes.reserve(node_count);
  struct Pending { STree::NodeId parent; std::size_t entry; };
  std::vector<Pending> stack{{STree::no_node, 0}};
  while (!stack.empty()) {
    const Pending slot = stack.back();
    stack.pop_back();
    if (nodes.size() >= node_count) fail(Errc::corrupt_header, origin + ": more nodes than announced");
    const auto id = static_cast<STree::NodeId>(nodes.size());
    STree::Node n;
    const auto kind = r.u8();
    if (kind > 1) fail(Errc::corrupt_header, origin + ": bad node kind");
    n.leaf = kind == 0;
    n.parent = slot.parent;
    const std::size_t cnt = r.u16();
    for (std::size_t k = 0; k < cnt; ++k) {
      STree::Entry e;
      const auto raw = r.raw(sig_bytes);
      try {
        e.sig = BinarySignature::from_bytes(blocks, bits, raw);
      } catch (const Error& err) {
        fail(Errc::corrupt_header, origin + ": " + err.what());
      }
      e.ref = n.leaf ? r.u64() : 0;
      n.entries.push_back(std::move(e));
    }
    if (slot.parent != STree::no_node) nodes[slot.parent].entries[slot.entry].ref = id;
    if (!n.leaf)
      for (std::size_t k = cnt; k-- > 0;) stack.push_back({id, k});
    nodes.push_back(std::move(n));
  }
  if (nodes.size() != node_count) fail(Errc::corrupt_header, origin + ": node count mismatch");
  if (r.remaining() != 0) fail(Errc::corrupt_header, origin + ": trailing bytes after tree");

  if (!distance || distance->size() != static_cast<std::size_t>(blocks))
    fail(Errc::palette_mismatch, origin + ": palette size does not match the tree's block count");
  STree tree = [&] {
    try {
      return STree::assemble(blocks, bits, cfg, std::move(distance), std::move(nodes), 0);
    } catch (const Error& e) {
      fail(Errc::corrupt_header, origin + ": " + e.what());
    }
  }();
  if (tree.size() != sig_count) fail(Errc::corrupt_header, origin + ": signature count mismatch");
  return {std::move(tree), std::move(meta)};
}

inline void save_tree(const std::filesystem::path& path, const STree& tree, const IndexMeta& meta) {
  detail::write_file_atomic(path, encode_tree(tree, meta));
}

inline LoadedTree load_tree(const std::filesystem::path& path, std::shared_ptr<const GroundDistance> distance) {
  return decode_tree(detail::read_file(path), std::move(distance), path.string());
}

struct CatalogEntry {
  std::uint64_t oid = 0;
  std::string path;
  std::string label;

  friend bool operator==(const CatalogEntry&, const CatalogEntry&) = default;
};

/// Tab-separated "oid path label" lines.
inline std::string format_catalog(std::span<const CatalogEntry> rows) {
  std::ostringstream out;
  for (const auto& r : rows) out << r.oid << '\t' << r.path << '\t' << r.label << '\n';
  return out.str();
}

inline void write_catalog(const std::filesystem::path& path, std::span<const CatalogEntry> rows) {
  detail::write_file_atomic(path, format_catalog(rows));
}

inline std::vector<CatalogEntry> read_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open catalog " + path.string());
  std::vector<CatalogEntry> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) fail(Errc::malformed_file, path.string() + ":" + std::to_string(lineno) + ": bad row");
    CatalogEntry e;
    try {
      std::size_t used = 0;
      e.oid = std::stoull(line.substr(0, t1), &used);
      if (used != t1) throw std::invalid_argument("oid");
    } catch (const std::exception&) {
      fail(Errc::malformed_file, path.string() + ":" + std::to_string(lineno) + ": bad oid");
    }
    e.path = line.substr(t1 + 1, t2 - t1 - 1);
    e.label = line.substr(t2 + 1);
    rows.push_back(std::move(e));
  }
  return rows;
}

/// "key<TAB>label" lines, the key being an oid or a corpus-relative path.
inline std::vector<std::pair<std::string, std::string>> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open labels " + path.string());
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(Errc::malformed_file, path.string() + ":" + std::to_string(lineno) + ": bad row");
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

}  // namespace rbir
