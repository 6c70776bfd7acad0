#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "rbir/index_store.hpp"
#include "support.hpp"

using namespace rbir;

namespace {

std::shared_ptr<const GroundDistance> palette_distance() {
  static const auto d = std::make_shared<const GroundDistance>(ground_distance(default_palette()));
  return d;
}

std::vector<SignatureRecord> random_records(testgen::Rng& r, int blocks, int bits, std::size_t n) {
  std::vector<SignatureRecord> recs;
  for (std::size_t i = 0; i < n; ++i)
    recs.push_back({static_cast<std::uint64_t>(r.integer(0, 1 << 30)) * 7919 + i, testgen::signature(r, blocks, bits)});
  return recs;
}

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::io;
}

STree random_tree(std::uint64_t seed, std::size_t n, STreeConfig cfg = {}) {
  testgen::Rng r(seed);
  STree t(32, 10, cfg, palette_distance());
  for (std::size_t i = 0; i < n; ++i) t.insert(testgen::signature(r, 32, 10, 0.08), 100 + 3 * i);
  return t;
}

IndexMeta some_meta() {
  IndexMeta m;
  m.palette_hash = palette_digest(default_palette());
  m.image_size = 64;
  m.detector.theta = 0.02;
  m.detector.sigma_i_levels = {1.0, 2.5};
  m.beam = BeamMode::single;
  return m;
}

std::set<std::uint64_t> oids_of(const SearchResult& r) {
  std::set<std::uint64_t> s;
  for (const auto& c : r.candidates) s.insert(c.oid);
  return s;
}

}  // namespace

TEST(SignatureFile, EmptyIsExactlyTheHeader) {
  const auto bytes = encode_signature_file(32, 10, {});
  EXPECT_EQ(bytes.size(), signature_header_size);
  EXPECT_EQ(signature_header_size, 18u);
  const std::vector<std::uint8_t> expect{'R', 'B', 'I', 'R', 0, 1, 0, 32, 0, 10, 0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(bytes, expect);
}

TEST(SignatureFile, RecordLayout) {
  BinarySignature s(3, 10);
  s.set(0, 1);
  s.set(2, 10);
  const std::vector<SignatureRecord> recs{{0x0102030405060708ULL, s}};
  const auto bytes = encode_signature_file(3, 10, recs);
  ASSERT_EQ(bytes.size(), signature_header_size + 8 + 4);
  const std::vector<std::uint8_t> tail(bytes.begin() + signature_header_size, bytes.end());
  EXPECT_EQ(tail, (std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6, 7, 8, 0x80, 0, 0, 0x04}));
  EXPECT_EQ(bytes[17], 1);  // count
}

TEST(SignatureFile, PayloadIsFortyBytesAtDefaultShape) {
  testgen::Rng r(40);
  const auto recs = random_records(r, 32, 10, 25);
  const auto bytes = encode_signature_file(32, 10, recs);
  EXPECT_EQ(bytes.size(), signature_header_size + 25 * (8 + 40));
}

TEST(SignatureFile, RoundTripThroughDisk) {
  testgen::TempDir dir("sig");
  testgen::Rng r(41);
  for (auto [blocks, bits] : {std::pair{32, 10}, {3, 10}, {7, 3}, {1, 64}}) {
    const auto recs = random_records(r, blocks, bits, 100);
    const auto path = dir / "a.sig";
    write_signature_file(path, blocks, bits, recs);
    const auto f = read_signature_file(path);
    EXPECT_EQ(f.blocks, blocks);
    EXPECT_EQ(f.bits, bits);
    EXPECT_EQ(f.records, recs);
    write_signature_file(dir / "b.sig", f.blocks, f.bits, f.records);
    EXPECT_EQ(detail::read_file(path), detail::read_file(dir / "b.sig"));
  }
}

TEST(SignatureFile, DecodeErrors) {
  testgen::Rng r(42);
  const auto good = encode_signature_file(3, 10, random_records(r, 3, 10, 10));

  auto bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(error_of([&] { decode_signature_file(bad_magic, "t"); }), Errc::corrupt_header);

  auto bad_version = good;
  bad_version[5] = 2;
  EXPECT_EQ(error_of([&] { decode_signature_file(bad_version, "t"); }), Errc::version_mismatch);

  const std::vector<std::uint8_t> nine(good.begin(), good.end() - 12);
  EXPECT_EQ(error_of([&] { decode_signature_file(nine, "t"); }), Errc::truncated);
  const std::vector<std::uint8_t> partial(good.begin(), good.end() - 3);
  EXPECT_EQ(error_of([&] { decode_signature_file(partial, "t"); }), Errc::truncated);
  const std::vector<std::uint8_t> short_header(good.begin(), good.begin() + 12);
  EXPECT_EQ(error_of([&] { decode_signature_file(short_header, "t"); }), Errc::truncated);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(error_of([&] { decode_signature_file(trailing, "t"); }), Errc::corrupt_header);

  auto pad = good;
  pad.back() |= 0x01;
  EXPECT_EQ(error_of([&] { decode_signature_file(pad, "t"); }), Errc::corrupt_header);

  auto shape = good;
  shape[9] = 1;  // m = 1
  EXPECT_EQ(error_of([&] { decode_signature_file(shape, "t"); }), Errc::corrupt_header);

  auto dup = good;
  std::copy(dup.begin() + 18, dup.begin() + 26, dup.begin() + 30);  // second oid := first
  EXPECT_EQ(error_of([&] { decode_signature_file(dup, "t"); }), Errc::corrupt_header);

  EXPECT_EQ(error_of([] { read_signature_file("/nonexistent/x.sig"); }), Errc::io);
}

TEST(SignatureFile, EncodeErrors) {
  std::vector<SignatureRecord> recs{{1, BinarySignature(3, 10)}, {1, BinarySignature(3, 10)}};
  EXPECT_EQ(error_of([&] { encode_signature_file(3, 10, recs); }), Errc::duplicate_oid);
  recs[1] = {2, BinarySignature(3, 9)};
  EXPECT_EQ(error_of([&] { encode_signature_file(3, 10, recs); }), Errc::shape_mismatch);
}

TEST(TreeFile, SaveLoadSaveIsByteIdentical) {
  testgen::TempDir dir("tree");
  for (std::size_t n : {0u, 1u, 9u, 300u}) {
    const auto t = random_tree(43 + n, n);
    const auto meta = some_meta();
    save_tree(dir / "a.tree", t, meta);
    const auto loaded = load_tree(dir / "a.tree", palette_distance());
    EXPECT_TRUE(loaded.tree == t);
    EXPECT_EQ(loaded.meta, meta);
    EXPECT_EQ(loaded.tree.stats().height, t.stats().height);
    EXPECT_EQ(loaded.tree.stats().node_count, t.stats().node_count);
    save_tree(dir / "b.tree", loaded.tree, loaded.meta);
    EXPECT_EQ(detail::read_file(dir / "a.tree"), detail::read_file(dir / "b.tree"));
  }
}

TEST(TreeFile, RoundTripPreservesSearchResults) {
  const auto t = random_tree(44, 1000);
  const auto bytes = encode_tree(t, some_meta());
  const auto loaded = decode_tree(bytes, palette_distance(), "t");
  testgen::Rng r(45);
  for (int q = 0; q < 50; ++q) {
    const auto sig = testgen::signature(r, 32, 10, r.uniform(0.02, 0.1));
    for (auto beam : {BeamMode::all, BeamMode::single}) {
      const auto a = t.search(sig, beam), b = loaded.tree.search(sig, beam);
      EXPECT_EQ(oids_of(a), oids_of(b));
      EXPECT_EQ(a.counters.nodes_visited, b.counters.nodes_visited);
    }
  }
}

TEST(TreeFile, DecodeErrors) {
  const auto t = random_tree(46, 60, {1, 2});
  const auto good = encode_tree(t, some_meta());
  EXPECT_NO_THROW(decode_tree(good, palette_distance(), "t"));

  auto bad_magic = good;
  bad_magic[3] = 'X';
  EXPECT_EQ(error_of([&] { decode_tree(bad_magic, palette_distance(), "t"); }), Errc::corrupt_header);

  auto bad_version = good;
  bad_version[4] = 9;
  EXPECT_EQ(error_of([&] { decode_tree(bad_version, palette_distance(), "t"); }), Errc::version_mismatch);

  const std::vector<std::uint8_t> cut(good.begin(), good.end() - 5);
  EXPECT_EQ(error_of([&] { decode_tree(cut, palette_distance(), "t"); }), Errc::truncated);

  // The same nodes under stricter bounds (node_min 4, node_max 8) violate occupancy.
  auto strict = good;
  strict[10] = 0;
  strict[11] = 4;
  strict[12] = 0;
  strict[13] = 8;
  EXPECT_EQ(error_of([&] { decode_tree(strict, palette_distance(), "t"); }), Errc::corrupt_header);

  auto trailing = good;
  trailing.push_back(0);
  EXPECT_EQ(error_of([&] { decode_tree(trailing, palette_distance(), "t"); }), Errc::corrupt_header);

  auto small = std::make_shared<const GroundDistance>(Matrix(3, 3));
  EXPECT_EQ(error_of([&] { decode_tree(good, small, "t"); }), Errc::palette_mismatch);
}

TEST(TreeFile, FlippedUnionBitIsRejected) {
  const auto t = random_tree(47, 40);
  auto bytes = encode_tree(t, some_meta());
  // The root record's first entry follows the fixed header: clear one of its union bits.
  const auto rebuilt = decode_tree(bytes, palette_distance(), "t");
  ASSERT_FALSE(rebuilt.tree.node(rebuilt.tree.root()).leaf);
  const std::size_t header = 4 + 2 * 5 + 8 + 4 + 1 + 8 * 5 + 4 + 2 + 8 * some_meta().detector.sigma_i_levels.size() + 16;
  const std::size_t first_entry = header + 1 + 2;
  std::size_t byte = first_entry;
  while (bytes[byte] == 0) ++byte;
  const auto lowest = static_cast<std::uint8_t>(bytes[byte] & -bytes[byte]);
  bytes[byte] = static_cast<std::uint8_t>(bytes[byte] & ~lowest);
  EXPECT_EQ(error_of([&] { decode_tree(bytes, palette_distance(), "t"); }), Errc::corrupt_header);
}

TEST(Catalog, RoundTrip) {
  testgen::TempDir dir("cat");
  const std::vector<CatalogEntry> rows{{0, "a/x.ppm", "a"}, {1, "b/y z.ppm", "b c"}, {7, "top.ppm", ""}};
  write_catalog(dir / "c", rows);
  EXPECT_EQ(read_catalog(dir / "c"), rows);
}

TEST(Catalog, Malformed) {
  testgen::TempDir dir("cat");
  std::ofstream(dir / "c") << "0\tpath-without-label\n";
  EXPECT_EQ(error_of([&] { read_catalog(dir / "c"); }), Errc::malformed_file);
  std::ofstream(dir / "d") << "x1\tp\tl\n";
  EXPECT_EQ(error_of([&] { read_catalog(dir / "d"); }), Errc::malformed_file);
  EXPECT_EQ(error_of([&] { read_catalog(dir / "missing"); }), Errc::io);
}

TEST(Labels, Parse) {
  testgen::TempDir dir("lab");
  std::ofstream(dir / "l") << "# comment\n3\tred\nc001/img.ppm\tblue sky\r\n\n";
  const auto rows = read_labels(dir / "l");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::pair<std::string, std::string>{"3", "red"}));
  EXPECT_EQ(rows[1], (std::pair<std::string, std::string>{"c001/img.ppm", "blue sky"}));
  std::ofstream(dir / "bad") << "no-tab\n";
  EXPECT_EQ(error_of([&] { read_labels(dir / "bad"); }), Errc::malformed_file);
}
