#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "rbir/emd.hpp"
#include "rbir/error.hpp"
#include "rbir/image.hpp"
#include "rbir/index_store.hpp"
#include "rbir/interest.hpp"
#include "rbir/signature.hpp"
#include "rbir/stree.hpp"

namespace rbir {

struct PipelineConfig {
  int image_size = 256;
  int bits = 10;
  ColorPalette palette = default_palette();
  DetectorParams detector;
  STreeConfig tree;
  BeamMode beam = BeamMode::all;
  unsigned threads = 0;              ///< 0: one per hardware thread
  std::ostream* log = nullptr;       ///< warnings; nullptr silences them
  std::optional<std::filesystem::path> labels;  ///< optional "key<TAB>label" file for the catalog

  void validate() const {
    if (image_size < 8) fail(Errc::invalid_parameter, "image size must be >= 8");
    if (bits < 2 || bits > BinarySignature::max_bits) fail(Errc::invalid_parameter, "bits must lie in [2,64]");
    detector.validate();
    tree.validate();
  }
};

inline BinarySignature compute_signature(const Image& img, int image_size, const DetectorParams& detector,
                                         const ColorPalette& palette, int bits) {
  const Image std_img = resize(img, image_size);
  const auto regions = extract_regions(std_img, detector);
  return image_signature(std_img, regions, palette, bits);
}

inline BinarySignature compute_signature(const Image& img, const PipelineConfig& cfg) {
  return compute_signature(img, cfg.image_size, cfg.detector, cfg.palette, cfg.bits);
}

struct IndexPaths {
  std::filesystem::path signatures;
  std::filesystem::path tree;
  std::filesystem::path catalog;
  std::filesystem::path palette;

  static IndexPaths from_prefix(const std::filesystem::path& prefix) {
    auto with = [&](const char* ext) {
      auto p = prefix;
      p += ext;
      return p;
    };
    return {with(".sig"), with(".tree"), with(".catalog"), with(".palette")};
  }
};

namespace detail {

inline bool looks_like_image(const std::filesystem::path& p) {
  static const std::set<std::string> exts{".ppm", ".pnm", ".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff"};
  auto e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return exts.count(e) != 0;
}

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (unsigned t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
}

}  // namespace detail

struct BuildReport {
  std::size_t indexed = 0;
  std::size_t skipped = 0;
  double extract_ms = 0.0;
  double insert_ms = 0.0;
  TreeStats stats;
};

/// Phase one: every decodable image under corpus_dir (sorted by relative path, oids assigned
/// in that order) is standardized, signed and inserted. Writes PREFIX.sig/.tree/.catalog.
inline BuildReport build_index(const std::filesystem::path& corpus_dir, const std::filesystem::path& out_prefix,
                               const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();
  if (!fs::is_directory(corpus_dir)) fail(Errc::io, "corpus directory not found: " + corpus_dir.string());

  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(corpus_dir))
    if (e.is_regular_file() && detail::looks_like_image(e.path()))
      rel.push_back(fs::relative(e.path(), corpus_dir).generic_string());
  std::sort(rel.begin(), rel.end());

  std::map<std::string, std::string> labels;
  if (cfg.labels)
    for (auto& [k, v] : read_labels(*cfg.labels)) labels[k] = v;

  BuildReport report;
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::optional<BinarySignature>> sigs(rel.size());
  std::vector<std::string> errors(rel.size());
  detail::parallel_for(rel.size(), cfg.threads, [&](std::size_t i) {
    try {
      sigs[i] = compute_signature(load_image(corpus_dir / rel[i]), cfg);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  report.extract_ms = detail::ms_since(t0);

  const auto t1 = std::chrono::steady_clock::now();
  auto distance = std::make_shared<const GroundDistance>(ground_distance(cfg.palette));
  STree tree(static_cast<int>(cfg.palette.size()), cfg.bits, cfg.tree, distance);
  std::vector<SignatureRecord> records;
  std::vector<CatalogEntry> catalog;
  for (std::size_t i = 0; i < rel.size(); ++i) {
    if (!sigs[i]) {
      ++report.skipped;
      if (cfg.log) *cfg.log << "warning: skipping " << rel[i] << ": " << errors[i] << '\n';
      continue;
    }
    const std::uint64_t oid = records.size();
    tree.insert(*sigs[i], oid);
    records.push_back({oid, *sigs[i]});
    std::string label;
    if (auto it = labels.find(rel[i]); it != labels.end()) label = it->second;
    else if (auto slash = rel[i].rfind('/'); slash != std::string::npos) label = rel[i].substr(0, slash);
    catalog.push_back({oid, rel[i], label});
  }
  report.insert_ms = detail::ms_since(t1);
  if (records.empty()) fail(Errc::no_usable_images, "no decodable images under " + corpus_dir.string());
  report.indexed = records.size();
  report.stats = tree.stats();

  if (out_prefix.has_parent_path()) fs::create_directories(out_prefix.parent_path());
  const auto paths = IndexPaths::from_prefix(out_prefix);
  IndexMeta meta{palette_digest(cfg.palette), cfg.image_size, cfg.detector, cfg.beam};
  write_signature_file(paths.signatures, tree.blocks(), tree.bits(), records);
  save_tree(paths.tree, tree, meta);
  write_catalog(paths.catalog, catalog);
  detail::write_file_atomic(paths.palette, format_palette(cfg.palette));
  return report;
}

/// The palette sidecar written by build_index, or the default palette when it is absent.
inline ColorPalette index_palette(const std::filesystem::path& prefix) {
  const auto p = IndexPaths::from_prefix(prefix).palette;
  return std::filesystem::exists(p) ? load_palette(p) : default_palette();
}

/// A loaded, immutable index. Safe for concurrent queries.
struct Index {
  IndexMeta meta;
  ColorPalette palette;
  std::shared_ptr<const GroundDistance> distance;
  STree tree;
  std::vector<SignatureRecord> records;
  std::vector<CatalogEntry> catalog;
  std::unordered_map<std::uint64_t, std::size_t> by_oid;  ///< oid -> position in records/catalog

  int bits() const noexcept { return tree.bits(); }
  const std::string& path_of(std::uint64_t oid) const { return catalog.at(by_oid.at(oid)).path; }
  const std::string& label_of(std::uint64_t oid) const { return catalog.at(by_oid.at(oid)).label; }
};

inline Index make_index(IndexMeta meta, ColorPalette palette, STree tree, std::vector<SignatureRecord> records,
                        std::vector<CatalogEntry> catalog) {
  Index ix{std::move(meta), std::move(palette), tree.distance_ptr(), std::move(tree), std::move(records),
           std::move(catalog), {}};
  for (std::size_t i = 0; i < ix.records.size(); ++i) ix.by_oid.emplace(ix.records[i].oid, i);
  return ix;
}

/// Loads PREFIX.*; the palette must be the one the index was built with.
inline Index load_index(const std::filesystem::path& prefix, const ColorPalette& palette) {
  const auto paths = IndexPaths::from_prefix(prefix);
  auto distance = std::make_shared<const GroundDistance>(ground_distance(palette));
  auto sigfile = read_signature_file(paths.signatures);
  if (sigfile.blocks != static_cast<int>(palette.size()))
    fail(Errc::palette_mismatch, "index has " + std::to_string(sigfile.blocks) + " blocks, palette has " +
                                     std::to_string(palette.size()) + " colors");
  auto loaded = load_tree(paths.tree, distance);
  if (loaded.meta.palette_hash != palette_digest(palette))
    fail(Errc::palette_mismatch, "palette digest differs from the one recorded in " + paths.tree.string());
  auto catalog = read_catalog(paths.catalog);
  if (catalog.size() != sigfile.records.size() || loaded.tree.size() != sigfile.records.size())
    fail(Errc::corrupt_header, "signature file, tree and catalog disagree on record count");
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if (catalog[i].oid != sigfile.records[i].oid) fail(Errc::corrupt_header, "catalog and signature file out of order");
    if (!loaded.tree.contains(sigfile.records[i].oid)) fail(Errc::corrupt_header, "tree lacks a recorded oid");
  }
  return make_index(std::move(loaded.meta), palette, std::move(loaded.tree), std::move(sigfile.records),
                    std::move(catalog));
}

inline Index load_index(const std::filesystem::path& prefix) { return load_index(prefix, index_palette(prefix)); }

struct Hit {
  std::uint64_t oid = 0;
  double emd = 0.0;
  double mass_gap = 0.0;  ///< |total weight of query - total weight of this signature|

  friend bool operator==(const Hit&, const Hit&) = default;
};

struct QueryResult {
  std::vector<Hit> hits;  ///< ascending EMD, then mass gap, then oid
  std::size_t candidates = 0;
  OpCounters counters;
  double elapsed_ms = 0.0;
};

/// EMD only ships the lighter mass, so a query embedded in a heavier signature scores 0 against
/// it as well as against itself. Equal distances are therefore ordered by mass gap before oid.
inline Hit score(const WeightVector& query, double query_mass, std::uint64_t oid, const BinarySignature& sig,
                 const GroundDistance& d) {
  const WeightVector w = weight_vector(sig);
  return {oid, emd(query, w, d), std::abs(query_mass - total_weight(w))};
}

inline void rank_hits(std::vector<Hit>& hits) {
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.emd != b.emd) return a.emd < b.emd;
    if (a.mass_gap != b.mass_gap) return a.mass_gap < b.mass_gap;
    return a.oid < b.oid;
  });
}

/// Tree search, then every candidate is re-scored with the exact EMD, which removes false drops.
inline QueryResult query_signature(const Index& ix, const BinarySignature& sig, std::size_t top_k,
                                   std::optional<BeamMode> beam = std::nullopt) {
  if (top_k < 1) fail(Errc::invalid_parameter, "top_k must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  auto found = ix.tree.search(sig, beam.value_or(ix.meta.beam));
  QueryResult q;
  q.counters = found.counters;
  q.candidates = found.candidates.size();
  const WeightVector w = weight_vector(sig);
  const double mass = total_weight(w);
  q.hits.reserve(found.candidates.size());
  for (const auto& c : found.candidates) {
    ++q.counters.emd_evaluations;
    q.hits.push_back(score(w, mass, c.oid, c.sig, *ix.distance));
  }
  rank_hits(q.hits);
  if (q.hits.size() > top_k) q.hits.resize(top_k);
  q.elapsed_ms = detail::ms_since(t0);
  return q;
}

/// Exhaustive EMD over every stored signature.
inline QueryResult linear_scan(const Index& ix, const BinarySignature& sig, std::size_t top_k) {
  if (top_k < 1) fail(Errc::invalid_parameter, "top_k must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  QueryResult q;
  const WeightVector w = weight_vector(sig);
  const double mass = total_weight(w);
  for (const auto& r : ix.records) {
    ++q.counters.emd_evaluations;
    q.hits.push_back(score(w, mass, r.oid, r.sig, *ix.distance));
  }
  q.candidates = q.hits.size();
  rank_hits(q.hits);
  if (q.hits.size() > top_k) q.hits.resize(top_k);
  q.elapsed_ms = detail::ms_since(t0);
  return q;
}

inline BinarySignature signature_for_index(const Index& ix, const Image& img) {
  return compute_signature(img, ix.meta.image_size, ix.meta.detector, ix.palette, ix.bits());
}

inline QueryResult query(const Index& ix, const std::filesystem::path& image_path, std::size_t top_k,
                         bool oracle = false) {
  const auto sig = signature_for_index(ix, load_image(image_path));
  return oracle ? linear_scan(ix, sig, top_k) : query_signature(ix, sig, top_k);
}

inline std::string format_hits_csv(const Index& ix, const QueryResult& q) {
  std::ostringstream out;
  out << "rank,oid,path,emd\n";
  out << std::setprecision(10);
  for (std::size_t i = 0; i < q.hits.size(); ++i)
    out << i + 1 << ',' << q.hits[i].oid << ',' << ix.path_of(q.hits[i].oid) << ',' << q.hits[i].emd << '\n';
  return out.str();
}

/// oid -> label, resolving keys given as oids or as catalog paths.
inline std::unordered_map<std::uint64_t, std::string> resolve_labels(
    const Index& ix, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::unordered_map<std::string, std::uint64_t> by_path;
  for (const auto& c : ix.catalog) by_path.emplace(c.path, c.oid);
  std::unordered_map<std::uint64_t, std::string> out;
  for (const auto& [key, label] : rows) {
    if (auto it = by_path.find(key); it != by_path.end()) {
      out[it->second] = label;
      continue;
    }
    std::uint64_t oid = 0;
    std::size_t used = 0;
    try {
      oid = std::stoull(key, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == key.size() && used > 0 && ix.by_oid.count(oid)) out[oid] = label;
  }
  return out;
}

inline std::unordered_map<std::uint64_t, std::string> catalog_labels(const Index& ix) {
  std::unordered_map<std::uint64_t, std::string> out;
  for (const auto& c : ix.catalog) out[c.oid] = c.label;
  return out;
}

struct EvalRow {
  std::uint64_t oid = 0;
  std::string label;
  std::size_t k = 0;
  double precision = 0.0;
  std::optional<double> recall;  ///< absent when the class has no other member
  double oracle_precision = 0.0;
  std::optional<double> oracle_recall;
  double overlap = 0.0;  ///< |tree top-k ∩ oracle top-k| / |oracle top-k|
  std::uint64_t nodes_visited = 0;
  std::uint64_t emd_evaluations = 0;
  std::size_t candidates = 0;
};

struct EvalSummary {
  std::size_t k = 0;
  std::size_t queries = 0;
  std::size_t recall_rows = 0;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_oracle_precision = 0.0;
  double mean_oracle_recall = 0.0;
  double mean_overlap = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  std::vector<EvalSummary> summary;
  double mean_nodes_visited = 0.0;
  double mean_emd_evaluations = 0.0;

  const EvalSummary& at_k(std::size_t k) const {
    for (const auto& s : summary)
      if (s.k == k) return s;
    fail(Errc::invalid_parameter, "no summary for k=" + std::to_string(k));
  }
};

namespace detail {

/// Drops the query itself, keeping the first k others.
inline std::vector<std::uint64_t> others(const std::vector<Hit>& hits, std::uint64_t self, std::size_t k) {
  std::vector<std::uint64_t> out;
  for (const auto& h : hits) {
    if (out.size() == k) break;
    if (h.oid != self) out.push_back(h.oid);
  }
  return out;
}

}  // namespace detail

/// Every indexed image is used as a query with its stored signature. The query stays in the
/// index but is removed from its own ranking; relevance is exact label equality.
/// precision@K = relevant/K, recall@K = relevant/(class size - 1).
inline EvalReport evaluate(const Index& ix, const std::unordered_map<std::uint64_t, std::string>& labels,
                           const std::vector<std::size_t>& ks) {
  if (ks.empty()) fail(Errc::invalid_parameter, "at least one k required");
  for (auto k : ks)
    if (k < 1) fail(Errc::invalid_parameter, "k must be >= 1");
  std::unordered_map<std::string, std::size_t> class_size;
  for (const auto& r : ix.records) {
    auto it = labels.find(r.oid);
    if (it == labels.end()) fail(Errc::missing_label, "no label for oid " + std::to_string(r.oid));
    ++class_size[it->second];
  }
  const std::size_t kmax = *std::max_element(ks.begin(), ks.end());

  EvalReport rep;
  std::vector<EvalSummary> sums(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) sums[i].k = ks[i];
  for (const auto& r : ix.records) {
    const std::string& label = labels.at(r.oid);
    const auto tree_q = query_signature(ix, r.sig, kmax + 1);
    const auto scan_q = linear_scan(ix, r.sig, kmax + 1);
    const auto tree_ids = detail::others(tree_q.hits, r.oid, kmax);
    const auto scan_ids = detail::others(scan_q.hits, r.oid, kmax);
    rep.mean_nodes_visited += static_cast<double>(tree_q.counters.nodes_visited);
    rep.mean_emd_evaluations += static_cast<double>(tree_q.counters.emd_evaluations);
    const std::size_t others_in_class = class_size[label] - 1;

    for (std::size_t i = 0; i < ks.size(); ++i) {
      const std::size_t k = ks[i];
      auto relevant = [&](const std::vector<std::uint64_t>& ids) {
        std::size_t n = 0;
        for (std::size_t j = 0; j < ids.size() && j < k; ++j) n += labels.at(ids[j]) == label ? 1 : 0;
        return n;
      };
      EvalRow row;
      row.oid = r.oid;
      row.label = label;
      row.k = k;
      const std::size_t rel_tree = relevant(tree_ids);
      const std::size_t rel_scan = relevant(scan_ids);
      row.precision = static_cast<double>(rel_tree) / static_cast<double>(k);
      row.oracle_precision = static_cast<double>(rel_scan) / static_cast<double>(k);
      if (others_in_class > 0) {
        row.recall = static_cast<double>(rel_tree) / static_cast<double>(others_in_class);
        row.oracle_recall = static_cast<double>(rel_scan) / static_cast<double>(others_in_class);
      }
      const std::set<std::uint64_t> scan_top(scan_ids.begin(), scan_ids.begin() + std::min(k, scan_ids.size()));
      std::size_t common = 0;
      for (std::size_t j = 0; j < tree_ids.size() && j < k; ++j) common += scan_top.count(tree_ids[j]);
      row.overlap = scan_top.empty() ? 1.0 : static_cast<double>(common) / static_cast<double>(scan_top.size());
      row.nodes_visited = tree_q.counters.nodes_visited;
      row.emd_evaluations = tree_q.counters.emd_evaluations;
      row.candidates = tree_q.candidates;

      auto& s = sums[i];
      ++s.queries;
      s.mean_precision += row.precision;
      s.mean_oracle_precision += row.oracle_precision;
      s.mean_overlap += row.overlap;
      if (row.recall) {
        ++s.recall_rows;
        s.mean_recall += *row.recall;
        s.mean_oracle_recall += *row.oracle_recall;
      }
      rep.rows.push_back(std::move(row));
    }
  }
  for (auto& s : sums) {
    if (s.queries) {
      s.mean_precision /= static_cast<double>(s.queries);
      s.mean_oracle_precision /= static_cast<double>(s.queries);
      s.mean_overlap /= static_cast<double>(s.queries);
    }
    if (s.recall_rows) {
      s.mean_recall /= static_cast<double>(s.recall_rows);
      s.mean_oracle_recall /= static_cast<double>(s.recall_rows);
    }
  }
  if (!ix.records.empty()) {
    rep.mean_nodes_visited /= static_cast<double>(ix.records.size());
    rep.mean_emd_evaluations /= static_cast<double>(ix.records.size());
  }
  rep.summary = std::move(sums);
  return rep;
}

inline std::string format_eval_rows_csv(const EvalReport& rep) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "oid,label,k,precision,recall,oracle_precision,oracle_recall,overlap,nodes_visited,emd_evaluations,"
         "candidates\n";
  auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("skipped"); };
  for (const auto& r : rep.rows)
    out << r.oid << ',' << r.label << ',' << r.k << ',' << r.precision << ',' << opt(r.recall) << ','
        << r.oracle_precision << ',' << opt(r.oracle_recall) << ',' << r.overlap << ',' << r.nodes_visited << ','
        << r.emd_evaluations << ',' << r.candidates << '\n';
  return out.str();
}

inline std::string format_eval_summary_csv(const EvalReport& rep) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "k,queries,recall_rows,mean_precision,mean_recall,mean_oracle_precision,mean_oracle_recall,mean_overlap\n";
  for (const auto& s : rep.summary)
    out << s.k << ',' << s.queries << ',' << s.recall_rows << ',' << s.mean_precision << ',' << s.mean_recall << ','
        << s.mean_oracle_precision << ',' << s.mean_oracle_recall << ',' << s.mean_overlap << '\n';
  return out.str();
}

struct CostRow {
  std::size_t n = 0;
  int height = 0;
  std::size_t node_count = 0;
  OpCounters build;
  double build_ms = 0.0;
  std::size_t probes = 0;
  double mean_visited = 0.0;
  double mean_emd_evaluations = 0.0;
  double mean_candidates = 0.0;
  double mean_query_ms = 0.0;
};

/// Rebuilds the tree over growing prefixes of the signature file (n = 100, 200, 400, ... and the
/// full count) and probes each with up to `probes` stored signatures spread evenly over the prefix.
inline std::vector<CostRow> cost_curve(const Index& ix, std::size_t probes = 100, std::size_t first = 100) {
  std::vector<std::size_t> sizes;
  for (std::size_t n = std::max<std::size_t>(first, 1); n < ix.records.size(); n *= 2) sizes.push_back(n);
  if (!ix.records.empty()) sizes.push_back(ix.records.size());

  std::vector<CostRow> rows;
  for (std::size_t n : sizes) {
    CostRow row;
    row.n = n;
    const auto t0 = std::chrono::steady_clock::now();
    STree tree(ix.tree.blocks(), ix.tree.bits(), ix.tree.config(), ix.distance);
    for (std::size_t i = 0; i < n; ++i) tree.insert(ix.records[i].sig, ix.records[i].oid);
    row.build_ms = detail::ms_since(t0);
    const auto st = tree.stats();
    row.height = st.height;
    row.node_count = st.node_count;
    row.build = st.build;

    Index sub = make_index(ix.meta, ix.palette, std::move(tree),
                           std::vector<SignatureRecord>(ix.records.begin(), ix.records.begin() + n),
                           std::vector<CatalogEntry>(ix.catalog.begin(), ix.catalog.begin() + n));
    row.probes = std::min(probes, n);
    for (std::size_t p = 0; p < row.probes; ++p) {
      const auto& rec = sub.records[p * n / row.probes];
      const auto q = query_signature(sub, rec.sig, 10);
      row.mean_visited += static_cast<double>(q.counters.nodes_visited);
      row.mean_emd_evaluations += static_cast<double>(q.counters.emd_evaluations);
      row.mean_candidates += static_cast<double>(q.candidates);
      row.mean_query_ms += q.elapsed_ms;
    }
    if (row.probes) {
      const double d = static_cast<double>(row.probes);
      row.mean_visited /= d;
      row.mean_emd_evaluations /= d;
      row.mean_candidates /= d;
      row.mean_query_ms /= d;
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string format_cost_csv(const std::vector<CostRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "n,height,node_count,build_emd_evaluations,build_splits,build_unions,build_ms,probes,mean_nodes_visited,"
         "mean_emd_evaluations,mean_candidates,mean_query_ms\n";
  for (const auto& r : rows)
    out << r.n << ',' << r.height << ',' << r.node_count << ',' << r.build.emd_evaluations << ',' << r.build.splits
        << ',' << r.build.unions << ',' << r.build_ms << ',' << r.probes << ',' << r.mean_visited << ','
        << r.mean_emd_evaluations << ',' << r.mean_candidates << ',' << r.mean_query_ms << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic labelled corpora.

/// Portable deterministic uniform source (the standard distributions are implementation-defined).
class SeededRandom {
 public:
  explicit SeededRandom(std::uint64_t seed) : eng_(seed) {}
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int below(int n) { return static_cast<int>(uniform() * n) % n; }

 private:
  std::mt19937_64 eng_;
};

struct CorpusSpec {
  int classes = 10;
  int per_class = 10;
  int size = 64;
  std::uint64_t seed = 1;
  /// Redraw an image whose weight vector under the default pipeline (at `size`) equals an earlier
  /// one. Such images are at EMD 0 with equal mass, so "itself" would be decided by oid alone.
  bool distinct_signatures = true;
};

/// Each class owns three palette colors. The first ten classes partition a shuffled palette;
/// later classes draw random triples, so they may share individual colors but not the set.
inline std::vector<std::array<Rgb, 3>> class_color_sets(int classes, std::uint64_t seed) {
  const ColorPalette palette = default_palette();
  const auto& colors = palette.colors();
  const int n = static_cast<int>(colors.size());
  SeededRandom rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i) std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(rng.below(i + 1))]);

  std::vector<std::array<Rgb, 3>> out;
  std::set<std::array<int, 3>> used;
  for (int c = 0; c < classes; ++c) {
    std::array<int, 3> idx{};
    if (3 * c + 2 < n) {
      idx = {perm[static_cast<std::size_t>(3 * c)], perm[static_cast<std::size_t>(3 * c + 1)],
             perm[static_cast<std::size_t>(3 * c + 2)]};
    } else {
      do {
        idx = {rng.below(n), rng.below(n), rng.below(n)};
      } while (idx[0] == idx[1] || idx[0] == idx[2] || idx[1] == idx[2] ||
               used.count({std::min({idx[0], idx[1], idx[2]}), idx[0] + idx[1] + idx[2], std::max({idx[0], idx[1], idx[2]})}));
    }
    used.insert({std::min({idx[0], idx[1], idx[2]}), idx[0] + idx[1] + idx[2], std::max({idx[0], idx[1], idx[2]})});
    out.push_back({colors[static_cast<std::size_t>(idx[0])], colors[static_cast<std::size_t>(idx[1])],
                   colors[static_cast<std::size_t>(idx[2])]});
  }
  return out;
}

struct ShapeTemplate {
  bool disk = false;
  int color = 1;  ///< index into the class color set
  double x = 0, y = 0, w = 0, h = 0;  ///< fractions of the image side
};

struct ClassTemplate {
  std::array<Rgb, 3> colors;
  std::vector<ShapeTemplate> shapes;
};

/// Per class: its color set plus a layout of 3 to 6 shapes in the two foreground colors.
inline std::vector<ClassTemplate> class_templates(int classes, std::uint64_t seed) {
  const auto sets = class_color_sets(classes, seed);
  SeededRandom rng(seed * 0xbf58476d1ce4e5b9ULL + 7);
  std::vector<ClassTemplate> out;
  for (const auto& set : sets) {
    ClassTemplate t{set, {}};
    const int shapes = 3 + rng.below(4);
    for (int s = 0; s < shapes; ++s) {
      ShapeTemplate st;
      st.disk = rng.below(2) == 0;
      st.color = 1 + rng.below(2);
      st.w = rng.uniform(0.15, 0.4);
      st.h = st.disk ? st.w : rng.uniform(0.15, 0.4);
      st.x = rng.uniform(0.0, 1.0 - st.w);
      st.y = rng.uniform(0.0, 1.0 - st.h);
      t.shapes.push_back(st);
    }
    out.push_back(std::move(t));
  }
  return out;
}

inline Rgb jitter(SeededRandom& rng, const Rgb& c, double amount) {
  auto j = [&](double v) { return std::clamp(v + rng.uniform(-amount, amount), 0.0, 1.0); };
  return {j(c.r), j(c.g), j(c.b)};
}

/// One instance of a class: the template's shapes, each shifted by up to `shift` and scaled by
/// up to `scale` (both relative), over the background color with small pixel noise.
inline Image synthetic_image(const ClassTemplate& t, int size, SeededRandom& rng, double shift = 0.08,
                             double scale = 0.15) {
  std::vector<Rgb> px(static_cast<std::size_t>(size) * size);
  for (auto& p : px) p = jitter(rng, t.colors[0], 0.04);
  for (const auto& st : t.shapes) {
    const double k = 1.0 + rng.uniform(-scale, scale);
    const double w = st.w * k * size, h = st.h * k * size;
    const double x0 = (st.x + rng.uniform(-shift, shift)) * size;
    const double y0 = (st.y + rng.uniform(-shift, shift)) * size;
    const double cx = x0 + w / 2, cy = y0 + h / 2;
    const Rgb& c = t.colors[static_cast<std::size_t>(st.color)];
    for (int y = std::max(0, static_cast<int>(y0)); y < std::min(size, static_cast<int>(std::ceil(y0 + h))); ++y)
      for (int x = std::max(0, static_cast<int>(x0)); x < std::min(size, static_cast<int>(std::ceil(x0 + w))); ++x) {
        const double px_x = x + 0.5, px_y = y + 0.5;
        const bool inside = st.disk ? (px_x - cx) * (px_x - cx) + (px_y - cy) * (px_y - cy) <= w * w / 4
                                    : px_x >= x0 && px_x < x0 + w && px_y >= y0 && px_y < y0 + h;
        if (inside) px[static_cast<std::size_t>(y) * size + x] = jitter(rng, c, 0.04);
      }
  }
  return Image(size, size, std::move(px));
}

struct LabeledImage {
  std::string path;  ///< relative, e.g. "c003/img0007.ppm"
  std::string label;
  Image image;
};

inline std::vector<LabeledImage> synthesize_corpus(const CorpusSpec& spec) {
  if (spec.classes < 1 || spec.per_class < 1 || spec.size < 8) fail(Errc::invalid_parameter, "bad corpus spec");
  SeededRandom rng(spec.seed);
  const auto templates = class_templates(spec.classes, spec.seed);
  const PipelineConfig defaults;
  std::set<WeightVector> seen;
  std::vector<LabeledImage> out;
  for (int c = 0; c < spec.classes; ++c) {
    std::ostringstream cname;
    cname << 'c' << std::setw(3) << std::setfill('0') << c;
    for (int i = 0; i < spec.per_class; ++i) {
      std::ostringstream fname;
      fname << cname.str() << "/img" << std::setw(4) << std::setfill('0') << i << ".ppm";
      // Quantized to 8 bits here so the in-memory image is exactly what the PPM file holds.
      const auto& tmpl = templates[static_cast<std::size_t>(c)];
      auto draw = [&] { return decode_ppm(encode_ppm(synthetic_image(tmpl, spec.size, rng))); };
      Image img = draw();
      for (int redraw = 0; spec.distinct_signatures && redraw < 64; ++redraw) {
        const auto sig = compute_signature(img, spec.size, defaults.detector, defaults.palette, defaults.bits);
        if (seen.insert(weight_vector(sig)).second) break;
        img = draw();
      }
      out.push_back({fname.str(), cname.str(), std::move(img)});
    }
  }
  return out;
}

/// Writes DIR/cNNN/imgMMMM.ppm plus DIR/labels.tsv ("relative path<TAB>label").
inline std::vector<CatalogEntry> generate_corpus(const std::filesystem::path& dir, const CorpusSpec& spec) {
  const auto images = synthesize_corpus(spec);
  std::vector<CatalogEntry> rows;
  std::ostringstream labels;
  for (const auto& li : images) {
    std::filesystem::create_directories((dir / li.path).parent_path());
    save_ppm(li.image, dir / li.path);
    labels << li.path << '\t' << li.label << '\n';
    rows.push_back({static_cast<std::uint64_t>(rows.size()), li.path, li.label});
  }
  detail::write_file_atomic(dir / "labels.tsv", labels.str());
  return rows;
}

}  // namespace rbir
