// rbir: build, query and evaluate a region-signature image index.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rbir/pipeline.hpp"

namespace {

// Exit codes beyond the library's error classes.
constexpr int exit_usage = 1;
constexpr int exit_internal = 70;

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || tok.empty() || v < 1)
      rbir::fail(rbir::Errc::invalid_parameter, "bad k list entry '" + tok + "'");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) rbir::fail(rbir::Errc::invalid_parameter, "empty k list");
  return ks;
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  rbir::detail::write_file_atomic(path, text);
}

rbir::ColorPalette choose_palette(const std::string& prefix, const std::string& palette_file) {
  return palette_file.empty() ? rbir::index_palette(prefix) : rbir::load_palette(palette_file);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Region-based image retrieval over binary color signatures"};
  app.require_subcommand(1);

  rbir::PipelineConfig cfg;
  cfg.log = &std::cerr;
  std::string corpus, out_prefix, palette_file, beam = "all", labels_build;
  auto* build = app.add_subcommand("build", "Index every image under a directory");
  build->add_option("--corpus", corpus, "Image directory (searched recursively)")->required();
  build->add_option("--out", out_prefix, "Output prefix for .sig/.tree/.catalog/.palette")->required();
  build->add_option("--size", cfg.image_size, "Standardized image side")->capture_default_str();
  build->add_option("--palette", palette_file, "Palette file, one 'r g b' triple in [0,1] per line");
  build->add_option("--bits", cfg.bits, "Bits per block (m)")->capture_default_str();
  build->add_option("--node-min", cfg.tree.node_min)->capture_default_str();
  build->add_option("--node-max", cfg.tree.node_max)->capture_default_str();
  build->add_option("--theta", cfg.detector.theta, "Harris response threshold")->capture_default_str();
  build->add_option("--alpha", cfg.detector.alpha, "Harris trace weight")->capture_default_str();
  build->add_option("--scales", cfg.detector.sigma_i_levels, "integration scales, ascending")
      ->delimiter(',')
      ->capture_default_str();
  build->add_option("--sigma-ratio", cfg.detector.sigma_ratio, "differentiation / integration scale")
      ->capture_default_str();
  build->add_option("--max-regions", cfg.detector.max_regions)->capture_default_str();
  build->add_option("--beam", beam, "Search mode stored with the index: all or 1")
      ->check(CLI::IsMember({"all", "1"}))
      ->capture_default_str();
  build->add_option("--threads", cfg.threads, "Extraction threads (0 = hardware)")->capture_default_str();
  build->add_option("--labels", labels_build, "Optional labels file recorded in the catalog");

  std::string index_prefix, image, query_palette;
  std::size_t top = 10;
  bool oracle = false;
  auto* query = app.add_subcommand("query", "Rank indexed images against a query image");
  query->add_option("--index", index_prefix)->required();
  query->add_option("--image", image)->required();
  query->add_option("--top", top)->capture_default_str();
  query->add_flag("--oracle", oracle, "Exhaustive EMD scan instead of tree search");
  query->add_option("--palette", query_palette, "Override the palette stored next to the index");

  std::string labels_file, ks_text = "1,5,10,20", eval_out;
  auto* eval = app.add_subcommand("eval", "Precision/recall with every indexed image as a query");
  eval->add_option("--index", index_prefix)->required();
  eval->add_option("--labels", labels_file, "Labels file; defaults to catalog labels");
  eval->add_option("--k", ks_text)->capture_default_str();
  eval->add_option("--rows", eval_out, "Write per-query rows to this CSV");
  eval->add_option("--palette", query_palette);

  std::size_t probes = 100;
  auto* stats = app.add_subcommand("stats", "Operation counts and timings vs corpus size");
  stats->add_option("--index", index_prefix)->required();
  stats->add_option("--probes", probes, "Queries per corpus size")->capture_default_str();
  stats->add_option("--palette", query_palette);

  std::string gen_dir;
  rbir::CorpusSpec spec;
  auto* gen = app.add_subcommand("gen", "Write a seeded synthetic labelled corpus");
  gen->add_option("--out", gen_dir)->required();
  gen->add_option("--classes", spec.classes)->capture_default_str();
  gen->add_option("--per-class", spec.per_class)->capture_default_str();
  gen->add_option("--size", spec.size)->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : exit_usage;
  }

  try {
    if (*build) {
      if (!palette_file.empty()) cfg.palette = rbir::load_palette(palette_file);
      if (!labels_build.empty()) cfg.labels = labels_build;
      cfg.beam = beam == "1" ? rbir::BeamMode::single : rbir::BeamMode::all;
      const auto r = rbir::build_index(corpus, out_prefix, cfg);
      std::cerr << "indexed " << r.indexed << " images, skipped " << r.skipped << ", height " << r.stats.height
                << ", nodes " << r.stats.node_count << ", extract " << r.extract_ms << " ms, insert "
                << r.insert_ms << " ms\n";
    } else if (*query) {
      const auto ix = rbir::load_index(index_prefix, choose_palette(index_prefix, query_palette));
      const auto q = rbir::query(ix, image, top, oracle);
      std::cout << rbir::format_hits_csv(ix, q);
      std::cerr << "candidates " << q.candidates << ", nodes visited " << q.counters.nodes_visited
                << ", emd evaluations " << q.counters.emd_evaluations << ", " << q.elapsed_ms << " ms\n";
    } else if (*eval) {
      const auto ix = rbir::load_index(index_prefix, choose_palette(index_prefix, query_palette));
      const auto labels =
          labels_file.empty() ? rbir::catalog_labels(ix) : rbir::resolve_labels(ix, rbir::read_labels(labels_file));
      const auto rep = rbir::evaluate(ix, labels, parse_ks(ks_text));
      std::cout << rbir::format_eval_summary_csv(rep);
      if (!eval_out.empty()) write_or_print(eval_out, rbir::format_eval_rows_csv(rep));
      std::cerr << "mean nodes visited " << rep.mean_nodes_visited << ", mean emd evaluations "
                << rep.mean_emd_evaluations << '\n';
    } else if (*stats) {
      const auto ix = rbir::load_index(index_prefix, choose_palette(index_prefix, query_palette));
      std::cout << rbir::format_cost_csv(rbir::cost_curve(ix, probes));
    } else if (*gen) {
      const auto rows = rbir::generate_corpus(gen_dir, spec);
      std::cerr << "wrote " << rows.size() << " images to " << gen_dir << '\n';
    }
  } catch (const rbir::Error& e) {
    std::cerr << "rbir: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "rbir: internal error: " << e.what() << '\n';
    return exit_internal;
  }
  return 0;
}
