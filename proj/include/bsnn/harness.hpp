#pragma once

// Experiment runner: error tables over (samples per class x seed) cells, with
// CSV/JSON reports, prediction logs and PGM visual exports.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "bsnn/serialization.hpp"

namespace bsnn {

enum class DatasetKind { mnist, faces };

struct ExperimentConfig {
  int table = 1;  // 1 clean MNIST, 2 perturbed MNIST, 3 faces
  DatasetKind dataset = DatasetKind::mnist;
  std::filesystem::path mnist_images = "data/mnist/train-images-idx3-ubyte";
  std::filesystem::path mnist_labels = "data/mnist/train-labels-idx1-ubyte";
  std::vector<std::size_t> samples_per_class = {10, 50, 100};
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::size_t test_per_class = 40;
  PipelineConfig pipeline;
  FaceSpec faces;
  bool adversarial = false;
  SurrogateTrainConfig surrogate;
  PerturbConfig attack;
  std::filesystem::path out = "results";
  bool write_predictions = true;

  static ExperimentConfig for_table(int table) {
    require(table >= 1 && table <= 3, ErrorCode::invalid_argument, "table must be 1, 2 or 3");
    ExperimentConfig c;
    c.table = table;
    if (table == 2) c.adversarial = true;
    if (table == 3) {
      c.dataset = DatasetKind::faces;
      c.samples_per_class = {5, 10, 30};
      c.pipeline.cdbn = CdbnTrainConfig::faces();
    }
    return c;
  }

  void validate() const {
    require(!samples_per_class.empty() && !seeds.empty(), ErrorCode::invalid_argument,
            "need at least one sample size and one seed");
    require(test_per_class >= 1, ErrorCode::invalid_argument, "test_per_class must be positive");
    require(!adversarial || dataset == DatasetKind::mnist, ErrorCode::invalid_argument,
            "the perturbed-image table is defined on MNIST");
    pipeline.validate();
    attack.validate();
    if (dataset == DatasetKind::faces) faces.validate();
  }
};

/// Applies a JSON document on top of the defaults of its table.
inline ExperimentConfig parse_experiment(const json& j) {
  ExperimentConfig c = ExperimentConfig::for_table(j.value("table", 1));
  if (j.contains("dataset")) {
    const auto d = j.at("dataset").get<std::string>();
    require(d == "mnist" || d == "faces", ErrorCode::invalid_argument,
            "dataset must be \"mnist\" or \"faces\"");
    const auto kind = d == "mnist" ? DatasetKind::mnist : DatasetKind::faces;
    if (kind != c.dataset && kind == DatasetKind::faces) c.pipeline.cdbn = CdbnTrainConfig::faces();
    if (kind != c.dataset && kind == DatasetKind::mnist) c.pipeline.cdbn = CdbnTrainConfig::mnist();
    c.dataset = kind;
  }
  if (j.contains("mnist_images")) c.mnist_images = j.at("mnist_images").get<std::string>();
  if (j.contains("mnist_labels")) c.mnist_labels = j.at("mnist_labels").get<std::string>();
  detail::read_if(j, "samples_per_class", c.samples_per_class);
  detail::read_if(j, "seeds", c.seeds);
  detail::read_if(j, "test_per_class", c.test_per_class);
  if (j.contains("pipeline")) from_json(j.at("pipeline"), c.pipeline);
  if (j.contains("faces")) from_json(j.at("faces"), c.faces);
  detail::read_if(j, "adversarial", c.adversarial);
  if (j.contains("surrogate")) from_json(j.at("surrogate"), c.surrogate);
  if (j.contains("attack")) from_json(j.at("attack"), c.attack);
  if (j.contains("out")) c.out = j.at("out").get<std::string>();
  detail::read_if(j, "write_predictions", c.write_predictions);
  c.validate();
  return c;
}

inline json experiment_json(const ExperimentConfig& c) {
  return {{"table", c.table},
          {"dataset", c.dataset == DatasetKind::mnist ? "mnist" : "faces"},
          {"mnist_images", c.mnist_images.string()},
          {"mnist_labels", c.mnist_labels.string()},
          {"samples_per_class", c.samples_per_class},
          {"seeds", c.seeds},
          {"test_per_class", c.test_per_class},
          {"pipeline", c.pipeline},
          {"faces", c.faces},
          {"adversarial", c.adversarial},
          {"surrogate", c.surrogate},
          {"attack", c.attack},
          {"out", c.out.string()},
          {"write_predictions", c.write_predictions}};
}

/// One table row: a pathway set fused by the product rule, optionally re-selected.
struct Variant {
  std::string name;
  std::vector<Pathway> pathways;
  bool reselect = false;
};

inline std::vector<Variant> table_rows(const ExperimentConfig& c) {
  std::vector<Variant> rows = {
      {"Pixel Softmax", {Pathway::pixels}},
      {"One Layer CDBN", {Pathway::cdbn1}},
      {"Two Layer CDBN", {Pathway::episodic}},
      {"Semantic Features", {Pathway::semantic}},
      {"BSNN (16 PNeurons)", {Pathway::position4, Pathway::relationship}},
      {"BSNN (64 PNeurons)", {Pathway::position8, Pathway::relationship}},
      {"BSNN Integrated", c.pipeline.integrated},
  };
  if (c.adversarial) rows.push_back({"BSNN after Re-selection", c.pipeline.integrated, true});
  return rows;
}

/// Single structural pathways, reported next to the table.
inline std::vector<Variant> diagnostic_rows() {
  return {{"Position (16 PNeurons) only", {Pathway::position4}},
          {"Position (64 PNeurons) only", {Pathway::position8}},
          {"Relationship only", {Pathway::relationship}}};
}

struct Cell {
  std::string row;
  std::size_t samples_per_class = 0;
  std::uint64_t seed = 0;
  double error = 0.0;  // percent
  bool diagnostic = false;
};

struct CellExtras {
  std::size_t samples_per_class = 0;
  std::uint64_t seed = 0;
  double attack_success = -1.0;  // fraction of attempted images; negative when no attack
  std::size_t reselected = 0;
  std::size_t test_size = 0;
};

struct Report {
  int table = 1;
  std::vector<std::string> rows;
  std::vector<std::string> diagnostics;
  std::vector<std::size_t> samples_per_class;
  std::vector<Cell> cells;
  std::vector<CellExtras> extras;

  std::vector<double> errors(const std::string& row, std::size_t spc) const {
    std::vector<double> out;
    for (const Cell& c : cells)
      if (c.row == row && c.samples_per_class == spc) out.push_back(c.error);
    return out;
  }
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single value
  std::size_t n = 0;
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return s;
}

namespace detail {

inline std::string fixed(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline std::string csv_field(const std::string& s) {
  return s.find_first_of(",\"") == std::string::npos ? s : "\"" + s + "\"";
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << text;
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

}  // namespace detail

inline std::string cells_csv(const Report& r) {
  std::string s = "row,samples_per_class,seed,error_percent,diagnostic\n";
  for (const Cell& c : r.cells)
    s += detail::csv_field(c.row) + "," + std::to_string(c.samples_per_class) + "," +
         std::to_string(c.seed) + "," + detail::fixed(c.error, 4) + "," +
         (c.diagnostic ? "1" : "0") + "\n";
  return s;
}

/// Wide table: one line per row, "mean +- sd" per sample size.
inline std::string summary_csv(const Report& r) {
  std::string s = "row";
  for (std::size_t n : r.samples_per_class)
    s += ",mean_" + std::to_string(n) + ",sd_" + std::to_string(n);
  s += "\n";
  std::vector<std::string> all = r.rows;
  all.insert(all.end(), r.diagnostics.begin(), r.diagnostics.end());
  for (const std::string& row : all) {
    s += detail::csv_field(row);
    for (std::size_t n : r.samples_per_class) {
      const std::vector<double> e = r.errors(row, n);
      const Summary sm = summarize(e);
      s += "," + detail::fixed(sm.mean) + "," + detail::fixed(sm.sd);
    }
    s += "\n";
  }
  return s;
}

inline json report_json(const Report& r, const ExperimentConfig& cfg) {
  json table = json::array();
  std::vector<std::string> all = r.rows;
  all.insert(all.end(), r.diagnostics.begin(), r.diagnostics.end());
  for (const std::string& row : all) {
    json entry = {{"row", row},
                  {"diagnostic", std::find(r.diagnostics.begin(), r.diagnostics.end(), row) !=
                                     r.diagnostics.end()},
                  {"cells", json::array()}};
    for (std::size_t n : r.samples_per_class) {
      const Summary sm = summarize(r.errors(row, n));
      entry["cells"].push_back({{"samples_per_class", n},
                                {"mean", sm.mean},
                                {"sd", sm.sd},
                                {"seeds", sm.n},
                                {"errors", r.errors(row, n)}});
    }
    table.push_back(std::move(entry));
  }
  json extras = json::array();
  for (const CellExtras& e : r.extras) {
    json x = {{"samples_per_class", e.samples_per_class},
              {"seed", e.seed},
              {"test_size", e.test_size},
              {"reselected", e.reselected}};
    if (e.attack_success >= 0.0) x["attack_success"] = e.attack_success;
    extras.push_back(std::move(x));
  }
  return {{"table", r.table}, {"config", experiment_json(cfg)}, {"rows", table}, {"runs", extras}};
}

inline void write_report(const Report& r, const ExperimentConfig& cfg) {
  const std::string stem = "table" + std::to_string(r.table);
  detail::write_text(cfg.out / (stem + "_cells.csv"), cells_csv(r));
  detail::write_text(cfg.out / (stem + ".csv"), summary_csv(r));
  write_json(cfg.out / (stem + ".json"), report_json(r, cfg));
}

/// Train/test data for one cell.
inline TrainTestSplit load_cell_data(const ExperimentConfig& cfg, std::size_t spc,
                                     std::uint64_t seed, const LabeledDataset* mnist) {
  if (cfg.dataset == DatasetKind::mnist) {
    require(mnist != nullptr, ErrorCode::invalid_argument, "MNIST pool not loaded");
    return split_per_class(*mnist, spc, cfg.test_per_class, seed);
  }
  // Held-out faces come from an independent stream.
  return {generate_faces(cfg.faces, spc, seed).data,
          generate_faces(cfg.faces, cfg.test_per_class, seed + 0x5eedULL).data};
}

inline std::string prediction_log_header(std::size_t classes) {
  std::string s = "index,true_label";
  for (Pathway p : all_pathways)
    for (std::size_t c = 0; c < classes; ++c)
      s += ",p_" + std::string(to_string(p)) + "_" + std::to_string(c);
  for (std::size_t c = 0; c < classes; ++c) s += ",integrated_" + std::to_string(c);
  s += ",candidates,mask_blocks,final_label\n";
  return s;
}

inline std::string prediction_log_line(std::size_t index, std::size_t truth, const Prediction& p) {
  std::string s = std::to_string(index) + "," + std::to_string(truth);
  for (const Vector& v : p.pathway_posteriors)
    for (Eigen::Index c = 0; c < v.size(); ++c) s += "," + detail::fixed(v(c), 6);
  for (Eigen::Index c = 0; c < p.posterior.size(); ++c) s += "," + detail::fixed(p.posterior(c), 6);
  std::string cand;
  for (std::size_t c : p.candidates) cand += (cand.empty() ? "" : " ") + std::to_string(c);
  s += "," + cand + "," + std::to_string(p.selected_blocks) + "," + std::to_string(p.label) + "\n";
  return s;
}

using ProgressFn = std::function<void(const std::string&)>;

/// Runs every (samples per class, seed) cell; the report files are rewritten
/// after each cell so partial results survive an abort.
inline Report run_table(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  Report report;
  report.table = cfg.table;
  report.samples_per_class = cfg.samples_per_class;
  const std::vector<Variant> rows = table_rows(cfg);
  const std::vector<Variant> diags = diagnostic_rows();
  for (const Variant& v : rows) report.rows.push_back(v.name);
  for (const Variant& v : diags) report.diagnostics.push_back(v.name);

  std::optional<LabeledDataset> mnist;
  if (cfg.dataset == DatasetKind::mnist) mnist = load_mnist(cfg.mnist_images, cfg.mnist_labels);

  for (std::size_t spc : cfg.samples_per_class) {
    for (std::uint64_t seed : cfg.seeds) {
      if (progress)
        progress("cell samples_per_class=" + std::to_string(spc) + " seed=" + std::to_string(seed));
      TrainTestSplit data = load_cell_data(cfg, spc, seed, mnist ? &*mnist : nullptr);
      const Pipeline pl = train_pipeline(data.train, cfg.pipeline, seed);
      CellExtras extra{spc, seed, -1.0, 0, data.test.size()};
      LabeledDataset test = std::move(data.test);
      if (cfg.adversarial) {
        const SurrogateCnn surrogate = train_surrogate(data.train, cfg.surrogate, seed);
        AttackSet attacked = make_attack_set(test, surrogate, cfg.attack);
        extra.attack_success = attacked.success_rate();
        test = std::move(attacked.data);
      }
      const std::vector<FeatureSet> feats = pl.encoder.encode(test.images);

      std::string log = prediction_log_header(pl.class_count());
      auto evaluate = [&](const Variant& v, bool diagnostic) {
        std::size_t wrong = 0;
        for (std::size_t i = 0; i < feats.size(); ++i) {
          const Prediction p = predict(pl, feats[i], v.pathways, v.reselect);
          wrong += p.label != test.labels[i] ? 1 : 0;
          if (v.reselect) extra.reselected += p.reselected ? 1 : 0;
          if (v.reselect || (!cfg.adversarial && v.name == "BSNN Integrated"))
            log += prediction_log_line(i, test.labels[i], p);
        }
        report.cells.push_back({v.name, spc, seed,
                                100.0 * static_cast<double>(wrong) / static_cast<double>(feats.size()),
                                diagnostic});
      };
      for (const Variant& v : rows) evaluate(v, false);
      for (const Variant& v : diags) evaluate(v, true);
      report.extras.push_back(extra);
      if (cfg.write_predictions)
        detail::write_text(cfg.out / "predictions" /
                               ("table" + std::to_string(cfg.table) + "_n" + std::to_string(spc) +
                                "_seed" + std::to_string(seed) + ".csv"),
                           log);
      write_report(report, cfg);
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Visual exports
// ---------------------------------------------------------------------------

/// Nearest-neighbour enlargement for small heatmaps.
inline GrayImage upscale(const GrayImage& img, std::size_t factor) {
  std::vector<double> px(img.height() * factor * img.width() * factor);
  const std::size_t w = img.width() * factor;
  for (std::size_t y = 0; y < img.height() * factor; ++y)
    for (std::size_t x = 0; x < w; ++x) px[y * w + x] = img(y / factor, x / factor);
  return {img.height() * factor, w, std::move(px)};
}

/// K x K grid of 3x3 blocks as one (3K x 3K) image of raw values.
inline std::vector<double> relationship_image(std::span<const double> values, std::size_t k) {
  std::vector<double> px(9 * k * k);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t l = 0; l < k; ++l)
      for (std::size_t cell = 0; cell < 9; ++cell)
        px[(3 * j + cell / 3) * 3 * k + 3 * l + cell % 3] = values[(j * k + l) * 9 + cell];
  return px;
}

struct ManifestEntry {
  std::string path;  // relative to the output directory
  std::string kind;
};

struct VisualOptions {
  /// Candidate pair for the re-selection mask figure.
  std::size_t class_a = 5;
  std::size_t class_b = 6;
  std::size_t scale = 8;
};

/// Filters, semantic centres, per-class concepts and a re-selection mask.
/// `data` may be empty, in which case only the network visuals are written.
inline std::vector<ManifestEntry> export_visuals(const Pipeline& pl, const LabeledDataset& data,
                                                 const std::filesystem::path& out,
                                                 const VisualOptions& opt = {}) {
  std::filesystem::create_directories(out);
  std::vector<ManifestEntry> files;
  auto emit = [&](const std::string& name, const std::string& kind, const GrayImage& img) {
    write_pgm(out / name, img);
    files.push_back({name, kind});
  };
  const CdbnStack& stack = pl.encoder.stack;
  for (std::size_t l = 0; l < stack.depth(); ++l) {
    std::vector<GrayImage> tiles;
    for (std::size_t k = 0; k < stack.layers[l].feature_count(); ++k)
      tiles.push_back(upscale(visualize_feature(stack, l, k), 2));
    emit("filters_layer" + std::to_string(l + 1) + ".pgm", "filter_montage", montage(tiles, 10, 2));
  }
  {
    std::vector<GrayImage> tiles;
    for (const Tensor3& c : pl.encoder.bank.centers)
      tiles.push_back(upscale(normalized(c.height(), c.width(), c.values()), 4));
    emit("semantic_centers.pgm", "semantic_montage", montage(tiles, tiles.size(), 2));
  }
  if (!data.images.empty()) {
    data.validate();
    const std::vector<FeatureSet> feats = pl.encoder.encode(data.images);
    const std::size_t k = pl.encoder.bank.cluster_count();
    std::vector<Tensor3> pms;
    std::vector<RelationshipMatrix> rms;
    for (const FeatureSet& f : feats) {
      Tensor3 pm(k, 8, 8);
      std::copy(f[Pathway::position8].data(), f[Pathway::position8].data() + pm.size(),
                pm.values().begin());
      pms.push_back(std::move(pm));
      const Vector& r = f[Pathway::relationship];
      rms.push_back({k, std::vector<double>(r.data(), r.data() + r.size()),
                     std::vector<bool>(k, true)});
    }
    // Concepts are formed over the classes present in `data`.
    const std::vector<std::size_t> counts = data.class_counts();
    std::vector<std::size_t> remap(data.class_count, 0), keep, labels;
    for (std::size_t c = 0; c < data.class_count; ++c) {
      if (counts[c] == 0) continue;
      remap[c] = keep.size();
      keep.push_back(c);
    }
    for (std::size_t y : data.labels) labels.push_back(remap[y]);
    const std::vector<Concept> concepts = concept_distribution(pms, rms, labels, keep.size());
    for (std::size_t u = 0; u < keep.size(); ++u) {
      const std::string cls = std::to_string(keep[u]);
      std::vector<GrayImage> tiles;
      for (std::size_t j = 0; j < k; ++j)
        tiles.push_back(upscale(normalized(8, 8, concepts[u].position.channel(j)), opt.scale));
      emit("concept_pm_class" + cls + ".pgm", "mean_position_matrix", montage(tiles, k, 2));
      const std::vector<double> rm = relationship_image(concepts[u].relationship.values, k);
      emit("concept_rm_class" + cls + ".pgm", "mean_relationship_matrix",
           upscale(normalized(3 * k, 3 * k, rm), opt.scale));
    }
  }
  if (opt.class_a < pl.class_count() && opt.class_b < pl.class_count() && opt.class_a != opt.class_b) {
    const std::vector<std::size_t> pair = {opt.class_a, opt.class_b};
    const std::size_t k = pl.encoder.bank.cluster_count();
    const FeatureMask mask =
        reselect_features(pair, pl.model(Pathway::relationship), pl.encoder.blocks(Pathway::relationship));
    std::vector<double> cells(9 * k * k, 0.0);
    for (std::size_t b = 0; b < mask.size(); ++b)
      for (std::size_t c = 0; c < 9; ++c) cells[b * 9 + c] = mask[b] ? 1.0 : 0.0;
    const std::vector<double> img = relationship_image(cells, k);
    emit("reselection_mask_" + std::to_string(opt.class_a) + "_vs_" + std::to_string(opt.class_b) +
             ".pgm",
         "reselection_mask", upscale(GrayImage(3 * k, 3 * k, img), opt.scale));
  }
  json manifest = json::array();
  for (const ManifestEntry& f : files) manifest.push_back({{"path", f.path}, {"kind", f.kind}});
  write_json(out / "manifest.json", {{"files", manifest}});
  return files;
}

}  // namespace bsnn
