// bsnn: train, evaluate and attack the structural recogniser; regenerate the
// error tables and the figure exports.
//
//   bsnn [--config FILE] [--set /json/pointer=VALUE]... [--seed N] [--out DIR]
//        [--table {1,2,3}] <command> [command options]
//
// Failures print one JSON error record on stderr and exit nonzero.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "bsnn/bsnn.hpp"

namespace fs = std::filesystem;
using namespace bsnn;

namespace {

struct GlobalOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> table;
};

ExperimentConfig load_config(const GlobalOptions& g) {
  json doc = g.config.empty() ? json::object() : read_json(g.config);
  for (const std::string& kv : g.overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos && !kv.empty() && kv[0] == '/', ErrorCode::invalid_argument,
            "--set expects /json/pointer=value, got '" + kv + "'");
    const std::string value = kv.substr(eq + 1);
    json parsed = json::parse(value, nullptr, false);
    if (parsed.is_discarded()) parsed = value;  // bare strings need no quotes
    doc[json::json_pointer(kv.substr(0, eq))] = parsed;
  }
#ifdef BSNN_MNIST_DIR
  // Default to the subset next to the sources rather than the working directory.
  if (!doc.contains("mnist_images")) doc["mnist_images"] = BSNN_MNIST_DIR "/train-images-idx3-ubyte";
  if (!doc.contains("mnist_labels")) doc["mnist_labels"] = BSNN_MNIST_DIR "/train-labels-idx1-ubyte";
#endif
  if (g.table) doc["table"] = *g.table;
  if (g.seed) doc["seeds"] = {*g.seed};
  if (g.out) doc["out"] = *g.out;
  ExperimentConfig cfg = parse_experiment(doc);
  // Misspelt keys would otherwise be dropped silently and the defaults run instead.
  const json known = experiment_json(cfg).flatten();
  const json given = doc.flatten();
  for (const auto& [path, value] : given.items())
    require(known.contains(path), ErrorCode::invalid_argument, "unknown config field " + path);
  return cfg;
}

std::optional<LabeledDataset> load_pool(const ExperimentConfig& cfg) {
  if (cfg.dataset != DatasetKind::mnist) return std::nullopt;
  return load_mnist(cfg.mnist_images, cfg.mnist_labels);
}

// The first (samples per class, seed) cell of the configuration.
TrainTestSplit first_cell(const ExperimentConfig& cfg, std::size_t spc) {
  const auto pool = load_pool(cfg);
  return load_cell_data(cfg, spc, cfg.seeds.front(), pool ? &*pool : nullptr);
}

void log(const std::string& msg) { std::cerr << "[bsnn] " << msg << std::endl; }

std::string csv_line(std::initializer_list<std::string> fields) {
  std::string s;
  for (const std::string& f : fields) s += (s.empty() ? "" : ",") + f;
  return s + "\n";
}

int cmd_train(const ExperimentConfig& cfg, std::size_t spc) {
  const TrainTestSplit data = first_cell(cfg, spc);
  const std::uint64_t seed = cfg.seeds.front();
  log("training on " + std::to_string(data.train.size()) + " images, seed " + std::to_string(seed));
  const Pipeline pl = train_pipeline(data.train, cfg.pipeline, seed);
  save(cfg.out / "model.json", pl);

  const std::vector<FeatureSet> feats = pl.encoder.encode(data.train.images);
  json acc = json::object();
  std::string csv = "pathway,train_error_percent\n";
  for (Pathway p : all_pathways) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < feats.size(); ++i)
      wrong += argmax(pathway_posterior(pl.model(p), feats[i][p])) != data.train.labels[i];
    const double err = 100.0 * static_cast<double>(wrong) / static_cast<double>(feats.size());
    acc[std::string(to_string(p))] = err;
    csv += csv_line({std::string(to_string(p)), std::to_string(err)});
  }
  write_json(cfg.out / "train.json", {{"seed", seed},
                                      {"samples_per_class", spc},
                                      {"train_size", data.train.size()},
                                      {"semantic_wcss", pl.encoder.bank.wcss_trace},
                                      {"semantic_assignment", pl.encoder.bank.assignment},
                                      {"train_error_percent", acc},
                                      {"config", experiment_json(cfg)}});
  detail::write_text(cfg.out / "train.csv", csv);
  log("wrote " + (cfg.out / "model.json").string());
  return 0;
}

int cmd_eval(const ExperimentConfig& cfg, const std::string& model_path, std::size_t spc) {
  const Pipeline pl = load<Pipeline>(model_path);
  TrainTestSplit data = first_cell(cfg, spc);
  LabeledDataset test = std::move(data.test);
  double attack_success = -1.0;
  if (cfg.adversarial) {
    const SurrogateCnn surrogate = train_surrogate(data.train, cfg.surrogate, cfg.seeds.front());
    AttackSet attacked = make_attack_set(test, surrogate, cfg.attack);
    attack_success = attacked.success_rate();
    test = std::move(attacked.data);
  }
  const std::vector<FeatureSet> feats = pl.encoder.encode(test.images);
  std::vector<Variant> rows = table_rows(cfg);
  const std::string logged = rows.back().name;  // the full model
  for (const Variant& v : diagnostic_rows()) rows.push_back(v);
  json result = json::array();
  std::string csv = "row,error_percent\n";
  std::string log_text = prediction_log_header(pl.class_count());
  for (const Variant& v : rows) {
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      const Prediction p = predict(pl, feats[i], v.pathways, v.reselect);
      wrong += p.label != test.labels[i];
      if (v.name == logged) log_text += prediction_log_line(i, test.labels[i], p);
    }
    const double err = 100.0 * static_cast<double>(wrong) / static_cast<double>(feats.size());
    result.push_back({{"row", v.name}, {"error_percent", err}});
    csv += detail::csv_field(v.name) + "," + detail::fixed(err, 4) + "\n";
  }
  json doc = {{"model", model_path}, {"test_size", test.size()}, {"rows", result}};
  if (attack_success >= 0.0) doc["attack_success"] = attack_success;
  write_json(cfg.out / "eval.json", doc);
  detail::write_text(cfg.out / "eval.csv", csv);
  detail::write_text(cfg.out / "eval_predictions.csv", log_text);
  std::cout << csv;
  return 0;
}

int cmd_table(const ExperimentConfig& cfg) {
  const Report r = run_table(cfg, log);
  std::cout << summary_csv(r);
  return 0;
}

int cmd_attack(const ExperimentConfig& cfg, std::size_t spc, std::size_t show) {
  require(cfg.dataset == DatasetKind::mnist, ErrorCode::invalid_argument,
          "the attack runs on MNIST");
  const TrainTestSplit data = first_cell(cfg, spc);
  log("training surrogate on " + std::to_string(data.train.size()) + " images");
  const SurrogateCnn surrogate = train_surrogate(data.train, cfg.surrogate, cfg.seeds.front());
  save(cfg.out / "surrogate.json", surrogate);
  const AttackSet set = make_attack_set(data.test, surrogate, cfg.attack);

  std::string csv = "index,label,target,attempted,steps,success\n";
  for (const AttackRecord& r : set.records)
    csv += csv_line({std::to_string(r.source_index), std::to_string(r.label),
                     std::to_string(r.target), r.attempted ? "1" : "0", std::to_string(r.steps),
                     r.success ? "1" : "0"});
  detail::write_text(cfg.out / "attack.csv", csv);
  write_idx(set.data, cfg.out / "attacked-images-idx3-ubyte", cfg.out / "attacked-labels-idx1-ubyte");

  // Clean and perturbed versions side by side, one pair per row.
  std::vector<GrayImage> tiles;
  for (std::size_t i = 0; i < set.records.size() && tiles.size() < 2 * show; ++i) {
    if (!set.records[i].attempted) continue;
    tiles.push_back(data.test.images[i]);
    tiles.push_back(set.data.images[i]);
  }
  if (!tiles.empty()) write_pgm(cfg.out / "attack_examples.pgm", montage(tiles, 2, 2));

  write_json(cfg.out / "attack.json", {{"success_rate", set.success_rate()},
                                       {"test_size", set.data.size()},
                                       {"attack", cfg.attack},
                                       {"surrogate", cfg.surrogate}});
  std::cout << "success_rate," << set.success_rate() << "\n";
  return 0;
}

int cmd_visualize(const ExperimentConfig& cfg, const std::string& model_path, std::size_t spc,
                  const std::vector<std::size_t>& classes, const VisualOptions& opt) {
  const Pipeline pl = load<Pipeline>(model_path);
  const TrainTestSplit data = first_cell(cfg, spc);
  LabeledDataset shown = data.train;
  if (!classes.empty()) {
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < shown.size(); ++i)
      if (std::find(classes.begin(), classes.end(), shown.labels[i]) != classes.end()) keep.push_back(i);
    shown = subset(shown, keep);
  }
  const auto files = export_visuals(pl, shown, cfg.out / "visuals", opt);
  for (const ManifestEntry& f : files) std::cout << (cfg.out / "visuals" / f.path).string() << "\n";
  return 0;
}

int cmd_faces_gen(const ExperimentConfig& cfg, std::size_t per_class) {
  const FaceDataset f = generate_faces(cfg.faces, per_class, cfg.seeds.front());
  const fs::path dir = cfg.out / "faces";
  fs::create_directories(dir);
  std::string csv = "file,label\n";
  json placements = json::array();
  for (std::size_t i = 0; i < f.data.size(); ++i) {
    const std::string name = "face_" + std::to_string(i) + "_class" + std::to_string(f.data.labels[i]) + ".pgm";
    write_pgm(dir / name, f.data.images[i]);
    csv += name + "," + std::to_string(f.data.labels[i]) + "\n";
    json parts = json::array();
    for (const Placement& p : f.placements[i])
      parts.push_back({{"shape", to_string(p.shape)}, {"cx", p.cx}, {"cy", p.cy}, {"size", p.size}});
    placements.push_back({{"file", name}, {"label", f.data.labels[i]}, {"components", parts}});
  }
  detail::write_text(dir / "labels.csv", csv);
  write_json(dir / "faces.json", {{"spec", cfg.faces}, {"seed", cfg.seeds.front()}, {"faces", placements}});
  write_pgm(dir / "montage.pgm", montage(f.data.images, per_class, 2));
  std::cout << f.data.size() << " faces written to " << dir.string() << "\n";
  return 0;
}

int fail(const std::string& code, const std::string& message, const std::string& command, int status) {
  std::cerr << json{{"status", "error"}, {"code", code}, {"message", message}, {"command", command}}.dump()
            << std::endl;
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural recogniser experiments"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the command
  GlobalOptions g;
  app.add_option("--config", g.config, "JSON experiment document")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override one field: /json/pointer=value (repeatable)");
  app.add_option("--seed", g.seed, "Run a single seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--table", g.table, "Table defaults to start from")->check(CLI::Range(1, 3));

  std::optional<std::size_t> samples;
  std::string model = "results/model.json";
  std::size_t show = 8, per_class = 10;
  std::vector<std::size_t> classes;
  VisualOptions vis;

  auto* train = app.add_subcommand("train", "Train a pipeline on the first configured cell");
  auto* eval = app.add_subcommand("eval", "Evaluate a saved pipeline on the held-out split");
  app.add_subcommand("table", "Run every (samples per class, seed) cell");
  auto* attack = app.add_subcommand("attack", "Perturb the held-out split against a surrogate");
  auto* visualize = app.add_subcommand("visualize", "Export filters, concepts and masks as PGM");
  auto* faces = app.add_subcommand("faces-gen", "Write synthetic faces as PGM");
  for (auto* sub : {train, eval, attack, visualize})
    sub->add_option("--samples", samples, "Training images per class");
  for (auto* sub : {eval, visualize}) sub->add_option("--model", model, "Pipeline checkpoint");
  attack->add_option("--show", show, "Example pairs in the montage");
  visualize->add_option("--classes", classes, "Restrict concept images to these classes");
  visualize->add_option("--pair", vis.class_a, "First class of the re-selection mask");
  visualize->add_option("--versus", vis.class_b, "Second class of the re-selection mask");
  faces->add_option("--per-class", per_class, "Faces per class");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), "", 64);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    const ExperimentConfig cfg = load_config(g);
    const std::size_t spc = samples.value_or(cfg.samples_per_class.front());
    if (command == "train") return cmd_train(cfg, spc);
    if (command == "eval") return cmd_eval(cfg, model, spc);
    if (command == "table") return cmd_table(cfg);
    if (command == "attack") return cmd_attack(cfg, spc, show);
    if (command == "visualize") return cmd_visualize(cfg, model, spc, classes, vis);
    return cmd_faces_gen(cfg, per_class);
  } catch (const Error& e) {
    return fail(std::string(to_string(e.code())), e.what(), command, 2);
  } catch (const json::exception& e) {
    return fail("invalid_argument", e.what(), command, 2);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), command, 3);
  }
}
