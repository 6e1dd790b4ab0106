#include <gtest/gtest.h>

#include <filesystem>

#include "bsnn/harness.hpp"

namespace fs = std::filesystem;
using namespace bsnn;

namespace {

const fs::path mnist_dir = BSNN_MNIST_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "bsnn_test_harness" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Small enough to train in a few seconds.
ExperimentConfig tiny_config(int table) {
  ExperimentConfig c = ExperimentConfig::for_table(table);
  c.mnist_images = mnist_dir / "train-images-idx3-ubyte";
  c.mnist_labels = mnist_dir / "train-labels-idx1-ubyte";
  c.samples_per_class = {3};
  c.seeds = {1};
  c.test_per_class = 2;
  for (CrbmTrainConfig& l : c.pipeline.cdbn.layers) {
    l.features = 4;
    l.epochs = 1;
  }
  c.pipeline.semantic_clusters = 3;
  c.pipeline.softmax.iterations = 20;
  c.surrogate.epochs = 1;
  c.surrogate.filters = 2;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Summary, SampleStandardDeviation) {
  const std::vector<double> xs = {2.0, 4.0, 9.0};
  const Summary s = summarize(xs);
  EXPECT_DOUBLE_EQ(s.mean, 5.0);
  EXPECT_DOUBLE_EQ(s.sd, std::sqrt(13.0));
  EXPECT_EQ(summarize(std::vector<double>{3.0}).sd, 0.0);
}

TEST(Config, TableDefaultsAndOverrides) {
  const ExperimentConfig t3 = ExperimentConfig::for_table(3);
  EXPECT_EQ(t3.dataset, DatasetKind::faces);
  EXPECT_EQ(t3.samples_per_class, (std::vector<std::size_t>{5, 10, 30}));
  EXPECT_EQ(t3.pipeline.cdbn.layers[0].kernel_width, 9u);
  EXPECT_TRUE(ExperimentConfig::for_table(2).adversarial);
  EXPECT_THROW(ExperimentConfig::for_table(4), Error);

  const json j = json::parse(R"({"table": 2, "seeds": [7], "test_per_class": 5,
      "pipeline": {"integrated": ["episodic", "relationship"], "rho": 0.3},
      "attack": {"target": 3}})");
  const ExperimentConfig c = parse_experiment(j);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(c.pipeline.integrated, (std::vector<Pathway>{Pathway::episodic, Pathway::relationship}));
  EXPECT_DOUBLE_EQ(c.pipeline.rho, 0.3);
  EXPECT_EQ(c.attack.target, 3u);
  EXPECT_EQ(table_rows(c).back().name, "BSNN after Re-selection");

  // The serialised form parses back to the same document.
  EXPECT_EQ(experiment_json(parse_experiment(experiment_json(c))), experiment_json(c));
}

TEST(Config, InvalidDocumentsAreRejected) {
  EXPECT_THROW(parse_experiment(json::parse(R"({"pipeline": {"integrated": ["hmax"]}})")), Error);
  EXPECT_THROW(parse_experiment(json::parse(R"({"pipeline": {"reselection": ["episodic"]}})")), Error);
  EXPECT_THROW(parse_experiment(json::parse(R"({"dataset": "cifar"})")), Error);
  EXPECT_THROW(parse_experiment(json::parse(R"({"table": 3, "adversarial": true})")), Error);
}

TEST(Pipeline, SerialisedModelPredictsIdentically) {
  const ExperimentConfig cfg = tiny_config(1);
  const LabeledDataset pool = load_mnist(cfg.mnist_images, cfg.mnist_labels);
  const TrainTestSplit data = split_per_class(pool, 3, 2, 4);
  const Pipeline pl = train_pipeline(data.train, cfg.pipeline, 4);
  const fs::path p = scratch("model") / "pipeline.json";
  save(p, pl);
  const Pipeline back = load<Pipeline>(p);
  EXPECT_EQ(back.models, pl.models);
  for (const GrayImage& im : data.test.images) {
    const Prediction a = predict(pl, im, true), b = predict(back, im, true);
    EXPECT_EQ(a.label, b.label);
    EXPECT_TRUE(a.posterior.isApprox(b.posterior, 1e-12));
  }
  const FeatureSet f = pl.encoder.encode(data.test.images[0]);
  EXPECT_EQ(f[Pathway::position8].size(), 3 * 64);
  EXPECT_EQ(f[Pathway::relationship].size(), 3 * 3 * 9);
  EXPECT_EQ(f[Pathway::episodic].size(), 4 * 4 * 4);
}

TEST(RunTable, DeterministicAndWritesReports) {
  ExperimentConfig cfg = tiny_config(2);
  const fs::path dir_a = scratch("run_a"), dir_b = scratch("run_b");
  cfg.out = dir_a;
  const Report a = run_table(cfg);
  cfg.out = dir_b;
  const Report b = run_table(cfg);
  ASSERT_EQ(a.cells.size(), 8u + 3u);
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    EXPECT_EQ(a.cells[i].row, b.cells[i].row);
    EXPECT_EQ(a.cells[i].error, b.cells[i].error);
  }
  EXPECT_EQ(slurp(dir_a / "table2.csv"), slurp(dir_b / "table2.csv"));
  for (const char* f : {"table2.csv", "table2_cells.csv", "table2.json", "predictions/table2_n3_seed1.csv"})
    EXPECT_TRUE(fs::exists(cfg.out / f)) << f;
  const json r = read_json(cfg.out / "table2.json");
  EXPECT_EQ(r.at("rows").size(), 11u);
  ASSERT_EQ(a.extras.size(), 1u);
  EXPECT_GE(a.extras[0].attack_success, 0.0);
  EXPECT_EQ(a.extras[0].test_size, 20u);
}

TEST(Visuals, ManifestMatchesFilesOnDisk) {
  const ExperimentConfig cfg = tiny_config(1);
  const LabeledDataset pool = load_mnist(cfg.mnist_images, cfg.mnist_labels);
  const TrainTestSplit data = split_per_class(pool, 3, 1, 2);
  const Pipeline pl = train_pipeline(data.train, cfg.pipeline, 2);
  const fs::path out = scratch("visuals");
  const std::vector<ManifestEntry> files = export_visuals(pl, data.train, out);
  const json manifest = read_json(out / "manifest.json");
  ASSERT_EQ(manifest.at("files").size(), files.size());
  std::size_t pgm_on_disk = 0;
  for (const auto& e : fs::directory_iterator(out)) pgm_on_disk += e.path().extension() == ".pgm";
  EXPECT_EQ(pgm_on_disk, files.size());
  for (const json& f : manifest.at("files")) {
    const GrayImage img = read_pgm(out / f.at("path").get<std::string>());
    EXPECT_GT(img.height(), 0u);
  }
  // Two filter montages, the semantic centres, two concept images per class and the mask.
  EXPECT_EQ(files.size(), 2u + 1u + 2u * 10u + 1u);
}
