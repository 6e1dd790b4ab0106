#pragma once

// End-to-end recogniser: CDBN episodic features, semantic maps, position and
// relationship matrices, one softmax per pathway, product-rule fusion and
// optional re-selection on ambiguous inputs.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bsnn/cdbn.hpp"
#include "bsnn/classifier.hpp"
#include "bsnn/population.hpp"
#include "bsnn/semantic.hpp"

namespace bsnn {

enum class Pathway : std::size_t {
  pixels,
  cdbn1,
  episodic,
  semantic,
  position4,
  position8,
  relationship
};

inline constexpr std::size_t pathway_count = 7;
inline constexpr std::array<Pathway, pathway_count> all_pathways = {
    Pathway::pixels,    Pathway::cdbn1,     Pathway::episodic,    Pathway::semantic,
    Pathway::position4, Pathway::position8, Pathway::relationship};

inline std::string_view to_string(Pathway p) {
  static constexpr std::array<std::string_view, pathway_count> names = {
      "pixels", "cdbn1", "episodic", "semantic", "position4", "position8", "relationship"};
  return names[static_cast<std::size_t>(p)];
}

inline Pathway parse_pathway(std::string_view name) {
  for (Pathway p : all_pathways)
    if (to_string(p) == name) return p;
  throw Error(ErrorCode::invalid_argument, "unknown pathway '" + std::string(name) + "'");
}

inline std::size_t grid_side(Pathway p) {
  return p == Pathway::position4 ? 4 : p == Pathway::position8 ? 8 : 0;
}

struct PipelineConfig {
  CdbnTrainConfig cdbn = CdbnTrainConfig::mnist();
  /// Cap on images used for unsupervised CDBN training (0 = all).
  std::size_t cdbn_train_limit = 0;
  std::size_t semantic_clusters = 8;
  std::size_t kmeans_restarts = 1;
  std::size_t kmeans_max_iter = 100;
  /// Presence threshold as a fraction of the map's cell count.
  double presence_fraction = 0.01;
  double rneuron_sigma = default_rneuron_sigma;
  SoftmaxTrainConfig softmax;
  double epsilon = 0.01;
  double rho = 0.5;
  std::vector<Pathway> integrated = {Pathway::episodic, Pathway::semantic, Pathway::position8,
                                     Pathway::relationship};
  /// Structural pathways re-scored on ambiguous inputs.
  std::vector<Pathway> reselection = {Pathway::position8, Pathway::relationship};

  void validate() const {
    require(semantic_clusters >= 1, ErrorCode::invalid_argument, "need at least one cluster");
    require(presence_fraction >= 0.0, ErrorCode::invalid_argument,
            "presence fraction must be non-negative");
    require(rneuron_sigma > 0.0, ErrorCode::invalid_argument, "RNeuron width must be positive");
    require(epsilon >= 0.0, ErrorCode::invalid_argument, "epsilon must be non-negative");
    require(rho > 0.0 && rho <= 1.0, ErrorCode::invalid_argument, "rho must lie in (0, 1]");
    require(!integrated.empty(), ErrorCode::invalid_argument, "integrated set is empty");
    for (Pathway p : reselection)
      require(p == Pathway::position4 || p == Pathway::position8 || p == Pathway::relationship,
              ErrorCode::invalid_argument, "only structural pathways can be re-selected");
  }
};

/// Every pathway's raw feature vector for one image.
struct FeatureSet {
  std::array<Vector, pathway_count> values;
  const Vector& operator[](Pathway p) const { return values[static_cast<std::size_t>(p)]; }
  Vector& operator[](Pathway p) { return values[static_cast<std::size_t>(p)]; }
};

inline Vector flatten(const Tensor3& t) {
  return Eigen::Map<const Vector>(t.values().data(), static_cast<Eigen::Index>(t.size()));
}

/// Structural front end: everything except the classifiers.
struct Encoder {
  CdbnStack stack;
  SemanticBank bank;
  double presence_fraction = 0.01;
  double rneuron_sigma = default_rneuron_sigma;

  FeatureSet encode(const GrayImage& img) const {
    require(img.height() == stack.input_width() && img.width() == stack.input_width(),
            ErrorCode::shape_mismatch, "image does not match the stack's input width");
    FeatureSet f;
    const Tensor3 v = img.tensor();
    f[Pathway::pixels] = flatten(v);
    const LayerActivations acts = extract_layers(v, stack);
    f[Pathway::cdbn1] = flatten(acts.pooled.front());
    f[Pathway::episodic] = flatten(acts.pooled.back());
    const Tensor3 sem = semantic_maps(acts.pooled.back(), bank);
    f[Pathway::semantic] = flatten(sem);
    for (Pathway p : {Pathway::position4, Pathway::position8})
      f[p] = flatten(position_matrices(sem, PNeuronGrid::uniform(grid_side(p), sem.height(),
                                                                 sem.width())));
    const auto locations = locate_features(sem, presence_fraction * static_cast<double>(sem.plane()));
    const double diag = std::hypot(static_cast<double>(sem.height()), static_cast<double>(sem.width()));
    const RelationshipMatrix rm = relationship_matrix(locations, diag, rneuron_sigma);
    f[Pathway::relationship] = Eigen::Map<const Vector>(rm.values.data(),
                                                        static_cast<Eigen::Index>(rm.values.size()));
    return f;
  }

  std::vector<FeatureSet> encode(std::span<const GrayImage> images) const {
    std::vector<FeatureSet> out;
    out.reserve(images.size());
    for (const GrayImage& im : images) out.push_back(encode(im));
    return out;
  }

  /// Block layout used for re-selection: one PM per semantic feature, one 3x3 block per pair.
  BlockPartition blocks(Pathway p) const {
    const std::size_t k = bank.cluster_count();
    if (p == Pathway::relationship) return BlockPartition::uniform(k * k * 9, 9);
    const std::size_t m = grid_side(p);
    require(m > 0, ErrorCode::invalid_argument, "pathway has no block structure");
    return BlockPartition::uniform(k * m * m, m * m);
  }
};

struct Pipeline {
  PipelineConfig config;
  Encoder encoder;
  std::vector<PathwayModel> models;  // indexed by Pathway
  Vector priors;

  std::size_t class_count() const { return static_cast<std::size_t>(priors.size()); }
  const PathwayModel& model(Pathway p) const { return models.at(static_cast<std::size_t>(p)); }
};

inline RowMatrix design_matrix(std::span<const FeatureSet> features, Pathway p) {
  require(!features.empty(), ErrorCode::invalid_argument, "no feature rows");
  const Eigen::Index d = features.front()[p].size();
  RowMatrix x(static_cast<Eigen::Index>(features.size()), d);
  for (std::size_t i = 0; i < features.size(); ++i)
    x.row(static_cast<Eigen::Index>(i)) = features[i][p].transpose();
  return x;
}

/// Encoder from an already trained stack: clusters the top-layer patches.
inline Encoder build_encoder(CdbnStack stack, const PipelineConfig& cfg, std::uint64_t seed) {
  const std::vector<Tensor3> patches = reconstruct_patches(stack);
  SemanticBank bank = kmeans(patches, cfg.semantic_clusters, seed, cfg.kmeans_max_iter,
                             cfg.kmeans_restarts);
  return {std::move(stack), std::move(bank), cfg.presence_fraction, cfg.rneuron_sigma};
}

inline Pipeline fit_classifiers(Encoder encoder, const LabeledDataset& train,
                                const PipelineConfig& cfg) {
  Pipeline pl{cfg, std::move(encoder), {}, class_priors(train.labels, train.class_count)};
  const std::vector<FeatureSet> feats = pl.encoder.encode(train.images);
  for (Pathway p : all_pathways)
    pl.models.push_back(train_pathway(std::string(to_string(p)), design_matrix(feats, p),
                                      train.labels, train.class_count, cfg.softmax));
  return pl;
}

inline Pipeline train_pipeline(const LabeledDataset& train, const PipelineConfig& cfg,
                               std::uint64_t seed) {
  cfg.validate();
  train.validate();
  std::span<const GrayImage> images(train.images);
  if (cfg.cdbn_train_limit > 0 && images.size() > cfg.cdbn_train_limit) {
    // Class-balanced cap: the training set is stored class-major, so stride through it.
    std::vector<GrayImage> picked;
    const double stride = static_cast<double>(images.size()) / static_cast<double>(cfg.cdbn_train_limit);
    for (std::size_t i = 0; i < cfg.cdbn_train_limit; ++i)
      picked.push_back(images[static_cast<std::size_t>(static_cast<double>(i) * stride)]);
    TrainedStack ts = train_stack(picked, cfg.cdbn, seed);
    return fit_classifiers(build_encoder(std::move(ts.stack), cfg, seed + 1), train, cfg);
  }
  TrainedStack ts = train_stack(images, cfg.cdbn, seed);
  return fit_classifiers(build_encoder(std::move(ts.stack), cfg, seed + 1), train, cfg);
}

struct Prediction {
  std::size_t label = 0;
  Vector posterior;                    // integrated posterior
  std::array<Vector, pathway_count> pathway_posteriors;
  std::vector<std::size_t> candidates;
  std::size_t selected_blocks = 0;     // total over re-selected pathways
  bool reselected = false;
};

inline std::array<Vector, pathway_count> pathway_posteriors(const Pipeline& pl,
                                                            const FeatureSet& f) {
  std::array<Vector, pathway_count> out;
  for (Pathway p : all_pathways)
    out[static_cast<std::size_t>(p)] = pathway_posterior(pl.model(p), f[p]);
  return out;
}

inline Vector integrated_posterior(const Pipeline& pl,
                                   const std::array<Vector, pathway_count>& posteriors,
                                   std::span<const Pathway> set) {
  std::vector<Vector> chosen;
  for (Pathway p : set) chosen.push_back(posteriors[static_cast<std::size_t>(p)]);
  return integrate(chosen, pl.priors, pl.config.epsilon);
}

/// Re-selected decision for an ambiguous candidate set.
inline std::size_t reselect_and_classify(const Pipeline& pl, const FeatureSet& f,
                                         std::span<const std::size_t> candidates,
                                         std::size_t* selected_blocks = nullptr) {
  std::vector<MaskedPathway> masked;
  std::size_t total = 0;
  for (Pathway p : pl.config.reselection) {
    BlockPartition blocks = pl.encoder.blocks(p);
    FeatureMask mask = reselect_features(candidates, pl.model(p), blocks);
    for (bool b : mask) total += b ? 1 : 0;
    masked.push_back({&pl.model(p), &f[p], std::move(blocks), std::move(mask)});
  }
  if (selected_blocks) *selected_blocks = total;
  return classify_ambiguous(candidates, masked, pl.priors, pl.config.epsilon);
}

inline Prediction predict(const Pipeline& pl, const FeatureSet& f, std::span<const Pathway> set,
                          bool reselect) {
  Prediction out;
  out.pathway_posteriors = pathway_posteriors(pl, f);
  out.posterior = integrated_posterior(pl, out.pathway_posteriors, set);
  out.label = argmax(out.posterior);
  out.candidates = detect_ambiguity(out.posterior, pl.config.rho);
  if (reselect && out.candidates.size() >= 2 && !pl.config.reselection.empty()) {
    out.label = reselect_and_classify(pl, f, out.candidates, &out.selected_blocks);
    out.reselected = true;
  }
  return out;
}

inline Prediction predict(const Pipeline& pl, const GrayImage& img, bool reselect = false) {
  return predict(pl, pl.encoder.encode(img), pl.config.integrated, reselect);
}

}  // namespace bsnn
