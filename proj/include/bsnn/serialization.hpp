#pragma once

// JSON checkpoints for every trained component and partial-override parsing
// for configuration documents (absent keys keep their defaults).

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bsnn/adversarial.hpp"
#include "bsnn/pipeline.hpp"

namespace bsnn {

using json = nlohmann::json;

namespace detail {

template <class T>
void read_if(const json& j, const char* key, T& field) {
  if (j.contains(key)) j.at(key).get_to(field);
}

inline json matrix_json(const RowMatrix& m) {
  return {{"rows", m.rows()},
          {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

inline RowMatrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  require(static_cast<Eigen::Index>(data.size()) == rows * cols, ErrorCode::shape_mismatch,
          "matrix payload does not match its shape");
  RowMatrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

inline json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(data.data(), static_cast<Eigen::Index>(data.size()));
}

}  // namespace detail

inline void to_json(json& j, const Tensor3& t) {
  j = {{"channels", t.channels()},
       {"height", t.height()},
       {"width", t.width()},
       {"data", std::vector<double>(t.values().begin(), t.values().end())}};
}

inline void from_json(const json& j, Tensor3& t) {
  t = Tensor3(j.at("channels").get<std::size_t>(), j.at("height").get<std::size_t>(),
              j.at("width").get<std::size_t>());
  const auto data = j.at("data").get<std::vector<double>>();
  require(data.size() == t.size(), ErrorCode::shape_mismatch,
          "tensor payload does not match its shape");
  std::copy(data.begin(), data.end(), t.values().begin());
}

inline void to_json(json& j, const CrbmParams& p) {
  j = {{"visible_width", p.visible_width},
       {"kernel_width", p.kernel_width},
       {"pool_size", p.pool_size},
       {"channels", p.channels},
       {"kernels", detail::matrix_json(p.kernels)},
       {"hidden_bias", detail::vector_json(p.hidden_bias)},
       {"visible_bias", detail::vector_json(p.visible_bias)}};
}

inline void from_json(const json& j, CrbmParams& p) {
  p.visible_width = j.at("visible_width").get<std::size_t>();
  p.kernel_width = j.at("kernel_width").get<std::size_t>();
  p.pool_size = j.at("pool_size").get<std::size_t>();
  p.channels = j.at("channels").get<std::size_t>();
  p.kernels = detail::matrix_from(j.at("kernels"));
  p.hidden_bias = detail::vector_from(j.at("hidden_bias"));
  p.visible_bias = detail::vector_from(j.at("visible_bias"));
  p.validate();
}

inline void to_json(json& j, const CdbnStack& s) { j = {{"layers", s.layers}}; }

inline void from_json(const json& j, CdbnStack& s) {
  s.layers = j.at("layers").get<std::vector<CrbmParams>>();
  s.validate();
}

inline void to_json(json& j, const SemanticBank& b) {
  j = {{"centers", b.centers}, {"assignment", b.assignment}, {"wcss_trace", b.wcss_trace}};
}

inline void from_json(const json& j, SemanticBank& b) {
  b.centers = j.at("centers").get<std::vector<Tensor3>>();
  b.assignment = j.at("assignment").get<std::vector<std::size_t>>();
  detail::read_if(j, "wcss_trace", b.wcss_trace);
}

inline void to_json(json& j, const PathwayModel& m) {
  j = {{"name", m.name},
       {"weights", detail::matrix_json(m.weights)},
       {"bias", detail::vector_json(m.bias)},
       {"mean", detail::vector_json(m.mean)},
       {"scale", detail::vector_json(m.scale)}};
}

inline void from_json(const json& j, PathwayModel& m) {
  m.name = j.at("name").get<std::string>();
  m.weights = detail::matrix_from(j.at("weights"));
  m.bias = detail::vector_from(j.at("bias"));
  m.mean = detail::vector_from(j.at("mean"));
  m.scale = detail::vector_from(j.at("scale"));
  require(m.bias.size() == m.weights.rows() && m.mean.size() == m.weights.cols() &&
              m.scale.size() == m.weights.cols(),
          ErrorCode::shape_mismatch, "pathway model '" + m.name + "' is inconsistent");
}

inline void to_json(json& j, const CrbmTrainConfig& c) {
  j = {{"features", c.features},
       {"kernel_width", c.kernel_width},
       {"pool_size", c.pool_size},
       {"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"momentum", c.momentum},
       {"init_sigma", c.init_sigma},
       {"sparsity_target", c.cd.sparsity_target},
       {"sparsity_cost", c.cd.sparsity_cost}};
}

inline void from_json(const json& j, CrbmTrainConfig& c) {
  detail::read_if(j, "features", c.features);
  detail::read_if(j, "kernel_width", c.kernel_width);
  detail::read_if(j, "pool_size", c.pool_size);
  detail::read_if(j, "learning_rate", c.learning_rate);
  detail::read_if(j, "batch_size", c.batch_size);
  detail::read_if(j, "epochs", c.epochs);
  detail::read_if(j, "momentum", c.momentum);
  detail::read_if(j, "init_sigma", c.init_sigma);
  detail::read_if(j, "sparsity_target", c.cd.sparsity_target);
  detail::read_if(j, "sparsity_cost", c.cd.sparsity_cost);
}

inline void to_json(json& j, const SoftmaxTrainConfig& c) {
  j = {{"l2", c.l2}, {"learning_rate", c.learning_rate}, {"iterations", c.iterations}};
}

inline void from_json(const json& j, SoftmaxTrainConfig& c) {
  detail::read_if(j, "l2", c.l2);
  detail::read_if(j, "learning_rate", c.learning_rate);
  detail::read_if(j, "iterations", c.iterations);
}

inline std::vector<std::string> pathway_names(std::span<const Pathway> ps) {
  std::vector<std::string> out;
  for (Pathway p : ps) out.emplace_back(to_string(p));
  return out;
}

inline std::vector<Pathway> parse_pathways(const json& j) {
  std::vector<Pathway> out;
  for (const auto& name : j.get<std::vector<std::string>>()) out.push_back(parse_pathway(name));
  return out;
}

inline void to_json(json& j, const PipelineConfig& c) {
  j = {{"cdbn_layers", c.cdbn.layers},
       {"cdbn_train_limit", c.cdbn_train_limit},
       {"semantic_clusters", c.semantic_clusters},
       {"kmeans_restarts", c.kmeans_restarts},
       {"kmeans_max_iter", c.kmeans_max_iter},
       {"presence_fraction", c.presence_fraction},
       {"rneuron_sigma", c.rneuron_sigma},
       {"softmax", c.softmax},
       {"epsilon", c.epsilon},
       {"rho", c.rho},
       {"integrated", pathway_names(c.integrated)},
       {"reselection", pathway_names(c.reselection)}};
}

/// Layer entries override the corresponding layer of the existing geometry.
inline void from_json(const json& j, PipelineConfig& c) {
  if (j.contains("cdbn_layers")) {
    const json& layers = j.at("cdbn_layers");
    require(layers.is_array() && !layers.empty(), ErrorCode::invalid_argument,
            "cdbn_layers must be a non-empty array");
    c.cdbn.layers.resize(layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) from_json(layers[l], c.cdbn.layers[l]);
  }
  detail::read_if(j, "cdbn_train_limit", c.cdbn_train_limit);
  detail::read_if(j, "semantic_clusters", c.semantic_clusters);
  detail::read_if(j, "kmeans_restarts", c.kmeans_restarts);
  detail::read_if(j, "kmeans_max_iter", c.kmeans_max_iter);
  detail::read_if(j, "presence_fraction", c.presence_fraction);
  detail::read_if(j, "rneuron_sigma", c.rneuron_sigma);
  if (j.contains("softmax")) from_json(j.at("softmax"), c.softmax);
  detail::read_if(j, "epsilon", c.epsilon);
  detail::read_if(j, "rho", c.rho);
  if (j.contains("integrated")) c.integrated = parse_pathways(j.at("integrated"));
  if (j.contains("reselection")) c.reselection = parse_pathways(j.at("reselection"));
}

inline void to_json(json& j, const Pipeline& p) {
  j = {{"format", "bsnn-pipeline"},
       {"config", p.config},
       {"stack", p.encoder.stack},
       {"semantic", p.encoder.bank},
       {"presence_fraction", p.encoder.presence_fraction},
       {"rneuron_sigma", p.encoder.rneuron_sigma},
       {"models", p.models},
       {"priors", detail::vector_json(p.priors)}};
}

inline void from_json(const json& j, Pipeline& p) {
  require(j.value("format", "") == "bsnn-pipeline", ErrorCode::invalid_argument,
          "not a pipeline checkpoint");
  from_json(j.at("config"), p.config);
  p.encoder.stack = j.at("stack").get<CdbnStack>();
  p.encoder.bank = j.at("semantic").get<SemanticBank>();
  p.encoder.presence_fraction = j.at("presence_fraction").get<double>();
  p.encoder.rneuron_sigma = j.at("rneuron_sigma").get<double>();
  p.models = j.at("models").get<std::vector<PathwayModel>>();
  p.priors = detail::vector_from(j.at("priors"));
  require(p.models.size() == pathway_count, ErrorCode::shape_mismatch,
          "checkpoint must hold one model per pathway");
}

inline void to_json(json& j, const SurrogateCnn& m) {
  j = {{"format", "bsnn-surrogate"},
       {"input_width", m.input_width},
       {"kernel_width", m.kernel_width},
       {"kernels", detail::matrix_json(m.kernels)},
       {"conv_bias", detail::vector_json(m.conv_bias)},
       {"dense", detail::matrix_json(m.dense)},
       {"dense_bias", detail::vector_json(m.dense_bias)}};
}

inline void from_json(const json& j, SurrogateCnn& m) {
  m.input_width = j.at("input_width").get<std::size_t>();
  m.kernel_width = j.at("kernel_width").get<std::size_t>();
  m.kernels = detail::matrix_from(j.at("kernels"));
  m.conv_bias = detail::vector_from(j.at("conv_bias"));
  m.dense = detail::matrix_from(j.at("dense"));
  m.dense_bias = detail::vector_from(j.at("dense_bias"));
}

inline void to_json(json& j, const SurrogateTrainConfig& c) {
  j = {{"filters", c.filters},       {"kernel_width", c.kernel_width},
       {"epochs", c.epochs},         {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate}, {"l2", c.l2},
       {"init_sigma", c.init_sigma}};
}

inline void from_json(const json& j, SurrogateTrainConfig& c) {
  detail::read_if(j, "filters", c.filters);
  detail::read_if(j, "kernel_width", c.kernel_width);
  detail::read_if(j, "epochs", c.epochs);
  detail::read_if(j, "batch_size", c.batch_size);
  detail::read_if(j, "learning_rate", c.learning_rate);
  detail::read_if(j, "l2", c.l2);
  detail::read_if(j, "init_sigma", c.init_sigma);
}

inline void to_json(json& j, const PerturbConfig& c) {
  j = {{"target", c.target}, {"eps_step", c.eps_step}, {"max_steps", c.max_steps}};
}

inline void from_json(const json& j, PerturbConfig& c) {
  detail::read_if(j, "target", c.target);
  detail::read_if(j, "eps_step", c.eps_step);
  detail::read_if(j, "max_steps", c.max_steps);
}

inline void to_json(json& j, const FaceSpec& s) {
  std::vector<std::vector<std::string>> shapes;
  for (const auto& tuple : s.class_shapes) {
    std::vector<std::string> names;
    for (Shape sh : tuple) names.emplace_back(to_string(sh));
    shapes.push_back(std::move(names));
  }
  j = {{"canvas", s.canvas},
       {"class_shapes", shapes},
       {"position_jitter", s.position_jitter},
       {"scale_min", s.scale_min},
       {"scale_max", s.scale_max},
       {"max_retries", s.max_retries}};
}

inline Shape parse_shape(std::string_view name) {
  for (Shape s : all_shapes)
    if (to_string(s) == name) return s;
  throw Error(ErrorCode::invalid_argument, "unknown shape '" + std::string(name) + "'");
}

inline void from_json(const json& j, FaceSpec& s) {
  detail::read_if(j, "canvas", s.canvas);
  if (j.contains("class_shapes")) {
    s.class_shapes.clear();
    for (const auto& tuple : j.at("class_shapes").get<std::vector<std::vector<std::string>>>()) {
      require(tuple.size() == 4, ErrorCode::invalid_argument, "a face has four components");
      s.class_shapes.push_back({parse_shape(tuple[0]), parse_shape(tuple[1]),
                                parse_shape(tuple[2]), parse_shape(tuple[3])});
    }
  }
  detail::read_if(j, "position_jitter", s.position_jitter);
  detail::read_if(j, "scale_min", s.scale_min);
  detail::read_if(j, "scale_max", s.scale_max);
  detail::read_if(j, "max_retries", s.max_retries);
}

inline json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
  }
}

inline void write_json(const std::filesystem::path& path, const json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

template <class T>
void save(const std::filesystem::path& path, const T& value) {
  write_json(path, json(value));
}

template <class T>
T load(const std::filesystem::path& path) {
  try {
    return read_json(path).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::invalid_argument, path.string() + ": " + e.what());
  }
}

}  // namespace bsnn
