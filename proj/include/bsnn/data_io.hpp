#pragma once

// Dataset ingestion and synthesis: MNIST IDX files, seeded per-class subsets,
// the synthetic facial-shape set, and PGM/IDX export.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "bsnn/tensor.hpp"

namespace bsnn {

struct LabeledDataset {
  std::vector<GrayImage> images;
  std::vector<std::size_t> labels;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return images.size(); }

  void validate() const {
    require(images.size() == labels.size(), ErrorCode::count_mismatch,
            "images and labels differ in length");
    for (std::size_t l : labels)
      require(l < class_count, ErrorCode::invalid_argument, "label out of range");
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_count, 0);
    for (std::size_t l : labels) ++counts[l];
    return counts;
  }
};

inline LabeledDataset subset(const LabeledDataset& ds, std::span<const std::size_t> indices) {
  LabeledDataset out;
  out.class_count = ds.class_count;
  out.images.reserve(indices.size());
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    require(i < ds.size(), ErrorCode::invalid_argument, "subset index out of range");
    out.images.push_back(ds.images[i]);
    out.labels.push_back(ds.labels[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// IDX
// ---------------------------------------------------------------------------

namespace idx {

inline constexpr std::uint32_t image_magic = 2051;  // 0x00000803
inline constexpr std::uint32_t label_magic = 2049;  // 0x00000801

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t big_endian_u32(const std::vector<unsigned char>& bytes, std::size_t offset) {
  require(bytes.size() >= offset + 4, ErrorCode::truncated, "IDX header is truncated");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void put_u32(std::ofstream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline unsigned char quantize(double p) {
  return static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
}

}  // namespace idx

inline std::vector<GrayImage> load_idx_images(const std::filesystem::path& path) {
  const auto bytes = idx::read_file(path);
  const std::uint32_t magic = idx::big_endian_u32(bytes, 0);
  require(magic == idx::image_magic, ErrorCode::wrong_magic,
          path.string() + ": expected image magic 2051, got " + std::to_string(magic));
  const std::size_t count = idx::big_endian_u32(bytes, 4);
  const std::size_t rows = idx::big_endian_u32(bytes, 8);
  const std::size_t cols = idx::big_endian_u32(bytes, 12);
  const std::size_t need = 16 + count * rows * cols;
  require(bytes.size() >= need, ErrorCode::truncated,
          path.string() + ": declared " + std::to_string(count) + " images but payload holds " +
              std::to_string(rows * cols != 0 ? (bytes.size() - 16) / (rows * cols) : 0));
  std::vector<GrayImage> images;
  images.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    std::vector<double> px(rows * cols);
    const unsigned char* src = bytes.data() + 16 + n * rows * cols;
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>(src[i]) / 255.0;
    images.emplace_back(rows, cols, std::move(px));
  }
  return images;
}

inline std::vector<std::size_t> load_idx_labels(const std::filesystem::path& path) {
  const auto bytes = idx::read_file(path);
  const std::uint32_t magic = idx::big_endian_u32(bytes, 0);
  require(magic == idx::label_magic, ErrorCode::wrong_magic,
          path.string() + ": expected label magic 2049, got " + std::to_string(magic));
  const std::size_t count = idx::big_endian_u32(bytes, 4);
  require(bytes.size() >= 8 + count, ErrorCode::truncated,
          path.string() + ": declared " + std::to_string(count) + " labels but payload holds " +
              std::to_string(bytes.size() - 8));
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

inline LabeledDataset load_mnist(const std::filesystem::path& images_path,
                                 const std::filesystem::path& labels_path,
                                 std::size_t class_count = 10) {
  LabeledDataset ds;
  ds.images = load_idx_images(images_path);
  ds.labels = load_idx_labels(labels_path);
  require(ds.images.size() == ds.labels.size(), ErrorCode::count_mismatch,
          std::to_string(ds.images.size()) + " images vs " + std::to_string(ds.labels.size()) +
              " labels");
  ds.class_count = class_count;
  ds.validate();
  return ds;
}

/// Writes images (quantised to bytes) and labels as an IDX pair.
inline void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  require(!ds.images.empty(), ErrorCode::invalid_argument, "nothing to write");
  const std::size_t rows = ds.images.front().height(), cols = ds.images.front().width();
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  require(img && lab, ErrorCode::io, "cannot open IDX output files");
  idx::put_u32(img, idx::image_magic);
  idx::put_u32(img, static_cast<std::uint32_t>(ds.size()));
  idx::put_u32(img, static_cast<std::uint32_t>(rows));
  idx::put_u32(img, static_cast<std::uint32_t>(cols));
  for (const GrayImage& im : ds.images) {
    require(im.height() == rows && im.width() == cols, ErrorCode::shape_mismatch,
            "IDX images must share one shape");
    for (double p : im.pixels()) img.put(static_cast<char>(idx::quantize(p)));
  }
  idx::put_u32(lab, idx::label_magic);
  idx::put_u32(lab, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t l : ds.labels) lab.put(static_cast<char>(l));
  require(static_cast<bool>(img) && static_cast<bool>(lab), ErrorCode::io, "IDX write failed");
}

// ---------------------------------------------------------------------------
// Per-class sampling
// ---------------------------------------------------------------------------

/// Indices of n members per class, drawn without replacement; ascending within
/// each class, classes in label order.
inline std::vector<std::size_t> sample_indices_per_class(const LabeledDataset& ds, std::size_t n,
                                                         std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> members(ds.class_count);
  for (std::size_t i = 0; i < ds.size(); ++i) members[ds.labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> picked;
  picked.reserve(n * ds.class_count);
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    auto& m = members[c];
    require(m.size() >= n, ErrorCode::insufficient_samples,
            "class " + std::to_string(c) + " has " + std::to_string(m.size()) + " members, need " +
                std::to_string(n));
    std::shuffle(m.begin(), m.end(), rng);
    std::vector<std::size_t> chosen(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(chosen.begin(), chosen.end());
    picked.insert(picked.end(), chosen.begin(), chosen.end());
  }
  return picked;
}

inline LabeledDataset sample_per_class(const LabeledDataset& ds, std::size_t n,
                                       std::uint64_t seed) {
  const auto idx = sample_indices_per_class(ds, n, seed);
  return subset(ds, idx);
}

struct TrainTestSplit {
  LabeledDataset train;
  LabeledDataset test;
};

/// Disjoint per-class train and test draws from one pool.
inline TrainTestSplit split_per_class(const LabeledDataset& ds, std::size_t n_train,
                                      std::size_t n_test, std::uint64_t seed) {
  const auto both = sample_indices_per_class(ds, n_train + n_test, seed);
  std::vector<std::size_t> train_idx, test_idx;
  // Within each class block the order is ascending; re-shuffle before cutting so
  // the train/test boundary is not index-ordered.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  const std::size_t per = n_train + n_test;
  for (std::size_t c = 0; c < ds.class_count; ++c) {
    std::vector<std::size_t> block(both.begin() + static_cast<std::ptrdiff_t>(c * per),
                                   both.begin() + static_cast<std::ptrdiff_t>((c + 1) * per));
    std::shuffle(block.begin(), block.end(), rng);
    std::sort(block.begin(), block.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::sort(block.begin() + static_cast<std::ptrdiff_t>(n_train), block.end());
    train_idx.insert(train_idx.end(), block.begin(),
                     block.begin() + static_cast<std::ptrdiff_t>(n_train));
    test_idx.insert(test_idx.end(), block.begin() + static_cast<std::ptrdiff_t>(n_train),
                    block.end());
  }
  return {subset(ds, train_idx), subset(ds, test_idx)};
}

// ---------------------------------------------------------------------------
// Synthetic faces
// ---------------------------------------------------------------------------

enum class Shape { circle, triangle, square, diamond, cross };

inline constexpr std::array<Shape, 5> all_shapes = {Shape::circle, Shape::triangle, Shape::square,
                                                    Shape::diamond, Shape::cross};

inline std::string_view to_string(Shape s) {
  switch (s) {
    case Shape::circle: return "circle";
    case Shape::triangle: return "triangle";
    case Shape::square: return "square";
    case Shape::diamond: return "diamond";
    case Shape::cross: return "cross";
  }
  return "?";
}

enum Component : std::size_t { left_eye = 0, right_eye = 1, nose = 2, mouth = 3 };

struct FaceSpec {
  std::size_t canvas = 64;
  /// Shapes for {left eye, right eye, nose, mouth}, one tuple per class.
  std::vector<std::array<Shape, 4>> class_shapes = latin_square();
  /// Maximum per-axis displacement of a component centre, in pixels.
  double position_jitter = 0.12 * 64;
  /// Component side length as a fraction of the canvas.
  double scale_min = 0.6 * 0.16;
  double scale_max = 1.4 * 0.16;
  /// Nominal component centres (x, y) as canvas fractions.
  std::array<std::array<double, 2>, 4> anchors = {{{0.30, 0.30}, {0.70, 0.30}, {0.50, 0.52},
                                                   {0.50, 0.76}}};
  std::size_t max_retries = 100;

  // Class c takes shape (c + component) mod 5 for each component, so any two
  // classes differ in all four components.
  static std::vector<std::array<Shape, 4>> latin_square() {
    std::vector<std::array<Shape, 4>> out;
    for (std::size_t c = 0; c < all_shapes.size(); ++c)
      out.push_back({all_shapes[c % 5], all_shapes[(c + 1) % 5], all_shapes[(c + 2) % 5],
                     all_shapes[(c + 3) % 5]});
    return out;
  }

  void validate() const {
    require(canvas >= 8, ErrorCode::invalid_argument, "canvas too small");
    require(!class_shapes.empty(), ErrorCode::invalid_argument, "no face classes");
    for (std::size_t a = 0; a < class_shapes.size(); ++a)
      for (std::size_t b = a + 1; b < class_shapes.size(); ++b)
        require(class_shapes[a] != class_shapes[b], ErrorCode::invalid_argument,
                "two face classes share the same component shapes");
    require(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0,
            ErrorCode::invalid_argument, "scale range must lie within (0,1]");
    require(position_jitter >= 0.0, ErrorCode::invalid_argument, "negative jitter");
    const double n = static_cast<double>(canvas);
    const double reach = position_jitter + 0.5 * scale_max * n;
    for (const auto& a : anchors) {
      for (double f : a) {
        require(f * n - reach >= 0.0 && f * n + reach <= n, ErrorCode::invalid_argument,
                "jitter and scale can push a component off the canvas");
      }
    }
  }
};

/// Axis-aligned footprint of one drawn component; [x0,x1) x [y0,y1) in pixels.
struct Placement {
  Shape shape = Shape::circle;
  double cx = 0, cy = 0, size = 0;

  double x0() const { return cx - 0.5 * size; }
  double x1() const { return cx + 0.5 * size; }
  double y0() const { return cy - 0.5 * size; }
  double y1() const { return cy + 0.5 * size; }
};

inline bool inside_shape(Shape shape, double dx, double dy, double r) {
  switch (shape) {
    case Shape::circle: return dx * dx + dy * dy <= r * r;
    case Shape::square: return std::abs(dx) <= r && std::abs(dy) <= r;
    case Shape::diamond: return std::abs(dx) + std::abs(dy) <= r;
    case Shape::triangle: return dy >= -r && dy <= r && std::abs(dx) <= 0.5 * (dy + r);
    case Shape::cross:
      return (std::abs(dx) <= r / 3.0 && std::abs(dy) <= r) ||
             (std::abs(dy) <= r / 3.0 && std::abs(dx) <= r);
  }
  return false;
}

/// Rasterises a filled shape (intensity 1) by sampling pixel centres.
inline void draw(std::vector<double>& canvas, std::size_t side, const Placement& p) {
  const double r = 0.5 * p.size;
  const auto lo_y = static_cast<std::ptrdiff_t>(std::floor(p.y0()));
  const auto hi_y = static_cast<std::ptrdiff_t>(std::ceil(p.y1()));
  const auto lo_x = static_cast<std::ptrdiff_t>(std::floor(p.x0()));
  const auto hi_x = static_cast<std::ptrdiff_t>(std::ceil(p.x1()));
  for (std::ptrdiff_t y = std::max<std::ptrdiff_t>(lo_y, 0);
       y < std::min<std::ptrdiff_t>(hi_y, static_cast<std::ptrdiff_t>(side)); ++y) {
    for (std::ptrdiff_t x = std::max<std::ptrdiff_t>(lo_x, 0);
         x < std::min<std::ptrdiff_t>(hi_x, static_cast<std::ptrdiff_t>(side)); ++x) {
      if (inside_shape(p.shape, static_cast<double>(x) + 0.5 - p.cx,
                       static_cast<double>(y) + 0.5 - p.cy, r))
        canvas[static_cast<std::size_t>(y) * side + static_cast<std::size_t>(x)] = 1.0;
    }
  }
}

/// Boxes separated by at least `gap` pixels on some axis.
inline bool disjoint(const Placement& a, const Placement& b, double gap = 1.0) {
  return a.x1() + gap <= b.x0() || b.x1() + gap <= a.x0() || a.y1() + gap <= b.y0() ||
         b.y1() + gap <= a.y0();
}

struct FaceDataset {
  LabeledDataset data;
  std::vector<std::array<Placement, 4>> placements;
};

/// Class-major: per_class faces of class 0, then class 1, ...
inline FaceDataset generate_faces(const FaceSpec& spec, std::size_t per_class,
                                  std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-spec.position_jitter, spec.position_jitter);
  std::uniform_real_distribution<double> scale(spec.scale_min, spec.scale_max);
  const double n = static_cast<double>(spec.canvas);

  FaceDataset out;
  out.data.class_count = spec.class_shapes.size();
  for (std::size_t c = 0; c < spec.class_shapes.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      std::array<Placement, 4> parts{};
      bool ok = false;
      for (std::size_t attempt = 0; attempt < spec.max_retries && !ok; ++attempt) {
        for (std::size_t k = 0; k < 4; ++k) {
          parts[k].shape = spec.class_shapes[c][k];
          parts[k].cx = spec.anchors[k][0] * n + jitter(rng);
          parts[k].cy = spec.anchors[k][1] * n + jitter(rng);
          parts[k].size = scale(rng) * n;
        }
        ok = true;
        for (std::size_t a = 0; a < 4 && ok; ++a) {
          ok = parts[a].x0() >= 0.0 && parts[a].y0() >= 0.0 && parts[a].x1() <= n &&
               parts[a].y1() <= n;
          for (std::size_t b = a + 1; b < 4 && ok; ++b) ok = disjoint(parts[a], parts[b]);
        }
      }
      require(ok, ErrorCode::placement_failed,
              "could not place non-overlapping components after " +
                  std::to_string(spec.max_retries) + " attempts");
      std::vector<double> px(spec.canvas * spec.canvas, 0.0);
      for (const Placement& p : parts) draw(px, spec.canvas, p);
      out.data.images.emplace_back(spec.canvas, spec.canvas, std::move(px));
      out.data.labels.push_back(c);
      out.placements.push_back(parts);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::io, "cannot open " + path.string());
  out << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  for (double p : img.pixels()) out.put(static_cast<char>(idx::quantize(p)));
  require(static_cast<bool>(out), ErrorCode::io, "write failed: " + path.string());
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  require(magic == "P5" && maxval == 255 && w > 0 && h > 0, ErrorCode::wrong_magic,
          path.string() + " is not an 8-bit binary PGM");
  in.get();
  std::vector<double> px(w * h);
  for (double& p : px) {
    const int b = in.get();
    require(b != EOF, ErrorCode::truncated, path.string() + " pixel data truncated");
    p = static_cast<double>(b) / 255.0;
  }
  return {h, w, std::move(px)};
}

/// Tiles equally-sized images into a grid with `pad` pixels of mid-gray.
inline GrayImage montage(std::span<const GrayImage> tiles, std::size_t columns,
                         std::size_t pad = 1) {
  require(!tiles.empty() && columns >= 1, ErrorCode::invalid_argument, "empty montage");
  const std::size_t th = tiles.front().height(), tw = tiles.front().width();
  const std::size_t rows = (tiles.size() + columns - 1) / columns;
  const std::size_t cols = std::min(columns, tiles.size());
  const std::size_t H = rows * th + (rows + 1) * pad, W = cols * tw + (cols + 1) * pad;
  std::vector<double> px(H * W, 0.5);
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    require(tiles[t].height() == th && tiles[t].width() == tw, ErrorCode::shape_mismatch,
            "montage tiles differ in shape");
    const std::size_t oy = pad + (t / columns) * (th + pad), ox = pad + (t % columns) * (tw + pad);
    for (std::size_t y = 0; y < th; ++y)
      for (std::size_t x = 0; x < tw; ++x) px[(oy + y) * W + ox + x] = tiles[t](y, x);
  }
  return {H, W, std::move(px)};
}

/// Affine rescale of arbitrary reals to [0,1]; a constant input maps to 0.5.
inline GrayImage normalized(std::size_t height, std::size_t width, std::span<const double> values) {
  require(values.size() == height * width, ErrorCode::shape_mismatch, "value count mismatch");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  std::vector<double> px(values.size(), 0.5);
  if (*hi > *lo) {
    const double span = *hi - *lo;
    for (std::size_t i = 0; i < values.size(); ++i)
      px[i] = std::clamp((values[i] - *lo) / span, 0.0, 1.0);
  }
  return {height, width, std::move(px)};
}

}  // namespace bsnn
