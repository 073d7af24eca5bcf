#ifndef BCPNN_MNIST_HPP
#define BCPNN_MNIST_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "geometry.hpp"
#include "random.hpp"

namespace bcpnn {

inline constexpr std::size_t kNumClasses = 10;
inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

enum class Split { train, test };

/// Images stored as one contiguous byte buffer, row-major per image.
struct Dataset {
  std::size_t rows = 28;
  std::size_t cols = 28;
  std::vector<std::uint8_t> pixels;
  std::vector<std::uint8_t> labels;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t pixels_per_image() const noexcept { return rows * cols; }
  std::span<const std::uint8_t> image(std::size_t n) const noexcept {
    return std::span<const std::uint8_t>(pixels).subspan(n * pixels_per_image(), pixels_per_image());
  }

  void validate() const {
    if (pixels.size() != labels.size() * pixels_per_image())
      throw ConsistencyError("dataset: image and label counts differ");
    for (std::size_t n = 0; n < labels.size(); ++n)
      if (labels[n] >= kNumClasses) throw ValidationError("dataset: label out of range at sample " + std::to_string(n));
  }

  /// Subset in the given index order.
  Dataset select(std::span<const std::size_t> idx) const {
    Dataset out;
    out.rows = rows;
    out.cols = cols;
    out.split = split;
    out.labels.reserve(idx.size());
    out.pixels.reserve(idx.size() * pixels_per_image());
    for (auto n : idx) {
      if (n >= size()) throw DimensionError("dataset select: index out of range");
      auto img = image(n);
      out.pixels.insert(out.pixels.end(), img.begin(), img.end());
      out.labels.push_back(labels[n]);
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

inline std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

} // namespace detail

/// Parse a big-endian IDX image/label file pair.
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        Split split = Split::train) {
  const auto img = detail::read_file(images_path);
  const auto lab = detail::read_file(labels_path);

  if (img.size() < 4 || lab.size() < 4) throw LengthError("truncated IDX header");
  if (detail::be32(img, 0) != kIdxImagesMagic) throw FormatError(images_path.string() + ": not an IDX image file (bad magic)");
  if (detail::be32(lab, 0) != kIdxLabelsMagic) throw FormatError(labels_path.string() + ": not an IDX label file (bad magic)");
  if (img.size() < 16) throw LengthError(images_path.string() + ": truncated header");
  if (lab.size() < 8) throw LengthError(labels_path.string() + ": truncated header");

  Dataset d;
  d.split = split;
  const std::size_t n_img = detail::be32(img, 4);
  d.rows = detail::be32(img, 8);
  d.cols = detail::be32(img, 12);
  const std::size_t n_lab = detail::be32(lab, 4);

  if (img.size() - 16 < n_img * d.rows * d.cols) throw LengthError(images_path.string() + ": truncated payload");
  if (lab.size() - 8 < n_lab) throw LengthError(labels_path.string() + ": truncated payload");
  if (n_img != n_lab)
    throw ConsistencyError("image count " + std::to_string(n_img) + " != label count " + std::to_string(n_lab));

  d.pixels.assign(img.begin() + 16, img.begin() + 16 + static_cast<std::ptrdiff_t>(n_img * d.rows * d.cols));
  d.labels.assign(lab.begin() + 8, lab.begin() + 8 + static_cast<std::ptrdiff_t>(n_lab));
  d.validate();
  return d;
}

/// Conventional MNIST file names inside a directory.
inline Dataset load_mnist_dir(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::train ? "train" : "t10k";
  return load_idx(dir / (prefix + "-images-idx3-ubyte"), dir / (prefix + "-labels-idx1-ubyte"), split);
}

inline void write_idx(const Dataset& d, const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  d.validate();
  std::vector<std::uint8_t> img;
  detail::put_be32(img, kIdxImagesMagic);
  detail::put_be32(img, static_cast<std::uint32_t>(d.size()));
  detail::put_be32(img, static_cast<std::uint32_t>(d.rows));
  detail::put_be32(img, static_cast<std::uint32_t>(d.cols));
  img.insert(img.end(), d.pixels.begin(), d.pixels.end());
  std::vector<std::uint8_t> lab;
  detail::put_be32(lab, kIdxLabelsMagic);
  detail::put_be32(lab, static_cast<std::uint32_t>(d.size()));
  lab.insert(lab.end(), d.labels.begin(), d.labels.end());

  std::ofstream(images_path, std::ios::binary).write(reinterpret_cast<const char*>(img.data()), static_cast<std::streamsize>(img.size()));
  std::ofstream(labels_path, std::ios::binary).write(reinterpret_cast<const char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
}

enum class EncodingMode { binary, graded };

inline std::string to_string(EncodingMode m) { return m == EncodingMode::binary ? "binary" : "graded"; }
inline EncodingMode parse_encoding(const std::string& s) {
  if (s == "binary") return EncodingMode::binary;
  if (s == "graded") return EncodingMode::graded;
  throw ConfigError("unknown encoding mode '" + s + "' (expected binary|graded)");
}

struct Encoding {
  EncodingMode mode = EncodingMode::binary;
  double threshold = 0.5; // binary mode: "on" iff pixel/255 >= threshold

  friend bool operator==(const Encoding&, const Encoding&) = default;
};

inline LayerGeometry input_geometry(std::size_t n_pixels) { return {n_pixels, 2}; }

/// One two-unit hypercolumn per pixel: unit 0 "on", unit 1 "off".
inline ActivityVector encode_image(std::span<const std::uint8_t> pixels, Encoding enc = {}) {
  ActivityVector a(input_geometry(pixels.size()));
  for (std::size_t p = 0; p < pixels.size(); ++p) {
    const double v = pixels[p] / 255.0;
    const double on = enc.mode == EncodingMode::binary ? (v >= enc.threshold ? 1.0 : 0.0) : v;
    a[2 * p] = on;
    a[2 * p + 1] = 1.0 - on;
  }
  return a;
}

inline LayerGeometry output_geometry() { return {1, kNumClasses}; }

inline ActivityVector encode_label(std::size_t label) {
  if (label >= kNumClasses) throw ValidationError("label " + std::to_string(label) + " outside 0..9");
  ActivityVector a(output_geometry());
  a[label] = 1.0;
  return a;
}

/// n/10 indices per class drawn without replacement; sorted by class, then
/// draw order.
inline std::vector<std::size_t> stratified_sample(std::span<const std::uint8_t> labels, std::size_t n, std::uint64_t seed) {
  if (n % kNumClasses != 0) throw ConfigError("stratified sample size " + std::to_string(n) + " is not divisible by 10");
  const std::size_t per_class = n / kNumClasses;

  std::array<std::vector<std::size_t>, kNumClasses> pools;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= kNumClasses) throw ValidationError("label out of range at index " + std::to_string(i));
    pools[labels[i]].push_back(i);
  }

  std::vector<std::size_t> out;
  out.reserve(n);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    auto& pool = pools[c];
    if (pool.size() < per_class)
      throw DataError("class " + std::to_string(c) + " has " + std::to_string(pool.size()) + " samples, need " +
                      std::to_string(per_class));
    Rng rng(derive_seed(seed, {0x7374726174ULL, c}));
    for (std::size_t k = 0; k < per_class; ++k) {
      const auto r = k + static_cast<std::size_t>(uniform_index(rng, pool.size() - k));
      std::swap(pool[k], pool[r]);
      out.push_back(pool[k]);
    }
  }
  return out;
}

/// `size` indices from a seeded permutation of [0, n_total), skipping the
/// excluded ones. The permutation depends only on (n_total, seed).
inline std::vector<std::size_t> sample_excluding(std::size_t n_total, std::span<const std::size_t> exclude,
                                                 std::size_t size, std::uint64_t seed) {
  std::vector<char> banned(n_total, 0);
  for (auto e : exclude)
    if (e < n_total) banned[e] = 1;
  std::vector<std::size_t> perm(n_total);
  for (std::size_t i = 0; i < n_total; ++i) perm[i] = i;
  Rng rng(derive_seed(seed, {0x76616c6964ULL}));
  shuffle(std::span<std::size_t>(perm), rng);

  std::vector<std::size_t> out;
  out.reserve(size);
  for (auto i : perm) {
    if (out.size() == size) break;
    if (!banned[i]) out.push_back(i);
  }
  if (out.size() < size)
    throw DataError("only " + std::to_string(out.size()) + " samples remain for a validation set of " + std::to_string(size));
  return out;
}

} // namespace bcpnn

#endif
