#include <fstream>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "bcpnn/mnist.hpp"
#include "test_util.hpp"

using namespace bcpnn;

namespace {

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::vector<std::uint8_t> header(std::uint32_t magic, std::vector<std::uint32_t> dims) {
  std::vector<std::uint8_t> out;
  auto put = [&](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
  };
  put(magic);
  for (auto d : dims) put(d);
  return out;
}

Dataset small_dataset(std::size_t n, std::uint64_t seed) {
  Dataset d;
  d.rows = 28;
  d.cols = 28;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels.push_back(static_cast<std::uint8_t>(i % 10));
    for (std::size_t p = 0; p < 784; ++p) d.pixels.push_back(static_cast<std::uint8_t>(uniform_index(rng, 256)));
  }
  return d;
}

} // namespace

TEST(Idx, RoundTripPreservesPayloadBytes) {
  const auto dir = test::scratch_dir("idx_roundtrip");
  const auto d = small_dataset(37, 1);
  write_idx(d, dir / "img", dir / "lab");
  const auto back = load_idx(dir / "img", dir / "lab");
  EXPECT_EQ(back.pixels, d.pixels);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.rows, 28u);
  EXPECT_EQ(back.cols, 28u);

  // second trip produces identical files
  write_idx(back, dir / "img2", dir / "lab2");
  EXPECT_EQ(detail::read_file(dir / "img"), detail::read_file(dir / "img2"));
  EXPECT_EQ(detail::read_file(dir / "lab"), detail::read_file(dir / "lab2"));
}

TEST(Idx, HeaderLayoutIsBigEndian) {
  const auto dir = test::scratch_dir("idx_header");
  write_idx(small_dataset(3, 2), dir / "img", dir / "lab");
  const auto img = detail::read_file(dir / "img");
  EXPECT_EQ(std::vector<std::uint8_t>(img.begin(), img.begin() + 16),
            (std::vector<std::uint8_t>{0, 0, 8, 3, 0, 0, 0, 3, 0, 0, 0, 28, 0, 0, 0, 28}));
  EXPECT_EQ(img.size(), 16u + 3u * 784u);
}

TEST(Idx, ZeroCountIsEmpty) {
  const auto dir = test::scratch_dir("idx_empty");
  write_bytes(dir / "img", header(0x803, {0, 28, 28}));
  write_bytes(dir / "lab", header(0x801, {0}));
  const auto d = load_idx(dir / "img", dir / "lab");
  EXPECT_EQ(d.size(), 0u);
  EXPECT_TRUE(d.pixels.empty());
}

TEST(Idx, Errors) {
  const auto dir = test::scratch_dir("idx_errors");
  write_idx(small_dataset(4, 3), dir / "img", dir / "lab");
  // label file passed as images
  EXPECT_THROW(load_idx(dir / "lab", dir / "lab"), FormatError);
  EXPECT_THROW(load_idx(dir / "img", dir / "img"), FormatError);

  auto img = detail::read_file(dir / "img");
  img.resize(img.size() - 1);
  write_bytes(dir / "short", img);
  EXPECT_THROW(load_idx(dir / "short", dir / "lab"), LengthError);
  write_bytes(dir / "stub", {0, 0, 8});
  EXPECT_THROW(load_idx(dir / "stub", dir / "lab"), LengthError);

  auto lab = header(0x801, {3});
  lab.insert(lab.end(), {1, 2, 3});
  write_bytes(dir / "lab3", lab);
  EXPECT_THROW(load_idx(dir / "img", dir / "lab3"), ConsistencyError);

  auto badlab = header(0x801, {4});
  badlab.insert(badlab.end(), {1, 2, 10, 3});
  write_bytes(dir / "badlab", badlab);
  EXPECT_THROW(load_idx(dir / "img", dir / "badlab"), ValidationError);

  EXPECT_THROW(load_idx(dir / "missing", dir / "lab"), DataError);
}

TEST(Idx, DirectoryNaming) {
  const auto dir = test::scratch_dir("idx_dir");
  write_idx(small_dataset(10, 4), dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
  const auto d = load_mnist_dir(dir, Split::test);
  EXPECT_EQ(d.size(), 10u);
  EXPECT_EQ(d.split, Split::test);
  EXPECT_THROW(load_mnist_dir(dir, Split::train), DataError);
}

TEST(Encode, ImageExamples) {
  const std::vector<std::uint8_t> px{255, 0, 51, 127, 128};
  const auto b = encode_image(px, {EncodingMode::binary, 0.5});
  EXPECT_EQ(b.geometry(), LayerGeometry(5, 2));
  EXPECT_EQ(b[0], 1.0);
  EXPECT_EQ(b[1], 0.0);
  EXPECT_EQ(b[2], 0.0);
  EXPECT_EQ(b[3], 1.0);
  EXPECT_EQ(b[6], 0.0); // 127/255 < 0.5
  EXPECT_EQ(b[8], 1.0); // 128/255 >= 0.5

  const auto g = encode_image(px, {EncodingMode::graded, 0.5});
  EXPECT_EQ(g[2], 0.0);
  EXPECT_EQ(g[3], 1.0);
  EXPECT_NEAR(g[4], 0.2, 1e-15);
  EXPECT_NEAR(g[5], 0.8, 1e-15);
}

TEST(Encode, EveryPixelValueIsNormalized) {
  std::vector<std::uint8_t> px(256);
  for (int v = 0; v < 256; ++v) px[v] = static_cast<std::uint8_t>(v);
  for (auto mode : {EncodingMode::binary, EncodingMode::graded}) {
    const auto a = encode_image(px, {mode, 0.5});
    for (std::size_t h = 0; h < 256; ++h) {
      EXPECT_NEAR(a[2 * h] + a[2 * h + 1], 1.0, 1e-15);
      EXPECT_GE(a[2 * h], 0.0);
      EXPECT_GE(a[2 * h + 1], 0.0);
    }
  }
}

TEST(Encode, Labels) {
  const auto two = encode_label(2);
  EXPECT_EQ(two.geometry(), LayerGeometry(1, 10));
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(two[k], k == 2 ? 1.0 : 0.0);
  EXPECT_EQ(encode_label(0)[0], 1.0);
  EXPECT_THROW(encode_label(10), ValidationError);
  EXPECT_EQ(parse_encoding("graded"), EncodingMode::graded);
  EXPECT_THROW(parse_encoding("ternary"), ConfigError);
}

TEST(Stratified, ExactCountsNoDuplicates) {
  std::vector<std::uint8_t> labels(6000);
  Rng rng(7);
  for (auto& l : labels) l = static_cast<std::uint8_t>(uniform_index(rng, 10));
  for (std::size_t n : {10u, 50u, 100u, 200u, 500u, 1000u}) {
    const auto idx = stratified_sample(labels, n, 11);
    ASSERT_EQ(idx.size(), n);
    EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), n);
    std::map<int, std::size_t> per;
    for (auto i : idx) ++per[labels[i]];
    for (int c = 0; c < 10; ++c) EXPECT_EQ(per[c], n / 10);
    // sorted by class
    for (std::size_t k = 1; k < idx.size(); ++k) EXPECT_LE(labels[idx[k - 1]], labels[idx[k]]);
  }
}

TEST(Stratified, SeedBehaviour) {
  std::vector<std::uint8_t> labels(60000);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint8_t>((i * 7) % 10);
  EXPECT_EQ(stratified_sample(labels, 100, 5), stratified_sample(labels, 100, 5));
  bool any_differ = false;
  for (std::uint64_t s = 0; s < 5; ++s) any_differ |= stratified_sample(labels, 100, s) != stratified_sample(labels, 100, s + 100);
  EXPECT_TRUE(any_differ);
}

TEST(Stratified, Errors) {
  std::vector<std::uint8_t> labels(100);
  for (std::size_t i = 0; i < 100; ++i) labels[i] = static_cast<std::uint8_t>(i % 10);
  EXPECT_THROW(stratified_sample(labels, 15, 0), ConfigError);
  EXPECT_THROW(stratified_sample(labels, 110, 0), DataError);
  EXPECT_EQ(stratified_sample(labels, 100, 0).size(), 100u);
}

TEST(SampleExcluding, DisjointAndDeterministic) {
  const std::vector<std::size_t> excl{0, 5, 7, 99};
  const auto v = sample_excluding(100, excl, 50, 3);
  EXPECT_EQ(v.size(), 50u);
  for (auto i : v) EXPECT_EQ(std::count(excl.begin(), excl.end(), i), 0);
  EXPECT_EQ(std::set<std::size_t>(v.begin(), v.end()).size(), 50u);
  EXPECT_EQ(v, sample_excluding(100, excl, 50, 3));
  EXPECT_THROW(sample_excluding(100, excl, 97, 3), DataError);
}

TEST(DatasetSelect, KeepsOrder) {
  const auto d = small_dataset(20, 9);
  const std::vector<std::size_t> idx{5, 2, 17};
  const auto s = d.select(idx);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.labels[1], d.labels[2]);
  EXPECT_TRUE(std::equal(s.image(2).begin(), s.image(2).end(), d.image(17).begin()));
  const std::vector<std::size_t> bad{20};
  EXPECT_THROW(d.select(bad), DimensionError);
}
