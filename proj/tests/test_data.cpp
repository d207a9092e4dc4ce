#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "noiseflow/data.hpp"

using namespace nflow;

namespace {

SyntheticSpec small_spec(std::uint64_t seed = 1) {
  SyntheticSpec spec;
  spec.shape = Shape{4, 4, 4};
  spec.patches_per_cell = 10;
  spec.seed = seed;
  return spec;
}

std::map<std::pair<int, int>, int> cell_counts(const PatchDataset& ds) {
  std::map<std::pair<int, int>, int> counts;
  for (const auto& r : ds.records) ++counts[{r.camera_id, static_cast<int>(r.iso)}];
  return counts;
}

}  // namespace

TEST_CASE("homoscedastic generator has the configured variance") {
  SyntheticSpec spec;
  spec.beta1 = 0.0;
  spec.beta2 = 0.01;
  spec.camera_gains = {1.0};
  spec.iso_set = {100};
  spec.iso_gain_scale = 0.01;  // gamma = 1
  spec.shape = Shape{16, 16, 4};
  spec.patches_per_cell = 100;
  const PatchDataset ds = generate_synthetic(spec);
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& r : ds.records) {
    for (float v : r.noise.values()) sq += static_cast<double>(v) * v;
    n += r.noise.size();
  }
  CHECK(n >= 100'000);
  CHECK(std::abs(sq / static_cast<double>(n) / spec.beta2 - 1.0) < 0.02);
}

TEST_CASE("heteroscedastic generator variance grows linearly with the clean signal") {
  SyntheticSpec spec;
  spec.camera_gains = {1.0};
  spec.iso_set = {1600};
  spec.shape = Shape{32, 32, 4};
  spec.patches_per_cell = 200;
  spec.seed = 4;
  const PatchDataset ds = generate_synthetic(spec);
  const double g2 = std::pow(spec.gamma(1600, 0), 2);
  double si = 0, sy = 0, sii = 0, siy = 0, n = 0;
  for (const auto& r : ds.records) {
    for (std::size_t k = 0; k < r.noise.size(); ++k) {
      const double i = r.clean[k];
      const double y = static_cast<double>(r.noise[k]) * r.noise[k];
      si += i;
      sy += y;
      sii += i * i;
      siy += i * y;
      n += 1;
    }
  }
  const double slope = (n * siy - si * sy) / (n * sii - si * si);
  CHECK(std::abs(slope / (g2 * spec.beta1) - 1.0) < 0.05);
  CHECK(ds.records[0].nlf_beta1 == doctest::Approx(g2 * spec.beta1).epsilon(1e-6));
  CHECK(ds.records[0].nlf_beta2 == doctest::Approx(g2 * spec.beta2).epsilon(1e-6));
}

TEST_CASE("synthetic data is seed-deterministic and validated") {
  const auto a = encode_dataset(generate_synthetic(small_spec(3)));
  const auto b = encode_dataset(generate_synthetic(small_spec(3)));
  const auto c = encode_dataset(generate_synthetic(small_spec(4)));
  CHECK(a == b);
  CHECK(a != c);

  auto bad = small_spec();
  bad.beta1 = -0.1;
  CHECK_THROWS_AS(generate_synthetic(bad), InputError);
  bad = small_spec();
  bad.beta2 = 0.0;
  CHECK_THROWS_AS(generate_synthetic(bad), InputError);
  bad = small_spec();
  bad.iso_set = {};
  CHECK_THROWS_AS(generate_synthetic(bad), InputError);

  const auto ds = generate_synthetic(small_spec());
  for (const auto& r : ds.records) {
    for (float v : r.clean.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("dataset file round trip and corruption") {
  const auto ds = generate_synthetic(small_spec(8));
  const auto path = std::filesystem::temp_directory_path() / "nflow_test_data.nfpatch";
  write_dataset(ds, path);
  const auto back = read_dataset(path);
  CHECK(encode_dataset(back) == encode_dataset(ds));
  CHECK(back.iso_set == ds.iso_set);
  CHECK(back.camera_count == ds.camera_count);
  std::filesystem::remove(path);

  auto bytes = encode_dataset(ds);
  auto magic = bytes;
  magic[3] = 'Z';
  CHECK_THROWS_AS(decode_dataset(magic), FormatError);
  auto version = bytes;
  version[8] = 9;
  CHECK_THROWS_AS(decode_dataset(version), FormatError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 5);
  CHECK_THROWS_AS(decode_dataset(truncated), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_dataset(trailing), FormatError);
  auto huge = bytes;
  // record count at offset 10
  huge[10] = huge[11] = huge[12] = huge[13] = static_cast<char>(0xFF);
  CHECK_THROWS_AS(decode_dataset(huge), FormatError);
  CHECK_THROWS_AS(read_dataset("/nonexistent/nothing.nfpatch"), InputError);
}

TEST_CASE("validate rejects inconsistent records") {
  auto ds = generate_synthetic(small_spec());
  auto bad_iso = ds;
  bad_iso.records[0].iso = 333;
  CHECK_THROWS_AS(bad_iso.validate(), FormatError);
  auto bad_cam = ds;
  bad_cam.records[0].camera_id = 7;
  CHECK_THROWS_AS(bad_cam.validate(), FormatError);
  auto bad_clean = ds;
  bad_clean.records[0].clean[0] = 1.5f;
  CHECK_THROWS_AS(bad_clean.validate(), FormatError);
}

TEST_CASE("stratified split") {
  const auto ds = generate_synthetic(small_spec(2));
  const auto parts = split(ds, 0.7, 11);
  for (const auto& [cell, count] : cell_counts(parts.train)) CHECK(count == 7);
  for (const auto& [cell, count] : cell_counts(parts.test)) CHECK(count == 3);
  CHECK(cell_counts(parts.train).size() == 12);

  const auto again = split(ds, 0.7, 11);
  CHECK(encode_dataset(again.train) == encode_dataset(parts.train));
  CHECK(encode_dataset(again.test) == encode_dataset(parts.test));

  CHECK_THROWS_AS(split(ds, 1.0, 11), InputError);
  CHECK_THROWS_AS(split(ds, 0.0, 11), InputError);

  auto lonely = ds;
  lonely.records.resize(1);
  CHECK_THROWS_AS(split(lonely, 0.5, 1), InputError);
}

TEST_CASE("minibatches cover a seeded permutation") {
  RngStream rng(6);
  const auto single = minibatches(10, 10, rng);
  REQUIRE(single.size() == 1);
  std::set<std::size_t> seen(single[0].begin(), single[0].end());
  CHECK(seen.size() == 10);
  CHECK(*seen.rbegin() == 9);

  RngStream r1(1), r2(1);
  CHECK(minibatches(23, 4, r1) == minibatches(23, 4, r2));
  RngStream r3(1);
  const auto batches = minibatches(23, 4, r3);
  CHECK(batches.size() == 6);
  CHECK(batches.back().size() == 3);
  CHECK_THROWS_AS(minibatches(5, 0, r3), InputError);
}
