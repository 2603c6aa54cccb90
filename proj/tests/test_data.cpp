#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "cml/data.hpp"
#include "cml/errors.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace cml;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cml_data_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
}

fs::path write_manifest(const fs::path& dir, std::size_t k, const std::vector<std::pair<std::string, int>>& mods) {
  std::string json = "{\"num_classes\": " + std::to_string(k) + ", \"modalities\": [";
  for (std::size_t i = 0; i < mods.size(); ++i)
    json += (i ? ", " : "") + std::string("{\"path\": \"") + mods[i].first + "\", \"dim\": " +
            std::to_string(mods[i].second) + "}";
  json += "], \"labels\": \"labels.csv\"}";
  write_file(dir / "manifest.json", json);
  return dir / "manifest.json";
}

std::string parse_error_message(const fs::path& manifest) {
  try {
    load_csv_dataset(manifest.string());
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

SyntheticSpec two_modality_spec(double sep, std::size_t per_class, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_classes = 2;
  s.modality_dims = {4, 6};
  s.samples_per_class = {per_class, per_class};
  s.class_separation = {sep, sep};
  s.noise_std = {1.0, 1.0};
  s.seed = seed;
  return s;
}

// Held-out nearest-class-mean accuracy using a single modality: means are
// estimated on `fit`, accuracy is measured on `eval`.
double nearest_mean_accuracy(const Dataset& fit, const Dataset& eval, std::size_t m) {
  const std::size_t d = fit.modality_dims[m];
  std::vector<std::vector<double>> mean(fit.num_classes, std::vector<double>(d, 0.0));
  std::vector<double> count(fit.num_classes, 0.0);
  for (const auto& s : fit.samples) {
    for (std::size_t c = 0; c < d; ++c) mean[s.label][c] += s.modalities[m][c];
    count[s.label] += 1.0;
  }
  for (std::size_t k = 0; k < fit.num_classes; ++k)
    for (double& v : mean[k]) v /= count[k];
  std::size_t correct = 0;
  for (const auto& s : eval.samples) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t k = 0; k < fit.num_classes; ++k) {
      double dist = 0.0;
      for (std::size_t c = 0; c < d; ++c) dist += std::pow(s.modalities[m][c] - mean[k][c], 2);
      if (dist < best_d) best_d = dist, best = k;
    }
    correct += best == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(eval.size());
}

}  // namespace

TEST_CASE("synthetic spec validation") {
  SyntheticSpec s = two_modality_spec(2.0, 10, 1);
  CHECK_NOTHROW(s.validate());
  auto bad = s;
  bad.num_classes = 1;
  bad.samples_per_class = {10};
  CHECK_THROWS_AS(generate_synthetic(bad), SpecError);
  bad = s;
  bad.class_separation[0] = -1.0;
  CHECK_THROWS_AS(generate_synthetic(bad), SpecError);
  bad = s;
  bad.samples_per_class = {10, 0};
  CHECK_THROWS_AS(generate_synthetic(bad), SpecError);
  bad = s;
  bad.modality_dims = {4};
  bad.class_separation = {1.0};
  bad.noise_std = {1.0};
  CHECK_THROWS_AS(generate_synthetic(bad), SpecError);
}

TEST_CASE("generate_synthetic shape and determinism") {
  SyntheticSpec s = two_modality_spec(2.0, 10, 1);
  s.num_classes = 3;
  s.samples_per_class = {5, 12, 3};
  const Dataset a = generate_synthetic(s);
  CHECK_NOTHROW(a.validate());
  CHECK(a.size() == 20);
  CHECK(a.class_counts() == std::vector<std::size_t>{5, 12, 3});
  CHECK(a == generate_synthetic(s));
  s.seed = 2;
  CHECK_FALSE(a == generate_synthetic(s));
}

TEST_CASE("class means sit at the requested separation") {
  SyntheticSpec s = two_modality_spec(2.5, 1, 3);
  s.num_classes = 4;
  s.samples_per_class = {1, 1, 1, 1};
  s.modality_dims = {6, 2};  // second modality has fewer dims than classes
  s.noise_std = {1.0, 0.5};
  const auto means = synthetic_class_means(s);
  for (std::size_t m = 0; m < 2; ++m) {
    const double expected = s.class_separation[m] * s.noise_std[m];
    for (std::size_t a = 0; a < 4; ++a)
      for (std::size_t b = a + 1; b < 4; ++b) {
        double d2 = 0.0;
        for (std::size_t c = 0; c < s.modality_dims[m]; ++c) d2 += std::pow(means[a][m][c] - means[b][m][c], 2);
        if (m == 0) CHECK(std::sqrt(d2) == doctest::Approx(expected).epsilon(1e-12));
        else CHECK(std::sqrt(d2) > 0.0);
      }
  }
}

TEST_CASE("separation 0 gives label-independent features") {
  const auto means = synthetic_class_means(two_modality_spec(0.0, 1, 4));
  CHECK(means[0] == means[1]);
  const Dataset fit = generate_synthetic(two_modality_spec(0.0, 500, 4));
  const Dataset eval = generate_synthetic(two_modality_spec(0.0, 500, 5));
  for (std::size_t m = 0; m < 2; ++m) CHECK(std::abs(nearest_mean_accuracy(fit, eval, m) - 0.5) < 0.06);
}

TEST_CASE("separation 6 is separable by a nearest-mean oracle on each modality") {
  const Dataset fit = generate_synthetic(two_modality_spec(6.0, 200, 6));
  // Means depend on the seed, so estimate and score on halves of one draw.
  const SplitResult halves = split(fit, 0.5, 9);
  for (std::size_t m = 0; m < 2; ++m) CHECK(nearest_mean_accuracy(halves.train, halves.test, m) > 0.99);
}

TEST_CASE("csv round trip") {
  const fs::path dir = fresh_dir("roundtrip");
  SyntheticSpec s = two_modality_spec(1.0, 7, 8);
  s.num_classes = 3;
  s.samples_per_class = {7, 2, 4};
  const Dataset ds = generate_synthetic(s);
  const std::string manifest = write_csv_dataset(ds, (dir / "out").string());
  const Dataset back = load_csv_dataset(manifest);
  REQUIRE(back.size() == ds.size());
  CHECK(back.modality_dims == ds.modality_dims);
  CHECK(back.num_classes == 3);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.samples[i].label == ds.samples[i].label);
    for (std::size_t m = 0; m < 2; ++m)
      for (std::size_t c = 0; c < ds.modality_dims[m]; ++c) {
        const double v = ds.samples[i].modalities[m][c];
        CHECK(back.samples[i].modalities[m][c] == std::stod(format_real(v)));
        CHECK(std::abs(back.samples[i].modalities[m][c] - v) <= 1e-8 * std::max(1.0, std::abs(v)));
      }
  }
  // Writing what was read reproduces the files byte for byte.
  write_csv_dataset(back, (dir / "again").string());
  for (const char* name : {"manifest.json", "modality_0.csv", "modality_1.csv", "labels.csv"}) {
    std::ifstream a(dir / "out" / name), b(dir / "again" / name);
    const std::string ta((std::istreambuf_iterator<char>(a)), {}), tb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ta == tb);
  }
}

TEST_CASE("csv ingestion") {
  const fs::path dir = fresh_dir("ingest");
  write_file(dir / "a.csv", "1.0,2.0\n3,4\n-5e-1,6\n");
  write_file(dir / "b.csv", "0.5\n0.25\n0.125\n");

  SUBCASE("valid files") {
    write_file(dir / "labels.csv", "0\n1\n1\n");
    const Dataset ds = load_csv_dataset(write_manifest(dir, 2, {{"a.csv", 2}, {"b.csv", 1}}).string());
    REQUIRE(ds.size() == 3);
    CHECK(ds.samples[2].modalities[0] == std::vector<double>{-0.5, 6.0});
    CHECK(ds.samples[1].modalities[1] == std::vector<double>{0.25});
    CHECK(ds.samples[1].label == 1);
  }
  SUBCASE("label equal to K names the line") {
    write_file(dir / "labels.csv", "0\n2\n1\n");
    const std::string msg = parse_error_message(write_manifest(dir, 2, {{"a.csv", 2}, {"b.csv", 1}}));
    CHECK(msg.find("labels.csv:2") != std::string::npos);
  }
  SUBCASE("row count mismatch") {
    write_file(dir / "labels.csv", "0\n1\n1\n");
    write_file(dir / "c.csv", "1\n2\n3\n4\n");
    const std::string msg = parse_error_message(write_manifest(dir, 2, {{"a.csv", 2}, {"c.csv", 1}}));
    CHECK(msg.find("c.csv") != std::string::npos);
    CHECK(msg.find("row count") != std::string::npos);
  }
  SUBCASE("non-numeric cell") {
    write_file(dir / "labels.csv", "0\n1\n1\n");
    write_file(dir / "c.csv", "1\nabc\n3\n");
    const std::string msg = parse_error_message(write_manifest(dir, 2, {{"a.csv", 2}, {"c.csv", 1}}));
    CHECK(msg.find("c.csv:2") != std::string::npos);
  }
  SUBCASE("dimension mismatch") {
    write_file(dir / "labels.csv", "0\n1\n1\n");
    const std::string msg = parse_error_message(write_manifest(dir, 2, {{"a.csv", 3}, {"b.csv", 1}}));
    CHECK(msg.find("a.csv:1") != std::string::npos);
  }
  SUBCASE("missing and malformed manifests") {
    CHECK_THROWS_AS(load_csv_dataset((dir / "nope.json").string()), ParseError);
    write_file(dir / "bad.json", "{\"num_classes\": 2,");
    CHECK_THROWS_AS(load_csv_dataset((dir / "bad.json").string()), ParseError);
    write_file(dir / "labels.csv", "0\n1\n1\n");
    write_manifest(dir, 2, {{"missing.csv", 2}});
    CHECK_THROWS_AS(load_csv_dataset((dir / "manifest.json").string()), ParseError);
  }
}

TEST_CASE("split") {
  const Dataset ds = generate_synthetic(two_modality_spec(1.0, 50, 10));
  const SplitResult r = split(ds, 0.8, 3);
  CHECK(r.train.size() == 80);
  CHECK(r.test.size() == 20);
  CHECK(r.train.class_counts() == std::vector<std::size_t>{40, 40});
  CHECK(r.test.class_counts() == std::vector<std::size_t>{10, 10});

  const SplitResult again = split(ds, 0.8, 3);
  CHECK(again.train_indices == r.train_indices);
  CHECK(again.test_indices == r.test_indices);
  CHECK(split(ds, 0.8, 4).train_indices != r.train_indices);

  std::vector<std::size_t> all = r.train_indices;
  all.insert(all.end(), r.test_indices.begin(), r.test_indices.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  SyntheticSpec imbalanced = two_modality_spec(1.0, 1, 11);
  imbalanced.samples_per_class = {33, 7};
  const SplitResult ri = split(generate_synthetic(imbalanced), 0.7, 1);
  CHECK(std::abs(static_cast<double>(ri.train.class_counts()[0]) - 0.7 * 33) <= 1.0);
  CHECK(std::abs(static_cast<double>(ri.train.class_counts()[1]) - 0.7 * 7) <= 1.0);

  CHECK_THROWS_AS(split(ds, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(split(ds, 1.0, 1), ConfigError);
  imbalanced.samples_per_class = {10, 1};
  CHECK_THROWS_AS(split(generate_synthetic(imbalanced), 0.5, 1), SplitError);
}

TEST_CASE("standardizer") {
  SyntheticSpec s = two_modality_spec(3.0, 100, 12);
  s.noise_std = {4.0, 0.1};
  const Dataset ds = generate_synthetic(s);
  const Standardizer st = Standardizer::fit(ds);
  const Dataset z = st.apply(ds);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t c = 0; c < ds.modality_dims[m]; ++c) {
      double mean = 0.0, sq = 0.0;
      for (const auto& x : z.samples) mean += x.modalities[m][c];
      mean /= static_cast<double>(z.size());
      for (const auto& x : z.samples) sq += std::pow(x.modalities[m][c] - mean, 2);
      CHECK(std::abs(mean) < 1e-12);
      CHECK(sq / static_cast<double>(z.size()) == doctest::Approx(1.0).epsilon(1e-12));
    }
  const Standardizer back = Standardizer::from_json(st.to_json());
  CHECK(back.mean == st.mean);
  CHECK(back.scale == st.scale);
  CHECK_THROWS_AS(Standardizer::fit(Dataset{{}, {4, 6}, 2}), EmptyInputError);
}

TEST_CASE("gaussian corruption") {
  SyntheticSpec s = two_modality_spec(1.0, 500, 13);
  s.modality_dims = {10, 3};
  const Dataset ds = generate_synthetic(s);  // 1000 samples x 10 features

  CorruptionSpec spec{{0}, 0.25, 7, false};
  const Dataset noisy = corrupt_gaussian(ds, spec);
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(noisy.samples[i].label == ds.samples[i].label);
    CHECK(noisy.samples[i].modalities[1] == ds.samples[i].modalities[1]);
    for (std::size_t c = 0; c < 10; ++c) {
      const double d = noisy.samples[i].modalities[0][c] - ds.samples[i].modalities[0][c];
      sum += d;
      sq += d * d;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sq / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(var - 0.25) < 0.25 * 0.05);
  CHECK(noisy == corrupt_gaussian(ds, spec));

  spec.epsilon_is_std = true;
  spec.epsilon = 0.5;
  CHECK(noisy == corrupt_gaussian(ds, spec));  // std 0.5 either way

  CHECK(corrupt_gaussian(ds, CorruptionSpec{{0, 1}, 0.0, 7, false}) == ds);
  CHECK(corrupt_gaussian(ds, CorruptionSpec{{}, 0.5, 7, false}) == ds);
  CHECK_THROWS_AS(corrupt_gaussian(ds, CorruptionSpec{{2}, 0.5, 7, false}), SpecError);
}
