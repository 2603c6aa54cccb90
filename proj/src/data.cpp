#include "cml/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cml/errors.hpp"
#include "cml/rng.hpp"

namespace cml {

namespace fs = std::filesystem;

void Dataset::validate() const {
  if (num_classes < 2) throw SpecError("dataset needs at least 2 classes");
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.label >= num_classes)
      throw SpecError("sample " + std::to_string(i) + " has label " + std::to_string(s.label) + " >= " +
                      std::to_string(num_classes));
    if (s.modalities.size() != modality_dims.size())
      throw SpecError("sample " + std::to_string(i) + " has " + std::to_string(s.modalities.size()) + " modalities");
    for (std::size_t m = 0; m < modality_dims.size(); ++m)
      if (s.modalities[m].size() != modality_dims[m])
        throw SpecError("sample " + std::to_string(i) + " modality " + std::to_string(m) + " has dimension " +
                        std::to_string(s.modalities[m].size()));
  }
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes, 0);
  for (const Sample& s : samples) ++counts.at(s.label);
  return counts;
}

void SyntheticSpec::validate() const {
  const std::size_t m = modality_dims.size();
  if (num_classes < 2) throw SpecError("synthetic spec needs num_classes >= 2");
  if (m < 2) throw SpecError("synthetic spec needs at least 2 modalities");
  if (samples_per_class.size() != num_classes)
    throw SpecError("samples_per_class has " + std::to_string(samples_per_class.size()) + " entries for " +
                    std::to_string(num_classes) + " classes");
  if (class_separation.size() != m || noise_std.size() != m)
    throw SpecError("class_separation and noise_std need one entry per modality");
  for (std::size_t d : modality_dims)
    if (d == 0) throw SpecError("modality dimension must be >= 1");
  for (std::size_t n : samples_per_class)
    if (n == 0) throw SpecError("samples_per_class entries must be >= 1");
  for (double s : class_separation)
    if (!(s >= 0.0) || !std::isfinite(s)) throw SpecError("class_separation must be finite and >= 0");
  for (double s : noise_std)
    if (!(s > 0.0) || !std::isfinite(s)) throw SpecError("noise_std must be finite and > 0");
}

std::vector<std::vector<std::vector<double>>> synthetic_class_means(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t k_count = spec.num_classes;
  std::vector<std::vector<std::vector<double>>> means(k_count,
                                                      std::vector<std::vector<double>>(spec.modality_dims.size()));
  for (std::size_t m = 0; m < spec.modality_dims.size(); ++m) {
    const std::size_t d = spec.modality_dims[m];
    Rng rng = derive_rng(spec.seed, Stream::kClassMean, {m});
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> dirs(k_count, std::vector<double>(d));
    for (auto& v : dirs)
      for (double& x : v) x = normal(rng);
    // Orthogonal directions give every pair of classes exactly the requested
    // distance; with fewer dimensions than classes only normalisation is possible.
    const bool orthogonal = d >= k_count;
    for (std::size_t k = 0; k < k_count; ++k) {
      if (orthogonal) {
        for (std::size_t j = 0; j < k; ++j) {
          double dot = 0.0;
          for (std::size_t i = 0; i < d; ++i) dot += dirs[k][i] * dirs[j][i];
          for (std::size_t i = 0; i < d; ++i) dirs[k][i] -= dot * dirs[j][i];
        }
      }
      double norm = 0.0;
      for (double x : dirs[k]) norm += x * x;
      norm = std::sqrt(norm);
      if (norm == 0.0) norm = 1.0;
      for (double& x : dirs[k]) x /= norm;
    }
    const double radius = spec.class_separation[m] * spec.noise_std[m] / std::sqrt(2.0);
    for (std::size_t k = 0; k < k_count; ++k) {
      means[k][m] = dirs[k];
      for (double& x : means[k][m]) x *= radius;
    }
  }
  return means;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  const auto means = synthetic_class_means(spec);
  Dataset ds;
  ds.modality_dims = spec.modality_dims;
  ds.num_classes = spec.num_classes;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    Rng rng = derive_rng(spec.seed, Stream::kClassSamples, {k});
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t n = 0; n < spec.samples_per_class[k]; ++n) {
      Sample s;
      s.label = k;
      s.modalities.resize(spec.modality_dims.size());
      for (std::size_t m = 0; m < spec.modality_dims.size(); ++m) {
        s.modalities[m] = means[k][m];
        for (double& x : s.modalities[m]) x += spec.noise_std[m] * normal(rng);
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  // A trailing blank line is tolerated; blank lines elsewhere are rows.
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  return lines;
}

std::string where(const fs::path& path, std::size_t line) { return path.string() + ":" + std::to_string(line + 1); }

std::vector<double> parse_row(std::string_view line, const fs::path& path, std::size_t line_no) {
  std::vector<double> row;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    const std::string_view cell = trim(line.substr(start, comma == std::string_view::npos ? line.npos : comma - start));
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
      throw ParseError(where(path, line_no) + ": non-numeric cell '" + std::string(cell) + "'");
    row.push_back(v);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return row;
}

}  // namespace

Dataset load_csv_dataset(const std::string& manifest_path) {
  const fs::path manifest(manifest_path);
  std::ifstream in(manifest);
  if (!in) throw ParseError(manifest_path + ": cannot open manifest");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path + ": invalid JSON: " + e.what());
  }
  const fs::path base = manifest.parent_path();
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

  Dataset ds;
  std::vector<fs::path> modality_paths;
  fs::path labels_path;
  try {
    ds.num_classes = j.at("num_classes").get<std::size_t>();
    for (const auto& mod : j.at("modalities")) {
      modality_paths.push_back(resolve(mod.at("path").get<std::string>()));
      ds.modality_dims.push_back(mod.at("dim").get<std::size_t>());
    }
    labels_path = resolve(j.at("labels").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path + ": malformed manifest: " + e.what());
  }
  if (ds.num_classes < 2) throw ParseError(manifest_path + ": num_classes must be >= 2");
  if (modality_paths.empty()) throw ParseError(manifest_path + ": no modalities listed");

  const std::vector<std::string> label_lines = read_lines(labels_path);
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < label_lines.size(); ++i) {
    const std::string_view cell = trim(label_lines[i]);
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size())
      throw ParseError(where(labels_path, i) + ": invalid label '" + std::string(cell) + "'");
    if (v >= ds.num_classes)
      throw ParseError(where(labels_path, i) + ": label " + std::to_string(v) + " out of range for " +
                       std::to_string(ds.num_classes) + " classes");
    labels.push_back(v);
  }

  ds.samples.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ds.samples[i].label = labels[i];
    ds.samples[i].modalities.resize(modality_paths.size());
  }
  for (std::size_t m = 0; m < modality_paths.size(); ++m) {
    const std::vector<std::string> lines = read_lines(modality_paths[m]);
    if (lines.size() != labels.size())
      throw ParseError(modality_paths[m].string() + ": row count " + std::to_string(lines.size()) +
                       " does not match " + std::to_string(labels.size()) + " labels in " + labels_path.string());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::vector<double> row = parse_row(lines[i], modality_paths[m], i);
      if (row.size() != ds.modality_dims[m])
        throw ParseError(where(modality_paths[m], i) + ": " + std::to_string(row.size()) + " columns, manifest dim is " +
                         std::to_string(ds.modality_dims[m]));
      ds.samples[i].modalities[m] = std::move(row);
    }
  }
  return ds;
}

std::string write_csv_dataset(const Dataset& dataset, const std::string& dir) {
  dataset.validate();
  const fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  auto open = [](const fs::path& p) {
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw IoError("cannot open " + p.string() + " for writing");
    return f;
  };

  nlohmann::json manifest;
  manifest["num_classes"] = dataset.num_classes;
  manifest["modalities"] = nlohmann::json::array();
  for (std::size_t m = 0; m < dataset.num_modalities(); ++m) {
    const std::string name = "modality_" + std::to_string(m) + ".csv";
    std::ofstream f = open(out / name);
    for (const Sample& s : dataset.samples) {
      const auto& row = s.modalities[m];
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) f << ',';
        f << format_real(row[c]);
      }
      f << '\n';
    }
    if (!f) throw IoError("failed writing " + (out / name).string());
    manifest["modalities"].push_back({{"path", name}, {"dim", dataset.modality_dims[m]}});
  }
  {
    std::ofstream f = open(out / "labels.csv");
    for (const Sample& s : dataset.samples) f << s.label << '\n';
    if (!f) throw IoError("failed writing labels.csv");
  }
  manifest["labels"] = "labels.csv";
  // The manifest goes last so a failure above never leaves a manifest that
  // points at incomplete files.
  const fs::path manifest_path = out / "manifest.json";
  std::ofstream f = open(manifest_path);
  f << manifest.dump(2) << '\n';
  if (!f) throw IoError("failed writing " + manifest_path.string());
  return manifest_path.string();
}

SplitResult split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train_fraction must be in (0, 1), got " + std::to_string(train_fraction));
  std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
  for (std::size_t i = 0; i < dataset.size(); ++i) by_class.at(dataset.samples[i].label).push_back(i);

  SplitResult r;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    auto& idx = by_class[k];
    if (idx.empty()) continue;
    if (idx.size() < 2) throw SplitError("class " + std::to_string(k) + " has fewer than 2 samples");
    Rng rng = derive_rng(seed, Stream::kSplit, {k});
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    r.train_indices.insert(r.train_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    r.test_indices.insert(r.test_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
  }
  std::sort(r.train_indices.begin(), r.train_indices.end());
  std::sort(r.test_indices.begin(), r.test_indices.end());
  for (Dataset* part : {&r.train, &r.test}) {
    part->modality_dims = dataset.modality_dims;
    part->num_classes = dataset.num_classes;
  }
  for (std::size_t i : r.train_indices) r.train.samples.push_back(dataset.samples[i]);
  for (std::size_t i : r.test_indices) r.test.samples.push_back(dataset.samples[i]);
  return r;
}

Standardizer Standardizer::fit(const Dataset& dataset) {
  if (dataset.empty()) throw EmptyInputError("cannot fit a standardizer on an empty dataset");
  Standardizer st;
  const double n = static_cast<double>(dataset.size());
  for (std::size_t m = 0; m < dataset.num_modalities(); ++m) {
    const std::size_t d = dataset.modality_dims[m];
    std::vector<double> mean(d, 0.0), var(d, 0.0);
    for (const Sample& s : dataset.samples)
      for (std::size_t c = 0; c < d; ++c) mean[c] += s.modalities[m][c];
    for (double& v : mean) v /= n;
    for (const Sample& s : dataset.samples)
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = s.modalities[m][c] - mean[c];
        var[c] += diff * diff;
      }
    std::vector<double> scale(d);
    for (std::size_t c = 0; c < d; ++c) {
      const double sd = std::sqrt(var[c] / n);
      scale[c] = sd > 1e-12 ? sd : 1.0;
    }
    st.mean.push_back(std::move(mean));
    st.scale.push_back(std::move(scale));
  }
  return st;
}

Dataset Standardizer::apply(const Dataset& dataset) const {
  if (dataset.num_modalities() != mean.size()) throw SpecError("standardizer fitted for a different modality count");
  Dataset out = dataset;
  for (Sample& s : out.samples)
    for (std::size_t m = 0; m < mean.size(); ++m) {
      if (s.modalities[m].size() != mean[m].size()) throw SpecError("standardizer dimension mismatch");
      for (std::size_t c = 0; c < mean[m].size(); ++c) s.modalities[m][c] = (s.modalities[m][c] - mean[m][c]) / scale[m][c];
    }
  return out;
}

nlohmann::json Standardizer::to_json() const { return {{"mean", mean}, {"scale", scale}}; }

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer st;
  try {
    st.mean = j.at("mean").get<std::vector<std::vector<double>>>();
    st.scale = j.at("scale").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed standardizer: ") + e.what());
  }
  if (st.mean.size() != st.scale.size()) throw ParseError("standardizer mean/scale mismatch");
  return st;
}

Dataset corrupt_gaussian(const Dataset& dataset, const CorruptionSpec& spec) {
  for (std::size_t m : spec.target_modalities)
    if (m >= dataset.num_modalities())
      throw SpecError("corruption target " + std::to_string(m) + " out of range for " +
                      std::to_string(dataset.num_modalities()) + " modalities");
  if (!(spec.epsilon >= 0.0) || !std::isfinite(spec.epsilon)) throw SpecError("corruption epsilon must be >= 0");
  Dataset out = dataset;
  if (spec.epsilon == 0.0 || spec.target_modalities.empty()) return out;

  std::vector<std::size_t> targets = spec.target_modalities;
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  const double sd = spec.epsilon_is_std ? spec.epsilon : std::sqrt(spec.epsilon);
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t m : targets) {
      Rng rng = derive_rng(spec.seed, Stream::kCorruption, {i, m});
      std::normal_distribution<double> normal(0.0, sd);
      for (double& x : out.samples[i].modalities[m]) x += normal(rng);
    }
  return out;
}

}  // namespace cml
