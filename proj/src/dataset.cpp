#include "wdsm/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <json.hpp>

#include "wdsm/density_grid.hpp"
#include "wdsm/errors.hpp"
#include "wdsm/pgm.hpp"
#include "wdsm/phantom.hpp"
#include "wdsm/rng.hpp"

namespace wdsm {

using nlohmann::json;

std::string to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw DomainError("split must be 'train' or 'test', got '" + text + "'");
}

std::vector<const ManifestRecord*> Manifest::split(Split which) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : samples) {
    if (r.split == which) out.push_back(&r);
  }
  return out;
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("manifest " + path.string() + ": " + e.what(), e.byte);
  }
  if (!doc.is_object() || !doc.contains("version") || !doc.contains("samples")) {
    throw FormatError("manifest " + path.string() + ": missing version or samples");
  }
  if (doc["version"] != kManifestVersion) {
    throw FormatError("manifest " + path.string() + ": unknown version " + doc["version"].dump());
  }
  Manifest m;
  m.root = path.parent_path();
  std::size_t row = 0;
  for (const auto& s : doc["samples"]) {
    try {
      ManifestRecord r;
      r.image = s.at("image").get<std::string>();
      r.breast = s.at("breast").get<std::string>();
      if (s.contains("dense") && !s["dense"].is_null()) r.dense = s["dense"].get<std::string>();
      r.pd = s.at("pd").get<double>();
      r.class12 = s.at("class12").get<int>();
      r.split = parse_split(s.at("split").get<std::string>());
      if (density::pd_to_class12(r.pd) != r.class12) {
        throw FormatError("pd " + std::to_string(r.pd) + " is not in class " + std::to_string(r.class12));
      }
      m.samples.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("manifest row " + std::to_string(row) + ": " + e.what());
    } catch (const std::exception& e) {
      throw FormatError("manifest row " + std::to_string(row) + ": " + e.what());
    }
    ++row;
  }
  return m;
}

void write_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  json samples = json::array();
  for (const auto& r : manifest.samples) {
    json s = {{"image", r.image}, {"breast", r.breast}, {"pd", r.pd}, {"class12", r.class12},
              {"split", to_string(r.split)}};
    if (r.dense) s["dense"] = *r.dense;
    samples.push_back(std::move(s));
  }
  const json doc = {{"version", kManifestVersion}, {"samples", std::move(samples)}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("write failed for manifest " + path.string());
}

void validate_manifest(const Manifest& manifest, bool include_dense) {
  for (const auto& r : manifest.samples) {
    const auto img = pgm::read(manifest.resolve(r.image));
    const auto breast = pgm::read(manifest.resolve(r.breast));
    if (img.height != breast.height || img.width != breast.width) {
      throw FormatError(r.image + ": image and breast mask sizes differ");
    }
    if (include_dense && r.dense) {
      const auto dense = pgm::read(manifest.resolve(*r.dense));
      if (dense.height != img.height || dense.width != img.width) {
        throw FormatError(*r.dense + ": dense mask size differs from image");
      }
    }
  }
}

namespace {

Sample generate_with_retries(std::uint64_t seed, std::size_t size, int class12) {
  constexpr int kAttempts = 16;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    try {
      return generate_phantom(derive_seed(seed, static_cast<std::uint64_t>(attempt)), size, class12);
    } catch (const GenerationError&) {
    }
  }
  throw GenerationError("no phantom of class " + std::to_string(class12) + " after " +
                        std::to_string(kAttempts) + " seeds");
}

}  // namespace

GeneratedDataset generate_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir) {
  if (options.n_train < 1 || options.n_test < 1) throw DomainError("n_train and n_test must be >= 1");
  if (!is_valid_phantom_size(options.size)) {
    throw DomainError("size must be a power of two >= 32, got " + std::to_string(options.size));
  }
  GeneratedDataset ds;
  ds.manifest.root = out_dir;
  try {
    std::filesystem::create_directories(out_dir / "train");
    std::filesystem::create_directories(out_dir / "test");
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(std::string("cannot create dataset directory: ") + e.what());
  }

  for (Split split : {Split::train, Split::test}) {
    const std::uint64_t split_id = split == Split::train ? 1 : 2;
    const std::size_t n = split == Split::train ? options.n_train : options.n_test;
    Rng class_rng(derive_seed(options.seed, 0xC1A55000ULL + split_id));
    auto& hist = split == Split::train ? ds.train_histogram : ds.test_histogram;
    for (std::size_t i = 0; i < n; ++i) {
      const int class12 = options.stratified ? static_cast<int>(i % 12) : static_cast<int>(class_rng.below(12));
      const auto seed = derive_seed(options.seed, (split_id << 32) | i);
      const Sample s = generate_with_retries(seed, options.size, class12);

      char stem[32];
      std::snprintf(stem, sizeof stem, "%04zu", i);
      const std::string base = to_string(split) + "/" + stem;
      ManifestRecord r{base + "_image.pgm", base + "_breast.pgm", base + "_dense.pgm", s.pd, s.class12, split};
      pgm::write(s.image, out_dir / r.image);
      pgm::write(s.breast_mask, out_dir / r.breast);
      pgm::write(*s.dense_truth, out_dir / *r.dense);
      ++hist[static_cast<std::size_t>(s.class12)];
      ds.manifest.samples.push_back(std::move(r));
    }
  }
  ds.manifest_path = out_dir / "manifest.json";
  write_manifest(ds.manifest, ds.manifest_path);
  return ds;
}

std::vector<LoadedSample> load_split(const Manifest& manifest, Split split, bool with_dense) {
  std::vector<LoadedSample> out;
  for (const auto* r : manifest.split(split)) {
    LoadedSample s;
    s.id = r->image;
    s.image = pgm::read(manifest.resolve(r->image));
    s.breast_mask = pgm::read(manifest.resolve(r->breast));
    for (float& v : s.breast_mask.pixels) v = v >= 0.5f ? 1.0f : 0.0f;
    if (s.image.height != s.breast_mask.height || s.image.width != s.breast_mask.width) {
      throw FormatError(r->image + ": image and breast mask sizes differ");
    }
    s.pd = r->pd;
    s.class12 = r->class12;
    if (with_dense && r->dense) {
      Image dense = pgm::read(manifest.resolve(*r->dense));
      for (float& v : dense.pixels) v = v >= 0.5f ? 1.0f : 0.0f;
      s.dense_truth = std::move(dense);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::uint64_t fnv1a64(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<std::uint8_t>(*it);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace wdsm
