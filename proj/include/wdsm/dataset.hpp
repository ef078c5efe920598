#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wdsm/image.hpp"

namespace wdsm {

enum class Split { train, test };

std::string to_string(Split split);
Split parse_split(const std::string& text);

// One manifest row. Paths are relative to the manifest's directory and use
// '/' separators.
struct ManifestRecord {
  std::string image;
  std::string breast;
  std::optional<std::string> dense;
  double pd = 0.0;
  int class12 = 0;
  Split split = Split::train;

  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::filesystem::path root;  // directory holding manifest.json
  std::vector<ManifestRecord> samples;

  std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
  std::vector<const ManifestRecord*> split(Split which) const;
};

inline constexpr int kManifestVersion = 1;

// JSON schema {version:1, samples:[{image, breast, dense?, pd, class12, split}]}.
// Reading checks the schema and pd/class12 consistency; it does not open the
// referenced images.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Opens and parses every referenced file; dense masks only when requested.
void validate_manifest(const Manifest& manifest, bool include_dense);

struct DatasetOptions {
  std::uint64_t seed = 0;
  std::size_t n_train = 1;
  std::size_t n_test = 1;
  std::size_t size = 64;
  // Cycle classes 0..11 instead of sampling them uniformly.
  bool stratified = false;
};

struct GeneratedDataset {
  Manifest manifest;
  std::filesystem::path manifest_path;
  std::array<std::size_t, 12> train_histogram{};
  std::array<std::size_t, 12> test_histogram{};
};

// Writes <out>/manifest.json plus <out>/{train,test}/NNNN_{image,breast,dense}.pgm.
GeneratedDataset generate_dataset(const DatasetOptions& options, const std::filesystem::path& out_dir);

struct LoadedSample {
  std::string id;
  Image image;
  Image breast_mask;
  double pd = 0.0;
  int class12 = 0;
  std::optional<Image> dense_truth;
};

// Reads one split into memory. Dense-truth files are opened only when
// `with_dense` is set and the record names one.
std::vector<LoadedSample> load_split(const Manifest& manifest, Split split, bool with_dense);

std::uint64_t fnv1a64(const std::filesystem::path& file);

}  // namespace wdsm
