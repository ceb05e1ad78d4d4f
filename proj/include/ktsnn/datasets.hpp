#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ktsnn/config.hpp"
#include "ktsnn/events.hpp"
#include "ktsnn/image.hpp"
#include "ktsnn/transfer.hpp"

namespace ktsnn::datasets {

enum class Domain { Static, Event };
enum class Split { Train, Test };

struct ManifestEntry {
  std::string path;  // relative to the dataset root
  int category = 0;
  Domain domain = Domain::Static;
  Split split = Split::Train;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;  // sorted by path
  std::vector<std::string> categories;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t steps = 0;

  std::size_t count(Domain d, Split s) const;
};

// Moving-shapes corpus: static RGB renders of each shape kind plus event
// streams simulated from short motion sequences of the same kinds.
struct SynthConfig {
  std::vector<std::string> categories{"square", "disk", "cross", "bar", "triangle"};
  std::size_t image_size = 16;
  std::size_t statics_per_category = 200;
  std::size_t train_events_per_category = 20;
  std::size_t test_events_per_category = 50;
  std::size_t motion_frames = 8;
  double contrast = 0.3;
  double noise = 0.03;
  std::size_t steps = 6;  // recorded in the manifest
  std::uint64_t seed = 1;

  void validate() const;

  static const std::vector<std::string>& keys();
  static SynthConfig from_key_values(const KeyValues& kv);
  std::string to_text() const;
};

inline const std::vector<std::string>& shape_kinds() {
  static const std::vector<std::string> k{"square", "disk", "cross", "bar", "triangle"};
  return k;
}

// Renders one static sample (exposed for tests).
Image render_static(const std::string& kind, std::size_t size, Rng& rng);
// Renders the luminance frames of one motion sequence.
std::vector<events::LuminanceFrame> render_motion(const std::string& kind, std::size_t size, std::size_t frames,
                                                  double noise, Rng& rng);

// Writes root/{static|event}/<category>/<id>.{ppm|evt}, labels.csv and
// manifest.txt. Output is a pure function of cfg.
DatasetManifest generate_synthetic_pair_set(const SynthConfig& cfg, const std::filesystem::path& root);

DatasetManifest read_manifest(const std::filesystem::path& root);

struct LoadedDataset {
  DatasetManifest manifest;
  std::vector<Image> static_images;
  std::vector<int> static_labels;
  std::vector<transfer::LabeledInput> event_train;
  std::vector<transfer::LabeledInput> event_test;
  std::vector<std::size_t> event_train_counts;  // raw N per stream
  std::vector<std::size_t> event_test_counts;
};

// Event streams are integrated into `steps` frames. Throws MissingFile or
// DecodeError naming the offending file.
LoadedDataset load_dataset(const std::filesystem::path& root, std::size_t steps);

// Static images from one corpus and event samples from another, encoded for
// training.
transfer::TrainingData training_data(const LoadedDataset& statics, const LoadedDataset& events, std::size_t steps);

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace ktsnn::datasets
