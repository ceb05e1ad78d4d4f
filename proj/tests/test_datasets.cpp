#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "ktsnn/datasets.hpp"
#include "test_util.hpp"

using namespace ktsnn;
using namespace ktsnn::datasets;
namespace fs = std::filesystem;

namespace {

SynthConfig tiny_config() {
  SynthConfig c;
  c.categories = {"square", "disk"};
  c.image_size = 8;
  c.statics_per_category = 3;
  c.train_events_per_category = 2;
  c.test_events_per_category = 1;
  c.motion_frames = 4;
  c.steps = 3;
  c.seed = 5;
  return c;
}

std::map<std::string, std::vector<std::uint8_t>> tree_bytes(const fs::path& root) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = read_bytes(e.path());
  }
  return out;
}

std::string text_of(const fs::path& p) {
  const auto b = read_bytes(p);
  return {b.begin(), b.end()};
}

}  // namespace

TEST(Datasets, MinimalCorpusCounts) {
  TempDir dir("min");
  const SynthConfig cfg = tiny_config();
  const DatasetManifest m = generate_synthetic_pair_set(cfg, dir.path());
  // Oracle: categories x per-category counts.
  EXPECT_EQ(m.count(Domain::Static, Split::Train), 2u * 3u);
  EXPECT_EQ(m.count(Domain::Event, Split::Train), 2u * 2u);
  EXPECT_EQ(m.count(Domain::Event, Split::Test), 2u * 1u);
  EXPECT_EQ(m.count(Domain::Static, Split::Test), 0u);
  EXPECT_EQ(m.entries.size(), 12u);
  EXPECT_TRUE(std::is_sorted(m.entries.begin(), m.entries.end(),
                             [](const auto& a, const auto& b) { return a.path < b.path; }));
  for (const auto& e : m.entries) EXPECT_TRUE(fs::exists(dir.path() / e.path)) << e.path;

  std::stringstream labels(text_of(dir.path() / "labels.csv"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(labels, line)) ++lines;
  EXPECT_EQ(lines, 13u);

  const DatasetManifest back = read_manifest(dir.path());
  EXPECT_EQ(back.categories, cfg.categories);
  EXPECT_EQ(back.height, 8u);
  EXPECT_EQ(back.steps, 3u);
  ASSERT_EQ(back.entries.size(), m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].path, m.entries[i].path);
    EXPECT_EQ(back.entries[i].category, m.entries[i].category);
    EXPECT_EQ(back.entries[i].domain, m.entries[i].domain);
    EXPECT_EQ(back.entries[i].split, m.entries[i].split);
  }
}

TEST(Datasets, ByteIdenticalRegeneration) {
  TempDir a("det_a"), b("det_b"), c("det_c");
  SynthConfig cfg = tiny_config();
  generate_synthetic_pair_set(cfg, a.path());
  generate_synthetic_pair_set(cfg, b.path());
  const auto ta = tree_bytes(a.path());
  EXPECT_EQ(ta, tree_bytes(b.path()));
  cfg.seed = 6;
  generate_synthetic_pair_set(cfg, c.path());
  const auto tc = tree_bytes(c.path());
  EXPECT_NE(ta.at("static/disk/0000.ppm"), tc.at("static/disk/0000.ppm"));
}

TEST(Datasets, LoadedMassIsWholeSlices) {
  TempDir dir("mass");
  SynthConfig cfg = tiny_config();
  cfg.train_events_per_category = 4;
  cfg.test_events_per_category = 3;
  generate_synthetic_pair_set(cfg, dir.path());
  for (std::size_t steps : {1u, 3u, 4u, 7u}) {
    const LoadedDataset d = load_dataset(dir.path(), steps);
    ASSERT_EQ(d.event_train.size(), 8u);
    ASSERT_EQ(d.event_test.size(), 6u);
    for (std::size_t i = 0; i < d.event_train.size(); ++i) {
      const std::size_t n = d.event_train_counts[i];
      EXPECT_EQ(d.event_train[i].input.total(), static_cast<double>(n / steps * steps));
      EXPECT_EQ(d.event_train[i].input.steps, steps);
    }
    for (std::size_t i = 0; i < d.event_test.size(); ++i) {
      const std::size_t n = d.event_test_counts[i];
      EXPECT_EQ(d.event_test[i].input.total(), static_cast<double>(n / steps * steps));
    }
  }
}

TEST(Datasets, LoadedSamplesMatchSources) {
  TempDir dir("load");
  generate_synthetic_pair_set(tiny_config(), dir.path());
  const LoadedDataset d = load_dataset(dir.path(), 3);
  ASSERT_EQ(d.static_images.size(), 6u);
  for (const Image& im : d.static_images) {
    EXPECT_EQ(im.channels, 3u);
    EXPECT_EQ(im.height, 8u);
    for (double v : im.values) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  // "disk" is the second listed category.
  const auto stream = events::decode_event_file(read_bytes(dir.path() / "event/disk/0000.evt"));
  const auto frames = events::integrate_frames(stream, 3);
  bool found = false;
  for (const auto& s : d.event_train) found = found || (s.label == 1 && s.input == frames);
  EXPECT_TRUE(found);

  const transfer::TrainingData td = training_data(d, d, 3);
  EXPECT_EQ(td.static_train.size(), 6u);
  EXPECT_EQ(td.event_train.size(), 4u);
  EXPECT_EQ(td.event_test.size(), 2u);
  EXPECT_EQ(td.static_train[0].input.steps, 3u);
}

TEST(Datasets, EventsHaveBothPolarities) {
  TempDir dir("pol");
  SynthConfig cfg = tiny_config();
  cfg.image_size = 16;
  cfg.motion_frames = 8;
  generate_synthetic_pair_set(cfg, dir.path());
  for (const char* name : {"event/square/0000.evt", "event/disk/0001.evt"}) {
    const auto s = events::summarize(events::decode_event_file(read_bytes(dir.path() / name)));
    EXPECT_GT(s.on_events, 0u) << name;
    EXPECT_GT(s.off_events, 0u) << name;
  }
}

TEST(Datasets, CorruptedImageNamesFile) {
  TempDir dir("bad");
  generate_synthetic_pair_set(tiny_config(), dir.path());
  const fs::path victim = dir.path() / "static/square/0001.ppm";
  {
    std::ofstream f(victim, std::ios::binary | std::ios::trunc);
    f << "P9\n8 8\n255\n";
  }
  try {
    load_dataset(dir.path(), 3);
    ADD_FAILURE() << "expected DecodeError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DecodeError);
    EXPECT_NE(std::string(e.what()).find("0001.ppm"), std::string::npos) << e.what();
  }
}

TEST(Datasets, CorruptedEventNamesFile) {
  TempDir dir("badevt");
  generate_synthetic_pair_set(tiny_config(), dir.path());
  const fs::path victim = dir.path() / "event/disk/0002.evt";
  auto bytes = read_bytes(victim);
  bytes.resize(bytes.size() - 3);
  write_bytes(victim, bytes);
  try {
    load_dataset(dir.path(), 3);
    ADD_FAILURE() << "expected DecodeError";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DecodeError);
    EXPECT_NE(std::string(e.what()).find("0002.evt"), std::string::npos) << e.what();
  }
}

TEST(Datasets, MissingFiles) {
  TempDir dir("missing");
  EXPECT_ERRC(read_manifest(dir.path()), Errc::MissingFile);
  generate_synthetic_pair_set(tiny_config(), dir.path());
  fs::remove(dir.path() / "event/square/0000.evt");
  EXPECT_ERRC(load_dataset(dir.path(), 3), Errc::MissingFile);
}

TEST(Datasets, GeometryMismatch) {
  TempDir a("geo_a"), b("geo_b");
  SynthConfig cfg = tiny_config();
  generate_synthetic_pair_set(cfg, a.path());
  cfg.image_size = 10;
  generate_synthetic_pair_set(cfg, b.path());
  EXPECT_ERRC(training_data(load_dataset(a.path(), 3), load_dataset(b.path(), 3), 3), Errc::ShapeMismatch);
}

TEST(Datasets, ConfigParsing) {
  const SynthConfig c = SynthConfig::from_key_values(
      parse_key_values("categories = bar, cross\nimage_size = 12\nseed = 4\ncontrast = 0.5\n"));
  EXPECT_EQ(c.categories, (std::vector<std::string>{"bar", "cross"}));
  EXPECT_EQ(c.image_size, 12u);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_EQ(c.contrast, 0.5);
  const SynthConfig d = SynthConfig::from_key_values(parse_key_values(c.to_text()));
  EXPECT_EQ(c.to_text(), d.to_text());
  EXPECT_ERRC(SynthConfig::from_key_values(parse_key_values("flavour = 1\n")), Errc::InvalidConfig);
  EXPECT_ERRC(SynthConfig::from_key_values(parse_key_values("categories = hexagon\n")), Errc::InvalidConfig);
  EXPECT_ERRC(SynthConfig::from_key_values(parse_key_values("contrast = 0\n")), Errc::InvalidConfig);
}

TEST(Datasets, RenderersAreSeeded) {
  for (const std::string& kind : shape_kinds()) {
    Rng a(3), b(3);
    EXPECT_EQ(render_static(kind, 12, a).values, render_static(kind, 12, b).values);
    Rng c(4), d(4);
    const auto fa = render_motion(kind, 12, 5, 0.03, c);
    const auto fb = render_motion(kind, 12, 5, 0.03, d);
    ASSERT_EQ(fa.size(), 5u);
    for (std::size_t k = 0; k < fa.size(); ++k) {
      EXPECT_EQ(fa[k].intensity, fb[k].intensity);
      if (k > 0) {
        EXPECT_GT(fa[k].t, fa[k - 1].t);
      }
    }
  }
}
