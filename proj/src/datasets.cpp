#include "ktsnn/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "ktsnn/error.hpp"

namespace ktsnn::datasets {
namespace fs = std::filesystem;

namespace {

constexpr std::uint32_t kFrameIntervalUs = 10'000;
constexpr int kSubsamples = 4;
constexpr double kSaccadeSpeed = 1.0;  // px per frame
// Motion sequences: dim textured background, object brighter by a log
// ratio drawn from this range.
constexpr double kBackgroundLo = 0.25, kBackgroundHi = 0.4;
constexpr double kLogRatioLo = 0.4, kLogRatioHi = 1.2;
constexpr double kTextureAmplitude = 0.04;

std::uint64_t mix(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Independent stream per (seed, domain, category, index).
Rng sample_rng(std::uint64_t seed, Domain domain, std::size_t category, std::size_t index) {
  return Rng(mix(mix(mix(mix(seed) ^ static_cast<std::uint64_t>(domain)) ^ category) ^ index));
}

struct Placement {
  double cx, cy, half, angle;
};

bool inside(const std::string& kind, double u, double v, double s) {
  if (kind == "square") return std::abs(u) <= s && std::abs(v) <= s;
  if (kind == "disk") return u * u + v * v <= s * s;
  if (kind == "cross") {
    const double w = 0.35 * s;
    return (std::abs(u) <= w && std::abs(v) <= s) || (std::abs(v) <= w && std::abs(u) <= s);
  }
  if (kind == "bar") return std::abs(u) <= s && std::abs(v) <= 0.35 * s;
  if (kind == "triangle") return v <= s && v >= -s && std::abs(u) <= (v + s) / 2;
  throw Error(Errc::InvalidConfig, "unknown shape '" + kind + "'");
}

// Shapes are drawn as outlines: a point is on the stroke when it lies inside
// the shape but some point kStroke away does not.
constexpr double kStroke = 1.2;

bool on_stroke(const std::string& kind, double u, double v, double s) {
  if (!inside(kind, u, v, s)) return false;
  for (int k = 0; k < 8; ++k) {
    const double a = k * std::numbers::pi / 4;
    if (!inside(kind, u + kStroke * std::cos(a), v + kStroke * std::sin(a), s)) return true;
  }
  return false;
}

// Fraction of pixel (x, y) covered by the shape, by supersampling.
std::vector<double> coverage(const std::string& kind, std::size_t size, const Placement& pl) {
  std::vector<double> cov(size * size, 0.0);
  const double c = std::cos(pl.angle);
  const double s = std::sin(pl.angle);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSubsamples; ++sy) {
        for (int sx = 0; sx < kSubsamples; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSubsamples - pl.cx;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSubsamples - pl.cy;
          hits += on_stroke(kind, c * px + s * py, -s * px + c * py, pl.half);
        }
      }
      cov[y * size + x] = hits / static_cast<double>(kSubsamples * kSubsamples);
    }
  }
  return cov;
}

Placement random_placement(const std::string& kind, std::size_t size, Rng& rng) {
  const double n = static_cast<double>(size);
  Placement pl;
  pl.half = rng.uniform(0.18, 0.32) * n;
  pl.cx = rng.uniform(pl.half, n - pl.half);
  pl.cy = rng.uniform(pl.half, n - pl.half);
  pl.angle = rng.uniform(-0.35, 0.35);
  if (kind == "bar" && rng.bernoulli(0.5)) pl.angle += std::numbers::pi / 2;
  return pl;
}

// Smooth random texture in roughly [base - amp, base + amp].
std::vector<double> texture(std::size_t size, double base, double amp, Rng& rng) {
  struct Wave {
    double fx, fy, phase;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 3; ++i) waves.push_back({rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(0, 6.3)});
  std::vector<double> out(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      double v = 0.0;
      for (const Wave& w : waves) v += std::sin(w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y) + w.phase);
      out[y * size + x] = base + amp * v / 3.0;
    }
  }
  return out;
}

std::string padded(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return buf;
}

std::string domain_name(Domain d) { return d == Domain::Static ? "static" : "event"; }
std::string split_name(Split s) { return s == Split::Train ? "train" : "test"; }

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::size_t positive(const KeyValues& kv, const std::string& key, std::size_t fallback, long minimum) {
  const long v = parse_int(kv, key, static_cast<long>(fallback));
  if (v < minimum) throw Error(Errc::InvalidConfig, key + " must be >= " + std::to_string(minimum));
  return static_cast<std::size_t>(v);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(' '));
    item.erase(item.find_last_not_of(' ') + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::MissingFile, path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
}

std::size_t DatasetManifest::count(Domain d, Split s) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const ManifestEntry& e) { return e.domain == d && e.split == s; }));
}

void SynthConfig::validate() const {
  if (categories.empty()) throw Error(Errc::InvalidConfig, "need at least one category");
  for (const std::string& c : categories) {
    if (std::find(shape_kinds().begin(), shape_kinds().end(), c) == shape_kinds().end()) {
      throw Error(Errc::InvalidConfig, "unknown shape '" + c + "'");
    }
  }
  if (image_size < 4 || image_size > 1024) throw Error(Errc::InvalidConfig, "image_size must lie in [4, 1024]");
  if (statics_per_category < 1 || train_events_per_category < 1 || test_events_per_category < 1 || steps < 1) {
    throw Error(Errc::InvalidConfig, "all sample counts must be >= 1");
  }
  if (motion_frames < 2) throw Error(Errc::InvalidConfig, "motion_frames must be >= 2");
  if (!(contrast > 0.0)) throw Error(Errc::InvalidConfig, "contrast must be positive");
  if (!(noise >= 0.0)) throw Error(Errc::InvalidConfig, "noise must be >= 0");
}

const std::vector<std::string>& SynthConfig::keys() {
  static const std::vector<std::string> k{"categories",     "image_size", "statics_per_category",
                                          "train_events_per_category", "test_events_per_category",
                                          "motion_frames",  "contrast",   "noise",
                                          "timesteps",      "seed",       "out_dir"};
  return k;
}

SynthConfig SynthConfig::from_key_values(const KeyValues& kv) {
  reject_unknown_keys(kv, keys());
  SynthConfig c;
  if (kv.contains("categories")) c.categories = split_list(kv.at("categories"));
  c.image_size = positive(kv, "image_size", c.image_size, 4);
  c.statics_per_category = positive(kv, "statics_per_category", c.statics_per_category, 1);
  c.train_events_per_category = positive(kv, "train_events_per_category", c.train_events_per_category, 1);
  c.test_events_per_category = positive(kv, "test_events_per_category", c.test_events_per_category, 1);
  c.motion_frames = positive(kv, "motion_frames", c.motion_frames, 2);
  c.contrast = parse_double(kv, "contrast", c.contrast);
  c.noise = parse_double(kv, "noise", c.noise);
  c.steps = positive(kv, "timesteps", c.steps, 1);
  c.seed = static_cast<std::uint64_t>(parse_int(kv, "seed", static_cast<long>(c.seed)));
  c.validate();
  return c;
}

std::string SynthConfig::to_text() const {
  std::string cats;
  for (std::size_t i = 0; i < categories.size(); ++i) cats += (i ? "," : "") + categories[i];
  std::string s;
  s += "categories = " + cats + "\n";
  s += "image_size = " + std::to_string(image_size) + "\n";
  s += "statics_per_category = " + std::to_string(statics_per_category) + "\n";
  s += "train_events_per_category = " + std::to_string(train_events_per_category) + "\n";
  s += "test_events_per_category = " + std::to_string(test_events_per_category) + "\n";
  s += "motion_frames = " + std::to_string(motion_frames) + "\n";
  s += "contrast = " + format_double(contrast) + "\n";
  s += "noise = " + format_double(noise) + "\n";
  s += "timesteps = " + std::to_string(steps) + "\n";
  s += "seed = " + std::to_string(seed) + "\n";
  return s;
}

Image render_static(const std::string& kind, std::size_t size, Rng& rng) {
  const Placement pl = random_placement(kind, size, rng);
  const std::vector<double> cov = coverage(kind, size, pl);

  // Saturated colour from a random hue, value kept bright.
  const double hue = rng.uniform(0.0, 6.0);
  const double value = rng.uniform(0.6, 1.0);
  const double sat = rng.uniform(0.3, 1.0);
  double rgb[3];
  for (int c = 0; c < 3; ++c) {
    const double k = std::fmod(5.0 - 2.0 * c + hue, 6.0);  // r: 5, g: 3, b: 1
    rgb[c] = value * (1.0 - sat * std::clamp(std::min(k, 4.0 - k), 0.0, 1.0));
  }

  Image img(3, size, size);
  for (std::size_t c = 0; c < 3; ++c) {
    const std::vector<double> bg = texture(size, rng.uniform(0.03, 0.12), 0.03, rng);
    for (std::size_t i = 0; i < size * size; ++i) {
      const double v = (1.0 - cov[i]) * bg[i] + cov[i] * rgb[c] + rng.uniform(-0.03, 0.03);
      img.values[c * size * size + i] = std::clamp(v, 0.0, 1.0);
    }
  }
  return img;
}

std::vector<events::LuminanceFrame> render_motion(const std::string& kind, std::size_t size, std::size_t frames,
                                                  double noise, Rng& rng) {
  Placement pl = random_placement(kind, size, rng);
  // Saccade along a triangle: the heading turns by 120 degrees after each
  // third of the sequence, ending near the start.
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double speed = rng.uniform(kSaccadeSpeed * 0.75, kSaccadeSpeed * 1.25);
  const double bgl = rng.uniform(kBackgroundLo, kBackgroundHi);
  const double brightness = bgl * std::exp(rng.uniform(kLogRatioLo, kLogRatioHi));
  const std::vector<double> bg = texture(size, bgl, kTextureAmplitude, rng);
  const double segment = static_cast<double>(frames - 1) / 3.0;

  std::vector<events::LuminanceFrame> out;
  for (std::size_t k = 0; k < frames; ++k) {
    if (k > 0) {
      const double leg = std::floor(static_cast<double>(k - 1) / segment);
      const double dir = heading + leg * 2.0 * std::numbers::pi / 3.0;
      pl.cx += speed * std::cos(dir);
      pl.cy += speed * std::sin(dir);
    }
    const std::vector<double> cov = coverage(kind, size, pl);
    events::LuminanceFrame f{static_cast<std::uint32_t>(k * kFrameIntervalUs), size, size, std::vector<double>(size * size)};
    for (std::size_t i = 0; i < size * size; ++i) {
      const double clean = (1.0 - cov[i]) * bg[i] + cov[i] * brightness;
      f.intensity[i] = clean * std::exp(noise * rng.uniform(-1.0, 1.0));
    }
    out.push_back(std::move(f));
  }
  return out;
}

DatasetManifest generate_synthetic_pair_set(const SynthConfig& cfg, const fs::path& root) {
  cfg.validate();
  DatasetManifest m;
  m.root = root;
  m.categories = cfg.categories;
  m.height = m.width = cfg.image_size;
  m.steps = cfg.steps;

  std::error_code ec;
  for (const std::string& cat : cfg.categories) {
    fs::create_directories(root / "static" / cat, ec);
    if (!ec) fs::create_directories(root / "event" / cat, ec);
    if (ec) throw Error(Errc::IoError, "cannot create directories under " + root.string());
  }

  for (std::size_t c = 0; c < cfg.categories.size(); ++c) {
    const std::string& cat = cfg.categories[c];
    for (std::size_t i = 0; i < cfg.statics_per_category; ++i) {
      Rng rng = sample_rng(cfg.seed, Domain::Static, c, i);
      const std::string rel = "static/" + cat + "/" + padded(i) + ".ppm";
      write_bytes(root / rel, encode_pnm(render_static(cat, cfg.image_size, rng)));
      m.entries.push_back({rel, static_cast<int>(c), Domain::Static, Split::Train});
    }
    const std::size_t total = cfg.train_events_per_category + cfg.test_events_per_category;
    for (std::size_t i = 0; i < total; ++i) {
      Rng rng = sample_rng(cfg.seed, Domain::Event, c, i);
      const auto frames = render_motion(cat, cfg.image_size, cfg.motion_frames, cfg.noise, rng);
      const events::EventStream stream = events::simulate_dvs(frames, cfg.contrast);
      const std::string rel = "event/" + cat + "/" + padded(i) + ".evt";
      write_bytes(root / rel, events::encode_event_file(stream));
      m.entries.push_back(
          {rel, static_cast<int>(c), Domain::Event, i < cfg.train_events_per_category ? Split::Train : Split::Test});
    }
  }
  std::sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.path < b.path; });

  std::string labels = "path,category_id,domain,split\n";
  for (const ManifestEntry& e : m.entries) {
    labels += e.path + "," + std::to_string(e.category) + "," + domain_name(e.domain) + "," + split_name(e.split) + "\n";
  }
  write_text(root / "labels.csv", labels);

  std::string cats;
  for (std::size_t i = 0; i < m.categories.size(); ++i) cats += (i ? "," : "") + m.categories[i];
  write_text(root / "manifest.txt", "height = " + std::to_string(m.height) + "\nwidth = " + std::to_string(m.width) +
                                        "\ntimesteps = " + std::to_string(m.steps) + "\ncategories = " + cats +
                                        "\n\n# generator\n" + cfg.to_text());
  return m;
}

DatasetManifest read_manifest(const fs::path& root) {
  const auto text_of = [](const fs::path& p) {
    const auto bytes = read_bytes(p);
    return std::string(bytes.begin(), bytes.end());
  };
  const KeyValues kv = parse_key_values(text_of(root / "manifest.txt"));
  DatasetManifest m;
  m.root = root;
  m.height = static_cast<std::size_t>(parse_int(kv, "height", 0));
  m.width = static_cast<std::size_t>(parse_int(kv, "width", 0));
  m.steps = static_cast<std::size_t>(parse_int(kv, "timesteps", 0));
  m.categories = split_list(parse_string(kv, "categories", ""));
  if (m.height == 0 || m.width == 0 || m.categories.empty()) {
    throw Error(Errc::DecodeError, (root / "manifest.txt").string() + ": missing geometry or categories");
  }

  std::stringstream labels(text_of(root / "labels.csv"));
  std::string line;
  std::getline(labels, line);
  if (line != "path,category_id,domain,split") throw Error(Errc::DecodeError, (root / "labels.csv").string() + ": bad header");
  std::size_t line_no = 1;
  while (std::getline(labels, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string col;
    while (std::getline(ls, col, ',')) cols.push_back(col);
    const auto bad = [&] { return Error(Errc::DecodeError, (root / "labels.csv").string() + ": line " + std::to_string(line_no)); };
    if (cols.size() != 4) throw bad();
    ManifestEntry e;
    e.path = cols[0];
    try {
      e.category = std::stoi(cols[1]);
    } catch (const std::exception&) {
      throw bad();
    }
    if (e.category < 0 || static_cast<std::size_t>(e.category) >= m.categories.size()) throw bad();
    if (cols[2] != "static" && cols[2] != "event") throw bad();
    if (cols[3] != "train" && cols[3] != "test") throw bad();
    e.domain = cols[2] == "static" ? Domain::Static : Domain::Event;
    e.split = cols[3] == "train" ? Split::Train : Split::Test;
    m.entries.push_back(e);
  }
  return m;
}

LoadedDataset load_dataset(const fs::path& root, std::size_t steps) {
  if (steps < 1) throw Error(Errc::ZeroSlices, "need at least one time step");
  LoadedDataset d;
  d.manifest = read_manifest(root);
  for (const ManifestEntry& e : d.manifest.entries) {
    const fs::path path = root / e.path;
    if (!fs::exists(path)) throw Error(Errc::MissingFile, path.string());
    const std::vector<std::uint8_t> bytes = read_bytes(path);
    if (e.domain == Domain::Static) {
      d.static_images.push_back(decode_pnm(bytes, path.string()));
      d.static_labels.push_back(e.category);
      continue;
    }
    events::EventStream stream;
    try {
      stream = events::decode_event_file(bytes);
    } catch (const DecodeFailure& f) {
      throw Error(Errc::DecodeError, path.string() + ": " + f.what());
    }
    transfer::LabeledInput li{events::integrate_frames(stream, steps), e.category};
    if (e.split == Split::Train) {
      d.event_train.push_back(std::move(li));
      d.event_train_counts.push_back(stream.size());
    } else {
      d.event_test.push_back(std::move(li));
      d.event_test_counts.push_back(stream.size());
    }
  }
  return d;
}

transfer::TrainingData training_data(const LoadedDataset& statics, const LoadedDataset& events, std::size_t steps) {
  transfer::TrainingData data;
  data.static_train = transfer::encode_static_set(statics.static_images, statics.static_labels, steps);
  data.event_train = events.event_train;
  data.event_test = events.event_test;
  for (const auto& s : data.static_train) {
    if (s.input.height != events.manifest.height || s.input.width != events.manifest.width) {
      throw Error(Errc::ShapeMismatch, "static images and event frames differ in geometry");
    }
  }
  return data;
}

}  // namespace ktsnn::datasets
