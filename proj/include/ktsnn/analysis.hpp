#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ktsnn/frames.hpp"
#include "ktsnn/snn.hpp"

namespace ktsnn::analysis {

using snn::Network;
using num::Tensor;

inline constexpr std::size_t kDefaultProbeCount = 512;

// Features per tap are membrane potentials averaged over time and flattened.
struct HeatmapResult {
  std::vector<std::string> rows;  // taps of model A
  std::vector<std::string> cols;  // taps of model B
  std::vector<double> values;     // row-major, rows.size() x cols.size()
  std::size_t samples = 0;

  double at(std::size_t i, std::size_t j) const { return values[i * cols.size() + j]; }
  double mean_diagonal() const;
};

// Empty tap lists select every LIF layer. At most max_probes inputs are used
// (the first ones). Throws LayerTapInvalid for unknown or empty taps.
HeatmapResult cka_heatmap(Network& a, Network& b, std::span<const Frames> probes,
                          std::vector<std::string> taps_a = {}, std::vector<std::string> taps_b = {},
                          std::size_t max_probes = kDefaultProbeCount);

// [samples, neurons] time-averaged membrane potentials of one LIF layer.
std::vector<std::vector<double>> tap_features(Network& net, std::span<const Frames> inputs, const std::string& layer);

// Every membrane potential of a layer over all samples and time steps.
std::vector<double> membrane_potentials(Network& net, std::span<const Frames> inputs, const std::string& layer);

struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<std::size_t> counts;

  std::size_t total() const;
};

// Fixed-width bins over [min, max] of the values. A constant sample gets a
// unit-wide range centred on it.
Histogram histogram(std::span<const double> values, std::size_t bins);

Histogram membrane_histogram(Network& net, std::span<const Frames> inputs, const std::string& layer, std::size_t bins);

// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

// Header row "layer,<cols...>", then one row per model-A tap.
std::string heatmap_csv(const HeatmapResult& r);
// Header "edge,count"; one row per bin with its lower edge, then the upper
// edge of the last bin with count 0.
std::string histogram_csv(const Histogram& h);

void export_csv(const HeatmapResult& r, const std::filesystem::path& path);
void export_csv(const Histogram& h, const std::filesystem::path& path);

std::filesystem::path heatmap_path(const std::filesystem::path& dir, const std::string& run_id);
std::filesystem::path histogram_path(const std::filesystem::path& dir, const std::string& run_id);

}  // namespace ktsnn::analysis
