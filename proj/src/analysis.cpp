#include "ktsnn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "ktsnn/config.hpp"
#include "ktsnn/error.hpp"
#include "ktsnn/losses.hpp"

namespace ktsnn::analysis {
namespace {

constexpr std::size_t kChunk = 64;

std::size_t tap_index(const Network& net, const std::string& layer) {
  const std::vector<std::string> names = net.lif_layer_names();
  const auto it = std::find(names.begin(), names.end(), layer);
  if (it == names.end()) throw Error(Errc::LayerTapInvalid, "no LIF layer named '" + layer + "'");
  return static_cast<std::size_t>(it - names.begin());
}

// Runs the trunk over `inputs` in chunks and hands each chunk's trace over.
template <typename F>
void for_each_trace(Network& net, std::span<const Frames> inputs, F&& visit) {
  for (std::size_t start = 0; start < inputs.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, inputs.size() - start);
    num::Graph g(false);
    const snn::ForwardTrace tr = net.forward(g, inputs.subspan(start, n), snn::Head::S, {.potentials = true});
    visit(tr, n);
  }
  net.reset_state();
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
}

Tensor as_matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t n = rows.size();
  const std::size_t d = n ? rows[0].size() : 0;
  std::vector<double> flat;
  flat.reserve(n * d);
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  return Tensor::from({n, d}, std::move(flat));
}

}  // namespace

double HeatmapResult::mean_diagonal() const {
  const std::size_t n = std::min(rows.size(), cols.size());
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += at(i, i);
  return s / static_cast<double>(n);
}

std::vector<std::vector<double>> tap_features(Network& net, std::span<const Frames> inputs, const std::string& layer) {
  const std::size_t li = tap_index(net, layer);
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for_each_trace(net, inputs, [&](const snn::ForwardTrace& tr, std::size_t n) {
    const auto& steps = tr.potentials[li];
    const std::size_t d = steps[0].size() / n;
    for (std::size_t b = 0; b < n; ++b) {
      std::vector<double> f(d, 0.0);
      for (const Tensor& u : steps) {
        const auto v = u.data();
        for (std::size_t k = 0; k < d; ++k) f[k] += v[b * d + k];
      }
      for (double& x : f) x /= static_cast<double>(steps.size());
      out.push_back(std::move(f));
    }
  });
  return out;
}

HeatmapResult cka_heatmap(Network& a, Network& b, std::span<const Frames> probes, std::vector<std::string> taps_a,
                          std::vector<std::string> taps_b, std::size_t max_probes) {
  if (taps_a.empty()) taps_a = a.lif_layer_names();
  if (taps_b.empty()) taps_b = b.lif_layer_names();
  if (taps_a.empty() || taps_b.empty()) throw Error(Errc::LayerTapInvalid, "no LIF layers to tap");
  for (const auto& t : taps_a) tap_index(a, t);
  for (const auto& t : taps_b) tap_index(b, t);
  if (max_probes < 2) throw Error(Errc::DegenerateBatch, "need at least two probes");
  const std::span<const Frames> used = probes.first(std::min(probes.size(), max_probes));
  if (used.size() < 2) throw Error(Errc::DegenerateBatch, "need at least two probes");

  std::vector<Tensor> fa;
  std::vector<Tensor> fb;
  for (const auto& t : taps_a) fa.push_back(as_matrix(tap_features(a, used, t)));
  for (const auto& t : taps_b) fb.push_back(as_matrix(tap_features(b, used, t)));

  HeatmapResult r;
  r.rows = taps_a;
  r.cols = taps_b;
  r.samples = used.size();
  for (const Tensor& x : fa) {
    for (const Tensor& y : fb) r.values.push_back(std::clamp(losses::linear_cka(x, y), 0.0, 1.0));
  }
  return r;
}

std::vector<double> membrane_potentials(Network& net, std::span<const Frames> inputs, const std::string& layer) {
  const std::size_t li = tap_index(net, layer);
  std::vector<double> out;
  for_each_trace(net, inputs, [&](const snn::ForwardTrace& tr, std::size_t) {
    for (const Tensor& u : tr.potentials[li]) out.insert(out.end(), u.data().begin(), u.data().end());
  });
  return out;
}

std::size_t Histogram::total() const {
  std::size_t s = 0;
  for (std::size_t c : counts) s += c;
  return s;
}

Histogram histogram(std::span<const double> values, std::size_t bins) {
  if (bins < 2) throw Error(Errc::InvalidConfig, "histogram needs at least two bins");
  if (values.empty()) throw Error(Errc::EmptySequence, "histogram of no values");
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it;
  double hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw Error(Errc::NonFinite, "histogram of non-finite values");
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  Histogram h;
  h.counts.assign(bins, 0);
  for (std::size_t i = 0; i <= bins; ++i) h.edges.push_back(i == bins ? hi : lo + width * static_cast<double>(i));
  for (double v : values) {
    const auto idx = static_cast<std::size_t>(std::floor((v - lo) / width));
    ++h.counts[std::min(idx, bins - 1)];
  }
  return h;
}

Histogram membrane_histogram(Network& net, std::span<const Frames> inputs, const std::string& layer, std::size_t bins) {
  if (bins < 2) throw Error(Errc::InvalidConfig, "histogram needs at least two bins");
  const std::vector<double> v = membrane_potentials(net, inputs, layer);
  return histogram(v, bins);
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(Errc::EmptySequence, "KS statistic needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

std::string heatmap_csv(const HeatmapResult& r) {
  std::string s = "layer";
  for (const auto& c : r.cols) s += "," + csv_field(c);
  s += "\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    s += csv_field(r.rows[i]);
    for (std::size_t j = 0; j < r.cols.size(); ++j) s += "," + format_double(r.at(i, j));
    s += "\n";
  }
  return s;
}

std::string histogram_csv(const Histogram& h) {
  std::string s = "edge,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) s += format_double(h.edges[i]) + "," + std::to_string(h.counts[i]) + "\n";
  s += format_double(h.edges.back()) + ",0\n";
  return s;
}

void export_csv(const HeatmapResult& r, const std::filesystem::path& path) { write_file(path, heatmap_csv(r)); }
void export_csv(const Histogram& h, const std::filesystem::path& path) { write_file(path, histogram_csv(h)); }

std::filesystem::path heatmap_path(const std::filesystem::path& dir, const std::string& run_id) {
  return dir / (run_id + "_heatmap.csv");
}
std::filesystem::path histogram_path(const std::filesystem::path& dir, const std::string& run_id) {
  return dir / (run_id + "_mp_hist.csv");
}

}  // namespace ktsnn::analysis
