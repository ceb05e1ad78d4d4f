#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ktsnn/config.hpp"
#include "ktsnn/frames.hpp"
#include "ktsnn/image.hpp"
#include "ktsnn/losses.hpp"
#include "ktsnn/rng.hpp"
#include "ktsnn/snn.hpp"

namespace ktsnn::transfer {

using losses::EtaParams;
using losses::LossWeights;
using num::Tensor;
using snn::Network;

// Position in the training run, all counters 0-based except the totals.
struct SlideState {
  std::size_t batch_index = 0;        // b_i
  std::size_t batches_per_epoch = 1;  // b_l
  std::size_t epoch = 0;              // e_c
  std::size_t max_epochs = 1;         // e_m
  std::size_t kt_cutoff = 1;          // e_s

  void validate() const;
};

// min(1, ((b_i + e_c b_l) / (e_s b_l))^3)
double replacement_probability(const SlideState& s);

// max(R, G, B) per pixel; [H, W] row-major. Throws OutOfRangePixel for
// values outside [0, 1].
std::vector<double> hsv_value(const Image& rgb);

// Value channel (or the gray channel as is) copied into both polarity
// channels and repeated over `steps` identical time steps.
EncodedInput encode_static(const Image& image, std::size_t steps);

struct LabeledInput {
  EncodedInput input;
  int label = 0;
};

struct PairedBatch {
  std::vector<EncodedInput> static_inputs;
  std::vector<EncodedInput> event_inputs;
  std::vector<int> labels;
  std::vector<bool> replaced;

  std::size_t size() const { return labels.size(); }
};

// Event samples are drawn class-balanced: categories are visited round-robin
// from a random starting category, and within a category a sample is picked
// uniformly. Each event sample is paired with a uniform static sample of
// the same category.
PairedBatch sample_paired_batch(std::span<const LabeledInput> static_set, std::span<const LabeledInput> event_set,
                                std::size_t batch_size, Rng& rng);

// Independently per index, with probability p, the static input is replaced
// by its paired event input.
PairedBatch apply_sliding_replacement(PairedBatch batch, double p, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  AdamConfig cfg;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

// One bias-corrected Adam step over every parameter, in order. Parameters
// without a gradient buffer are treated as having zero gradient.
void optimizer_update(std::span<const Tensor> params, OptimizerState& opt);

// Ablation arms.
enum class Mode { Baseline, Transfer, TransferNoSlide, DalOnly, Mmd };

Mode parse_mode(const std::string& name);
std::string mode_name(Mode mode);

// The head that carries the event-domain classifier after training in
// `mode`: h_t whenever it receives supervision, h_s otherwise.
snn::Head evaluation_head(Mode mode);

// Replacement probability actually used for a batch in `mode`.
double mode_replacement_probability(Mode mode, const SlideState& s);

struct StepReport {
  double loss_all = 0.0;
  double loss_cls_s = 0.0;
  double loss_kt = 0.0;
  double p_used = 0.0;
  bool kt_active = false;
};

struct StepLosses {
  Tensor cls_s;
  Tensor kt;
  Tensor all;
  bool kt_active = false;
};

// Steps (2) to (4) of an iteration on an already replaced batch: both
// forward passes and the recorded losses, without backward or update.
StepLosses step_losses(num::Graph& g, Network& net, const EtaParams& eta, const PairedBatch& batch,
                       const SlideState& s, const LossWeights& w, Mode mode);

// One iteration: replacement, static-side forward through h_s, event-side
// forward through h_t, losses, a single backward pass and one optimizer
// update of the network and eta. Gradients are zeroed before returning.
StepReport train_step(Network& net, EtaParams& eta, PairedBatch batch, const SlideState& s, const LossWeights& w,
                      OptimizerState& opt, Mode mode, Rng& rng);

struct TrainConfig {
  std::string arch = "15C5-AP2-40C5-AP2-FC-FC";
  std::size_t timesteps = 6;
  std::size_t classes = 5;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::optional<std::size_t> e_s;  // defaults to epochs
  double lr = 1e-3;
  LossWeights weights;
  snn::LIFConfig lif;
  std::uint64_t seed = 1;
  Mode mode = Mode::Transfer;
  std::string static_dir;
  std::string event_dir;
  std::string out_dir;

  std::size_t kt_cutoff() const { return e_s.value_or(epochs); }
  void validate() const;

  static const std::vector<std::string>& keys();
  static TrainConfig from_key_values(const KeyValues& kv);
  // Resolved `key = value` snapshot with every key present.
  std::string to_text() const;
};

struct TrainingData {
  std::vector<LabeledInput> static_train;
  std::vector<LabeledInput> event_train;
  std::vector<LabeledInput> event_test;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double loss_all = 0.0;  // means over the epoch's batches
  double loss_cls_s = 0.0;
  double loss_kt = 0.0;
  double p_final_batch = 0.0;
  double test_acc = 0.0;
  std::vector<double> eta_sigmoid;
};

struct TrainResult {
  Network network;
  EtaParams eta;
  std::vector<EpochMetrics> log;
};

// Runs cfg.epochs epochs of train_step. Each epoch has ceil(|event_train| /
// batch_size) batches and ends with an evaluation on event_test. When
// cfg.out_dir is set the metrics CSV is appended after every epoch and the
// checkpoint plus a resolved-config snapshot are written at the end.
// `on_epoch`, when given, sees each row as it is produced.
TrainResult train(const TrainConfig& cfg, const TrainingData& data,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

// Fraction of samples whose argmax over mean_t head_out[t] equals the label.
double evaluate(Network& net, std::span<const LabeledInput> test_set, snn::Head head = snn::Head::T);

std::string metrics_csv_header(std::size_t steps);
std::string metrics_csv_row(const EpochMetrics& m);

// Static images of a dataset, encoded for `steps` time steps.
std::vector<LabeledInput> encode_static_set(std::span<const Image> images, std::span<const int> labels,
                                            std::size_t steps);

}  // namespace ktsnn::transfer
