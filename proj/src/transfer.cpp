#include "ktsnn/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "ktsnn/error.hpp"
#include "ktsnn/ops.hpp"

namespace ktsnn::transfer {

void SlideState::validate() const {
  if (batches_per_epoch < 1 || batch_index >= batches_per_epoch || epoch >= max_epochs || kt_cutoff < 1 ||
      kt_cutoff > max_epochs) {
    throw Error(Errc::InvalidConfig, "slide state out of range: b_i=" + std::to_string(batch_index) +
                                         " b_l=" + std::to_string(batches_per_epoch) + " e_c=" + std::to_string(epoch) +
                                         " e_m=" + std::to_string(max_epochs) + " e_s=" + std::to_string(kt_cutoff));
  }
}

double replacement_probability(const SlideState& s) {
  s.validate();
  const double progress = static_cast<double>(s.batch_index + s.epoch * s.batches_per_epoch) /
                          static_cast<double>(s.kt_cutoff * s.batches_per_epoch);
  return std::min(1.0, progress * progress * progress);
}

std::vector<double> hsv_value(const Image& rgb) {
  if (rgb.channels != 3) throw Error(Errc::ShapeMismatch, "hsv_value needs an RGB image");
  for (double v : rgb.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::OutOfRangePixel, "pixel value " + format_double(v));
  }
  std::vector<double> value(rgb.height * rgb.width);
  for (std::size_t y = 0; y < rgb.height; ++y) {
    for (std::size_t x = 0; x < rgb.width; ++x) {
      value[y * rgb.width + x] = std::max({rgb.at(0, y, x), rgb.at(1, y, x), rgb.at(2, y, x)});
    }
  }
  return value;
}

EncodedInput encode_static(const Image& image, std::size_t steps) {
  std::vector<double> plane;
  if (image.channels == 1) {
    for (double v : image.values) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::OutOfRangePixel, "pixel value " + format_double(v));
    }
    plane = image.values;
  } else {
    plane = hsv_value(image);
  }
  EncodedInput out(steps, image.height, image.width);
  const std::size_t n = plane.size();
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t c = 0; c < Frames::kChannels; ++c) {
      std::copy(plane.begin(), plane.end(), out.values.begin() + static_cast<long>((t * Frames::kChannels + c) * n));
    }
  }
  return out;
}

std::vector<LabeledInput> encode_static_set(std::span<const Image> images, std::span<const int> labels,
                                            std::size_t steps) {
  if (images.size() != labels.size()) throw Error(Errc::ShapeMismatch, "one label per image");
  std::vector<LabeledInput> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) out.push_back({encode_static(images[i], steps), labels[i]});
  return out;
}

PairedBatch sample_paired_batch(std::span<const LabeledInput> static_set, std::span<const LabeledInput> event_set,
                                std::size_t batch_size, Rng& rng) {
  std::map<int, std::vector<std::size_t>> events_by_label;
  std::map<int, std::vector<std::size_t>> statics_by_label;
  for (std::size_t i = 0; i < event_set.size(); ++i) events_by_label[event_set[i].label].push_back(i);
  for (std::size_t i = 0; i < static_set.size(); ++i) statics_by_label[static_set[i].label].push_back(i);
  if (events_by_label.empty()) throw Error(Errc::MissingCategory, "event set is empty");
  std::vector<int> categories;
  for (const auto& [label, idx] : events_by_label) {
    if (!statics_by_label.contains(label)) {
      throw Error(Errc::MissingCategory, "category " + std::to_string(label) + " has no static samples");
    }
    categories.push_back(label);
  }

  PairedBatch batch;
  const std::size_t offset = rng.below(categories.size());
  for (std::size_t i = 0; i < batch_size; ++i) {
    const int label = categories[(offset + i) % categories.size()];
    const auto& ev = events_by_label[label];
    const auto& st = statics_by_label[label];
    const std::size_t e = ev[rng.below(ev.size())];
    const std::size_t s = st[rng.below(st.size())];
    batch.event_inputs.push_back(event_set[e].input);
    batch.static_inputs.push_back(static_set[s].input);
    batch.labels.push_back(label);
    batch.replaced.push_back(false);
  }
  return batch;
}

PairedBatch apply_sliding_replacement(PairedBatch batch, double p, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(Errc::InvalidConfig, "replacement probability " + format_double(p));
  for (std::size_t m = 0; m < batch.size(); ++m) {
    if (rng.bernoulli(p)) {
      batch.static_inputs[m] = batch.event_inputs[m];
      batch.replaced[m] = true;
    }
  }
  return batch;
}

void optimizer_update(std::span<const Tensor> params, OptimizerState& opt) {
  if (opt.m.empty()) {
    for (const Tensor& p : params) {
      opt.m.emplace_back(p.size(), 0.0);
      opt.v.emplace_back(p.size(), 0.0);
    }
  }
  if (opt.m.size() != params.size()) throw Error(Errc::ShapeMismatch, "optimizer state does not match parameters");
  ++opt.step;
  const AdamConfig& c = opt.cfg;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(opt.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    if (opt.m[k].size() != p.size()) throw Error(Errc::ShapeMismatch, "optimizer moment shape changed");
    const auto grad = p.grad();
    std::span<double> values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double gi = grad.empty() ? 0.0 : grad[i];
      double& m = opt.m[k][i];
      double& v = opt.v[k][i];
      m = c.beta1 * m + (1.0 - c.beta1) * gi;
      v = c.beta2 * v + (1.0 - c.beta2) * gi * gi;
      values[i] -= c.lr * (m / bc1) / (std::sqrt(v / bc2) + c.eps);
    }
  }
}

Mode parse_mode(const std::string& name) {
  if (name == "baseline") return Mode::Baseline;
  if (name == "transfer") return Mode::Transfer;
  if (name == "transfer_no_slide") return Mode::TransferNoSlide;
  if (name == "dal_only") return Mode::DalOnly;
  if (name == "mmd") return Mode::Mmd;
  throw Error(Errc::InvalidConfig, "unknown mode '" + name + "'");
}

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::Baseline: return "baseline";
    case Mode::Transfer: return "transfer";
    case Mode::TransferNoSlide: return "transfer_no_slide";
    case Mode::DalOnly: return "dal_only";
    case Mode::Mmd: return "mmd";
  }
  return "?";
}

snn::Head evaluation_head(Mode mode) {
  return (mode == Mode::Baseline || mode == Mode::DalOnly) ? snn::Head::S : snn::Head::T;
}

double mode_replacement_probability(Mode mode, const SlideState& s) {
  switch (mode) {
    case Mode::Baseline: return 1.0;
    case Mode::TransferNoSlide:
      s.validate();
      return s.epoch >= s.kt_cutoff ? 1.0 : 0.0;
    default: return replacement_probability(s);
  }
}

StepLosses step_losses(num::Graph& g, Network& net, const EtaParams& eta, const PairedBatch& batch,
                       const SlideState& s, const LossWeights& w, Mode mode) {
  StepLosses out;
  const snn::ForwardTrace src = net.forward(g, batch.static_inputs, snn::Head::S);
  net.reset_state();
  const snn::ForwardTrace tgt = net.forward(g, batch.event_inputs, snn::Head::T);
  net.reset_state();

  out.cls_s = losses::tet_loss(g, src.head_s, batch.labels, w);
  switch (mode) {
    case Mode::DalOnly: out.kt = losses::domain_alignment_loss(g, src.penult, tgt.penult); break;
    case Mode::Mmd:
      out.kt = losses::knowledge_transfer_loss(g, src.penult, tgt.penult, tgt.head_t, batch.labels, eta, w,
                                               losses::AlignmentMetric::Mmd);
      break;
    default:
      out.kt = losses::knowledge_transfer_loss(g, src.penult, tgt.penult, tgt.head_t, batch.labels, eta, w);
      break;
  }
  out.kt_active = mode != Mode::Baseline && s.epoch < s.kt_cutoff;
  out.all = losses::total_loss(g, out.cls_s, out.kt, w, out.kt_active);
  return out;
}

StepReport train_step(Network& net, EtaParams& eta, PairedBatch batch, const SlideState& s, const LossWeights& w,
                      OptimizerState& opt, Mode mode, Rng& rng) {
  StepReport report;
  report.p_used = mode_replacement_probability(mode, s);
  batch = apply_sliding_replacement(std::move(batch), report.p_used, rng);

  num::Graph g;
  net.zero_grad();
  eta.eta.zero_grad();

  const StepLosses l = step_losses(g, net, eta, batch, s, w, mode);
  report.kt_active = l.kt_active;
  report.loss_all = l.all.item();
  report.loss_cls_s = l.cls_s.item();
  report.loss_kt = l.kt.item();
  if (!std::isfinite(report.loss_all)) throw Error(Errc::NonFiniteLoss, "loss is " + format_double(report.loss_all));

  g.backward(l.all);
  std::vector<Tensor> params = net.parameters();
  params.push_back(eta.eta);
  for (const Tensor& p : params) {
    for (double v : p.grad()) {
      if (!std::isfinite(v)) throw Error(Errc::NonFiniteLoss, "non-finite gradient");
    }
  }
  optimizer_update(params, opt);

  net.zero_grad();
  eta.eta.zero_grad();
  net.reset_state();
  return report;
}

double evaluate(Network& net, std::span<const LabeledInput> test_set, snn::Head head) {
  if (test_set.empty()) throw Error(Errc::EmptyTestSet, "nothing to evaluate");
  if (head == snn::Head::Both) head = snn::Head::T;
  constexpr std::size_t kChunk = 64;
  std::size_t correct = 0;
  std::vector<EncodedInput> chunk;
  for (std::size_t start = 0; start < test_set.size(); start += kChunk) {
    const std::size_t end = std::min(test_set.size(), start + kChunk);
    chunk.clear();
    for (std::size_t i = start; i < end; ++i) chunk.push_back(test_set[i].input);
    num::Graph g(false);
    const snn::ForwardTrace trace = net.forward(g, chunk, head);
    const auto& outs = trace.head_out(head);
    const std::size_t k = net.classes();
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      std::vector<double> score(k, 0.0);
      for (const Tensor& o : outs) {
        for (std::size_t j = 0; j < k; ++j) score[j] += o[b * k + j];
      }
      const auto best = static_cast<int>(std::max_element(score.begin(), score.end()) - score.begin());
      correct += best == test_set[start + b].label;
    }
  }
  net.reset_state();
  return static_cast<double>(correct) / static_cast<double>(test_set.size());
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{"arch",       "timesteps",  "classes", "batch_size",      "epochs",
                                          "e_s",        "lr",         "lambda_cls_s", "lambda_kt", "tet_lambda",
                                          "tet_phi",    "tau",        "v_th",    "surrogate_width", "seed",
                                          "mode",       "static_dir", "event_dir", "out_dir"};
  return k;
}

namespace {

std::size_t positive(const KeyValues& kv, const std::string& key, long fallback, long minimum) {
  const long v = parse_int(kv, key, fallback);
  if (v < minimum) throw Error(Errc::InvalidConfig, key + " must be >= " + std::to_string(minimum));
  return static_cast<std::size_t>(v);
}

}  // namespace

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  reject_unknown_keys(kv, keys());
  TrainConfig c;
  c.arch = parse_string(kv, "arch", c.arch);
  c.timesteps = positive(kv, "timesteps", static_cast<long>(c.timesteps), 1);
  c.classes = positive(kv, "classes", static_cast<long>(c.classes), 1);
  c.batch_size = positive(kv, "batch_size", static_cast<long>(c.batch_size), 2);
  c.epochs = positive(kv, "epochs", static_cast<long>(c.epochs), 0);
  if (kv.contains("e_s")) c.e_s = positive(kv, "e_s", 1, 1);
  c.lr = parse_double(kv, "lr", c.lr);
  c.weights.lambda_cls_s = parse_double(kv, "lambda_cls_s", c.weights.lambda_cls_s);
  c.weights.lambda_kt = parse_double(kv, "lambda_kt", c.weights.lambda_kt);
  c.weights.tet_lambda = parse_double(kv, "tet_lambda", c.weights.tet_lambda);
  c.lif.tau = parse_double(kv, "tau", c.lif.tau);
  c.lif.v_th = parse_double(kv, "v_th", c.lif.v_th);
  c.lif.surrogate_width = parse_double(kv, "surrogate_width", c.lif.surrogate_width);
  c.weights.tet_phi = parse_double(kv, "tet_phi", c.lif.v_th);
  c.seed = static_cast<std::uint64_t>(parse_int(kv, "seed", static_cast<long>(c.seed)));
  c.mode = parse_mode(parse_string(kv, "mode", mode_name(c.mode)));
  c.static_dir = parse_string(kv, "static_dir", c.static_dir);
  c.event_dir = parse_string(kv, "event_dir", c.event_dir);
  c.out_dir = parse_string(kv, "out_dir", c.out_dir);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  lif.validate();
  weights.validate();
  if (timesteps < 1 || classes < 1 || batch_size < 2) {
    throw Error(Errc::InvalidConfig, "timesteps, classes >= 1 and batch_size >= 2 required");
  }
  if (e_s && (*e_s < 1 || *e_s > std::max<std::size_t>(epochs, 1))) {
    throw Error(Errc::InvalidConfig, "e_s must lie in [1, epochs]");
  }
  if (!(lr > 0.0)) throw Error(Errc::InvalidConfig, "lr must be positive");
}

std::string TrainConfig::to_text() const {
  std::string s;
  auto put = [&](const std::string& k, const std::string& v) { s += k + " = " + v + "\n"; };
  put("arch", arch);
  put("timesteps", std::to_string(timesteps));
  put("classes", std::to_string(classes));
  put("batch_size", std::to_string(batch_size));
  put("epochs", std::to_string(epochs));
  put("e_s", std::to_string(kt_cutoff()));
  put("lr", format_double(lr));
  put("lambda_cls_s", format_double(weights.lambda_cls_s));
  put("lambda_kt", format_double(weights.lambda_kt));
  put("tet_lambda", format_double(weights.tet_lambda));
  put("tet_phi", format_double(weights.tet_phi));
  put("tau", format_double(lif.tau));
  put("v_th", format_double(lif.v_th));
  put("surrogate_width", format_double(lif.surrogate_width));
  put("seed", std::to_string(seed));
  put("mode", mode_name(mode));
  put("static_dir", static_dir);
  put("event_dir", event_dir);
  put("out_dir", out_dir);
  return s;
}

std::string metrics_csv_header(std::size_t steps) {
  std::string h = "epoch,train_loss_all,train_loss_cls_s,train_loss_kt,p_final_batch,test_acc";
  for (std::size_t t = 0; t < steps; ++t) h += ",eta_sigmoid_" + std::to_string(t);
  return h + "\n";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  std::string r = std::to_string(m.epoch) + "," + format_double(m.loss_all) + "," + format_double(m.loss_cls_s) + "," +
                  format_double(m.loss_kt) + "," + format_double(m.p_final_batch) + "," + format_double(m.test_acc);
  for (double v : m.eta_sigmoid) r += "," + format_double(v);
  return r + "\n";
}

namespace {

snn::InputGeometry geometry_of(const TrainingData& data) {
  for (const auto* set : {&data.event_train, &data.event_test, &data.static_train}) {
    if (!set->empty()) return {Frames::kChannels, set->front().input.height, set->front().input.width};
  }
  throw Error(Errc::InvalidConfig, "no samples to infer the input geometry from");
}

std::vector<double> eta_sigmoid(const EtaParams& eta) {
  std::vector<double> out;
  for (double v : eta.eta.data()) out.push_back(1.0 / (1.0 + std::exp(-v)));
  return out;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(Errc::IoError, "cannot write " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainingData& data,
                  const std::function<void(const EpochMetrics&)>& on_epoch) {
  cfg.validate();
  Rng master(cfg.seed);
  const std::uint64_t init_seed = master.next();
  TrainResult result{Network(cfg.arch, geometry_of(data), cfg.classes, cfg.timesteps, cfg.lif, init_seed),
                     EtaParams::zeros(cfg.timesteps), {}};
  Rng sample_rng = master.fork(1);
  Rng replace_rng = master.fork(2);

  std::filesystem::path out_dir;
  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    out_dir = cfg.out_dir;
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + out_dir.string());
    write_text(out_dir / "resolved_config.txt", cfg.to_text());
    csv.open(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw Error(Errc::IoError, "cannot write metrics.csv");
    csv << metrics_csv_header(cfg.timesteps) << std::flush;
  }

  if (cfg.epochs > 0) {
    for (const LabeledInput& s : data.event_train) {
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= cfg.classes) {
        throw Error(Errc::LabelOutOfRange, "event label " + std::to_string(s.label));
      }
    }
    const std::span<const LabeledInput> static_side =
        cfg.mode == Mode::Baseline ? std::span<const LabeledInput>(data.event_train) : data.static_train;
    const std::size_t batches = (data.event_train.size() + cfg.batch_size - 1) / cfg.batch_size;
    if (batches == 0) throw Error(Errc::MissingCategory, "event training set is empty");

    OptimizerState opt{AdamConfig{cfg.lr}, 0, {}, {}};
    std::size_t global_step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      EpochMetrics m;
      m.epoch = epoch;
      for (std::size_t b = 0; b < batches; ++b, ++global_step) {
        const SlideState state{b, batches, epoch, cfg.epochs, cfg.kt_cutoff()};
        PairedBatch batch = sample_paired_batch(static_side, data.event_train, cfg.batch_size, sample_rng);
        StepReport r;
        try {
          r = train_step(result.network, result.eta, std::move(batch), state, cfg.weights, opt, cfg.mode, replace_rng);
        } catch (const Error& e) {
          if (e.code() == Errc::NonFinite || e.code() == Errc::NonFiniteActivation || e.code() == Errc::NonFiniteLoss) {
            throw Error(Errc::NonFiniteLoss, "training step " + std::to_string(global_step) + ": " + e.what());
          }
          throw;
        }
        m.loss_all += r.loss_all;
        m.loss_cls_s += r.loss_cls_s;
        m.loss_kt += r.loss_kt;
        m.p_final_batch = r.p_used;
      }
      const double n = static_cast<double>(batches);
      m.loss_all /= n;
      m.loss_cls_s /= n;
      m.loss_kt /= n;
      m.test_acc = evaluate(result.network, data.event_test, evaluation_head(cfg.mode));
      m.eta_sigmoid = eta_sigmoid(result.eta);
      if (csv.is_open()) csv << metrics_csv_row(m) << std::flush;
      if (on_epoch) on_epoch(m);
      result.log.push_back(std::move(m));
    }
  }

  if (!out_dir.empty()) write_file(out_dir / "model.mdl", snn::save_checkpoint(result.network, &result.eta.eta));
  return result;
}

}  // namespace ktsnn::transfer
