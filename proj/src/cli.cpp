#include "ktsnn/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "ktsnn/analysis.hpp"
#include "ktsnn/datasets.hpp"
#include "ktsnn/error.hpp"
#include "ktsnn/events.hpp"
#include "ktsnn/transfer.hpp"

namespace ktsnn::cli {
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<long> seed;
  std::string out;
};

KeyValues resolve_keys(const Common& c) {
  KeyValues kv;
  if (!c.config.empty()) {
    const auto bytes = datasets::read_bytes(c.config);
    kv = parse_key_values(std::string(bytes.begin(), bytes.end()));
  }
  for (const std::string& o : c.overrides) {
    auto [k, v] = parse_override(o);
    kv[k] = v;
  }
  if (c.seed) kv["seed"] = std::to_string(*c.seed);
  return kv;
}

void write_text(const fs::path& path, const std::string& text) {
  datasets::write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string());
}

snn::Network load_model(const std::string& path) {
  return snn::load_checkpoint(datasets::read_bytes(path)).network;
}

std::vector<Frames> probe_inputs(const std::string& dir, const std::string& domain, std::size_t steps) {
  const datasets::LoadedDataset d = datasets::load_dataset(dir, steps);
  std::vector<Frames> out;
  if (domain == "static") {
    for (const auto& s : transfer::encode_static_set(d.static_images, d.static_labels, steps)) out.push_back(s.input);
  } else {
    for (const auto* set : {&d.event_test, &d.event_train}) {
      for (const auto& s : *set) out.push_back(s.input);
    }
  }
  if (out.empty()) throw Error(Errc::EmptyTestSet, "no " + domain + " samples under " + dir);
  return out;
}

int gen_data(const Common& c, std::ostream& out) {
  KeyValues kv = resolve_keys(c);
  std::string root = parse_string(kv, "out_dir", "");
  if (!c.out.empty()) root = c.out;
  kv.erase("out_dir");
  if (root.empty()) throw Error(Errc::InvalidConfig, "gen-data needs --out or out_dir");
  const datasets::SynthConfig cfg = datasets::SynthConfig::from_key_values(kv);
  const datasets::DatasetManifest m = datasets::generate_synthetic_pair_set(cfg, root);
  write_text(fs::path(root) / "resolved_config.txt", cfg.to_text() + "out_dir = " + root + "\n");
  out << "wrote " << m.entries.size() << " samples to " << root << "\n";
  return kOk;
}

int train(const Common& c, std::ostream& out) {
  KeyValues kv = resolve_keys(c);
  if (!c.out.empty()) kv["out_dir"] = c.out;
  const transfer::TrainConfig cfg = transfer::TrainConfig::from_key_values(kv);
  if (cfg.event_dir.empty()) throw Error(Errc::InvalidConfig, "event_dir is required");
  if (cfg.mode != transfer::Mode::Baseline && cfg.static_dir.empty()) {
    throw Error(Errc::InvalidConfig, "static_dir is required for mode " + transfer::mode_name(cfg.mode));
  }
  if (!cfg.out_dir.empty()) make_dir(cfg.out_dir);

  const datasets::LoadedDataset events = datasets::load_dataset(cfg.event_dir, cfg.timesteps);
  transfer::TrainingData data;
  if (cfg.static_dir.empty()) {
    data.event_train = events.event_train;
    data.event_test = events.event_test;
  } else if (fs::path(cfg.static_dir) == fs::path(cfg.event_dir)) {
    data = datasets::training_data(events, events, cfg.timesteps);
  } else {
    data = datasets::training_data(datasets::load_dataset(cfg.static_dir, cfg.timesteps), events, cfg.timesteps);
  }
  const transfer::TrainResult r = transfer::train(cfg, data, [&](const transfer::EpochMetrics& m) {
    out << "epoch " << m.epoch << " loss " << format_double(m.loss_all) << " test_acc " << format_double(m.test_acc)
        << "\n";
  });
  if (!r.log.empty()) out << "final test_acc " << format_double(r.log.back().test_acc) << "\n";
  return kOk;
}

int eval(const Common& c, const std::string& model, std::string data_dir, const std::string& head_name,
         std::ostream& out) {
  KeyValues kv = resolve_keys(c);
  const transfer::TrainConfig cfg = transfer::TrainConfig::from_key_values(kv);
  if (data_dir.empty()) data_dir = cfg.event_dir;
  if (data_dir.empty()) throw Error(Errc::InvalidConfig, "eval needs --data or event_dir");
  snn::Head head = transfer::evaluation_head(cfg.mode);
  if (head_name == "s") head = snn::Head::S;
  if (head_name == "t") head = snn::Head::T;

  snn::Network net = load_model(model);
  const datasets::LoadedDataset d = datasets::load_dataset(data_dir, net.steps());
  const double acc = transfer::evaluate(net, d.event_test, head);
  const std::string line = "test_acc = " + format_double(acc) + "\nsamples = " + std::to_string(d.event_test.size()) + "\n";
  out << line;
  if (!c.out.empty()) {
    make_dir(c.out);
    write_text(fs::path(c.out) / "eval.txt", line);
    write_text(fs::path(c.out) / "resolved_config.txt", "model = " + model + "\ndata = " + data_dir + "\nhead = " +
                                                           (head == snn::Head::S ? "s" : "t") + "\n");
  }
  return kOk;
}

struct AnalysisArgs {
  std::string model_a;
  std::string model_b;
  std::string data;
  std::string domain = "event";
  std::size_t probes = analysis::kDefaultProbeCount;
  std::string run_id;
  std::string layer;
  std::size_t bins = 50;
};

int analyze_cka(const Common& c, const AnalysisArgs& a, std::ostream& out) {
  snn::Network ma = load_model(a.model_a);
  snn::Network mb = load_model(a.model_b);
  if (ma.steps() != mb.steps()) throw Error(Errc::ShapeMismatch, "models use different time steps");
  const std::vector<Frames> probes = probe_inputs(a.data, a.domain, ma.steps());
  const analysis::HeatmapResult r = analysis::cka_heatmap(ma, mb, probes, {}, {}, a.probes);
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  make_dir(dir);
  analysis::export_csv(r, analysis::heatmap_path(dir, a.run_id));
  write_text(dir / (a.run_id + "_heatmap_config.txt"),
             "model_a = " + a.model_a + "\nmodel_b = " + a.model_b + "\ndata = " + a.data + "\ndomain = " + a.domain +
                 "\nsamples = " + std::to_string(r.samples) + "\nfeatures = membrane potential averaged over time\n");
  out << analysis::heatmap_csv(r);
  out << "mean_diagonal " << format_double(r.mean_diagonal()) << "\n";
  return kOk;
}

int mp_hist(const Common& c, const AnalysisArgs& a, std::ostream& out) {
  snn::Network net = load_model(a.model_a);
  std::vector<Frames> probes = probe_inputs(a.data, a.domain, net.steps());
  if (probes.size() > a.probes) probes.resize(a.probes);
  const std::string layer = a.layer.empty() ? net.lif_layer_names().at(0) : a.layer;
  const analysis::Histogram h = analysis::membrane_histogram(net, probes, layer, a.bins);
  const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  make_dir(dir);
  analysis::export_csv(h, analysis::histogram_path(dir, a.run_id));
  write_text(dir / (a.run_id + "_mp_hist_config.txt"), "model = " + a.model_a + "\ndata = " + a.data + "\ndomain = " +
                                                            a.domain + "\nlayer = " + layer + "\nbins = " +
                                                            std::to_string(a.bins) + "\nsamples = " +
                                                            std::to_string(probes.size()) + "\n");
  out << "layer " << layer << " values " << h.total() << "\n";
  return kOk;
}

int inspect_events(const std::string& path, std::ostream& out) {
  const auto bytes = datasets::read_bytes(path);
  events::EventStream s;
  try {
    s = events::decode_event_file(bytes);
  } catch (const DecodeFailure& f) {
    throw Error(Errc::DecodeError, path + ": " + f.what());
  }
  const events::StreamSummary sum = events::summarize(s);
  out << "count " << sum.count << "\n"
      << "geometry " << sum.width << "x" << sum.height << "\n"
      << "duration_us " << sum.duration_us << "\n"
      << "on " << sum.on_events << "\n"
      << "off " << sum.off_events << "\n";
  return kOk;
}

}  // namespace

std::string synopsis() {
  return "usage: ktsnn <verb> [options]\n"
         "verbs:\n"
         "  gen-data       --out DIR [--config F] [--set k=v]... [--seed N]\n"
         "  train          --config F [--set k=v]... [--seed N] [--out DIR]\n"
         "  eval           --model M.mdl [--data DIR] [--head s|t] [--config F] [--set k=v]... [--out DIR]\n"
         "  analyze-cka    --model-a A.mdl --model-b B.mdl --data DIR [--domain event|static] [--probes N]\n"
         "                 [--run-id ID] [--out DIR]\n"
         "  mp-hist        --model M.mdl --data DIR [--layer NAME] [--bins N] [--domain event|static]\n"
         "                 [--probes N] [--run-id ID] [--out DIR]\n"
         "  inspect-events FILE.evt\n";
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Static-to-event knowledge transfer for spiking networks", "ktsnn"};
  app.require_subcommand(1);
  app.set_help_flag();

  Common common;
  const auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) {
      sub->add_option("--config", common.config, "key = value config file");
      sub->add_option("--set", common.overrides, "key=value override (repeatable)");
      sub->add_option("--seed", common.seed, "seed for every random choice");
    }
    sub->add_option("--out", common.out, "output directory");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate the synthetic paired corpus");
  add_common(gen, true);
  CLI::App* tr = app.add_subcommand("train", "train a network");
  add_common(tr, true);

  std::string model;
  std::string data;
  std::string head = "auto";
  CLI::App* ev = app.add_subcommand("eval", "test accuracy of a checkpoint");
  add_common(ev, true);
  ev->add_option("--model", model)->required();
  ev->add_option("--data", data);
  ev->add_option("--head", head)->check(CLI::IsMember({"auto", "s", "t"}));

  AnalysisArgs an;
  CLI::App* cka = app.add_subcommand("analyze-cka", "cross-layer CKA heatmap of two checkpoints");
  add_common(cka, false);
  cka->add_option("--model-a", an.model_a)->required();
  cka->add_option("--model-b", an.model_b)->required();
  cka->add_option("--data", an.data)->required();
  cka->add_option("--domain", an.domain)->check(CLI::IsMember({"event", "static"}));
  cka->add_option("--probes", an.probes)->check(CLI::PositiveNumber);
  cka->add_option("--run-id", an.run_id);

  CLI::App* mp = app.add_subcommand("mp-hist", "membrane potential histogram of one layer");
  add_common(mp, false);
  mp->add_option("--model", an.model_a)->required();
  mp->add_option("--data", an.data)->required();
  mp->add_option("--layer", an.layer);
  mp->add_option("--bins", an.bins)->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20));
  mp->add_option("--domain", an.domain)->check(CLI::IsMember({"event", "static"}));
  mp->add_option("--probes", an.probes)->check(CLI::PositiveNumber);
  mp->add_option("--run-id", an.run_id);

  std::string evt_path;
  CLI::App* insp = app.add_subcommand("inspect-events", "summarize an .evt file");
  insp->add_option("file", evt_path)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << synopsis();
    return kUsage;
  }

  try {
    if (gen->parsed()) return gen_data(common, out);
    if (tr->parsed()) return train(common, out);
    if (ev->parsed()) return eval(common, model, data, head, out);
    if (cka->parsed()) {
      if (an.run_id.empty()) an.run_id = "cka";
      return analyze_cka(common, an, out);
    }
    if (mp->parsed()) {
      if (an.run_id.empty()) an.run_id = "mp";
      return mp_hist(common, an, out);
    }
    return inspect_events(evt_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace ktsnn::cli
