#include "ktsnn/snn.hpp"

#include <cmath>
#include <cstring>
#include <regex>

#include "ktsnn/error.hpp"
#include "ktsnn/ops.hpp"
#include "ktsnn/rng.hpp"

namespace ktsnn::snn {

using num::Shape;

void LIFConfig::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(Errc::InvalidConfig, "tau must lie in (0, 1)");
  if (!(v_th > 0.0)) throw Error(Errc::InvalidConfig, "v_th must be positive");
  if (!(surrogate_width > 0.0)) throw Error(Errc::InvalidConfig, "surrogate width must be positive");
}

namespace {

double smooth_step(double u, const LIFConfig& cfg) {
  const double z = (u - cfg.v_th) / cfg.surrogate_width;
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double step_derivative(double u, const LIFConfig& cfg) {
  if (cfg.smooth) {
    const double s = smooth_step(u, cfg);
    return s * (1.0 - s) / cfg.surrogate_width;
  }
  return std::abs(u - cfg.v_th) <= cfg.surrogate_width / 2 ? 1.0 / cfg.surrogate_width : 0.0;
}

// tau * u * (1 - s)
Tensor leak_reset(Graph& g, const Tensor& u, const Tensor& s, double tau) {
  num::require_same_shape(u, s, "leak_reset");
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = tau * u[i] * (1.0 - s[i]);
  return g.record(u.shape(), std::move(out), {u, s}, [u, s, tau](std::span<const double> go) {
    std::vector<double> tmp(go.size());
    if (u.requires_grad()) {
      for (std::size_t i = 0; i < go.size(); ++i) tmp[i] = go[i] * tau * (1.0 - s[i]);
      num::accumulate_grad(u, tmp);
    }
    if (s.requires_grad()) {
      for (std::size_t i = 0; i < go.size(); ++i) tmp[i] = -go[i] * tau * u[i];
      num::accumulate_grad(s, tmp);
    }
  });
}

Tensor flatten(Graph& g, const Tensor& x) {
  if (x.rank() == 2) return x;
  return num::reshape(g, x, {x.dim(0), x.size() / x.dim(0)});
}

void he_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
}

// Little-endian byte helpers for the checkpoint format.
struct Writer {
  std::vector<std::uint8_t> out;
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    if (s.size() > 0xFFFF) throw Error(Errc::BadCheckpoint, "string too long");
    u16(static_cast<std::uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
};

struct Reader {
  std::span<const std::uint8_t> in;
  std::size_t at = 0;
  void need(std::size_t n) {
    if (at + n > in.size()) throw DecodeFailure(Errc::BadCheckpoint, at, "checkpoint truncated");
  }
  std::uint8_t u8() {
    need(1);
    return in[at++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(in[at] | (in[at + 1] << 8));
    at += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[at + i]) << (8 * i);
    at += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[at + i]) << (8 * i);
    at += 8;
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const std::size_t n = u16();
    need(n);
    std::string s(in.begin() + static_cast<long>(at), in.begin() + static_cast<long>(at + n));
    at += n;
    return s;
  }
};

}  // namespace

Tensor fire(Graph& g, const Tensor& potential, const LIFConfig& cfg) {
  std::vector<double> out(potential.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = cfg.smooth ? smooth_step(potential[i], cfg) : (potential[i] - cfg.v_th >= 0.0 ? 1.0 : 0.0);
  }
  return g.record(potential.shape(), std::move(out), {potential}, [potential, cfg](std::span<const double> go) {
    std::vector<double> gu(go.size());
    for (std::size_t i = 0; i < go.size(); ++i) gu[i] = go[i] * step_derivative(potential[i], cfg);
    num::accumulate_grad(potential, gu);
  });
}

Tensor surrogate_grad(const Tensor& potential, const LIFConfig& cfg) {
  std::vector<double> out(potential.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = step_derivative(potential[i], cfg);
  return Tensor::from(potential.shape(), std::move(out));
}

LIFStep lif_step(Graph& g, LIFState& state, const Tensor& current, const LIFConfig& cfg) {
  if (state.carry.defined() && state.carry.shape() != current.shape()) {
    throw Error(Errc::ShapeMismatch, "lif_step: state " + num::to_string(state.carry.shape()) + " vs current " +
                                         num::to_string(current.shape()));
  }
  Tensor u = state.carry.defined() ? num::add(g, state.carry, current) : current;
  Tensor s = fire(g, u, cfg);
  state.carry = leak_reset(g, u, s, cfg.tau);
  return {s, u};
}

ParsedArch parse_architecture(const std::string& spec, const InputGeometry& geom, std::size_t classes) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (true) {
    const std::size_t dash = spec.find('-', start);
    tokens.push_back(spec.substr(start, dash == std::string::npos ? std::string::npos : dash - start));
    if (dash == std::string::npos) break;
    start = dash + 1;
  }
  auto fail = [&](std::size_t pos, const std::string& why) {
    throw Error(Errc::SpecParseError, "token " + std::to_string(pos) + " ('" + tokens[pos] + "') of '" + spec + "': " + why);
  };

  static const std::regex conv_re(R"(([1-9][0-9]*)C([1-9][0-9]*))");
  static const std::regex fc_re(R"(FC([1-9][0-9]*)?)");

  ParsedArch out;
  Shape shape{geom.channels, geom.height, geom.width};
  out.penult_dim = num::numel(shape);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const std::string& tok = tokens[i];
    const bool last = i + 1 == tokens.size();
    std::smatch m;
    if (std::regex_match(tok, m, fc_re)) {
      const std::size_t width = m[1].matched ? std::stoul(m[1].str()) : 0;
      if (last) {
        if (width != 0 && width != classes) fail(i, "head width does not match the class count");
        out.head_in = num::numel(shape);
        return out;
      }
      LayerDesc d{LayerKind::Dense, width ? width : kDefaultHiddenWidth, 0, 0, {}};
      d.out_shape = {d.units};
      shape = d.out_shape;
      out.penult_dim = d.units;
      out.trunk.push_back(d);
    } else if (last) {
      fail(i, "the last token must be the FC head");
    } else if (std::regex_match(tok, m, conv_re)) {
      if (shape.size() != 3) fail(i, "convolution after a dense layer");
      LayerDesc d{LayerKind::Conv, std::stoul(m[1].str()), std::stoul(m[2].str()), 0, {}};
      d.padding = d.kernel / 2;
      const std::size_t h = shape[1] + 2 * d.padding + 1;
      const std::size_t w = shape[2] + 2 * d.padding + 1;
      if (h <= d.kernel || w <= d.kernel) throw Error(Errc::GeometryUnderflow, "token " + std::to_string(i) + ": kernel exceeds input");
      d.out_shape = {d.units, h - d.kernel, w - d.kernel};
      shape = d.out_shape;
      out.penult_dim = num::numel(shape);
      out.trunk.push_back(d);
    } else if (tok == "AP2") {
      if (shape.size() != 3) fail(i, "pooling after a dense layer");
      if (shape[1] < 2 || shape[2] < 2 || shape[1] % 2 || shape[2] % 2) {
        throw Error(Errc::GeometryUnderflow, "token " + std::to_string(i) + ": cannot pool " + std::to_string(shape[1]) +
                                                 "x" + std::to_string(shape[2]));
      }
      LayerDesc d{LayerKind::Pool, shape[0], 2, 0, {shape[0], shape[1] / 2, shape[2] / 2}};
      shape = d.out_shape;
      out.trunk.push_back(d);
    } else {
      fail(i, "unknown layer");
    }
  }
  fail(tokens.size() - 1, "missing head");
  return out;
}

Network::Network(std::string arch, InputGeometry geom, std::size_t classes, std::size_t steps, LIFConfig cfg,
                 std::uint64_t seed)
    : arch_(std::move(arch)), geom_(geom), classes_(classes), steps_(steps), cfg_(cfg) {
  cfg_.validate();
  if (classes_ < 1 || steps_ < 1 || geom_.channels != Frames::kChannels) {
    throw Error(Errc::InvalidConfig, "network needs classes >= 1, steps >= 1 and 2 input channels");
  }
  layout_ = parse_architecture(arch_, geom_, classes_);

  Rng rng(seed);
  Shape in_shape{geom_.channels, geom_.height, geom_.width};
  for (const LayerDesc& d : layout_.trunk) {
    TrunkLayer layer{d, {}, {}, {}};
    if (d.kind == LayerKind::Conv) {
      layer.weight = Tensor::zeros({d.units, in_shape[0], d.kernel, d.kernel}, true);
      he_uniform(layer.weight, in_shape[0] * d.kernel * d.kernel, rng);
    } else if (d.kind == LayerKind::Dense) {
      const std::size_t fan_in = num::numel(in_shape);
      layer.weight = Tensor::zeros({fan_in, d.units}, true);
      he_uniform(layer.weight, fan_in, rng);
      layer.bias = Tensor::zeros({d.units}, true);
    }
    in_shape = d.out_shape;
    trunk_.push_back(std::move(layer));
  }
  for (HeadParams* h : {&head_s_, &head_t_}) {
    h->weight = Tensor::zeros({layout_.head_in, classes_}, true);
    he_uniform(h->weight, layout_.head_in, rng);
    h->bias = Tensor::zeros({classes_}, true);
  }
}

Network build_network(const std::string& arch, const InputGeometry& geom, std::size_t classes, std::size_t steps,
                      const LIFConfig& cfg, std::uint64_t seed) {
  return Network(arch, geom, classes, steps, cfg, seed);
}

void Network::set_lif(const LIFConfig& cfg) {
  cfg.validate();
  cfg_ = cfg;
}

void Network::reset_state() {
  for (TrunkLayer& l : trunk_) l.state.reset();
  head_state_s_ = Tensor();
  head_state_t_ = Tensor();
}

bool Network::state_is_reset() const {
  for (const TrunkLayer& l : trunk_) {
    if (l.state.carry.defined()) return false;
  }
  return !head_state_s_.defined() && !head_state_t_.defined();
}

std::size_t Network::lif_layer_count() const {
  std::size_t n = 0;
  for (const TrunkLayer& l : trunk_) n += l.desc.kind != LayerKind::Pool;
  return n;
}

std::vector<std::string> Network::lif_layer_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    const LayerKind k = trunk_[i].desc.kind;
    if (k == LayerKind::Pool) continue;
    names.push_back((k == LayerKind::Conv ? "conv" : "fc") + std::to_string(i));
  }
  return names;
}

std::vector<std::pair<std::string, Tensor>> Network::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    if (trunk_[i].weight.defined()) out.emplace_back("trunk." + std::to_string(i) + ".weight", trunk_[i].weight);
    if (trunk_[i].bias.defined()) out.emplace_back("trunk." + std::to_string(i) + ".bias", trunk_[i].bias);
  }
  out.emplace_back("head_s.weight", head_s_.weight);
  out.emplace_back("head_s.bias", head_s_.bias);
  out.emplace_back("head_t.weight", head_t_.weight);
  out.emplace_back("head_t.bias", head_t_.bias);
  return out;
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : parameters()) n += t.size();
  return n;
}

void Network::zero_grad() {
  for (Tensor& t : parameters()) t.zero_grad();
}

Network Network::clone() const {
  Network copy = *this;
  for (TrunkLayer& l : copy.trunk_) {
    if (l.weight.defined()) l.weight = Tensor::from(l.weight.shape(), std::vector<double>(l.weight.data().begin(), l.weight.data().end()), true);
    if (l.bias.defined()) l.bias = Tensor::from(l.bias.shape(), std::vector<double>(l.bias.data().begin(), l.bias.data().end()), true);
  }
  for (HeadParams* h : {&copy.head_s_, &copy.head_t_}) {
    h->weight = Tensor::from(h->weight.shape(), std::vector<double>(h->weight.data().begin(), h->weight.data().end()), true);
    h->bias = Tensor::from(h->bias.shape(), std::vector<double>(h->bias.data().begin(), h->bias.data().end()), true);
  }
  copy.reset_state();
  return copy;
}

Tensor batch_step(std::span<const Frames> batch, std::size_t t) {
  const Frames& first = batch.front();
  const std::size_t per = first.step_size();
  std::vector<double> data(batch.size() * per);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const double* src = batch[b].values.data() + t * per;
    std::copy(src, src + per, data.begin() + static_cast<long>(b * per));
  }
  return Tensor::from({batch.size(), Frames::kChannels, first.height, first.width}, std::move(data));
}

Tensor Network::stack_step(std::span<const Frames> batch, std::size_t t) const { return batch_step(batch, t); }

ForwardTrace Network::forward(Graph& g, std::span<const Frames> batch, Head head, Record record) {
  if (batch.empty()) throw Error(Errc::ShapeMismatch, "forward: empty batch");
  for (const Frames& f : batch) {
    if (f.steps != steps_ || f.height != geom_.height || f.width != geom_.width ||
        f.values.size() != steps_ * f.step_size()) {
      throw Error(Errc::ShapeMismatch, "forward: input is [" + std::to_string(f.steps) + ", 2, " +
                                           std::to_string(f.height) + ", " + std::to_string(f.width) +
                                           "], network expects [" + std::to_string(steps_) + ", 2, " +
                                           std::to_string(geom_.height) + ", " + std::to_string(geom_.width) + "]");
    }
  }
  reset_state();

  const std::size_t lif_layers = lif_layer_count();
  ForwardTrace trace;
  if (record.spikes) trace.spike_counts.assign(lif_layers, std::vector<double>(steps_, 0.0));
  if (record.potentials) trace.potentials.assign(lif_layers, {});

  const bool want_s = head != Head::T;
  const bool want_t = head != Head::S;
  auto integrate_head = [&](const HeadParams& hp, Tensor& state, const Tensor& features) {
    Tensor current = num::fully_connected(g, features, hp.weight, hp.bias);
    state = state.defined() ? num::add(g, num::scale(g, state, cfg_.tau), current) : current;
    return state;
  };

  try {
    for (std::size_t t = 0; t < steps_; ++t) {
      Tensor h = stack_step(batch, t);
      Tensor penult = flatten(g, h);
      std::size_t lif_index = 0;
      for (TrunkLayer& layer : trunk_) {
        if (layer.desc.kind == LayerKind::Pool) {
          h = num::avg_pool2d(g, h, 2);
          continue;
        }
        Tensor current = layer.desc.kind == LayerKind::Conv
                             ? num::conv2d(g, h, layer.weight, layer.desc.padding)
                             : num::fully_connected(g, flatten(g, h), layer.weight, layer.bias);
        LIFStep step = lif_step(g, layer.state, current, cfg_);
        penult = flatten(g, step.potential);
        if (record.spikes) {
          double n = 0.0;
          for (double v : step.spikes.data()) n += v;
          trace.spike_counts[lif_index][t] = n;
        }
        if (record.potentials) trace.potentials[lif_index].push_back(penult);
        h = step.spikes;
        ++lif_index;
      }
      trace.penult.push_back(penult);
      Tensor features = flatten(g, h);
      if (want_s) trace.head_s.push_back(integrate_head(head_s_, head_state_s_, features));
      if (want_t) trace.head_t.push_back(integrate_head(head_t_, head_state_t_, features));
    }
  } catch (const Error& e) {
    if (e.code() != Errc::NonFinite) throw;
    throw Error(Errc::NonFiniteActivation, e.what());
  }
  return trace;
}

std::vector<std::uint8_t> save_checkpoint(const Network& net, const Tensor* eta) {
  Writer w;
  w.out.insert(w.out.end(), {'M', 'D', 'L', '1'});
  w.str(net.arch());
  w.u16(static_cast<std::uint16_t>(net.geometry().height));
  w.u16(static_cast<std::uint16_t>(net.geometry().width));
  w.u16(static_cast<std::uint16_t>(net.classes()));
  w.u16(static_cast<std::uint16_t>(net.steps()));
  w.f64(net.lif().tau);
  w.f64(net.lif().v_th);
  w.f64(net.lif().surrogate_width);
  auto params = net.named_parameters();
  if (eta != nullptr && eta->defined()) params.emplace_back("eta", *eta);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f64(v);
  }
  return std::move(w.out);
}

Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MDL1", 4) != 0) {
    throw DecodeFailure(Errc::BadMagic, 0, "missing MDL1 magic");
  }
  Reader r{bytes, 4};
  const std::string arch = r.str();
  InputGeometry geom;
  geom.height = r.u16();
  geom.width = r.u16();
  const std::size_t classes = r.u16();
  const std::size_t steps = r.u16();
  LIFConfig cfg;
  cfg.tau = r.f64();
  cfg.v_th = r.f64();
  cfg.surrogate_width = r.f64();

  Checkpoint ck{Network(arch, geom, classes, steps, cfg, 0), Tensor()};
  auto params = ck.network.named_parameters();
  const std::uint32_t n = r.u32();
  std::size_t matched = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::size_t entry_at = r.at;
    const std::string name = r.str();
    Shape shape(r.u8());
    for (std::size_t& d : shape) d = r.u32();
    std::vector<double> values(num::numel(shape));
    for (double& v : values) v = r.f64();
    if (name == "eta") {
      ck.eta = Tensor::from(shape, std::move(values), true);
      continue;
    }
    auto it = std::find_if(params.begin(), params.end(), [&](const auto& p) { return p.first == name; });
    if (it == params.end() || it->second.shape() != shape) {
      throw DecodeFailure(Errc::BadCheckpoint, entry_at, "parameter '" + name + "' does not fit " + arch);
    }
    std::copy(values.begin(), values.end(), it->second.mutable_data().begin());
    ++matched;
  }
  if (matched != params.size()) throw DecodeFailure(Errc::BadCheckpoint, r.at, "missing parameters");
  if (r.at != bytes.size()) throw DecodeFailure(Errc::BadCheckpoint, r.at, "trailing bytes");
  return ck;
}

}  // namespace ktsnn::snn
