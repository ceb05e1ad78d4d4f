#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ktsnn/frames.hpp"
#include "ktsnn/tensor.hpp"

namespace ktsnn::snn {

using num::Graph;
using num::Tensor;

struct LIFConfig {
  double tau = 0.5;
  double v_th = 0.5;
  double surrogate_width = 1.0;
  // Forward uses sigmoid((u - v_th) / a) instead of the hard step. Only
  // meant for gradient checking.
  bool smooth = false;

  void validate() const;
};

// Carried membrane potential of one LIF population. An undefined tensor
// stands for the all-zero reset state.
struct LIFState {
  Tensor carry;
  void reset() { carry = Tensor(); }
};

struct LIFStep {
  Tensor spikes;
  Tensor potential;  // after integration, before firing/reset
};

// u = carry + current; s = H(u - v_th); next carry = tau * u * (1 - s).
LIFStep lif_step(Graph& g, LIFState& state, const Tensor& current, const LIFConfig& cfg);

// Heaviside firing with the surrogate derivative as its backward rule.
Tensor fire(Graph& g, const Tensor& potential, const LIFConfig& cfg);

// dH/du used by fire(): (1/a) on |u - v_th| <= a/2, else 0; the exact
// derivative of the sigmoid in smooth mode.
Tensor surrogate_grad(const Tensor& potential, const LIFConfig& cfg);

struct InputGeometry {
  std::size_t channels = Frames::kChannels;
  std::size_t height = 0;
  std::size_t width = 0;
};

enum class LayerKind { Conv, Pool, Dense };

struct LayerDesc {
  LayerKind kind;
  std::size_t units = 0;   // output channels (conv) or width (dense)
  std::size_t kernel = 0;  // conv only
  std::size_t padding = 0;
  num::Shape out_shape;    // per sample
};

struct ParsedArch {
  std::vector<LayerDesc> trunk;
  std::size_t head_in = 0;
  std::size_t penult_dim = 0;  // features of the last LIF population (or the input)
};

inline constexpr std::size_t kDefaultHiddenWidth = 128;

// Grammar: tokens joined by '-', each <n>C<k> | AP2 | FC | FC<m>. The last
// token is the classification head.
ParsedArch parse_architecture(const std::string& spec, const InputGeometry& geom, std::size_t classes);

enum class Head { S, T, Both };

struct Record {
  bool spikes = false;
  bool potentials = false;
};

struct ForwardTrace {
  std::vector<Tensor> penult;  // T x [B, D]
  std::vector<Tensor> head_s;  // T x [B, K], empty unless requested
  std::vector<Tensor> head_t;
  std::vector<std::vector<double>> spike_counts;  // [LIF layer][t]
  std::vector<std::vector<Tensor>> potentials;    // [LIF layer][t] x [B, neurons]

  std::size_t steps() const { return penult.size(); }
  const std::vector<Tensor>& head_out(Head h) const { return h == Head::T ? head_t : head_s; }
};

struct HeadParams {
  Tensor weight;  // [D, K]
  Tensor bias;    // [K]
};

class Network {
 public:
  Network(std::string arch, InputGeometry geom, std::size_t classes, std::size_t steps, LIFConfig cfg,
          std::uint64_t seed);

  // Begins by resetting every LIF population and head integrator, so the
  // result depends only on weights and input.
  ForwardTrace forward(Graph& g, std::span<const Frames> batch, Head head, Record record = {});

  void reset_state();

  const std::string& arch() const { return arch_; }
  const InputGeometry& geometry() const { return geom_; }
  std::size_t classes() const { return classes_; }
  std::size_t steps() const { return steps_; }
  const LIFConfig& lif() const { return cfg_; }
  void set_lif(const LIFConfig& cfg);
  const ParsedArch& layout() const { return layout_; }

  std::size_t lif_layer_count() const;
  std::vector<std::string> lif_layer_names() const;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();

  const HeadParams& head(Head h) const { return h == Head::T ? head_t_ : head_s_; }

  // Deep copy with independent parameter storage.
  Network clone() const;

  bool state_is_reset() const;

 private:
  struct TrunkLayer {
    LayerDesc desc;
    Tensor weight;
    Tensor bias;  // dense only
    LIFState state;
  };

  Tensor stack_step(std::span<const Frames> batch, std::size_t t) const;

  std::string arch_;
  InputGeometry geom_;
  std::size_t classes_;
  std::size_t steps_;
  LIFConfig cfg_;
  ParsedArch layout_;
  std::vector<TrunkLayer> trunk_;
  HeadParams head_s_;
  HeadParams head_t_;
  Tensor head_state_s_;
  Tensor head_state_t_;
};

// Builds a network from an architecture string with He-uniform weights drawn
// from `seed`. Convolutions get padding k/2; unsized hidden FC layers are
// kDefaultHiddenWidth wide.
Network build_network(const std::string& arch, const InputGeometry& geom, std::size_t classes, std::size_t steps,
                      const LIFConfig& cfg = {}, std::uint64_t seed = 0);

// Batch helper: the [B, 2, H, W] tensor of step t.
Tensor batch_step(std::span<const Frames> batch, std::size_t t);

// Checkpoint (.mdl), little-endian:
//   "MDL1" | u16 len + arch | u16 H | u16 W | u16 classes | u16 T |
//   f64 tau | f64 v_th | f64 surrogate_width | u32 n |
//   n x (u16 len + name | u8 rank | rank x u32 dim | f64 payload)
// A trailing parameter named "eta" carries the per-step coefficients when
// saved alongside the network.
std::vector<std::uint8_t> save_checkpoint(const Network& net, const Tensor* eta = nullptr);

struct Checkpoint {
  Network network;
  Tensor eta;  // undefined when absent
};

Checkpoint load_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace ktsnn::snn
