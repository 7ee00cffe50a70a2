#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lbn/tensor.hpp"

namespace lbn {

enum class BlockKind { dense, conv };

/// One layer of the gating network: affine map (dense weight or conv
/// kernel bank) followed by a sigmoid. A hidden layer marked
/// `stochastic` has its sigmoid output Bernoulli-sampled before it
/// feeds the next layer, which lets the gating pattern itself be
/// multimodal.
struct GatingLayer {
  Tensor weight;  // dense: [out x in]; conv: [c_out x c_in x kh x kw]
  Tensor bias;    // [out] / [c_out]
  bool stochastic = false;
};

/// Multi-layer sigmoid network mapping a block's linear activations to
/// Bernoulli rates for that block's gates. The final layer is never
/// sampled here; drawing the gates is the block's own step.
struct GatingNetwork {
  std::vector<GatingLayer> layers;
};

/// A linearizing block: a linear map whose units are multiplicatively
/// switched by binary gates. The gating network consumes this block's
/// own linear activations, not the raw block input; that arrangement is
/// what makes deep stacks well-defined.
struct LinearizingBlock {
  BlockKind kind = BlockKind::dense;
  Tensor weight;  // dense: [H x in]; conv: [c_out x c_in x kh x kw], `same` padding
  GatingNetwork gating;
};

/// Rates, sampled binary gates, and by implication the residuals
/// eps = gates - rates for one Bernoulli draw site.
struct GateSample {
  Tensor rates;
  Tensor gates;
};

/// gates - rates, elementwise. Each entry is 1-rate or -rate.
Tensor residuals(const GateSample& s);

/// Everything one forward pass records for a block: the activations the
/// backward pass needs plus the rate/gate pairs for the block gates and
/// for every gating layer (deterministic layers have gates == rates).
struct BlockTrace {
  Tensor input;
  Tensor linear_act;
  std::vector<GateSample> gating;
  GateSample block;
};

/// Per-sample record of a full forward pass; enough to re-run the
/// frozen-noise surrogate and to backpropagate.
struct LbnTrace {
  std::vector<BlockTrace> blocks;
  Tensor y_hat;
};

struct LbnModel;

/// Gradients for an LbnModel, kept in the same layout as the model.
/// Block weight gradients are accumulated as two separate terms, the
/// multiplicative path (through g (*) a) and the gating path (through
/// d rates / d W); the total is their sum.
struct LbnGrads {
  struct Block {
    Tensor weight_mult;
    Tensor weight_gate;
    std::vector<Tensor> gating_weight;
    std::vector<Tensor> gating_bias;
  };
  std::vector<Block> blocks;
  Tensor output_weight;
  Tensor output_bias;
};

/// Stack of linearizing blocks plus the output affine map. Dense models
/// take rank-1 inputs; conv models take [c x h x w] and use a scalar
/// bias per output channel so image size stays unconstrained.
struct LbnModel {
  using Trace = LbnTrace;
  using Grads = LbnGrads;

  BlockKind kind = BlockKind::dense;
  std::vector<LinearizingBlock> blocks;
  Tensor output_weight;  // dense: [M x H_last]; conv: [c_out x c_last x kh x kw]
  Tensor output_bias;    // dense: [M]; conv: [c_out]

  bool has_stochastic_hidden() const;
};

// ---- parameter access ----

std::vector<Tensor*> parameters(LbnModel& m);
std::vector<const Tensor*> parameters(const LbnModel& m);
std::vector<std::string> parameter_names(const LbnModel& m);
std::size_t parameter_count(const LbnModel& m);
LbnGrads make_grads(const LbnModel& m);
std::vector<Tensor> flatten(const LbnGrads& g);

// ---- forward passes ----

/// Linear activation of one block (W x or a `same` convolution).
Tensor linear_forward(const LinearizingBlock& block, const Tensor& input);

/// Output affine map applied to the last block's gated activations.
Tensor output_forward(const LbnModel& m, const Tensor& h);

/// Gating rates with every layer deterministic (stochastic flags
/// ignored); used by the mean/MAP modes and by exact enumeration.
Tensor gating_rates_det(const LinearizingBlock& block, const Tensor& linear_act);

/// Runs the gating network on a block's linear activations, sampling
/// stochastic hidden layers when `rng` is given, and records every
/// layer in `trace`. Passing rng == nullptr with a stochastic hidden
/// layer is an error; without stochastic layers it runs deterministic.
Tensor gating_rates(const LinearizingBlock& block, const Tensor& linear_act,
                    Rng* rng, BlockTrace& trace);

/// Full stochastic forward: per block, draw gates ~ Bernoulli(rates)
/// and gate the linear activations; the trace records everything needed
/// for backward and frozen replay.
Tensor forward_sample(const LbnModel& m, const Tensor& x, Rng& rng, LbnTrace& trace);
Tensor forward_sample(const LbnModel& m, const Tensor& x, Rng& rng);

/// Exact mean prediction; only valid for models with a single gated
/// layer, where the output is linear in the gates. Deeper models are
/// rejected (callers fall back to sampling).
Tensor forward_mean(const LbnModel& m, const Tensor& x);

/// Deterministic MAP-style prediction: per layer, gates are rates
/// thresholded at 0.5 (a tie counts as open). Gating hidden layers run
/// deterministic.
Tensor forward_map(const LbnModel& m, const Tensor& x);

/// Forward with externally pinned binary gates, one tensor per block
/// (diagnostic and enumeration helper).
Tensor forward_pinned(const LbnModel& m, const Tensor& x,
                      const std::vector<Tensor>& gates);

/// Frozen-noise replay: recomputes the forward pass from current
/// parameters but reuses the residuals eps recorded in `trace` for
/// every Bernoulli site, i.e. gate = rate(theta) + eps. This is exactly
/// the function the gradient estimator differentiates.
Tensor forward_frozen(const LbnModel& m, const Tensor& x, const LbnTrace& trace);

/// Backpropagates d loss / d y_hat through the traced sample, treating
/// every recorded residual as constant: gradients flow through the
/// gating function as if there had been no sampling, while the
/// multiplicative path uses the sampled binary gates.
void backward_sample(const LbnModel& m, const Tensor& x, const LbnTrace& trace,
                     const Tensor& grad_y, LbnGrads& grads);

// ---- builders ----

struct DenseLbnConfig {
  std::size_t input_dim = 1;
  std::size_t output_dim = 1;
  std::vector<std::size_t> block_units;          // H per block, >= 1 blocks
  std::vector<std::size_t> gating_hidden_units;  // hidden widths of each gating net
  bool stochastic_gating_hidden = false;
};

struct ConvLbnConfig {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t hidden_channels = 128;
  std::size_t blocks = 4;
  std::size_t kernel = 9;                 // linear units and first gating layer
  std::size_t gating_layers = 3;
  std::size_t gating_hidden_channels = 128;
  std::size_t gating_hidden_kernel = 1;   // deeper gating layers default to 1x1
  bool stochastic_gating_hidden = false;
};

/// Architecture only; parameters are zero until initialized.
LbnModel build_dense_lbn(const DenseLbnConfig& cfg);
LbnModel build_conv_lbn(const ConvLbnConfig& cfg);

/// Closed-form parameter count for a conv configuration.
std::size_t conv_lbn_param_count(const ConvLbnConfig& cfg);

}  // namespace lbn
