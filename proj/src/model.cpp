#include "lbn/model.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace lbn {

namespace {

Tensor affine(BlockKind kind, const Tensor& weight, const Tensor& bias,
              const Tensor& input) {
  if (kind == BlockKind::dense) {
    return add(matvec(weight, input), bias);
  }
  Tensor out = conv2d(input, weight, Padding::same);
  const std::size_t plane = out.extent(1) * out.extent(2);
  for (std::size_t c = 0; c < out.extent(0); ++c) {
    double* p = out.data() + c * plane;
    const double b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
  return out;
}

Tensor sigmoid_backward(const Tensor& upstream, const Tensor& s) {
  Tensor out(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i)
    out[i] = upstream[i] * s[i] * (1.0 - s[i]);
  return out;
}

Tensor channel_sums(const Tensor& t) {
  Tensor out({t.extent(0)});
  const std::size_t plane = t.extent(1) * t.extent(2);
  for (std::size_t c = 0; c < t.extent(0); ++c) {
    double acc = 0.0;
    const double* p = t.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
    out[c] = acc;
  }
  return out;
}

/// Backward of `affine` w.r.t. input; weight/bias grads go to the sinks.
Tensor affine_backward(BlockKind kind, const Tensor& weight, const Tensor& input,
                       const Tensor& dz, Tensor& weight_grad, Tensor& bias_grad) {
  if (kind == BlockKind::dense) {
    add_inplace(weight_grad, outer(dz, input));
    add_inplace(bias_grad, dz);
    return matvec_t(weight, dz);
  }
  add_inplace(weight_grad,
              conv2d_grad_kernels(input, dz, weight.extent(2), weight.extent(3),
                                  Padding::same));
  add_inplace(bias_grad, channel_sums(dz));
  return conv2d_grad_input(dz, weight, input.extent(1), input.extent(2),
                           Padding::same);
}

Tensor threshold_open(const Tensor& rates) {
  Tensor g(rates.shape());
  for (std::size_t i = 0; i < rates.size(); ++i)
    g[i] = rates[i] >= 0.5 ? 1.0 : 0.0;  // tie resolves to open
  return g;
}

}  // namespace

Tensor output_forward(const LbnModel& m, const Tensor& h) {
  if (m.kind == BlockKind::dense)
    return add(matvec(m.output_weight, h), m.output_bias);
  return affine(BlockKind::conv, m.output_weight, m.output_bias, h);
}

Tensor gating_rates_det(const LinearizingBlock& block, const Tensor& linear_act) {
  Tensor t = linear_act;
  for (const GatingLayer& layer : block.gating.layers)
    t = sigmoid(affine(block.kind, layer.weight, layer.bias, t));
  return t;
}

Tensor residuals(const GateSample& s) { return sub(s.gates, s.rates); }

bool LbnModel::has_stochastic_hidden() const {
  for (const auto& b : blocks)
    for (const auto& l : b.gating.layers)
      if (l.stochastic) return true;
  return false;
}

std::vector<Tensor*> parameters(LbnModel& m) {
  std::vector<Tensor*> out;
  for (auto& b : m.blocks) {
    out.push_back(&b.weight);
    for (auto& l : b.gating.layers) {
      out.push_back(&l.weight);
      out.push_back(&l.bias);
    }
  }
  out.push_back(&m.output_weight);
  out.push_back(&m.output_bias);
  return out;
}

std::vector<const Tensor*> parameters(const LbnModel& m) {
  std::vector<const Tensor*> out;
  for (const auto& t : parameters(const_cast<LbnModel&>(m))) out.push_back(t);
  return out;
}

std::vector<std::string> parameter_names(const LbnModel& m) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    const std::string prefix = "block" + std::to_string(i);
    out.push_back(prefix + ".weight");
    for (std::size_t j = 0; j < m.blocks[i].gating.layers.size(); ++j) {
      out.push_back(prefix + ".gating" + std::to_string(j) + ".weight");
      out.push_back(prefix + ".gating" + std::to_string(j) + ".bias");
    }
  }
  out.push_back("output.weight");
  out.push_back("output.bias");
  return out;
}

std::size_t parameter_count(const LbnModel& m) {
  std::size_t n = 0;
  for (const Tensor* t : parameters(m)) n += t->size();
  return n;
}

LbnGrads make_grads(const LbnModel& m) {
  LbnGrads g;
  for (const auto& b : m.blocks) {
    LbnGrads::Block bg;
    bg.weight_mult = Tensor(b.weight.shape());
    bg.weight_gate = Tensor(b.weight.shape());
    for (const auto& l : b.gating.layers) {
      bg.gating_weight.emplace_back(l.weight.shape());
      bg.gating_bias.emplace_back(l.bias.shape());
    }
    g.blocks.push_back(std::move(bg));
  }
  g.output_weight = Tensor(m.output_weight.shape());
  g.output_bias = Tensor(m.output_bias.shape());
  return g;
}

std::vector<Tensor> flatten(const LbnGrads& g) {
  std::vector<Tensor> out;
  for (const auto& b : g.blocks) {
    out.push_back(add(b.weight_mult, b.weight_gate));
    for (std::size_t j = 0; j < b.gating_weight.size(); ++j) {
      out.push_back(b.gating_weight[j]);
      out.push_back(b.gating_bias[j]);
    }
  }
  out.push_back(g.output_weight);
  out.push_back(g.output_bias);
  return out;
}

Tensor linear_forward(const LinearizingBlock& block, const Tensor& input) {
  if (block.kind == BlockKind::dense) return matvec(block.weight, input);
  return conv2d(input, block.weight, Padding::same);
}

Tensor gating_rates(const LinearizingBlock& block, const Tensor& linear_act,
                    Rng* rng, BlockTrace& trace) {
  trace.gating.clear();
  Tensor t = linear_act;
  const std::size_t n = block.gating.layers.size();
  if (n == 0) throw std::invalid_argument("gating_rates: gating network has no layers");
  for (std::size_t i = 0; i < n; ++i) {
    const GatingLayer& layer = block.gating.layers[i];
    GateSample gs;
    gs.rates = sigmoid(affine(block.kind, layer.weight, layer.bias, t));
    if (layer.stochastic && i + 1 < n) {
      if (rng == nullptr)
        throw std::invalid_argument(
            "gating_rates: stochastic hidden layer requires an rng");
      gs.gates = sample_bernoulli(*rng, gs.rates);
    } else {
      gs.gates = gs.rates;
    }
    t = gs.gates;
    trace.gating.push_back(std::move(gs));
  }
  return t;
}

Tensor forward_sample(const LbnModel& m, const Tensor& x, Rng& rng, LbnTrace& trace) {
  trace.blocks.clear();
  Tensor t = x;
  for (const LinearizingBlock& block : m.blocks) {
    BlockTrace bt;
    bt.input = t;
    bt.linear_act = linear_forward(block, t);
    bt.block.rates = gating_rates(block, bt.linear_act, &rng, bt);
    bt.block.gates = sample_bernoulli(rng, bt.block.rates);
    t = mul(bt.block.gates, bt.linear_act);
    trace.blocks.push_back(std::move(bt));
  }
  trace.y_hat = output_forward(m, t);
  return trace.y_hat;
}

Tensor forward_sample(const LbnModel& m, const Tensor& x, Rng& rng) {
  LbnTrace trace;
  return forward_sample(m, x, rng, trace);
}

Tensor forward_mean(const LbnModel& m, const Tensor& x) {
  if (m.blocks.size() != 1)
    throw std::invalid_argument(
        "forward_mean: exact mean requires a single gated layer");
  const LinearizingBlock& block = m.blocks.front();
  Tensor a = linear_forward(block, x);
  Tensor rates = gating_rates_det(block, a);
  return output_forward(m, mul(rates, a));
}

Tensor forward_map(const LbnModel& m, const Tensor& x) {
  Tensor t = x;
  for (const LinearizingBlock& block : m.blocks) {
    Tensor a = linear_forward(block, t);
    t = mul(threshold_open(gating_rates_det(block, a)), a);
  }
  return output_forward(m, t);
}

Tensor forward_pinned(const LbnModel& m, const Tensor& x,
                      const std::vector<Tensor>& gates) {
  if (gates.size() != m.blocks.size())
    throw std::invalid_argument("forward_pinned: need one gate tensor per block");
  Tensor t = x;
  for (std::size_t l = 0; l < m.blocks.size(); ++l)
    t = mul(gates[l], linear_forward(m.blocks[l], t));
  return output_forward(m, t);
}

Tensor forward_frozen(const LbnModel& m, const Tensor& x, const LbnTrace& trace) {
  if (trace.blocks.size() != m.blocks.size())
    throw std::invalid_argument("forward_frozen: trace does not match model");
  Tensor t = x;
  for (std::size_t l = 0; l < m.blocks.size(); ++l) {
    const LinearizingBlock& block = m.blocks[l];
    const BlockTrace& bt = trace.blocks[l];
    if (bt.gating.size() != block.gating.layers.size())
      throw std::invalid_argument("forward_frozen: gating trace does not match model");
    Tensor a = linear_forward(block, t);
    Tensor g = a;
    for (std::size_t i = 0; i < block.gating.layers.size(); ++i) {
      const GatingLayer& layer = block.gating.layers[i];
      g = sigmoid(affine(block.kind, layer.weight, layer.bias, g));
      if (layer.stochastic && i + 1 < block.gating.layers.size())
        g = add(g, residuals(bt.gating[i]));
    }
    Tensor gate = add(g, residuals(bt.block));
    t = mul(gate, a);
  }
  return output_forward(m, t);
}

void backward_sample(const LbnModel& m, const Tensor& x, const LbnTrace& trace,
                     const Tensor& grad_y, LbnGrads& grads) {
  if (trace.blocks.size() != m.blocks.size() || grads.blocks.size() != m.blocks.size())
    throw std::invalid_argument("backward_sample: trace/grads do not match model");
  const BlockTrace& last = trace.blocks.back();
  Tensor out_last = mul(last.block.gates, last.linear_act);

  Tensor delta = affine_backward(m.kind, m.output_weight, out_last, grad_y,
                                 grads.output_weight, grads.output_bias);

  for (std::size_t l = m.blocks.size(); l-- > 0;) {
    const LinearizingBlock& block = m.blocks[l];
    const BlockTrace& bt = trace.blocks[l];
    LbnGrads::Block& bg = grads.blocks[l];

    // Raiko rule: d gate / d rate = 1, the residual is constant, so the
    // gradient w.r.t. the final rates is just delta (*) a.
    Tensor grad_rates = mul(delta, bt.linear_act);
    Tensor gd = std::move(grad_rates);
    for (std::size_t j = block.gating.layers.size(); j-- > 0;) {
      const Tensor& layer_in = j == 0 ? bt.linear_act : bt.gating[j - 1].gates;
      Tensor dz = sigmoid_backward(gd, bt.gating[j].rates);
      gd = affine_backward(block.kind, block.gating.layers[j].weight, layer_in, dz,
                           bg.gating_weight[j], bg.gating_bias[j]);
    }
    Tensor delta_a_gate = std::move(gd);
    Tensor delta_a_mult = mul(delta, bt.block.gates);

    if (block.kind == BlockKind::dense) {
      add_inplace(bg.weight_mult, outer(delta_a_mult, bt.input));
      add_inplace(bg.weight_gate, outer(delta_a_gate, bt.input));
      if (l > 0) delta = matvec_t(block.weight, add(delta_a_mult, delta_a_gate));
    } else {
      const std::size_t kh = block.weight.extent(2), kw = block.weight.extent(3);
      add_inplace(bg.weight_mult,
                  conv2d_grad_kernels(bt.input, delta_a_mult, kh, kw, Padding::same));
      add_inplace(bg.weight_gate,
                  conv2d_grad_kernels(bt.input, delta_a_gate, kh, kw, Padding::same));
      if (l > 0)
        delta = conv2d_grad_input(add(delta_a_mult, delta_a_gate), block.weight,
                                  bt.input.extent(1), bt.input.extent(2),
                                  Padding::same);
    }
  }
}

LbnModel build_dense_lbn(const DenseLbnConfig& cfg) {
  if (cfg.block_units.empty())
    throw std::invalid_argument("build_dense_lbn: need at least one block");
  if (cfg.input_dim == 0 || cfg.output_dim == 0)
    throw std::invalid_argument("build_dense_lbn: degenerate input/output dim");
  LbnModel m;
  m.kind = BlockKind::dense;
  std::size_t in = cfg.input_dim;
  for (std::size_t h : cfg.block_units) {
    if (h == 0) throw std::invalid_argument("build_dense_lbn: empty block");
    LinearizingBlock b;
    b.kind = BlockKind::dense;
    b.weight = Tensor({h, in});
    std::size_t gin = h;
    for (std::size_t d : cfg.gating_hidden_units) {
      GatingLayer gl;
      gl.weight = Tensor({d, gin});
      gl.bias = Tensor({d});
      gl.stochastic = cfg.stochastic_gating_hidden;
      b.gating.layers.push_back(std::move(gl));
      gin = d;
    }
    GatingLayer out_layer;
    out_layer.weight = Tensor({h, gin});
    out_layer.bias = Tensor({h});
    b.gating.layers.push_back(std::move(out_layer));
    m.blocks.push_back(std::move(b));
    in = h;
  }
  m.output_weight = Tensor({cfg.output_dim, in});
  m.output_bias = Tensor({cfg.output_dim});
  return m;
}

LbnModel build_conv_lbn(const ConvLbnConfig& cfg) {
  if (cfg.blocks == 0 || cfg.hidden_channels == 0 || cfg.gating_layers == 0)
    throw std::invalid_argument("build_conv_lbn: degenerate configuration");
  if (cfg.kernel % 2 == 0 || cfg.gating_hidden_kernel % 2 == 0)
    throw std::invalid_argument("build_conv_lbn: kernels must be odd for same padding");
  LbnModel m;
  m.kind = BlockKind::conv;
  std::size_t in_c = cfg.in_channels;
  const std::size_t hc = cfg.hidden_channels;
  const std::size_t ghc = cfg.gating_hidden_channels;
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    LinearizingBlock b;
    b.kind = BlockKind::conv;
    b.weight = Tensor({hc, in_c, cfg.kernel, cfg.kernel});
    if (cfg.gating_layers == 1) {
      GatingLayer gl;
      gl.weight = Tensor({hc, hc, cfg.kernel, cfg.kernel});
      gl.bias = Tensor({hc});
      b.gating.layers.push_back(std::move(gl));
    } else {
      GatingLayer first;
      first.weight = Tensor({ghc, hc, cfg.kernel, cfg.kernel});
      first.bias = Tensor({ghc});
      first.stochastic = cfg.stochastic_gating_hidden;
      b.gating.layers.push_back(std::move(first));
      for (std::size_t j = 2; j < cfg.gating_layers; ++j) {
        GatingLayer mid;
        mid.weight = Tensor({ghc, ghc, cfg.gating_hidden_kernel, cfg.gating_hidden_kernel});
        mid.bias = Tensor({ghc});
        mid.stochastic = cfg.stochastic_gating_hidden;
        b.gating.layers.push_back(std::move(mid));
      }
      GatingLayer lastl;
      lastl.weight = Tensor({hc, ghc, cfg.gating_hidden_kernel, cfg.gating_hidden_kernel});
      lastl.bias = Tensor({hc});
      b.gating.layers.push_back(std::move(lastl));
    }
    m.blocks.push_back(std::move(b));
    in_c = hc;
  }
  m.output_weight = Tensor({cfg.out_channels, hc, cfg.kernel, cfg.kernel});
  m.output_bias = Tensor({cfg.out_channels});
  return m;
}

std::size_t conv_lbn_param_count(const ConvLbnConfig& cfg) {
  const std::size_t k2 = cfg.kernel * cfg.kernel;
  const std::size_t gk2 = cfg.gating_hidden_kernel * cfg.gating_hidden_kernel;
  const std::size_t hc = cfg.hidden_channels, ghc = cfg.gating_hidden_channels;
  std::size_t n = 0;
  std::size_t in_c = cfg.in_channels;
  for (std::size_t l = 0; l < cfg.blocks; ++l) {
    n += hc * in_c * k2;
    if (cfg.gating_layers == 1) {
      n += hc * hc * k2 + hc;
    } else {
      n += ghc * hc * k2 + ghc;
      n += (cfg.gating_layers - 2) * (ghc * ghc * gk2 + ghc);
      n += hc * ghc * gk2 + hc;
    }
    in_c = hc;
  }
  n += cfg.out_channels * hc * k2 + cfg.out_channels;
  return n;
}

}  // namespace lbn
