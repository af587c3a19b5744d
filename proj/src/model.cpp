#include "model.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace bci {

using nn::BoundParams;
using nn::Graph;
using nn::ParamStore;
using nn::Tensor;

void ModelConfig::validate() const {
  if (channels_in < 1 || length_in < 4) fail_usage("ModelConfig: bad input geometry");
  if (length_in % 4 != 0) fail_usage("ModelConfig: length_in must be divisible by 4");
  if (base_width < 1) fail_usage("ModelConfig: base_width must be positive");
  for (int lvl = 0; lvl < 3; ++lvl) {
    if (width(lvl) % groups != 0) {
      fail_usage("ModelConfig: level width " + std::to_string(width(lvl)) +
                 " not divisible by groups");
    }
    if (kernel_len[static_cast<size_t>(lvl)] % 2 != 1) {
      fail_usage("ModelConfig: kernel lengths must be odd");
    }
  }
  if (emb_dim < 2 || emb_dim % 2 != 0) fail_usage("ModelConfig: emb_dim must be even");
  if (n_classes < 2) fail_usage("ModelConfig: need at least two classes");
  if (dropout_p < 0.0 || dropout_p >= 1.0) fail_usage("ModelConfig: dropout_p must be in [0,1)");
}

namespace {

void declare_params(ParamStore& ps, const ModelConfig& c) {
  auto conv = [&](const std::string& name, int cout, int cin, int k) {
    ps.add(name + ".w", {cout, cin, k});
    ps.add(name + ".b", {cout});
  };
  auto gn = [&](const std::string& name, int ch) {
    ps.add(name + ".gamma", {ch});
    ps.add(name + ".beta", {ch});
  };
  auto lin = [&](const std::string& name, int m, int n) {
    ps.add(name + ".w", {m, n});
    ps.add(name + ".b", {m});
  };
  const int w0 = c.width(0), w1 = c.width(1), w2 = c.width(2);
  const int k0 = c.kernel_len[0], k1 = c.kernel_len[1], k2 = c.kernel_len[2];

  conv("stem", w0, c.channels_in, k0);
  for (int lvl = 0; lvl < 3; ++lvl) {
    const int w = c.width(lvl), k = c.kernel_len[static_cast<size_t>(lvl)];
    const std::string enc = "enc" + std::to_string(lvl + 1);
    conv(enc + ".conv0", w, w, k);
    gn(enc + ".gn0", w);
    conv(enc + ".conv1", w, w, k);
    gn(enc + ".gn1", w);
    lin("cond" + std::to_string(lvl + 1), w, c.emb_dim);
    if (lvl < 2) {
      conv("down" + std::to_string(lvl + 1), c.width(lvl + 1), w,
           c.kernel_len[static_cast<size_t>(lvl) + 1]);
    }
  }
  conv("bott.conv", w2, w2, k2);
  gn("bott.gn", w2);
  conv("up2", w1, w2, k1);
  conv("dec2.conv0", w1, 2 * w1, k1);
  gn("dec2.gn0", w1);
  conv("dec2.conv1", w1, w1, k1);
  gn("dec2.gn1", w1);
  conv("up1", w0, w1, k0);
  conv("dec1.conv0", w0, 2 * w0, k0);
  gn("dec1.gn0", w0);
  conv("dec1.conv1", w0, w0, k0);
  gn("dec1.gn1", w0);
  conv("eps_head", c.channels_in, w0, k0);
  // Lightweight reconstruction decoder off the bottleneck, fixed 3-tap kernels.
  conv("rec1", w1, w2, 3);
  gn("rec1.gn", w1);
  conv("rec0", w0, w1, 3);
  gn("rec0.gn", w0);
  conv("rec_out", c.channels_in, w0, 3);
  lin("cls", c.n_classes, w2);
  lin("temb", c.emb_dim, c.emb_dim);
  ps.add("cproj", {c.n_classes, c.emb_dim});
}

}  // namespace

ParamStore param_layout(const ModelConfig& config) {
  config.validate();
  ParamStore ps;
  declare_params(ps, config);
  return ps;
}

ParamStore init_params(const ModelConfig& config, Rng& rng) {
  ParamStore ps = param_layout(config);
  for (nn::Param& p : ps.params()) {
    const bool is_weight = p.name.ends_with(".w") || p.name == "cproj";
    const bool is_gamma = p.name.ends_with(".gamma");
    if (is_weight) {
      // fan_in: product of all dims after the first (conv: Cin*K, linear: N).
      int64_t fan_in = 1;
      for (size_t d = 1; d < p.shape.size(); ++d) fan_in *= p.shape[d];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      for (double& v : p.value) v = rng.uniform(-bound, bound);
    } else if (is_gamma) {
      std::fill(p.value.begin(), p.value.end(), 1.0);
    }
    // biases and betas stay zero
  }
  return ps;
}

int64_t count_params(const ModelConfig& config) { return param_layout(config).total_size(); }

std::vector<double> sinusoidal_time_embedding(int t, int emb_dim) {
  if (emb_dim < 2 || emb_dim % 2 != 0) fail_usage("sinusoidal_time_embedding: emb_dim must be even");
  const int half = emb_dim / 2;
  std::vector<double> e(static_cast<size_t>(emb_dim));
  for (int i = 0; i < half; ++i) {
    const double freq = std::pow(10000.0, -2.0 * i / emb_dim);
    e[static_cast<size_t>(i)] = std::sin(t * freq);
    e[static_cast<size_t>(half + i)] = std::cos(t * freq);
  }
  return e;
}

Tensor condition_embedding(Graph& g, const BoundParams& p, const ModelConfig& config, int t,
                           int label) {
  if (label >= config.n_classes) fail_usage("condition_embedding: label out of range");
  Tensor sin_emb = g.constant({config.emb_dim}, sinusoidal_time_embedding(t, config.emb_dim));
  Tensor time_part = nn::linear(sin_emb, p["temb.w"], p["temb.b"]);
  Tensor class_part = label >= 0
                          ? nn::matrix_row(p["cproj"], label)
                          : g.constant({config.emb_dim},
                                       std::vector<double>(static_cast<size_t>(config.emb_dim)));
  return nn::add(time_part, class_part);
}

UnetOut unet_forward(Graph& g, const BoundParams& p, const ModelConfig& config,
                     const Tensor& x_t, const Tensor& cond, bool training, Rng* dropout_rng) {
  if (x_t.shape() != nn::Shape{config.channels_in, config.length_in}) {
    fail_usage("unet_forward: input shape does not match config");
  }
  if (cond.shape() != nn::Shape{config.emb_dim}) {
    fail_usage("unet_forward: conditioning width does not match emb_dim");
  }
  if (training && config.dropout_p > 0.0 && dropout_rng == nullptr) {
    fail_usage("unet_forward: training with dropout requires an rng");
  }
  const int k0 = config.kernel_len[0], k1 = config.kernel_len[1], k2 = config.kernel_len[2];

  auto block = [&](Tensor h, const std::string& conv, const std::string& gnorm, int k) {
    h = nn::conv1d(h, p[conv + ".w"], p[conv + ".b"], 1, (k - 1) / 2);
    h = nn::group_norm(h, config.groups, p[gnorm + ".gamma"], p[gnorm + ".beta"]);
    h = nn::silu(h);
    if (training && config.dropout_p > 0.0) {
      h = nn::dropout(h, config.dropout_p, *dropout_rng, true);
    }
    return h;
  };
  Tensor cond_act = nn::silu(cond);
  auto level_cond = [&](int lvl) {
    const std::string name = "cond" + std::to_string(lvl + 1);
    return nn::linear(cond_act, p[name + ".w"], p[name + ".b"]);
  };

  Tensor h = nn::conv1d(x_t, p["stem.w"], p["stem.b"], 1, (k0 - 1) / 2);
  h = block(h, "enc1.conv0", "enc1.gn0", k0);
  h = block(h, "enc1.conv1", "enc1.gn1", k0);
  h = nn::add_channel_bias(h, level_cond(0));
  Tensor skip1 = h;

  h = nn::conv1d(h, p["down1.w"], p["down1.b"], 2, (k1 - 1) / 2);
  h = block(h, "enc2.conv0", "enc2.gn0", k1);
  h = block(h, "enc2.conv1", "enc2.gn1", k1);
  h = nn::add_channel_bias(h, level_cond(1));
  Tensor skip2 = h;

  h = nn::conv1d(h, p["down2.w"], p["down2.b"], 2, (k2 - 1) / 2);
  h = block(h, "enc3.conv0", "enc3.gn0", k2);
  h = block(h, "enc3.conv1", "enc3.gn1", k2);
  Tensor z = nn::add_channel_bias(h, level_cond(2));

  h = block(z, "bott.conv", "bott.gn", k2);
  h = nn::upsample_nearest2(h);
  h = nn::conv1d(h, p["up2.w"], p["up2.b"], 1, (k1 - 1) / 2);
  h = nn::concat_channels(h, skip2);
  h = block(h, "dec2.conv0", "dec2.gn0", k1);
  h = block(h, "dec2.conv1", "dec2.gn1", k1);
  h = nn::upsample_nearest2(h);
  h = nn::conv1d(h, p["up1.w"], p["up1.b"], 1, (k0 - 1) / 2);
  h = nn::concat_channels(h, skip1);
  h = block(h, "dec1.conv0", "dec1.gn0", k0);
  h = block(h, "dec1.conv1", "dec1.gn1", k0);
  Tensor eps_hat = nn::conv1d(h, p["eps_head.w"], p["eps_head.b"], 1, (k0 - 1) / 2);

  Tensor r = nn::upsample_nearest2(z);
  r = block(r, "rec1", "rec1.gn", 3);
  r = nn::upsample_nearest2(r);
  r = block(r, "rec0", "rec0.gn", 3);
  Tensor x0_hat = nn::conv1d(r, p["rec_out.w"], p["rec_out.b"], 1, 1);

  return {z, eps_hat, x0_hat};
}

Tensor classify(Graph& g, const BoundParams& p, const ModelConfig& config, const Tensor& z) {
  (void)g;
  (void)config;
  return nn::linear(nn::global_avg_pool(z), p["cls.w"], p["cls.b"]);
}

Tensor total_loss(Graph& g, const BoundParams& p, const ModelConfig& config,
                  const NoiseSchedule& schedule, std::span<const TrainingExample> batch,
                  const LossWeights& weights, Rng& sample_rng, Rng& dropout_rng,
                  LossBreakdown* breakdown) {
  if (batch.empty()) fail_usage("total_loss: empty batch");
  const size_t want = static_cast<size_t>(config.channels_in) * config.length_in;
  std::vector<Tensor> ddpm_terms, rec_terms, ce_terms;
  ddpm_terms.reserve(batch.size());
  rec_terms.reserve(batch.size());
  ce_terms.reserve(batch.size());
  for (const TrainingExample& ex : batch) {
    if (ex.window.size() != want) fail_usage("total_loss: window length does not match config");
    if (ex.label < 0 || ex.label >= config.n_classes) fail_usage("total_loss: label out of range");
    const int t = 1 + static_cast<int>(sample_rng.below(static_cast<uint64_t>(schedule.T)));
    std::vector<double> eps(want);
    for (double& v : eps) v = sample_rng.normal();
    std::vector<double> xt = forward_noising(ex.window, t, eps, schedule);

    Tensor x0_node = g.constant({config.channels_in, config.length_in}, ex.window);
    Tensor xt_node = g.constant({config.channels_in, config.length_in}, std::move(xt));
    Tensor eps_node = g.constant({config.channels_in, config.length_in}, std::move(eps));
    Tensor cond = condition_embedding(g, p, config, t, ex.label);
    UnetOut out = unet_forward(g, p, config, xt_node, cond, true, &dropout_rng);
    ddpm_terms.push_back(nn::mse(out.eps_hat, eps_node));
    rec_terms.push_back(nn::mse(out.x0_hat, x0_node));
    ce_terms.push_back(nn::softmax_cross_entropy(classify(g, p, config, out.z), ex.label));
  }
  const std::vector<double> mean_w(batch.size(), 1.0 / static_cast<double>(batch.size()));
  Tensor ddpm = nn::weighted_sum(ddpm_terms, mean_w);
  Tensor rec = nn::weighted_sum(rec_terms, mean_w);
  Tensor ce = nn::weighted_sum(ce_terms, mean_w);
  std::vector<Tensor> terms = {ddpm, rec, ce};
  std::vector<double> w = {weights.ddpm, weights.rec, weights.ce};
  Tensor total = nn::weighted_sum(terms, w);
  if (breakdown) {
    breakdown->total = total.value()[0];
    breakdown->ddpm = ddpm.value()[0];
    breakdown->rec = rec.value()[0];
    breakdown->ce = ce.value()[0];
  }
  return total;
}

int inference_timestep(double tau_infer, int T) {
  if (tau_infer < 0.0 || tau_infer > 1.0) fail_usage("inference_timestep: tau must be in [0,1]");
  return static_cast<int>(std::lround(tau_infer * (T - 1)));
}

std::vector<double> infer_window(const Model& model, std::span<const double> window,
                                 double tau_infer) {
  const ModelConfig& c = model.config;
  const size_t want = static_cast<size_t>(c.channels_in) * c.length_in;
  if (window.size() != want) fail_usage("infer_window: wrong window length");
  Graph g;
  BoundParams p = nn::bind_params(g, model.params, false);
  const int t = inference_timestep(tau_infer, model.schedule.T);
  Tensor cond = condition_embedding(g, p, c, t, -1);
  Tensor x = g.constant({c.channels_in, c.length_in},
                        std::vector<double>(window.begin(), window.end()));
  UnetOut out = unet_forward(g, p, c, x, cond, false, nullptr);
  Tensor logits = classify(g, p, c, out.z);
  return nn::softmax(logits.value());
}

}  // namespace bci
