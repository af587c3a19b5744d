#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "optim.hpp"
#include "rng.hpp"
#include "schedule.hpp"
#include "tensor.hpp"

namespace bci {

// Three-level 1D U-Net geometry. Widths are base_width * level_mult per level;
// each level has its own temporal kernel length.
struct ModelConfig {
  int channels_in = 64;
  int length_in = 1000;
  int base_width = 8;
  std::array<int, 3> level_mult{1, 2, 4};
  std::array<int, 3> kernel_len{7, 3, 3};
  int emb_dim = 32;
  int n_classes = 4;
  double dropout_p = 0.1;
  int groups = 4;

  int width(int level) const { return base_width * level_mult[static_cast<size_t>(level)]; }
  void validate() const;
};

// Parameter layout (zero-filled), in declaration order. Serialization and the
// optimizer both follow this order.
nn::ParamStore param_layout(const ModelConfig& config);

// Layout + random initialization: uniform(-1/sqrt(fan_in), +1/sqrt(fan_in))
// weights, zero biases, unit group-norm gains, random class-projection rows.
nn::ParamStore init_params(const ModelConfig& config, Rng& rng);

int64_t count_params(const ModelConfig& config);

struct Model {
  ModelConfig config;
  NoiseSchedule schedule;
  nn::ParamStore params;
};

// Pre-projection sinusoidal embedding: sine half then cosine half, geometric
// frequencies 10000^(-2i/emb_dim).
std::vector<double> sinusoidal_time_embedding(int t, int emb_dim);

// Learned time projection plus class-projection row; label -1 means no class
// conditioning (the row is replaced by a zero vector).
nn::Tensor condition_embedding(nn::Graph& g, const nn::BoundParams& p,
                               const ModelConfig& config, int t, int label);

struct UnetOut {
  nn::Tensor z;        // bottleneck feature map [w2, L/4]
  nn::Tensor eps_hat;  // noise prediction [C, L]
  nn::Tensor x0_hat;   // reconstruction [C, L]
};

UnetOut unet_forward(nn::Graph& g, const nn::BoundParams& p, const ModelConfig& config,
                     const nn::Tensor& x_t, const nn::Tensor& cond, bool training,
                     Rng* dropout_rng);

// Global average pool of z followed by the classifier head.
nn::Tensor classify(nn::Graph& g, const nn::BoundParams& p, const ModelConfig& config,
                    const nn::Tensor& z);

struct TrainingExample {
  std::vector<double> window;  // channel-major [C x length_in]
  int label = -1;
};

struct LossWeights {
  double ddpm = 1.0;
  double rec = 1.0;
  double ce = 1.0;
};

struct LossBreakdown {
  double total = 0.0, ddpm = 0.0, rec = 0.0, ce = 0.0;
};

// Joint denoising/reconstruction/classification loss over a batch. Per sample
// draws t ~ U{1..T} and unit-normal eps from sample_rng; class conditioning
// uses the true label. Each term is batch-averaged.
nn::Tensor total_loss(nn::Graph& g, const nn::BoundParams& p, const ModelConfig& config,
                      const NoiseSchedule& schedule, std::span<const TrainingExample> batch,
                      const LossWeights& weights, Rng& sample_rng, Rng& dropout_rng,
                      LossBreakdown* breakdown);

// Fixed inference conditioning step: round(tau * (T - 1)), half-up.
int inference_timestep(double tau_infer, int T);

// Deterministic single-pass decode of a preprocessed window: the clean window
// is fed with the fixed-step time embedding and no class conditioning.
std::vector<double> infer_window(const Model& model, std::span<const double> window,
                                 double tau_infer = 0.5);

}  // namespace bci
