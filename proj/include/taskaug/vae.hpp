// Copyright 2026 The taskaug Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "taskaug/nn.hpp"
#include "taskaug/params.hpp"

// sigma-VAE over square grey-scale images.
//
//   encoder  conv3x3/s1 -> conv4x4/s2 -> conv5x5/s2 -> FC heads (mu, logvar)
//   decoder  FC -> [C, S/4, S/4] -> convT6x6/s2 -> convT6x6/s2 -> conv5x5 -> sigmoid
//
// Parameters live in a ParamStore under "enc.*", "dec.*" and "log_sigma_rec".

namespace taskaug::vae {

struct VaeConfig {
  int image_size = 64;  // divisible by 4
  int latent_dim = 20;
  int enc_channels[3] = {4, 8, 16};
  int dec_channels[3] = {16, 8, 4};
};

ParamStore init_vae(const VaeConfig& cfg, std::uint64_t seed);

/// True when `params` holds every tensor of the architecture with matching shapes.
void check_params(const ParamStore& params, const VaeConfig& cfg);

struct Encoded {
  ad::Var mu;      // [B, latent]
  ad::Var logvar;  // [B, latent]
};

/// images: [B,1,S,S].
Encoded encode(const nn::VarMap& p, ad::Var images, const VaeConfig& cfg);
/// The mu head alone; needs only "enc.c*" and "enc.mu".
ad::Var encode_mean(const nn::VarMap& p, ad::Var images, const VaeConfig& cfg);
/// nu: [B, latent] -> [B,1,S,S] in (0,1).
ad::Var decode(const nn::VarMap& p, ad::Var nu, const VaeConfig& cfg);

/// Per-sample mean of  N (0.5 MSE / exp(2 lsr) + lsr) + KL(N(mu, e^logvar) || N(0, I)),
/// N the pixel count.
ad::Var vae_loss(ad::Var images, ad::Var mu, ad::Var logvar, ad::Var reconstruction,
                 ad::Var log_sigma_rec);
/// Batch mean of 0.5 sum(e^logvar + mu^2 - 1 - logvar).
ad::Var kl_divergence(ad::Var mu, ad::Var logvar);

/// Tape-free conveniences.
std::pair<std::vector<float>, std::vector<float>> encode_image(const ParamStore& params,
                                                                const Tensor& image,
                                                                const VaeConfig& cfg);
Tensor decode_latent(const ParamStore& params, std::span<const float> nu, const VaeConfig& cfg);

/// Area-averaging resize of a [..,H,W] square image to [1,1,size,size].
Tensor downsample_area(const Tensor& image, int size);

struct TrainVaeOptions {
  int epochs = 200;
  double lr = 1e-3;
  int batch_size = 32;
  std::uint64_t seed = 0;
  /// Called after each epoch with the epoch index, its mean loss and the current parameters.
  std::function<void(int, double, const ParamStore&)> on_epoch;
};

struct TrainVaeResult {
  ParamStore params;
  std::vector<double> loss_trace;  // mean loss per epoch
};

/// Adam with reparameterised sampling; throws NumericError naming the epoch on divergence.
TrainVaeResult train_vae(std::span<const Tensor> images, const VaeConfig& cfg,
                         const TrainVaeOptions& opts);
/// Continues from existing parameters.
TrainVaeResult train_vae(std::span<const Tensor> images, const VaeConfig& cfg,
                         const TrainVaeOptions& opts, ParamStore init);

/// Mean per-pixel squared error of decode(mu(encode(x))) over the images.
double reconstruction_mse(const ParamStore& params, std::span<const Tensor> images,
                          const VaeConfig& cfg);

/// Checksum of the decoder tensors only.
std::uint64_t decoder_checksum(const ParamStore& params);

}  // namespace taskaug::vae
