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

#include "taskaug/vae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "taskaug/error.hpp"
#include "taskaug/rng.hpp"

namespace taskaug::vae {

namespace {

struct Layout {
  Shape shape;
  int fan_in;
};

std::vector<std::pair<std::string, Layout>> layout(const VaeConfig& cfg) {
  if (cfg.image_size < 8 || cfg.image_size % 4 != 0) {
    throw ShapeError("vae: image size must be a multiple of 4, got " + std::to_string(cfg.image_size));
  }
  const int q = cfg.image_size / 4;
  const int L = cfg.latent_dim;
  const int* e = cfg.enc_channels;
  const int* d = cfg.dec_channels;
  const int flat = e[2] * q * q;
  const int dflat = d[0] * q * q;
  return {
      {"enc.c1.w", {{e[0], 1, 3, 3}, 9}},
      {"enc.c1.b", {{e[0]}, 9}},
      {"enc.c2.w", {{e[1], e[0], 4, 4}, e[0] * 16}},
      {"enc.c2.b", {{e[1]}, e[0] * 16}},
      {"enc.c3.w", {{e[2], e[1], 5, 5}, e[1] * 25}},
      {"enc.c3.b", {{e[2]}, e[1] * 25}},
      {"enc.mu.w", {{flat, L}, flat}},
      {"enc.mu.b", {{L}, flat}},
      {"enc.lv.w", {{flat, L}, flat}},
      {"enc.lv.b", {{L}, flat}},
      {"dec.fc.w", {{L, dflat}, L}},
      {"dec.fc.b", {{dflat}, L}},
      {"dec.c1.w", {{d[0], d[1], 6, 6}, d[0] * 9}},
      {"dec.c1.b", {{d[1]}, d[0] * 9}},
      {"dec.c2.w", {{d[1], d[2], 6, 6}, d[1] * 9}},
      {"dec.c2.b", {{d[2]}, d[1] * 9}},
      {"dec.c3.w", {{1, d[2], 5, 5}, d[2] * 25}},
      {"dec.c3.b", {{1}, d[2] * 25}},
  };
}

ad::Var conv(const nn::VarMap& p, const std::string& name, ad::Var x, int stride, int pad,
             int pad_end = -1) {
  return ad::conv2d(x, p.at(name + ".w"), p.at(name + ".b"), {stride, pad, pad_end});
}

void check_images(ad::Var images, const VaeConfig& cfg) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != cfg.image_size || s[3] != cfg.image_size) {
    throw ShapeError("vae: expected images [B,1," + std::to_string(cfg.image_size) + "," +
                     std::to_string(cfg.image_size) + "], got " + shape_str(s));
  }
}

}  // namespace

ParamStore init_vae(const VaeConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng = stream_rng(seed, 0x7661);
  ParamStore p;
  for (const auto& [name, l] : layout(cfg)) p.add(name, init_uniform(l.shape, l.fan_in, rng));
  p.add("log_sigma_rec", Tensor::scalar(0.0f));
  return p;
}

void check_params(const ParamStore& params, const VaeConfig& cfg) {
  for (const auto& [name, l] : layout(cfg)) {
    if (!params.contains(name)) throw DataError("vae checkpoint lacks tensor " + name);
    if (params.at(name).shape() != l.shape) {
      throw ShapeError("vae tensor " + name + " has shape " + shape_str(params.at(name).shape()) +
                       ", expected " + shape_str(l.shape));
    }
  }
  if (!params.contains("log_sigma_rec")) throw DataError("vae checkpoint lacks tensor log_sigma_rec");
}

namespace {

ad::Var trunk(const nn::VarMap& p, ad::Var images, const VaeConfig& cfg) {
  check_images(images, cfg);
  const int B = images.shape()[0];
  ad::Var h = ad::relu(conv(p, "enc.c1", images, 1, 1));
  h = ad::relu(conv(p, "enc.c2", h, 2, 1));
  h = ad::relu(conv(p, "enc.c3", h, 2, 2));
  const Shape& hs = h.shape();
  return ad::reshape(h, {B, hs[1] * hs[2] * hs[3]});
}

}  // namespace

Encoded encode(const nn::VarMap& p, ad::Var images, const VaeConfig& cfg) {
  ad::Var h = trunk(p, images, cfg);
  return {nn::linear(h, p.at("enc.mu.w"), p.at("enc.mu.b")),
          nn::linear(h, p.at("enc.lv.w"), p.at("enc.lv.b"))};
}

ad::Var encode_mean(const nn::VarMap& p, ad::Var images, const VaeConfig& cfg) {
  return nn::linear(trunk(p, images, cfg), p.at("enc.mu.w"), p.at("enc.mu.b"));
}

ad::Var decode(const nn::VarMap& p, ad::Var nu, const VaeConfig& cfg) {
  const Shape& s = nu.shape();
  if (s.size() != 2 || s[1] != cfg.latent_dim) {
    throw ShapeError("vae decode: expected latent [B," + std::to_string(cfg.latent_dim) + "], got " +
                     shape_str(s));
  }
  const int B = s[0], q = cfg.image_size / 4;
  ad::Var h = ad::relu(nn::linear(nu, p.at("dec.fc.w"), p.at("dec.fc.b")));
  h = ad::reshape(h, {B, cfg.dec_channels[0], q, q});
  h = ad::relu(ad::conv_transpose2d(h, p.at("dec.c1.w"), p.at("dec.c1.b"), 2, 2));
  h = ad::relu(ad::conv_transpose2d(h, p.at("dec.c2.w"), p.at("dec.c2.b"), 2, 2));
  return ad::sigmoid(conv(p, "dec.c3", h, 1, 2));
}

ad::Var kl_divergence(ad::Var mu, ad::Var logvar) {
  const int B = mu.shape()[0];
  ad::Var t = ad::sub(ad::add(ad::exp(logvar), ad::mul(mu, mu)), ad::affine(logvar, 1.0f, 1.0f));
  return ad::affine(ad::sum(t), 0.5f / static_cast<float>(B));
}

ad::Var vae_loss(ad::Var images, ad::Var mu, ad::Var logvar, ad::Var reconstruction,
                 ad::Var log_sigma_rec) {
  if (images.shape() != reconstruction.shape()) {
    throw ShapeError("vae_loss: image " + shape_str(images.shape()) + " vs reconstruction " +
                     shape_str(reconstruction.shape()));
  }
  if (mu.shape() != logvar.shape()) {
    throw ShapeError("vae_loss: mu " + shape_str(mu.shape()) + " vs logvar " + shape_str(logvar.shape()));
  }
  const Shape& s = images.shape();
  const float N = static_cast<float>(shape_numel(s) / static_cast<std::size_t>(s[0]));
  ad::Var mse = ad::mse(reconstruction, images);
  ad::Var inv_var = ad::exp(ad::affine(log_sigma_rec, -2.0f));
  ad::Var rec = ad::add(ad::affine(ad::mul(mse, inv_var), 0.5f * N), ad::affine(log_sigma_rec, N));
  return ad::add(rec, kl_divergence(mu, logvar));
}

std::pair<std::vector<float>, std::vector<float>> encode_image(const ParamStore& params,
                                                                const Tensor& image,
                                                                const VaeConfig& cfg) {
  ad::Graph g;
  const nn::VarMap p = params.bind(g, false);
  const Encoded e = encode(p, g.constant(image.reshaped({1, 1, cfg.image_size, cfg.image_size})), cfg);
  const auto& m = e.mu.value().data();
  const auto& l = e.logvar.value().data();
  return {{m.begin(), m.end()}, {l.begin(), l.end()}};
}

Tensor decode_latent(const ParamStore& params, std::span<const float> nu, const VaeConfig& cfg) {
  if (static_cast<int>(nu.size()) != cfg.latent_dim) {
    throw ShapeError("vae decode: latent length " + std::to_string(nu.size()) + ", expected " +
                     std::to_string(cfg.latent_dim));
  }
  ad::Graph g;
  const nn::VarMap p = params.bind(g, false);
  ad::Var z = g.constant(Tensor({1, cfg.latent_dim}, std::vector<float>(nu.begin(), nu.end())));
  return decode(p, z, cfg).value();
}

Tensor downsample_area(const Tensor& image, int size) {
  if (image.rank() < 2) throw ShapeError("downsample_area: image must be at least 2-D");
  const int H = image.dim(image.rank() - 2), W = image.dim(image.rank() - 1);
  if (H != W || size < 1 || size > H) {
    throw ShapeError("downsample_area: cannot resize " + shape_str(image.shape()) + " to " +
                     std::to_string(size));
  }
  const double s = static_cast<double>(H) / size;
  // Overlap weights of output cell i with input cell j along one axis.
  std::vector<std::vector<std::pair<int, double>>> w(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    const double lo = i * s, hi = (i + 1) * s;
    for (int j = static_cast<int>(std::floor(lo)); j < std::min(H, static_cast<int>(std::ceil(hi))); ++j) {
      const double ov = std::min(hi, j + 1.0) - std::max(lo, static_cast<double>(j));
      if (ov > 0) w[static_cast<std::size_t>(i)].emplace_back(j, ov / s);
    }
  }
  Tensor out({1, 1, size, size});
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      double acc = 0;
      for (const auto& [jr, wr] : w[static_cast<std::size_t>(r)])
        for (const auto& [jc, wc] : w[static_cast<std::size_t>(c)])
          acc += wr * wc * image[static_cast<std::size_t>(jr * W + jc)];
      out[static_cast<std::size_t>(r * size + c)] = static_cast<float>(acc);
    }
  }
  return out;
}

TrainVaeResult train_vae(std::span<const Tensor> images, const VaeConfig& cfg,
                         const TrainVaeOptions& opts) {
  return train_vae(images, cfg, opts, init_vae(cfg, opts.seed));
}

TrainVaeResult train_vae(std::span<const Tensor> images, const VaeConfig& cfg,
                         const TrainVaeOptions& opts, ParamStore init) {
  if (images.empty()) throw DataError("train_vae: empty dataset");
  check_params(init, cfg);
  const int S = cfg.image_size;
  for (const Tensor& im : images) {
    if (im.size() != static_cast<std::size_t>(S * S)) {
      throw ShapeError("train_vae: image " + shape_str(im.shape()) + " does not match size " + std::to_string(S));
    }
  }
  TrainVaeResult res;
  res.params = std::move(init);
  Adam adam(res.params, {opts.lr, 0.9, 0.999, 1e-8});
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng = stream_rng(opts.seed, 0x5348);
  const int bs = std::max(1, opts.batch_size);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0;
    int step = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(bs), ++step) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(bs));
      const int B = static_cast<int>(b1 - b0);
      Tensor batch({B, 1, S, S});
      for (std::size_t i = b0; i < b1; ++i) {
        const Tensor& im = images[order[i]];
        std::copy(im.data().begin(), im.data().end(), batch.ptr() + (i - b0) * static_cast<std::size_t>(S * S));
      }
      std::mt19937_64 eps_rng = stream_rng(opts.seed, static_cast<std::uint64_t>(epoch) + 1,
                                           static_cast<std::uint64_t>(step));
      std::normal_distribution<float> n01(0.0f, 1.0f);
      Tensor eps({B, cfg.latent_dim});
      for (float& v : eps.data()) v = n01(eps_rng);

      double lv = 0;
      try {
        ad::Graph g;
        const nn::VarMap p = res.params.bind(g, true);
        ad::Var x = g.constant(std::move(batch));
        const Encoded e = encode(p, x, cfg);
        ad::Var z = ad::add(e.mu, ad::mul(ad::exp(ad::affine(e.logvar, 0.5f)), g.constant(std::move(eps))));
        ad::Var loss = vae_loss(x, e.mu, e.logvar, decode(p, z, cfg), p.at("log_sigma_rec"));
        lv = loss.value().item();
        if (!std::isfinite(lv)) throw NumericError("non-finite loss");
        g.backward(loss);
        adam.step(res.params, nn::collect_grads(g, p));
      } catch (const NumericError& err) {
        throw NumericError("train_vae: " + std::string(err.what()) + " at epoch " + std::to_string(epoch));
      }
      total += lv * B;
    }
    res.loss_trace.push_back(total / static_cast<double>(images.size()));
    if (opts.on_epoch) opts.on_epoch(epoch, res.loss_trace.back(), res.params);
  }
  return res;
}

double reconstruction_mse(const ParamStore& params, std::span<const Tensor> images,
                          const VaeConfig& cfg) {
  if (images.empty()) return 0.0;
  double acc = 0;
  std::size_t n = 0;
  const int S = cfg.image_size;
  for (const Tensor& im : images) {
    ad::Graph g;
    const nn::VarMap p = params.bind(g, false);
    ad::Var x = g.constant(im.reshaped({1, 1, S, S}));
    const Tensor& rec = decode(p, encode(p, x, cfg).mu, cfg).value();
    for (std::size_t i = 0; i < rec.size(); ++i) {
      const double d = static_cast<double>(rec[i]) - im[i];
      acc += d * d;
    }
    n += rec.size();
  }
  return acc / static_cast<double>(n);
}

std::uint64_t decoder_checksum(const ParamStore& params) {
  ParamStore dec;
  for (const std::string& name : params.names())
    if (name.rfind("dec.", 0) == 0 || name == "log_sigma_rec") dec.add(name, params.at(name));
  return dec.checksum();
}

}  // namespace taskaug::vae
