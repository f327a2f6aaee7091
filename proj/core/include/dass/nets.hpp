#pragma once

#include <cmath>
#include <vector>

#include "dass/errors.hpp"
#include "dass/nn.hpp"

namespace dass {

struct UNetConfig {
  int in_ch = 3;
  int base = 24;        // channel width of the first stage
  int temb_dim = 32;    // sinusoidal embedding size
  int temb_hidden = 64;
};

struct SegNetConfig {
  int in_ch = 3;
  int base = 16;
  int num_classes = 4;
};

// Noise estimator: 2-down / 2-up U-Net with skip connections and a
// sinusoidal timestep embedding injected per stage. The output conv is
// zero-initialized so an untrained net predicts zero noise.
template <class T>
struct UNet {
  UNetConfig cfg;
  nn::Linear<T> mlp1, mlp2, proj0, proj1, proj2, proj3, proj4;
  nn::Conv2d<T> enc0a, enc0b, down1, enc1b, down2, enc2b;
  nn::Conv2d<T> up1, dec1, up2, dec2, outconv;
  nn::SiLU<T> act_m, act0, act0b, act1, act1b, act2, act2b, act3, act3b, act4, act4b;

  // cached for backward
  Tensor<T> semb_cache;
  int skip0_c = 0, skip1_c = 0;

  explicit UNet(const UNetConfig& c = {}) : cfg(c) {
    const int B = c.base;
    mlp1 = nn::Linear<T>(c.temb_dim, c.temb_hidden);
    mlp2 = nn::Linear<T>(c.temb_hidden, c.temb_hidden);
    proj0 = nn::Linear<T>(c.temb_hidden, B);
    proj1 = nn::Linear<T>(c.temb_hidden, 2 * B);
    proj2 = nn::Linear<T>(c.temb_hidden, 4 * B);
    proj3 = nn::Linear<T>(c.temb_hidden, 2 * B);
    proj4 = nn::Linear<T>(c.temb_hidden, B);
    enc0a = nn::Conv2d<T>(c.in_ch, B);
    enc0b = nn::Conv2d<T>(B, B);
    down1 = nn::Conv2d<T>(B, 2 * B, 3, 2, 1);
    enc1b = nn::Conv2d<T>(2 * B, 2 * B);
    down2 = nn::Conv2d<T>(2 * B, 4 * B, 3, 2, 1);
    enc2b = nn::Conv2d<T>(4 * B, 4 * B);
    up1 = nn::Conv2d<T>(4 * B, 2 * B);
    dec1 = nn::Conv2d<T>(4 * B, 2 * B);
    up2 = nn::Conv2d<T>(2 * B, B);
    dec2 = nn::Conv2d<T>(2 * B, B);
    outconv = nn::Conv2d<T>(B, c.in_ch);
    skip0_c = B;
    skip1_c = 2 * B;
  }

  void init(RngStream rng) {
    mlp1.init_he(rng);
    mlp2.init_he(rng);
    proj0.init_he(rng);
    proj1.init_he(rng);
    proj2.init_he(rng);
    proj3.init_he(rng);
    proj4.init_he(rng);
    enc0a.init_he(rng);
    enc0b.init_he(rng);
    down1.init_he(rng);
    enc1b.init_he(rng);
    down2.init_he(rng);
    enc2b.init_he(rng);
    up1.init_he(rng);
    dec1.init_he(rng);
    up2.init_he(rng);
    dec2.init_he(rng);
    outconv.init_zero();
  }

  Tensor<T> sinusoidal_embed(const std::vector<int>& tvec) const {
    const int E = cfg.temb_dim;
    const int half = E / 2;
    Tensor<T> out(static_cast<int>(tvec.size()), E, 1, 1);
    for (size_t ni = 0; ni < tvec.size(); ++ni)
      for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / (half - 1));
        double a = tvec[ni] * freq;
        out.at(static_cast<int>(ni), 2 * i, 0, 0) = static_cast<T>(std::sin(a));
        out.at(static_cast<int>(ni), 2 * i + 1, 0, 0) = static_cast<T>(std::cos(a));
      }
    return out;
  }

  Tensor<T> forward(const Tensor<T>& x, const std::vector<int>& tvec) {
    if (static_cast<int>(tvec.size()) != x.n)
      throw ContractError("unet: t vector length != batch size");
    semb_cache = sinusoidal_embed(tvec);
    Tensor<T> e = mlp2.forward(act_m.forward(mlp1.forward(semb_cache)));

    Tensor<T> h = act0.forward(nn::add_channel_bias(enc0a.forward(x), proj0.forward(e)));
    Tensor<T> s0 = act0b.forward(enc0b.forward(h));
    h = act1.forward(nn::add_channel_bias(down1.forward(s0), proj1.forward(e)));
    Tensor<T> s1 = act1b.forward(enc1b.forward(h));
    h = act2.forward(nn::add_channel_bias(down2.forward(s1), proj2.forward(e)));
    h = act2b.forward(enc2b.forward(h));
    h = act3.forward(nn::add_channel_bias(up1.forward(nn::upsample2x(h)), proj3.forward(e)));
    h = act3b.forward(dec1.forward(nn::concat_channels(h, s1)));
    h = act4.forward(nn::add_channel_bias(up2.forward(nn::upsample2x(h)), proj4.forward(e)));
    h = act4b.forward(dec2.forward(nn::concat_channels(h, s0)));
    return outconv.forward(h);
  }

  // Returns dL/dx; accumulates parameter gradients.
  Tensor<T> backward(const Tensor<T>& gout) {
    Tensor<T> ge(gout.n, cfg.temb_hidden, 1, 1);  // accumulated grad wrt time embedding

    Tensor<T> g = outconv.backward(gout);
    g = dec2.backward(act4b.backward(g));
    Tensor<T> gu, gskip0;
    nn::split_channels(g, cfg.base, gu, gskip0);
    g = act4.backward(gu);
    {
      Tensor<T> gp = proj4.backward(nn::channel_bias_backward(g));
      for (size_t i = 0; i < ge.v.size(); ++i) ge.v[i] += gp.v[i];
    }
    g = nn::upsample2x_backward(up2.backward(g));

    g = dec1.backward(act3b.backward(g));
    Tensor<T> gskip1;
    nn::split_channels(g, 2 * cfg.base, gu, gskip1);
    g = act3.backward(gu);
    {
      Tensor<T> gp = proj3.backward(nn::channel_bias_backward(g));
      for (size_t i = 0; i < ge.v.size(); ++i) ge.v[i] += gp.v[i];
    }
    g = nn::upsample2x_backward(up1.backward(g));

    g = enc2b.backward(act2b.backward(g));
    g = act2.backward(g);
    {
      Tensor<T> gp = proj2.backward(nn::channel_bias_backward(g));
      for (size_t i = 0; i < ge.v.size(); ++i) ge.v[i] += gp.v[i];
    }
    g = down2.backward(g);  // grad wrt s1
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += gskip1.v[i];

    g = enc1b.backward(act1b.backward(g));
    g = act1.backward(g);
    {
      Tensor<T> gp = proj1.backward(nn::channel_bias_backward(g));
      for (size_t i = 0; i < ge.v.size(); ++i) ge.v[i] += gp.v[i];
    }
    g = down1.backward(g);  // grad wrt s0
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += gskip0.v[i];

    g = enc0b.backward(act0b.backward(g));
    g = act0.backward(g);
    {
      Tensor<T> gp = proj0.backward(nn::channel_bias_backward(g));
      for (size_t i = 0; i < ge.v.size(); ++i) ge.v[i] += gp.v[i];
    }
    g = enc0a.backward(g);  // grad wrt x

    mlp1.backward(act_m.backward(mlp2.backward(ge)));
    return g;
  }

  void params(std::vector<nn::ParamRef<T>>& out) {
    mlp1.collect("mlp1", out);
    mlp2.collect("mlp2", out);
    proj0.collect("proj0", out);
    proj1.collect("proj1", out);
    proj2.collect("proj2", out);
    proj3.collect("proj3", out);
    proj4.collect("proj4", out);
    enc0a.collect("enc0a", out);
    enc0b.collect("enc0b", out);
    down1.collect("down1", out);
    enc1b.collect("enc1b", out);
    down2.collect("down2", out);
    enc2b.collect("enc2b", out);
    up1.collect("up1", out);
    dec1.collect("dec1", out);
    up2.collect("up2", out);
    dec2.collect("dec2", out);
    outconv.collect("outconv", out);
  }
};

// Segmenter: fully-convolutional encoder-decoder, no timestep input.
// Robustness to noisy / masked inputs comes from training augmentation.
template <class T>
struct SegNet {
  SegNetConfig cfg;
  nn::Conv2d<T> e0a, e0b, d1, e1b, d2, e2b, u1, c1, u2, c2, outconv;
  nn::ReLU<T> a0, a0b, a1, a1b, a2, a2b, a3, a3b, a4, a4b;

  explicit SegNet(const SegNetConfig& c = {}) : cfg(c) {
    const int S = c.base;
    e0a = nn::Conv2d<T>(c.in_ch, S);
    e0b = nn::Conv2d<T>(S, S);
    d1 = nn::Conv2d<T>(S, 2 * S, 3, 2, 1);
    e1b = nn::Conv2d<T>(2 * S, 2 * S);
    d2 = nn::Conv2d<T>(2 * S, 4 * S, 3, 2, 1);
    e2b = nn::Conv2d<T>(4 * S, 4 * S);
    u1 = nn::Conv2d<T>(4 * S, 2 * S);
    c1 = nn::Conv2d<T>(4 * S, 2 * S);
    u2 = nn::Conv2d<T>(2 * S, S);
    c2 = nn::Conv2d<T>(2 * S, S);
    outconv = nn::Conv2d<T>(S, c.num_classes);
  }

  void init(RngStream rng) {
    e0a.init_he(rng);
    e0b.init_he(rng);
    d1.init_he(rng);
    e1b.init_he(rng);
    d2.init_he(rng);
    e2b.init_he(rng);
    u1.init_he(rng);
    c1.init_he(rng);
    u2.init_he(rng);
    c2.init_he(rng);
    outconv.init_he(rng);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> s0 = a0b.forward(e0b.forward(a0.forward(e0a.forward(x))));
    Tensor<T> s1 = a1b.forward(e1b.forward(a1.forward(d1.forward(s0))));
    Tensor<T> h = a2b.forward(e2b.forward(a2.forward(d2.forward(s1))));
    h = a3.forward(u1.forward(nn::upsample2x(h)));
    h = a3b.forward(c1.forward(nn::concat_channels(h, s1)));
    h = a4.forward(u2.forward(nn::upsample2x(h)));
    h = a4b.forward(c2.forward(nn::concat_channels(h, s0)));
    return outconv.forward(h);
  }

  Tensor<T> backward(const Tensor<T>& gout) {
    Tensor<T> g = outconv.backward(gout);
    g = c2.backward(a4b.backward(g));
    Tensor<T> gu, gskip0;
    nn::split_channels(g, cfg.base, gu, gskip0);
    g = nn::upsample2x_backward(u2.backward(a4.backward(gu)));
    g = c1.backward(a3b.backward(g));
    Tensor<T> gskip1;
    nn::split_channels(g, 2 * cfg.base, gu, gskip1);
    g = nn::upsample2x_backward(u1.backward(a3.backward(gu)));
    g = e2b.backward(a2b.backward(g));
    g = a2.backward(g);
    g = d2.backward(g);  // grad wrt s1
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += gskip1.v[i];
    g = e1b.backward(a1b.backward(g));
    g = d1.backward(a1.backward(g));  // grad wrt s0
    for (size_t i = 0; i < g.v.size(); ++i) g.v[i] += gskip0.v[i];
    g = e0b.backward(a0b.backward(g));
    g = e0a.backward(a0.backward(g));
    return g;
  }

  void params(std::vector<nn::ParamRef<T>>& out) {
    e0a.collect("e0a", out);
    e0b.collect("e0b", out);
    d1.collect("d1", out);
    e1b.collect("e1b", out);
    d2.collect("d2", out);
    e2b.collect("e2b", out);
    u1.collect("u1", out);
    c1.collect("c1", out);
    u2.collect("u2", out);
    c2.collect("c2", out);
    outconv.collect("outconv", out);
  }
};

}  // namespace dass
