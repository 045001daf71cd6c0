#pragma once

#include "posetext/autodiff.hpp"
#include "posetext/hand.hpp"
#include "posetext/params.hpp"

#include <array>
#include <string>
#include <vector>

namespace posetext {

// Plain-value views of the encoder outputs, used by decoding and tests.
struct LixelFeatures {
  Eigen::MatrixXd hx, hy, hz;  // 21 x L logits per axis
};

struct VisualEncoderConfig {
  RunPreset preset;
  int deconv_channels = 0;  // channels of F_l after upsampling f4

  static VisualEncoderConfig from_preset(const RunPreset& p) {
    VisualEncoderConfig c;
    c.preset = p;
    c.deconv_channels = p.name == "paper" ? 256 : 32;
    return c;
  }
};

// Strided convolutional pyramid standing in for the paper-scale backbone,
// plus the per-axis 1D ("lixel") regression streams and the pooled pose
// embeddings used for matching.
template <typename S>
struct PoseEncoder {
  VisualEncoderConfig cfg;

  struct ConvIds {
    int w = -1, b = -1;
    int c_in = 0, c_out = 0, k = 0, stride = 1, pad = 0;
  };
  ConvIds stem0, stem1, conv_f1, conv_f2, conv_f3, conv_f4;
  ConvIds deconv;                       // 3x3 after bilinear x2 upsample of f4
  ConvIds lix_x, lix_y;                 // single Conv1d per axis
  std::array<ConvIds, 3> lix_z;         // multi-layer stack for the depth axis
  std::array<int, 3> w_pool{}, b_pool{};  // flatten(21*L) -> E per axis

  struct Pyramid {
    std::array<ad::Var<S>, 5> f;
    std::array<int, 5> spatial;
    std::array<int, 5> channels;
  };
  struct Lixel {
    ad::Var<S> hx, hy, hz;  // 21 x L
  };
  struct Embeddings {
    ad::Var<S> px, py, pz;  // 1 x E, unit norm
  };
  struct SoftPose {
    ad::Var<S> u, v, d;  // 21 x 1 each
  };

  static PoseEncoder create(ParamStore<S>& store, const VisualEncoderConfig& cfg) {
    PoseEncoder enc;
    enc.cfg = cfg;
    const auto& w = cfg.preset.widths;
    auto conv = [&store](const std::string& name, int ci, int co, int k, int stride,
                         int pad) {
      ConvIds c;
      c.c_in = ci;
      c.c_out = co;
      c.k = k;
      c.stride = stride;
      c.pad = pad;
      c.w = store.add(name + ".w", co, k * k * ci, Init::kUniformFanIn,
                      static_cast<double>(k) * k * ci);
      c.b = store.add(name + ".b", 1, co, Init::kZero);
      return c;
    };
    auto conv1 = [&store](const std::string& name, int ci, int co, int k) {
      ConvIds c;
      c.c_in = ci;
      c.c_out = co;
      c.k = k;
      c.w = store.add(name + ".w", co, k * ci, Init::kUniformFanIn,
                      static_cast<double>(k) * ci);
      c.b = store.add(name + ".b", 1, co, Init::kZero);
      return c;
    };
    enc.stem0 = conv("vis.stem0", 3, w[0], 3, 2, 1);
    enc.stem1 = conv("vis.stem1", w[0], w[0], 3, 2, 1);
    enc.conv_f1 = conv("vis.f1", w[0], w[1], 3, 1, 1);
    enc.conv_f2 = conv("vis.f2", w[1], w[2], 3, 2, 1);
    enc.conv_f3 = conv("vis.f3", w[2], w[3], 3, 2, 1);
    // f3 -> f4 with a 2x2 kernel; padding chosen so the preset's f4 size
    // comes out exactly (the paper's 14 -> 8 step is not a clean halving).
    const int in3 = cfg.preset.image_size / 16;
    const int pad4 = (2 * (cfg.preset.f4_spatial - 1) + 2 - in3) / 2;
    enc.conv_f4 = conv("vis.f4", w[3], w[4], 2, 2, pad4);

    enc.deconv = conv("vis.deconv", w[4], cfg.deconv_channels, 3, 1, 1);
    const int C = cfg.deconv_channels;
    enc.lix_x = conv1("vis.lix_x", C, kNumJoints, 3);
    enc.lix_y = conv1("vis.lix_y", C, kNumJoints, 3);
    enc.lix_z[0] = conv1("vis.lix_z0", C, C, 3);
    enc.lix_z[1] = conv1("vis.lix_z1", C, C, 3);
    enc.lix_z[2] = conv1("vis.lix_z2", C, kNumJoints, 3);
    const int L = cfg.preset.heatmap_resolution;
    const char* axes[3] = {"x", "y", "z"};
    for (int a = 0; a < 3; ++a) {
      enc.w_pool[a] = store.add(std::string("vis.pool") + axes[a] + ".w", kNumJoints * L,
                                cfg.preset.embed_dim, Init::kUniformFanIn, kNumJoints * L);
      enc.b_pool[a] = store.add(std::string("vis.pool") + axes[a] + ".b", 1,
                                cfg.preset.embed_dim, Init::kZero);
    }
    return enc;
  }

  ad::Var<S> run_conv(ad::Tape<S>& tape, const ParamStore<S>& store, ParamBinding<S>& bind,
                      const ConvIds& c, ad::Var<S> x, int H, int W,
                      ad::Pad mode = ad::Pad::kZero) const {
    return ad::conv2d(x, bind.use(tape, store, c.w), bind.use(tape, store, c.b), c.c_in, H,
                      W, c.c_out, c.k, c.stride, c.pad, mode);
  }

  // image: (3, H*W) channel-major. Throws "bad image shape" on mismatch.
  Pyramid encode_image(ad::Tape<S>& tape, const ParamStore<S>& store, ParamBinding<S>& bind,
                       ad::Var<S> image) const {
    const int img = cfg.preset.image_size;
    if (image.rows() != 3 || image.cols() != img * img)
      throw std::invalid_argument("bad image shape");
    Pyramid p;
    const int s0 = img / 2, s1 = img / 4, s2 = img / 8, s3 = img / 16;
    ad::Var<S> x = ad::gelu(run_conv(tape, store, bind, stem0, image, img, img));
    x = ad::gelu(run_conv(tape, store, bind, stem1, x, s0, s0));
    p.f[0] = x;
    p.f[1] = ad::gelu(run_conv(tape, store, bind, conv_f1, p.f[0], s1, s1));
    p.f[2] = ad::gelu(run_conv(tape, store, bind, conv_f2, p.f[1], s1, s1));
    p.f[3] = ad::gelu(run_conv(tape, store, bind, conv_f3, p.f[2], s2, s2));
    p.f[4] = ad::gelu(run_conv(tape, store, bind, conv_f4, p.f[3], s3, s3));
    p.spatial = {s1, s1, s2, s3, cfg.preset.f4_spatial};
    p.channels = {cfg.preset.widths[0], cfg.preset.widths[1], cfg.preset.widths[2],
                  cfg.preset.widths[3], cfg.preset.widths[4]};
    if (p.f[4].cols() != cfg.preset.f4_spatial * cfg.preset.f4_spatial)
      throw std::logic_error("pyramid arithmetic does not match preset");
    return p;
  }

  // f4 -> F_l (bilinear x2 + 3x3 conv), then the three collapse streams.
  // Replicate padding everywhere in this chain so a constant f4 yields
  // lixel rows that are constant along L.
  Lixel lixel_features(ad::Tape<S>& tape, const ParamStore<S>& store, ParamBinding<S>& bind,
                       ad::Var<S> f4) const {
    const int fs = cfg.preset.f4_spatial;
    const int L = cfg.preset.heatmap_resolution;
    const int C = cfg.deconv_channels;
    if (f4.rows() != cfg.preset.widths[4] || f4.cols() != fs * fs)
      throw std::invalid_argument("lixel_features: f4 shape mismatch");
    ad::Var<S> up = ad::upsample2x_bilinear(f4, cfg.preset.widths[4], fs, fs);
    ad::Var<S> fl = ad::gelu(
        run_conv(tape, store, bind, deconv, up, 2 * fs, 2 * fs, ad::Pad::kReplicate));
    const int H = 2 * fs, W = 2 * fs;

    auto conv1 = [&](const ConvIds& c, ad::Var<S> x, int len) {
      return ad::conv1d_same(x, bind.use(tape, store, c.w), bind.use(tape, store, c.b),
                             c.c_in, len, c.c_out, c.k, ad::Pad::kReplicate);
    };

    Lixel out;
    ad::Var<S> sx = ad::resize1d_linear(ad::collapse_mean(fl, C, H, W, 0), L);
    out.hx = conv1(lix_x, sx, L);
    ad::Var<S> sy = ad::resize1d_linear(ad::collapse_mean(fl, C, H, W, 1), L);
    out.hy = conv1(lix_y, sy, L);
    ad::Var<S> sz = ad::resize1d_linear(fl, L);  // full spatial flatten, then resample
    sz = ad::gelu(conv1(lix_z[0], sz, L));
    sz = ad::gelu(conv1(lix_z[1], sz, L));
    out.hz = conv1(lix_z[2], sz, L);
    return out;
  }

  SoftPose decode_soft(ad::Tape<S>& tape, const Lixel& lx) const {
    const int L = cfg.preset.heatmap_resolution;
    ad::Arr<S> idx(L);
    for (int i = 0; i < L; ++i) idx[i] = static_cast<S>(i);
    ad::Var<S> bins = tape.input(L, 1, idx);
    SoftPose p;
    p.u = ad::matmul(ad::softmax_rows(lx.hx), bins);
    p.v = ad::matmul(ad::softmax_rows(lx.hy), bins);
    p.d = ad::matmul(ad::softmax_rows(lx.hz), bins);
    return p;
  }

  Embeddings pool_embeddings(ad::Tape<S>& tape, const ParamStore<S>& store,
                             ParamBinding<S>& bind, const Lixel& lx) const {
    const int L = cfg.preset.heatmap_resolution;
    auto pool = [&](ad::Var<S> h, int axis) {
      ad::Var<S> flat = ad::reshape(h, 1, kNumJoints * L);
      ad::Var<S> e = ad::add_rowvec(ad::matmul(flat, bind.use(tape, store, w_pool[axis])),
                                    bind.use(tape, store, b_pool[axis]));
      return ad::l2_normalize_rows(e);
    };
    return Embeddings{pool(lx.hx, 0), pool(lx.hy, 1), pool(lx.hz, 2)};
  }
};

// Eq-2 style decoding of plain lixel logits: per joint and axis the index of
// the maximum softmax response, ties resolved to the lowest index. Softmax is
// monotone, so this equals the raw-logit argmax.
Pose3D decode_joints_hard(const LixelFeatures& lx);

// Differentiable surrogate on plain values: expectation of the bin index
// under the per-row softmax.
Pose3D decode_joints_soft_plain(const LixelFeatures& lx);

}  // namespace posetext
