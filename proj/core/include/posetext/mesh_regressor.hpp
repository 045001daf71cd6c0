#pragma once

#include "posetext/pose_encoder.hpp"
#include "posetext/transformer.hpp"

#include <algorithm>
#include <array>
#include <string>
#include <vector>

namespace posetext {

using PlaneMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Coordinate-plane 2D projections of the per-joint Gaussian heatmap, stored
// as (21, R*R) with flat index a*R + b, where a indexes the first named axis
// of the plane (hxy: a ~ u, b ~ v; hxz: a ~ u, b ~ d; hyz: a ~ v, b ~ d).
struct JointHeatmapPlanes {
  PlaneMatrix hxy, hxz, hyz;
  double sigma = 2.0;
  int resolution = 0;
};

inline constexpr double kDefaultHeatmapSigma = 2.0;

// H_j(a, b) = exp(-((a-c0)^2 + (b-c1)^2) / (2 sigma^2)), normalized per joint
// and plane so the peak equals 1 at the rounded joint coordinates. Requires
// pose coords in [0, R); throws "invalid sigma" for sigma <= 0.
JointHeatmapPlanes joint_heatmap(const Pose3D& pose, double sigma, int resolution);

// Bilinear plane resize in heatmap (a, b) layout.
PlaneMatrix resize_plane(const PlaneMatrix& plane, int r_in, int r_out);

struct MeshRegressorConfig {
  RunPreset preset;
  int heads = 4;
  int ffn_mult = 2;
  bool sparse_to_dense = true;     // ablation switch: fixed 21-token stages when false
  bool pyramid_injection = true;   // ablation switch: skip joint-feature injection

  static MeshRegressorConfig from_preset(const RunPreset& p) {
    MeshRegressorConfig c;
    c.preset = p;
    return c;
  }
};

template <typename S>
struct MeshRegressor {
  MeshRegressorConfig cfg;

  int init_conv_w = -1, init_conv_b = -1;          // 1x1 conv over heatmap + f0 channels
  int init_mlp1_w = -1, init_mlp1_b = -1;
  int init_mlp2_w = -1, init_mlp2_b = -1;
  int bridge = -1;                                 // learned joints -> level-0 map
  std::array<int, 4> dim_w{}, dim_b{};             // per-stage dimension adjust
  std::array<int, 4> up_res{};                     // learned residual after upsampling
  std::array<int, 4> inj_w{}, inj_b{};             // pyramid feature -> stage dim
  std::array<int, 4> pos_embed{};
  std::array<TransformerBlockIds, 4> blocks;
  int ln_f_g = -1, ln_f_b = -1;
  int out_w = -1, out_b = -1;

  static MeshRegressor create(ParamStore<S>& store, const MeshRegressorConfig& cfg) {
    MeshRegressor m;
    m.cfg = cfg;
    const auto& dims = cfg.preset.stage_dims;
    const auto& levels = cfg.preset.levels;
    const int d0 = dims[0];
    const int heat_ch = 3 * kNumJoints;
    const int cin = heat_ch + cfg.preset.widths[0];
    m.init_conv_w = store.add("mesh.init_conv.w", d0, cin, Init::kUniformFanIn, cin);
    m.init_conv_b = store.add("mesh.init_conv.b", 1, d0, Init::kZero);
    m.init_mlp1_w = store.add("mesh.init_mlp1.w", d0, d0, Init::kUniformFanIn, d0);
    m.init_mlp1_b = store.add("mesh.init_mlp1.b", 1, d0, Init::kZero);
    m.init_mlp2_w = store.add("mesh.init_mlp2.w", d0, d0, Init::kUniformFanIn, d0);
    m.init_mlp2_b = store.add("mesh.init_mlp2.b", 1, d0, Init::kZero);
    m.bridge = store.add("mesh.bridge", levels[0], kNumJoints, Init::kUniformFanIn, kNumJoints);
    int prev_dim = d0;
    for (int l = 0; l < 4; ++l) {
      const std::string p = "mesh.stage" + std::to_string(l);
      const int n_l = cfg.sparse_to_dense ? levels[l] : kNumJoints;
      m.dim_w[l] = store.add(p + ".dim.w", prev_dim, dims[l], Init::kUniformFanIn, prev_dim);
      m.dim_b[l] = store.add(p + ".dim.b", 1, dims[l], Init::kZero);
      m.up_res[l] = store.add(p + ".upres.w", prev_dim, prev_dim, Init::kNormalScaled,
                              0.02);
      const int c_l = cfg.preset.widths[4 - l];  // deepest level feeds the coarsest stage
      m.inj_w[l] = store.add(p + ".inj.w", c_l, dims[l], Init::kUniformFanIn, c_l);
      m.inj_b[l] = store.add(p + ".inj.b", 1, dims[l], Init::kZero);
      m.pos_embed[l] = store.add(p + ".pos", n_l, dims[l], Init::kNormalScaled, 0.02);
      m.blocks[l] =
          make_transformer_block(store, p + ".tf", dims[l], cfg.heads, cfg.ffn_mult * dims[l]);
      prev_dim = dims[l];
    }
    m.ln_f_g = store.add("mesh.lnf.gain", 1, dims[3], Init::kOne);
    m.ln_f_b = store.add("mesh.lnf.bias", 1, dims[3], Init::kZero);
    m.out_w = store.add("mesh.out.w", dims[3], 3, Init::kUniformFanIn, dims[3]);
    m.out_b = store.add("mesh.out.b", 1, 3, Init::kZero);
    return m;
  }

  // Heatmap planes (plain, detached) + shallow features -> 21 joint tokens.
  // Planes are resized to f0's spatial size when R differs.
  ad::Var<S> init_tokens(ad::Tape<S>& tape, const ParamStore<S>& store, ParamBinding<S>& bind,
                         const JointHeatmapPlanes& heat, ad::Var<S> f0, int f0_spatial) const {
    const int fs = f0_spatial;
    const int hw = fs * fs;
    if (f0.cols() != hw) throw std::invalid_argument("init_tokens: f0 shape mismatch");
    const int heat_ch = 3 * kNumJoints;

    // heatmap channels in image layout (y*W + x); plane storage is (a, b)
    ad::Arr<S> heat_flat(static_cast<Eigen::Index>(heat_ch) * hw);
    ad::Arr<S> pool_flat(static_cast<Eigen::Index>(kNumJoints) * hw);
    const PlaneMatrix* planes[3] = {&heat.hxy, &heat.hxz, &heat.hyz};
    for (int p = 0; p < 3; ++p) {
      for (int j = 0; j < kNumJoints; ++j) {
        Eigen::Map<const PlaneMatrix> src(planes[p]->row(j).data(), heat.resolution,
                                          heat.resolution);
        PlaneMatrix resized =
            heat.resolution == fs ? PlaneMatrix(src) : resize_plane(src, heat.resolution, fs);
        for (int y = 0; y < fs; ++y)
          for (int x = 0; x < fs; ++x) {
            const double v = resized(x, y);  // (a=x, b=y) -> image (y, x)
            heat_flat[(static_cast<Eigen::Index>(p) * kNumJoints + j) * hw + y * fs + x] =
                static_cast<S>(v);
            if (p == 0)
              pool_flat[static_cast<Eigen::Index>(j) * hw + y * fs + x] = static_cast<S>(v);
          }
      }
    }
    ad::Var<S> heat_v = tape.input(heat_ch, hw, std::move(heat_flat));

    // per-joint spatial pooling weights from the xy plane, normalized
    for (int j = 0; j < kNumJoints; ++j) {
      auto seg = pool_flat.segment(static_cast<Eigen::Index>(j) * hw, hw);
      const S s = seg.sum();
      seg /= (s > S(0) ? s : S(1));
    }
    ad::Var<S> pool_v = tape.input(kNumJoints, hw, std::move(pool_flat));

    ad::Var<S> x = ad::concat_rows<S>({heat_v, f0});
    const int cin = heat_ch + f0.rows();
    x = ad::gelu(ad::conv2d(x, bind.use(tape, store, init_conv_w),
                            bind.use(tape, store, init_conv_b), cin, fs, fs,
                            cfg.preset.stage_dims[0], 1, 1, 0));
    // (21 x HW) . (HW x d0)
    ad::Var<S> tokens = ad::matmul_nt(pool_v, x);
    tokens = ad::gelu(ad::add_rowvec(ad::matmul(tokens, bind.use(tape, store, init_mlp1_w)),
                                     bind.use(tape, store, init_mlp1_b)));
    tokens = ad::add_rowvec(ad::matmul(tokens, bind.use(tape, store, init_mlp2_w)),
                            bind.use(tape, store, init_mlp2_b));
    return tokens;
  }

  // Bilinear joint-feature sampling from every pyramid level at the given
  // (u, v) bin coordinates (constants; gradients reach the features only).
  std::array<ad::Var<S>, 5> project_pyramid(
      ad::Tape<S>& tape, const typename PoseEncoder<S>::Pyramid& pyr,
      const Eigen::Matrix<double, kNumJoints, 2>& uv, int heatmap_resolution) const {
    std::array<ad::Var<S>, 5> out;
    for (int level = 0; level < 5; ++level) {
      const int sp = pyr.spatial[level];
      std::vector<std::pair<double, double>> xy(kNumJoints);
      const double r = static_cast<double>(sp) / heatmap_resolution;
      for (int j = 0; j < kNumJoints; ++j)
        xy[j] = {(uv(j, 0) + 0.5) * r - 0.5, (uv(j, 1) + 0.5) * r - 0.5};
      out[level] = ad::bilinear_sample(pyr.f[level], pyr.channels[level], sp, sp, xy);
    }
    return out;
  }

  struct Result {
    ad::Var<S> verts;              // n_final x 3
    std::vector<int> stage_tokens;  // token count after each stage
  };

  Result regress(ad::Tape<S>& tape, const ParamStore<S>& store, ParamBinding<S>& bind,
                 ad::Var<S> level0_tokens, const typename PoseEncoder<S>::Pyramid& pyr,
                 const Eigen::Matrix<double, kNumJoints, 2>& pose_uv,
                 const MeshTopology& topo) const {
    const auto& levels = cfg.preset.levels;
    if (topo.levels.size() != 4 || !std::equal(topo.levels.begin(), topo.levels.end(),
                                               levels.begin()))
      throw std::invalid_argument("ladder mismatch");

    auto joint_feats =
        cfg.pyramid_injection
            ? project_pyramid(tape, pyr, pose_uv, cfg.preset.heatmap_resolution)
            : std::array<ad::Var<S>, 5>{};

    // topology maps as constants
    std::array<ad::Var<S>, 3> up_maps;
    for (int l = 0; l < 3; ++l) {
      const auto& m = topo.upsample_maps[l];
      ad::Arr<S> flat(m.size());
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
          flat[static_cast<Eigen::Index>(r) * m.cols() + c] = static_cast<S>(m(r, c));
      up_maps[l] = tape.input(static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                              std::move(flat));
    }

    Result res;
    ad::Var<S> tokens = level0_tokens;
    ad::Var<S> bridge_v = bind.use(tape, store, bridge);
    for (int l = 0; l < 4; ++l) {
      if (cfg.sparse_to_dense) {
        // sparse-to-dense step: learned bridge at the coarsest stage, then
        // the fixed structural map plus a learned residual refinement
        ad::Var<S> upped = l == 0 ? ad::matmul(bridge_v, tokens)
                                  : ad::matmul(up_maps[l - 1], tokens);
        tokens = ad::add(upped, ad::matmul(upped, bind.use(tape, store, up_res[l])));
      } else {
        tokens = ad::add(tokens, ad::matmul(tokens, bind.use(tape, store, up_res[l])));
      }
      tokens = ad::add_rowvec(ad::matmul(tokens, bind.use(tape, store, dim_w[l])),
                              bind.use(tape, store, dim_b[l]));
      if (cfg.pyramid_injection) {
        ad::Var<S> inj = ad::add_rowvec(
            ad::matmul(joint_feats[4 - l], bind.use(tape, store, inj_w[l])),
            bind.use(tape, store, inj_b[l]));
        if (cfg.sparse_to_dense) {
          inj = ad::matmul(bridge_v, inj);
          for (int k = 0; k < l; ++k) inj = ad::matmul(up_maps[k], inj);
        }
        tokens = ad::add(tokens, inj);
      }
      tokens = ad::add(tokens, bind.use(tape, store, pos_embed[l]));
      tokens = run_transformer_block(tape, store, bind, blocks[l], tokens);
      res.stage_tokens.push_back(tokens.rows());
    }

    tokens = ad::layernorm_rows(tokens, bind.use(tape, store, ln_f_g),
                                bind.use(tape, store, ln_f_b));
    ad::Var<S> coords = ad::add_rowvec(ad::matmul(tokens, bind.use(tape, store, out_w)),
                                       bind.use(tape, store, out_b));
    if (cfg.sparse_to_dense) {
      res.verts = coords;
    } else {
      // without the sparse-to-dense ladder the 21 refined tokens are lifted
      // to the full vertex count through the structural maps
      ad::Var<S> lifted = ad::matmul(bridge_v, coords);
      for (int k = 0; k < 3; ++k) lifted = ad::matmul(up_maps[k], lifted);
      res.verts = lifted;
    }
    return res;
  }
};

}  // namespace posetext
