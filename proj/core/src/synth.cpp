#include "posetext/synth.hpp"

#include "posetext/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace posetext {

void SkeletonSpec::require_valid() const {
  if (parent[0] != -1) throw std::invalid_argument("skeleton root must be the wrist");
  for (int j = 1; j < kNumJoints; ++j) {
    if (parent[j] < 0 || parent[j] >= j)
      throw std::invalid_argument("skeleton hierarchy must be a wrist-rooted tree");
    if (!(length_range[j].first > 0.0) || length_range[j].second < length_range[j].first)
      throw std::invalid_argument("bone length range invalid");
  }
}

SkeletonSpec SkeletonSpec::standard() {
  SkeletonSpec s;
  s.parent[0] = -1;
  for (int f = 0; f < 5; ++f) {
    const int mcp = 1 + 4 * f;
    s.parent[mcp] = 0;
    s.parent[mcp + 1] = mcp;
    s.parent[mcp + 2] = mcp + 1;
    s.parent[mcp + 3] = mcp + 2;
    // palm bone, then shrinking phalanges (normalized hand units)
    s.length_range[mcp] = {0.30, 0.42};
    s.length_range[mcp + 1] = {0.16, 0.24};
    s.length_range[mcp + 2] = {0.10, 0.16};
    s.length_range[mcp + 3] = {0.07, 0.12};
    // splay at the knuckle, cumulative flexion along the chain
    s.angle_range[mcp] = {-0.12, 0.12};
    s.angle_range[mcp + 1] = {-0.10, 1.20};
    s.angle_range[mcp + 2] = {0.0, 0.90};
    s.angle_range[mcp + 3] = {0.0, 0.70};
  }
  // thumb: shorter chain, strongly lateral base
  s.length_range[1] = {0.22, 0.30};
  s.base_azimuth = {-1.25, -0.45, 0.0, 0.40, 0.80};
  return s;
}

Eigen::MatrixXd vertex_blend_matrix(const SkeletonSpec& spec, int n_final) {
  Rng rng(mix_seed(spec.blend_seed, 0x626c656e64ull));  // "blend"
  Eigen::MatrixXd blend = Eigen::MatrixXd::Zero(n_final, kNumJoints);
  for (int v = 0; v < n_final; ++v) {
    // three support joints with normalized positive weights
    int j0 = static_cast<int>(rng.uniform_index(kNumJoints));
    int j1 = static_cast<int>(rng.uniform_index(kNumJoints));
    int j2 = static_cast<int>(rng.uniform_index(kNumJoints));
    double w0 = rng.uniform(0.05, 1.0);
    double w1 = rng.uniform(0.05, 1.0);
    double w2 = rng.uniform(0.05, 1.0);
    const double sum = w0 + w1 + w2;
    blend(v, j0) += w0 / sum;
    blend(v, j1) += w1 / sum;
    blend(v, j2) += w2 / sum;
  }
  return blend;
}

namespace {

Eigen::Matrix3d random_rotation(Rng& rng) {
  // uniform rotation from a normalized random quaternion
  double q0 = rng.normal(), q1 = rng.normal(), q2 = rng.normal(), q3 = rng.normal();
  Eigen::Quaterniond q(q0, q1, q2, q3);
  if (q.norm() < 1e-12) q = Eigen::Quaterniond::Identity();
  q.normalize();
  return q.toRotationMatrix();
}

float quantize(double v) { return static_cast<float>(v); }

}  // namespace

HandSample sample_hand(std::uint64_t seed, const SkeletonSpec& spec, const RunPreset& preset) {
  spec.require_valid();
  Rng rng(mix_seed(seed, 0x68616e64ull));  // "hand"

  // Forward kinematics in normalized hand units.
  Eigen::Matrix<double, kNumJoints, 3> joints;
  joints.row(0).setZero();
  for (int f = 0; f < 5; ++f) {
    const int mcp = 1 + 4 * f;
    const double splay =
        rng.uniform(spec.angle_range[mcp].first, spec.angle_range[mcp].second);
    const double az = spec.base_azimuth[f] + splay;
    const Eigen::Vector3d u(std::cos(az), std::sin(az), 0.0);
    const Eigen::Vector3d n(0.0, 0.0, 1.0);
    const double palm_len =
        rng.uniform(spec.length_range[mcp].first, spec.length_range[mcp].second);
    joints.row(mcp) = (u * palm_len).transpose();
    double flex = 0.0;
    Eigen::Vector3d pos = joints.row(mcp).transpose();
    for (int k = 1; k < 4; ++k) {
      const int j = mcp + k;
      flex += rng.uniform(spec.angle_range[j].first, spec.angle_range[j].second);
      const double len =
          rng.uniform(spec.length_range[j].first, spec.length_range[j].second);
      pos += len * (std::cos(flex) * u + std::sin(flex) * n);
      joints.row(j) = pos.transpose();
    }
  }

  // Seeded global rotation, then scaled-orthographic projection into the bin
  // cube with a one-bin margin.
  const Eigen::Matrix3d rot = random_rotation(rng);
  Eigen::Matrix<double, kNumJoints, 3> world = joints * rot.transpose();
  const double L = preset.heatmap_resolution;
  const double margin = 1.0;
  Eigen::RowVector3d lo = world.colwise().minCoeff();
  Eigen::RowVector3d hi = world.colwise().maxCoeff();
  const double extent = std::max({hi(0) - lo(0), hi(1) - lo(1), hi(2) - lo(2), 1e-9});
  const double scale = (L - 2.0 * margin) / extent;
  Eigen::RowVector3d center = 0.5 * (lo + hi);

  HandSample out;
  out.seed = seed;
  for (int j = 0; j < kNumJoints; ++j)
    for (int a = 0; a < 3; ++a)
      out.pose_gt.coords(j, a) =
          quantize((world(j, a) - center(a)) * scale + 0.5 * L);

  const Eigen::MatrixXd blend = vertex_blend_matrix(spec, preset.levels.back());
  PointSet verts = blend * out.pose_gt.coords;
  out.verts_gt.resize(verts.rows(), 3);
  for (int v = 0; v < verts.rows(); ++v)
    for (int a = 0; a < 3; ++a) out.verts_gt(v, a) = quantize(verts(v, a));

  // Render: per-joint separable Gaussian blobs (sigma = 2 image pixels) with
  // fixed pseudo-colors; blob amplitude fades with depth so near joints are
  // brighter than far ones.
  const int img = preset.image_size;
  const double px_per_bin = static_cast<double>(img) / L;
  const double sigma = 2.0;
  out.image = Eigen::VectorXf::Zero(3 * img * img);
  Rng color_rng(mix_seed(0x636f6c6f72ull, 0));  // fixed per-joint colors
  Eigen::Matrix<double, kNumJoints, 3> colors;
  for (int j = 0; j < kNumJoints; ++j)
    for (int c = 0; c < 3; ++c) colors(j, c) = color_rng.uniform(0.25, 1.0);

  Eigen::VectorXd gx(img), gy(img);
  Eigen::MatrixXd accum[3] = {Eigen::MatrixXd::Zero(img, img), Eigen::MatrixXd::Zero(img, img),
                              Eigen::MatrixXd::Zero(img, img)};
  for (int j = 0; j < kNumJoints; ++j) {
    const double px = out.pose_gt.coords(j, 0) * px_per_bin;
    const double py = out.pose_gt.coords(j, 1) * px_per_bin;
    const double amp = 1.0 - 0.55 * (out.pose_gt.coords(j, 2) / L);
    for (int x = 0; x < img; ++x) gx(x) = std::exp(-0.5 * (x - px) * (x - px) / (sigma * sigma));
    for (int y = 0; y < img; ++y) gy(y) = std::exp(-0.5 * (y - py) * (y - py) / (sigma * sigma));
    for (int c = 0; c < 3; ++c) accum[c].noalias() += (amp * colors(j, c)) * (gy * gx.transpose());
  }
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img; ++y)
      for (int x = 0; x < img; ++x)
        out.image[c * img * img + y * img + x] =
            quantize(std::min(1.0, std::max(0.0, accum[c](y, x))));
  return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 2> apply_affine(
    const Eigen::Matrix<double, 2, 3>& aff,
    const Eigen::Matrix<double, Eigen::Dynamic, 2>& uv) {
  Eigen::Matrix<double, Eigen::Dynamic, 2> out(uv.rows(), 2);
  for (int i = 0; i < uv.rows(); ++i) {
    out(i, 0) = aff(0, 0) * uv(i, 0) + aff(0, 1) * uv(i, 1) + aff(0, 2);
    out(i, 1) = aff(1, 0) * uv(i, 0) + aff(1, 1) * uv(i, 1) + aff(1, 2);
  }
  return out;
}

namespace {

// Bilinear inverse warp of a channel-major image under a forward affine
// given in pixel units.
Eigen::VectorXf warp_image(const Eigen::VectorXf& image, int img,
                           const Eigen::Matrix<double, 2, 3>& aff_px) {
  // invert [A | t]
  Eigen::Matrix2d A = aff_px.leftCols<2>();
  Eigen::Vector2d t = aff_px.col(2);
  Eigen::Matrix2d Ainv = A.inverse();
  Eigen::VectorXf out = Eigen::VectorXf::Zero(image.size());
  for (int y = 0; y < img; ++y) {
    for (int x = 0; x < img; ++x) {
      Eigen::Vector2d src = Ainv * (Eigen::Vector2d(x, y) - t);
      const double sx = src(0), sy = src(1);
      if (sx < 0 || sy < 0 || sx > img - 1 || sy > img - 1) continue;  // outside -> black
      const int x0 = std::min(static_cast<int>(sx), img - 2);
      const int y0 = std::min(static_cast<int>(sy), img - 2);
      const double fx = sx - x0, fy = sy - y0;
      for (int c = 0; c < 3; ++c) {
        const float* ch = image.data() + c * img * img;
        const double v = (1 - fy) * ((1 - fx) * ch[y0 * img + x0] + fx * ch[y0 * img + x0 + 1]) +
                         fy * ((1 - fx) * ch[(y0 + 1) * img + x0] + fx * ch[(y0 + 1) * img + x0 + 1]);
        out[c * img * img + y * img + x] = static_cast<float>(v);
      }
    }
  }
  return out;
}

}  // namespace

AugmentedPair augment_pair(const HandSample& sample, std::uint64_t seed,
                           const RunPreset& preset) {
  const double L = preset.heatmap_resolution;
  AugmentedPair pair;
  pair.view1 = sample;

  for (int attempt = 0;; ++attempt) {
    if (attempt >= 10) throw std::runtime_error("augmentation failed");
    double theta = 0.0, s = 1.0, tx = 0.0, ty = 0.0;
    if (seed != 0) {
      Rng rng(mix_seed(mix_seed(seed, 0x617567ull), static_cast<std::uint64_t>(attempt)));
      theta = rng.uniform(-M_PI / 4.0, M_PI / 4.0);
      s = rng.uniform(0.8, 1.2);
      tx = rng.uniform(-0.1 * L, 0.1 * L);
      ty = rng.uniform(-0.1 * L, 0.1 * L);
    }
    // rotation + scale about the frame center, then translation (bin units)
    const double c = std::cos(theta), sn = std::sin(theta);
    const double cx = 0.5 * L, cy = 0.5 * L;
    Eigen::Matrix<double, 2, 3> aff;
    aff << s * c, -s * sn, cx + tx - s * (c * cx - sn * cy),
           s * sn,  s * c, cy + ty - s * (sn * cx + c * cy);

    Eigen::Matrix<double, Eigen::Dynamic, 2> uv1 = sample.pose_gt.coords.leftCols<2>();
    Eigen::Matrix<double, Eigen::Dynamic, 2> uv2 = apply_affine(aff, uv1);
    bool in_frame = true;
    for (int j = 0; j < kNumJoints && in_frame; ++j)
      in_frame = uv2(j, 0) >= 0.0 && uv2(j, 0) < L && uv2(j, 1) >= 0.0 && uv2(j, 1) < L;
    if (!in_frame) {
      if (seed == 0) throw std::runtime_error("augmentation failed");
      continue;
    }

    pair.aff = aff;
    // matching depth-axis rotation for the vertices
    pair.rot << c, -sn, 0.0, sn, c, 0.0, 0.0, 0.0, 1.0;

    // View2 labels stay in double precision; only dataset-file samples are
    // float32-quantized.
    pair.view2 = sample;
    pair.view2.seed = seed;
    pair.view2.pose_gt.coords.leftCols<2>() = uv2;
    pair.view2.verts_gt = sample.verts_gt * pair.rot.transpose();

    if (seed == 0) {
      pair.view2.image = sample.image;
    } else {
      const double px_per_bin = preset.image_size / L;
      Eigen::Matrix<double, 2, 3> aff_px = aff;
      aff_px.col(2) *= px_per_bin;  // conjugate by the bin->pixel scaling
      pair.view2.image = warp_image(sample.image, preset.image_size, aff_px);
    }
    return pair;
  }
}

}  // namespace posetext
