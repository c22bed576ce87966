#include "grala/splat_render.hpp"

#include <algorithm>
#include <cmath>

#include "grala/error.hpp"

namespace grala {

namespace {

constexpr double kCutoff = 9.0;  // Mahalanobis^2 at 3 sigma
const double kTail = std::exp(-0.5 * kCutoff);
// exp(-q/2) minus its tangent at the cutoff, so value and slope vanish there.
const double kNorm = 1.0 - kTail * (1.0 + 0.5 * kCutoff);

double footprint_dq(double q) { return -0.5 * (std::exp(-0.5 * q) - kTail) / kNorm; }

/// 2x3 perspective Jacobian of (u, v) w.r.t. the camera-space point.
struct Jacobian {
  double j[2][3];
};

Jacobian perspective_jacobian(const Vec3& t, double fx, double fy) {
  const double iz = 1.0 / t.z, iz2 = iz * iz;
  return {{{fx * iz, 0, -fx * t.x * iz2}, {0, fy * iz, -fy * t.y * iz2}}};
}

/// J V J^T for symmetric V.
void project_cov(const Jacobian& J, const Mat3& V, double out[3]) {
  double jv[2][3];
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) jv[r][c] = J.j[r][0] * V(0, c) + J.j[r][1] * V(1, c) + J.j[r][2] * V(2, c);
  auto dotr = [&](int r, int s) { return jv[r][0] * J.j[s][0] + jv[r][1] * J.j[s][1] + jv[r][2] * J.j[s][2]; };
  out[0] = dotr(0, 0);
  out[1] = dotr(0, 1);
  out[2] = dotr(1, 1);
}

bool sort_before(const ProjectedSplat& a, const Gaussian& ga, const ProjectedSplat& b, const Gaussian& gb) {
  if (a.cam.z != b.cam.z) return a.cam.z < b.cam.z;
  // Content tie-break keeps union renders independent of model order.
  for (int k = 0; k < Gaussian::kParamCount; ++k)
    if (ga.param(k) != gb.param(k)) return ga.param(k) < gb.param(k);
  return false;
}

}  // namespace

double footprint_weight(double q) {
  if (!(q < kCutoff)) return 0.0;
  return (std::exp(-0.5 * q) - kTail * (1.0 - 0.5 * (q - kCutoff))) / kNorm;
}

RenderResult render(std::span<const GaussianModel* const> models, const Camera& camera, const RenderSettings& settings) {
  camera.validate();
  const CameraFrame frame(camera);
  const int W = camera.width, H = camera.height;

  RenderResult result;
  RenderTape& tape = result.tape;
  tape.models.assign(models.begin(), models.end());
  for (const auto* m : models) tape.model_sizes.push_back(m->size());
  tape.camera = camera;
  tape.settings = settings;
  tape.recorded = true;

  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    const auto& gs = models[mi]->gaussians;
    for (std::size_t gi = 0; gi < gs.size(); ++gi) {
      const Gaussian& g = gs[gi];
      ProjectedSplat s;
      s.model = mi;
      s.index = gi;
      s.cam = frame.to_camera(g.position);
      if (s.cam.z <= kNearPlane) continue;
      s.u = frame.u(s.cam);
      s.v = frame.v(s.cam);
      const Mat3 V = frame.rot * g.covariance() * frame.rot.transposed();
      project_cov(perspective_jacobian(s.cam, frame.fx, frame.fy), V, s.cov);
      s.cov[0] += settings.low_pass;
      s.cov[2] += settings.low_pass;
      const double det = s.cov[0] * s.cov[2] - s.cov[1] * s.cov[1];
      if (!(det > 0)) continue;
      s.conic[0] = s.cov[2] / det;
      s.conic[1] = -s.cov[1] / det;
      s.conic[2] = s.cov[0] / det;
      const double rx = 3.0 * std::sqrt(s.cov[0]), ry = 3.0 * std::sqrt(s.cov[2]);
      s.x0 = std::max(0, static_cast<int>(std::ceil(s.u - rx - 0.5)));
      s.x1 = std::min(W - 1, static_cast<int>(std::floor(s.u + rx - 0.5)));
      s.y0 = std::max(0, static_cast<int>(std::ceil(s.v - ry - 0.5)));
      s.y1 = std::min(H - 1, static_cast<int>(std::floor(s.v + ry - 0.5)));
      if (s.x0 > s.x1 || s.y0 > s.y1) continue;
      s.opacity = g.opacity();
      s.color = g.color;
      tape.splats.push_back(s);
    }
  }
  std::sort(tape.splats.begin(), tape.splats.end(), [&](const ProjectedSplat& a, const ProjectedSplat& b) {
    return sort_before(a, models[a.model]->gaussians[a.index], b, models[b.model]->gaussians[b.index]);
  });

  Image rgb(W, H, 3), depth(W, H, 1);
  std::vector<double> T(static_cast<std::size_t>(W) * H, 1.0);
  for (const auto& s : tape.splats) {
    for (int y = s.y0; y <= s.y1; ++y) {
      for (int x = s.x0; x <= s.x1; ++x) {
        const double G = footprint_weight(s.mahalanobis2(x, y));
        if (G <= 0) continue;
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const double a = s.opacity * G;
        const double w = a * T[p];
        rgb.data[3 * p] += w * s.color.x;
        rgb.data[3 * p + 1] += w * s.color.y;
        rgb.data[3 * p + 2] += w * s.color.z;
        depth.data[p] += w * s.cam.z;
        T[p] *= 1.0 - a;
      }
    }
  }
  Image alpha(W, H, 1);
  for (std::size_t p = 0; p < T.size(); ++p) {
    alpha.data[p] = 1.0 - T[p];
    depth.data[p] += T[p] * kFarDepth;
  }
  tape.final_transmittance = std::move(T);
  result.image = {std::move(rgb), std::move(alpha), std::move(depth)};
  return result;
}

RenderResult render(const GaussianModel& model, const Camera& camera, const RenderSettings& settings) {
  const GaussianModel* list[] = {&model};
  return render(std::span<const GaussianModel* const>(list), camera, settings);
}

namespace {

/// Screen-space gradient accumulators of one splat.
struct SplatGrad {
  double mean[2] = {};
  double conic[3] = {};  // full symmetric matrix entries (xx, xy, yy); xy counted once
  double opacity = 0;
  Vec3 color;
  double depth = 0;
};

void backward_splat(const ProjectedSplat& s, const SplatGrad& sg, const CameraFrame& frame, const Gaussian& g,
                    Gaussian& out) {
  // dL/dSigma' = -A G_A A with A the conic and G_A the symmetric gradient.
  const double A[2][2] = {{s.conic[0], s.conic[1]}, {s.conic[1], s.conic[2]}};
  const double GA[2][2] = {{sg.conic[0], sg.conic[1]}, {sg.conic[1], sg.conic[2]}};
  double tmp[2][2] = {}, GS[2][2] = {};
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) tmp[i][j] += A[i][k] * GA[k][j];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) GS[i][j] -= tmp[i][k] * A[k][j];

  const Vec3& t = s.cam;
  const Jacobian J = perspective_jacobian(t, frame.fx, frame.fy);
  const Mat3 Sigma = g.covariance();
  const Mat3& Wr = frame.rot;
  const Mat3 V = Wr * Sigma * Wr.transposed();

  // G_V = J^T G_S J ; G_J = 2 G_S J V.
  Mat3 GV;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double acc = 0;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) acc += J.j[i][a] * GS[i][j] * J.j[j][b];
      GV(a, b) = acc;
    }
  double GJ[2][3] = {};
  for (int i = 0; i < 2; ++i)
    for (int c = 0; c < 3; ++c) {
      double acc = 0;
      for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 3; ++k) acc += GS[i][j] * J.j[j][k] * V(k, c);
      GJ[i][c] = 2 * acc;
    }

  // Camera-space mean: projection, Jacobian dependence, and depth.
  const double iz = 1.0 / t.z, iz2 = iz * iz, iz3 = iz2 * iz;
  const double fx = frame.fx, fy = frame.fy;
  Vec3 gt;
  gt.x = J.j[0][0] * sg.mean[0] + GJ[0][2] * (-fx * iz2);
  gt.y = J.j[1][1] * sg.mean[1] + GJ[1][2] * (-fy * iz2);
  gt.z = J.j[0][2] * sg.mean[0] + J.j[1][2] * sg.mean[1] + GJ[0][0] * (-fx * iz2) + GJ[0][2] * (2 * fx * t.x * iz3) +
         GJ[1][1] * (-fy * iz2) + GJ[1][2] * (2 * fy * t.y * iz3) + sg.depth;
  out.position += Wr.transposed() * gt;

  // World covariance, then Sigma = M M^T with M = R S.
  const Mat3 GSigma = Wr.transposed() * GV * Wr;
  const Quat qn = normalize(g.rotation);
  const Mat3 R = rotation_matrix(qn);
  const Vec3 sc = g.scale();
  const Mat3 M = R * Mat3::diag(sc);
  const Mat3 GM = GSigma * M * 2.0;
  const Mat3 RtGM = R.transposed() * GM;
  out.log_scale += Vec3{RtGM(0, 0) * sc.x, RtGM(1, 1) * sc.y, RtGM(2, 2) * sc.z};
  const Mat3 GR = GM * Mat3::diag(sc);

  const double w = qn.w, x = qn.x, y = qn.y, z = qn.z;
  auto gr = [&](int r, int c) { return GR(r, c); };
  const double dw = 2 * (-z * gr(0, 1) + y * gr(0, 2) + z * gr(1, 0) - x * gr(1, 2) - y * gr(2, 0) + x * gr(2, 1));
  const double dx = 2 * (y * gr(0, 1) + z * gr(0, 2) + y * gr(1, 0) - 2 * x * gr(1, 1) - w * gr(1, 2) + z * gr(2, 0) +
                         w * gr(2, 1) - 2 * x * gr(2, 2));
  const double dy = 2 * (-2 * y * gr(0, 0) + x * gr(0, 1) + w * gr(0, 2) + x * gr(1, 0) + z * gr(1, 2) -
                         w * gr(2, 0) + z * gr(2, 1) - 2 * y * gr(2, 2));
  const double dz = 2 * (-2 * z * gr(0, 0) - w * gr(0, 1) + x * gr(0, 2) + w * gr(1, 0) - 2 * z * gr(1, 1) +
                         y * gr(1, 2) + x * gr(2, 0) + y * gr(2, 1));
  const double n = norm(g.rotation);
  const double proj = qn.w * dw + qn.x * dx + qn.y * dy + qn.z * dz;
  out.rotation.w += (dw - qn.w * proj) / n;
  out.rotation.x += (dx - qn.x * proj) / n;
  out.rotation.y += (dy - qn.y * proj) / n;
  out.rotation.z += (dz - qn.z * proj) / n;

  out.opacity_logit += sg.opacity * s.opacity * (1.0 - s.opacity);
  out.color += sg.color;
}

}  // namespace

void render_backward(const RenderTape& tape, const PixelGradients& grads, std::span<GaussianModel* const> models) {
  if (!tape.recorded) throw Error("render_backward called without a recorded forward pass");
  if (models.size() != tape.models.size()) throw Error("render_backward model list differs from the forward pass");
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (models[i] != tape.models[i] || models[i]->size() != tape.model_sizes[i])
      throw Error("render_backward model list differs from the forward pass");
    if (models[i]->grads.size() != models[i]->size()) models[i]->zero_grad();
  }

  const int W = tape.camera.width, H = tape.camera.height;
  const std::size_t P = static_cast<std::size_t>(W) * H;
  auto check = [&](const Image& img, int c) {
    if (!img.data.empty() && (img.width != W || img.height != H || img.channels != c))
      throw Error("pixel gradient shape does not match the render");
    return !img.data.empty();
  };
  const bool has_rgb = check(grads.rgb, 3), has_alpha = check(grads.alpha, 1), has_depth = check(grads.depth, 1);

  const auto& Tf = tape.final_transmittance;
  std::vector<double> T(Tf);
  std::vector<double> Rc(3 * P, 0.0);
  std::vector<double> Rd(P);
  for (std::size_t p = 0; p < P; ++p) Rd[p] = kFarDepth * Tf[p];

  std::vector<SplatGrad> sgrads(tape.splats.size());
  for (std::size_t k = tape.splats.size(); k-- > 0;) {
    const auto& s = tape.splats[k];
    SplatGrad& sg = sgrads[k];
    for (int y = s.y0; y <= s.y1; ++y) {
      for (int x = s.x0; x <= s.x1; ++x) {
        const double q = s.mahalanobis2(x, y);
        const double G = footprint_weight(q);
        if (G <= 0) continue;
        const std::size_t p = static_cast<std::size_t>(y) * W + x;
        const double a = s.opacity * G;
        const double inv = 1.0 / (1.0 - a);
        const double Tk = T[p] * inv;
        const double w = a * Tk;

        double dLda = 0;
        if (has_rgb) {
          const double* gc = &grads.rgb.data[3 * p];
          dLda += gc[0] * (s.color.x * Tk - Rc[3 * p] * inv) + gc[1] * (s.color.y * Tk - Rc[3 * p + 1] * inv) +
                  gc[2] * (s.color.z * Tk - Rc[3 * p + 2] * inv);
          sg.color += Vec3{gc[0], gc[1], gc[2]} * w;
        }
        if (has_alpha) dLda += grads.alpha.data[p] * Tf[p] * inv;
        if (has_depth) {
          const double gd = grads.depth.data[p];
          dLda += gd * (s.cam.z * Tk - Rd[p] * inv);
          sg.depth += gd * w;
        }
        Rc[3 * p] += s.color.x * w;
        Rc[3 * p + 1] += s.color.y * w;
        Rc[3 * p + 2] += s.color.z * w;
        Rd[p] += s.cam.z * w;
        T[p] = Tk;

        sg.opacity += dLda * G;
        const double dLdq = dLda * s.opacity * footprint_dq(q);
        const double dx = x + 0.5 - s.u, dy = y + 0.5 - s.v;
        // q = d^T A d: dq/dmean = -2 A d, dq/dA = d d^T.
        sg.mean[0] += dLdq * -2.0 * (s.conic[0] * dx + s.conic[1] * dy);
        sg.mean[1] += dLdq * -2.0 * (s.conic[1] * dx + s.conic[2] * dy);
        sg.conic[0] += dLdq * dx * dx;
        sg.conic[1] += dLdq * dx * dy;
        sg.conic[2] += dLdq * dy * dy;
      }
    }
  }

  const CameraFrame frame(tape.camera);
  for (std::size_t k = 0; k < tape.splats.size(); ++k) {
    const auto& s = tape.splats[k];
    GaussianModel& m = *models[s.model];
    backward_splat(s, sgrads[k], frame, m.gaussians[s.index], m.grads[s.index]);
  }
}

void render_backward(const RenderTape& tape, const PixelGradients& grads, GaussianModel& model) {
  GaussianModel* list[] = {&model};
  render_backward(tape, grads, std::span<GaussianModel* const>(list));
}

}  // namespace grala
