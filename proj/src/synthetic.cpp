#include "hfz/data.hpp"

#include "hfz/random.hpp"

#include <algorithm>
#include <cmath>

namespace hfz {
namespace {

// Actuation follows a slow squeeze (5% -> 90% torque), a short hold and a
// release back to 5%. `u` is normalized time in [0, 1].
double actuation(double u) {
  constexpr double lo = 0.05, hi = 0.9;
  if (u < 0.4) return lo + (hi - lo) * (u / 0.4);
  if (u < 0.6) return hi;
  return hi - (hi - lo) * ((u - 0.6) / 0.4);
}

constexpr double kFreeClosure = 90.0;  // degrees reached at full actuation with no object

struct GraspLatent {
  double stiffness;
  double size;
  double joint_offset;     // per-grasp kinesthetic calibration drift, degrees
  double placement;        // lateral offset between the fingers, degrees of asymmetry
  double contact_shift;    // finger slip moving the contact angle, degrees
  double tactile_gain;     // per-grasp sensor gain
  double center_y, center_x, angle;  // contact patch placement on the sensor
};

double contact_angle(double size) { return 70.0 * (1.0 - 0.6 * size); }

// Normalized squeeze force once the fingers touch the object.
double squeeze_force(double u, double size) {
  return std::max(0.0, kFreeClosure * actuation(u) - contact_angle(size)) / kFreeClosure;
}

Eigen::MatrixXd kinesthetic_trace(const GraspLatent& g, Index samples, double sensor_noise,
                                  Rng& rng) {
  Eigen::MatrixXd out(samples, kJointCount);
  const double theta_c = contact_angle(g.size) + g.contact_shift;
  const double compliance = 0.6 * (1.0 - g.stiffness);
  for (Index k = 0; k < samples; ++k) {
    const double u = samples > 1 ? static_cast<double>(k) / static_cast<double>(samples - 1) : 0.5;
    const double free = kFreeClosure * actuation(u);
    const double pressed = free - theta_c;
    const double actuator = pressed <= 0.0 ? free : theta_c + compliance * pressed;
    const double distal = pressed <= 0.0 ? 0.0 : 25.0 * g.size * (0.4 + g.stiffness) * pressed / kFreeClosure;
    const double base = actuator + g.joint_offset;
    out(k, 0) = base + g.placement + sensor_noise * rng.normal();
    out(k, 1) = base - g.placement + sensor_noise * rng.normal();
    out(k, 2) = distal * (1.0 + 0.02 * g.placement) + g.joint_offset * 0.3 + sensor_noise * rng.normal();
    out(k, 3) = distal * (1.0 - 0.02 * g.placement) + g.joint_offset * 0.3 + sensor_noise * rng.normal();
  }
  return out;
}

TactileSequence tactile_trace(const GraspLatent& g, const ObjectProfile& profile, Index frames,
                              Index height, Index width, double pixel_noise, Rng& rng) {
  TactileSequence seq{height, width, Eigen::MatrixXd::Zero(frames, height * width)};
  const double scale = static_cast<double>(height) / 28.0;
  const double ca = std::cos(g.angle), sa = std::sin(g.angle);
  // Inclusions sit at fixed offsets inside the contact patch.
  const double spot_offsets[3][2] = {{-0.45, -0.35}, {0.4, 0.3}, {0.0, 0.55}};
  for (Index t = 0; t < frames; ++t) {
    const double u = frames > 1 ? static_cast<double>(t) / static_cast<double>(frames - 1) : 0.5;
    const double force = squeeze_force(u, g.size);
    const double spread = 1.0 + (1.0 - g.stiffness) * force * 2.0;
    const double ry = scale * (2.0 + 6.0 * g.size) * std::sqrt(spread) * (force > 0 ? 1.0 : 0.0);
    const double rx = ry * (1.2 + 0.8 * g.size);
    const double peak = g.tactile_gain * 220.0 * force * (0.25 + g.stiffness);
    for (Index y = 0; y < height; ++y) {
      for (Index x = 0; x < width; ++x) {
        double value = 0.0;
        if (force > 0.0) {
          const double dy = static_cast<double>(y) - g.center_y;
          const double dx = static_cast<double>(x) - g.center_x;
          const double ly = ca * dy - sa * dx;
          const double lx = sa * dy + ca * dx;
          value = peak * std::exp(-0.5 * (ly * ly / (ry * ry) + lx * lx / (rx * rx)));
          for (int s = 0; s < profile.inclusions && s < 3; ++s) {
            const double oy = spot_offsets[s][0] * ry, ox = spot_offsets[s][1] * rx;
            const double sy = ly - oy, sx = lx - ox;
            const double radius = 1.2 * scale;
            value += g.tactile_gain * 160.0 * force *
                     std::exp(-0.5 * (sy * sy + sx * sx) / (radius * radius));
          }
        }
        value += pixel_noise * rng.normal();
        seq.frames(t, y * width + x) = std::max(0.0, value);
      }
    }
  }
  return seq;
}

void validate(const SyntheticConfig& c) {
  if (c.classes < 2 || c.grasps_per_class < 1 || c.tactile_frames < 1 ||
      c.kinesthetic_samples < 1 || c.height < 3 || c.width < 3 || !(c.noise >= 0.0) ||
      !std::isfinite(c.noise)) {
    throw std::invalid_argument(
        "gen_synthetic: need classes >= 2, grasps >= 1, frames/samples >= 1, grid >= 3x3 and "
        "finite noise >= 0");
  }
  if (!c.profiles.empty()) {
    if (static_cast<Index>(c.profiles.size()) != c.classes) {
      throw std::invalid_argument("gen_synthetic: one profile per class is required");
    }
    for (const auto& p : c.profiles) {
      if (!(p.stiffness > 0.0 && p.stiffness <= 1.0) || !(p.size > 0.0 && p.size <= 1.0) ||
          p.inclusions < 0 || p.inclusions > 3) {
        throw std::invalid_argument(
            "gen_synthetic: profiles need stiffness and size in (0, 1] and 0-3 inclusions");
      }
    }
  }
}

}  // namespace

std::vector<ObjectProfile> synthetic_profiles(const SyntheticConfig& config) {
  validate(config);
  if (!config.profiles.empty()) return config.profiles;
  Rng rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<ObjectProfile> out;
  for (Index c = 0; c < config.classes; ++c) {
    ObjectProfile p;
    p.stiffness = rng.uniform(0.1, 1.0);
    p.size = rng.uniform(0.2, 1.0);
    p.inclusions = static_cast<int>(rng.below(3));
    out.push_back(p);
  }
  return out;
}

Dataset gen_synthetic(const SyntheticConfig& config) {
  const std::vector<ObjectProfile> profiles = synthetic_profiles(config);
  Dataset ds;
  ds.tactile_height = config.height;
  ds.tactile_width = config.width;
  ds.tactile_frames = config.tactile_frames;
  ds.kinesthetic_samples = config.kinesthetic_samples;
  for (Index c = 0; c < config.classes; ++c) ds.class_names.push_back("object_" + std::to_string(c));

  Rng rng(config.seed);
  const double n = config.noise;
  const double cy = 0.5 * static_cast<double>(config.height - 1);
  const double cx = 0.5 * static_cast<double>(config.width - 1);
  const double scale = static_cast<double>(config.height) / 28.0;
  for (Index c = 0; c < config.classes; ++c) {
    const ObjectProfile& profile = profiles[c];
    for (Index k = 0; k < config.grasps_per_class; ++k) {
      GraspLatent g;
      g.stiffness = std::clamp(profile.stiffness + 0.01 * n * rng.normal(), 0.02, 1.0);
      g.size = std::clamp(profile.size + 0.01 * n * rng.normal(), 0.05, 1.0);
      g.joint_offset = 2.5 * n * rng.normal();
      g.placement = 1.5 * n * rng.normal();
      g.contact_shift = 3.0 * n * rng.normal();
      g.tactile_gain = std::max(0.2, 1.0 + 0.12 * n * rng.normal());
      g.center_y = cy + 1.5 * scale * n * rng.normal();
      g.center_x = cx + 3.0 * scale * n * rng.normal();
      g.angle = 0.3 * n * rng.normal();

      Grasp grasp;
      grasp.grasp_id = ds.class_names[c] + "_g" + std::to_string(k);
      grasp.label = c;
      grasp.kinesthetic.samples =
          kinesthetic_trace(g, config.kinesthetic_samples, 0.4 * n, rng);
      grasp.tactile = tactile_trace(g, profile, config.tactile_frames, config.height,
                                    config.width, 4.0 * n, rng);
      ds.grasps.push_back(std::move(grasp));
    }
  }
  return ds;
}

}  // namespace hfz
