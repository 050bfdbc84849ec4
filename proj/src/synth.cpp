#include "dgecn/synth.hpp"

#include "dgecn/error.hpp"
#include "dgecn/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace dgecn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double clamp_into(double x, std::uint32_t extent) {
  return std::clamp(x, 0.0, std::nextafter(static_cast<double>(extent), 0.0));
}

double draw_in(std::mt19937_64& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Rotation uniform_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double u1 = u01(rng), u2 = u01(rng), u3 = u01(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return Rotation::from_quaternion(b * std::cos(t3), a * std::sin(t2), a * std::cos(t2), b * std::sin(t3));
}

}  // namespace

bool Correspondence::has_depth() const { return std::isfinite(depth) && depth > 0.0; }

void CorrespondenceSet::validate() const {
  if (keypoints.size() * hypotheses_per_keypoint != hypotheses.size())
    fail(ErrorKind::DimensionMismatch, "correspondence count is not n * m");
  for (std::size_t i = 0; i < hypotheses.size(); ++i)
    if (hypotheses[i].keypoint_index != i / std::max<std::size_t>(1, hypotheses_per_keypoint))
      fail(ErrorKind::DimensionMismatch, "hypothesis stored under the wrong keypoint");
}

CameraIntrinsics default_camera() { return CameraIntrinsics{800.0, 800.0, 320.0, 240.0, 640, 480}; }

MeshModel make_sphere_model(double radius, std::size_t count, std::uint64_t rng_seed) {
  if (!(radius > 0.0) || !std::isfinite(radius)) fail(ErrorKind::InvalidRadius, "sphere radius must be positive");
  if (count < 4) fail(ErrorKind::TooFewVertices, "sphere needs at least 4 points");
  std::mt19937_64 rng(rng_seed);
  const Rotation r = uniform_rotation(rng);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Point3> pts;
  pts.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * static_cast<double>(i) + 1.0) / static_cast<double>(count);
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    Point3 p = r * Point3(rho * std::cos(phi), rho * std::sin(phi), z);
    pts.push_back(radius * p.normalized());
  }
  return MeshModel(std::move(pts));
}

namespace {

// Pixel extent of a sphere along one image axis. Only the (axis, z) components
// matter for that coordinate, and the sphere's shadow on that plane is a disc
// of the same radius, so the extremes are the two tangent rays.
bool silhouette_inside(double c_axis, double c_z, double radius, double focal, double principal, double size) {
  const double rho = std::hypot(c_axis, c_z);
  if (!(rho > radius)) return false;
  const double centre = std::atan2(c_axis, c_z);
  const double half = std::asin(radius / rho);
  const double pi_2 = std::acos(0.0);
  if (centre + half >= pi_2 || centre - half <= -pi_2) return false;
  return focal * std::tan(centre - half) + principal >= 0.0 && focal * std::tan(centre + half) + principal < size;
}

}  // namespace

Pose sample_pose(std::mt19937_64& rng, double z_min, double z_max, const CameraIntrinsics& intr, double object_radius) {
  if (!(z_min > 0.0) || !(z_min < z_max)) fail(ErrorKind::InvalidConfig, "pose z range must satisfy 0 < z_min < z_max");
  if (!(object_radius >= 0.0) || !(object_radius < z_min))
    fail(ErrorKind::InvalidConfig, "object radius must lie in [0, z_min)");
  const Rotation r = uniform_rotation(rng);
  std::uniform_real_distribution<double> du(0.1 * intr.width, 0.9 * intr.width);
  std::uniform_real_distribution<double> dv(0.1 * intr.height, 0.9 * intr.height);
  std::uniform_real_distribution<double> dz(z_min, z_max);
  // Rejection keeps the whole silhouette in frame; the principal point is the
  // last resort when no draw fits.
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double z = dz(rng);
    const Point3 c = backproject(intr, Point2(du(rng), dv(rng)), z);
    if (object_radius == 0.0 ||
        (silhouette_inside(c.x(), c.z(), object_radius, intr.focal_x, intr.principal_x, intr.width) &&
         silhouette_inside(c.y(), c.z(), object_radius, intr.focal_y, intr.principal_y, intr.height)))
      return Pose(r, c);
  }
  return Pose(r, Eigen::Vector3d(0.0, 0.0, z_max));
}

Eigen::Vector3d gradient_background_rgb(const Point2& pixel, const CameraIntrinsics& intr) {
  return {pixel.x() / intr.width, pixel.y() / intr.height, 0.5};
}

double sphere_depth_at(const Point2& pixel, const Eigen::Vector3d& center, double radius, const CameraIntrinsics& intr) {
  const Eigen::Vector3d d((pixel.x() - intr.principal_x) / intr.focal_x, (pixel.y() - intr.principal_y) / intr.focal_y,
                          1.0);
  const double dd = d.squaredNorm();
  const double dc = d.dot(center);
  const double disc = dc * dc - dd * (center.squaredNorm() - radius * radius);
  if (disc < 0.0) return std::numeric_limits<double>::quiet_NaN();
  const double s = (dc - std::sqrt(disc)) / dd;
  return s > 0.0 ? s : std::numeric_limits<double>::quiet_NaN();
}

DepthMap render_sphere_depth(const Eigen::Vector3d& center, double radius, const CameraIntrinsics& intr) {
  if (!(center.z() > radius)) fail(ErrorKind::SphereBehindCamera, "sphere must lie in front of the camera");
  DepthMap map(intr.width, intr.height);
  for (std::uint32_t v = 0; v < intr.height; ++v)
    for (std::uint32_t u = 0; u < intr.width; ++u) {
      const double d = sphere_depth_at(Point2(u, v), center, radius, intr);
      if (std::isfinite(d)) map.set(u, v, d);
    }
  return map;
}

DepthMap render_depth(const MeshModel& /*model*/, const Pose& pose, const CameraIntrinsics& intr, double sphere_radius) {
  return render_sphere_depth(pose.translation, sphere_radius, intr);
}

CorrespondenceSet generate_correspondences(const KeypointSet& keypoints, const Pose& pose, const CameraIntrinsics& intr,
                                           const CorrespondenceOptions& options, std::mt19937_64& rng) {
  if (!(options.sigma >= 0.0) || !std::isfinite(options.sigma)) fail(ErrorKind::InvalidSigma, "sigma must be >= 0");
  if (!(options.outlier_rate >= 0.0) || !(options.outlier_rate < 1.0))
    fail(ErrorKind::InvalidRate, "outlier rate must lie in [0, 1)");
  if (options.hypotheses_per_keypoint == 0 || keypoints.size() == 0)
    fail(ErrorKind::InvalidCount, "need at least one keypoint and one hypothesis");

  const std::size_t n = keypoints.size();
  const std::size_t m = options.hypotheses_per_keypoint;
  const std::size_t total = n * m;
  const auto outliers = static_cast<std::size_t>(std::llround(options.outlier_rate * static_cast<double>(total)));

  // Partial Fisher-Yates: the first `outliers` slots are a uniform draw without replacement.
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < outliers; ++i) {
    const std::size_t j = std::uniform_int_distribution<std::size_t>(i, total - 1)(rng);
    std::swap(order[i], order[j]);
  }
  std::vector<bool> is_outlier(total, false);
  for (std::size_t i = 0; i < outliers; ++i) is_outlier[order[i]] = true;

  std::optional<DepthMap> depth_map;
  if (options.kfa_k > 0) depth_map = render_sphere_depth(pose.translation, options.sphere_radius, intr);

  CorrespondenceSet out;
  out.keypoints = keypoints;
  out.hypotheses_per_keypoint = m;
  out.intrinsics = intr;
  out.hypotheses.resize(total);

  std::normal_distribution<double> noise(0.0, options.sigma > 0.0 ? std::sqrt(options.sigma) : 1.0);
  std::uniform_real_distribution<double> ru(0.0, static_cast<double>(intr.width));
  std::uniform_real_distribution<double> rv(0.0, static_cast<double>(intr.height));
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 exact = project(intr, transform_point(pose, keypoints.points[i]));
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t idx = i * m + j;
      Correspondence& c = out.hypotheses[idx];
      c.keypoint_index = i;
      c.is_outlier_gt = is_outlier[idx];
      Point2 px;
      if (c.is_outlier_gt) {
        px.x() = ru(rng);
        px.y() = rv(rng);
      } else if (options.sigma > 0.0) {
        px.x() = exact.x() + noise(rng);
        px.y() = exact.y() + noise(rng);
      } else {
        px = exact;
      }
      c.pixel = Point2(clamp_into(px.x(), intr.width), clamp_into(px.y(), intr.height));
      c.rgb = gradient_background_rgb(c.pixel, intr);
      c.depth = sphere_depth_at(c.pixel, pose.translation, options.sphere_radius, intr);
      if (depth_map) {
        try {
          c.kfa_input = kfa_gather(*depth_map, c.pixel, options.kfa_k, options.kfa_window_radius);
        } catch (const Error&) {
          c.kfa_input.assign(options.kfa_k, 0.0);
        }
      }
    }
  }
  return out;
}

void DatasetConfig::validate() const {
  auto check_split = [](const SplitConfig& s, const char* name) {
    if (s.size == 0) fail(ErrorKind::InvalidConfig, std::string(name) + " split size must be > 0");
    if (!(s.sigma_min >= 0.0) || !(s.sigma_max <= 15.0) || s.sigma_min > s.sigma_max)
      fail(ErrorKind::InvalidSigma, std::string(name) + " sigma range must lie within [0,15]");
    if (!(s.rate_min >= 0.0) || !(s.rate_max < 1.0) || s.rate_min > s.rate_max)
      fail(ErrorKind::InvalidRate, std::string(name) + " outlier rates must lie within [0,1)");
  };
  check_split(train, "train");
  check_split(test, "test");
  if (!(sphere_radius > 0.0)) fail(ErrorKind::InvalidRadius, "sphere radius must be positive");
  if (sphere_points < 4) fail(ErrorKind::TooFewVertices, "sphere needs at least 4 points");
  if (keypoints < 1 || keypoints > sphere_points) fail(ErrorKind::InvalidCount, "keypoint count must be in [1, sphere points]");
  if (hypotheses_per_keypoint < 1) fail(ErrorKind::InvalidCount, "need at least one hypothesis per keypoint");
  if (!(z_min > sphere_radius) || !(z_min < z_max)) fail(ErrorKind::InvalidConfig, "pose z range must satisfy radius < z_min < z_max");
  camera.validate();
}

std::uint64_t sample_seed(std::uint64_t seed, Split split, std::size_t index) {
  return splitmix64(splitmix64(seed ^ static_cast<std::uint64_t>(split)) + static_cast<std::uint64_t>(index));
}

SceneModel make_scene_model(const DatasetConfig& config) {
  auto mesh = std::make_shared<const MeshModel>(make_sphere_model(config.sphere_radius, config.sphere_points, config.mesh_seed));
  KeypointSet kps = fps_select(*mesh, config.keypoints, centroid_seed(*mesh));
  return {std::move(mesh), std::move(kps)};
}

SyntheticSample generate_sample(const DatasetConfig& config, const SceneModel& scene, const SplitConfig& split,
                                std::uint64_t sub_seed) {
  std::mt19937_64 rng(sub_seed);
  SyntheticSample s;
  s.seed = sub_seed;
  s.model = scene.mesh;
  s.gt_pose = sample_pose(rng, config.z_min, config.z_max, config.camera, config.sphere_radius);
  s.sigma = draw_in(rng, split.sigma_min, split.sigma_max);
  s.outlier_rate = draw_in(rng, split.rate_min, split.rate_max);
  CorrespondenceOptions opt;
  opt.hypotheses_per_keypoint = config.hypotheses_per_keypoint;
  opt.sigma = s.sigma;
  opt.outlier_rate = s.outlier_rate;
  opt.sphere_radius = config.sphere_radius;
  opt.kfa_k = config.kfa_k;
  opt.kfa_window_radius = config.kfa_window_radius;
  s.correspondences = generate_correspondences(scene.keypoints, s.gt_pose, config.camera, opt, rng);
  if (config.keep_depth_maps) s.depth_map = render_depth(*scene.mesh, s.gt_pose, config.camera, config.sphere_radius);
  return s;
}

std::vector<SyntheticSample> generate_split(const DatasetConfig& config, const SceneModel& scene, Split split,
                                            const SplitConfig& split_config, std::uint64_t rng_seed) {
  std::vector<SyntheticSample> out(split_config.size);
  parallel_for(split_config.size, [&](std::size_t i) {
    out[i] = generate_sample(config, scene, split_config, sample_seed(rng_seed, split, i));
  });
  return out;
}

Dataset generate_dataset(const DatasetConfig& config, std::uint64_t rng_seed) {
  config.validate();
  Dataset d;
  d.scene = make_scene_model(config);
  d.train = generate_split(config, d.scene, Split::Train, config.train, rng_seed);
  d.test = generate_split(config, d.scene, Split::Test, config.test, rng_seed);
  return d;
}

}  // namespace dgecn
