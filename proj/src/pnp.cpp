#include "dgecn/pnp.hpp"

#include "dgecn/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>

namespace dgecn {

namespace {

struct ControlFrame {
  int count = 4;                            // 3 for planar clouds
  std::vector<Eigen::Vector3d> world;       // control points, object frame
  Eigen::MatrixXd alphas;                   // n x count barycentric weights
};

ControlFrame choose_control_points(std::span<const Point3> pts) {
  const auto n = static_cast<double>(pts.size());
  Eigen::Vector3d c0 = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c0 += p;
  c0 /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - c0) * (p - c0).transpose();
  cov /= n;

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  // Eigen returns ascending eigenvalues; axes are taken largest first.
  const Eigen::Vector3d lam = eig.eigenvalues().reverse();
  Eigen::Matrix3d axes = eig.eigenvectors().rowwise().reverse();
  if (!(lam(0) > 0.0) || lam(1) <= 1e-12 * lam(0))
    fail(ErrorKind::DegenerateConfiguration, "3D points are collinear or coincident");

  ControlFrame f;
  f.count = lam(2) <= 1e-10 * lam(0) ? 3 : 4;
  f.world.push_back(c0);
  for (int k = 0; k + 1 < f.count; ++k) f.world.push_back(c0 + std::sqrt(lam(k)) * axes.col(k));

  // The axes are orthogonal, so barycentric weights are plain projections.
  f.alphas.resize(static_cast<Eigen::Index>(pts.size()), f.count);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const Eigen::Vector3d d = pts[i] - c0;
    double rest = 1.0;
    for (int k = 1; k < f.count; ++k) {
      const Eigen::Vector3d axis = f.world[static_cast<std::size_t>(k)] - c0;
      const double a = d.dot(axis) / axis.squaredNorm();
      f.alphas(static_cast<Eigen::Index>(i), k) = a;
      rest -= a;
    }
    f.alphas(static_cast<Eigen::Index>(i), 0) = rest;
  }
  return f;
}

struct DistanceSystem {
  std::vector<std::pair<int, int>> pairs;
  Eigen::VectorXd world_sq;  // squared control-point distances in the object frame
};

DistanceSystem distance_system(const ControlFrame& f) {
  DistanceSystem s;
  for (int a = 0; a < f.count; ++a)
    for (int b = a + 1; b < f.count; ++b) s.pairs.emplace_back(a, b);
  s.world_sq.resize(static_cast<Eigen::Index>(s.pairs.size()));
  for (std::size_t p = 0; p < s.pairs.size(); ++p)
    s.world_sq(static_cast<Eigen::Index>(p)) =
        (f.world[static_cast<std::size_t>(s.pairs[p].first)] - f.world[static_cast<std::size_t>(s.pairs[p].second)])
            .squaredNorm();
  return s;
}

// Difference of control points a and b inside a stacked 3c-vector.
Eigen::Vector3d pair_delta(const Eigen::VectorXd& v, std::pair<int, int> ab) {
  return v.segment<3>(3 * ab.first) - v.segment<3>(3 * ab.second);
}

Eigen::VectorXd combine(const std::vector<Eigen::VectorXd>& basis, const Eigen::VectorXd& beta) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(basis.front().size());
  for (Eigen::Index k = 0; k < beta.size(); ++k) x += beta(k) * basis[static_cast<std::size_t>(k)];
  return x;
}

std::optional<Eigen::VectorXd> initial_betas(const std::vector<Eigen::VectorXd>& basis, const DistanceSystem& ds,
                                             int n_basis) {
  const auto rows = static_cast<Eigen::Index>(ds.pairs.size());
  if (n_basis == 1) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index p = 0; p < rows; ++p) {
      const double dc = pair_delta(basis[0], ds.pairs[static_cast<std::size_t>(p)]).norm();
      num += dc * std::sqrt(ds.world_sq(p));
      den += dc * dc;
    }
    if (!(den > 0.0)) return std::nullopt;
    Eigen::VectorXd b(1);
    b << num / den;
    return b;
  }

  // Linearized products b = [beta_i beta_j]_{i <= j}.
  const int unknowns = n_basis * (n_basis + 1) / 2;
  if (rows < unknowns) return std::nullopt;
  Eigen::MatrixXd l(rows, unknowns);
  for (Eigen::Index p = 0; p < rows; ++p) {
    int col = 0;
    for (int i = 0; i < n_basis; ++i)
      for (int j = i; j < n_basis; ++j) {
        const auto pr = ds.pairs[static_cast<std::size_t>(p)];
        const double d = pair_delta(basis[static_cast<std::size_t>(i)], pr).dot(pair_delta(basis[static_cast<std::size_t>(j)], pr));
        l(p, col++) = (i == j) ? d : 2.0 * d;
      }
  }
  const Eigen::VectorXd prod = l.colPivHouseholderQr().solve(ds.world_sq);
  if (!prod.allFinite()) return std::nullopt;

  Eigen::VectorXd beta(n_basis);
  const double b11 = std::abs(prod(0));
  beta(0) = std::sqrt(b11);
  if (!(beta(0) > 0.0)) return std::nullopt;
  if (n_basis == 2) {
    beta(1) = std::sqrt(std::abs(prod(2))) * (prod(1) < 0.0 ? -1.0 : 1.0);
  } else {
    beta(1) = prod(1) / beta(0);
    beta(2) = prod(2) / beta(0);
  }
  return beta;
}

void gauss_newton(const std::vector<Eigen::VectorXd>& basis, const DistanceSystem& ds, Eigen::VectorXd& beta) {
  const auto rows = static_cast<Eigen::Index>(ds.pairs.size());
  const Eigen::Index nb = beta.size();
  for (int iter = 0; iter < 10; ++iter) {
    const Eigen::VectorXd x = combine(basis, beta);
    Eigen::MatrixXd jac(rows, nb);
    Eigen::VectorXd r(rows);
    for (Eigen::Index p = 0; p < rows; ++p) {
      const auto pr = ds.pairs[static_cast<std::size_t>(p)];
      const Eigen::Vector3d d = pair_delta(x, pr);
      r(p) = d.squaredNorm() - ds.world_sq(p);
      for (Eigen::Index k = 0; k < nb; ++k) jac(p, k) = 2.0 * d.dot(pair_delta(basis[static_cast<std::size_t>(k)], pr));
    }
    const Eigen::VectorXd step = jac.colPivHouseholderQr().solve(-r);
    if (!step.allFinite()) return;
    beta += step;
    if (step.norm() <= 1e-15 * std::max(1.0, beta.norm())) return;
  }
}

std::optional<Pose> procrustes(std::span<const Point3> world, const std::vector<Eigen::Vector3d>& camera) {
  const auto n = static_cast<double>(world.size());
  Eigen::Vector3d cw = Eigen::Vector3d::Zero(), cc = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < world.size(); ++i) {
    cw += world[i];
    cc += camera[i];
  }
  cw /= n;
  cc /= n;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < world.size(); ++i) h += (camera[i] - cc) * (world[i] - cw).transpose();
  if (!h.allFinite()) return std::nullopt;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) *= -1.0;
  const Eigen::Matrix3d r = u * v.transpose();
  if (!is_rotation(r, 1e-9)) return std::nullopt;
  const Rotation rot = Rotation::from_matrix(r);
  return Pose(rot, cc - rot * cw);
}

double squared_reprojection(const Pose& pose, std::span<const Point3> world, std::span<const Point2> image,
                            const CameraIntrinsics& intr) {
  double s = 0.0;
  for (std::size_t i = 0; i < world.size(); ++i) {
    const Point3 c = transform_point(pose, world[i]);
    if (!(c.z() > 1e-9)) return std::numeric_limits<double>::infinity();
    s += (project(intr, c) - image[i]).squaredNorm();
  }
  return s;
}

// Levenberg-Marquardt on the pixel residuals, rotation updated on the left by
// exp([w]x). Only steps that lower the squared error are taken, so the result
// is never worse than the closed-form start.
Pose polish_reprojection(Pose pose, std::span<const Point3> world, std::span<const Point2> image,
                         const CameraIntrinsics& intr) {
  double cost = squared_reprojection(pose, world, image, intr);
  if (!std::isfinite(cost)) return pose;
  double damping = 1e-3;
  for (int it = 0; it < 20 && cost > 0.0; ++it) {
    Eigen::Matrix<double, 6, 6> jtj = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> jtr = Eigen::Matrix<double, 6, 1>::Zero();
    for (std::size_t i = 0; i < world.size(); ++i) {
      const Eigen::Vector3d rp = pose.rotation.matrix() * world[i];
      const Eigen::Vector3d c = rp + pose.translation;
      const double iz = 1.0 / c.z();
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << intr.focal_x * iz, 0.0, -intr.focal_x * c.x() * iz * iz,
               0.0, intr.focal_y * iz, -intr.focal_y * c.y() * iz * iz;
      Eigen::Matrix3d skew;
      skew << 0.0, rp.z(), -rp.y(), -rp.z(), 0.0, rp.x(), rp.y(), -rp.x(), 0.0;  // d(rp)/dw = -[rp]x
      Eigen::Matrix<double, 2, 6> j;
      j.leftCols<3>() = dproj * skew;
      j.rightCols<3>() = dproj;
      const Eigen::Vector2d r = project(intr, c) - image[i];
      jtj += j.transpose() * j;
      jtr += j.transpose() * r;
    }
    bool improved = false;
    while (damping < 1e8) {
      Eigen::Matrix<double, 6, 6> a = jtj;
      a.diagonal() *= 1.0 + damping;
      const Eigen::Matrix<double, 6, 1> step = -a.ldlt().solve(jtr);
      if (!step.allFinite()) break;
      const Eigen::Vector3d w = step.head<3>();
      const double angle = w.norm();
      const Eigen::Matrix3d dr =
          angle > 0.0 ? Eigen::AngleAxisd(angle, w / angle).toRotationMatrix() : Eigen::Matrix3d::Identity();
      Eigen::Matrix3d rn = dr * pose.rotation.matrix();
      const Eigen::JacobiSVD<Eigen::Matrix3d> svd(rn, Eigen::ComputeFullU | Eigen::ComputeFullV);
      rn = svd.matrixU() * svd.matrixV().transpose();
      const Pose trial(Rotation::from_matrix(rn), pose.translation + step.tail<3>());
      const double c2 = squared_reprojection(trial, world, image, intr);
      if (c2 < cost) {
        const bool converged = cost - c2 <= 1e-15 * cost;
        pose = trial;
        cost = c2;
        damping = std::max(damping * 0.1, 1e-12);
        improved = !converged;
        break;
      }
      damping *= 10.0;
    }
    if (!improved) break;
  }
  return pose;
}

}  // namespace

double reprojection_error(const Pose& pose, const Point3& p, const Point2& px, const CameraIntrinsics& intr) {
  const Point3 c = transform_point(pose, p);
  if (!(c.z() > 1e-9)) return kBehindCameraPenalty;
  return (project(intr, c) - px).norm();
}

double mean_reprojection_error(const Pose& pose, std::span<const Point3> points3d, std::span<const Point2> points2d,
                               const CameraIntrinsics& intr) {
  double s = 0.0;
  for (std::size_t i = 0; i < points3d.size(); ++i) s += reprojection_error(pose, points3d[i], points2d[i], intr);
  return s / static_cast<double>(points3d.size());
}

Pose epnp_solve(std::span<const Point3> points3d, std::span<const Point2> points2d, const CameraIntrinsics& intr) {
  if (points3d.size() != points2d.size()) fail(ErrorKind::TooFewPoints, "3D and 2D point counts differ");
  if (points3d.size() < 4) fail(ErrorKind::TooFewPoints, "EPnP needs at least 4 correspondences");
  for (std::size_t i = 0; i < points3d.size(); ++i)
    if (!points3d[i].allFinite() || !points2d[i].allFinite())
      fail(ErrorKind::DegenerateConfiguration, "non-finite correspondence");

  const ControlFrame frame = choose_control_points(points3d);
  const int c = frame.count;
  const auto n = static_cast<Eigen::Index>(points3d.size());

  // Projection constraints in normalized image coordinates.
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2 * n, 3 * c);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Point2& px = points2d[static_cast<std::size_t>(i)];
    const double x = (px.x() - intr.principal_x) / intr.focal_x;
    const double y = (px.y() - intr.principal_y) / intr.focal_y;
    for (int j = 0; j < c; ++j) {
      const double a = frame.alphas(i, j);
      m(2 * i, 3 * j) = a;
      m(2 * i, 3 * j + 2) = -a * x;
      m(2 * i + 1, 3 * j + 1) = a;
      m(2 * i + 1, 3 * j + 2) = -a * y;
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::MatrixXd& v = svd.matrixV();
  const int max_basis = (c == 4) ? 3 : 2;
  std::vector<Eigen::VectorXd> basis;
  for (int k = 0; k < max_basis + 1; ++k) basis.push_back(v.col(v.cols() - 1 - k));

  const DistanceSystem ds = distance_system(frame);

  std::optional<Pose> best;
  double best_err = std::numeric_limits<double>::infinity();
  auto try_case = [&](const std::vector<Eigen::VectorXd>& sub, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd x = combine(sub, beta);
    if (!x.allFinite()) return;
    std::vector<Eigen::Vector3d> cam(points3d.size());
    double mean_z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Vector3d p = Eigen::Vector3d::Zero();
      for (int j = 0; j < c; ++j) p += frame.alphas(i, j) * x.segment<3>(3 * j);
      cam[static_cast<std::size_t>(i)] = p;
      mean_z += p.z();
    }
    // The null-space combination is defined up to sign; the object sits in front.
    if (mean_z < 0.0)
      for (auto& p : cam) p = -p;

    const auto pose = procrustes(points3d, cam);
    if (!pose) return;
    const double err = mean_reprojection_error(*pose, points3d, points2d, intr);
    if (err < best_err) {
      best_err = err;
      best = pose;
    }
  };

  std::vector<Eigen::VectorXd> refined;
  for (int nb = 1; nb <= max_basis; ++nb) {
    const std::vector<Eigen::VectorXd> sub(basis.begin(), basis.begin() + nb);
    auto beta = initial_betas(sub, ds, nb);
    if (!beta) continue;
    gauss_newton(sub, ds, *beta);
    refined.push_back(*beta);
    try_case(sub, *beta);
  }
  // With four or five correspondences the null space has four dimensions and
  // none of the cases above can reach the solution. The fourth vector is
  // then added and every earlier estimate, zero-padded, seeds Gauss-Newton.
  if (c == 4 && points3d.size() < 6) {
    for (const Eigen::VectorXd& seed : refined) {
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(4);
      beta.head(seed.size()) = seed;
      gauss_newton(basis, ds, beta);
      try_case(basis, beta);
    }
  }
  if (!best) fail(ErrorKind::DegenerateConfiguration, "no EPnP case produced a valid pose");
  return polish_reprojection(*best, points3d, points2d, intr);
}

void RansacConfig::validate() const {
  if (max_iterations < 1) fail(ErrorKind::InvalidConfig, "RANSAC needs at least one iteration");
  if (!(inlier_threshold > 0.0)) fail(ErrorKind::InvalidConfig, "RANSAC inlier threshold must be positive");
  if (min_sample < 4) fail(ErrorKind::InvalidConfig, "RANSAC minimal sample is 4 for EPnP");
  if (!(confidence > 0.0) || !(confidence < 1.0)) fail(ErrorKind::InvalidConfig, "RANSAC confidence must be in (0,1)");
}

std::size_t RansacResult::inlier_count() const {
  return static_cast<std::size_t>(std::count(inlier_mask.begin(), inlier_mask.end(), true));
}

RansacResult ransac_pnp(std::span<const Point3> points3d, std::span<const Point2> points2d, const CameraIntrinsics& intr,
                        const RansacConfig& config) {
  config.validate();
  if (points3d.size() != points2d.size()) fail(ErrorKind::TooFewPoints, "3D and 2D point counts differ");
  const std::size_t total = points3d.size();
  if (total < config.min_sample) fail(ErrorKind::TooFewPoints, "fewer correspondences than the minimal sample");

  std::mt19937_64 rng(config.rng_seed);
  std::vector<std::size_t> pool(total);
  std::vector<Point3> s3(config.min_sample);
  std::vector<Point2> s2(config.min_sample);

  auto mask_for = [&](const Pose& pose, std::vector<bool>& mask) {
    mask.assign(total, false);
    std::size_t count = 0;
    for (std::size_t i = 0; i < total; ++i)
      if (reprojection_error(pose, points3d[i], points2d[i], intr) < config.inlier_threshold) {
        mask[i] = true;
        ++count;
      }
    return count;
  };

  std::optional<Pose> best_pose;
  std::vector<bool> best_mask, mask;
  std::size_t best_count = 0;
  std::size_t limit = config.max_iterations;
  std::size_t it = 0;
  for (; it < limit; ++it) {
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    for (std::size_t i = 0; i < config.min_sample; ++i) {
      const std::size_t j = std::uniform_int_distribution<std::size_t>(i, total - 1)(rng);
      std::swap(pool[i], pool[j]);
      s3[i] = points3d[pool[i]];
      s2[i] = points2d[pool[i]];
    }
    bool repeated = false;
    for (std::size_t a = 0; a < config.min_sample && !repeated; ++a)
      for (std::size_t b = a + 1; b < config.min_sample; ++b)
        if (s3[a] == s3[b]) {
          repeated = true;
          break;
        }
    if (repeated) continue;

    Pose hyp;
    try {
      hyp = epnp_solve(s3, s2, intr);
    } catch (const Error&) {
      continue;
    }
    const std::size_t count = mask_for(hyp, mask);
    if (count > best_count) {
      best_count = count;
      best_pose = hyp;
      best_mask = mask;
      const double w = static_cast<double>(count) / static_cast<double>(total);
      const double miss = 1.0 - std::pow(w, static_cast<double>(config.min_sample));
      if (miss <= 0.0) {
        limit = std::min(limit, it + 1);
      } else {
        const double need = std::ceil(std::log(1.0 - config.confidence) / std::log(miss));
        if (std::isfinite(need) && need >= 0.0)
          limit = std::min(limit, static_cast<std::size_t>(std::max(need, 1.0)));
      }
    }
  }

  if (!best_pose || best_count < config.min_sample) fail(ErrorKind::NoConsensus, "no hypothesis reached the minimal inlier count");

  RansacResult result;
  result.pose = *best_pose;
  result.inlier_mask = best_mask;
  result.iterations_used = it;

  std::vector<Point3> in3;
  std::vector<Point2> in2;
  for (std::size_t i = 0; i < total; ++i)
    if (best_mask[i]) {
      in3.push_back(points3d[i]);
      in2.push_back(points2d[i]);
    }
  try {
    const Pose refit = epnp_solve(in3, in2, intr);
    if (mask_for(refit, mask) >= config.min_sample) {
      result.pose = refit;
      result.inlier_mask = mask;
    }
  } catch (const Error&) {
  }
  return result;
}

void flatten_correspondences(const CorrespondenceSet& corrs, std::vector<Point3>& points3d, std::vector<Point2>& points2d) {
  points3d.clear();
  points2d.clear();
  points3d.reserve(corrs.total());
  points2d.reserve(corrs.total());
  for (const auto& c : corrs.hypotheses) {
    points3d.push_back(corrs.keypoints.points[c.keypoint_index]);
    points2d.push_back(c.pixel);
  }
}

RansacResult ransac_pnp(const CorrespondenceSet& corrs, const RansacConfig& config) {
  std::vector<Point3> p3;
  std::vector<Point2> p2;
  flatten_correspondences(corrs, p3, p2);
  return ransac_pnp(p3, p2, corrs.intrinsics, config);
}

}  // namespace dgecn
