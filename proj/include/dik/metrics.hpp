#pragma once

// Benchmark geometry and region metrics: interior extraction, diverse
// point sampling (quadrant farthest-from-centroid, then greedy dispersion),
// bounding boxes, per-operation edited regions, and MSE/PSNR/SSIM over a
// masked region.

#include <cmath>
#include <string>
#include <vector>

#include "dik/types.hpp"

namespace dik {

// Positions whose full 3x3 neighbourhood lies inside the mask; grid-border
// positions never qualify. Row-major order.
inline std::vector<Point> interior_pixels(const GroundingMask& mask) {
  std::vector<Point> out;
  for (int y = 1; y + 1 < mask.height(); ++y)
    for (int x = 1; x + 1 < mask.width(); ++x) {
      bool interior = true;
      for (int dy = -1; dy <= 1 && interior; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (!mask.test(y + dy, x + dx)) {
            interior = false;
            break;
          }
      if (interior) out.push_back(Point{y, x});
    }
  return out;
}

// K spatially diverse interior points. First pass: split the interior at
// its centroid into four quadrants (upper half is y < centroid, left half
// x < centroid) and take the farthest-from-centroid point of each non-empty
// quadrant. Remaining slots are filled greedily by the point maximizing the
// summed Euclidean distance to everything already selected. All ties break
// row-major.
inline std::vector<Point> sample_diverse_points(const GroundingMask& mask, int k = 4) {
  detail::require(k >= 1, "sample_diverse_points: k must be at least 1, got " +
                              std::to_string(k));
  const std::vector<Point> interior = interior_pixels(mask);
  detail::require(static_cast<int>(interior.size()) >= k,
                  "sample_diverse_points: need " + std::to_string(k) +
                      " interior positions but the mask has " +
                      std::to_string(interior.size()));

  double cy = 0.0, cx = 0.0;
  for (const Point& p : interior) {
    cy += p.y;
    cx += p.x;
  }
  cy /= static_cast<double>(interior.size());
  cx /= static_cast<double>(interior.size());

  std::vector<Point> selected;
  std::vector<char> taken(interior.size(), 0);
  for (int q = 0; q < 4 && static_cast<int>(selected.size()) < k; ++q) {
    int best = -1;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < interior.size(); ++i) {
      const Point& p = interior[i];
      const int quadrant = (p.y < cy ? 0 : 2) + (p.x < cx ? 0 : 1);
      if (quadrant != q) continue;
      const double dist = std::sqrt((p.y - cy) * (p.y - cy) + (p.x - cx) * (p.x - cx));
      if (dist > best_dist) {  // interior is row-major, so ties keep the first
        best_dist = dist;
        best = static_cast<int>(i);
      }
    }
    if (best >= 0) {
      taken[best] = 1;
      selected.push_back(interior[best]);
    }
  }

  while (static_cast<int>(selected.size()) < k) {
    int best = -1;
    double best_sum = -1.0;
    for (std::size_t i = 0; i < interior.size(); ++i) {
      if (taken[i]) continue;
      double sum = 0.0;
      for (const Point& s : selected) {
        const double dy = interior[i].y - s.y;
        const double dx = interior[i].x - s.x;
        sum += std::sqrt(dy * dy + dx * dx);
      }
      if (sum > best_sum) {
        best_sum = sum;
        best = static_cast<int>(i);
      }
    }
    taken[best] = 1;
    selected.push_back(interior[best]);
  }
  return selected;
}

inline Box bounding_box(const GroundingMask& mask) {
  detail::require(mask.popcount() > 0, "bounding_box: empty mask has no bounding box");
  Box b{mask.height(), mask.width(), -1, -1};
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.test(y, x)) {
        b.y0 = std::min(b.y0, y);
        b.x0 = std::min(b.x0, x);
        b.y1 = std::max(b.y1, y);
        b.x1 = std::max(b.x1, x);
      }
  return b;
}

enum class EditOp { add, remove, replace };

// The region an operation is judged on: replace covers the union of the
// source and target subjects, add only the new subject, remove only the
// vacated source.
inline GroundingMask edited_region(EditOp op, const GroundingMask& source_mask,
                                   const GroundingMask& target_mask) {
  switch (op) {
    case EditOp::replace:
      return mask_or(source_mask, target_mask);
    case EditOp::add:
      return target_mask;
    case EditOp::remove:
      return source_mask;
  }
  throw std::invalid_argument("edited_region: unknown operation");
}

struct RegionMetrics {
  double mse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

inline constexpr double kPsnrCap = 100.0;

namespace detail {

// Uniform 7x7 window centered at (cy,cx), clipped at the grid borders.
// Population statistics (divide by the pixel count).
inline double local_ssim(const IntensityGrid& a, const IntensityGrid& b, int cy, int cx) {
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  const int y0 = std::max(0, cy - 3), y1 = std::min(a.height() - 1, cy + 3);
  const int x0 = std::max(0, cx - 3), x1 = std::min(a.width() - 1, cx + 3);
  double sum_a = 0.0, sum_b = 0.0, sum_aa = 0.0, sum_bb = 0.0, sum_ab = 0.0;
  int n = 0;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double va = a.at(y, x);
      const double vb = b.at(y, x);
      sum_a += va;
      sum_b += vb;
      sum_aa += va * va;
      sum_bb += vb * vb;
      sum_ab += va * vb;
      ++n;
    }
  const double mu_a = sum_a / n;
  const double mu_b = sum_b / n;
  const double var_a = sum_aa / n - mu_a * mu_a;
  const double var_b = sum_bb / n - mu_b * mu_b;
  const double cov = sum_ab / n - mu_a * mu_b;
  return ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)) /
         ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
}

}  // namespace detail

// MSE, PSNR and mean local SSIM over the masked region. PSNR is
// 10*log10(255^2 / MSE), capped at 100 once MSE drops below 255^2 * 1e-10.
// SSIM averages the local 7x7 windows centered at region positions.
inline RegionMetrics region_metrics(const IntensityGrid& reference,
                                    const IntensityGrid& candidate,
                                    const GroundingMask& region) {
  detail::require(reference.height() == candidate.height() &&
                      reference.width() == candidate.width(),
                  "region_metrics: reference and candidate shapes differ");
  detail::require(reference.height() == region.height() &&
                      reference.width() == region.width(),
                  "region_metrics: grids and region shapes differ");
  detail::require(region.popcount() > 0, "region_metrics: empty region");

  double sq_sum = 0.0;
  double ssim_sum = 0.0;
  for (int y = 0; y < region.height(); ++y)
    for (int x = 0; x < region.width(); ++x) {
      if (!region.test(y, x)) continue;
      const double d = reference.at(y, x) - candidate.at(y, x);
      sq_sum += d * d;
      ssim_sum += detail::local_ssim(reference, candidate, y, x);
    }

  RegionMetrics out;
  out.mse = sq_sum / region.popcount();
  out.ssim = ssim_sum / region.popcount();
  if (out.mse < 255.0 * 255.0 * 1e-10)
    out.psnr = kPsnrCap;
  else
    out.psnr = 10.0 * std::log10(255.0 * 255.0 / out.mse);
  return out;
}

}  // namespace dik
