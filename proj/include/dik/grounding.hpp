#pragma once

// Spatial grounding over token grids. Regions are 4-connected components
// of equal tokens: a point grounds the component under it, a box grounds
// every component whose majority lies inside, and a text prompt grounds
// every position whose token class is in the concept set. Also: attention
// heatmap averaging, top-k point extraction and bounding-box relaxation.

#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "dik/denoiser.hpp"
#include "dik/types.hpp"

namespace dik {

enum class PromptKind { point, box, text };

struct SpatialPrompt {
  PromptKind kind = PromptKind::point;
  Point point;                        // kind == point
  Box box;                            // kind == box
  std::vector<Token> concept_tokens;  // kind == text

  static SpatialPrompt at_point(Point p) {
    SpatialPrompt prompt;
    prompt.kind = PromptKind::point;
    prompt.point = p;
    return prompt;
  }
  static SpatialPrompt in_box(Box b) {
    SpatialPrompt prompt;
    prompt.kind = PromptKind::box;
    prompt.box = b;
    return prompt;
  }
  static SpatialPrompt of_concepts(std::vector<Token> concepts) {
    SpatialPrompt prompt;
    prompt.kind = PromptKind::text;
    prompt.concept_tokens = std::move(concepts);
    return prompt;
  }
};

namespace detail {

inline void check_point(const TokenGrid& grid, const Point& p, const char* what) {
  require(p.y >= 0 && p.y < grid.height() && p.x >= 0 && p.x < grid.width(),
          std::string(what) + ": point (" + std::to_string(p.y) + "," +
              std::to_string(p.x) + ") outside " + std::to_string(grid.height()) + "x" +
              std::to_string(grid.width()) + " grid");
}

inline void check_box(const TokenGrid& grid, const Box& b, const char* what) {
  require(b.y0 >= 0 && b.x0 >= 0 && b.y1 < grid.height() && b.x1 < grid.width() &&
              b.y0 <= b.y1 && b.x0 <= b.x1,
          std::string(what) + ": box (" + std::to_string(b.y0) + "," +
              std::to_string(b.x0) + "," + std::to_string(b.y1) + "," +
              std::to_string(b.x1) + ") is not an ordered box inside " +
              std::to_string(grid.height()) + "x" + std::to_string(grid.width()) +
              " grid");
}

// Labels 4-connected components of equal tokens; returns per-position ids.
inline std::vector<int> component_labels(const TokenGrid& grid, int& count) {
  std::vector<int> labels(grid.size(), -1);
  count = 0;
  for (int start = 0; start < grid.size(); ++start) {
    if (labels[start] != -1) continue;
    const Token cls = grid.at(start);
    std::queue<int> frontier;
    frontier.push(start);
    labels[start] = count;
    while (!frontier.empty()) {
      const int p = frontier.front();
      frontier.pop();
      const int y = p / grid.width();
      const int x = p % grid.width();
      const int neighbours[4][2] = {{y - 1, x}, {y + 1, x}, {y, x - 1}, {y, x + 1}};
      for (const auto& n : neighbours) {
        if (n[0] < 0 || n[0] >= grid.height() || n[1] < 0 || n[1] >= grid.width()) continue;
        const int q = grid.index(n[0], n[1]);
        if (labels[q] == -1 && grid.at(q) == cls) {
          labels[q] = count;
          frontier.push(q);
        }
      }
    }
    ++count;
  }
  return labels;
}

}  // namespace detail

inline GroundingMask ground(const TokenGrid& grid, const SpatialPrompt& prompt) {
  std::vector<std::uint8_t> bits(grid.size(), 0);
  switch (prompt.kind) {
    case PromptKind::point: {
      detail::check_point(grid, prompt.point, "ground");
      int count = 0;
      const auto labels = detail::component_labels(grid, count);
      const int target = labels[grid.index(prompt.point.y, prompt.point.x)];
      for (int p = 0; p < grid.size(); ++p) bits[p] = labels[p] == target;
      break;
    }
    case PromptKind::box: {
      detail::check_box(grid, prompt.box, "ground");
      int count = 0;
      const auto labels = detail::component_labels(grid, count);
      std::vector<int> total(count, 0), inside(count, 0);
      for (int y = 0; y < grid.height(); ++y)
        for (int x = 0; x < grid.width(); ++x) {
          const int c = labels[grid.index(y, x)];
          ++total[c];
          if (y >= prompt.box.y0 && y <= prompt.box.y1 && x >= prompt.box.x0 &&
              x <= prompt.box.x1)
            ++inside[c];
        }
      for (int p = 0; p < grid.size(); ++p)
        bits[p] = 2 * inside[labels[p]] > total[labels[p]];
      break;
    }
    case PromptKind::text: {
      for (int p = 0; p < grid.size(); ++p)
        for (Token c : prompt.concept_tokens)
          if (grid.at(p) == c) {
            bits[p] = 1;
            break;
          }
      break;
    }
  }
  return GroundingMask(grid.height(), grid.width(), std::move(bits));
}

// Finite non-negative per-position weights (the averaged attention).
class Heatmap {
 public:
  Heatmap(int height, int width, std::vector<double> values)
      : height_(height), width_(width), values_(std::move(values)) {
    detail::check_dims(height_, width_, "Heatmap");
    detail::require(static_cast<int>(values_.size()) == height_ * width_,
                    "Heatmap: values length " + std::to_string(values_.size()) +
                        " does not match " + std::to_string(height_) + "x" +
                        std::to_string(width_));
    for (std::size_t i = 0; i < values_.size(); ++i)
      detail::require(std::isfinite(values_[i]),
                      "Heatmap: values[" + std::to_string(i) + "] is not finite");
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int size() const { return height_ * width_; }
  double at(int idx) const { return values_[idx]; }
  double at(int y, int x) const { return values_[y * width_ + x]; }
  std::span<const double> values() const { return values_; }

 private:
  int height_;
  int width_;
  std::vector<double> values_;
};

// Mean over every (layer, head) map.
inline Heatmap attention_heatmap(const AttentionStack& stack) {
  detail::require(stack.map_count() > 0, "attention_heatmap: empty attention stack");
  const int size = stack.height() * stack.width();
  std::vector<double> values(size, 0.0);
  for (int l = 0; l < stack.layers(); ++l)
    for (int k = 0; k < stack.heads(); ++k)
      for (int y = 0; y < stack.height(); ++y)
        for (int x = 0; x < stack.width(); ++x)
          values[y * stack.width() + x] += stack.at(l, k, y, x);
  const double scale = 1.0 / stack.map_count();
  for (double& v : values) v *= scale;
  return Heatmap(stack.height(), stack.width(), std::move(values));
}

// k highest-weight positions, ranked descending; ties row-major.
inline std::vector<Point> top_k_points(const Heatmap& heatmap, int k) {
  detail::require(k >= 1, "top_k_points: k must be at least 1, got " + std::to_string(k));
  detail::require(k <= heatmap.size(),
                  "top_k_points: k = " + std::to_string(k) + " exceeds grid size " +
                      std::to_string(heatmap.size()));
  std::vector<int> order(heatmap.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&heatmap](int a, int b) {
    if (heatmap.at(a) != heatmap.at(b)) return heatmap.at(a) > heatmap.at(b);
    return a < b;
  });
  std::vector<Point> points;
  points.reserve(k);
  for (int i = 0; i < k; ++i)
    points.push_back(Point{order[i] / heatmap.width(), order[i] % heatmap.width()});
  return points;
}

// Fills the bounding box of the mask. Idempotent; always a superset.
inline GroundingMask relax_mask(const GroundingMask& mask) {
  detail::require(mask.popcount() > 0, "relax_mask: cannot relax an empty mask");
  int y0 = mask.height(), x0 = mask.width(), y1 = -1, x1 = -1;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.test(y, x)) {
        y0 = std::min(y0, y);
        x0 = std::min(x0, x);
        y1 = std::max(y1, y);
        x1 = std::max(x1, x);
      }
  std::vector<std::uint8_t> bits(mask.size(), 0);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) bits[mask.index(y, x)] = 1;
  return GroundingMask(mask.height(), mask.width(), std::move(bits));
}

}  // namespace dik
