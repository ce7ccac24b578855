#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "camsearch/scene.hpp"

namespace camsearch::testing {

/// Open square floor, no obstacles.
inline Scene open_scene(double size = 10.0, int cameras = 2) {
  Scene s;
  s.name = "open";
  s.ground = {{0.0, 0.0}, {size, size}};
  s.spawn = {{0.5, 0.5}, {size - 0.5, size - 0.5}};
  s.config_space.x = {0.0, size};
  s.config_space.y = {0.0, size};
  s.config_space.z = {1.0, 4.0};
  s.num_cameras = cameras;
  return s;
}

inline Frame frame_of(std::vector<Vec2> positions) {
  Frame f;
  for (auto p : positions) f.pedestrians.push_back({p});
  return f;
}

/// Largest relative error between two gradient vectors, using
/// |a-b| / max(1, |a|, |b|) per element.
inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max({1.0, std::abs(a[i]), std::abs(b[i])}));
  return worst;
}

/// Central finite differences of f at x.
inline std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace camsearch::testing
