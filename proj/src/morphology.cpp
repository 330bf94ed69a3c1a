#include "dgmeval/morphology.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <numeric>

#include "dgmeval/error.hpp"

namespace dgmeval {
namespace {

constexpr std::array<int, 8> kDx8 = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr std::array<int, 8> kDy8 = {0, 1, 1, 1, 0, -1, -1, -1};

binary_mask dilate_once(const binary_mask& m) {
  const int w = m.width;
  const int h = m.height;
  // Separable: horizontal max then vertical max.
  binary_mask tmp(w, h);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = &m.values[m.index(0, y)];
    std::uint8_t* out = &tmp.values[tmp.index(0, y)];
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = row[x];
      if (x > 0) v |= row[x - 1];
      if (x + 1 < w) v |= row[x + 1];
      out[x] = v;
    }
  }
  binary_mask res(w, h);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* mid = &tmp.values[tmp.index(0, y)];
    const std::uint8_t* up = y > 0 ? &tmp.values[tmp.index(0, y - 1)] : nullptr;
    const std::uint8_t* dn = y + 1 < h ? &tmp.values[tmp.index(0, y + 1)] : nullptr;
    std::uint8_t* out = &res.values[res.index(0, y)];
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = mid[x];
      if (up) v |= up[x];
      if (dn) v |= dn[x];
      out[x] = v;
    }
  }
  return res;
}

binary_mask erode_once(const binary_mask& m) {
  const int w = m.width;
  const int h = m.height;
  binary_mask tmp(w, h);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* row = &m.values[m.index(0, y)];
    std::uint8_t* out = &tmp.values[tmp.index(0, y)];
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = row[x];
      v &= x > 0 ? row[x - 1] : 0;
      v &= x + 1 < w ? row[x + 1] : 0;
      out[x] = v;
    }
  }
  binary_mask res(w, h);
  for (int y = 0; y < h; ++y) {
    const std::uint8_t* mid = &tmp.values[tmp.index(0, y)];
    std::uint8_t* out = &res.values[res.index(0, y)];
    if (y == 0 || y + 1 == h) continue;
    const std::uint8_t* up = &tmp.values[tmp.index(0, y - 1)];
    const std::uint8_t* dn = &tmp.values[tmp.index(0, y + 1)];
    for (int x = 0; x < w; ++x) out[x] = mid[x] & up[x] & dn[x];
  }
  return res;
}

void require_same_shape(const binary_mask& a, const binary_mask& b) {
  if (!a.same_shape(b)) throw argument_error("mask shape mismatch");
}

struct union_find {
  std::vector<std::int32_t> parent;
  std::int32_t make() {
    parent.push_back(static_cast<std::int32_t>(parent.size()));
    return parent.back();
  }
  std::int32_t find(std::int32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::int32_t a, std::int32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent[a] = b;
  }
};

}  // namespace

binary_mask dilate(const binary_mask& m, int iterations) {
  binary_mask out = m;
  for (int i = 0; i < iterations; ++i) out = dilate_once(out);
  return out;
}

binary_mask erode(const binary_mask& m, int iterations) {
  binary_mask out = m;
  for (int i = 0; i < iterations; ++i) out = erode_once(out);
  return out;
}

binary_mask mask_and(const binary_mask& a, const binary_mask& b) {
  require_same_shape(a, b);
  binary_mask out(a.width, a.height);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] & b[i];
  return out;
}

binary_mask mask_or(const binary_mask& a, const binary_mask& b) {
  require_same_shape(a, b);
  binary_mask out(a.width, a.height);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] | b[i];
  return out;
}

binary_mask mask_minus(const binary_mask& a, const binary_mask& b) {
  require_same_shape(a, b);
  binary_mask out(a.width, a.height);
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] & static_cast<std::uint8_t>(!b[i]);
  return out;
}

binary_mask mirror_horizontal(const binary_mask& m) {
  binary_mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out(m.width - 1 - x, y) = m(x, y);
  return out;
}

component_labels label_components(const binary_mask& m, connectivity conn) {
  const int w = m.width;
  const int h = m.height;
  component_labels result{raster<std::int32_t>(w, h, 0), 0};
  auto& lab = result.labels;
  union_find uf;
  uf.make();  // slot 0 is background
  const bool eight = conn == connectivity::eight;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!m(x, y)) continue;
      std::int32_t best = 0;
      auto consider = [&](int nx, int ny) {
        if (nx < 0 || ny < 0 || nx >= w) return;
        const std::int32_t l = lab(nx, ny);
        if (l == 0) return;
        if (best == 0) {
          best = l;
        } else if (l != best) {
          uf.unite(best, l);
        }
      };
      consider(x - 1, y);
      consider(x, y - 1);
      if (eight) {
        consider(x - 1, y - 1);
        consider(x + 1, y - 1);
      }
      lab(x, y) = best != 0 ? best : uf.make();
    }
  }
  // Relabel roots to consecutive ids in order of first appearance.
  std::vector<std::int32_t> remap(uf.parent.size(), 0);
  std::int32_t next = 0;
  for (auto& l : lab.values) {
    if (l == 0) continue;
    const std::int32_t root = uf.find(l);
    if (remap[root] == 0) remap[root] = ++next;
    l = remap[root];
  }
  result.count = next;
  return result;
}

binary_mask fill_holes(const binary_mask& m) {
  const int w = m.width;
  const int h = m.height;
  binary_mask outside(w, h, 0);
  std::deque<std::pair<int, int>> queue;
  auto seed = [&](int x, int y) {
    if (!m(x, y) && !outside(x, y)) {
      outside(x, y) = 1;
      queue.emplace_back(x, y);
    }
  };
  for (int x = 0; x < w; ++x) {
    seed(x, 0);
    seed(x, h - 1);
  }
  for (int y = 0; y < h; ++y) {
    seed(0, y);
    seed(w - 1, y);
  }
  while (!queue.empty()) {
    const auto [x, y] = queue.front();
    queue.pop_front();
    if (x > 0) seed(x - 1, y);
    if (x + 1 < w) seed(x + 1, y);
    if (y > 0) seed(x, y - 1);
    if (y + 1 < h) seed(x, y + 1);
  }
  binary_mask out(w, h);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(!outside[i]);
  return out;
}

int neighbour_count(const binary_mask& m, int x, int y) {
  int n = 0;
  for (int k = 0; k < 8; ++k) {
    const int nx = x + kDx8[k];
    const int ny = y + kDy8[k];
    if (m.in_bounds(nx, ny) && m(nx, ny)) ++n;
  }
  return n;
}

binary_mask thin(const binary_mask& m) {
  binary_mask img = m;
  const int w = img.width;
  const int h = img.height;
  auto px = [&](int x, int y) -> int { return img.in_bounds(x, y) ? img(x, y) : 0; };

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < img.size(); ++i)
    if (img[i]) candidates.push_back(i);

  std::vector<std::size_t> to_delete;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      to_delete.clear();
      for (const std::size_t i : candidates) {
        if (!img[i]) continue;
        const int x = static_cast<int>(i % static_cast<std::size_t>(w));
        const int y = static_cast<int>(i / static_cast<std::size_t>(w));
        // P2..P9 clockwise from north.
        const int p2 = px(x, y - 1), p3 = px(x + 1, y - 1), p4 = px(x + 1, y), p5 = px(x + 1, y + 1);
        const int p6 = px(x, y + 1), p7 = px(x - 1, y + 1), p8 = px(x - 1, y), p9 = px(x - 1, y - 1);
        const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
        if (b < 2 || b > 6) continue;
        const std::array<int, 9> seq = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
        int a = 0;
        for (int k = 0; k < 8; ++k) a += (seq[k] == 0 && seq[k + 1] == 1);
        if (a != 1) continue;
        if (pass == 0) {
          if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
        } else {
          if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
        }
        to_delete.push_back(i);
      }
      for (const std::size_t i : to_delete) img[i] = 0;
      if (!to_delete.empty()) changed = true;
    }
    std::erase_if(candidates, [&](std::size_t i) { return img[i] == 0; });
  }
  (void)h;
  return img;
}

std::vector<point2> convex_hull(std::vector<point2> pts) {
  std::sort(pts.begin(), pts.end(), [](const point2& a, const point2& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](const point2& o, const point2& a, const point2& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
  };
  std::vector<point2> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

double polygon_perimeter(std::span<const point2> poly) {
  if (poly.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    total += std::hypot(b.x - a.x, b.y - a.y);
  }
  return total;
}

double polygon_area(std::span<const point2> poly) {
  if (poly.size() < 3) return 0.0;
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    twice += a.x * b.y - b.x * a.y;
  }
  return std::abs(twice) * 0.5;
}

std::vector<point2> trace_outer_contour(const binary_mask& m) {
  std::vector<point2> chain;
  int sx = -1;
  int sy = -1;
  for (int y = 0; y < m.height && sx < 0; ++y)
    for (int x = 0; x < m.width; ++x)
      if (m(x, y)) {
        sx = x;
        sy = y;
        break;
      }
  if (sx < 0) return chain;

  auto set = [&](int x, int y) { return m.in_bounds(x, y) && m(x, y) != 0; };
  auto direction_of = [](int dx, int dy) {
    for (int d = 0; d < 8; ++d)
      if (kDx8[d] == dx && kDy8[d] == dy) return d;
    return 0;
  };
  // Directions run clockwise on screen (y down), starting east. The start
  // pixel is first in raster order, so its west neighbour is clear.
  int x = sx;
  int y = sy;
  int back_dir = 4;
  int first_move = -1;
  chain.push_back({static_cast<double>(x), static_cast<double>(y)});
  const std::size_t limit = 4 * m.size() + 8;
  for (std::size_t step = 0; step < limit; ++step) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      const int d = (back_dir + k) % 8;
      if (set(x + kDx8[d], y + kDy8[d])) {
        found = d;
        break;
      }
    }
    if (found < 0) break;  // isolated pixel
    if (x == sx && y == sy) {
      if (first_move < 0) {
        first_move = found;
      } else if (found == first_move) {
        break;
      }
    }
    // New backtrack: the last clear neighbour examined, seen from the new pixel.
    const int prev = (found + 7) % 8;
    const int bx = kDx8[prev] - kDx8[found];
    const int by = kDy8[prev] - kDy8[found];
    x += kDx8[found];
    y += kDy8[found];
    back_dir = direction_of(bx, by);
    chain.push_back({static_cast<double>(x), static_cast<double>(y)});
  }
  if (chain.size() > 1 && chain.back() == chain.front()) chain.pop_back();
  return chain;
}

double chain_length(std::span<const point2> chain) {
  if (chain.size() < 2) return 0.0;
  return polygon_perimeter(chain);
}

}  // namespace dgmeval
