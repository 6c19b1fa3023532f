#pragma once

// Independent reference computations. These deliberately avoid the
// library's own loops: pair counts come from enumerating every candidate
// (key, value) segment combination and testing the subtask's definition.

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <deque>
#include <random>
#include <vector>

#include "gae/tokensel/select.hpp"

namespace gae::test {

struct Seg {
  int a;
  int b;  // a == b with state == true for a single state
  bool state;
};

/// Every state and every contiguous interval of an n-step trajectory.
inline std::vector<Seg> all_segments(int n) {
  std::vector<Seg> out;
  for (int s = 1; s <= n; ++s) out.push_back({s, s, true});
  for (int a = 1; a <= n; ++a) {
    for (int b = a; b <= n; ++b) out.push_back({a, b, false});
  }
  return out;
}

/// Per-subtask pair counts for one trajectory, in benchmark order.
inline std::array<long, 12> brute_force_counts(int n, int unique_states, int silver) {
  std::array<long, 12> c{};
  const auto segs = all_segments(n);
  for (const auto& k : segs) {
    for (const auto& v : segs) {
      const bool ki = !k.state, vi = !v.state;
      // (q, tau_{1:i}) -> tau_{i+1:n}
      if (ki && vi && k.a == 1 && v.a == k.b + 1 && v.b == n) ++c[0];
      // (q, tau_{i+1:n}) -> tau_{1:i}
      if (ki && vi && k.b == n && v.a == 1 && v.b + 1 == k.a) ++c[1];
      // (q, tau_{1:i}) -> s_{i+1}
      if (ki && v.state && k.a == 1 && v.a == k.b + 1) ++c[2];
      // (q, tau_{i+1:n}) -> s_i
      if (ki && v.state && k.b == n && v.a + 1 == k.a) ++c[3];
      // (q, s_i) -> s_{i+1} and (q, s_{i+1}) -> s_i
      if (k.state && v.state && v.a == k.a + 1) ++c[6];
      if (k.state && v.state && v.a + 1 == k.a) ++c[7];
      // (q, s_i) -> tau_{i+1:n}
      if (k.state && vi && v.a == k.a + 1 && v.b == n) ++c[8];
      // (q, s_{i+1}) -> tau_{1:i}
      if (k.state && vi && v.a == 1 && v.b + 1 == k.a) ++c[9];
    }
  }
  c[4] = 1;
  c[5] = silver;
  c[10] = unique_states;
  c[11] = 1;
  return c;
}

/// Number of intervals of length <= cap, by enumeration.
inline long capped_interval_count(int n, int cap) {
  long count = 0;
  for (int a = 1; a <= n; ++a) {
    for (int b = a; b <= n; ++b) count += (b - a + 1 <= cap);
  }
  return count;
}

/// Keep-fraction upper bound of the ceiling rule over components of the
/// given sizes: sum over redundant components of ceil((1-r)m) is at most
/// (1-r) * redundant + #components.
inline double ceiling_bound(double r, long components, long redundant_patches) {
  return (1.0 - r) + static_cast<double>(components) / static_cast<double>(redundant_patches);
}

/// Breadth-first flood fill over 4-neighbours with the L-infinity test;
/// labels are the smallest patch index reached.
inline std::vector<int> flood_fill_labels(const tokensel::PatchGrid& g, double delta) {
  const int n = static_cast<int>(g.size());
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  auto close = [&](int p, int q) {
    for (int k = 0; k < 3; ++k) {
      if (std::abs(g.features[p][k] - g.features[q][k]) > delta) return false;
    }
    return true;
  };
  for (int start = 0; start < n; ++start) {
    if (label[start] >= 0) continue;
    std::deque<int> queue{start};
    label[start] = start;  // scanning in index order makes `start` the minimum
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      const int r = p / g.cols, c = p % g.cols;
      const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& rc : nb) {
        if (rc[0] < 0 || rc[0] >= g.rows || rc[1] < 0 || rc[1] >= g.cols) continue;
        const int q = rc[0] * g.cols + rc[1];
        if (label[q] < 0 && close(p, q)) {
          label[q] = start;
          queue.push_back(q);
        }
      }
    }
  }
  return label;
}

/// Random patch grid drawn from a small palette so that flat regions form.
inline tokensel::PatchGrid random_grid(std::mt19937_64& g) {
  std::uniform_int_distribution<int> dim(1, 12), colours(1, 5), channel(0, 255);
  tokensel::PatchGrid grid;
  grid.rows = dim(g);
  grid.cols = dim(g);
  std::vector<std::array<double, 3>> palette(static_cast<std::size_t>(colours(g)));
  for (auto& c : palette) c = {double(channel(g)), double(channel(g)), double(channel(g))};
  std::uniform_int_distribution<std::size_t> pick(0, palette.size() - 1);
  for (int k = 0; k < grid.rows * grid.cols; ++k) grid.features.push_back(palette[pick(g)]);
  return grid;
}

}  // namespace gae::test
