#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of them call into the code under test for the quantity they check.

#include "patchy/patchy.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace oracle {

using patchy::Vec;

/// e^{-(t - t0)} x0: the flow of g(x) = -x.
inline Vec decay(const Vec& x0, double t, double t0 = 0.0) { return std::exp(-(t - t0)) * x0; }

/// Signed distance to the ellipse ((x-c)/a)^2 + ((y-c)/b)^2 = 1 by dense
/// sampling of the boundary (positive inside).
inline double ellipse_signed_distance(const Vec& c, const Vec& axes, const Vec& x, int samples = 200000) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < samples; ++i) {
    double th = 2.0 * std::numbers::pi * i / samples;
    Vec p(2);
    p << c[0] + axes[0] * std::cos(th), c[1] + axes[1] * std::sin(th);
    best = std::min(best, (x - p).norm());
  }
  double lv = std::pow((x[0] - c[0]) / axes[0], 2) + std::pow((x[1] - c[1]) / axes[1], 2) - 1.0;
  return lv < 0.0 ? best : -best;
}

/// Total variation as the supremum over a fine partition: sums |w(s_{k+1}) - w(s_k)|
/// on a uniform grid refined with both one-sided values at every jump.
inline double partition_tv(const patchy::BVSignal& w, int cells = 200000) {
  std::vector<Vec> vals;
  const auto& js = w.jumps();
  std::size_t next = 0;
  for (int k = 0; k <= cells; ++k) {
    double t = w.t0() + (w.t1() - w.t0()) * k / cells;
    bool on_jump = false;
    while (next < js.size() && js[next].time <= t) {
      vals.push_back(w.eval_left(js[next].time));
      vals.push_back(w.eval_right(js[next].time));
      on_jump = js[next].time == t;
      ++next;
    }
    if (!on_jump) vals.push_back(w.eval_left(t));
  }
  double tv = 0.0;
  for (std::size_t i = 1; i < vals.size(); ++i) tv += (vals[i] - vals[i - 1]).norm();
  return tv;
}

struct Envelope {
  std::vector<int> levels;
  double excess = std::numeric_limits<double>::infinity();
};

/// Exhaustive search over all non-decreasing level sequences with values in
/// `allowed`, levels <= history. Among optimal sequences the reverse
/// lexicographically smallest is returned (smallest last level, then the
/// smallest level before it, and so on).
inline Envelope brute_envelope(const std::vector<int>& history, const std::vector<double>& widths,
                               std::vector<int> allowed) {
  std::sort(allowed.begin(), allowed.end());
  const std::size_t K = history.size();
  Envelope best;
  std::vector<int> cur(K);
  auto rev_less = [](const std::vector<int>& a, const std::vector<int>& b) {
    for (std::size_t k = a.size(); k-- > 0;)
      if (a[k] != b[k]) return a[k] < b[k];
    return false;
  };
  std::function<void(std::size_t, std::size_t, double)> rec = [&](std::size_t k, std::size_t lo, double cost) {
    if (k == K) {
      if (cost < best.excess || (cost == best.excess && rev_less(cur, best.levels))) {
        best.excess = cost;
        best.levels = cur;
      }
      return;
    }
    for (std::size_t j = lo; j < allowed.size(); ++j) {
      if (allowed[j] > history[k]) break;
      cur[k] = allowed[j];
      rec(k + 1, j, cost + (history[k] > allowed[j] ? widths[k] : 0.0));
    }
  };
  rec(0, 0, 0.0);
  return best;
}

/// C_i, l_i for N <= 3 written out by hand from the backward recursion.
struct Budget {
  std::vector<double> C, ell;
};

inline Budget hand_budget(double c1, double c2, double c3, int N) {
  Budget b;
  double CN = 1.0 + c3;
  double lN = 2.0 * CN / c1;
  if (N == 1) return {{CN}, {lN}};
  if (N == 2) {
    double C1 = c2 * lN + CN;
    double l1 = (2.0 * C1 + c2 * lN) / c1;
    return {{C1, CN}, {l1, lN}};
  }
  double C2 = c2 * lN + CN;
  double l2 = (2.0 * C2 + c2 * lN) / c1;
  double C1 = c2 * l2 + C2 + CN;
  double l1 = (2.0 * C1 + c2 * (l2 + lN)) / c1;
  return {{C1, C2, CN}, {l1, l2, lN}};
}

}  // namespace oracle
