#pragma once

/**
 * @file core.hpp
 * @brief Shared vocabulary for the patchy library: vector types, the error
 * hierarchy, low-discrepancy sampling and the deterministic batch runner.
 */

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace patchy {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// A state in R^n. Kept as an alias: every algorithm works on plain vectors.
using Point = Eigen::VectorXd;

using VectorField = std::function<Vec(const Vec&)>;
using ScalarField = std::function<double(const Vec&)>;
using TimeFunction = std::function<Vec(double)>;

struct Trajectory;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a query point (or a trajectory) leaves every patch.
/// Solvers attach the trajectory computed up to the exit.
class OutsideDomain : public Error {
 public:
  explicit OutsideDomain(const std::string& what, double time = 0.0,
                         std::shared_ptr<const Trajectory> partial = nullptr)
      : Error(what), time_(time), partial_(std::move(partial)) {}

  double time() const noexcept { return time_; }
  const std::shared_ptr<const Trajectory>& partial() const noexcept { return partial_; }

 private:
  double time_;
  std::shared_ptr<const Trajectory> partial_;
};

class NumericalFailure : public Error {
 public:
  using Error::Error;
};

class DegenerateBoundary : public Error {
 public:
  using Error::Error;
};

class EventOverflow : public Error {
 public:
  using Error::Error;
};

class BranchOverflow : public Error {
 public:
  using Error::Error;
};

class NonInwardCollar : public Error {
 public:
  using Error::Error;
};

class PartitionMismatch : public Error {
 public:
  using Error::Error;
};

/// The budget check of the monotone-partition estimate has nothing to say
/// when the perturbation is not small enough.
class Inconclusive : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed scenario or inconsistent parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline Vec zeros(Eigen::Index n) { return Vec::Zero(n); }

inline Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

/// Van der Corput radical inverse; index i of the Halton sequence in `base`.
inline double radical_inverse(std::uint64_t i, unsigned base) {
  double inv = 1.0 / static_cast<double>(base);
  double f = inv;
  double r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

inline unsigned nth_prime(std::size_t k) {
  static constexpr unsigned primes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,
                                        37, 41, 43, 47, 53, 59, 61, 67, 71, 73};
  return primes[k % (sizeof(primes) / sizeof(primes[0]))];
}

/// Point `i` of the Halton sequence in [0,1)^dims, starting at dimension
/// offset `first_dim`. Prefixes nest, so budgets can be refined.
inline Vec halton(std::uint64_t i, std::size_t dims, std::size_t first_dim = 0) {
  Vec u(static_cast<Eigen::Index>(dims));
  for (std::size_t d = 0; d < dims; ++d) u[static_cast<Eigen::Index>(d)] = radical_inverse(i + 1, nth_prime(first_dim + d));
  return u;
}

/// Unit direction in R^n from a point of [0,1)^n (Box-Muller on pairs).
inline Vec direction_from_unit_cube(const Vec& u, Eigen::Index n) {
  constexpr double two_pi = 6.283185307179586476925286766559;
  if (n == 1) return Vec::Constant(1, u[0] < 0.5 ? -1.0 : 1.0);
  if (n == 2) return vec2(std::cos(two_pi * u[0]), std::sin(two_pi * u[0]));
  Vec g(n);
  for (Eigen::Index k = 0; k < n; k += 2) {
    double u1 = std::max(u[k % u.size()], 1e-12);
    double u2 = u[(k + 1) % u.size()];
    double rad = std::sqrt(-2.0 * std::log(u1));
    g[k] = rad * std::cos(two_pi * u2);
    if (k + 1 < n) g[k + 1] = rad * std::sin(two_pi * u2);
  }
  double nrm = g.norm();
  if (nrm < 1e-300) {
    g.setZero();
    g[0] = 1.0;
    return g;
  }
  return g / nrm;
}

/// Worker count for batch evaluation; PATCHY_THREADS caps it.
inline unsigned worker_count() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PATCHY_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<unsigned>(v);
  }
  return hw;
}

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Each index
/// writes only its own slot, so results do not depend on scheduling. The
/// first exception (lowest index) is rethrown after all workers finish.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  unsigned workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace patchy
