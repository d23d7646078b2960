// Copyright (c) 2026 The spe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SPE_COMMON_HPP_
#define SPE_COMMON_HPP_

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace spe {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Evaluates `msg` as an ostream expression only on failure.
#define SPE_CHECK(cond, msg)                          \
  do {                                                \
    if (!(cond)) {                                    \
      std::ostringstream spe_check_ss_;               \
      spe_check_ss_ << msg;                           \
      throw ::spe::Error(spe_check_ss_.str());        \
    }                                                 \
  } while (0)

inline int num_threads() {
  static int n = []() {
    if (const char* env = std::getenv("SPE_NUM_THREADS")) {
      int v = std::atoi(env);
      if (v > 0) return v;
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
  }();
  return n;
}

// Runs fn(i) for i in [begin, end) over a fixed contiguous partition.
// Iterations must write disjoint state; the partition does not depend on
// the worker count, so floating-point results are machine-independent as
// long as each index does its own reductions.
namespace detail {
inline bool& in_parallel_region() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

inline void parallel_for(int64_t begin, int64_t end,
                         const std::function<void(int64_t)>& fn) {
  int64_t n = end - begin;
  if (n <= 0) return;
  int nt = num_threads();
  // Nested regions run serially; the work partition is unchanged, so the
  // arithmetic (and therefore the result) is too.
  if (nt <= 1 || n == 1 || detail::in_parallel_region()) {
    for (int64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  if (static_cast<int64_t>(nt) > n) nt = static_cast<int>(n);
  std::vector<std::thread> workers;
  workers.reserve(nt);
  std::vector<std::exception_ptr> errors(nt);
  for (int t = 0; t < nt; ++t) {
    int64_t lo = begin + n * t / nt;
    int64_t hi = begin + n * (t + 1) / nt;
    workers.emplace_back([&, lo, hi, t]() {
      detail::in_parallel_region() = true;
      try {
        for (int64_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Seeded RNG with a platform-stable Gaussian (Box-Muller on mt19937_64).
// std::normal_distribution is implementation-defined, which would break
// bit-identical dataset generation across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi], inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    SPE_CHECK(hi >= lo, "uniform_int: empty range [" << lo << ", " << hi << "]");
    uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(gen_());  // full 64-bit range
    uint64_t limit = UINT64_MAX - UINT64_MAX % range;
    uint64_t v;
    do {
      v = gen_();
    } while (v >= limit);
    return lo + static_cast<int64_t>(v % range);
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  uint64_t raw() { return gen_(); }

 private:
  // mt19937_64 output is pinned by the standard, so sequences are portable.
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

inline double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Inverse of softplus; handy for pinning smoothing factors in tests.
inline double softplus_inverse(double y) {
  SPE_CHECK(y > 0, "softplus_inverse: argument must be positive, got " << y);
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

}  // namespace spe

#endif  // SPE_COMMON_HPP_
