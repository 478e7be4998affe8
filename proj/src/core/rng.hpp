#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "common.hpp"

namespace mscluster {

// Deterministic random stream. std::mt19937_64 has a fully specified output
// sequence; the samplers below avoid the implementation-defined std
// distributions so that a seed maps to the same draws on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform in (0, 1), safe as input to log().
  double uniform01_open() {
    double u;
    do {
      u = uniform01();
    } while (u <= 0.0);
    return u;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller with one cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01_open();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  int uniform_int(int n) {  // in [0, n)
    return static_cast<int>(uniform01() * n) % n;
  }

  int categorical(const std::vector<double>& probs) {
    double u = uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
  }

  std::vector<int> multinomial(int n, const std::vector<double>& probs) {
    std::vector<int> counts(probs.size(), 0);
    for (int i = 0; i < n; ++i) counts[categorical(probs)]++;
    return counts;
  }

  // Fisher-Yates sample of k distinct indices from [0, n).
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      int j = i + uniform_int(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mscluster
