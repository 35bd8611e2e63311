#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hcrm/signed_log.hpp"

namespace hcrm {

// mt19937_64 plus hand-rolled transforms. The standard distribution objects
// are implementation-defined, which would break bit-exact checkpoints; these
// transforms consume a fixed number of raw draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via polar Box-Muller (one value per call, spare cached).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return u * f;
  }

  // Gamma(shape, rate) via Marsaglia-Tsang, boosted for shape < 1.
  double gamma(double shape, double rate) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw std::domain_error("Rng::gamma: bad parameters");
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  // Poisson; inversion for small means, PTRS-free normal-free splitting for
  // large means via the standard mean-halving recursion.
  std::int64_t poisson(double mean) {
    if (mean < 0.0) throw std::domain_error("Rng::poisson: negative mean");
    if (mean == 0.0) return 0;
    if (mean < 30.0) {
      const double l = std::exp(-mean);
      std::int64_t k = 0;
      double p = uniform01();
      while (p > l) {
        ++k;
        p *= uniform01();
      }
      return k;
    }
    // Split: Poisson(m) = Poisson(m/2) + Poisson(m/2); recursion depth is
    // logarithmic, and gamma-based thinning would cost more draws.
    return poisson(mean / 2.0) + poisson(mean / 2.0);
  }

  // Categorical draw from log-weights: max-subtracted, single uniform.
  std::size_t categorical_log(const std::vector<double>& log_w) {
    if (log_w.empty()) throw std::invalid_argument("Rng::categorical_log: empty weights");
    double m = neg_inf;
    for (double w : log_w) m = std::max(m, w);
    if (m == neg_inf) throw std::domain_error("Rng::categorical_log: all weights are -inf");
    double total = 0.0;
    for (double w : log_w) total += std::exp(w - m);
    const double u = uniform01() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < log_w.size(); ++i) {
      acc += std::exp(log_w[i] - m);
      if (u < acc) return i;
    }
    return log_w.size() - 1;
  }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_ << " " << (have_spare_ ? 1 : 0);
    if (have_spare_) {
      os << " ";
      os.precision(17);
      os << std::hexfloat << spare_;
    }
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    int spare_flag = 0;
    is >> spare_flag;
    have_spare_ = spare_flag != 0;
    if (have_spare_) {
      std::string tok;
      is >> tok;
      spare_ = std::strtod(tok.c_str(), nullptr);
    }
    if (!is) throw std::runtime_error("Rng::deserialize: malformed state");
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hcrm
