#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ncsn/error.hpp"

namespace ncsn {

// Geometric sequence of noise levels sigma_1 > ... > sigma_L. Levels are
// addressed 1-based throughout the library.
class NoiseSchedule {
public:
  explicit NoiseSchedule(std::vector<double> sigmas) : sigmas_(std::move(sigmas)) {
    if (sigmas_.empty()) throw Error("schedule: at least one level required");
    for (double s : sigmas_)
      if (!(s > 0.0) || !std::isfinite(s)) throw Error("schedule: sigmas must be positive and finite");
    if (sigmas_.size() > 1) {
      const double ratio = sigmas_[0] / sigmas_[1];
      if (!(ratio > 1.0)) throw Error("schedule: sigmas must be strictly decreasing");
      for (std::size_t i = 1; i + 1 < sigmas_.size(); ++i) {
        const double r = sigmas_[i] / sigmas_[i + 1];
        if (std::abs(r - ratio) > 1e-9 * ratio)
          throw Error("schedule: sigmas are not geometric (ratio " + std::to_string(r) + " vs " + std::to_string(ratio) + ")");
      }
    }
  }

  // sigma_1 = first, sigma_L = last, log-spaced.
  static NoiseSchedule geometric(double first, double last, std::size_t levels) {
    if (levels == 0) throw Error("schedule: at least one level required");
    if (levels == 1) return NoiseSchedule({first});
    if (!(first > last) || !(last > 0.0)) throw Error("schedule: need first > last > 0");
    std::vector<double> s(levels);
    const double step = std::log(last / first) / static_cast<double>(levels - 1);
    for (std::size_t i = 0; i < levels; ++i) s[i] = first * std::exp(step * static_cast<double>(i));
    s.front() = first;
    s.back() = last;
    return NoiseSchedule(std::move(s));
  }

  std::size_t levels() const { return sigmas_.size(); }
  const std::vector<double>& sigmas() const { return sigmas_; }
  double sigma(std::size_t level) const {
    check_level(level);
    return sigmas_[level - 1];
  }
  double first() const { return sigmas_.front(); }
  double last() const { return sigmas_.back(); }

  // Annealed Langevin step size epsilon * sigma_i^2 / sigma_L^2.
  double step_size(std::size_t level, double epsilon) const {
    const double r = sigma(level) / last();
    return epsilon * r * r;
  }

  void check_level(std::size_t level) const {
    if (level < 1 || level > sigmas_.size())
      throw Error("schedule: level " + std::to_string(level) + " outside 1.." + std::to_string(sigmas_.size()));
  }

  bool operator==(const NoiseSchedule&) const = default;

private:
  std::vector<double> sigmas_;
};

}  // namespace ncsn
