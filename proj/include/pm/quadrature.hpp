#ifndef PM_QUADRATURE_HPP
#define PM_QUADRATURE_HPP

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace pm {

/// Integral over [a, b] of the quadratic through (t0,f0), (t1,f1), (t2,f2).
/// Nodes need not be evenly spaced; with even spacing and [a,b] = [t0,t2]
/// this is Simpson's rule.
inline void quad3_weights(double t0, double t1, double t2, double a, double b,
                          double w[3]) {
  // w_i = integral of the i-th Lagrange basis polynomial over [a, b]
  auto basis = [a, b](double tn, double ta, double tb) {
    const double den = (tn - ta) * (tn - tb);
    auto F = [ta, tb](double t) {
      return t * t * t / 3.0 - (ta + tb) * t * t / 2.0 + ta * tb * t;
    };
    return (F(b) - F(a)) / den;
  };
  w[0] = basis(t0, t1, t2);
  w[1] = basis(t1, t0, t2);
  w[2] = basis(t2, t0, t1);
}

/// Composite Simpson-style quadrature over streamed, segment-delimited
/// samples. Within a segment the integrand is assumed smooth; callers break
/// at every kink (events). Works on vector-valued samples of fixed dimension.
class SegmentQuadrature {
 public:
  explicit SegmentQuadrature(std::size_t dim)
      : dim_(dim), total_(dim, 0.0), mark_(dim, 0.0) {}

  void add(double t, std::span<const double> v) {
    if (v.size() != dim_) throw std::invalid_argument("sample dimension mismatch");
    if (!times_.empty() && t < times_.back())
      throw std::invalid_argument("samples must be time-ordered");
    if (!times_.empty() && t == times_.back()) {
      // duplicate timestamp: keep the newest values
      std::copy(v.begin(), v.end(), values_.end() - dim_);
      return;
    }
    times_.push_back(t);
    values_.insert(values_.end(), v.begin(), v.end());
  }

  void add(double t, double v) { add(t, std::span<const double>(&v, 1)); }

  /// Close the current segment at the last added sample, restart a new one
  /// from that sample, and return the closed segment's integral.
  std::vector<double> break_segment() {
    flush();
    std::vector<double> delta(dim_);
    for (std::size_t d = 0; d < dim_; ++d) delta[d] = total_[d] - mark_[d];
    mark_ = total_;
    if (!times_.empty()) {
      const double t = times_.back();
      std::vector<double> v(values_.end() - dim_, values_.end());
      reseed_internal(t, v);
    }
    return delta;
  }

  /// Replace the pending segment start with the given sample (used when the
  /// integrand jumps at an event).
  void reseed(double t, std::span<const double> v) {
    if (v.size() != dim_) throw std::invalid_argument("sample dimension mismatch");
    reseed_internal(t, std::vector<double>(v.begin(), v.end()));
  }

  /// Close the pending segment and return the accumulated integral.
  std::vector<double> finish() {
    flush();
    times_.clear();
    values_.clear();
    return total_;
  }

 private:
  void reseed_internal(double t, const std::vector<double>& v) {
    times_.clear();
    values_.clear();
    times_.push_back(t);
    values_.insert(values_.end(), v.begin(), v.end());
  }

  const double* at(std::size_t k) const { return values_.data() + k * dim_; }

  void accumulate(double w, const double* v) {
    for (std::size_t d = 0; d < dim_; ++d) total_[d] += w * v[d];
  }

  void flush() {
    const std::size_t n = times_.size();
    if (n < 2) return;
    double w[3];
    std::size_t i = 0;
    // consume intervals in pairs through a quadratic fit
    while (i + 2 <= n - 1) {
      quad3_weights(times_[i], times_[i + 1], times_[i + 2], times_[i], times_[i + 2], w);
      accumulate(w[0], at(i));
      accumulate(w[1], at(i + 1));
      accumulate(w[2], at(i + 2));
      i += 2;
    }
    if (i == n - 2) {
      // one interval left over
      if (n >= 3) {
        // quadratic through the last three nodes, integrated over the tail
        quad3_weights(times_[n - 3], times_[n - 2], times_[n - 1], times_[n - 2],
                      times_[n - 1], w);
        accumulate(w[0], at(n - 3));
        accumulate(w[1], at(n - 2));
        accumulate(w[2], at(n - 1));
      } else {
        const double h = times_[1] - times_[0];
        accumulate(0.5 * h, at(0));
        accumulate(0.5 * h, at(1));
      }
    }
  }

  std::size_t dim_;
  std::vector<double> total_;
  std::vector<double> mark_;
  std::vector<double> times_;
  std::vector<double> values_;
};

}  // namespace pm

#endif  // PM_QUADRATURE_HPP
