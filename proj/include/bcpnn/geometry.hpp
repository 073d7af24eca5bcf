#ifndef BCPNN_GEOMETRY_HPP
#define BCPNN_GEOMETRY_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace bcpnn {

/// Grid of `n_hc` hypercolumns with `n_mc` minicolumns each. Unit (hc, mc)
/// lives at flat index hc * n_mc + mc.
struct LayerGeometry {
  std::size_t n_hc = 1;
  std::size_t n_mc = 1;

  constexpr LayerGeometry() = default;
  LayerGeometry(std::size_t hc, std::size_t mc) : n_hc(hc), n_mc(mc) {
    if (hc < 1 || mc < 1)
      throw ParameterError("layer geometry needs at least one hypercolumn and one minicolumn");
  }

  constexpr std::size_t units() const noexcept { return n_hc * n_mc; }
  constexpr std::size_t index(std::size_t hc, std::size_t mc) const noexcept { return hc * n_mc + mc; }
  constexpr std::size_t hc_of(std::size_t unit) const noexcept { return unit / n_mc; }

  friend constexpr bool operator==(const LayerGeometry&, const LayerGeometry&) = default;

  std::string str() const { return std::to_string(n_hc) + "x" + std::to_string(n_mc); }
};

inline void require_same(const LayerGeometry& a, const LayerGeometry& b, const char* what) {
  if (a != b)
    throw DimensionError(std::string(what) + ": geometry " + a.str() + " does not match " + b.str());
}

namespace detail {

template <class Tag>
class UnitVector {
public:
  UnitVector() = default;
  explicit UnitVector(LayerGeometry g) : geom_(g), values_(g.units(), 0.0) {}
  UnitVector(LayerGeometry g, std::vector<double> v) : geom_(g), values_(std::move(v)) {
    if (values_.size() != geom_.units())
      throw DimensionError("vector of " + std::to_string(values_.size()) + " values for geometry " + geom_.str());
  }

  const LayerGeometry& geometry() const noexcept { return geom_; }
  std::size_t size() const noexcept { return values_.size(); }

  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double at(std::size_t hc, std::size_t mc) const { return values_.at(geom_.index(hc, mc)); }

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> hypercolumn(std::size_t hc) const noexcept {
    return std::span<const double>(values_).subspan(hc * geom_.n_mc, geom_.n_mc);
  }
  std::span<double> hypercolumn(std::size_t hc) noexcept {
    return std::span<double>(values_).subspan(hc * geom_.n_mc, geom_.n_mc);
  }

  friend bool operator==(const UnitVector&, const UnitVector&) = default;

private:
  LayerGeometry geom_{};
  std::vector<double> values_;
};

struct ActivityTag {};
struct SupportTag {};

} // namespace detail

/// Per-unit activities; each hypercolumn holds a discrete distribution.
using ActivityVector = detail::UnitVector<detail::ActivityTag>;

/// Unnormalized log-domain input to each unit.
using SupportVector = detail::UnitVector<detail::SupportTag>;

inline constexpr double kNormalizationTolerance = 1e-12;

/// Throws ValidationError unless every value is finite, in [0,1] and every
/// hypercolumn sums to one within `tol`.
inline void validate_activity(const ActivityVector& a, double tol = kNormalizationTolerance) {
  const auto& g = a.geometry();
  for (std::size_t h = 0; h < g.n_hc; ++h) {
    double sum = 0.0;
    for (double v : a.hypercolumn(h)) {
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw ValidationError("activity value " + std::to_string(v) + " outside [0,1] in hypercolumn " + std::to_string(h));
      sum += v;
    }
    if (std::abs(sum - 1.0) > tol)
      throw ValidationError("hypercolumn " + std::to_string(h) + " sums to " + std::to_string(sum));
  }
}

/// Build an activity vector with a single active unit per hypercolumn.
inline ActivityVector one_hot(LayerGeometry g, std::span<const std::size_t> active_mc) {
  if (active_mc.size() != g.n_hc)
    throw DimensionError("one_hot: need one index per hypercolumn");
  ActivityVector a(g);
  for (std::size_t h = 0; h < g.n_hc; ++h) {
    if (active_mc[h] >= g.n_mc)
      throw ValidationError("one_hot: minicolumn index out of range");
    a[g.index(h, active_mc[h])] = 1.0;
  }
  return a;
}

} // namespace bcpnn

#endif
