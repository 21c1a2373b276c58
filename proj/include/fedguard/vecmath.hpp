#pragma once

#include <cstddef>
#include <vector>

namespace fedguard {

// Flat vector of model parameters or a model update. Dimension is at least 1
// and every entry is finite; both are enforced at construction.
class ParamVector {
 public:
  explicit ParamVector(std::vector<double> values);
  static ParamVector zeros(std::size_t dim);

  std::size_t dim() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool operator==(const ParamVector& other) const noexcept = default;

 private:
  std::vector<double> values_;
};

namespace vecmath {

// All reductions sum left to right so results are bit-reproducible.
double l2_norm(const ParamVector& v);
double l2_distance(const ParamVector& a, const ParamVector& b);
double linf_norm(const ParamVector& v);
double dot(const ParamVector& a, const ParamVector& b);

// dot(a,b) / (|a||b|); 0 when either norm is 0. Clamped to [-1, 1].
double cosine_similarity(const ParamVector& a, const ParamVector& b);

// Per-coordinate median; an even count averages the two middle order
// statistics.
ParamVector coordinate_median(const std::vector<ParamVector>& updates);

// Per coordinate, drops the k largest and k smallest values and averages the
// survivors in input order. Requires n > 2k. With k = 0 this is bit-for-bit
// the arithmetic mean.
ParamVector coordinate_trimmed_mean(const std::vector<ParamVector>& updates,
                                    std::size_t k);

// Arithmetic mean, per coordinate, summed in input order.
ParamVector mean(const std::vector<ParamVector>& updates);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector sub(const ParamVector& a, const ParamVector& b);
ParamVector scaled(const ParamVector& a, double c);

}  // namespace vecmath
}  // namespace fedguard
