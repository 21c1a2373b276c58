#include "fedguard/vecmath.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fedguard {

ParamVector::ParamVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw std::invalid_argument("ParamVector: dimension must be >= 1");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("ParamVector: entries must be finite");
    }
  }
}

ParamVector ParamVector::zeros(std::size_t dim) {
  return ParamVector(std::vector<double>(dim, 0.0));
}

namespace vecmath {
namespace {

void require_same_dim(const ParamVector& a, const ParamVector& b, const char* op) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch");
  }
}

void require_batch(const std::vector<ParamVector>& updates, const char* op) {
  if (updates.empty()) {
    throw std::invalid_argument(std::string(op) + ": empty update list");
  }
  const std::size_t d = updates.front().dim();
  for (const auto& u : updates) {
    if (u.dim() != d) {
      throw std::invalid_argument(std::string(op) + ": dimension mismatch");
    }
  }
}

}  // namespace

double l2_norm(const ParamVector& v) {
  double acc = 0.0;
  for (double x : v.values()) acc += x * x;
  return std::sqrt(acc);
}

double l2_distance(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "l2_distance");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double linf_norm(const ParamVector& v) {
  double m = 0.0;
  for (double x : v.values()) m = std::max(m, std::fabs(x));
  return m;
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) acc += a[i] * b[i];
  return acc;
}

double cosine_similarity(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "cosine_similarity");
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

ParamVector coordinate_median(const std::vector<ParamVector>& updates) {
  require_batch(updates, "coordinate_median");
  const std::size_t n = updates.size();
  const std::size_t d = updates.front().dim();
  std::vector<double> out(d);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = updates[i][j];
    const std::size_t mid = n / 2;
    std::nth_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(mid), col.end());
    const double hi = col[mid];
    if (n % 2 == 1) {
      out[j] = hi;
    } else {
      const double lo = *std::max_element(col.begin(), col.begin() + static_cast<std::ptrdiff_t>(mid));
      out[j] = (lo + hi) / 2.0;
    }
  }
  return ParamVector(std::move(out));
}

ParamVector coordinate_trimmed_mean(const std::vector<ParamVector>& updates,
                                    std::size_t k) {
  require_batch(updates, "coordinate_trimmed_mean");
  const std::size_t n = updates.size();
  if (n <= 2 * k) {
    throw std::invalid_argument("coordinate_trimmed_mean: requires n > 2k");
  }
  const std::size_t d = updates.front().dim();
  const double kept = static_cast<double>(n - 2 * k);
  std::vector<double> out(d);
  std::vector<std::size_t> order(n);
  std::vector<char> dropped(n);
  for (std::size_t j = 0; j < d; ++j) {
    std::fill(dropped.begin(), dropped.end(), 0);
    if (k > 0) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return updates[a][j] < updates[b][j];
      });
      for (std::size_t i = 0; i < k; ++i) {
        dropped[order[i]] = 1;
        dropped[order[n - 1 - i]] = 1;
      }
    }
    // Survivors are summed in input order so k = 0 matches the plain mean
    // bit-for-bit.
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!dropped[i]) acc += updates[i][j];
    }
    out[j] = acc / kept;
  }
  return ParamVector(std::move(out));
}

ParamVector mean(const std::vector<ParamVector>& updates) {
  require_batch(updates, "mean");
  const std::size_t n = updates.size();
  const std::size_t d = updates.front().dim();
  const double dn = static_cast<double>(n);
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += updates[i][j];
    out[j] = acc / dn;
  }
  return ParamVector(std::move(out));
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "add");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] + b[i];
  return ParamVector(std::move(out));
}

ParamVector sub(const ParamVector& a, const ParamVector& b) {
  require_same_dim(a, b, "sub");
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = a[i] - b[i];
  return ParamVector(std::move(out));
}

ParamVector scaled(const ParamVector& a, double c) {
  std::vector<double> out(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) out[i] = c * a[i];
  return ParamVector(std::move(out));
}

}  // namespace vecmath
}  // namespace fedguard
