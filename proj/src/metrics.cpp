#include "fedguard/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedguard {

Image make_image(std::vector<double> pixels, int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("Image: bad shape");
  if (pixels.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw std::invalid_argument("Image: pixel count does not match shape");
  }
  for (double v : pixels) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("Image: pixel values must be in [0, 1]");
    }
  }
  return Image{std::move(pixels), height, width};
}

namespace metrics {
namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  const int w = kSsimWindow;
  if (a.height < w || a.width < w) {
    throw std::invalid_argument("ssim: image smaller than window");
  }
  const double n = static_cast<double>(w) * static_cast<double>(w);
  double total = 0.0;
  int windows = 0;
  for (int top = 0; top + w <= a.height; ++top) {
    for (int left = 0; left + w <= a.width; ++left) {
      double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int r = 0; r < w; ++r) {
        const std::size_t off = static_cast<std::size_t>(top + r) * static_cast<std::size_t>(a.width) +
                                static_cast<std::size_t>(left);
        for (int c = 0; c < w; ++c) {
          const double x = a.pixels[off + static_cast<std::size_t>(c)];
          const double y = b.pixels[off + static_cast<std::size_t>(c)];
          sx += x;
          sy += y;
          sxx += x * x;
          syy += y * y;
          sxy += x * y;
        }
      }
      const double mx = sx / n;
      const double my = sy / n;
      const double vx = sxx / n - mx * mx;
      const double vy = syy / n - my * my;
      const double cov = sxy / n - mx * my;
      total += ((2.0 * mx * my + kC1) * (2.0 * cov + kC2)) /
               ((mx * mx + my * my + kC1) * (vx + vy + kC2));
      ++windows;
    }
  }
  return total / static_cast<double>(windows);
}

Summary summarize(const std::vector<RoundRecord>& records, int window_start,
                  int window_end) {
  if (records.empty()) throw std::invalid_argument("summarize: empty record list");
  Summary s;

  double acc_sum = 0.0;
  int acc_n = 0;
  for (const RoundRecord& r : records) {
    if (!r.accuracy) continue;
    const double a = *r.accuracy;
    acc_sum += a;
    ++acc_n;
    if (!s.min_accuracy || a < *s.min_accuracy) s.min_accuracy = a;
    if (!s.max_accuracy || a > *s.max_accuracy) s.max_accuracy = a;
    s.final_accuracy = a;
  }
  if (acc_n > 0) s.mean_accuracy = acc_sum / acc_n;

  double ind_sum = 0.0;
  int ind_n = 0;
  double psnr_sum = 0.0;
  int psnr_n = 0;
  double ssim_sum = 0.0;
  int ssim_n = 0;
  for (const RoundRecord& r : records) {
    if (r.round < window_start || r.round >= window_end) continue;
    ind_sum += r.indicator;
    ++ind_n;
    if (r.psnr) {
      psnr_sum += *r.psnr;
      ++psnr_n;
    }
    if (r.ssim) {
      ssim_sum += *r.ssim;
      ++ssim_n;
    }
  }
  if (ind_n > 0) s.indicator_rate = ind_sum / ind_n;
  if (psnr_n > 0) s.mean_psnr = psnr_sum / psnr_n;
  if (ssim_n > 0) s.mean_ssim = ssim_sum / ssim_n;
  return s;
}

}  // namespace metrics
}  // namespace fedguard
