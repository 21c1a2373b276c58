#pragma once

#include <optional>
#include <vector>

#include "fedguard/round_record.hpp"

namespace fedguard {

// Grayscale image with pixels in [0, 1], row-major.
struct Image {
  std::vector<double> pixels;
  int height = 0;
  int width = 0;
};

Image make_image(std::vector<double> pixels, int height, int width);

namespace metrics {

inline constexpr int kSsimWindow = 8;

// 10 * log10(1 / MSE) in decibels with MAX = 1; +infinity when the images are
// identical.
double psnr(const Image& a, const Image& b);

// Mean SSIM over 8x8 uniform windows at stride 1, c1 = 0.01^2, c2 = 0.03^2,
// dynamic range 1. Requires both sides to be at least the window size.
double ssim(const Image& a, const Image& b);

// Table-row summary of one run. Fields are null when no round in scope
// carried the value; lpips is always null (no perceptual network here).
struct Summary {
  std::optional<double> mean_accuracy;
  std::optional<double> min_accuracy;
  std::optional<double> max_accuracy;
  std::optional<double> final_accuracy;
  std::optional<double> indicator_rate;
  std::optional<double> mean_psnr;
  std::optional<double> mean_ssim;
  std::optional<double> lpips;
};

// Aggregates a record stream. The attack window [window_start, window_end)
// scopes indicator rate and the image metrics; an empty window yields nulls.
Summary summarize(const std::vector<RoundRecord>& records, int window_start,
                  int window_end);

}  // namespace metrics
}  // namespace fedguard
