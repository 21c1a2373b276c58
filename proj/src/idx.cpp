#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "fedguard/models.hpp"

namespace fedguard::models {
namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("idx: cannot open " + path);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t off,
                        const std::string& path) {
  if (off + 4 > buf.size()) throw std::runtime_error("idx: truncated file " + path);
  return (static_cast<std::uint32_t>(buf[off]) << 24) |
         (static_cast<std::uint32_t>(buf[off + 1]) << 16) |
         (static_cast<std::uint32_t>(buf[off + 2]) << 8) |
         static_cast<std::uint32_t>(buf[off + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img_buf = read_all(images_path);
  if (read_be32(img_buf, 0, images_path) != kImageMagic) {
    throw std::runtime_error("idx: wrong magic in images file " + images_path);
  }
  const std::uint32_t count = read_be32(img_buf, 4, images_path);
  const std::uint32_t rows = read_be32(img_buf, 8, images_path);
  const std::uint32_t cols = read_be32(img_buf, 12, images_path);
  const std::size_t pixels = static_cast<std::size_t>(count) * rows * cols;
  if (img_buf.size() != 16 + pixels) {
    throw std::runtime_error("idx: truncated file " + images_path);
  }

  const auto lbl_buf = read_all(labels_path);
  if (read_be32(lbl_buf, 0, labels_path) != kLabelMagic) {
    throw std::runtime_error("idx: wrong magic in labels file " + labels_path);
  }
  const std::uint32_t lbl_count = read_be32(lbl_buf, 4, labels_path);
  if (lbl_buf.size() != 8 + lbl_count) {
    throw std::runtime_error("idx: truncated file " + labels_path);
  }
  if (lbl_count != count) {
    throw std::runtime_error("idx: count mismatch between " + images_path + " and " + labels_path);
  }

  std::vector<double> samples(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    samples[i] = static_cast<double>(img_buf[16 + i]) / 255.0;
  }
  std::vector<int> labels(count);
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    labels[i] = static_cast<int>(lbl_buf[8 + i]);
    max_label = std::max(max_label, labels[i]);
  }
  return make_dataset(std::move(samples), std::move(labels), max_label + 1,
                      static_cast<int>(rows), static_cast<int>(cols));
}

}  // namespace fedguard::models
