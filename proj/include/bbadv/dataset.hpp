#ifndef BBADV_DATASET_HPP
#define BBADV_DATASET_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bbadv/image.hpp"

namespace bbadv {

/// Normalization statistics on the [0,1] byte scale, one entry per channel,
/// plus the image-space bounds they induce:
///   lb = min_c (0 - mean_c)/std_c,  ub = max_c (1 - mean_c)/std_c.
/// Means are in [0,1] for byte data, so lb <= 0 <= ub always holds.
struct NormStats {
  std::vector<double> mean;
  std::vector<double> std_dev;
  Bounds bounds;

  int channels() const { return static_cast<int>(mean.size()); }
};

/// Raw 8-bit dataset as parsed from IDX files. Labels are stored 1-based
/// (IDX label bytes are 0-based class indices).
struct RawDataset {
  int rows = 0;      // image height
  int cols = 0;      // image width
  int channels = 1;  // IDX image tensors are single-channel
  std::vector<std::uint8_t> pixels;  // count * rows * cols bytes
  std::vector<int> labels;           // 1-based
  std::string split;
  int class_count = 0;

  int count() const { return static_cast<int>(labels.size()); }
  std::span<const std::uint8_t> image_bytes(int index) const;
};

/// Parse the IDX pair: big-endian magic 0x00000803 + (count, rows, cols)
/// for images, 0x00000801 + (count) for labels, then raw unsigned bytes.
RawDataset load_idx(std::span<const std::uint8_t> image_bytes,
                    std::span<const std::uint8_t> label_bytes,
                    const std::string& split = "test");

RawDataset load_idx_files(const std::string& image_path,
                          const std::string& label_path,
                          const std::string& split = "test");

/// Serialize back to IDX (images and labels separately). Labels are written
/// 0-based, mirroring load_idx.
std::vector<std::uint8_t> write_idx_images(const RawDataset& ds);
std::vector<std::uint8_t> write_idx_labels(const RawDataset& ds);

/// Per-channel mean/std (population) of the byte data scaled to [0,1].
NormStats fit_norm_stats(const RawDataset& raw);

/// Map every pixel through (byte/255 - mean)/std. Produced images carry the
/// stats' bounds and always pass validate().
std::vector<LabeledImage> normalize(const RawDataset& raw,
                                    const NormStats& stats);

/// Invert normalization to bytes: round((v*std + mean)*255), clamped to
/// [0,255]. Returns the number of coordinates that needed clamping.
int denormalize_bytes(const Image& img, const NormStats& stats,
                      std::vector<std::uint8_t>& out);

struct ExportResult {
  int clamped = 0;  // coordinates clamped during denormalization
};

/// Denormalize and write a standard 8-bit PNG (grayscale or RGB). When any
/// coordinate clamps (out-of-range adversarial values), a sidecar note
/// "<path>.clamped.txt" records the count.
ExportResult export_png(const Image& img, const NormStats& stats,
                        const std::string& path);

void save_norm_stats(const NormStats& stats, const std::string& path);
NormStats load_norm_stats(const std::string& path);

/// Deterministic synthetic handwritten-digit stand-in: 28x28 grayscale
/// glyphs (10 classes) under random affine warp, stroke width, brightness
/// and noise. Used for desk-scale runs when no IDX dataset is at hand.
RawDataset make_synth_digits(int count, std::uint64_t seed,
                             const std::string& split);

}  // namespace bbadv

#endif
