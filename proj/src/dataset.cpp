#include "bbadv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "bbadv/png.hpp"
#include "bbadv/rng.hpp"

namespace bbadv {

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803u;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801u;

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t pos) {
  if (pos + 4 > b.size()) {
    throw LengthError("idx stream truncated at byte " + std::to_string(pos));
  }
  return (static_cast<std::uint32_t>(b[pos]) << 24) |
         (static_cast<std::uint32_t>(b[pos + 1]) << 16) |
         (static_cast<std::uint32_t>(b[pos + 2]) << 8) |
         static_cast<std::uint32_t>(b[pos + 3]);
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

std::span<const std::uint8_t> RawDataset::image_bytes(int index) const {
  const std::size_t sz = static_cast<std::size_t>(rows) * cols;
  return {pixels.data() + static_cast<std::size_t>(index) * sz, sz};
}

RawDataset load_idx(std::span<const std::uint8_t> image_bytes,
                    std::span<const std::uint8_t> label_bytes,
                    const std::string& split) {
  if (image_bytes.empty()) throw LengthError("empty idx image stream");
  if (label_bytes.empty()) throw LengthError("empty idx label stream");

  const std::uint32_t imagic = read_be32(image_bytes, 0);
  if (imagic != kIdxImageMagic) {
    std::ostringstream os;
    os << "bad idx image magic 0x" << std::hex << imagic;
    throw FormatError(os.str());
  }
  const std::uint64_t n = read_be32(image_bytes, 4);
  const std::uint64_t rows = read_be32(image_bytes, 8);
  const std::uint64_t cols = read_be32(image_bytes, 12);
  if (n == 0 || rows == 0 || cols == 0 || rows > 65536 || cols > 65536 ||
      n > (1u << 30)) {
    throw FormatError("implausible idx dimensions");
  }
  const std::uint64_t payload = n * rows * cols;
  if (payload > image_bytes.size() || image_bytes.size() - 16 != payload) {
    throw LengthError("idx image payload is " +
                      std::to_string(image_bytes.size() - 16) +
                      " bytes, header promises " + std::to_string(payload));
  }

  const std::uint32_t lmagic = read_be32(label_bytes, 0);
  if (lmagic != kIdxLabelMagic) {
    std::ostringstream os;
    os << "bad idx label magic 0x" << std::hex << lmagic;
    throw FormatError(os.str());
  }
  const std::uint64_t ln = read_be32(label_bytes, 4);
  if (ln != n) {
    throw FormatError("label count " + std::to_string(ln) +
                      " != image count " + std::to_string(n));
  }
  if (label_bytes.size() - 8 != ln) {
    throw LengthError("idx label payload is " +
                      std::to_string(label_bytes.size() - 8) +
                      " bytes, header promises " + std::to_string(ln));
  }

  RawDataset ds;
  ds.rows = static_cast<int>(rows);
  ds.cols = static_cast<int>(cols);
  ds.split = split;
  ds.pixels.assign(image_bytes.begin() + 16, image_bytes.end());
  ds.labels.resize(ln);
  int max_label = 0;
  for (std::uint64_t i = 0; i < ln; ++i) {
    ds.labels[i] = static_cast<int>(label_bytes[8 + i]) + 1;  // 1-based
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.class_count = max_label;
  return ds;
}

RawDataset load_idx_files(const std::string& image_path,
                          const std::string& label_path,
                          const std::string& split) {
  const auto ib = read_file(image_path);
  const auto lb = read_file(label_path);
  return load_idx(ib, lb, split);
}

std::vector<std::uint8_t> write_idx_images(const RawDataset& ds) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.count()));
  put_be32(out, static_cast<std::uint32_t>(ds.rows));
  put_be32(out, static_cast<std::uint32_t>(ds.cols));
  out.insert(out.end(), ds.pixels.begin(), ds.pixels.end());
  return out;
}

std::vector<std::uint8_t> write_idx_labels(const RawDataset& ds) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.count()));
  for (int l : ds.labels) out.push_back(static_cast<std::uint8_t>(l - 1));
  return out;
}

NormStats fit_norm_stats(const RawDataset& raw) {
  if (raw.count() == 0) throw ParameterError("cannot fit stats on empty data");
  // single-channel IDX data; per-channel loop kept for the stats shape
  NormStats st;
  st.mean.resize(raw.channels, 0.0);
  st.std_dev.resize(raw.channels, 0.0);
  const std::size_t n = raw.pixels.size();
  double sum = 0.0, sum2 = 0.0;
  for (std::uint8_t b : raw.pixels) {
    const double v = b / 255.0;
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = std::max(0.0, sum2 / static_cast<double>(n) - mean * mean);
  st.mean[0] = mean;
  st.std_dev[0] = std::sqrt(var);
  if (st.std_dev[0] <= 0.0) {
    throw ParameterError("degenerate statistics: zero standard deviation");
  }
  double lb = 0.0, ub = 0.0;
  for (int c = 0; c < st.channels(); ++c) {
    lb = std::min(lb, (0.0 - st.mean[c]) / st.std_dev[c]);
    ub = std::max(ub, (1.0 - st.mean[c]) / st.std_dev[c]);
  }
  st.bounds = {static_cast<float>(lb), static_cast<float>(ub)};
  return st;
}

std::vector<LabeledImage> normalize(const RawDataset& raw,
                                    const NormStats& stats) {
  if (stats.channels() != raw.channels) {
    throw ShapeError("stats have " + std::to_string(stats.channels()) +
                     " channels, data has " + std::to_string(raw.channels));
  }
  for (double s : stats.std_dev) {
    if (s <= 0.0) {
      throw ParameterError("degenerate statistics: std must be > 0");
    }
  }
  std::vector<LabeledImage> out;
  out.reserve(raw.count());
  const int w = raw.cols;
  const int h = raw.rows;
  for (int i = 0; i < raw.count(); ++i) {
    const auto src = raw.image_bytes(i);
    std::vector<float> data(static_cast<std::size_t>(w) * h);
    // IDX stores row-major (row, col); our layout is (channel, x, y)
    for (int x = 0; x < w; ++x) {
      for (int y = 0; y < h; ++y) {
        const double v = src[static_cast<std::size_t>(y) * w + x] / 255.0;
        data[static_cast<std::size_t>(x) * h + y] =
            static_cast<float>((v - stats.mean[0]) / stats.std_dev[0]);
      }
    }
    out.push_back(
        {Image(1, w, h, std::move(data), stats.bounds), raw.labels[i]});
  }
  return out;
}

int denormalize_bytes(const Image& img, const NormStats& stats,
                      std::vector<std::uint8_t>& out) {
  if (img.channels() != stats.channels()) {
    throw ShapeError("stats/channel mismatch in denormalize");
  }
  out.assign(static_cast<std::size_t>(img.width()) * img.height() *
                 img.channels(),
             0);
  int clamped = 0;
  for (int y = 1; y <= img.height(); ++y) {
    for (int x = 1; x <= img.width(); ++x) {
      for (int b = 1; b <= img.channels(); ++b) {
        const double v = img.at(b, x, y);
        const double raw =
            std::round((v * stats.std_dev[b - 1] + stats.mean[b - 1]) * 255.0);
        double byte = raw;
        if (byte < 0.0 || byte > 255.0) {
          ++clamped;
          byte = std::clamp(byte, 0.0, 255.0);
        }
        const std::size_t idx =
            (static_cast<std::size_t>(y - 1) * img.width() + (x - 1)) *
                img.channels() +
            (b - 1);
        out[idx] = static_cast<std::uint8_t>(byte);
      }
    }
  }
  return clamped;
}

ExportResult export_png(const Image& img, const NormStats& stats,
                        const std::string& path) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw FormatError("png export supports 1 or 3 channels, got " +
                      std::to_string(img.channels()));
  }
  std::vector<std::uint8_t> bytes;
  ExportResult res;
  res.clamped = denormalize_bytes(img, stats, bytes);
  write_png(path, img.width(), img.height(), img.channels(), bytes);
  if (res.clamped > 0) {
    std::ofstream note(path + ".clamped.txt", std::ios::trunc);
    note << res.clamped << " coordinate(s) outside [0,255] were clamped\n";
  }
  return res;
}

void save_norm_stats(const NormStats& stats, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "channels " << stats.channels() << "\n";
  f.precision(17);
  for (int c = 0; c < stats.channels(); ++c) {
    f << "mean " << stats.mean[c] << "\n";
    f << "std " << stats.std_dev[c] << "\n";
  }
  f << "lb " << stats.bounds.lb << "\n";
  f << "ub " << stats.bounds.ub << "\n";
  if (!f) throw IoError("write failed for " + path);
}

NormStats load_norm_stats(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::string key;
  int channels = 0;
  if (!(f >> key >> channels) || key != "channels" || channels <= 0) {
    throw FormatError("bad norm stats header in " + path);
  }
  NormStats st;
  st.mean.resize(channels);
  st.std_dev.resize(channels);
  for (int c = 0; c < channels; ++c) {
    double m, s;
    if (!(f >> key >> m) || key != "mean") throw FormatError("bad stats file");
    if (!(f >> key >> s) || key != "std") throw FormatError("bad stats file");
    st.mean[c] = m;
    st.std_dev[c] = s;
  }
  double lb, ub;
  if (!(f >> key >> lb) || key != "lb") throw FormatError("bad stats file");
  if (!(f >> key >> ub) || key != "ub") throw FormatError("bad stats file");
  st.bounds = {static_cast<float>(lb), static_cast<float>(ub)};
  return st;
}

// ----------------------------------------------------- synthetic digits

namespace {

struct Pt {
  double x, y;
};

using Stroke = std::vector<Pt>;  // polyline in the unit design square

void add_ellipse(std::vector<Stroke>& s, double cx, double cy, double rx,
                 double ry) {
  Stroke e;
  constexpr int kSegs = 20;
  for (int i = 0; i <= kSegs; ++i) {
    const double a = 2.0 * M_PI * i / kSegs;
    e.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
  }
  s.push_back(std::move(e));
}

std::vector<Stroke> digit_strokes(int digit) {
  std::vector<Stroke> s;
  switch (digit) {
    case 0:
      add_ellipse(s, 0.50, 0.50, 0.27, 0.40);
      break;
    case 1:
      s.push_back({{0.52, 0.08}, {0.52, 0.92}});
      s.push_back({{0.34, 0.24}, {0.52, 0.08}});
      break;
    case 2:
      s.push_back({{0.24, 0.30}, {0.28, 0.15}, {0.50, 0.08}, {0.72, 0.15},
                   {0.76, 0.30}, {0.68, 0.46}, {0.26, 0.90}});
      s.push_back({{0.26, 0.90}, {0.78, 0.90}});
      break;
    case 3:
      s.push_back({{0.26, 0.14}, {0.50, 0.08}, {0.72, 0.18}, {0.72, 0.36},
                   {0.52, 0.48}});
      s.push_back({{0.52, 0.48}, {0.74, 0.60}, {0.74, 0.80}, {0.50, 0.92},
                   {0.26, 0.84}});
      break;
    case 4:
      s.push_back({{0.62, 0.08}, {0.20, 0.62}});
      s.push_back({{0.20, 0.62}, {0.84, 0.62}});
      s.push_back({{0.62, 0.08}, {0.62, 0.92}});
      break;
    case 5:
      s.push_back({{0.74, 0.08}, {0.30, 0.08}, {0.27, 0.46}});
      s.push_back({{0.27, 0.46}, {0.55, 0.42}, {0.74, 0.56}, {0.74, 0.76},
                   {0.54, 0.92}, {0.28, 0.85}});
      break;
    case 6:
      s.push_back({{0.68, 0.10}, {0.42, 0.28}, {0.30, 0.52}, {0.30, 0.74},
                   {0.48, 0.92}, {0.68, 0.82}, {0.72, 0.64}, {0.56, 0.50},
                   {0.34, 0.58}});
      break;
    case 7:
      s.push_back({{0.22, 0.10}, {0.78, 0.10}});
      s.push_back({{0.78, 0.10}, {0.42, 0.92}});
      break;
    case 8:
      add_ellipse(s, 0.50, 0.29, 0.20, 0.20);
      add_ellipse(s, 0.50, 0.71, 0.24, 0.21);
      break;
    case 9:
      add_ellipse(s, 0.50, 0.32, 0.22, 0.22);
      s.push_back({{0.72, 0.36}, {0.64, 0.92}});
      break;
    default:
      throw ParameterError("digit outside [0..9]");
  }
  return s;
}

double seg_distance(Pt p, Pt a, Pt b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double dx = p.x - (a.x + t * vx);
  const double dy = p.y - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

RawDataset make_synth_digits(int count, std::uint64_t seed,
                             const std::string& split) {
  if (count <= 0) throw ParameterError("synth digit count must be positive");
  constexpr int kSide = 28;
  RawDataset ds;
  ds.rows = kSide;
  ds.cols = kSide;
  ds.split = split;
  ds.class_count = 10;
  ds.labels.resize(count);
  ds.pixels.assign(static_cast<std::size_t>(count) * kSide * kSide, 0);

  Rng rng(seed);
  for (int i = 0; i < count; ++i) {
    const int digit = static_cast<int>(rng.below(10));
    ds.labels[i] = digit + 1;

    const double angle = rng.range(-0.35, 0.35);
    const double scale = rng.range(12.0, 21.0);
    const double shear = rng.range(-0.28, 0.28);
    const double tx = 14.0 + rng.range(-3.5, 3.5);
    const double ty = 14.0 + rng.range(-3.5, 3.5);
    const double thick = rng.range(0.55, 1.15);
    const double bright = rng.range(120.0, 255.0);
    const double noise_amp = rng.range(0.0, 5.0);

    const double ca = std::cos(angle), sa = std::sin(angle);
    auto warp = [&](Pt p) -> Pt {
      const double ux = (p.x - 0.5) + shear * (p.y - 0.5);
      const double uy = p.y - 0.5;
      return {scale * (ca * ux - sa * uy) + tx, scale * (sa * ux + ca * uy) + ty};
    };

    std::vector<Stroke> strokes = digit_strokes(digit);
    for (auto& st : strokes) {
      for (auto& p : st) p = warp(p);
    }

    std::uint8_t* px = ds.pixels.data() + static_cast<std::size_t>(i) * kSide * kSide;
    for (int y = 0; y < kSide; ++y) {
      for (int x = 0; x < kSide; ++x) {
        const Pt p{static_cast<double>(x), static_cast<double>(y)};
        double d = 1e9;
        for (const auto& st : strokes) {
          for (std::size_t k = 0; k + 1 < st.size(); ++k) {
            d = std::min(d, seg_distance(p, st[k], st[k + 1]));
          }
        }
        // soft edge: full ink inside the stroke, ~1px falloff outside
        double ink = std::clamp((thick - d) / 1.0 + 0.5, 0.0, 1.0);
        double v = ink * bright + rng.range(-noise_amp, noise_amp);
        px[y * kSide + x] =
            static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      }
    }
  }
  return ds;
}

}  // namespace bbadv
