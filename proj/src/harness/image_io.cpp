#include "stereoadapt/harness/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "stereoadapt/error.hpp"

namespace stereoadapt::harness {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct RawPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;  // row-major, interleaved
};

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

RawPng read_raw_png(const std::string& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  unsigned char sig[8] = {};
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::kMalformedFile, path + ": not a PNG file");
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  if (!png) throw Error(ErrorCode::kIoFailure, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  RawPng raw;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kMalformedFile, path + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) {
    png_set_palette_to_rgb(png);
    depth = 8;
  }
  if ((color == PNG_COLOR_TYPE_GRAY) && depth < 8) {
    png_set_expand_gray_1_2_4_to_8(png);
    depth = 8;
  }
  if (depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);
  raw.width = static_cast<int>(png_get_image_width(png, info));
  raw.height = static_cast<int>(png_get_image_height(png, info));
  raw.channels = png_get_channels(png, info);
  raw.bit_depth = depth;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * raw.height);
  rows.resize(raw.height);
  for (int y = 0; y < raw.height; ++y) rows[y] = buffer.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
  raw.samples.resize(n);
  if (depth == 16) {
    std::memcpy(raw.samples.data(), buffer.data(), n * 2);
  } else {
    for (std::size_t i = 0; i < n; ++i) raw.samples[i] = buffer[i];
  }
  return raw;
}

void write_raw_png(const std::string& path, int width, int height, int channels,
                   const std::vector<std::uint16_t>& samples) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_fail, png_warn);
  if (!png) throw Error(ErrorCode::kIoFailure, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<unsigned char> buffer(samples.size() * 2);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    buffer[2 * i] = static_cast<unsigned char>(samples[i] >> 8);  // PNG is big-endian
    buffer[2 * i + 1] = static_cast<unsigned char>(samples[i] & 0xff);
  }
  std::vector<png_bytep> rows(height);
  const std::size_t rowbytes = static_cast<std::size_t>(width) * channels * 2;
  for (int y = 0; y < height; ++y) rows[y] = buffer.data() + rowbytes * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kIoFailure, path + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 16, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image read_png_image(const std::string& path) {
  const RawPng raw = read_raw_png(path);
  const int colour = raw.channels >= 3 ? 3 : 1;
  const double full = raw.bit_depth == 16 ? 65535.0 : 255.0;
  Image out = Image::chw(colour, raw.height, raw.width);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const std::size_t base = (static_cast<std::size_t>(y) * raw.width + x) * raw.channels;
      for (int c = 0; c < colour; ++c) out.at(c, y, x) = static_cast<float>(raw.samples[base + c] / full);
    }
  }
  return out;
}

void write_png_image(const std::string& path, const Image& image) {
  tensor::require_rank(image.shape(), 3, "write_png_image");
  const int c = image.channels(), h = image.height(), w = image.width();
  if (c != 1 && c != 3) throw Error(ErrorCode::kInvalidArgument, "PNG images need 1 or 3 channels");
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(c) * h * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        const double v = std::clamp(static_cast<double>(image.at(k, y, x)), 0.0, 1.0);
        samples[(static_cast<std::size_t>(y) * w + x) * c + k] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
      }
    }
  }
  write_raw_png(path, w, h, c, samples);
}

GroundTruth read_disparity_png16(const std::string& path) {
  const RawPng raw = read_raw_png(path);
  if (raw.bit_depth != 16 || raw.channels != 1) {
    throw Error(ErrorCode::kMalformedFile, path + ": disparity PNG must be 16-bit single-channel");
  }
  GroundTruth gt{DisparityMap::chw(1, raw.height, raw.width), make_bitmap(raw.height, raw.width)};
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    if (raw.samples[i] == 0) continue;
    gt.disparity[i] = static_cast<float>(raw.samples[i] / 256.0);
    gt.valid[i] = 1.0f;
  }
  return gt;
}

void write_disparity_png16(const std::string& path, const GroundTruth& gt) {
  tensor::require_same(gt.disparity.shape(), gt.valid.shape(), "write_disparity_png16");
  if (gt.disparity.channels() != 1) throw Error(ErrorCode::kInvalidArgument, "disparity maps have one channel");
  std::vector<std::uint16_t> samples(gt.disparity.size(), 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (gt.valid[i] == 0.0f) continue;
    const double raw = std::round(static_cast<double>(gt.disparity[i]) * 256.0);
    samples[i] = static_cast<std::uint16_t>(std::clamp(raw, 1.0, 65535.0));
  }
  write_raw_png(path, gt.disparity.width(), gt.disparity.height(), 1, samples);
}

tensor::Tensor<float> read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path);
  auto malformed = [&](const std::string& why) { return Error(ErrorCode::kMalformedFile, path + ": " + why); };
  std::string magic, scale_text;
  long w = 0, h = 0;
  if (!(in >> magic >> w >> h >> scale_text)) throw malformed("truncated PFM header");
  if (magic != "Pf" && magic != "PF") throw malformed("bad PFM magic '" + magic + "'");
  if (w < 1 || h < 1 || w > (1 << 20) || h > (1 << 20)) throw malformed("bad PFM dimensions");
  double scale = 0.0;
  try {
    std::size_t used = 0;
    scale = std::stod(scale_text, &used);
    if (used != scale_text.size()) throw std::invalid_argument(scale_text);
  } catch (const std::exception&) {
    throw malformed("bad PFM scale '" + scale_text + "'");
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw malformed("PFM scale must be non-zero");
  const int sep = in.get();
  if (sep != '\n' && sep != ' ' && sep != '\r' && sep != '\t') throw malformed("missing separator after header");
  const bool little = scale < 0.0;
  const int c = magic == "PF" ? 3 : 1;
  const std::size_t n = static_cast<std::size_t>(w) * h * c;
  std::vector<unsigned char> bytes(n * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw malformed("truncated PFM payload");
  if (in.peek() != std::char_traits<char>::eof()) throw malformed("trailing bytes after PFM payload");

  tensor::Tensor<float> out = tensor::Tensor<float>::chw(c, static_cast<int>(h), static_cast<int>(w));
  for (long row = 0; row < h; ++row) {
    const long y = h - 1 - row;
    for (long x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        const unsigned char* p = bytes.data() + ((static_cast<std::size_t>(row) * w + x) * c + k) * 4;
        std::uint32_t bits = little ? (std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
                                       std::uint32_t{p[3]} << 24)
                                    : (std::uint32_t{p[3]} | std::uint32_t{p[2]} << 8 | std::uint32_t{p[1]} << 16 |
                                       std::uint32_t{p[0]} << 24);
        out.at(k, static_cast<int>(y), static_cast<int>(x)) = std::bit_cast<float>(bits);
      }
    }
  }
  return out;
}

void write_pfm(const std::string& path, const tensor::Tensor<float>& map) {
  tensor::require_rank(map.shape(), 3, "write_pfm");
  const int c = map.channels(), h = map.height(), w = map.width();
  if (c != 1 && c != 3) throw Error(ErrorCode::kInvalidArgument, "PFM maps need 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoFailure, "cannot open " + path + " for writing");
  out << (c == 1 ? "Pf" : "PF") << '\n' << w << ' ' << h << '\n' << "-1.0000\n";
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x) {
      for (int k = 0; k < c; ++k) {
        const std::uint32_t bits = std::bit_cast<std::uint32_t>(map.at(k, y, x));
        const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>(bits >> 24)};
        out.write(b, 4);
      }
    }
  }
  if (!out) throw Error(ErrorCode::kIoFailure, "write failed for " + path);
}

}  // namespace stereoadapt::harness
