#include "tryon/png_io.hpp"

#include <png.h>

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>

#include "tryon/error.hpp"

namespace tryon {
namespace {

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

png_uint_32 format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    case 4: return PNG_FORMAT_RGBA;
    default: throw InputError("PNG supports 1, 3 or 4 channels, got " + std::to_string(channels));
  }
}

std::vector<std::uint8_t> interleave(const Image& img) {
  const int c = img.channels();
  std::vector<std::uint8_t> buf(img.plane_size() * c);
  for (int ch = 0; ch < c; ++ch) {
    auto p = img.plane(ch);
    for (std::size_t i = 0; i < p.size(); ++i) buf[i * c + ch] = to_byte(p[i]);
  }
  return buf;
}

Image deinterleave(const std::vector<std::uint8_t>& buf, int channels, int h, int w) {
  Image img(channels, h, w);
  for (int ch = 0; ch < channels; ++ch) {
    auto p = img.plane(ch);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = buf[i * channels + ch] / 255.0f;
  }
  return img;
}

int channels_of(png_uint_32 format) {
  if (format & PNG_FORMAT_FLAG_COLOR) return (format & PNG_FORMAT_FLAG_ALPHA) ? 4 : 3;
  return 1;
}

Image finish_read(png_image& image, const std::string& what) {
  const int channels = channels_of(image.format);
  image.format = format_for(channels);
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    std::string msg = image.message;
    png_image_free(&image);
    throw InputError("cannot decode PNG " + what + ": " + msg);
  }
  return deinterleave(buf, channels, static_cast<int>(image.height), static_cast<int>(image.width));
}

}  // namespace

Image read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw InputError("cannot read PNG " + path.string() + ": " + image.message);
  return finish_read(image, path.string());
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw InputError(std::string("cannot decode PNG bytes: ") + image.message);
  return finish_read(image, "bytes");
}

void write_png(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_png(img);
  std::ofstream f(path, std::ios::binary);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InputError("cannot write PNG " + path.string());
}

void write_png(const std::filesystem::path& path, const SoftMask& mask) {
  write_png(path, mask.to_image());
}

SoftMask read_mask_png(const std::filesystem::path& path) {
  const Image img = read_png(path);
  if (img.channels() != 1) throw InputError("mask PNG must be single-channel: " + path.string());
  return SoftMask::from_image(img);
}

// One pass through the low-level writer: the simplified API has no compression knob and
// needs a second full encode to size a memory buffer. Fastest zlib level; frames are
// written once and streamed, so speed beats a few percent of size.
std::vector<std::uint8_t> encode_png(const Image& img) {
  format_for(img.channels());  // rejects unsupported channel counts
  const int color = img.channels() == 1 ? PNG_COLOR_TYPE_GRAY : img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_RGBA;
  const auto buf = interleave(img);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height()));
  const std::size_t stride = static_cast<std::size_t>(img.width()) * img.channels();
  for (std::size_t y = 0; y < rows.size(); ++y) rows[y] = const_cast<png_bytep>(buf.data() + y * stride);
  std::vector<std::uint8_t> out;
  out.reserve(buf.size() / 2 + 1024);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw InputError("cannot encode PNG: out of memory");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("cannot encode PNG");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* v = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(p));
        v->insert(v->end(), data, data + n);
      },
      nullptr);
  png_set_compression_level(png, Z_BEST_SPEED);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image quantize_8bit(const Image& img) {
  Image out = img;
  for (float& v : out.data()) v = to_byte(v) / 255.0f;
  return out;
}

void write_split_representation(const std::filesystem::path& dir, const std::string& stem,
                                const Image& six_channel) {
  if (six_channel.channels() != 6) throw InputError("split representation needs 6 channels");
  write_png(dir / (stem + "_vm.png"), slice_channels(six_channel, 0, 3));
  write_png(dir / (stem + "_sdp.png"), slice_channels(six_channel, 3, 3));
}

Image read_split_representation(const std::filesystem::path& dir, const std::string& stem) {
  return concat_channels(read_png(dir / (stem + "_vm.png")), read_png(dir / (stem + "_sdp.png")));
}

}  // namespace tryon
