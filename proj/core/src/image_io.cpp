#include "abhe/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "abhe/error.hpp"

namespace abhe::io {

namespace {

Tensor read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError(path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;  // alpha is dropped by compositing on black
  std::vector<png_byte> bytes(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, bytes.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError(path.string() + ": " + image.message);
  }
  std::vector<float> out(bytes.size() / 3);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(bytes[3 * i] + bytes[3 * i + 1] + bytes[3 * i + 2]) / (3.0f * 255.0f);
  }
  return Tensor::from_vector({static_cast<int64_t>(image.height), static_cast<int64_t>(image.width)}, std::move(out));
}

// Next whitespace-separated header token, skipping '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

Tensor read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  if (magic != "P5" && magic != "P6") throw IoError(path.string() + ": only binary PGM (P5) and PPM (P6) are supported");
  int64_t width = 0, height = 0, maxval = 0;
  try {
    width = std::stoll(pnm_token(in));
    height = std::stoll(pnm_token(in));
    maxval = std::stoll(pnm_token(in));
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed header");
  }
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) throw IoError(path.string() + ": malformed header");
  const int channels = magic == "P6" ? 3 : 1;
  const int bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(width * height * channels * bytes));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError(path.string() + ": truncated pixel data");
  std::vector<float> out(static_cast<std::size_t>(width * height));
  for (std::size_t i = 0; i < out.size(); ++i) {
    float s = 0.0f;
    for (int c = 0; c < channels; ++c) {
      const std::size_t k = (i * channels + c) * bytes;
      s += bytes == 2 ? static_cast<float>(raw[k] << 8 | raw[k + 1]) : static_cast<float>(raw[k]);
    }
    out[i] = s / (static_cast<float>(maxval) * channels);
  }
  return Tensor::from_vector({height, width}, std::move(out));
}

}  // namespace

Tensor read_gray(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".png") return read_png(path);
  if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return read_pnm(path);
  throw IoError(path.string() + ": unsupported image format (expected .png, .pgm or .ppm)");
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  int64_t h = 0, w = 0;
  if (image.rank() == 2) {
    h = image.dim(0), w = image.dim(1);
  } else if (image.rank() == 3 && image.dim(2) == 1) {
    h = image.dim(0), w = image.dim(1);
  } else if (image.rank() == 4 && image.dim(0) == 1 && image.dim(3) == 1) {
    h = image.dim(1), w = image.dim(2);
  } else {
    throw ShapeError("write_png: expected a single grayscale image, got " + shape_to_string(image.shape()));
  }
  std::vector<png_byte> bytes(static_cast<std::size_t>(h * w));
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    const float v = std::clamp(image.data()[i], 0.0f, 1.0f);
    bytes[i] = static_cast<png_byte>(std::lround(v * 255.0f));
  }
  png_image out{};
  out.version = PNG_IMAGE_VERSION;
  out.width = static_cast<png_uint_32>(w);
  out.height = static_cast<png_uint_32>(h);
  out.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&out, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("failed writing " + path.string() + ": " + out.message);
  }
}

}  // namespace abhe::io
