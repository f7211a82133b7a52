// Copyright 2026 The vapnev Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vapnev/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "vapnev/errors.hpp"

namespace vapnev {
namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarPlane = kCifarSide * kCifarSide;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarPlane;

void require_domain(const ImageBatch& b, Domain want, const char* op) {
  if (b.domain != want) {
    throw DomainError(std::string(op) + ": expected " + domain_name(want) +
                      " batch, got " + domain_name(b.domain));
  }
}

void require_nhwc(const ImageBatch& b, const char* op) {
  if (b.pixels.rank() != 4) {
    throw ShapeError(std::string(op) + ": expected NHWC pixels, got " +
                     shape_string(b.pixels.shape()));
  }
}

std::vector<char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<unsigned char, 4> b{static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                 static_cast<unsigned char>(v >> 16),
                                 static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b.data()), 4);
}

std::uint32_t get_u32(const char* p) {
  const auto* u = reinterpret_cast<const unsigned char*>(p);
  return static_cast<std::uint32_t>(u[0]) | (static_cast<std::uint32_t>(u[1]) << 8) |
         (static_cast<std::uint32_t>(u[2]) << 16) | (static_cast<std::uint32_t>(u[3]) << 24);
}

}  // namespace

const char* domain_name(Domain d) {
  switch (d) {
    case Domain::kDiscreteU8: return "discrete-u8";
    case Domain::kUnitInterval: return "unit-interval";
    case Domain::kLogitSpace: return "logit-space";
  }
  return "unknown";
}

std::size_t ImageBatch::dims_per_image() const {
  return pixels.rank() == 4 ? pixels.dim(1) * pixels.dim(2) * pixels.dim(3) : 0;
}

Shape ImageBatch::image_shape() const {
  if (pixels.rank() != 4) return {};
  return {pixels.dim(1), pixels.dim(2), pixels.dim(3)};
}

LabeledImages load_cifar_binary(const std::filesystem::path& path, std::size_t max_records) {
  std::vector<char> bytes = read_file(path);
  if (bytes.size() % kCifarRecord != 0) {
    throw FormatError(path.string() + ": length " + std::to_string(bytes.size()) +
                      " is not a multiple of " + std::to_string(kCifarRecord));
  }
  std::size_t n = bytes.size() / kCifarRecord;
  if (max_records != 0) n = std::min(n, max_records);
  LabeledImages out;
  out.images.domain = Domain::kDiscreteU8;
  out.images.pixels = Tensor<double>(Shape{n, kCifarSide, kCifarSide, 3});
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = reinterpret_cast<const unsigned char*>(bytes.data() + i * kCifarRecord);
    out.labels[i] = rec[0];
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < kCifarPlane; ++p)
        out.images.pixels[(i * kCifarPlane + p) * 3 + c] = rec[1 + c * kCifarPlane + p];
  }
  return out;
}

void write_cifar_binary(const LabeledImages& data, const std::filesystem::path& path) {
  const ImageBatch& b = data.images;
  require_domain(b, Domain::kDiscreteU8, "write_cifar_binary");
  if (b.image_shape() != Shape{kCifarSide, kCifarSide, 3} || data.labels.size() != b.count()) {
    throw ShapeError("write_cifar_binary: need [N,32,32,3] pixels and N labels");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  std::vector<char> rec(kCifarRecord);
  for (std::size_t i = 0; i < b.count(); ++i) {
    rec[0] = static_cast<char>(data.labels[i]);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < kCifarPlane; ++p)
        rec[1 + c * kCifarPlane + p] =
            static_cast<char>(static_cast<unsigned char>(b.pixels[(i * kCifarPlane + p) * 3 + c]));
    os.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!os) throw IoError("failed writing " + path.string());
}

void write_raw_tensor(const Tensor<float>& t, const std::filesystem::path& path) {
  if (t.rank() != 4) throw ShapeError("raw tensor files hold 4-D tensors");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write("VFT1", 4);
  for (std::size_t i = 0; i < 4; ++i) put_u32(os, static_cast<std::uint32_t>(t.dim(i)));
  for (float v : t.data()) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
  }
  if (!os) throw IoError("failed writing " + path.string());
}

Tensor<float> read_raw_tensor(const std::filesystem::path& path) {
  std::vector<char> bytes = read_file(path);
  if (bytes.size() < 20 || std::memcmp(bytes.data(), "VFT1", 4) != 0) {
    throw FormatError(path.string() + ": not a VFT1 tensor file");
  }
  Shape shape(4);
  for (std::size_t i = 0; i < 4; ++i) shape[i] = get_u32(bytes.data() + 4 + 4 * i);
  const std::size_t n = shape_volume(shape);
  if (bytes.size() != 20 + 4 * n) {
    throw FormatError(path.string() + ": payload size does not match header");
  }
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = get_u32(bytes.data() + 20 + 4 * i);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

ImageBatch dequantize(const ImageBatch& batch, Rng& rng) {
  require_domain(batch, Domain::kDiscreteU8, "dequantize");
  ImageBatch out{batch.pixels, Domain::kUnitInterval};
  constexpr double kBelowOne = 1.0 - 0x1.0p-53;
  for (auto& v : out.pixels.data()) v = std::min((v + rng.uniform()) / 256.0, kBelowOne);
  return out;
}

LogitResult logit_transform(const ImageBatch& batch, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("logit_transform: alpha must lie in [0, 1), got " + std::to_string(alpha));
  }
  require_domain(batch, Domain::kUnitInterval, "logit_transform");
  require_nhwc(batch, "logit_transform");
  LogitResult out{{batch.pixels, Domain::kLogitSpace}, std::vector<double>(batch.count(), 0.0)};
  const std::size_t per = batch.dims_per_image();
  for (std::size_t n = 0; n < batch.count(); ++n) {
    double correction = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      double& v = out.batch.pixels[n * per + j];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw DomainError("logit_transform: value " + std::to_string(v) + " outside [0, 1]");
      }
      const double xp = alpha + (1.0 - alpha) * v;
      // 1 - x' = (1 - alpha)(1 - x), exact near x = 1.
      const double log_xp = std::log(xp);
      const double log_one_minus_xp = std::log(1.0 - alpha) + std::log1p(-v);
      v = log_xp - log_one_minus_xp;
      correction += std::log(1.0 - alpha) - log_xp - log_one_minus_xp;
      if (!std::isfinite(v)) {
        throw DomainError("logit_transform: x' reaches 0 or 1, logit is infinite");
      }
    }
    out.correction[n] = correction;
  }
  return out;
}

ImageBatch inverse_logit_transform(const ImageBatch& batch, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) {
    throw ConfigError("inverse_logit_transform: alpha must lie in [0, 1)");
  }
  require_domain(batch, Domain::kLogitSpace, "inverse_logit_transform");
  ImageBatch out{batch.pixels, Domain::kUnitInterval};
  for (auto& v : out.pixels.data()) {
    const double s = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    v = std::clamp((s - alpha) / (1.0 - alpha), 0.0, 1.0);
  }
  return out;
}

ImageBatch hflip_augment(const ImageBatch& batch, Rng& rng, double p) {
  require_nhwc(batch, "hflip_augment");
  ImageBatch out = batch;
  const std::size_t h = batch.pixels.dim(1), w = batch.pixels.dim(2), c = batch.pixels.dim(3);
  for (std::size_t n = 0; n < batch.count(); ++n) {
    if (!(rng.uniform() < p)) continue;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < c; ++ch)
          out.pixels.at(n, y, x, ch) = batch.pixels.at(n, y, w - 1 - x, ch);
  }
  return out;
}

void write_ppm_grid(const ImageBatch& images, std::size_t cols, const std::filesystem::path& path) {
  require_nhwc(images, "write_ppm_grid");
  if (images.count() == 0) throw ContractError("write_ppm_grid: no images");
  if (cols == 0) throw ContractError("write_ppm_grid: cols must be >= 1");
  const std::size_t n = images.count(), h = images.pixels.dim(1), w = images.pixels.dim(2);
  const std::size_t c = images.pixels.dim(3);
  if (c != 1 && c != 3) throw ShapeError("write_ppm_grid: need 1 or 3 channels");
  const double scale = images.domain == Domain::kDiscreteU8 ? 1.0 / 255.0 : 1.0;
  const std::size_t grid_cols = std::min(cols, n);
  const std::size_t grid_rows = (n + cols - 1) / cols;
  const std::size_t width = grid_cols * w, height = grid_rows * h;
  std::vector<unsigned char> rgb(width * height * 3, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t oy = (i / cols) * h, ox = (i % cols) * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        for (std::size_t ch = 0; ch < 3; ++ch) {
          const double v = images.pixels.at(i, y, x, c == 1 ? 0 : ch) * scale;
          const double byte = std::clamp(std::round(v * 255.0), 0.0, 255.0);
          rgb[((oy + y) * width + ox + x) * 3 + ch] = static_cast<unsigned char>(byte);
        }
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P6\n" << width << " " << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

ImageBatch downscale_area(const ImageBatch& batch, std::size_t factor) {
  require_nhwc(batch, "downscale_area");
  if (factor == 0) throw ContractError("downscale_area: factor must be >= 1");
  const std::size_t n = batch.count(), h = batch.pixels.dim(1), w = batch.pixels.dim(2);
  const std::size_t c = batch.pixels.dim(3);
  if (h % factor != 0 || w % factor != 0) {
    throw ShapeError("downscale_area: extents not divisible by " + std::to_string(factor));
  }
  const std::size_t oh = h / factor, ow = w / factor;
  ImageBatch out{Tensor<double>(Shape{n, oh, ow, c}), batch.domain};
  const double inv = 1.0 / static_cast<double>(factor * factor);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x)
        for (std::size_t ch = 0; ch < c; ++ch) {
          double acc = 0;
          for (std::size_t dy = 0; dy < factor; ++dy)
            for (std::size_t dx = 0; dx < factor; ++dx)
              acc += batch.pixels.at(i, y * factor + dy, x * factor + dx, ch);
          double v = acc * inv;
          if (batch.domain == Domain::kDiscreteU8) v = std::round(v);
          out.pixels.at(i, y, x, ch) = v;
        }
  return out;
}

ImageBatch select_images(const ImageBatch& batch, const std::vector<std::size_t>& indices) {
  require_nhwc(batch, "select_images");
  const std::size_t per = batch.dims_per_image();
  Shape shape = batch.pixels.shape();
  shape[0] = indices.size();
  ImageBatch out{Tensor<double>(shape), batch.domain};
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= batch.count()) throw ContractError("select_images: index out of range");
    std::copy_n(batch.pixels.raw() + indices[i] * per, per, out.pixels.raw() + i * per);
  }
  return out;
}

ImageBatch synthetic_images(std::size_t n, std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  ImageBatch out{Tensor<double>(Shape{n, h, w, c}), Domain::kDiscreteU8};
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> base(c), gx(c), gy(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      base[ch] = 60.0 + 120.0 * rng.uniform();
      gx[ch] = 80.0 * (rng.uniform() - 0.5);
      gy[ch] = 80.0 * (rng.uniform() - 0.5);
    }
    const std::size_t blobs = 1 + rng.below(3);
    struct Blob { double cy, cx, r; std::vector<double> colour; };
    std::vector<Blob> bl;
    for (std::size_t b = 0; b < blobs; ++b) {
      Blob blob{rng.uniform(), rng.uniform(), 0.15 + 0.25 * rng.uniform(), std::vector<double>(c)};
      for (auto& col : blob.colour) col = 255.0 * rng.uniform();
      bl.push_back(std::move(blob));
    }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double fy = (static_cast<double>(y) + 0.5) / static_cast<double>(h);
        const double fx = (static_cast<double>(x) + 0.5) / static_cast<double>(w);
        for (std::size_t ch = 0; ch < c; ++ch) {
          double v = base[ch] + gx[ch] * (fx - 0.5) + gy[ch] * (fy - 0.5);
          for (const Blob& b : bl) {
            const double d2 = ((fy - b.cy) * (fy - b.cy) + (fx - b.cx) * (fx - b.cx)) / (b.r * b.r);
            const double wgt = std::exp(-d2);
            v = (1 - wgt) * v + wgt * b.colour[ch];
          }
          v += 6.0 * rng.normal();
          out.pixels.at(i, y, x, ch) = std::clamp(std::round(v), 0.0, 255.0);
        }
      }
  }
  return out;
}

ImageBatch slice_images(const ImageBatch& batch, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> idx;
  for (std::size_t i = begin; i < std::min(batch.count(), begin + count); ++i) idx.push_back(i);
  return select_images(batch, idx);
}

ImageBatch concat_images(const ImageBatch& a, const ImageBatch& b) {
  if (a.count() == 0) return b;
  if (b.count() == 0) return a;
  if (a.image_shape() != b.image_shape() || a.domain != b.domain) {
    throw ShapeError("concat_images: incompatible batches");
  }
  Shape s = a.pixels.shape();
  s[0] += b.count();
  std::vector<double> v(a.pixels.data().begin(), a.pixels.data().end());
  v.insert(v.end(), b.pixels.data().begin(), b.pixels.data().end());
  return {Tensor<double>(s, std::move(v)), a.domain};
}

TrainTestSplit load_cifar_split(const std::filesystem::path& path, std::size_t train_count,
                                std::size_t test_count) {
  namespace fs = std::filesystem;
  TrainTestSplit s;
  if (fs::is_directory(path)) {
    for (int i = 1; i <= 5; ++i) {
      const fs::path f = path / ("data_batch_" + std::to_string(i) + ".bin");
      if (!fs::exists(f)) continue;
      s.train = concat_images(s.train, load_cifar_binary(f).images);
      if (train_count && s.train.count() >= train_count) break;
    }
    const fs::path t = path / "test_batch.bin";
    if (s.train.count() == 0 || !fs::exists(t)) {
      throw IoError("no CIFAR-10 batches found in " + path.string());
    }
    s.test = load_cifar_binary(t, test_count).images;
    if (train_count) s.train = slice_images(s.train, 0, train_count);
    return s;
  }
  if (!fs::exists(path)) throw IoError("dataset not found: " + path.string());
  const ImageBatch all = load_cifar_binary(path).images;
  const std::size_t train =
      train_count ? std::min(train_count, all.count()) : all.count() * 4 / 5;
  s.train = slice_images(all, 0, train);
  s.test = slice_images(all, train, test_count ? test_count : all.count() - train);
  return s;
}

ImageBatch two_mode_points(std::size_t n, Rng& rng) {
  ImageBatch out{Tensor<double>(Shape{n, 1, 1, 2}), Domain::kLogitSpace};
  for (std::size_t i = 0; i < n; ++i) {
    const double a = rng.normal(), b = rng.normal();
    if (rng.uniform() < 0.5) {
      out.pixels[2 * i] = -2.0 + 0.6 * a;
      out.pixels[2 * i + 1] = -1.0 + 0.3 * a + 0.4 * b;
    } else {
      out.pixels[2 * i] = 2.0 + 0.3 * a;
      out.pixels[2 * i + 1] = 1.5 - 0.5 * a + 0.25 * b;
    }
  }
  return out;
}

}  // namespace vapnev
