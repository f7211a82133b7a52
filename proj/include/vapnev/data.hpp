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

#ifndef VAPNEV_DATA_HPP_
#define VAPNEV_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "vapnev/rng.hpp"
#include "vapnev/tensor.hpp"

namespace vapnev {

// Which space the pixel values of an ImageBatch live in.
//   kDiscreteU8:    integers 0..255
//   kUnitInterval:  [0, 1]
//   kLogitSpace:    finite reals, the space the flow models
enum class Domain { kDiscreteU8, kUnitInterval, kLogitSpace };

const char* domain_name(Domain d);

struct ImageBatch {
  Tensor<double> pixels;  // [N, H, W, C]
  Domain domain = Domain::kDiscreteU8;

  std::size_t count() const { return pixels.rank() == 4 ? pixels.dim(0) : 0; }
  std::size_t dims_per_image() const;  // H * W * C
  Shape image_shape() const;           // [H, W, C]
};

struct LabeledImages {
  ImageBatch images;
  std::vector<std::uint8_t> labels;
};

// CIFAR-10 binary records: 1 label byte + 1024 R, 1024 G, 1024 B bytes, each
// plane row-major 32x32. Pixels come back as NHWC. `max_records` = 0 reads
// everything. Throws FormatError if the file is not a whole number of records.
LabeledImages load_cifar_binary(const std::filesystem::path& path,
                                std::size_t max_records = 0);
void write_cifar_binary(const LabeledImages& data, const std::filesystem::path& path);

struct TrainTestSplit {
  ImageBatch train;
  ImageBatch test;
};

// A directory is read as the standard CIFAR-10 layout (data_batch_1..5.bin
// for training, test_batch.bin held out); a single file is split, training
// images first. Counts of 0 take everything available (for a single file,
// 80% goes to training).
TrainTestSplit load_cifar_split(const std::filesystem::path& path, std::size_t train_count,
                                std::size_t test_count);

// Raw tensor file: "VFT1", u32 N, H, W, C (little-endian), float32 data.
void write_raw_tensor(const Tensor<float>& t, const std::filesystem::path& path);
Tensor<float> read_raw_tensor(const std::filesystem::path& path);

// (pixel + u) / 256 with u ~ U(0, 1), fresh per call.
ImageBatch dequantize(const ImageBatch& batch, Rng& rng);

struct LogitResult {
  ImageBatch batch;                // logit space
  std::vector<double> correction;  // per-sample log|d logit / d x| in nats
};

// x' = alpha + (1 - alpha) x,  y = log(x' / (1 - x')).
// correction = sum over components of log((1 - alpha) / (x' (1 - x'))).
LogitResult logit_transform(const ImageBatch& batch, double alpha);

// x = (sigmoid(y) - alpha) / (1 - alpha), clamped to [0, 1].
ImageBatch inverse_logit_transform(const ImageBatch& batch, double alpha);

// Mirrors each image left-right independently with probability p.
ImageBatch hflip_augment(const ImageBatch& batch, Rng& rng, double p = 0.5);

// Binary PPM (P6) with the images tiled row-major, `cols` per row. Values are
// round(x * 255) clamped to [0, 255]; single-channel images are written gray.
void write_ppm_grid(const ImageBatch& images, std::size_t cols,
                    const std::filesystem::path& path);

// Averages non-overlapping factor x factor blocks. Discrete batches are
// rounded back to integers.
ImageBatch downscale_area(const ImageBatch& batch, std::size_t factor);

ImageBatch select_images(const ImageBatch& batch, const std::vector<std::size_t>& indices);
// Images [begin, begin + count), clipped to the batch.
ImageBatch slice_images(const ImageBatch& batch, std::size_t begin, std::size_t count);
ImageBatch concat_images(const ImageBatch& a, const ImageBatch& b);

// Smooth synthetic pictures (colour gradients plus soft blobs), discrete-u8.
ImageBatch synthetic_images(std::size_t n, std::size_t h, std::size_t w,
                            std::size_t c, Rng& rng);

// Two-dimensional points [N, 1, 1, 2] in the logit-space domain, drawn from
// an equal mixture of two well separated, differently shaped Gaussians.
ImageBatch two_mode_points(std::size_t n, Rng& rng);

}  // namespace vapnev

#endif  // VAPNEV_DATA_HPP_
