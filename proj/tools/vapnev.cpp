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

// Command-line front end: train, eval, sample, reconstruct, verify.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vapnev/checkpoint.hpp"
#include "vapnev/config.hpp"
#include "vapnev/data.hpp"
#include "vapnev/errors.hpp"
#include "vapnev/model.hpp"
#include "vapnev/ops.hpp"
#include "vapnev/verify.hpp"

namespace fs = std::filesystem;
using namespace vapnev;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataArgs {
  std::string path;
  std::size_t synthetic = 0;
  std::size_t train_count = 2000;
  std::size_t test_count = 500;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
  auto* data = cmd->add_option("--data", d.path,
                               "CIFAR-10 binary file, or a directory holding data_batch_*.bin "
                               "and test_batch.bin");
  auto* synth = cmd->add_option("--synthetic", d.synthetic,
                                "use N generated surrogate images instead of a dataset");
  data->excludes(synth);
  cmd->add_option("--train-count", d.train_count, "training images to use (0: all)");
  cmd->add_option("--test-count", d.test_count, "held-out images to use (0: all)");
}

ImageBatch fit_resolution(const ImageBatch& b, const ModelConfig& m) {
  if (b.pixels.dim(3) != m.channels) {
    throw ConfigError("dataset has " + std::to_string(b.pixels.dim(3)) + " channels, model " +
                      std::to_string(m.channels));
  }
  if (b.pixels.dim(1) == m.height && b.pixels.dim(2) == m.width) return b;
  if (b.pixels.dim(1) % m.height != 0 || b.pixels.dim(1) / m.height != b.pixels.dim(2) / m.width) {
    throw ConfigError("cannot area-downscale " + shape_string(b.image_shape()) + " to the model");
  }
  return downscale_area(b, b.pixels.dim(1) / m.height);
}

// Loads train and held-out images for a model. Point models draw from the
// two-mode toy density; image models need --data or --synthetic.
TrainTestSplit load_split(const DataArgs& d, const ModelConfig& m, std::uint64_t seed) {
  const std::size_t n_train = d.train_count, n_test = d.test_count;
  if (!m.vae) {
    Rng train_rng(seed + 1), test_rng(seed + 2);
    return {two_mode_points(n_train ? n_train : 10000, train_rng),
            two_mode_points(n_test ? n_test : 10000, test_rng)};
  }
  if (d.synthetic > 0) {
    Rng rng(seed + 3);
    const std::size_t test = n_test ? n_test : d.synthetic / 5;
    const ImageBatch all = synthetic_images(d.synthetic + test, m.height, m.width, m.channels, rng);
    return {slice_images(all, 0, d.synthetic), slice_images(all, d.synthetic, test)};
  }
  if (d.path.empty()) throw UsageError("image presets need --data PATH or --synthetic N");
  TrainTestSplit s = load_cifar_split(d.path, n_train, n_test);
  s.train = fit_resolution(s.train, m);
  s.test = fit_resolution(s.test, m);
  return s;
}

// Prints mean bits/dim for image models, mean NLL in nats for point models.
template <typename T>
double report_eval(VapnevModel<T>& model, const ImageBatch& test, std::uint64_t seed,
                   const char* label) {
  Rng rng(seed + 7);
  const ElboBreakdown b = model.evaluate(test, rng);
  if (model.config().vae) {
    const double bpd = bits_per_dim(b, model.config().dims());
    std::printf("%s bits/dim: %.6f (n=%zu)\n", label, bpd, b.count());
    return bpd;
  }
  const double nll = -b.means().elbo;
  std::printf("%s nll (nats): %.6f (n=%zu)\n", label, nll, b.count());
  return nll;
}

struct TrainArgs {
  std::string preset;
  DataArgs data;
  std::uint64_t seed = 0;
  std::optional<std::size_t> steps, batch, warmup;
  std::optional<double> lr;
  std::string output_dir;
  std::size_t checkpoint_every = 0;
  std::string resume;
  bool use_double = false;
};

template <typename T>
int train(const TrainArgs& a) {
  std::unique_ptr<Trainer<T>> trainer;
  RunConfig rc;
  if (!a.resume.empty()) {
    trainer = restore_trainer<T>(load_checkpoint(a.resume));
    if (a.steps) trainer->set_step_budget(*a.steps);
    rc = trainer->config();
  } else {
    rc = preset(a.preset);
    rc.train.seed = a.seed;
    if (a.steps) rc.train.steps = *a.steps;
    if (a.batch) rc.train.batch = *a.batch;
    if (a.warmup) rc.train.warmup = *a.warmup;
    if (a.lr) rc.train.adam.lr = *a.lr;
    rc.train.checkpoint_every = a.checkpoint_every;
    rc.train.validate();
    trainer = std::make_unique<Trainer<T>>(rc);
  }
  const TrainTestSplit split = load_split(a.data, rc.model, rc.train.seed);
  fs::create_directories(a.output_dir);
  const fs::path out = a.output_dir;
  {
    std::ofstream cfg(out / "config.json");
    cfg << to_canonical_text(rc) << "\n";
  }
  const bool append = !a.resume.empty() && fs::exists(out / "metrics.csv");
  std::ofstream metrics(out / "metrics.csv", append ? std::ios::app : std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + (out / "metrics.csv").string());
  if (!append) metrics << metrics_header() << "\n";
  std::printf("preset %s, seed %llu, %zu training / %zu held-out examples, %zu threads\n",
              rc.model.preset.c_str(), static_cast<unsigned long long>(rc.train.seed),
              split.train.count(), split.test.count(), num_threads());

  const fs::path ckpt = out / "checkpoint.vpnv";
  const std::uint64_t every = rc.train.checkpoint_every;
  try {
    while (trainer->steps_done() < rc.train.steps) {
      const MetricsRow row = trainer->step(split.train);
      metrics << format_metrics(row) << "\n";
      if (every && trainer->steps_done() % every == 0) {
        metrics.flush();
        save_checkpoint(capture_checkpoint(*trainer), ckpt);
      }
    }
  } catch (const NumericsError& e) {
    metrics.flush();
    std::fprintf(stderr, "training diverged at step %llu: %s\n",
                 static_cast<unsigned long long>(trainer->steps_done()), e.what());
    std::fprintf(stderr, "last good checkpoint (if any) kept at %s\n", ckpt.c_str());
    return kFailure;
  }
  metrics.flush();
  save_checkpoint(capture_checkpoint(*trainer), ckpt);
  report_eval(trainer->model(), split.test, rc.train.seed, "test");
  return kOk;
}

template <typename T>
std::unique_ptr<Trainer<T>> open_model(const ModelCheckpoint& c) {
  return restore_trainer<T>(c);
}

bool wants_double(const ModelCheckpoint& c) {
  return !c.tensors.empty() && c.tensors.front().dtype == DType::kFloat64;
}

struct GenArgs {
  std::string checkpoint;
  DataArgs data;
  std::uint64_t seed = 0;
  std::size_t n = 16;
  std::size_t cols = 4;
  bool deterministic_y = false;
  std::string output_dir;
};

void write_points_csv(const ImageBatch& pts, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "x0,x1\n";
  char buf[96];
  for (std::size_t i = 0; i < pts.count(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", pts.pixels[2 * i], pts.pixels[2 * i + 1]);
    out << buf;
  }
}

template <typename T>
int sample(const GenArgs& a, const ModelCheckpoint& c) {
  auto trainer = open_model<T>(c);
  Rng rng(a.seed);
  const ImageBatch s = trainer->model().generate(a.n, rng, a.deterministic_y);
  fs::create_directories(a.output_dir);
  if (!trainer->config().model.vae) {
    write_points_csv(s, fs::path(a.output_dir) / "samples.csv");
  } else {
    write_ppm_grid(s, a.cols, fs::path(a.output_dir) / "samples.ppm");
  }
  std::printf("wrote %zu samples (seed %llu)\n", a.n, static_cast<unsigned long long>(a.seed));
  return kOk;
}

template <typename T>
int reconstruct(const GenArgs& a, const ModelCheckpoint& c) {
  auto trainer = open_model<T>(c);
  const RunConfig& rc = trainer->config();
  if (!rc.model.vae) throw UsageError("reconstruct needs an image model");
  const TrainTestSplit split = load_split(a.data, rc.model, rc.train.seed);
  const ImageBatch originals = slice_images(split.test, 0, a.n);
  Rng rng(a.seed);
  const ImageBatch recon = trainer->model().reconstruct(originals, rng, a.deterministic_y);
  // Pairs side by side: original, reconstruction.
  const std::size_t per = originals.dims_per_image();
  ImageBatch grid{Tensor<double>(Shape{2 * originals.count(), rc.model.height, rc.model.width,
                                       rc.model.channels}),
                  Domain::kUnitInterval};
  for (std::size_t i = 0; i < originals.count(); ++i) {
    for (std::size_t j = 0; j < per; ++j) {
      grid.pixels[(2 * i) * per + j] = originals.pixels[i * per + j] / 255.0;
      grid.pixels[(2 * i + 1) * per + j] = recon.pixels[i * per + j];
    }
  }
  fs::create_directories(a.output_dir);
  write_ppm_grid(grid, 2 * a.cols, fs::path(a.output_dir) / "reconstruction.ppm");
  std::printf("wrote %zu reconstructions (seed %llu)\n", originals.count(),
              static_cast<unsigned long long>(a.seed));
  return kOk;
}

template <typename T>
int eval(const GenArgs& a, const ModelCheckpoint& c) {
  auto trainer = open_model<T>(c);
  const RunConfig& rc = trainer->config();
  const TrainTestSplit split = load_split(a.data, rc.model, rc.train.seed);
  report_eval(trainer->model(), split.test, a.seed, "test");
  return kOk;
}

int verify(bool quick, bool break_logdet, std::uint64_t seed) {
  VerifyOptions o{quick, seed, break_logdet};
  bool ok = true;
  std::printf("%-16s %-6s %-12s %-10s %s\n", "check", "result", "value", "threshold", "detail");
  for (const CheckResult& r : run_verification(o)) {
    std::printf("%-16s %-6s %-12.4g %-10.3g %s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                r.value, r.threshold, r.detail.c_str());
    if (!r.passed) {
      ok = false;
      std::fprintf(stderr, "failed: %s\n", r.name.c_str());
    }
  }
  return ok ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational autoencoder with a conditional real-NVP likelihood"};
  app.require_subcommand(1);
  bool single_thread = false;
  app.add_flag("--single-thread", single_thread, "run every kernel on one thread");

  std::string presets;
  for (const auto& p : preset_names()) presets += (presets.empty() ? "" : ", ") + p;

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a model and write metrics + checkpoint");
  train_cmd->add_option("--preset", ta.preset, "one of: " + presets)
      ->check(CLI::IsMember(preset_names()));
  add_data_options(train_cmd, ta.data);
  train_cmd->add_option("--seed", ta.seed, "seed for initialisation and training");
  train_cmd->add_option("--steps", ta.steps, "step budget");
  train_cmd->add_option("--batch", ta.batch, "batch size");
  train_cmd->add_option("--warmup", ta.warmup, "KL warmup steps (0: weight 1 from the start)");
  train_cmd->add_option("--lr", ta.lr, "ADAM learning rate");
  train_cmd->add_option("--output-dir", ta.output_dir, "where metrics and checkpoints go")
      ->required();
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "steps between checkpoints");
  auto* resume = train_cmd->add_option("--resume", ta.resume, "continue from a checkpoint");
  train_cmd->add_flag("--double", ta.use_double, "train in double precision");
  train_cmd->get_option("--preset")->excludes(resume);

  GenArgs ga;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", ga.checkpoint, "model checkpoint")->required();
    cmd->add_option("--seed", ga.seed, "sampling seed");
  };
  auto* eval_cmd = app.add_subcommand("eval", "held-out bits/dim of a checkpoint");
  add_common(eval_cmd);
  add_data_options(eval_cmd, ga.data);

  auto* sample_cmd = app.add_subcommand("sample", "write a grid of generated samples");
  add_common(sample_cmd);
  auto add_grid = [&](CLI::App* cmd) {
    cmd->add_option("--n", ga.n, "number of images");
    cmd->add_option("--cols", ga.cols, "grid columns")->check(CLI::PositiveNumber);
    cmd->add_flag("--deterministic-y", ga.deterministic_y, "decode the mean y instead of a sample");
    cmd->add_option("--output-dir", ga.output_dir, "output directory")->required();
  };
  add_grid(sample_cmd);

  auto* recon_cmd = app.add_subcommand("reconstruct", "original / reconstruction pairs");
  add_common(recon_cmd);
  add_data_options(recon_cmd, ga.data);
  add_grid(recon_cmd);

  bool quick = false, break_logdet = false;
  std::uint64_t verify_seed = 0;
  auto* verify_cmd = app.add_subcommand("verify", "run the numerical self-checks");
  verify_cmd->add_flag("--quick", quick, "smaller case counts");
  verify_cmd->add_option("--seed", verify_seed, "seed for the random cases");
  verify_cmd->add_flag("--break-logdet", break_logdet)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (single_thread) set_num_threads(1);

  try {
    if (*train_cmd) {
      if (ta.preset.empty() && ta.resume.empty()) throw UsageError("train needs --preset or --resume");
      return ta.use_double ? train<double>(ta) : train<float>(ta);
    }
    if (*verify_cmd) return verify(quick, break_logdet, verify_seed);
    if ((*sample_cmd || *recon_cmd) && ga.n == 0) throw UsageError("--n must be at least 1");
    const ModelCheckpoint c = load_checkpoint(ga.checkpoint);
    const bool wide = wants_double(c);
    if (*eval_cmd) return wide ? eval<double>(ga, c) : eval<float>(ga, c);
    if (*sample_cmd) return wide ? sample<double>(ga, c) : sample<float>(ga, c);
    return wide ? reconstruct<double>(ga, c) : reconstruct<float>(ga, c);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
}
