#pragma once

#include <stpd/projector.hpp>
#include <stpd/recon.hpp>
#include <stpd/simulate.hpp>
#include <stpd/stpdnet.hpp>
#include <stpd/train.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace stpd::cli {

/// Bad or unknown configuration content.
class ConfigError : public ParameterError
{
public:
  using ParameterError::ParameterError;
};

struct GeometryConfig
{
  std::size_t views = 160;
  std::size_t bins = 128;
  std::size_t image_size = 128;
  double pixel_size = 1.0;
  double bin_spacing = 1.0;
  std::optional<double> fov_radius;
};

struct PhantomConfig
{
  std::size_t n_slices = 1;
  double variability = 0.0;
};

struct ScanConfig
{
  double first_counts = 5000;
  double last_counts = 20000;
  double background_fraction = 0.0;
};

struct KemstConfig
{
  KernelOptions kernel;
  std::size_t iters = 20;
  std::size_t composite_groups = 3;
  std::size_t composite_iters = 20;
};

struct TrainSection
{
  std::size_t epochs = 200;
  std::size_t batch_size = 2;
  double base_lr = 8e-4;
  double lr_decay = 0.99;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;
  /// Slices held out (from the end of the dataset) for validation.
  std::size_t validation_slices = 1;
  bool recalibrate_bn = true;
};

/// Every field defaults to the full-size setup: 160 x 128 sinograms,
/// 128 x 128 images, 18 frames, 10 blocks.
struct ExperimentConfig
{
  GeometryConfig geometry;
  PhantomConfig phantom;
  ScanConfig scan;
  std::vector<std::pair<std::size_t, double>> schedule = {{3, 60.0}, {9, 180.0}, {6, 300.0}};
  NetworkConfig network;
  TrainSection train;
  KemstConfig kemst;

  ProjectorGeometry projector_geometry() const;
  FrameSchedule frame_schedule() const;
  ScanModel scan_model() const;
  TrainConfig train_config() const;

  /// Throws ConfigError on syntax errors, wrong types, unknown sections or
  /// unknown keys.
  static ExperimentConfig parse(std::string const &text, std::string const &source = "<config>");
  static ExperimentConfig load(std::filesystem::path const &path);
  std::string to_toml() const;
};

} // namespace stpd::cli
