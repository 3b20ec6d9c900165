#pragma once

#include "stpd/simulate.hpp"
#include "stpd/tensor.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace stpd {

/// Returned for a frame reconstructed exactly.
inline constexpr double kPsnrCap = 99.0;

/// 10 log10(peak^2 / MSE) of one frame, capped at kPsnrCap.
double psnr_frame(std::span<double const> recon, std::span<double const> truth, double peak);

/// Per-frame PSNR of T x H x W series; the peak is the truth series maximum.
std::vector<double> psnr_frames(TensorD const &recon, TensorD const &truth);
/// Mean of psnr_frames.
double psnr(TensorD const &recon, TensorD const &truth);

struct SsimOptions
{
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Local SSIM averaged over window centres whose window lies inside the image
/// and (when `mask` is non-empty) whose centre pixel is in the mask. The
/// dynamic range is the truth series maximum.
std::vector<double> ssim_frames(TensorD const &recon,
                                TensorD const &truth,
                                std::vector<bool> const &mask = {},
                                SsimOptions const &options = {});
double ssim(TensorD const &recon,
            TensorD const &truth,
            std::vector<bool> const &mask = {},
            SsimOptions const &options = {});

struct Tac
{
  std::vector<double> mid_time_s;
  std::vector<double> value;
};

/// Mean over `roi` (H*W flags) of every frame of a T x H x W series.
Tac extract_tac(TensorD const &series, std::vector<bool> const &roi, FrameSchedule const &sched);

/// sum_t (v[t+1] - v[t])^2
double roughness(std::span<double const> values);

/// Linear-interpolation sample quantile (Hyndman-Fan type 7).
double quantile(std::vector<double> values, double q);

struct BoxStats
{
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};
BoxStats box_stats(std::vector<double> const &values);

struct FrameRow
{
  std::string method;
  std::size_t slice = 0;
  std::size_t frame = 0;
  double psnr = 0;
  double ssim = 0;
};

struct TacRow
{
  std::string method;
  std::string roi;
  std::size_t slice = 0;
  double mid_time_s = 0;
  double value = 0;
};

struct MethodSummary
{
  std::string method;
  double mean_psnr = 0;
  double mean_ssim = 0;
  std::vector<double> slice_psnr; ///< series-mean PSNR per slice
  std::vector<double> slice_ssim;
  std::map<std::string, double> roughness; ///< mean TAC roughness per ROI over slices
};

struct MetricsReport
{
  std::vector<FrameRow> frames;
  std::vector<TacRow> tacs;
  std::vector<MethodSummary> methods;

  MethodSummary const &method(std::string const &name) const;
};

struct Roi
{
  std::string name;
  /// One H*W mask shared by all slices, or one per slice.
  std::vector<std::vector<bool>> masks;
};

/// Series are T x H x W (one slice) or S x T x H x W. Methods keep the order
/// given. `fov` restricts SSIM averaging when non-empty.
MetricsReport evaluate(std::vector<std::pair<std::string, TensorD>> const &recons,
                       TensorD const &truth,
                       FrameSchedule const &sched,
                       std::vector<Roi> const &rois = {},
                       std::vector<bool> const &fov = {});

/// metrics.csv, tac.csv, summary.csv and boxplot.csv.
void write_report(MetricsReport const &report, std::filesystem::path const &dir);

} // namespace stpd
