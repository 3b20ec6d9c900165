#include "stpd/metrics.hpp"

#include "stpd/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace stpd {

namespace {

double series_max(TensorD const &t)
{
  if (t.empty()) { throw ParameterError("metrics: empty series"); }
  return *std::max_element(t.data().begin(), t.data().end());
}

void check_pair(TensorD const &recon, TensorD const &truth, char const *what)
{
  if (truth.rank() != 3) {
    throw ParameterError(std::string(what) + ": expected T x H x W, got " + shape_string(truth.shape()));
  }
  if (recon.shape() != truth.shape()) {
    throw ParameterError(std::string(what) + ": shape mismatch " + shape_string(recon.shape()) + " vs " +
                         shape_string(truth.shape()));
  }
}

double mean(std::vector<double> const &v)
{
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Valid-mode separable filtering of an H x W image with a 1D kernel.
std::vector<double> filter_valid(std::vector<double> const &img, std::size_t H, std::size_t W,
                                 std::vector<double> const &k)
{
  std::size_t const n = k.size(), oh = H - n + 1, ow = W - n + 1;
  std::vector<double> tmp(H * ow, 0.0), out(oh * ow, 0.0);
  for (std::size_t r = 0; r < H; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) { s += k[i] * img[r * W + c + i]; }
      tmp[r * ow + c] = s;
    }
  }
  for (std::size_t r = 0; r < oh; ++r) {
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) { s += k[i] * tmp[(r + i) * ow + c]; }
      out[r * ow + c] = s;
    }
  }
  return out;
}

std::string fmt_double(double v)
{
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

std::vector<TensorD> split_slices(TensorD const &t, char const *what)
{
  if (t.rank() == 3) { return {t}; }
  if (t.rank() != 4) {
    throw ParameterError(std::string(what) + ": expected T x H x W or S x T x H x W, got " + shape_string(t.shape()));
  }
  std::vector<TensorD> out;
  Shape const s{t.dim(1), t.dim(2), t.dim(3)};
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    TensorD one(s);
    auto const src = t.slab(i);
    std::copy(src.begin(), src.end(), one.data().begin());
    out.push_back(std::move(one));
  }
  return out;
}

} // namespace

double psnr_frame(std::span<double const> recon, std::span<double const> truth, double peak)
{
  if (recon.size() != truth.size() || truth.empty()) { throw ParameterError("psnr: size mismatch"); }
  if (!(peak > 0)) { throw ParameterError("psnr: truth is all zero"); }
  double s = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    double const d = recon[i] - truth[i];
    s += d * d;
  }
  double const mse = s / static_cast<double>(truth.size());
  if (mse == 0) { return kPsnrCap; }
  return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

std::vector<double> psnr_frames(TensorD const &recon, TensorD const &truth)
{
  check_pair(recon, truth, "psnr");
  double const peak = series_max(truth);
  if (!(peak > 0)) { throw ParameterError("psnr: truth is all zero"); }
  std::vector<double> out(truth.dim(0));
  for (std::size_t t = 0; t < out.size(); ++t) { out[t] = psnr_frame(recon.slab(t), truth.slab(t), peak); }
  return out;
}

double psnr(TensorD const &recon, TensorD const &truth) { return mean(psnr_frames(recon, truth)); }

std::vector<double> ssim_frames(TensorD const &recon,
                                TensorD const &truth,
                                std::vector<bool> const &mask,
                                SsimOptions const &o)
{
  check_pair(recon, truth, "ssim");
  std::size_t const T = truth.dim(0), H = truth.dim(1), W = truth.dim(2), n = o.window;
  if (n == 0 || n % 2 == 0) { throw ParameterError("ssim: window must be odd"); }
  if (H < n || W < n) {
    throw ParameterError("ssim: image " + std::to_string(H) + "x" + std::to_string(W) + " smaller than the " +
                         std::to_string(n) + "x" + std::to_string(n) + " window");
  }
  if (!mask.empty() && mask.size() != H * W) { throw ParameterError("ssim: mask size mismatch"); }
  double const L = series_max(truth);
  if (!(L > 0)) { throw ParameterError("ssim: truth is all zero"); }
  double const c1 = (o.k1 * L) * (o.k1 * L), c2 = (o.k2 * L) * (o.k2 * L);

  std::vector<double> k(n);
  double const half = static_cast<double>(n / 2);
  for (std::size_t i = 0; i < n; ++i) {
    double const d = static_cast<double>(i) - half;
    k[i] = std::exp(-d * d / (2 * o.sigma * o.sigma));
  }
  double const ks = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto &v : k) { v /= ks; }

  std::size_t const oh = H - n + 1, ow = W - n + 1, off = n / 2;
  std::vector<double> out(T);
  parallel_for(T, [&](std::size_t t) {
    auto const xs = recon.slab(t), ys = truth.slab(t);
    std::vector<double> x(xs.begin(), xs.end()), y(ys.begin(), ys.end()), xx(H * W), yy(H * W), xy(H * W);
    for (std::size_t i = 0; i < H * W; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    auto const mx = filter_valid(x, H, W, k), my = filter_valid(y, H, W, k);
    auto const sxx = filter_valid(xx, H, W, k), syy = filter_valid(yy, H, W, k), sxy = filter_valid(xy, H, W, k);
    double total = 0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < oh; ++r) {
      for (std::size_t c = 0; c < ow; ++c) {
        if (!mask.empty() && !mask[(r + off) * W + c + off]) { continue; }
        std::size_t const i = r * ow + c;
        double const vx = sxx[i] - mx[i] * mx[i];
        double const vy = syy[i] - my[i] * my[i];
        double const cxy = sxy[i] - mx[i] * my[i];
        total += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        ++count;
      }
    }
    if (count == 0) { throw ParameterError("ssim: mask leaves no valid window centre"); }
    out[t] = total / static_cast<double>(count);
  });
  return out;
}

double ssim(TensorD const &recon, TensorD const &truth, std::vector<bool> const &mask, SsimOptions const &options)
{
  return mean(ssim_frames(recon, truth, mask, options));
}

Tac extract_tac(TensorD const &series, std::vector<bool> const &roi, FrameSchedule const &sched)
{
  if (series.rank() != 3) { throw ParameterError("extract_tac: expected T x H x W, got " + shape_string(series.shape())); }
  if (series.dim(0) != sched.size()) {
    throw ParameterError("extract_tac: series has " + std::to_string(series.dim(0)) + " frames, schedule has " +
                         std::to_string(sched.size()));
  }
  if (roi.size() != series.dim(1) * series.dim(2)) { throw ParameterError("extract_tac: roi size mismatch"); }
  auto const n = static_cast<std::size_t>(std::count(roi.begin(), roi.end(), true));
  if (n == 0) { throw ParameterError("extract_tac: empty roi"); }
  Tac tac;
  for (std::size_t t = 0; t < sched.size(); ++t) {
    auto const f = series.slab(t);
    double s = 0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      if (roi[j]) { s += f[j]; }
    }
    tac.mid_time_s.push_back(sched[t].mid_s());
    tac.value.push_back(s / static_cast<double>(n));
  }
  return tac;
}

double roughness(std::span<double const> values)
{
  double s = 0;
  for (std::size_t t = 1; t < values.size(); ++t) {
    double const d = values[t] - values[t - 1];
    s += d * d;
  }
  return s;
}

double quantile(std::vector<double> values, double q)
{
  if (values.empty()) { throw ParameterError("quantile: no values"); }
  if (!(q >= 0 && q <= 1)) { throw ParameterError("quantile: q must be in [0, 1]"); }
  std::sort(values.begin(), values.end());
  double const h = (static_cast<double>(values.size()) - 1) * q;
  auto const lo = static_cast<std::size_t>(std::floor(h));
  std::size_t const hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

BoxStats box_stats(std::vector<double> const &values)
{
  return {quantile(values, 0.0), quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75),
          quantile(values, 1.0)};
}

MethodSummary const &MetricsReport::method(std::string const &name) const
{
  for (auto const &m : methods) {
    if (m.method == name) { return m; }
  }
  throw ParameterError("report: no method named " + name);
}

MetricsReport evaluate(std::vector<std::pair<std::string, TensorD>> const &recons,
                       TensorD const &truth,
                       FrameSchedule const &sched,
                       std::vector<Roi> const &rois,
                       std::vector<bool> const &fov)
{
  auto const truths = split_slices(truth, "evaluate");
  std::size_t const S = truths.size();
  for (auto const &roi : rois) {
    if (roi.masks.size() != 1 && roi.masks.size() != S) {
      throw ParameterError("evaluate: roi " + roi.name + " needs 1 or " + std::to_string(S) + " masks");
    }
  }
  MetricsReport report;
  for (auto const &[name, series] : recons) {
    if (series.shape() != truth.shape()) {
      throw ParameterError("evaluate: " + name + " has shape " + shape_string(series.shape()) + ", truth is " +
                           shape_string(truth.shape()));
    }
    auto const slices = split_slices(series, "evaluate");
    MethodSummary summary;
    summary.method = name;
    std::vector<double> all_p, all_s;
    for (std::size_t s = 0; s < S; ++s) {
      auto const p = psnr_frames(slices[s], truths[s]);
      auto const q = ssim_frames(slices[s], truths[s], fov);
      for (std::size_t t = 0; t < p.size(); ++t) { report.frames.push_back({name, s, t, p[t], q[t]}); }
      all_p.insert(all_p.end(), p.begin(), p.end());
      all_s.insert(all_s.end(), q.begin(), q.end());
      summary.slice_psnr.push_back(mean(p));
      summary.slice_ssim.push_back(mean(q));
      for (auto const &roi : rois) {
        auto const tac = extract_tac(slices[s], roi.masks[roi.masks.size() == 1 ? 0 : s], sched);
        for (std::size_t t = 0; t < tac.value.size(); ++t) {
          report.tacs.push_back({name, roi.name, s, tac.mid_time_s[t], tac.value[t]});
        }
        summary.roughness[roi.name] += roughness(tac.value) / static_cast<double>(S);
      }
    }
    summary.mean_psnr = mean(all_p);
    summary.mean_ssim = mean(all_s);
    report.methods.push_back(std::move(summary));
  }
  return report;
}

void write_report(MetricsReport const &report, std::filesystem::path const &dir)
{
  std::filesystem::create_directories(dir);
  auto open = [&](char const *name) {
    std::ofstream out(dir / name);
    if (!out) { throw IoError("cannot write " + (dir / name).string()); }
    return out;
  };
  {
    auto out = open("metrics.csv");
    out << "method,slice,frame,psnr,ssim\n";
    for (auto const &r : report.frames) {
      out << r.method << ',' << r.slice << ',' << r.frame << ',' << fmt_double(r.psnr) << ',' << fmt_double(r.ssim)
          << '\n';
    }
  }
  {
    auto out = open("tac.csv");
    out << "method,roi,slice,frame_mid_time_s,value\n";
    for (auto const &r : report.tacs) {
      out << r.method << ',' << r.roi << ',' << r.slice << ',' << fmt_double(r.mid_time_s) << ','
          << fmt_double(r.value) << '\n';
    }
  }
  {
    auto out = open("summary.csv");
    out << "method,mean_psnr,mean_ssim,roi,roughness\n";
    for (auto const &m : report.methods) {
      if (m.roughness.empty()) {
        out << m.method << ',' << fmt_double(m.mean_psnr) << ',' << fmt_double(m.mean_ssim) << ",,\n";
      }
      for (auto const &[roi, r] : m.roughness) {
        out << m.method << ',' << fmt_double(m.mean_psnr) << ',' << fmt_double(m.mean_ssim) << ',' << roi << ','
            << fmt_double(r) << '\n';
      }
    }
  }
  {
    auto out = open("boxplot.csv");
    out << "method,metric,min,q1,median,q3,max\n";
    for (auto const &m : report.methods) {
      for (auto const &[metric, values] : {std::pair{"psnr", &m.slice_psnr}, std::pair{"ssim", &m.slice_ssim}}) {
        auto const b = box_stats(*values);
        out << m.method << ',' << metric << ',' << fmt_double(b.min) << ',' << fmt_double(b.q1) << ','
            << fmt_double(b.median) << ',' << fmt_double(b.q3) << ',' << fmt_double(b.max) << '\n';
      }
    }
  }
}

} // namespace stpd
