#include "cli.hpp"

#include "experiment_config.hpp"

#include <stpd/metrics.hpp>
#include <stpd/parallel.hpp>
#include <stpd/recon.hpp>
#include <stpd/simulate.hpp>
#include <stpd/stpdnet.hpp>
#include <stpd/train.hpp>
#include <stpd/verify.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

namespace stpd::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

class UsageError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// dataset helpers

constexpr char const *kMetaFile = "meta.json";

std::optional<json> read_meta(fs::path const &dir)
{
  auto const path = dir / kMetaFile;
  if (!fs::exists(path)) { return std::nullopt; }
  std::ifstream in(path);
  try {
    return json::parse(in);
  } catch (json::exception const &e) {
    throw IoError("corrupt " + path.string() + ": " + e.what());
  }
}

fs::path parent_of(fs::path const &file)
{
  auto p = file.parent_path();
  return p.empty() ? fs::path(".") : p;
}

void write_text(fs::path const &path, std::string const &text)
{
  std::ofstream out(path);
  if (!out) { throw IoError("cannot write " + path.string()); }
  out << text;
}

/// Views a T x ... or S x T x ... tensor as a list of per-slice series.
std::vector<TensorD> slices_of(TensorD const &t, std::size_t series_rank, std::string const &what)
{
  if (t.rank() == series_rank) { return {t}; }
  if (t.rank() != series_rank + 1) {
    throw ParameterError(what + " must have rank " + std::to_string(series_rank) + " or " +
                         std::to_string(series_rank + 1) + ", got " + shape_string(t.shape()));
  }
  Shape const inner(t.shape().begin() + 1, t.shape().end());
  std::vector<TensorD> out;
  for (std::size_t s = 0; s < t.dim(0); ++s) {
    auto const src = t.slab(s);
    out.emplace_back(inner, std::vector<double>(src.begin(), src.end()));
  }
  return out;
}

TensorD join_slices(std::vector<TensorD> const &parts, bool keep_slice_axis)
{
  if (!keep_slice_axis) { return parts.front(); }
  Shape shape = parts.front().shape();
  shape.insert(shape.begin(), parts.size());
  TensorD out(shape);
  for (std::size_t s = 0; s < parts.size(); ++s) {
    std::copy(parts[s].data().begin(), parts[s].data().end(), out.data().begin() + s * parts[s].size());
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
{
  return CounterRng(seed, stream, index).next_u64();
}

std::string shape_text(Shape const &s) { return shape_string(s); }

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs
{
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

int do_simulate(SimulateArgs const &a, std::ostream &out)
{
  auto const cfg = ExperimentConfig::load(a.config);
  auto const geo = cfg.projector_geometry();
  auto const sched = cfg.frame_schedule();
  auto const scan = cfg.scan_model();
  Projector const proj(geo);
  std::size_t const S = cfg.phantom.n_slices, T = sched.size(), N = geo.image_size();

  std::vector<TensorD> sinos, backgrounds, truths, labels, rois;
  ordered_json frame_scale = ordered_json::array(), sino_scale = ordered_json::array(),
               label_scale = ordered_json::array(), regions = ordered_json::array();
  for (std::size_t s = 0; s < S; ++s) {
    auto const spec = default_phantom_spec(N, derive_seed(a.seed, 0x70686e, s), cfg.phantom.variability);
    auto const ph = make_phantom(spec, sched);
    auto data = simulate_scan<double>(ph.activity, proj, scan, derive_seed(a.seed, 0x7363616e, s));
    auto const norm = normalize_pair<double>(data.counts, ph.activity);
    TensorD lab({N, N}), roi({N, N});
    auto const tumor = ph.label_of(spec, RegionRole::Tumor);
    for (std::size_t j = 0; j < N * N; ++j) {
      lab[j] = ph.labels[j];
      roi[j] = tumor != 0 && ph.labels[j] == tumor ? 1.0 : 0.0;
    }
    frame_scale.push_back(data.frame_scale);
    sino_scale.push_back(norm.sinogram_scale);
    label_scale.push_back(norm.label_scale);
    if (s == 0) {
      for (auto const &r : spec.regions) { regions.push_back({{"name", r.name}, {"role", to_string(r.role)}}); }
    }
    sinos.push_back(std::move(data.counts));
    backgrounds.push_back(std::move(data.background));
    truths.push_back(ph.activity);
    labels.push_back(std::move(lab));
    rois.push_back(std::move(roi));
  }

  fs::path const dir(a.out);
  fs::create_directories(dir);
  write_tensor(join_slices(sinos, true), dir / "sinograms.stp");
  write_tensor(join_slices(backgrounds, true), dir / "background.stp");
  write_tensor(join_slices(truths, true), dir / "truth.stp");
  write_tensor(join_slices(labels, true), dir / "labels.stp");
  write_tensor(join_slices(rois, true), dir / "tumor_roi.stp");
  write_text(dir / "config.toml", cfg.to_toml());

  ordered_json meta;
  meta["format"] = "stpd-dataset";
  meta["version"] = 1;
  meta["seed"] = a.seed;
  meta["n_slices"] = S;
  meta["geometry"] = {{"views", geo.n_views()},
                      {"bins", geo.n_bins()},
                      {"image_size", geo.image_size()},
                      {"pixel_size", cfg.geometry.pixel_size},
                      {"bin_spacing", cfg.geometry.bin_spacing},
                      {"fov_radius", geo.fov_radius()}};
  auto &frames = meta["schedule"] = ordered_json::array();
  for (auto const &f : sched.frames()) { frames.push_back({f.start_s, f.duration_s}); }
  meta["regions"] = regions;
  meta["frame_scale"] = frame_scale;
  meta["sinogram_scale"] = sino_scale;
  meta["label_scale"] = label_scale;
  meta["files"] = {{"sinograms", "sinograms.stp"}, {"background", "background.stp"}, {"truth", "truth.stp"},
                   {"labels", "labels.stp"},       {"tumor_roi", "tumor_roi.stp"}};
  write_text(dir / kMetaFile, meta.dump(2) + "\n");

  out << "simulated " << S << " slice(s), " << T << " frames, sinograms " << geo.n_views() << "x" << geo.n_bins()
      << ", images " << N << "x" << N << " -> " << dir.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// reconstruct

struct ReconstructArgs
{
  std::string method;
  std::string input;
  std::string geom_config;
  std::optional<std::size_t> iters;
  std::string model;
  std::string out;
};

std::vector<double> meta_vector(json const &meta, char const *key, std::size_t slice, std::size_t n_slices)
{
  auto const &arr = meta.at(key);
  if (arr.size() != n_slices) {
    throw ParameterError(std::string("meta.json: '") + key + "' lists " + std::to_string(arr.size()) +
                         " slices, input has " + std::to_string(n_slices));
  }
  auto const &v = arr[slice];
  return v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
}

int do_reconstruct(ReconstructArgs const &a, std::ostream &out, std::ostream &err)
{
  static std::vector<std::string> const methods{"mlem", "kemst", "stpdnet", "lpd"};
  if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) {
    throw UsageError("--method must be one of mlem, kemst, stpdnet, lpd");
  }
  bool const learned = a.method == "stpdnet" || a.method == "lpd";
  if (learned && a.model.empty()) { throw UsageError("--model is required for --method " + a.method); }

  auto const cfg = ExperimentConfig::load(a.geom_config);
  auto const geo = cfg.projector_geometry();
  auto const sched = cfg.frame_schedule();
  Projector const proj(geo);
  fs::path const input(a.input);
  auto const y_all = read_tensor<double>(input);
  bool const batched = y_all.rank() == 4;
  auto const ys = slices_of(y_all, 3, "input sinograms");
  std::size_t const S = ys.size(), T = ys.front().dim(0);
  if (ys.front().dim(1) != geo.n_views() || ys.front().dim(2) != geo.n_bins()) {
    throw ParameterError("input sinograms are " + shape_text(ys.front().shape()) + ", geometry expects T x " +
                         std::to_string(geo.n_views()) + " x " + std::to_string(geo.n_bins()));
  }
  auto const meta = read_meta(parent_of(input));
  if (!meta) { err << "note: no meta.json next to the input; output stays in measurement units\n"; }

  std::vector<TensorD> backgrounds(S);
  auto const bg_path = parent_of(input) / "background.stp";
  if (!learned && fs::exists(bg_path)) {
    auto const bg = read_tensor<double>(bg_path);
    if (bg.shape() == y_all.shape()) { backgrounds = slices_of(bg, 3, "background"); }
  }

  std::optional<NetworkParams<float>> params;
  if (learned) {
    auto const stored = read_checkpoint_config(a.model);
    std::size_t const want = a.method == "lpd" ? 1 : 3;
    if (stored.temporal_extent != want) {
      throw ParameterError("incompatible checkpoint: --method " + a.method + " needs temporal_extent " +
                           std::to_string(want) + ", model has " + std::to_string(stored.temporal_extent));
    }
    params = load_params<float>(a.model);
    params->set_mode(ad::BnMode::Eval);
  }

  std::size_t iters = 0;
  std::vector<TensorD> recon;
  for (std::size_t s = 0; s < S; ++s) {
    auto const &y = ys[s];
    TensorD x;
    if (a.method == "mlem") {
      iters = a.iters.value_or(20);
      x = mlem<double>(y, proj, backgrounds[s], iters, fov_ones<double>(geo, T));
    } else if (a.method == "kemst") {
      iters = a.iters.value_or(cfg.kemst.iters);
      if (sched.size() != T) {
        throw ParameterError("kemst: schedule has " + std::to_string(sched.size()) + " frames, input has " +
                             std::to_string(T));
      }
      auto const composite =
        composite_images(y, backgrounds[s], sched, proj, cfg.kemst.composite_groups, cfg.kemst.composite_iters);
      auto const kernel = build_st_kernel(composite, geo, T, cfg.kemst.kernel);
      x = kem_st(y, proj, kernel, iters, backgrounds[s]);
    } else {
      double const peak = *std::max_element(y.data().begin(), y.data().end());
      if (!(peak > 0)) { throw ParameterError("input slice " + std::to_string(s) + " has no counts"); }
      TensorD yn = y;
      for (auto &v : yn.data()) { v /= peak; }
      x = stpdnet_forward(*params, yn.cast<float>(), proj).cast<double>();
    }
    if (meta) {
      if (learned) {
        double const scale = meta_vector(*meta, "label_scale", s, S).at(0);
        for (auto &v : x.data()) { v *= scale; }
      } else {
        auto const fs_ = meta_vector(*meta, "frame_scale", s, S);
        if (fs_.size() != T) { throw ParameterError("meta.json: frame_scale does not match the frame count"); }
        for (std::size_t t = 0; t < T; ++t) {
          for (auto &v : x.slab(t)) { v /= fs_[t]; }
        }
      }
    }
    recon.push_back(std::move(x));
  }
  auto const result = join_slices(recon, batched);
  write_tensor(result, a.out);
  out << a.method << ": " << S << " slice(s), " << T << " frames";
  if (!learned) { out << ", " << iters << " iterations per frame"; }
  out << " -> " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs
{
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
  std::string variant;
};

int do_train(TrainArgs const &a, std::ostream &out, std::ostream &err)
{
  auto cfg = ExperimentConfig::load(a.config);
  if (a.variant == "lpd") {
    cfg.network.temporal_extent = 1;
  } else if (a.variant == "stpdnet") {
    cfg.network.temporal_extent = 3;
  } else if (!a.variant.empty()) {
    throw UsageError("--variant must be stpdnet or lpd");
  }
  auto const geo = cfg.projector_geometry();
  Projector const proj(geo);
  fs::path const data(a.data);
  auto const ys = slices_of(read_tensor<double>(data / "sinograms.stp"), 3, "sinograms");
  auto const xs = slices_of(read_tensor<double>(data / "truth.stp"), 3, "truth");
  if (ys.size() != xs.size()) { throw ParameterError("sinograms and truth hold different slice counts"); }
  std::size_t const S = ys.size();
  std::size_t const n_val = std::min(cfg.train.validation_slices, S - 1);

  std::vector<TrainSample> train_set, val_set;
  for (std::size_t s = 0; s < S; ++s) {
    auto const n = normalize_pair<double>(ys[s], xs[s]);
    TrainSample sample{n.sinograms.cast<float>(), n.labels.cast<float>()};
    (s + n_val >= S ? val_set : train_set).push_back(std::move(sample));
  }

  fs::path const dir(a.out);
  fs::create_directories(dir);
  auto tc = cfg.train_config();
  tc.checkpoint_dir = dir / "checkpoints";
  write_text(dir / "config.toml", cfg.to_toml());

  TrainHooks hooks;
  double epoch_loss = 0;
  std::size_t epoch_steps = 0;
  hooks.on_step = [&](LossRecord const &r) {
    epoch_loss += r.loss;
    ++epoch_steps;
  };
  hooks.on_epoch = [&](std::size_t epoch, double vloss) {
    out << "epoch " << epoch << " lr " << std::setprecision(6) << tc.lr(epoch) << " loss "
        << epoch_loss / static_cast<double>(std::max<std::size_t>(1, epoch_steps));
    if (!val_set.empty()) { out << " val " << vloss; }
    out << "\n" << std::flush;
    epoch_loss = 0;
    epoch_steps = 0;
  };

  try {
    auto result = train(tc, train_set, proj, val_set, hooks, a.resume.empty() ? fs::path{} : fs::path(a.resume));
    result.params.set_mode(ad::BnMode::Eval);
    save_params(result.params, dir / "model");
    write_loss_history(result.history, dir / "loss.csv");
    std::ofstream v(dir / "validation.csv");
    v << "epoch,loss\n" << std::setprecision(10);
    for (std::size_t e = 0; e < result.validation_loss.size(); ++e) {
      v << e << ',' << result.validation_loss[e] << '\n';
    }
    out << "trained " << result.history.size() << " steps on " << train_set.size() << " slice(s)";
    if (!val_set.empty()) {
      out << ", best validation loss at epoch " << result.best_epoch << " (" << (tc.checkpoint_dir / "best").string()
          << ")";
    }
    out << " -> " << (dir / "model").string() << "\n";
  } catch (TrainingDiverged const &e) {
    save_params(e.last_good, dir / "last_good");
    write_loss_history(e.history, dir / "loss.csv");
    err << "error: " << e.what() << " (last good parameters in " << (dir / "last_good").string() << ")\n";
    return kExitRuntime;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs
{
  std::string truth;
  std::vector<std::string> recon;
  std::vector<std::string> labels;
  std::string roi;
  std::string report;
};

std::vector<std::string> split_list(std::vector<std::string> const &items)
{
  std::vector<std::string> out;
  for (auto const &item : items) {
    std::stringstream ss(item);
    std::string part;
    while (std::getline(ss, part, ',')) {
      if (!part.empty()) { out.push_back(part); }
    }
  }
  return out;
}

std::vector<bool> to_mask(std::span<double const> values)
{
  std::vector<bool> m(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) { m[i] = values[i] > 0.5; }
  return m;
}

int do_evaluate(EvaluateArgs const &a, std::ostream &out, std::ostream &err)
{
  auto const recon_paths = split_list(a.recon);
  auto const names = split_list(a.labels);
  if (recon_paths.empty()) { throw UsageError("--recon needs at least one path"); }
  if (names.size() != recon_paths.size()) {
    throw UsageError("--labels must name each --recon path (" + std::to_string(recon_paths.size()) + " paths, " +
                     std::to_string(names.size()) + " names)");
  }
  fs::path const truth_path(a.truth);
  auto const truth = read_tensor<double>(truth_path);
  if (truth.rank() != 3 && truth.rank() != 4) {
    throw ParameterError("truth must be T x H x W or S x T x H x W, got " + shape_text(truth.shape()));
  }
  std::size_t const S = truth.rank() == 4 ? truth.dim(0) : 1;
  std::size_t const T = truth.dim(truth.rank() - 3), H = truth.dim(truth.rank() - 2), W = truth.dim(truth.rank() - 1);

  auto const meta = read_meta(parent_of(truth_path));
  std::optional<FrameSchedule> sched;
  std::vector<bool> fov;
  if (meta && meta->contains("schedule")) {
    std::vector<Frame> frames;
    for (auto const &f : meta->at("schedule")) { frames.push_back({f[0].get<double>(), f[1].get<double>()}); }
    sched = FrameSchedule(frames);
    auto const &g = meta->at("geometry");
    ProjectorGeometry const geo(g.at("views").get<std::size_t>(), g.at("bins").get<std::size_t>(),
                                g.at("image_size").get<std::size_t>(), g.at("pixel_size").get<double>(),
                                g.at("bin_spacing").get<double>(), g.at("fov_radius").get<double>());
    if (geo.image_size() == H && H == W) { fov.assign(geo.fov_mask().begin(), geo.fov_mask().end()); }
  }
  if (!sched || sched->size() != T) {
    err << "note: no matching schedule in meta.json; TAC times are frame indices\n";
    sched = FrameSchedule::from_groups({{T, 1.0}});
  }

  std::vector<std::pair<std::string, TensorD>> recons;
  for (std::size_t i = 0; i < recon_paths.size(); ++i) {
    recons.emplace_back(names[i], read_tensor<double>(recon_paths[i]));
  }
  std::vector<Roi> rois;
  if (!a.roi.empty()) {
    auto const r = read_tensor<double>(a.roi);
    Roi roi{fs::path(a.roi).stem().string(), {}};
    if (r.shape() == Shape{H, W}) {
      roi.masks.push_back(to_mask(r.data()));
    } else if (r.shape() == Shape{S, H, W}) {
      for (std::size_t s = 0; s < S; ++s) { roi.masks.push_back(to_mask(r.slab(s))); }
    } else {
      throw ParameterError("roi must be H x W or S x H x W, got " + shape_text(r.shape()));
    }
    rois.push_back(std::move(roi));
  }

  auto const report = evaluate(recons, truth, *sched, rois, fov);
  write_report(report, a.report);
  out << std::left << std::setw(12) << "method" << std::setw(12) << "mean_psnr" << std::setw(12) << "mean_ssim";
  for (auto const &r : rois) { out << "roughness(" << r.name << ")"; }
  out << "\n";
  for (auto const &m : report.methods) {
    out << std::left << std::setw(12) << m.method << std::setw(12) << std::setprecision(5) << m.mean_psnr
        << std::setw(12) << m.mean_ssim;
    for (auto const &r : rois) { out << m.roughness.at(r.name); }
    out << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

int do_gradcheck(std::string const &scale, std::ostream &out)
{
  auto const s = scale == "small" ? GradCheckScale::Small : GradCheckScale::Tiny;
  double worst = 0;
  for (auto const &c : gradcheck_suite(s)) {
    out << std::left << std::setw(26) << c.name << " max_rel_error " << std::scientific << std::setprecision(3)
        << c.report.max_rel_error << " over " << std::defaultfloat << c.report.checked << " elements\n";
    worst = std::max(worst, c.report.max_rel_error);
  }
  out << "max relative error: " << std::scientific << std::setprecision(3) << worst << std::defaultfloat << "\n";
  return worst < 1e-4 ? kExitOk : kExitRuntime;
}

} // namespace

int run(std::vector<std::string> const &args, std::ostream &out, std::ostream &err)
{
  CLI::App app{"Dynamic PET reconstruction: simulation, MLEM / KEM-ST baselines, unrolled primal-dual networks"};
  app.name(args.empty() ? "stpd" : fs::path(args.front()).filename().string());
  app.require_subcommand(1);
  std::size_t threads = num_threads();
  app.add_option("--threads", threads, "Worker threads (default: STPD_THREADS or 1)")->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto *simulate = app.add_subcommand("simulate", "Simulate phantoms and noisy sinograms");
  simulate->add_option("--config", sim.config, "Experiment TOML")->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--seed", sim.seed, "Random seed")->required();

  ReconstructArgs rec;
  auto *reconstruct = app.add_subcommand("reconstruct", "Reconstruct sinograms");
  reconstruct->add_option("--method", rec.method, "mlem | kemst | stpdnet | lpd")
    ->required()
    ->check(CLI::IsMember({"mlem", "kemst", "stpdnet", "lpd"}));
  reconstruct->add_option("--input", rec.input, "Sinogram .stp (T x V x B or S x T x V x B)")
    ->required()
    ->check(CLI::ExistingFile);
  reconstruct->add_option("--geom-config", rec.geom_config, "Experiment TOML")->required()->check(CLI::ExistingFile);
  reconstruct->add_option("--iters", rec.iters, "EM iterations")->check(CLI::PositiveNumber);
  reconstruct->add_option("--model", rec.model, "Checkpoint directory (stpdnet, lpd)");
  reconstruct->add_option("--out", rec.out, "Output .stp")->required();

  TrainArgs tr;
  auto *train_cmd = app.add_subcommand("train", "Train a network on a simulated dataset");
  train_cmd->add_option("--config", tr.config, "Experiment TOML")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data, "Dataset directory written by simulate")
    ->required()
    ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--resume", tr.resume, "Checkpoint directory to continue from")
    ->check(CLI::ExistingDirectory);
  train_cmd->add_option("--variant", tr.variant, "Override the temporal extent: stpdnet (3) or lpd (1)")
    ->check(CLI::IsMember({"stpdnet", "lpd"}));

  EvaluateArgs ev;
  auto *evaluate_cmd = app.add_subcommand("evaluate", "PSNR / SSIM / TAC report");
  evaluate_cmd->add_option("--truth", ev.truth, "Ground-truth .stp")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--recon", ev.recon, "Reconstruction .stp, comma separated")->required();
  evaluate_cmd->add_option("--labels", ev.labels, "Method names, comma separated")->required();
  evaluate_cmd->add_option("--roi", ev.roi, "ROI mask .stp (H x W or S x H x W)")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--report", ev.report, "Report directory")->required();

  std::string scale = "tiny";
  auto *gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable primitive");
  gradcheck->add_option("--scale", scale, "tiny | small")->check(CLI::IsMember({"tiny", "small"}));

  std::vector<char const *> argv;
  for (auto const &a : args) { argv.push_back(a.c_str()); }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (CLI::CallForHelp const &) {
    out << app.help();
    return kExitOk;
  } catch (CLI::CallForAllHelp const &) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (CLI::ParseError const &e) {
    err << "error: " << e.what() << "\n\n";
    auto const *sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kExitUsage;
  }

  set_num_threads(threads);
  try {
    if (*simulate) { return do_simulate(sim, out); }
    if (*reconstruct) { return do_reconstruct(rec, out, err); }
    if (*train_cmd) { return do_train(tr, out, err); }
    if (*evaluate_cmd) { return do_evaluate(ev, out, err); }
    if (*gradcheck) { return do_gradcheck(scale, out); }
  } catch (UsageError const &e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (ConfigError const &e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (std::exception const &e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

} // namespace stpd::cli
