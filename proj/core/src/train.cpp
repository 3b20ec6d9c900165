#include "stpd/train.hpp"

#include "stpd/simulate.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <numeric>

namespace stpd {

void TrainConfig::validate() const
{
  if (epochs < 1) { throw ParameterError("train: epochs must be >= 1"); }
  if (batch_size < 1) { throw ParameterError("train: batch_size must be >= 1"); }
  if (!(base_lr > 0)) { throw ParameterError("train: base_lr must be > 0"); }
  if (!(lr_decay > 0 && lr_decay <= 1)) { throw ParameterError("train: lr_decay must be in (0, 1]"); }
  if (checkpoint_every < 1) { throw ParameterError("train: checkpoint_every must be >= 1"); }
  network.validate();
}

namespace {

void check_samples(std::vector<TrainSample> const &data, Projector const &projector, char const *what)
{
  auto const &g = projector.geometry();
  for (auto const &s : data) {
    if (s.sinograms.rank() != 3 || s.sinograms.dim(1) != g.n_views() || s.sinograms.dim(2) != g.n_bins()) {
      throw ParameterError(std::string(what) + ": sinograms must be T x " + std::to_string(g.n_views()) + " x " +
                           std::to_string(g.n_bins()) + ", got " + shape_string(s.sinograms.shape()));
    }
    if (s.labels.shape() != Shape{s.sinograms.dim(0), g.image_size(), g.image_size()}) {
      throw ParameterError(std::string(what) + ": labels must be T x " + std::to_string(g.image_size()) + " x " +
                           std::to_string(g.image_size()) + ", got " + shape_string(s.labels.shape()));
    }
    if (s.sinograms.dim(0) != data.front().sinograms.dim(0)) {
      throw ParameterError(std::string(what) + ": all samples need the same frame count");
    }
  }
}

/// Stacks the selected samples into N x 1 x T x ... batches.
std::pair<TensorF, TensorF> stack(std::vector<TrainSample> const &data, std::vector<std::size_t> const &pick)
{
  auto const &s0 = data[pick.front()];
  std::size_t const N = pick.size();
  TensorF y({N, 1, s0.sinograms.dim(0), s0.sinograms.dim(1), s0.sinograms.dim(2)});
  TensorF x({N, 1, s0.labels.dim(0), s0.labels.dim(1), s0.labels.dim(2)});
  for (std::size_t i = 0; i < N; ++i) {
    auto const &s = data[pick[i]];
    std::copy(s.sinograms.data().begin(), s.sinograms.data().end(), y.data().begin() + i * s.sinograms.size());
    std::copy(s.labels.data().begin(), s.labels.data().end(), x.data().begin() + i * s.labels.size());
  }
  return {std::move(y), std::move(x)};
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::size_t epoch)
{
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed, 0x73687566, epoch);
  for (std::size_t i = n; i > 1; --i) {
    auto const j = static_cast<std::size_t>(rng.next_u64() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

struct ResumeState
{
  std::size_t next_epoch = 0;
  std::size_t step = 0;
  std::size_t best_epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<LossRecord> history;
  std::vector<double> validation;
};

void save_checkpoint(std::filesystem::path const &dir,
                     NetworkParams<float> const &params,
                     NetworkParams<float> const *best,
                     ad::Adam<float> const &adam,
                     std::vector<ad::Parameter<float> *> const &plist,
                     ResumeState const &st)
{
  save_params(params, dir);
  if (best) { save_params(*best, dir / "best"); }
  std::filesystem::create_directories(dir / "adam");
  nlohmann::ordered_json j;
  j["next_epoch"] = st.next_epoch;
  j["step"] = st.step;
  j["best_epoch"] = st.best_epoch;
  j["best_loss"] = std::isfinite(st.best_loss) ? nlohmann::ordered_json(st.best_loss) : nlohmann::ordered_json();
  j["adam_step"] = adam.steps();
  auto &hist = j["history"] = nlohmann::ordered_json::array();
  for (auto const &r : st.history) { hist.push_back({r.step, r.epoch, r.lr, r.loss}); }
  j["validation"] = st.validation;
  auto const &states = adam.states();
  for (std::size_t k = 0; k < plist.size(); ++k) {
    if (states[k].m.empty()) { continue; }
    Shape const s = plist[k]->value.shape();
    write_tensor(TensorF(s, states[k].m), dir / "adam" / (plist[k]->name + ".m.stp"));
    write_tensor(TensorF(s, states[k].v), dir / "adam" / (plist[k]->name + ".v.stp"));
  }
  std::ofstream out(dir / "train_state.json");
  if (!out) { throw IoError("cannot write " + (dir / "train_state.json").string()); }
  out << j.dump(2) << '\n';
}

ResumeState load_checkpoint(std::filesystem::path const &dir,
                            ad::Adam<float> &adam,
                            std::vector<ad::Parameter<float> *> const &plist)
{
  std::ifstream in(dir / "train_state.json");
  if (!in) { throw IoError("cannot open " + (dir / "train_state.json").string()); }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (nlohmann::json::exception const &e) {
    throw IoError(std::string("corrupt train state: ") + e.what());
  }
  ResumeState st;
  st.next_epoch = j.at("next_epoch").get<std::size_t>();
  st.step = j.at("step").get<std::size_t>();
  st.best_epoch = j.at("best_epoch").get<std::size_t>();
  if (!j.at("best_loss").is_null()) { st.best_loss = j.at("best_loss").get<double>(); }
  for (auto const &r : j.at("history")) {
    st.history.push_back({r[0].get<std::size_t>(), r[1].get<std::size_t>(), r[2].get<double>(), r[3].get<double>()});
  }
  st.validation = j.at("validation").get<std::vector<double>>();
  auto const adam_step = j.at("adam_step").get<std::size_t>();
  auto &states = adam.states();
  for (std::size_t k = 0; k < plist.size(); ++k) {
    auto const m = dir / "adam" / (plist[k]->name + ".m.stp");
    if (!std::filesystem::exists(m)) { continue; }
    states[k].m = read_tensor<float>(m).vector();
    states[k].v = read_tensor<float>(dir / "adam" / (plist[k]->name + ".v.stp")).vector();
    states[k].step = adam_step;
  }
  return st;
}

std::string epoch_dir(std::size_t epoch)
{
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch;
  return os.str();
}

} // namespace

void recalibrate_batch_norm(NetworkParams<float> &params,
                            std::vector<TrainSample> const &data,
                            Projector const &projector,
                            std::size_t batch_size)
{
  if (data.empty()) { throw ParameterError("recalibrate_batch_norm: no samples"); }
  if (batch_size < 1) { throw ParameterError("recalibrate_batch_norm: batch_size must be >= 1"); }
  check_samples(data, projector, "recalibrate_batch_norm");
  auto bns = params.batch_norms();
  std::vector<double> momentum;
  for (auto *bn : bns) { momentum.push_back(bn->momentum); }
  params.set_mode(ad::BnMode::Train);
  std::size_t k = 0;
  for (std::size_t b = 0; b < data.size(); b += batch_size, ++k) {
    std::vector<std::size_t> pick(std::min(batch_size, data.size() - b));
    std::iota(pick.begin(), pick.end(), b);
    auto y = stack(data, pick).first;
    Shape const s = y.shape();
    // momentum 1/(k+1) turns the running update into a cumulative mean
    for (auto *bn : bns) { bn->momentum = 1.0 / static_cast<double>(k + 1); }
    stpdnet_forward(params, y.reshaped({s[0], s[2], s[3], s[4]}), projector);
  }
  for (std::size_t i = 0; i < bns.size(); ++i) { bns[i]->momentum = momentum[i]; }
  params.set_mode(ad::BnMode::Eval);
}

double evaluate_loss(NetworkParams<float> &params, std::vector<TrainSample> const &data, Projector const &projector)
{
  if (data.empty()) { throw ParameterError("evaluate_loss: no samples"); }
  std::vector<ad::BnMode> modes;
  for (auto *bn : params.batch_norms()) { modes.push_back(bn->mode); }
  params.set_mode(ad::BnMode::Eval);
  double total = 0;
  for (auto const &s : data) {
    auto const out = stpdnet_forward(params, s.sinograms, projector);
    double e = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      double const d = static_cast<double>(out[i]) - s.labels[i];
      e += d * d;
    }
    total += e / static_cast<double>(out.size());
  }
  auto bns = params.batch_norms();
  for (std::size_t i = 0; i < bns.size(); ++i) { bns[i]->mode = modes[i]; }
  return total / static_cast<double>(data.size());
}

TrainResult train(TrainConfig const &cfg,
                  std::vector<TrainSample> const &data,
                  Projector const &projector,
                  std::vector<TrainSample> const &validation,
                  TrainHooks const &hooks,
                  std::filesystem::path const &resume)
{
  cfg.validate();
  if (data.empty()) { throw ParameterError("train: no training samples"); }
  check_samples(data, projector, "train");
  if (!validation.empty()) { check_samples(validation, projector, "validation"); }

  TrainResult result;
  result.params = resume.empty() ? init_network<float>(cfg.network, cfg.seed)
                                 : load_params<float>(resume, cfg.network);
  result.params.set_mode(ad::BnMode::Train);
  auto plist = result.params.parameters();
  ad::Adam<float> adam(plist);
  ResumeState st;
  bool have_best = false;
  if (!resume.empty()) {
    st = load_checkpoint(resume, adam, plist);
    if (std::filesystem::exists(resume / "best" / "manifest.json")) {
      result.best_params = load_params<float>(resume / "best", cfg.network);
      have_best = true;
    }
  }
  bool const checkpoints = !cfg.checkpoint_dir.empty();
  if (checkpoints && have_best) { save_params(result.best_params, cfg.checkpoint_dir / "best"); }

  std::size_t const n_batches = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  for (std::size_t epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
    double const lr = cfg.lr(epoch);
    auto const order = shuffled(data.size(), cfg.seed, epoch);
    for (std::size_t b = 0; b < n_batches; ++b) {
      std::vector<std::size_t> pick(order.begin() + static_cast<long>(b * cfg.batch_size),
                                    order.begin() + static_cast<long>(std::min(data.size(), (b + 1) * cfg.batch_size)));
      auto [y, labels] = stack(data, pick);
      NetworkParams<float> last_good = result.params;
      auto diverged = [&](std::string const &why) {
        if (checkpoints) { save_params(last_good, cfg.checkpoint_dir / "last_good"); }
        throw TrainingDiverged("training diverged: " + why, std::move(last_good), st.history);
      };
      ad::Graph<float> g;
      ad::Var const out = build_network(g, result.params, g.constant(std::move(y)), projector);
      ad::Var const loss = ad::mse_loss(g, out, labels);
      double const value = g.value(loss)[0];
      if (!std::isfinite(value)) { diverged("non-finite loss at step " + std::to_string(st.step)); }
      adam.zero_grad();
      g.backward(loss);
      try {
        adam.step(lr);
      } catch (ParameterError const &e) {
        diverged(e.what());
      }
      LossRecord const rec{st.step++, epoch, lr, value};
      st.history.push_back(rec);
      if (hooks.on_step) { hooks.on_step(rec); }
    }

    double vloss = std::numeric_limits<double>::quiet_NaN();
    if (!validation.empty()) {
      vloss = evaluate_loss(result.params, validation, projector);
      st.validation.push_back(vloss);
      if (vloss < st.best_loss) {
        st.best_loss = vloss;
        st.best_epoch = epoch;
        result.best_params = result.params;
        have_best = true;
        if (checkpoints) { save_params(result.params, cfg.checkpoint_dir / "best"); }
      }
    }
    if (hooks.on_epoch) { hooks.on_epoch(epoch, vloss); }
    st.next_epoch = epoch + 1;
    if (checkpoints) {
      auto const *best = have_best ? &result.best_params : nullptr;
      if ((epoch + 1) % cfg.checkpoint_every == 0) {
        save_checkpoint(cfg.checkpoint_dir / epoch_dir(epoch + 1), result.params, best, adam, plist, st);
      }
      save_checkpoint(cfg.checkpoint_dir / "last", result.params, best, adam, plist, st);
    }
  }
  result.history = st.history;
  result.validation_loss = st.validation;
  result.best_epoch = st.best_epoch;
  if (cfg.recalibrate_bn) {
    recalibrate_batch_norm(result.params, data, projector, cfg.batch_size);
    result.params.set_mode(ad::BnMode::Train);
  }
  if (!have_best) { result.best_params = result.params; }
  return result;
}

void write_loss_history(std::vector<LossRecord> const &history, std::filesystem::path const &path)
{
  std::ofstream out(path);
  if (!out) { throw IoError("cannot write " + path.string()); }
  out << "step,epoch,lr,loss\n" << std::setprecision(10);
  for (auto const &r : history) { out << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.loss << '\n'; }
}

} // namespace stpd
