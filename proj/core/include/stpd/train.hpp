#pragma once

#include "stpd/projector.hpp"
#include "stpd/stpdnet.hpp"
#include "stpd/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

namespace stpd {

struct TrainConfig
{
  std::size_t epochs = 200;
  std::size_t batch_size = 2;
  double base_lr = 8e-4;
  double lr_decay = 0.99;
  std::uint64_t seed = 0;
  NetworkConfig network;
  /// Checkpoints go to `checkpoint_dir` (skipped when empty): every
  /// `checkpoint_every` epochs, plus "best" on validation and "last".
  std::filesystem::path checkpoint_dir;
  std::size_t checkpoint_every = 10;
  /// Replace the batch-norm running statistics of the final parameters by
  /// training-set averages (see recalibrate_batch_norm).
  bool recalibrate_bn = true;

  void validate() const;
  /// base_lr * lr_decay^epoch
  double lr(std::size_t epoch) const { return base_lr * std::pow(lr_decay, static_cast<double>(epoch)); }
};

/// One normalised training pair: T x V x B sinograms, T x H x W labels.
struct TrainSample
{
  TensorF sinograms;
  TensorF labels;
};

struct LossRecord
{
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0;
  double loss = 0;
};

struct TrainResult
{
  NetworkParams<float> params; ///< after the last epoch and the optional recalibration
  std::vector<LossRecord> history;
  std::vector<double> validation_loss; ///< per epoch, empty without validation data
  std::size_t best_epoch = 0;
  /// Parameters after best_epoch (lowest validation loss); the final
  /// parameters when there is no validation data.
  NetworkParams<float> best_params;
};

/// Thrown when the loss or a gradient becomes non-finite. Carries the
/// parameters from before the failing step.
class TrainingDiverged : public std::runtime_error
{
public:
  TrainingDiverged(std::string const &what, NetworkParams<float> last_good, std::vector<LossRecord> history)
    : std::runtime_error(what)
    , last_good(std::move(last_good))
    , history(std::move(history))
  {
  }
  NetworkParams<float> last_good;
  std::vector<LossRecord> history;
};

struct TrainHooks
{
  std::function<void(LossRecord const &)> on_step;
  std::function<void(std::size_t epoch, double validation_loss)> on_epoch;
};

/// Adam on the MSE between network output and labels, seeded shuffled
/// mini-batches, lr(e) per epoch. `resume` names a checkpoint written by an
/// earlier run with the same config; training then continues after its epoch.
TrainResult train(TrainConfig const &cfg,
                  std::vector<TrainSample> const &data,
                  Projector const &projector,
                  std::vector<TrainSample> const &validation = {},
                  TrainHooks const &hooks = {},
                  std::filesystem::path const &resume = {});

/// Recomputes every batch-norm running statistic as the equal-weight mean of
/// the train-mode batch statistics over `data`, in order, in batches of
/// `batch_size`. Leaves the batch norms in eval mode.
void recalibrate_batch_norm(NetworkParams<float> &params,
                            std::vector<TrainSample> const &data,
                            Projector const &projector,
                            std::size_t batch_size);

/// Mean MSE of the network (batch norm in eval mode) over `data`.
double evaluate_loss(NetworkParams<float> &params, std::vector<TrainSample> const &data, Projector const &projector);

/// step,epoch,lr,loss
void write_loss_history(std::vector<LossRecord> const &history, std::filesystem::path const &path);

} // namespace stpd
