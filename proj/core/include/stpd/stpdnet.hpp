#pragma once

#include "stpd/autodiff.hpp"
#include "stpd/projector.hpp"
#include "stpd/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stpd {

struct NetworkConfig
{
  std::size_t n_blocks = 10;
  std::size_t n_primal = 3;
  std::size_t n_dual = 3;
  std::size_t hidden = 32;
  std::size_t depth = 3;           ///< convolutions per dual / primal net
  std::size_t temporal_extent = 3; ///< 1 gives the frame-wise (LPD) variant
  bool correction = true;
  std::size_t primal_projected = 1; ///< primal channel fed to G
  std::size_t dual_projected = 0;   ///< dual channel fed to G*
  /// Initial gamma of the batch norm that closes each dual / primal net.
  double final_bn_gamma = 1e-4;

  void validate() const;
  bool operator==(NetworkConfig const &) const = default;

  /// Same network with temporal_extent = 1.
  NetworkConfig lpd_variant() const;

  std::string to_json() const;
  static NetworkConfig from_json(std::string const &text);
};

/// Trainable scalars implied by `cfg` (conv weights and biases, batch-norm
/// gamma and beta, correction kernels); running statistics excluded.
std::size_t parameter_count(NetworkConfig const &cfg);

template <typename Real>
struct ConvLayer
{
  ad::Parameter<Real> weight;
  ad::Parameter<Real> bias;
  ad::BatchNormState<Real> bn;
};

/// conv -> BN -> ReLU repeated, the last layer without ReLU.
template <typename Real>
struct ConvNet
{
  std::vector<ConvLayer<Real>> layers;
};

/// Single-channel convolution applied after a projection.
template <typename Real>
struct Correction
{
  ad::Parameter<Real> weight;
  ad::Parameter<Real> bias;
};

template <typename Real>
struct Block
{
  ConvNet<Real> dual;
  ConvNet<Real> primal;
  Correction<Real> forward;
  Correction<Real> adjoint;
};

template <typename Real>
struct NetworkParams
{
  NetworkConfig config;
  std::vector<Block<Real>> blocks;

  /// Pointers into `blocks`; invalidated by copying or moving the params.
  std::vector<ad::Parameter<Real> *> parameters();
  std::vector<ad::BatchNormState<Real> *> batch_norms();
  void set_mode(ad::BnMode mode);
  std::size_t parameter_count() const;
};

/// He-scaled Gaussian hidden weights, zero final convolution per net, identity
/// corrections. Deterministic in `seed`.
template <typename Real>
NetworkParams<Real> init_network(NetworkConfig const &cfg, std::uint64_t seed);

/// Records the full unrolled network on `g`. `y` is N x 1 x T x V x B; the
/// result is primal channel 0, N x 1 x T x H x W. Batch norms run in whatever
/// mode `params` is in.
template <typename Real>
ad::Var build_network(ad::Graph<Real> &g, NetworkParams<Real> &params, ad::Var y, Projector const &projector);

/// Inference, one block at a time so only a single block's graph is alive.
/// `y` is T x V x B (result T x H x W) or N x T x V x B (result N x T x H x W).
template <typename Real>
Tensor<Real> stpdnet_forward(NetworkParams<Real> &params, Tensor<Real> const &y, Projector const &projector);

/// Directory of .stp tensors plus manifest.json.
template <typename Real>
void save_params(NetworkParams<Real> const &params, std::filesystem::path const &dir);

/// Throws "incompatible checkpoint" when the stored tensors do not match the
/// manifest's config.
template <typename Real>
NetworkParams<Real> load_params(std::filesystem::path const &dir);

/// As above, and additionally requires the stored config to equal `expected`.
template <typename Real>
NetworkParams<Real> load_params(std::filesystem::path const &dir, NetworkConfig const &expected);

/// Reads only the config echoed in a checkpoint manifest.
NetworkConfig read_checkpoint_config(std::filesystem::path const &dir);

} // namespace stpd
