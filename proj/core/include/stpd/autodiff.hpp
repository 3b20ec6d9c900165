#pragma once

#include "stpd/projector.hpp"
#include "stpd/tensor.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

/// Minimal reverse-mode differentiation over Tensor values: just the
/// primitives an unrolled primal-dual network needs.
namespace stpd::ad {

/// Trainable tensor with its gradient accumulator.
template <typename Real>
struct Parameter
{
  std::string name;
  Tensor<Real> value;
  Tensor<Real> grad;

  Parameter() = default;
  Parameter(std::string name_, Tensor<Real> value_)
    : name(std::move(name_))
    , value(std::move(value_))
    , grad(value.shape())
  {
  }

  void zero_grad() { grad.fill(Real(0)); }
};

/// Handle to a node of a Graph.
struct Var
{
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const { return id != npos; }
};

/// Tape of nodes in creation order. Nodes only reference earlier nodes, so the
/// tape is acyclic and reverse creation order is a reverse topological order.
template <typename Real>
class Graph
{
public:
  /// Propagates the node's gradient into its inputs.
  using BackwardFn = std::function<void(Graph &, std::size_t self)>;

  /// Constant leaf; never receives a gradient.
  Var constant(Tensor<Real> value);
  /// Leaf whose gradient is added to p.grad by backward(). The parameter must
  /// outlive the graph.
  Var parameter(Parameter<Real> &p);

  /// Generic node. `fn` runs during backward only when some input requires a
  /// gradient.
  Var record(Tensor<Real> value, std::vector<Var> inputs, BackwardFn fn);

  Tensor<Real> const &value(Var v) const { return nodes_.at(v.id).value; }
  std::vector<Var> const &inputs(Var v) const { return nodes_.at(v.id).inputs; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient accumulator, zero-allocated on first access.
  Tensor<Real> &grad(Var v);
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Seeds d(loss)/d(loss) = 1 and visits every node from `loss` back to the
  /// first exactly once.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  /// When enabled, relu appends the on/off state of each input element, so
  /// two evaluations can be compared for crossed kinks.
  void track_activation_pattern(bool on) { track_pattern_ = on; }
  bool tracking_activation_pattern() const { return track_pattern_; }
  std::vector<std::uint8_t> &activation_pattern() { return pattern_; }

private:
  struct Node
  {
    Tensor<Real> value;
    Tensor<Real> grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    Parameter<Real> *param = nullptr;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool track_pattern_ = false;
  std::vector<std::uint8_t> pattern_;
};

// ---------------------------------------------------------------------------
// Primitives. Activations are N x C x T x H x W unless stated otherwise.

/// 3D cross-correlation, stride 1, zero padding of kernel/2 on each of T, H, W
/// (shape-preserving). weight: C_out x C_in x KT x KH x KW with odd extents;
/// bias: C_out.
template <typename Real>
Var conv3d(Graph<Real> &g, Var input, Var weight, Var bias);

enum class BnMode
{
  Train,
  Eval,
};

/// Per-channel batch normalisation state. Statistics pool over
/// (batch, T, H, W).
template <typename Real>
struct BatchNormState
{
  Parameter<Real> gamma;
  Parameter<Real> beta;
  Tensor<Real> running_mean;
  Tensor<Real> running_var;
  double momentum = 0.1;
  double eps = 1e-5;
  BnMode mode = BnMode::Train;
  std::size_t batches_tracked = 0;

  BatchNormState() = default;
  BatchNormState(std::string const &name, std::size_t channels);
  std::size_t channels() const { return gamma.value.size(); }
};

/// Train mode normalises with batch statistics and updates the running
/// statistics (unbiased variance); eval mode uses the running statistics and
/// throws "uninitialized running statistics" before any train step.
template <typename Real>
Var batch_norm(Graph<Real> &g, Var input, BatchNormState<Real> &state);

template <typename Real>
Var relu(Graph<Real> &g, Var input);

template <typename Real>
Var add(Graph<Real> &g, Var a, Var b);

/// Concatenation along axis 1 (channels).
template <typename Real>
Var concat_channels(Graph<Real> &g, std::vector<Var> const &parts);

/// Channel `c` of an N x C x ... tensor, as N x 1 x ...
template <typename Real>
Var channel_slice(Graph<Real> &g, Var input, std::size_t c);

enum class Direction
{
  Forward, ///< G: image frames -> sinogram frames
  Adjoint, ///< G*: sinogram frames -> image frames
};

/// Frame-wise G or G* on the trailing two axes. The backward pass applies the
/// other direction to the upstream gradient.
template <typename Real>
Var linear_operator(Graph<Real> &g, Var input, Projector const &projector, Direction direction);

/// mean((pred - target)^2) as a 1-element tensor.
template <typename Real>
Var mse_loss(Graph<Real> &g, Var pred, Tensor<Real> const &target);

/// <input, u> as a 1-element tensor.
template <typename Real>
Var inner(Graph<Real> &g, Var input, Tensor<Real> const &u);

/// Brute-force 3D cross-correlation straight from the definition (same padding
/// convention as conv3d). Reference only; O(everything).
template <typename Real>
Tensor<Real> conv3d_reference(Tensor<Real> const &input, Tensor<Real> const &weight, Tensor<Real> const &bias);

// ---------------------------------------------------------------------------
// Optimisation

struct AdamConfig
{
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moments for one parameter tensor.
template <typename Real>
struct AdamState
{
  std::vector<Real> m;
  std::vector<Real> v;
  std::size_t step = 0;
};

/// Bias-corrected Adam update of one tensor. Throws "diverged gradient" on
/// a non-finite gradient, leaving params and state untouched.
template <typename Real>
void adam_step(std::span<Real> params, std::span<Real const> grads, AdamState<Real> &state, double lr,
               AdamConfig const &cfg = {});

/// Adam over a parameter set. Every gradient is checked before any parameter
/// is modified.
template <typename Real>
class Adam
{
public:
  explicit Adam(std::vector<Parameter<Real> *> params, AdamConfig cfg = {});
  void step(double lr);
  void zero_grad();
  std::size_t steps() const { return states_.empty() ? 0 : states_.front().step; }

  std::vector<AdamState<Real>> const &states() const { return states_; }
  std::vector<AdamState<Real>> &states() { return states_; }

private:
  std::vector<Parameter<Real> *> params_;
  std::vector<AdamState<Real>> states_;
  AdamConfig cfg_;
};

// ---------------------------------------------------------------------------
// Verification

struct GradCheckReport
{
  double max_rel_error = 0;
  std::size_t checked = 0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  /// Elements whose step had to shrink because a perturbation crossed a ReLU
  /// kink, and those still crossing one at the smallest step (not scored).
  std::size_t reduced_steps = 0;
  std::size_t skipped_kinks = 0;
};

struct GradCheckOptions
{
  double step = 1e-5;
  /// Above this many parameter elements a random subset of this size is
  /// checked instead.
  std::size_t max_elements = 10000;
  /// Denominator floor: |a - n| / max(|a|, |n|, floor).
  double floor = 1e-5;
  /// Smallest step tried when perturbations cross a ReLU kink.
  double min_step = 1e-8;
  std::uint64_t seed = 0;
};

/// Central finite differences over every element of `params` against the
/// reverse-mode gradient of the scalar built by `build_loss`. Where x +- step
/// changes the ReLU activation pattern the step is divided by 10 until it no
/// longer does.
GradCheckReport grad_check(std::function<Var(Graph<double> &)> const &build_loss,
                           std::vector<Parameter<double> *> const &params,
                           GradCheckOptions const &options = {});

} // namespace stpd::ad
