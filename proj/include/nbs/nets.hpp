#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nbs/autodiff.hpp"

namespace nbs {

enum class Activation { Linear, Tanh, Relu, Srelu, Softplus };

// Threshold of the smoothed rectifier used when none is configured.
inline constexpr double kDefaultSreluWidth = 0.01;

ad::Var activate(const ad::Var& x, Activation act, double srelu_width = kDefaultSreluWidth);
std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Handle to one trainable tensor. `layer`/`layer_count`/`width` drive the
/// depth-dependent initialization.
struct ParamRef {
  Matrix* value = nullptr;
  std::string name;
  int layer = 0;
  int layer_count = 1;
  int width = 1;
};

using ParamList = std::vector<ParamRef>;

/// Gaussian initialization with a depth-dependent scale: 2.2/sqrt(n) for the
/// first layer, 0.58*i/sqrt(n) for hidden layer i, n/sqrt(n) for the output
/// layer, where n is the neuron count of the layer.
double init_scale(int layer, int layer_count, int width);
void init_params(const ParamList& params, std::uint64_t seed);

/// Binding mode of parameters onto a tape.
enum class Bind { Constant, Trainable };

std::vector<ad::Var> bind_params(ad::Tape& tape, const ParamList& params, Bind mode);

// ---------------------------------------------------------------------------
// Fully connected network: y_{i+1} = act_i(W_i y_i + b_i).

struct DenseLayer {
  Matrix weight;
  Matrix bias;  // column
  Activation act = Activation::Tanh;
};

struct MlpParams {
  std::vector<DenseLayer> layers;
  double srelu_width = kDefaultSreluWidth;

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  ParamList parameters();
};

/// Zero-initialized network with the given layer widths (last entry is the
/// output dimension).
MlpParams make_mlp(Eigen::Index input_dim, const std::vector<int>& widths, Activation hidden,
                   Activation output);

struct BoundMlp {
  const MlpParams* shape = nullptr;
  std::vector<ad::Var> weight;
  std::vector<ad::Var> bias;
};

BoundMlp bind(ad::Tape& tape, const MlpParams& p, Bind mode, std::vector<ad::Var>* leaves = nullptr);
// Input (n x B), output (m x B).
ad::Var forward(const BoundMlp& net, const ad::Var& x);
Matrix fcnn_forward(const MlpParams& p, const Matrix& x);

// ---------------------------------------------------------------------------
// Fully input-convex network:
//   y_{i+1} = act_i(relu(R_i) y_i + Wx_i x + b_i),  y_0 = 0.
// The effective hidden weights relu(R_i) are nonnegative for every R_i.

struct FicnnParams {
  Eigen::Index input_dim = 0;
  std::vector<int> widths;  // last entry is the output dimension
  std::vector<Matrix> wx;   // wx[i]: widths[i] x input_dim (empty for the output layer without passthrough)
  std::vector<Matrix> wy_raw;  // wy_raw[i - 1] for layers i >= 1: widths[i] x widths[i-1]
  std::vector<Matrix> bias;    // empty when pinned
  Activation hidden = Activation::Srelu;
  Activation output = Activation::Linear;
  bool pin_bias = false;
  bool output_passthrough = true;
  double srelu_width = kDefaultSreluWidth;

  ParamList parameters();
};

FicnnParams make_ficnn(Eigen::Index input_dim, const std::vector<int>& widths, Activation hidden,
                       Activation output, bool pin_bias, bool output_passthrough);

/// Nonnegative-output potential shape: srelu hidden layers, zero biases and a
/// nonnegative linear read-out of the last hidden layer. Vanishes together
/// with its gradient at the origin.
FicnnParams make_potential_ficnn(Eigen::Index input_dim, const std::vector<int>& hidden_widths);

struct BoundFicnn {
  const FicnnParams* shape = nullptr;
  std::vector<ad::Var> wx;
  std::vector<ad::Var> wy;  // effective (already rectified)
  std::vector<ad::Var> bias;
};

BoundFicnn bind(ad::Tape& tape, const FicnnParams& p, Bind mode, std::vector<ad::Var>* leaves = nullptr);
ad::Var forward(const BoundFicnn& net, const ad::Var& x);
double ficnn_forward(const FicnnParams& p, const Vector& x);

// ---------------------------------------------------------------------------
// Partially input-convex network, convex in x for every context v_0:
//   v_{i+1} = ctx_act(Wt_i v_i + bt_i)
//   y_{i+1} = act_i(relu(R_i)(y_i o softplus(Wyv_i v_i + by_i))
//                   + Wx_i(x o (Wxv_i v_i + bx_i)) + Wv_i v_i + b_i)
// Context widths follow the main-path widths.

struct PicnnParams {
  Eigen::Index context_dim = 0;
  Eigen::Index input_dim = 0;
  std::vector<int> widths;
  // Context path, layers 0 .. k-2.
  std::vector<Matrix> wt, bt;
  // Main path, per layer i (entries for i = 0 of wy_raw/wyv/by are absent).
  std::vector<Matrix> wy_raw, wyv, by;
  std::vector<Matrix> wx, wxv, bx;
  std::vector<Matrix> wv, b;
  Activation hidden = Activation::Softplus;
  Activation output = Activation::Linear;
  Activation context = Activation::Softplus;
  double srelu_width = kDefaultSreluWidth;

  Eigen::Index context_width(std::size_t layer) const;
  ParamList parameters();
};

PicnnParams make_picnn(Eigen::Index context_dim, Eigen::Index input_dim,
                       const std::vector<int>& widths, Activation hidden, Activation output);

struct BoundPicnn {
  const PicnnParams* shape = nullptr;
  std::vector<ad::Var> wt, bt, wy, wyv, by, wx, wxv, bx, wv, b;
};

BoundPicnn bind(ad::Tape& tape, const PicnnParams& p, Bind mode, std::vector<ad::Var>* leaves = nullptr);
// Context (p x B), input (n x B), output (1 x B).
ad::Var forward(const BoundPicnn& net, const ad::Var& context, const ad::Var& x);
double picnn_forward(const PicnnParams& p, const Vector& context, const Vector& x);

}  // namespace nbs
