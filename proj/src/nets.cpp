#include "nbs/nets.hpp"

#include <cmath>
#include <random>

namespace nbs {

using ad::Var;

Var activate(const Var& x, Activation act, double srelu_width) {
  switch (act) {
    case Activation::Linear:
      return x;
    case Activation::Tanh:
      return ad::tanh(x);
    case Activation::Relu:
      return ad::relu(x);
    case Activation::Srelu:
      return ad::srelu(x, srelu_width);
    case Activation::Softplus:
      return ad::softplus(x);
  }
  throw Error("activate: unknown activation");
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::Linear:
      return "linear";
    case Activation::Tanh:
      return "tanh";
    case Activation::Relu:
      return "relu";
    case Activation::Srelu:
      return "srelu";
    case Activation::Softplus:
      return "softplus";
  }
  return "unknown";
}

Activation activation_from_string(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "srelu") return Activation::Srelu;
  if (name == "softplus") return Activation::Softplus;
  throw ConfigError("unknown activation '" + name + "'");
}

double init_scale(int layer, int layer_count, int width) {
  const double root = std::sqrt(static_cast<double>(width));
  if (layer == 0) return 2.2 / root;
  if (layer == layer_count - 1) return static_cast<double>(width) / root;
  return 0.58 * layer / root;
}

void init_params(const ParamList& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const ParamRef& p : params) {
    std::normal_distribution<double> dist(0.0, init_scale(p.layer, p.layer_count, p.width));
    for (Eigen::Index j = 0; j < p.value->cols(); ++j)
      for (Eigen::Index i = 0; i < p.value->rows(); ++i) (*p.value)(i, j) = dist(rng);
  }
}

std::vector<Var> bind_params(ad::Tape& tape, const ParamList& params, Bind mode) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const ParamRef& p : params) {
    out.push_back(mode == Bind::Trainable ? tape.variable(*p.value) : tape.constant(*p.value));
  }
  return out;
}

namespace {

struct Binder {
  ad::Tape& tape;
  Bind mode;
  std::vector<Var>* leaves;

  Var operator()(const Matrix& m) const {
    if (mode == Bind::Constant) return tape.constant(m);
    Var v = tape.variable(m);
    if (leaves) leaves->push_back(v);
    return v;
  }
};

void require_rows(const Var& x, Eigen::Index rows, const char* what) {
  if (x.rows() != rows) {
    throw DimensionMismatch(std::string(what) + ": expected " + std::to_string(rows) +
                            " input rows, got " + std::to_string(x.rows()));
  }
}

Matrix column(Eigen::Index n) { return Matrix::Zero(n, 1); }

}  // namespace

// ---------------------------------------------------------------------------
// MLP

Eigen::Index MlpParams::input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }
Eigen::Index MlpParams::output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

ParamList MlpParams::parameters() {
  ParamList out;
  const int count = static_cast<int>(layers.size());
  for (int i = 0; i < count; ++i) {
    DenseLayer& l = layers[static_cast<std::size_t>(i)];
    const int w = static_cast<int>(l.weight.rows());
    out.push_back({&l.weight, "layer" + std::to_string(i) + ".weight", i, count, w});
    out.push_back({&l.bias, "layer" + std::to_string(i) + ".bias", i, count, w});
  }
  return out;
}

MlpParams make_mlp(Eigen::Index input_dim, const std::vector<int>& widths, Activation hidden,
                   Activation output) {
  if (widths.empty()) throw ConfigError("make_mlp: no layers");
  MlpParams p;
  Eigen::Index prev = input_dim;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    DenseLayer l;
    l.weight = Matrix::Zero(widths[i], prev);
    l.bias = column(widths[i]);
    l.act = (i + 1 == widths.size()) ? output : hidden;
    p.layers.push_back(std::move(l));
    prev = widths[i];
  }
  return p;
}

BoundMlp bind(ad::Tape& tape, const MlpParams& p, Bind mode, std::vector<Var>* leaves) {
  Binder b{tape, mode, leaves};
  BoundMlp out;
  out.shape = &p;
  for (const DenseLayer& l : p.layers) {
    out.weight.push_back(b(l.weight));
    out.bias.push_back(b(l.bias));
  }
  return out;
}

Var forward(const BoundMlp& net, const Var& x) {
  require_rows(x, net.shape->input_dim(), "fcnn_forward");
  Var y = x;
  for (std::size_t i = 0; i < net.weight.size(); ++i) {
    y = activate(ad::add_bias(ad::matmul(net.weight[i], y), net.bias[i]), net.shape->layers[i].act,
                 net.shape->srelu_width);
  }
  return y;
}

Matrix fcnn_forward(const MlpParams& p, const Matrix& x) {
  ad::Tape tape;
  const BoundMlp net = bind(tape, p, Bind::Constant);
  return forward(net, tape.constant(x)).value();
}

// ---------------------------------------------------------------------------
// FICNN

ParamList FicnnParams::parameters() {
  ParamList out;
  const int count = static_cast<int>(widths.size());
  for (int i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const int w = widths[k];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    if (wx[k].size() > 0) out.push_back({&wx[k], prefix + "wx", i, count, w});
    if (i >= 1) out.push_back({&wy_raw[k - 1], prefix + "wy_raw", i, count, w});
    if (!pin_bias) out.push_back({&bias[k], prefix + "bias", i, count, w});
  }
  return out;
}

FicnnParams make_ficnn(Eigen::Index input_dim, const std::vector<int>& widths, Activation hidden,
                       Activation output, bool pin_bias, bool output_passthrough) {
  if (widths.empty()) throw ConfigError("make_ficnn: no layers");
  FicnnParams p;
  p.input_dim = input_dim;
  p.widths = widths;
  p.hidden = hidden;
  p.output = output;
  p.pin_bias = pin_bias;
  p.output_passthrough = output_passthrough;
  const std::size_t k = widths.size();
  for (std::size_t i = 0; i < k; ++i) {
    const bool passthrough = (i + 1 < k) || output_passthrough || k == 1;
    p.wx.push_back(passthrough ? Matrix::Zero(widths[i], input_dim) : Matrix());
    if (i >= 1) p.wy_raw.push_back(Matrix::Zero(widths[i], widths[i - 1]));
    p.bias.push_back(pin_bias ? Matrix() : column(widths[i]));
  }
  return p;
}

FicnnParams make_potential_ficnn(Eigen::Index input_dim, const std::vector<int>& hidden_widths) {
  std::vector<int> widths = hidden_widths;
  widths.push_back(1);
  return make_ficnn(input_dim, widths, Activation::Srelu, Activation::Linear, true, false);
}

BoundFicnn bind(ad::Tape& tape, const FicnnParams& p, Bind mode, std::vector<Var>* leaves) {
  Binder b{tape, mode, leaves};
  BoundFicnn out;
  out.shape = &p;
  for (std::size_t i = 0; i < p.widths.size(); ++i) {
    out.wx.push_back(p.wx[i].size() > 0 ? b(p.wx[i]) : Var());
    if (i >= 1) out.wy.push_back(ad::relu(b(p.wy_raw[i - 1])));
    out.bias.push_back(p.pin_bias ? Var() : b(p.bias[i]));
  }
  return out;
}

Var forward(const BoundFicnn& net, const Var& x) {
  const FicnnParams& p = *net.shape;
  require_rows(x, p.input_dim, "ficnn_forward");
  const std::size_t k = p.widths.size();
  Var y;
  for (std::size_t i = 0; i < k; ++i) {
    Var z;
    if (i >= 1) z = ad::matmul(net.wy[i - 1], y);
    if (net.wx[i].valid()) {
      const Var zx = ad::matmul(net.wx[i], x);
      z = z.valid() ? z + zx : zx;
    }
    if (net.bias[i].valid()) z = ad::add_bias(z, net.bias[i]);
    y = activate(z, i + 1 == k ? p.output : p.hidden, p.srelu_width);
  }
  return y;
}

double ficnn_forward(const FicnnParams& p, const Vector& x) {
  ad::Tape tape;
  const BoundFicnn net = bind(tape, p, Bind::Constant);
  return forward(net, tape.constant(Matrix(x))).scalar();
}

// ---------------------------------------------------------------------------
// PICNN

Eigen::Index PicnnParams::context_width(std::size_t layer) const {
  return layer == 0 ? context_dim : widths[layer - 1];
}

ParamList PicnnParams::parameters() {
  ParamList out;
  const int count = static_cast<int>(widths.size());
  for (int i = 0; i < count; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const int w = widths[k];
    const std::string prefix = "layer" + std::to_string(i) + ".";
    if (i + 1 < count) {
      out.push_back({&wt[k], prefix + "wt", i, count, w});
      out.push_back({&bt[k], prefix + "bt", i, count, w});
    }
    if (i >= 1) {
      out.push_back({&wy_raw[k - 1], prefix + "wy_raw", i, count, w});
      out.push_back({&wyv[k - 1], prefix + "wyv", i, count, w});
      out.push_back({&by[k - 1], prefix + "by", i, count, w});
    }
    out.push_back({&wx[k], prefix + "wx", i, count, w});
    out.push_back({&wxv[k], prefix + "wxv", i, count, w});
    out.push_back({&bx[k], prefix + "bx", i, count, w});
    out.push_back({&wv[k], prefix + "wv", i, count, w});
    out.push_back({&b[k], prefix + "b", i, count, w});
  }
  return out;
}

PicnnParams make_picnn(Eigen::Index context_dim, Eigen::Index input_dim,
                       const std::vector<int>& widths, Activation hidden, Activation output) {
  if (widths.empty()) throw ConfigError("make_picnn: no layers");
  PicnnParams p;
  p.context_dim = context_dim;
  p.input_dim = input_dim;
  p.widths = widths;
  p.hidden = hidden;
  p.output = output;
  const std::size_t k = widths.size();
  for (std::size_t i = 0; i < k; ++i) {
    const Eigen::Index c = p.context_width(i);
    const Eigen::Index w = widths[i];
    if (i + 1 < k) {
      p.wt.push_back(Matrix::Zero(w, c));
      p.bt.push_back(column(w));
    }
    if (i >= 1) {
      p.wy_raw.push_back(Matrix::Zero(w, widths[i - 1]));
      p.wyv.push_back(Matrix::Zero(widths[i - 1], c));
      p.by.push_back(column(widths[i - 1]));
    }
    p.wx.push_back(Matrix::Zero(w, input_dim));
    p.wxv.push_back(Matrix::Zero(input_dim, c));
    p.bx.push_back(column(input_dim));
    p.wv.push_back(Matrix::Zero(w, c));
    p.b.push_back(column(w));
  }
  return p;
}

BoundPicnn bind(ad::Tape& tape, const PicnnParams& p, Bind mode, std::vector<Var>* leaves) {
  Binder bd{tape, mode, leaves};
  BoundPicnn out;
  out.shape = &p;
  const std::size_t k = p.widths.size();
  for (std::size_t i = 0; i < k; ++i) {
    if (i + 1 < k) {
      out.wt.push_back(bd(p.wt[i]));
      out.bt.push_back(bd(p.bt[i]));
    }
    if (i >= 1) {
      out.wy.push_back(ad::relu(bd(p.wy_raw[i - 1])));
      out.wyv.push_back(bd(p.wyv[i - 1]));
      out.by.push_back(bd(p.by[i - 1]));
    }
    out.wx.push_back(bd(p.wx[i]));
    out.wxv.push_back(bd(p.wxv[i]));
    out.bx.push_back(bd(p.bx[i]));
    out.wv.push_back(bd(p.wv[i]));
    out.b.push_back(bd(p.b[i]));
  }
  return out;
}

Var forward(const BoundPicnn& net, const Var& context, const Var& x) {
  const PicnnParams& p = *net.shape;
  require_rows(context, p.context_dim, "picnn_forward context");
  require_rows(x, p.input_dim, "picnn_forward");
  if (context.cols() != x.cols()) throw DimensionMismatch("picnn_forward: batch sizes differ");
  const std::size_t k = p.widths.size();
  Var v = context;
  Var y;
  for (std::size_t i = 0; i < k; ++i) {
    const Var gate_x = ad::add_bias(ad::matmul(net.wxv[i], v), net.bx[i]);
    Var z = ad::matmul(net.wx[i], ad::mul(x, gate_x)) + ad::matmul(net.wv[i], v);
    if (i >= 1) {
      const Var gate_y = ad::softplus(ad::add_bias(ad::matmul(net.wyv[i - 1], v), net.by[i - 1]));
      z = z + ad::matmul(net.wy[i - 1], ad::mul(y, gate_y));
    }
    y = activate(ad::add_bias(z, net.b[i]), i + 1 == k ? p.output : p.hidden, p.srelu_width);
    if (i + 1 < k) {
      v = activate(ad::add_bias(ad::matmul(net.wt[i], v), net.bt[i]), p.context, p.srelu_width);
    }
  }
  return y;
}

double picnn_forward(const PicnnParams& p, const Vector& context, const Vector& x) {
  ad::Tape tape;
  const BoundPicnn net = bind(tape, p, Bind::Constant);
  return forward(net, tape.constant(Matrix(context)), tape.constant(Matrix(x))).scalar();
}

}  // namespace nbs
