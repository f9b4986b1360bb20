#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nnem/geometry.hpp"

namespace nnem {

enum class Activation { sine, tanh, identity };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::sine: return "sine";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

/// Architecture of one local network: 2 -> width x hidden_layers -> 1,
/// with the chosen activation on every hidden layer and a linear output.
struct NetConfig {
  int hidden_layers = 2;
  int width = 16;
  Activation activation = Activation::sine;

  void validate() const {
    if (hidden_layers < 1) throw std::invalid_argument("net config: hidden_layers must be >= 1");
    if (width < 1) throw std::invalid_argument("net config: width must be >= 1");
  }

  std::vector<int> layer_sizes() const {
    std::vector<int> s;
    s.push_back(2);
    for (int i = 0; i < hidden_layers; ++i) s.push_back(width);
    s.push_back(1);
    return s;
  }

  /// Total parameter count under the flat layout: per layer, the out x in
  /// weight block (row-major) followed by the out biases.
  int param_count() const {
    const auto s = layer_sizes();
    int n = 0;
    for (size_t l = 0; l + 1 < s.size(); ++l) n += s[l] * s[l + 1] + s[l + 1];
    return n;
  }
};

namespace detail {
// Deterministic uniform double in [lo, hi) from the raw engine output;
// avoids std::uniform_real_distribution, whose stream is not portable.
inline double uniform_from_bits(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}
}  // namespace detail

/// Glorot-style uniform weights, zero biases; bit-reproducible given the seed.
inline std::vector<double> init_params(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const auto sizes = config.layer_sizes();
  std::vector<double> theta(static_cast<size_t>(config.param_count()), 0.0);
  size_t offset = 0;
  for (size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / (in + out));
    for (int i = 0; i < in * out; ++i)
      theta[offset + i] = detail::uniform_from_bits(rng, -bound, bound);
    offset += static_cast<size_t>(in) * out + out;  // biases stay zero
  }
  return theta;
}

struct EvalResult {
  double value = 0.0;
  Vec2 grad{0.0, 0.0};
};

/// Per-layer records of a forward pass, kept for the reverse sweep.
/// Reusable across calls; sized on first use for a given config.
struct NetTape {
  struct Layer {
    std::vector<double> z, sx, sy;  // pre-activation value and spatial tangents
    std::vector<double> a, tx, ty;  // post-activation value and spatial tangents
    std::vector<double> sp;         // activation derivative at z
  };
  Vec2 input{};
  std::vector<Layer> layers;
};

/// A small fully connected network phi(x; theta) with smooth activations.
/// The forward pass carries (value, d/dx, d/dy) triples through every layer;
/// backprop_theta runs reverse mode over that computation, so gradients of
/// functionals in both phi and grad_x phi are exact.
class LocalNet {
 public:
  LocalNet() = default;
  LocalNet(NetConfig config, std::vector<double> theta)
      : config_(config), theta_(std::move(theta)) {
    config_.validate();
    if (theta_.size() != static_cast<size_t>(config_.param_count()))
      throw std::invalid_argument("local net: parameter vector has wrong length");
  }

  static LocalNet initialized(const NetConfig& config, std::uint64_t seed) {
    return LocalNet(config, init_params(config, seed));
  }

  const NetConfig& config() const { return config_; }
  const std::vector<double>& theta() const { return theta_; }
  int param_count() const { return static_cast<int>(theta_.size()); }

  void set_theta(std::span<const double> theta) {
    if (theta.size() != theta_.size())
      throw std::invalid_argument("local net: parameter vector has wrong length");
    std::copy(theta.begin(), theta.end(), theta_.begin());
  }

  EvalResult forward_with_spatial_grad(Vec2 x, NetTape& tape) const {
    const auto sizes = config_.layer_sizes();
    const int nlayers = static_cast<int>(sizes.size()) - 1;
    tape.input = x;
    tape.layers.resize(nlayers);
    double a_in[2] = {x.x, x.y};
    double tx_in[2] = {1.0, 0.0};
    double ty_in[2] = {0.0, 1.0};
    const double* a = a_in;
    const double* tx = tx_in;
    const double* ty = ty_in;
    size_t offset = 0;
    for (int l = 0; l < nlayers; ++l) {
      const int in = sizes[l], out = sizes[l + 1];
      NetTape::Layer& rec = tape.layers[l];
      rec.z.resize(out);
      rec.sx.resize(out);
      rec.sy.resize(out);
      rec.a.resize(out);
      rec.tx.resize(out);
      rec.ty.resize(out);
      rec.sp.resize(out);
      const double* W = theta_.data() + offset;
      const double* b = W + static_cast<size_t>(in) * out;
      const bool linear = (l == nlayers - 1);
      for (int o = 0; o < out; ++o) {
        double z = b[o], sx = 0.0, sy = 0.0;
        const double* row = W + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
          z += row[i] * a[i];
          sx += row[i] * tx[i];
          sy += row[i] * ty[i];
        }
        rec.z[o] = z;
        rec.sx[o] = sx;
        rec.sy[o] = sy;
        double av, sp;
        if (linear) {
          av = z;
          sp = 1.0;
        } else {
          activate(z, av, sp);
        }
        rec.a[o] = av;
        rec.sp[o] = sp;
        rec.tx[o] = sp * sx;
        rec.ty[o] = sp * sy;
      }
      a = rec.a.data();
      tx = rec.tx.data();
      ty = rec.ty.data();
      offset += static_cast<size_t>(in) * out + out;
    }
    const NetTape::Layer& last = tape.layers.back();
    return {last.a[0], {last.tx[0], last.ty[0]}};
  }

  EvalResult forward_with_spatial_grad(Vec2 x) const {
    NetTape tape;
    return forward_with_spatial_grad(x, tape);
  }

  /// Accumulates into `grad` the exact d/dtheta of
  ///   seed_value * phi(x) + seed_grad . grad_x phi(x)
  /// for the forward pass recorded in `tape`.
  void backprop_theta(const NetTape& tape, double seed_value, Vec2 seed_grad,
                      std::span<double> grad) const {
    if (grad.size() != theta_.size())
      throw std::invalid_argument("backprop_theta: gradient buffer has wrong length");
    const auto sizes = config_.layer_sizes();
    const int nlayers = static_cast<int>(sizes.size()) - 1;

    std::vector<double> abar = {seed_value};
    std::vector<double> txbar = {seed_grad.x};
    std::vector<double> tybar = {seed_grad.y};
    std::vector<double> abar_prev, txbar_prev, tybar_prev;

    // Parameter offsets per layer.
    std::vector<size_t> offsets(nlayers);
    size_t off = 0;
    for (int l = 0; l < nlayers; ++l) {
      offsets[l] = off;
      off += static_cast<size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    }

    for (int l = nlayers - 1; l >= 0; --l) {
      const int in = sizes[l], out = sizes[l + 1];
      const NetTape::Layer& rec = tape.layers[l];
      const bool linear = (l == nlayers - 1);
      const double* W = theta_.data() + offsets[l];
      double* Wbar = grad.data() + offsets[l];
      double* bbar = Wbar + static_cast<size_t>(in) * out;

      const double* a_prev;
      const double* tx_prev;
      const double* ty_prev;
      double a_in[2], tx_in[2] = {1.0, 0.0}, ty_in[2] = {0.0, 1.0};
      if (l == 0) {
        a_in[0] = tape.input.x;
        a_in[1] = tape.input.y;
        a_prev = a_in;
        tx_prev = tx_in;
        ty_prev = ty_in;
      } else {
        a_prev = tape.layers[l - 1].a.data();
        tx_prev = tape.layers[l - 1].tx.data();
        ty_prev = tape.layers[l - 1].ty.data();
      }

      abar_prev.assign(in, 0.0);
      txbar_prev.assign(in, 0.0);
      tybar_prev.assign(in, 0.0);
      for (int o = 0; o < out; ++o) {
        const double sp = rec.sp[o];
        const double spp = linear ? 0.0 : second_derivative(rec.z[o], rec.a[o], sp);
        const double zbar =
            sp * abar[o] + spp * (rec.sx[o] * txbar[o] + rec.sy[o] * tybar[o]);
        const double sxbar = sp * txbar[o];
        const double sybar = sp * tybar[o];
        const double* row = W + static_cast<size_t>(o) * in;
        double* rowbar = Wbar + static_cast<size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
          rowbar[i] += zbar * a_prev[i] + sxbar * tx_prev[i] + sybar * ty_prev[i];
          abar_prev[i] += row[i] * zbar;
          txbar_prev[i] += row[i] * sxbar;
          tybar_prev[i] += row[i] * sybar;
        }
        bbar[o] += zbar;
      }
      abar.swap(abar_prev);
      txbar.swap(txbar_prev);
      tybar.swap(tybar_prev);
    }
  }

  void backprop_theta(Vec2 x, double seed_value, Vec2 seed_grad, std::span<double> grad) const {
    NetTape tape;
    forward_with_spatial_grad(x, tape);
    backprop_theta(tape, seed_value, seed_grad, grad);
  }

 private:
  void activate(double z, double& value, double& deriv) const {
    switch (config_.activation) {
      case Activation::sine:
        value = std::sin(z);
        deriv = std::cos(z);
        return;
      case Activation::tanh:
        value = std::tanh(z);
        deriv = 1.0 - value * value;
        return;
      case Activation::identity:
        value = z;
        deriv = 1.0;
        return;
    }
  }

  // sigma'' from the stored (z, a, sigma'): avoids extra transcendentals.
  double second_derivative(double /*z*/, double a, double sp) const {
    switch (config_.activation) {
      case Activation::sine: return -a;
      case Activation::tanh: return -2.0 * a * sp;
      case Activation::identity: return 0.0;
    }
    return 0.0;
  }

  NetConfig config_;
  std::vector<double> theta_;
};

}  // namespace nnem
