#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "json.hpp"
#include "random.hpp"
#include "vgm.hpp"

namespace banditlab {

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> trunk_widths{32, 16};
  std::vector<std::size_t> head_widths{8};
  std::size_t arms = 2;
  double dropout = 0.1;

  void validate() const {
    require(input_dim >= 1 && arms >= 1, ErrorCode::InvalidArgument, "mlp input_dim and arms must be >= 1");
    for (auto w : trunk_widths) require(w >= 1, ErrorCode::InvalidArgument, "mlp widths must be >= 1");
    for (auto w : head_widths) require(w >= 1, ErrorCode::InvalidArgument, "mlp widths must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::InvalidArgument, "dropout must be in [0,1)");
  }
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  bool dropout = true;

  void validate() const {
    require(learning_rate > 0.0 && batch_size >= 1 && epochs >= 1 && weight_decay >= 0.0,
            ErrorCode::InvalidArgument, "train config out of range");
  }
};

/// One (context, arm, reward) observation.
struct Experience {
  ContextVector x;
  std::size_t arm = 0;
  double reward = 0.0;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

/// Dropout keep-masks (already scaled by 1/(1-p)) for each trunk hidden layer.
using DropoutMasks = std::vector<Eigen::VectorXd>;

/// Shared ReLU trunk followed by one ReLU head per arm with a scalar output.
/// Inverted dropout acts on trunk hidden units only.
class Mlp {
 public:
  Mlp() = default;

  static Mlp init(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    Mlp m;
    m.spec_ = spec;
    Rng rng = make_rng(seed, "mlp-init");
    const auto make = [&](std::size_t in, std::size_t out) {
      const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
      DenseLayer l{Eigen::MatrixXd(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in)),
                   Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out))};
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = (2.0 * uniform01(rng) - 1.0) * bound;
      return l;
    };
    std::size_t in = spec.input_dim;
    for (auto w : spec.trunk_widths) {
      m.trunk_.push_back(make(in, w));
      in = w;
    }
    const std::size_t trunk_out = in;
    for (std::size_t a = 0; a < spec.arms; ++a) {
      std::vector<DenseLayer> head;
      std::size_t hin = trunk_out;
      for (auto w : spec.head_widths) {
        head.push_back(make(hin, w));
        hin = w;
      }
      head.push_back(make(hin, 1));
      m.heads_.push_back(std::move(head));
    }
    return m;
  }

  const MlpSpec& spec() const { return spec_; }
  const std::vector<DenseLayer>& trunk() const { return trunk_; }
  const std::vector<DenseLayer>& head(std::size_t arm) const { return heads_.at(arm); }
  std::vector<DenseLayer>& mutable_trunk() { return trunk_; }
  std::vector<DenseLayer>& mutable_head(std::size_t arm) { return heads_.at(arm); }

  DropoutMasks sample_masks(Rng& rng) const {
    DropoutMasks masks;
    const double keep = 1.0 - spec_.dropout;
    for (const auto& l : trunk_) {
      Eigen::VectorXd m(l.bias.size());
      for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = uniform01(rng) < keep ? 1.0 / keep : 0.0;
      masks.push_back(std::move(m));
    }
    return masks;
  }

  /// Trunk output g(x); masks may be empty (no dropout).
  Eigen::VectorXd features(const ContextVector& x, const DropoutMasks& masks = {}) const {
    require(static_cast<std::size_t>(x.size()) == spec_.input_dim, ErrorCode::DimensionMismatch,
            "mlp input dimension");
    Eigen::VectorXd h = x;
    for (std::size_t l = 0; l < trunk_.size(); ++l) {
      h = (trunk_[l].weight * h + trunk_[l].bias).cwiseMax(0.0);
      if (!masks.empty()) h = h.cwiseProduct(masks[l]);
    }
    return h;
  }

  double head_output(const Eigen::VectorXd& features, std::size_t arm) const {
    require(arm < heads_.size(), ErrorCode::UnknownArm, "mlp head index");
    const auto& head = heads_[arm];
    Eigen::VectorXd h = features;
    for (std::size_t l = 0; l + 1 < head.size(); ++l) h = (head[l].weight * h + head[l].bias).cwiseMax(0.0);
    return (head.back().weight * h + head.back().bias)[0];
  }

  double forward_masked(const ContextVector& x, std::size_t arm, const DropoutMasks& masks) const {
    return head_output(features(x, masks), arm);
  }

  /// Q(x, a). With dropout_on, masks are drawn from rng.
  double forward(const ContextVector& x, std::size_t arm, bool dropout_on, Rng& rng) const {
    if (!dropout_on || spec_.dropout == 0.0) return forward_masked(x, arm, {});
    return forward_masked(x, arm, sample_masks(rng));
  }

  double forward(const ContextVector& x, std::size_t arm) const { return forward_masked(x, arm, {}); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : trunk_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    for (const auto& h : heads_)
      for (const auto& l : h) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// Layer-ordered flat view: trunk layers, then heads in arm order; each
  /// layer contributes its weights (row-major) followed by its biases.
  Eigen::VectorXd parameters() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index pos = 0;
    for_each_layer([&](const DenseLayer& l) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) out[pos++] = l.weight(r, c);
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) out[pos++] = l.bias[r];
    });
    return out;
  }

  void set_parameters(const Eigen::VectorXd& p) {
    require(static_cast<std::size_t>(p.size()) == parameter_count(), ErrorCode::DimensionMismatch,
            "parameter vector size");
    Eigen::Index pos = 0;
    for_each_layer_mut([&](DenseLayer& l) {
      for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = p[pos++];
      for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias[r] = p[pos++];
    });
  }

  /// Mean squared error over the batch plus weight_decay * |theta|^2, and its
  /// gradient in the flat parameter layout. masks[i] applies to sample i when
  /// given; otherwise the pass is deterministic.
  double loss_and_gradient(std::span<const Experience> batch, double weight_decay, Eigen::VectorXd* grad,
                           std::span<const DropoutMasks> masks = {}) const {
    require(!batch.empty(), ErrorCode::InvalidArgument, "empty training batch");
    std::vector<DenseLayer> g_trunk = zeros_like(trunk_);
    std::vector<std::vector<DenseLayer>> g_heads;
    for (const auto& h : heads_) g_heads.push_back(zeros_like(h));
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;

    std::vector<Eigen::VectorXd> trunk_pre(trunk_.size()), trunk_act(trunk_.size() + 1);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const auto& e = batch[s];
      require(e.arm < heads_.size(), ErrorCode::UnknownArm, "training sample arm");
      const DropoutMasks* mask = masks.empty() ? nullptr : &masks[s];
      trunk_act[0] = e.x;
      for (std::size_t l = 0; l < trunk_.size(); ++l) {
        trunk_pre[l] = trunk_[l].weight * trunk_act[l] + trunk_[l].bias;
        trunk_act[l + 1] = trunk_pre[l].cwiseMax(0.0);
        if (mask) trunk_act[l + 1] = trunk_act[l + 1].cwiseProduct((*mask)[l]);
      }
      const auto& head = heads_[e.arm];
      std::vector<Eigen::VectorXd> head_pre(head.size()), head_act(head.size());
      head_act[0] = trunk_act.back();
      for (std::size_t l = 0; l + 1 < head.size(); ++l) {
        head_pre[l] = head[l].weight * head_act[l] + head[l].bias;
        head_act[l + 1] = head_pre[l].cwiseMax(0.0);
      }
      const double q = (head.back().weight * head_act.back() + head.back().bias)[0];
      const double err = q - e.reward;
      loss += scale * err * err;
      if (!grad) continue;

      // backward through the head
      Eigen::VectorXd delta = Eigen::VectorXd::Constant(1, 2.0 * scale * err);
      auto& gh = g_heads[e.arm];
      for (std::size_t l = head.size(); l-- > 0;) {
        gh[l].weight.noalias() += delta * head_act[l].transpose();
        gh[l].bias += delta;
        Eigen::VectorXd up = head[l].weight.transpose() * delta;
        if (l > 0) up = up.cwiseProduct((head_pre[l - 1].array() > 0.0).cast<double>().matrix());
        delta = std::move(up);
      }
      // delta is now dLoss/d(trunk output after mask)
      for (std::size_t l = trunk_.size(); l-- > 0;) {
        if (mask) delta = delta.cwiseProduct((*mask)[l]);
        delta = delta.cwiseProduct((trunk_pre[l].array() > 0.0).cast<double>().matrix());
        g_trunk[l].weight.noalias() += delta * trunk_act[l].transpose();
        g_trunk[l].bias += delta;
        if (l > 0) delta = trunk_[l].weight.transpose() * delta;
      }
    }
    const Eigen::VectorXd theta = parameters();
    loss += weight_decay * theta.squaredNorm();
    if (grad) {
      Mlp tmp = *this;
      tmp.trunk_ = std::move(g_trunk);
      tmp.heads_ = std::move(g_heads);
      *grad = tmp.parameters() + 2.0 * weight_decay * theta;
    }
    return loss;
  }

  friend void to_json(nlohmann::json& j, const Mlp& m) {
    const auto p = m.parameters();
    j = nlohmann::json{{"format", "banditlab.mlp"},
                       {"version", 1},
                       {"input_dim", m.spec_.input_dim},
                       {"trunk_widths", m.spec_.trunk_widths},
                       {"head_widths", m.spec_.head_widths},
                       {"arms", m.spec_.arms},
                       {"dropout", m.spec_.dropout},
                       {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
  }

  friend void from_json(const nlohmann::json& j, Mlp& m) {
    require(j.value("format", "") == "banditlab.mlp" && j.at("version").get<int>() == 1, ErrorCode::FormatError,
            "not an mlp document");
    MlpSpec spec;
    spec.input_dim = j.at("input_dim").get<std::size_t>();
    spec.trunk_widths = j.at("trunk_widths").get<std::vector<std::size_t>>();
    spec.head_widths = j.at("head_widths").get<std::vector<std::size_t>>();
    spec.arms = j.at("arms").get<std::size_t>();
    spec.dropout = j.at("dropout").get<double>();
    m = Mlp::init(spec, 0);
    const auto p = j.at("parameters").get<std::vector<double>>();
    m.set_parameters(Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size())));
  }

 private:
  static std::vector<DenseLayer> zeros_like(const std::vector<DenseLayer>& layers) {
    std::vector<DenseLayer> out;
    for (const auto& l : layers)
      out.push_back({Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()), Eigen::VectorXd::Zero(l.bias.size())});
    return out;
  }

  template <typename F>
  void for_each_layer(F&& f) const {
    for (const auto& l : trunk_) f(l);
    for (const auto& h : heads_)
      for (const auto& l : h) f(l);
  }

  template <typename F>
  void for_each_layer_mut(F&& f) {
    for (auto& l : trunk_) f(l);
    for (auto& h : heads_)
      for (auto& l : h) f(l);
  }

  MlpSpec spec_;
  std::vector<DenseLayer> trunk_;
  std::vector<std::vector<DenseLayer>> heads_;
};

/// Mini-batch SGD with weight decay. Each epoch shuffles the batch and
/// visits it in chunks of cfg.batch_size; the recorded loss per epoch is the
/// dropout-free objective over the whole batch after that epoch.
inline std::vector<double> train(Mlp& mlp, std::span<const Experience> batch, const TrainConfig& cfg) {
  cfg.validate();
  require(!batch.empty(), ErrorCode::InvalidArgument, "training batch is empty");
  Rng rng = make_rng(cfg.seed, "mlp-train");
  std::vector<std::size_t> order(batch.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> trace;
  std::vector<Experience> chunk;
  std::vector<DropoutMasks> masks;
  Eigen::VectorXd grad;
  const bool use_dropout = cfg.dropout && mlp.spec().dropout > 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      chunk.clear();
      masks.clear();
      for (std::size_t k = start; k < end; ++k) {
        chunk.push_back(batch[order[k]]);
        if (use_dropout) masks.push_back(mlp.sample_masks(rng));
      }
      const double l = mlp.loss_and_gradient(chunk, cfg.weight_decay, &grad, masks);
      if (!std::isfinite(l) || !grad.allFinite())
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
      mlp.set_parameters(mlp.parameters() - cfg.learning_rate * grad);
    }
    const double epoch_loss = mlp.loss_and_gradient(batch, cfg.weight_decay, nullptr);
    if (!std::isfinite(epoch_loss)) throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch));
    trace.push_back(epoch_loss);
  }
  return trace;
}

struct DropoutStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;  // population standard deviation
};

/// Per-arm statistics of Q(x, a) over the given trunk masks (one pass per
/// mask set; all heads share the pass's mask).
inline DropoutStats mc_dropout_stats(const Mlp& mlp, const ContextVector& x, std::span<const DropoutMasks> passes) {
  require(passes.size() >= 2, ErrorCode::InvalidArgument, "mc dropout needs at least 2 samples");
  const auto K = static_cast<Eigen::Index>(mlp.spec().arms);
  Eigen::MatrixXd q(static_cast<Eigen::Index>(passes.size()), K);
  for (std::size_t j = 0; j < passes.size(); ++j) {
    const auto g = mlp.features(x, passes[j]);
    for (Eigen::Index a = 0; a < K; ++a) q(static_cast<Eigen::Index>(j), a) = mlp.head_output(g, static_cast<std::size_t>(a));
  }
  DropoutStats s;
  // deviations from the first pass: identical passes give exactly zero spread
  const Eigen::RowVectorXd first = q.row(0);
  const Eigen::MatrixXd dev = q.rowwise() - first;
  const Eigen::RowVectorXd shift = dev.colwise().mean();
  s.mean = (first + shift).transpose();
  s.std = ((dev.rowwise() - shift).array().square().colwise().mean()).sqrt().transpose();
  return s;
}

inline DropoutStats mc_dropout_stats(const Mlp& mlp, const ContextVector& x, std::size_t samples, Rng& rng) {
  require(samples >= 2, ErrorCode::InvalidArgument, "mc dropout needs at least 2 samples");
  std::vector<DropoutMasks> passes;
  passes.reserve(samples);
  for (std::size_t j = 0; j < samples; ++j)
    passes.push_back(mlp.spec().dropout > 0.0 ? mlp.sample_masks(rng) : DropoutMasks{});
  return mc_dropout_stats(mlp, x, passes);
}

}  // namespace banditlab
