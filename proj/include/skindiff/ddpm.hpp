#pragma once

// Conditional denoising diffusion model over planar poses (x, y, cos, sin), conditioned on
// taxel activations. The noise predictor is a 4-layer MLP fed with
// [noisy pose | activations | sinusoidal embedding of t].

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "skindiff/contact_synthesis.hpp"
#include "skindiff/geometry.hpp"
#include "skindiff/mlp.hpp"
#include "skindiff/rng.hpp"
#include "skindiff/tactile_sensor.hpp"

namespace skindiff {

inline constexpr std::size_t kPoseDim = 4;

struct NoiseSchedule {
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bars;

  // Steps are 1-based, t in [1, T].
  double beta(int t) const { return betas[static_cast<std::size_t>(t - 1)]; }
  double alpha(int t) const { return alphas[static_cast<std::size_t>(t - 1)]; }
  double alpha_bar(int t) const { return alpha_bars[static_cast<std::size_t>(t - 1)]; }
};

/// Linear beta schedule. A single-step schedule uses beta_start.
inline NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw std::invalid_argument("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw std::invalid_argument("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(t) / static_cast<double>(T - 1);
    const double b = beta_start + (beta_end - beta_start) * frac;
    s.betas.push_back(b);
    s.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bars.push_back(prod);
  }
  return s;
}

// Default schedule: T = 100 with the beta range of the usual 1000-step linear schedule scaled
// by 10, so that alpha_bar_T ~ 2e-5 and the terminal marginal is close to N(0, I).
inline constexpr int kDefaultSteps = 100;
inline constexpr double kDefaultBetaStart = 1e-3;
inline constexpr double kDefaultBetaEnd = 0.2;

inline NoiseSchedule default_schedule() { return make_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd); }

inline Vec4 forward_diffuse(const Vec4& q0, int t, const Vec4& eps, const NoiseSchedule& sched) {
  if (t < 1 || t > sched.T) throw std::invalid_argument("forward_diffuse: step out of range");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * q0 + std::sqrt(1.0 - ab) * eps;
}

/// Sinusoidal embedding: first half sin(t * f_k), second half cos(t * f_k),
/// f_k = 10000^(-k / (dim/2)).
inline Vector time_embedding(int t, std::size_t dim) {
  Vector e(static_cast<Eigen::Index>(dim));
  const std::size_t half = dim / 2;
  for (std::size_t k = 0; k < half; ++k) {
    const double f = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    e(static_cast<Eigen::Index>(k)) = std::sin(t * f);
    e(static_cast<Eigen::Index>(half + k)) = std::cos(t * f);
  }
  if (dim % 2 == 1) e(static_cast<Eigen::Index>(dim - 1)) = static_cast<double>(t);
  return e;
}

/// Per-dimension affine map between pose space and the unit-scale space the model diffuses in.
struct Standardization {
  Vec4 mean = Vec4::Zero();
  Vec4 stddev = Vec4::Ones();

  Vec4 apply(const Vec4& v) const { return (v - mean).cwiseQuotient(stddev); }
  Vec4 invert(const Vec4& v) const { return v.cwiseProduct(stddev) + mean; }

  static Standardization fit(const std::vector<ContactRecord>& records) {
    Standardization s;
    if (records.empty()) return s;
    Vec4 sum = Vec4::Zero();
    for (const auto& r : records) sum += r.pose.as_vector();
    s.mean = sum / static_cast<double>(records.size());
    Vec4 var = Vec4::Zero();
    for (const auto& r : records) var += (r.pose.as_vector() - s.mean).cwiseAbs2();
    var /= static_cast<double>(records.size());
    for (int i = 0; i < 4; ++i) s.stddev[i] = var[i] > 1e-12 ? std::sqrt(var[i]) : 1.0;
    return s;
  }
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t hidden_width = 256;
  std::size_t time_dim = 32;
  /// Gaussian noise added to the conditioning activations of every training example (then
  /// clamped to [0, 1]); 0 trains on the stored noiseless observations.
  double observation_noise_std = 0.0;

  void validate() const {
    if (epochs < 1 || batch_size < 1 || hidden_width < 1 || time_dim < 1 || !(learning_rate > 0.0))
      throw std::invalid_argument("TrainConfig: all fields must be positive");
    if (!(observation_noise_std >= 0.0)) throw std::invalid_argument("TrainConfig: observation noise must be >= 0");
  }
};

/// Trained inverse observation model: schedule, noise predictor and pose standardization.
struct DiffusionModel {
  NoiseSchedule schedule;
  Mlp net;
  std::size_t n_taxels = 0;
  std::size_t time_dim = 32;
  Standardization standardization;
  std::uint64_t train_seed = 0;

  static DiffusionModel create(const NoiseSchedule& sched, std::size_t n_taxels, std::size_t hidden,
                               std::size_t time_dim) {
    DiffusionModel m;
    m.schedule = sched;
    m.n_taxels = n_taxels;
    m.time_dim = time_dim;
    m.net = Mlp({kPoseDim + n_taxels + time_dim, hidden, hidden, hidden, kPoseDim});
    return m;
  }

  std::size_t input_dim() const { return kPoseDim + n_taxels + time_dim; }
};

/// Stacks [q_t | z | embed(t)] for every column of the batch.
inline Matrix assemble_inputs(const DiffusionModel& model, const Matrix& q_t, const Matrix& z,
                              const std::vector<int>& steps) {
  const Eigen::Index B = q_t.cols();
  Matrix x(static_cast<Eigen::Index>(model.input_dim()), B);
  x.topRows(kPoseDim) = q_t;
  x.middleRows(kPoseDim, static_cast<Eigen::Index>(model.n_taxels)) = z;
  for (Eigen::Index b = 0; b < B; ++b)
    x.col(b).tail(static_cast<Eigen::Index>(model.time_dim)) =
        time_embedding(steps[static_cast<std::size_t>(b)], model.time_dim);
  return x;
}

inline Vector to_vector(const Observation& z) {
  return Eigen::Map<const Vector>(z.activations.data(), static_cast<Eigen::Index>(z.size()));
}

/// Forward pass of the noise predictor on a (standardized) noisy pose.
inline Vec4 predict_noise(const DiffusionModel& model, const Vec4& q_t, const Observation& z, int t) {
  if (z.size() != model.n_taxels) throw std::invalid_argument("predict_noise: observation length mismatch");
  const Matrix x = assemble_inputs(model, q_t, to_vector(z), {t});
  return model.net.forward(x).col(0);
}

/// Mean over the batch of |eps_hat - eps|^2 and its gradient with respect to the network.
inline double noise_loss(const Mlp& net, const Matrix& x, const Matrix& eps, Mlp::Gradient* grad) {
  Mlp::Trace trace;
  const Matrix out = net.forward(x, trace);
  const Matrix diff = out - eps;
  const double B = static_cast<double>(x.cols());
  const double loss = diff.squaredNorm() / B;
  if (grad) *grad = net.backward(trace, (2.0 / B) * diff);
  return loss;
}

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainResult {
  DiffusionModel model;
  std::vector<double> epoch_loss;
};

inline constexpr std::uint64_t kInitSalt = 0x1417;
inline constexpr std::uint64_t kShuffleSalt = 0x5348;
inline constexpr std::uint64_t kNoiseSalt = 0x4e53;

/// Minibatch training on the noise-prediction objective. Each example in a batch gets its own
/// step t ~ U{1..T} and noise eps ~ N(0, I). Deterministic for a fixed config.
inline TrainResult train(const std::vector<ContactRecord>& dataset, const NoiseSchedule& sched,
                         const TrainConfig& cfg,
                         const std::function<void(std::size_t, double)>& on_epoch = {}) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  const std::size_t n_tax = dataset.front().observation.size();
  for (const auto& r : dataset)
    if (r.observation.size() != n_tax) throw std::invalid_argument("train: observations differ in length");

  TrainResult result;
  DiffusionModel& model = result.model;
  model = DiffusionModel::create(sched, n_tax, cfg.hidden_width, cfg.time_dim);
  model.train_seed = cfg.seed;
  model.standardization = Standardization::fit(dataset);
  {
    Rng init = make_stream(cfg.seed, 0, kInitSalt);
    model.net.initialize(init);
  }
  Adam adam(model.net, cfg.learning_rate);

  std::vector<Vec4> poses;
  poses.reserve(dataset.size());
  for (const auto& r : dataset) poses.push_back(model.standardization.apply(r.pose.as_vector()));

  std::vector<std::size_t> order(dataset.size());
  std::size_t step_index = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle = make_stream(cfg.seed, epoch, kShuffleSalt);
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle() % i);
      std::swap(order[i - 1], order[j]);
    }
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++step_index) {
      const std::size_t B = std::min(cfg.batch_size, order.size() - start);
      Rng noise = make_stream(cfg.seed, step_index, kNoiseSalt);
      Matrix q_t(kPoseDim, static_cast<Eigen::Index>(B));
      Matrix z(static_cast<Eigen::Index>(n_tax), static_cast<Eigen::Index>(B));
      Matrix eps(kPoseDim, static_cast<Eigen::Index>(B));
      std::vector<int> steps(B);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t idx = order[start + b];
        const int t = 1 + static_cast<int>(noise() % static_cast<std::uint64_t>(sched.T));
        Vec4 e;
        for (int k = 0; k < 4; ++k) e[k] = normal(noise);
        steps[b] = t;
        eps.col(static_cast<Eigen::Index>(b)) = e;
        q_t.col(static_cast<Eigen::Index>(b)) = forward_diffuse(poses[idx], t, e, sched);
        z.col(static_cast<Eigen::Index>(b)) = to_vector(dataset[idx].observation);
        if (cfg.observation_noise_std > 0.0)
          for (Eigen::Index k = 0; k < z.rows(); ++k)
            z(k, static_cast<Eigen::Index>(b)) =
                std::clamp(z(k, static_cast<Eigen::Index>(b)) + cfg.observation_noise_std * normal(noise), 0.0, 1.0);
      }
      const Matrix x = assemble_inputs(model, q_t, z, steps);
      Mlp::Gradient grad;
      const double loss = noise_loss(model.net, x, eps, &grad);
      if (!std::isfinite(loss))
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch) +
                               "; lower the learning rate");
      adam.step(model.net, grad);
      loss_sum += loss;
      ++n_batches;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n_batches));
    if (on_epoch) on_epoch(epoch, result.epoch_loss.back());
  }
  return result;
}

/// Projects (c, s) onto the unit circle; nullopt when the heading vector vanishes.
inline std::optional<PlanarPose> renormalize_pose(const Vec4& v) {
  const double n = std::hypot(v[2], v[3]);
  if (!(n > 1e-12) || !v.allFinite()) return std::nullopt;
  return PlanarPose{v[0], v[1], v[2] / n, v[3] / n};
}

inline constexpr std::uint64_t kSampleSalt = 0x5341;

/// Ancestral sampling of S pose hypotheses for one observation. Hypothesis i draws all of its
/// noise from the stream derived from (seed, i); degenerate headings are redrawn from the same
/// stream.
inline std::vector<PlanarPose> sample(const DiffusionModel& model, const Observation& z, std::size_t S,
                                      std::uint64_t seed) {
  if (z.size() != model.n_taxels) throw std::invalid_argument("sample: observation length mismatch");
  const NoiseSchedule& sched = model.schedule;
  const Mlp& net = model.net;
  const auto E = static_cast<Eigen::Index>(kPoseDim);
  const auto Nz = static_cast<Eigen::Index>(model.n_taxels);
  const auto Nt = static_cast<Eigen::Index>(model.time_dim);

  // The observation and step embedding are shared by every column, so their contribution to
  // the first layer is computed once per step.
  const Matrix& W0 = net.weight(0);
  const Vector cond = W0.middleCols(E, Nz) * to_vector(z) + net.bias(0);
  std::vector<Vector> first_layer_shift(static_cast<std::size_t>(sched.T));
  for (int t = 1; t <= sched.T; ++t)
    first_layer_shift[static_cast<std::size_t>(t - 1)] = cond + W0.rightCols(Nt) * time_embedding(t, model.time_dim);
  const Matrix W0q = W0.leftCols(E);

  auto denoise = [&](std::vector<std::size_t> cols, std::vector<Rng>& streams, std::vector<Vec4>& out) {
    const auto B = static_cast<Eigen::Index>(cols.size());
    Matrix x(E, B);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index k = 0; k < E; ++k) x(k, b) = normal(streams[cols[static_cast<std::size_t>(b)]]);
    for (int t = sched.T; t >= 1; --t) {
      Matrix a = W0q * x;
      a.colwise() += first_layer_shift[static_cast<std::size_t>(t - 1)];
      a = softplus(a);
      for (std::size_t l = 1; l < net.n_layers(); ++l) {
        Matrix h = net.weight(l) * a;
        h.colwise() += net.bias(l);
        if (l + 1 < net.n_layers()) h = softplus(h);
        a = std::move(h);
      }
      const double coef = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
      x = (x - coef * a) / std::sqrt(sched.alpha(t));
      if (t > 1) {
        const double sigma = std::sqrt(sched.beta(t));
        for (Eigen::Index b = 0; b < B; ++b)
          for (Eigen::Index k = 0; k < E; ++k) x(k, b) += sigma * normal(streams[cols[static_cast<std::size_t>(b)]]);
      }
    }
    out.clear();
    for (Eigen::Index b = 0; b < B; ++b) out.push_back(model.standardization.invert(x.col(b)));
  };

  std::vector<Rng> streams;
  streams.reserve(S);
  for (std::size_t i = 0; i < S; ++i) streams.push_back(make_stream(seed, i, kSampleSalt));

  std::vector<PlanarPose> poses(S);
  std::vector<std::size_t> pending(S);
  for (std::size_t i = 0; i < S; ++i) pending[i] = i;
  std::vector<Vec4> raw;
  for (int round = 0; !pending.empty(); ++round) {
    if (round > 100) throw std::runtime_error("sample: repeated degenerate headings");
    denoise(pending, streams, raw);
    std::vector<std::size_t> again;
    for (std::size_t j = 0; j < pending.size(); ++j) {
      if (auto p = renormalize_pose(raw[j]))
        poses[pending[j]] = *p;
      else
        again.push_back(pending[j]);
    }
    pending = std::move(again);
  }
  return poses;
}

inline std::vector<PlanarPose> sample(const DiffusionModel& model, const Observation& z, std::size_t S, Rng& rng) {
  return sample(model, z, S, rng());
}

}  // namespace skindiff
