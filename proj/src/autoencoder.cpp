#include "pixphys/autoencoder.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace pixphys {

namespace {

constexpr char kWeightsMagic[7] = "P2PAEW";
constexpr std::uint16_t kWeightsVersion = 1;

bool linear_layer(const AutoencoderModel& m, Eigen::Index l) {
  const Eigen::Index half = m.layer_count() / 2;
  return l == half - 1 || l == m.layer_count() - 1;
}

/// Activations A[0..L] for layers [l_lo, l_hi); A[0] = x.
std::vector<Matrix> forward_range(const AutoencoderModel& m, const Matrix& x, Eigen::Index l_lo,
                                  Eigen::Index l_hi) {
  std::vector<Matrix> acts;
  acts.reserve(static_cast<std::size_t>(l_hi - l_lo) + 1);
  acts.push_back(x);
  for (Eigen::Index l = l_lo; l < l_hi; ++l) {
    Matrix s = (m.weights[static_cast<std::size_t>(l)] * acts.back()).colwise() +
               m.biases[static_cast<std::size_t>(l)];
    if (!linear_layer(m, l)) s = s.array().tanh();
    acts.push_back(std::move(s));
  }
  return acts;
}

/// Backpropagates `g` (gradient at the output activation of layer l_hi - 1)
/// down to layer l_lo, accumulating parameter gradients. Returns the
/// gradient at the input activation of layer l_lo.
Matrix backward_range(const AutoencoderModel& m, const std::vector<Matrix>& acts, Matrix g,
                      Eigen::Index l_lo, Eigen::Index l_hi, AeGradient& grad) {
  for (Eigen::Index l = l_hi - 1; l >= l_lo; --l) {
    const Matrix& out = acts[static_cast<std::size_t>(l - l_lo + 1)];
    const Matrix& in = acts[static_cast<std::size_t>(l - l_lo)];
    if (!linear_layer(m, l)) g = g.cwiseProduct((1.0 - out.array().square()).matrix());
    grad.weight_grads[static_cast<std::size_t>(l)].noalias() += g * in.transpose();
    grad.bias_grads[static_cast<std::size_t>(l)] += g.rowwise().sum();
    if (l > l_lo) g = m.weights[static_cast<std::size_t>(l)].transpose() * g;
  }
  return m.weights[static_cast<std::size_t>(l_lo)].transpose() * g;
}

AeGradient zero_gradient(const AutoencoderModel& m) {
  AeGradient g;
  for (const Matrix& w : m.weights) g.weight_grads.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const Vector& b : m.biases) g.bias_grads.push_back(Vector::Zero(b.size()));
  return g;
}

/// The physics residual e_k = (z_next - z_prev) / (2 dt) - f(z_ctr) per
/// window, its mean squared size, and the latent gradients of
/// mean_k |e_k|^2 / d with respect to each of the three encodings.
struct PhysicsTerm {
  double eq = 0.0;
  Matrix d_prev, d_ctr, d_next;  // d x W
};

PhysicsTerm physics_term(const SparseModel& physics, const Matrix& z_prev, const Matrix& z_ctr,
                         const Matrix& z_next, double dt) {
  const Eigen::Index d = z_ctr.rows(), windows = z_ctr.cols();
  PhysicsTerm t;
  t.d_prev = Matrix::Zero(d, windows);
  t.d_ctr = Matrix::Zero(d, windows);
  t.d_next = Matrix::Zero(d, windows);
  const double norm = 1.0 / static_cast<double>(windows);
  for (Eigen::Index k = 0; k < windows; ++k) {
    const Vector z = z_ctr.col(k);
    const Vector e = (z_next.col(k) - z_prev.col(k)) / (2.0 * dt) - evaluate_rhs(physics, z);
    t.eq += norm * e.squaredNorm();
    const Vector scaled = (2.0 * norm) * e;
    t.d_next.col(k) += scaled / (2.0 * dt);
    t.d_prev.col(k) -= scaled / (2.0 * dt);
    t.d_ctr.col(k) -= rhs_jacobian(physics, z).transpose() * scaled;
  }
  return t;
}

void check_physics(const AutoencoderModel& m, const SparseModel* physics) {
  if (physics && physics->state_dim != m.latent_dim())
    throw std::invalid_argument("autoencoder: physics model dimension " +
                                std::to_string(physics->state_dim) + " != latent dim " +
                                std::to_string(m.latent_dim()));
}

EpochLoss full_loss(const AutoencoderModel& m, const Matrix& data, double dt,
                    const SparseModel* physics) {
  EpochLoss loss;
  const Matrix z = m.encode_batch(data);
  const Matrix xhat = m.decode_batch(z);
  loss.recon = (xhat - data).squaredNorm() / static_cast<double>(data.cols());
  if (physics && data.cols() >= 3) {
    const Eigen::Index windows = data.cols() - 2;
    loss.eq = physics_term(*physics, z.leftCols(windows), z.middleCols(1, windows),
                           z.rightCols(windows), dt)
                  .eq;
  }
  return loss;
}

void apply_momentum_step(AutoencoderModel& m, const AeGradient& grad,
                         std::vector<Matrix>& w_velocity, std::vector<Vector>& b_velocity,
                         double lr, double momentum) {
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    w_velocity[l] = momentum * w_velocity[l] - lr * grad.weight_grads[l];
    b_velocity[l] = momentum * b_velocity[l] - lr * grad.bias_grads[l];
    m.weights[l] += w_velocity[l];
    m.biases[l] += b_velocity[l];
  }
}

}  // namespace

void AutoencoderConfig::validate() const {
  for (int h : hidden)
    if (h < 1) throw std::invalid_argument("AutoencoderConfig: hidden widths must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("AutoencoderConfig: learning_rate must be positive and finite");
  if (!(lr_decay > 0.0) || lr_decay > 1.0)
    throw std::invalid_argument("AutoencoderConfig: lr_decay must be in (0, 1]");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("AutoencoderConfig: momentum must be in [0, 1)");
  if (epochs < 1) throw std::invalid_argument("AutoencoderConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("AutoencoderConfig: batch_size must be >= 1");
  if (lambda_eq < 0.0 || !std::isfinite(lambda_eq))
    throw std::invalid_argument("AutoencoderConfig: lambda_eq must be >= 0 and finite");
}

Matrix AutoencoderModel::encode_batch(const Matrix& x) const {
  if (x.rows() != input_dim())
    throw std::invalid_argument("encode_batch: expected " + std::to_string(input_dim()) +
                                " rows, got " + std::to_string(x.rows()));
  return forward_range(*this, x, 0, layer_count() / 2).back();
}

Matrix AutoencoderModel::decode_batch(const Matrix& z) const {
  if (z.rows() != latent_dim())
    throw std::invalid_argument("decode_batch: expected " + std::to_string(latent_dim()) +
                                " rows, got " + std::to_string(z.rows()));
  return forward_range(*this, z, layer_count() / 2, layer_count()).back();
}

void AutoencoderModel::validate() const {
  if (encoder_widths.size() < 2)
    throw std::invalid_argument("AutoencoderModel: need at least input and latent widths");
  const std::size_t half = encoder_widths.size() - 1;
  if (weights.size() != 2 * half || biases.size() != 2 * half)
    throw std::invalid_argument("AutoencoderModel: layer count does not match widths");
  std::vector<int> widths(encoder_widths);
  widths.insert(widths.end(), encoder_widths.rbegin() + 1, encoder_widths.rend());
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != widths[l + 1] || weights[l].cols() != widths[l] ||
        biases[l].size() != widths[l + 1])
      throw std::invalid_argument("AutoencoderModel: layer " + std::to_string(l) +
                                  " has inconsistent shape");
    if (!weights[l].allFinite() || !biases[l].allFinite())
      throw std::invalid_argument("AutoencoderModel: non-finite parameters in layer " +
                                  std::to_string(l));
  }
}

AutoencoderModel make_autoencoder(int input_dim, int latent_dim, const AutoencoderConfig& cfg) {
  cfg.validate();
  if (input_dim < 1) throw std::invalid_argument("make_autoencoder: input_dim must be >= 1");
  if (latent_dim < 1 || latent_dim >= input_dim)
    throw std::invalid_argument("make_autoencoder: need 1 <= latent_dim < input_dim");

  AutoencoderModel m;
  m.config = cfg;
  m.encoder_widths.push_back(input_dim);
  for (int h : cfg.hidden) m.encoder_widths.push_back(h);
  m.encoder_widths.push_back(latent_dim);

  std::vector<int> widths(m.encoder_widths);
  widths.insert(widths.end(), m.encoder_widths.rbegin() + 1, m.encoder_widths.rend());

  std::mt19937_64 rng(cfg.seed);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l], fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(fan_out, fan_in);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = u(rng);
    m.weights.push_back(std::move(w));
    m.biases.push_back(Vector::Zero(fan_out));
  }
  m.validate();
  return m;
}

Matrix frames_to_columns(const FrameSequence& frames) {
  frames.validate();
  const Eigen::Index dim = static_cast<Eigen::Index>(frames.height) * frames.width;
  Matrix data(dim, static_cast<Eigen::Index>(frames.frames.size()));
  for (std::size_t i = 0; i < frames.frames.size(); ++i) {
    const detail::RowMajorF rm = frames.frames[i];
    data.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const Eigen::VectorXf>(rm.data(), dim).cast<double>();
  }
  return data;
}

AeGradient ae_loss_and_gradient(const AutoencoderModel& model, const Matrix& data, double dt,
                                const SparseModel* physics, double lambda_eq) {
  model.validate();
  check_physics(model, physics);
  if (physics && data.cols() < 3)
    throw std::invalid_argument("ae_loss_and_gradient: physics loss needs >= 3 frames");
  if (physics && !(dt > 0.0))
    throw std::invalid_argument("ae_loss_and_gradient: physics loss needs dt > 0");

  const Eigen::Index half = model.layer_count() / 2;
  const std::vector<Matrix> enc_acts = forward_range(model, data, 0, half);
  const Matrix& z = enc_acts.back();
  const std::vector<Matrix> dec_acts = forward_range(model, z, half, model.layer_count());
  const Matrix& xhat = dec_acts.back();

  AeGradient grad = zero_gradient(model);
  grad.recon = (xhat - data).squaredNorm() / static_cast<double>(data.cols());

  const Matrix g_out = (2.0 / static_cast<double>(data.cols())) * (xhat - data);
  Matrix g_latent = backward_range(model, dec_acts, g_out, half, model.layer_count(), grad);

  if (physics) {
    const Eigen::Index windows = data.cols() - 2;
    PhysicsTerm t = physics_term(*physics, z.leftCols(windows), z.middleCols(1, windows),
                                 z.rightCols(windows), dt);
    grad.eq = t.eq;
    g_latent.leftCols(windows) += lambda_eq * t.d_prev;
    g_latent.middleCols(1, windows) += lambda_eq * t.d_ctr;
    g_latent.rightCols(windows) += lambda_eq * t.d_next;
  }

  backward_range(model, enc_acts, g_latent, 0, half, grad);
  return grad;
}

std::pair<AutoencoderModel, TrajectorySeries> train_autoencoder(const FrameSequence& frames,
                                                                int latent_dim,
                                                                const AutoencoderConfig& cfg,
                                                                const SparseModel* physics) {
  cfg.validate();
  const Matrix data = frames_to_columns(frames);
  const Eigen::Index n = data.cols();
  if (physics && n < 3)
    throw std::invalid_argument("train_autoencoder: physics loss needs >= 3 frames");

  AutoencoderModel model = make_autoencoder(static_cast<int>(data.rows()), latent_dim, cfg);
  check_physics(model, physics);
  // Start the decoder output at the mean frame so training spends its budget
  // on the dynamic modes rather than the DC component.
  model.biases.back() = data.rowwise().mean();
  const Eigen::Index half = model.layer_count() / 2;

  std::vector<Eigen::Index> order;
  if (physics)
    for (Eigen::Index k = 1; k + 1 < n; ++k) order.push_back(k);
  else
    for (Eigen::Index k = 0; k < n; ++k) order.push_back(k);

  std::vector<Matrix> w_velocity;
  std::vector<Vector> b_velocity;
  for (const Matrix& w : model.weights) w_velocity.push_back(Matrix::Zero(w.rows(), w.cols()));
  for (const Vector& b : model.biases) b_velocity.push_back(Vector::Zero(b.size()));

  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  const int warmup = std::max(1, cfg.epochs / 20);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.learning_rate *
        std::pow(cfg.lr_decay, cfg.epochs > 1 ? epoch / (cfg.epochs - 1.0) : 0.0) *
        std::min(1.0, (epoch + 1.0) / warmup);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t first = 0; first < order.size();
         first += static_cast<std::size_t>(cfg.batch_size)) {
      const Eigen::Index b = std::min<Eigen::Index>(cfg.batch_size,
                                                    static_cast<Eigen::Index>(order.size() - first));
      Matrix x_ctr(data.rows(), b), x_prev, x_next;
      if (physics) {
        x_prev.resize(data.rows(), b);
        x_next.resize(data.rows(), b);
      }
      for (Eigen::Index j = 0; j < b; ++j) {
        const Eigen::Index k = order[first + static_cast<std::size_t>(j)];
        x_ctr.col(j) = data.col(k);
        if (physics) {
          x_prev.col(j) = data.col(k - 1);
          x_next.col(j) = data.col(k + 1);
        }
      }

      AeGradient grad = zero_gradient(model);
      const std::vector<Matrix> enc_acts = forward_range(model, x_ctr, 0, half);
      const Matrix& z_ctr = enc_acts.back();
      const std::vector<Matrix> dec_acts =
          forward_range(model, z_ctr, half, model.layer_count());
      const Matrix g_out =
          (2.0 / static_cast<double>(x_ctr.cols())) * (dec_acts.back() - x_ctr);
      Matrix g_latent = backward_range(model, dec_acts, g_out, half, model.layer_count(), grad);

      if (physics) {
        const std::vector<Matrix> prev_acts = forward_range(model, x_prev, 0, half);
        const std::vector<Matrix> next_acts = forward_range(model, x_next, 0, half);
        PhysicsTerm t =
            physics_term(*physics, prev_acts.back(), z_ctr, next_acts.back(), frames.dt);
        g_latent += cfg.lambda_eq * t.d_ctr;
        backward_range(model, prev_acts, cfg.lambda_eq * t.d_prev, 0, half, grad);
        backward_range(model, next_acts, cfg.lambda_eq * t.d_next, 0, half, grad);
      }
      backward_range(model, enc_acts, g_latent, 0, half, grad);
      apply_momentum_step(model, grad, w_velocity, b_velocity, lr, cfg.momentum);
    }

    const EpochLoss loss = full_loss(model, data, frames.dt, physics);
    if (!std::isfinite(loss.recon) || !std::isfinite(loss.eq)) {
      std::ostringstream msg;
      msg << "train_autoencoder: non-finite loss at epoch " << epoch;
      if (!model.loss_history.empty())
        msg << " (last finite recon=" << model.loss_history.back().recon
            << ", eq=" << model.loss_history.back().eq << ")";
      throw std::runtime_error(msg.str());
    }
    model.loss_history.push_back(loss);
  }

  return {model, encode(model, frames)};
}

TrajectorySeries encode(const AutoencoderModel& model, const FrameSequence& frames) {
  const Matrix data = frames_to_columns(frames);
  const Matrix z = model.encode_batch(data);
  TrajectorySeries series;
  series.times = uniform_times(0.0, frames.dt, z.cols());
  series.states = z.transpose();
  return series;
}

void save_autoencoder(const std::filesystem::path& path, const AutoencoderModel& model) {
  model.validate();
  std::ofstream out = detail::open_out(path, "save_autoencoder");
  detail::write_bytes(out, kWeightsMagic, 6);
  detail::write_pod(out, kWeightsVersion);
  detail::write_pod(out, static_cast<std::uint32_t>(model.encoder_widths.size()));
  for (int w : model.encoder_widths) detail::write_pod(out, static_cast<std::uint32_t>(w));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const detail::RowMajorD rm = model.weights[l];
    detail::write_bytes(out, rm.data(), sizeof(double) * static_cast<std::size_t>(rm.size()));
    detail::write_bytes(out, model.biases[l].data(),
                        sizeof(double) * static_cast<std::size_t>(model.biases[l].size()));
  }
  if (!out) throw std::runtime_error("save_autoencoder: write failed for " + path.string());
}

AutoencoderModel load_autoencoder(const std::filesystem::path& path) {
  detail::Reader r(path, "load_autoencoder");
  detail::check_magic(r, kWeightsMagic, "load_autoencoder");
  detail::check_version(r.pod<std::uint16_t>(), kWeightsVersion, "load_autoencoder");

  AutoencoderModel m;
  const std::uint32_t n_widths = r.pod<std::uint32_t>();
  if (n_widths < 2) throw std::runtime_error("load_autoencoder: fewer than two layer widths");
  for (std::uint32_t i = 0; i < n_widths; ++i)
    m.encoder_widths.push_back(static_cast<int>(r.pod<std::uint32_t>()));
  m.config.hidden.assign(m.encoder_widths.begin() + 1, m.encoder_widths.end() - 1);

  std::vector<int> widths(m.encoder_widths);
  widths.insert(widths.end(), m.encoder_widths.rbegin() + 1, m.encoder_widths.rend());
  detail::RowMajorD rm;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    rm.resize(widths[l + 1], widths[l]);
    r.read(rm.data(), sizeof(double) * static_cast<std::size_t>(rm.size()));
    m.weights.emplace_back(rm);
    Vector b(widths[l + 1]);
    r.read(b.data(), sizeof(double) * static_cast<std::size_t>(b.size()));
    m.biases.push_back(std::move(b));
  }
  m.validate();
  return m;
}

}  // namespace pixphys
