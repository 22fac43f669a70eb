#pragma once

#include "pixphys/regress.hpp"
#include "pixphys/render.hpp"
#include "pixphys/types.hpp"

#include <filesystem>

namespace pixphys {

struct AutoencoderConfig {
  std::vector<int> hidden{128, 32};  // encoder hidden widths; decoder mirrors
  double learning_rate = 1e-3;
  double lr_decay = 0.1;  // final epoch's rate as a fraction of learning_rate
  double momentum = 0.9;
  int epochs = 500;
  int batch_size = 32;
  double lambda_eq = 0.0;  // physics-consistency weight (active with a model)
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLoss {
  double recon = 0.0;
  double eq = 0.0;
};

/// Fully connected encoder/decoder pair with tanh hidden layers and linear
/// encoder/decoder outputs. Layers are stored encoder first (widths
/// D -> hidden... -> d), then the mirrored decoder (d -> ...reversed -> D).
struct AutoencoderModel {
  std::vector<int> encoder_widths;  // D, hidden..., d
  std::vector<Matrix> weights;      // out x in, encoder then decoder
  std::vector<Vector> biases;
  AutoencoderConfig config;
  std::vector<EpochLoss> loss_history;

  int input_dim() const { return encoder_widths.front(); }
  int latent_dim() const { return encoder_widths.back(); }
  Eigen::Index layer_count() const { return static_cast<Eigen::Index>(weights.size()); }

  /// Columns are samples: encode maps D x B to d x B, decode d x B to D x B.
  Matrix encode_batch(const Matrix& x) const;
  Matrix decode_batch(const Matrix& z) const;

  void validate() const;
};

/// Xavier-initialized model (deterministic per cfg.seed).
AutoencoderModel make_autoencoder(int input_dim, int latent_dim, const AutoencoderConfig& cfg);

/// Frames flattened row-major to 64-bit columns of a D x N matrix.
Matrix frames_to_columns(const FrameSequence& frames);

/// Combined loss and its analytic gradient over the full data set:
/// recon = mean over frames of the squared reconstruction error norm;
/// eq (when physics is given) = mean over interior frame windows of
/// |(z_{k+1} - z_{k-1}) / (2 dt) - f(z_k)|^2. The gradient is of
/// recon + lambda_eq * eq.
struct AeGradient {
  std::vector<Matrix> weight_grads;
  std::vector<Vector> bias_grads;
  double recon = 0.0;
  double eq = 0.0;
};
AeGradient ae_loss_and_gradient(const AutoencoderModel& model, const Matrix& data, double dt,
                                const SparseModel* physics, double lambda_eq);

/// Trains by seeded mini-batch gradient descent with momentum; when physics
/// is given, batches are interior frame windows (reconstruction on the
/// center frame plus the physics-consistency term), otherwise plain
/// reconstruction over all frames. The rate warms up linearly over the first
/// 5% of epochs, then decays exponentially to lr_decay * learning_rate. The
/// decoder output bias starts at the mean frame; all other parameters are
/// Xavier-initialized. loss_history
/// records full-data losses after each epoch. Returns the model and the
/// encoded trajectory of all frames. Aborts (with the epoch index and last
/// finite losses) if the loss goes non-finite.
std::pair<AutoencoderModel, TrajectorySeries> train_autoencoder(const FrameSequence& frames,
                                                                int latent_dim,
                                                                const AutoencoderConfig& cfg,
                                                                const SparseModel* physics =
                                                                    nullptr);

/// Forward pass per frame; times are 0, dt, 2 dt, ...
TrajectorySeries encode(const AutoencoderModel& model, const FrameSequence& frames);

/// Versioned binary weight files: layer shapes, then 64-bit weights and
/// biases in layer order.
void save_autoencoder(const std::filesystem::path& path, const AutoencoderModel& model);
AutoencoderModel load_autoencoder(const std::filesystem::path& path);

}  // namespace pixphys
