#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "zoneprior/augment.hpp"
#include "zoneprior/autoenc.hpp"
#include "zoneprior/losses.hpp"
#include "zoneprior/manifest.hpp"
#include "zoneprior/metrics.hpp"
#include "zoneprior/nn/adam.hpp"
#include "zoneprior/segnet.hpp"

namespace zoneprior {

/// Raised when a training loss becomes NaN or infinite.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PhaseConfig {
  int epochs = 1;
  nn::AdamConfig adam;
};

struct RunConfig {
  std::filesystem::path data;  // preprocessed manifest
  double split_ratio = 0.8;
  std::uint64_t split_seed = 0;
  int batch_size = 4;

  PhaseConfig autoencoder{100, {1e-3}};
  PhaseConfig segmenter{300, {1e-4}};
  AeConfig ae;
  UnetConfig unet;
  LossConfig loss;
  AugmentSpec augment;
  bool augment_autoencoder = true;

  /// Absent: plain U-Net baseline with no global loss.
  std::optional<std::filesystem::path> encoder_checkpoint;
  std::filesystem::path out_dir = "run";
  std::uint64_t seed = 0;

  void validate() const;
  /// Derives split, model, augmentation and shuffle seeds from one value.
  void apply_global_seed(std::uint64_t global_seed);
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig load_run_config(const std::filesystem::path& path);

struct CaseLoss {
  double pix = 0.0;
  double glob = 0.0;
};

/// Weighted cross-entropy of one case plus, when an encoder is given, the
/// latent distance between the encodings of the soft prediction and of the
/// reference masks. If `dlogits` is set it receives d(pix + lambda * glob)
/// with respect to the pre-softmax logits; the encoder itself is untouched.
template <typename Scalar>
CaseLoss segmenter_case_loss(const MatX<Scalar>& probs, const LabelVolume& labels, const LossConfig& cfg,
                             const Autoencoder<Scalar>* encoder, double lambda, MatX<Scalar>* dlogits) {
  const MatX<Scalar> target = one_hot<Scalar>(labels).probs;
  CaseLoss l{weighted_cce(probs, target, cfg), 0.0};
  if (dlogits) *dlogits = weighted_cce_logit_grad(probs, target, cfg);
  if (!encoder) return l;
  const bool backprop = dlogits && lambda > 0.0;
  typename Autoencoder<Scalar>::Trace trace;
  const auto e_gt = encoder->encode(to_mask_stack<Scalar>(labels));
  const auto e_pred = encoder->encode({labels.geom.shape, probs.rightCols(kNumZones)}, backprop ? &trace : nullptr);
  l.glob = latent_loss(e_pred.latent, e_gt.latent);
  if (backprop) {
    const MatX<Scalar> dlatent = latent_loss_grad(e_pred.latent, e_gt.latent) * Scalar(lambda);
    MatX<Scalar> dprobs = MatX<Scalar>::Zero(probs.rows(), kNumClasses);
    dprobs.rightCols(kNumZones) = encoder->encoder_input_grad(trace, dlatent);
    *dlogits += nn::softmax_rows_backward(probs, dprobs);
  }
  return l;
}

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

/// Seeded shuffle of case ids; the first floor(n * ratio) become training.
DatasetSplit split_dataset(const Manifest& manifest, double ratio, std::uint64_t seed);

struct StepLog {
  int epoch = 0;
  long step = 0;
  double lambda = 0.0;
  double loss_pix = 0.0;
  double loss_global = 0.0;
  double loss_l2 = 0.0;
  double loss_total = 0.0;
};

struct EpochLog {
  int epoch = 0;
  std::string split;
  double loss_total = 0.0;
  double loss_pix = 0.0;
  double loss_global = 0.0;
  double dice_tz = 0.0;
  double dice_pz = 0.0;
};

struct TrainHooks {
  /// Called for every case fed to the model; `training` is false during validation.
  std::function<void(const std::string& id, bool training)> on_sample;
  std::function<void(const StepLog&)> on_step;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  std::filesystem::path checkpoint;   // best-validation checkpoint (.json)
  std::filesystem::path metrics_csv;  // epoch, split, loss_total, loss_pix, loss_global, dice_tz, dice_pz
  std::filesystem::path steps_csv;    // per-step loss decomposition
  int best_epoch = -1;
  double best_score = -1.0;
  std::vector<EpochLog> history;
};

/// Reconstruction training on label masks with binary cross-entropy.
/// Writes autoencoder.json/.bin, ae_metrics.csv and ae_steps.csv to out_dir.
TrainResult train_autoencoder(const RunConfig& cfg, const TrainHooks& hooks = {});

/// Weighted cross-entropy plus lambda(epoch) times the latent loss of the
/// frozen encoder, plus the L2 kernel penalty. Writes unet.json/.bin,
/// seg_metrics.csv and seg_steps.csv to out_dir.
TrainResult train_segmenter(const RunConfig& cfg, const TrainHooks& hooks = {});

struct LoadedCase {
  std::string id;
  Volume image;
  LabelVolume labels;
};

std::vector<LoadedCase> load_cases(const Manifest& manifest, const std::vector<std::string>& ids);

using Predictor = std::function<LabelVolume(const LoadedCase&)>;

/// Scores every case with per_class_dice and aggregates the means.
DiceReport evaluate(const Predictor& predict, const std::vector<LoadedCase>& cases, std::string label = "",
                    std::string split = "");

/// Loads a U-Net checkpoint and evaluates it. The report label follows the
/// checkpoint's training mode (with or without the encoder loss).
DiceReport evaluate(const std::filesystem::path& checkpoint, const std::vector<LoadedCase>& cases,
                    std::string split = "");

}  // namespace zoneprior
