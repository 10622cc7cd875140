#include "zoneprior/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

#include "zoneprior/checkpoint.hpp"
#include "zoneprior/nifti.hpp"
#include "zoneprior/seeding.hpp"

namespace zoneprior {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// configuration

void RunConfig::validate() const {
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ValidationError("split ratio must lie in (0, 1)");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (autoencoder.epochs < 1 || segmenter.epochs < 1) throw ValidationError("epoch counts must be >= 1");
  for (const auto* p : {&autoencoder, &segmenter})
    if (!(p->adam.learning_rate > 0.0)) throw ValidationError("learning rates must be > 0");
  ae.validate();
  unet.validate();
  loss.validate();
  augment.validate();
}

void RunConfig::apply_global_seed(std::uint64_t global_seed) {
  seed = global_seed;
  split_seed = derive_seed({global_seed, 1});
  ae.seed = derive_seed({global_seed, 2});
  unet.seed = derive_seed({global_seed, 3});
  augment.seed = derive_seed({global_seed, 4});
}

namespace {

json adam_json(const nn::AdamConfig& a) {
  return {{"learning_rate", a.learning_rate}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"epsilon", a.epsilon}};
}

nn::AdamConfig adam_from(const json& j, nn::AdamConfig a) {
  a.learning_rate = j.value("learning_rate", a.learning_rate);
  a.beta1 = j.value("beta1", a.beta1);
  a.beta2 = j.value("beta2", a.beta2);
  a.epsilon = j.value("epsilon", a.epsilon);
  return a;
}

json loss_json(const LossConfig& l) {
  return {{"class_weights", l.class_weights},
          {"global_weight", l.global_weight},
          {"schedule", to_string(l.schedule)},
          {"epsilon", l.epsilon}};
}

LossConfig loss_from(const json& j) {
  LossConfig l;
  l.class_weights = j.value("class_weights", l.class_weights);
  l.global_weight = j.value("global_weight", l.global_weight);
  l.schedule = parse_schedule(j.value("schedule", to_string(l.schedule)));
  l.epsilon = j.value("epsilon", l.epsilon);
  return l;
}

json augment_json(const AugmentSpec& a) {
  return {{"max_translation", {a.max_translation.x(), a.max_translation.y(), a.max_translation.z()}},
          {"flip_probability", a.flip_probability},
          {"scale", {a.scale.lo, a.scale.hi}},
          {"max_rotation_deg", a.max_rotation_deg},
          {"elastic_alpha", a.elastic_alpha},
          {"elastic_sigma", a.elastic_sigma},
          {"seed", a.seed}};
}

AugmentSpec augment_from(const json& j) {
  AugmentSpec a;
  if (j.contains("max_translation")) {
    const auto t = j.at("max_translation").get<std::array<double, 3>>();
    a.max_translation = {t[0], t[1], t[2]};
  }
  a.flip_probability = j.value("flip_probability", a.flip_probability);
  if (j.contains("scale")) {
    const auto s = j.at("scale").get<std::array<double, 2>>();
    a.scale = {s[0], s[1]};
  }
  a.max_rotation_deg = j.value("max_rotation_deg", a.max_rotation_deg);
  a.elastic_alpha = j.value("elastic_alpha", a.elastic_alpha);
  a.elastic_sigma = j.value("elastic_sigma", a.elastic_sigma);
  a.seed = j.value("seed", a.seed);
  return a;
}

}  // namespace

void to_json(json& j, const RunConfig& c) {
  j = {{"data", c.data.string()},
       {"split_ratio", c.split_ratio},
       {"split_seed", c.split_seed},
       {"batch_size", c.batch_size},
       {"seed", c.seed},
       {"out_dir", c.out_dir.string()},
       {"autoencoder", {{"epochs", c.autoencoder.epochs}, {"adam", adam_json(c.autoencoder.adam)},
                        {"model", c.ae}, {"augment", c.augment_autoencoder}}},
       {"segmenter", {{"epochs", c.segmenter.epochs}, {"adam", adam_json(c.segmenter.adam)}, {"model", c.unet}}},
       {"loss", loss_json(c.loss)},
       {"augment", augment_json(c.augment)}};
  if (c.encoder_checkpoint) j["encoder_checkpoint"] = c.encoder_checkpoint->string();
}

void from_json(const json& j, RunConfig& c) {
  c = RunConfig{};
  if (j.contains("seed")) c.apply_global_seed(j.at("seed").get<std::uint64_t>());
  c.data = j.value("data", c.data.string());
  c.split_ratio = j.value("split_ratio", c.split_ratio);
  c.split_seed = j.value("split_seed", c.split_seed);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.out_dir = j.value("out_dir", c.out_dir.string());
  if (j.contains("autoencoder")) {
    const auto& a = j.at("autoencoder");
    c.autoencoder.epochs = a.value("epochs", c.autoencoder.epochs);
    if (a.contains("adam")) c.autoencoder.adam = adam_from(a.at("adam"), c.autoencoder.adam);
    if (a.contains("model")) c.ae = a.at("model").get<AeConfig>();
    c.augment_autoencoder = a.value("augment", c.augment_autoencoder);
  }
  if (j.contains("segmenter")) {
    const auto& s = j.at("segmenter");
    c.segmenter.epochs = s.value("epochs", c.segmenter.epochs);
    if (s.contains("adam")) c.segmenter.adam = adam_from(s.at("adam"), c.segmenter.adam);
    if (s.contains("model")) c.unet = s.at("model").get<UnetConfig>();
  }
  if (j.contains("loss")) c.loss = loss_from(j.at("loss"));
  if (j.contains("augment")) c.augment = augment_from(j.at("augment"));
  if (j.contains("encoder_checkpoint")) c.encoder_checkpoint = j.at("encoder_checkpoint").get<std::string>();
  c.validate();
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run config " + path.string());
  try {
    return json::parse(in).get<RunConfig>();
  } catch (const json::exception& e) {
    throw FormatError("run config " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// data

DatasetSplit split_dataset(const Manifest& manifest, double ratio, std::uint64_t seed) {
  const std::size_t n = manifest.cases.size();
  if (n < 2) throw ValidationError("splitting needs at least 2 cases");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError("split ratio must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[std::size_t(rng() % (i + 1))]);
  const auto n_train = std::size_t(std::floor(double(n) * ratio));
  DatasetSplit s;
  for (std::size_t i = 0; i < n; ++i)
    (i < n_train ? s.train : s.validation).push_back(manifest.cases[order[i]].id);
  return s;
}

std::vector<LoadedCase> load_cases(const Manifest& manifest, const std::vector<std::string>& ids) {
  std::vector<LoadedCase> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto& e = manifest.find(id);
    LoadedCase c{id, read_volume(e.image_path), read_labels(e.label_path)};
    if (!(c.image.geom.shape == c.labels.geom.shape))
      throw ValidationError("case " + id + ": image and label grids differ");
    out.push_back(std::move(c));
  }
  return out;
}

namespace {

void require_grid(const std::vector<LoadedCase>& cases, const Shape3& grid, const char* model) {
  for (const auto& c : cases)
    if (!(c.image.geom.shape == grid))
      throw ValidationError(std::string("case ") + c.id + " has grid " + c.image.geom.shape.str() + ", the " + model +
                            " expects " + grid.str() + " (run preprocess first)");
}

void require_finite(double v, const char* what, int epoch, const std::string& id) {
  if (!std::isfinite(v))
    throw TrainingError(std::string("non-finite ") + what + " at epoch " + std::to_string(epoch) + " on case " + id);
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t phase, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed({seed, phase, std::uint64_t(epoch)}));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[std::size_t(rng() % i)]);
  return order;
}

/// Accumulates per-epoch means.
struct Tally {
  double total = 0.0, pix = 0.0, glob = 0.0, tz = 0.0, pz = 0.0;
  long losses = 0, cases = 0;

  void add_loss(double t, double p, double g) {
    total += t;
    pix += p;
    glob += g;
    ++losses;
  }
  void add_dice(const ZoneDice& d) {
    tz += d.tz;
    pz += d.pz;
    ++cases;
  }
  EpochLog log(int epoch, std::string split) const {
    const double nl = double(std::max(losses, 1L)), nc = double(std::max(cases, 1L));
    return {epoch, std::move(split), total / nl, pix / nl, glob / nl, tz / nc, pz / nc};
  }
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class CsvLog {
 public:
  CsvLog(fs::path path, std::string header) : path_(std::move(path)), text_(std::move(header) + "\n") {}
  void add(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) text_ += (i ? "," : "") + fields[i];
    text_ += "\n";
  }
  void flush() const { write_file_atomic(path_, text_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::string text_;
};

const char* kMetricsHeader = "epoch,split,loss_total,loss_pix,loss_global,dice_tz,dice_pz";
const char* kStepsHeader = "step,epoch,lambda,loss_pix,loss_global,loss_l2,loss_total";

void record_epoch(const EpochLog& e, CsvLog& csv, TrainResult& result, const TrainHooks& hooks) {
  csv.add({std::to_string(e.epoch), e.split, fmt(e.loss_total), fmt(e.loss_pix), fmt(e.loss_global), fmt(e.dice_tz),
           fmt(e.dice_pz)});
  result.history.push_back(e);
  if (hooks.on_epoch) hooks.on_epoch(e);
}

void record_step(const StepLog& s, CsvLog& csv, const TrainHooks& hooks) {
  csv.add({std::to_string(s.step), std::to_string(s.epoch), fmt(s.lambda), fmt(s.loss_pix), fmt(s.loss_global),
           fmt(s.loss_l2), fmt(s.loss_total)});
  if (hooks.on_step) hooks.on_step(s);
}

LabelVolume augmented_labels(const RunConfig& cfg, const LoadedCase& c, int epoch, int index) {
  const auto t = sample_transform(cfg.augment, c.labels.geom.shape, epoch, index);
  return apply_transform(c.image, c.labels, t).labels;
}

constexpr std::uint64_t kAePhase = 0xAE;
constexpr std::uint64_t kSegPhase = 0x5E6;

}  // namespace

// ---------------------------------------------------------------------------
// autoencoder

TrainResult train_autoencoder(const RunConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const Manifest manifest = load_manifest(cfg.data);
  const DatasetSplit split = split_dataset(manifest, cfg.split_ratio, cfg.split_seed);
  const auto train = load_cases(manifest, split.train);
  const auto val = load_cases(manifest, split.validation);
  require_grid(train, cfg.ae.input, "autoencoder");
  require_grid(val, cfg.ae.input, "autoencoder");

  fs::create_directories(cfg.out_dir);
  TrainResult result;
  result.checkpoint = cfg.out_dir / "autoencoder.json";
  CsvLog metrics(cfg.out_dir / "ae_metrics.csv", kMetricsHeader);
  CsvLog steps(cfg.out_dir / "ae_steps.csv", kStepsHeader);
  result.metrics_csv = metrics.path();
  result.steps_csv = steps.path();

  Autoencoder<float> ae(cfg.ae);
  nn::Adam<float> opt(ae.params(), cfg.autoencoder.adam);
  const double eps = cfg.loss.epsilon;
  long step = 0;

  for (int epoch = 0; epoch < cfg.autoencoder.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), cfg.seed, kAePhase, epoch);
    Tally tr;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), b + std::size_t(cfg.batch_size));
      const float scale = 1.0f / float(end - b);
      auto grads = ae.params().zeros_like();
      double batch_loss = 0.0;
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t i = order[k];
        const LoadedCase& c = train[i];
        if (hooks.on_sample) hooks.on_sample(c.id, true);
        const LabelVolume labels = cfg.augment_autoencoder ? augmented_labels(cfg, c, epoch, int(i)) : c.labels;
        const MaskStack target = to_mask_stack<float>(labels);
        Autoencoder<float>::ForwardTrace trace;
        const MaskStack out = ae.forward(target, &trace);
        const double loss = bce(out.masks, target.masks, eps);
        require_finite(loss, "reconstruction loss", epoch, c.id);
        ae.backward(trace, bce_logit_grad(out.masks, target.masks) * scale, grads);
        batch_loss += loss;
        tr.add_loss(loss, loss, 0.0);
        tr.add_dice(per_class_dice(out, target));
      }
      opt.step(ae.params(), grads);
      batch_loss /= double(end - b);
      record_step({epoch, step++, 0.0, batch_loss, 0.0, 0.0, batch_loss}, steps, hooks);
    }
    record_epoch(tr.log(epoch, "train"), metrics, result, hooks);

    Tally va;
    for (const auto& c : val) {
      if (hooks.on_sample) hooks.on_sample(c.id, false);
      const MaskStack target = to_mask_stack<float>(c.labels);
      const MaskStack out = ae.forward(target);
      const double loss = bce(out.masks, target.masks, eps);
      va.add_loss(loss, loss, 0.0);
      va.add_dice(per_class_dice(out, target));
    }
    const EpochLog vlog = va.log(epoch, "val");
    record_epoch(vlog, metrics, result, hooks);
    const double score = 0.5 * (vlog.dice_tz + vlog.dice_pz);
    if (score > result.best_score) {
      result.best_score = score;
      result.best_epoch = epoch;
      save_checkpoint(make_checkpoint(ae, epoch, {{"train_ids", split.train}, {"val_ids", split.validation}}),
                      result.checkpoint);
    }
    metrics.flush();
    steps.flush();
  }
  return result;
}

// ---------------------------------------------------------------------------
// segmenter

TrainResult train_segmenter(const RunConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const Manifest manifest = load_manifest(cfg.data);
  const DatasetSplit split = split_dataset(manifest, cfg.split_ratio, cfg.split_seed);
  const auto train = load_cases(manifest, split.train);
  const auto val = load_cases(manifest, split.validation);
  require_grid(train, cfg.unet.input, "segmenter");
  require_grid(val, cfg.unet.input, "segmenter");

  std::optional<Autoencoder<float>> encoder;
  if (cfg.encoder_checkpoint) {
    encoder.emplace(load_autoencoder(*cfg.encoder_checkpoint));
    if (!(encoder->config().input == cfg.unet.input))
      throw ValidationError("encoder input grid " + encoder->config().input.str() + " does not match segmenter grid " +
                            cfg.unet.input.str());
  }
  const bool with_encoder = encoder.has_value() && cfg.loss.global_weight > 0.0;

  fs::create_directories(cfg.out_dir);
  TrainResult result;
  result.checkpoint = cfg.out_dir / "unet.json";
  CsvLog metrics(cfg.out_dir / "seg_metrics.csv", kMetricsHeader);
  CsvLog steps(cfg.out_dir / "seg_steps.csv", kStepsHeader);
  result.metrics_csv = metrics.path();
  result.steps_csv = steps.path();

  UNet<float> net(cfg.unet);
  nn::Adam<float> opt(net.params(), cfg.segmenter.adam);
  const double l2_coef = cfg.unet.l2;
  const int epochs = cfg.segmenter.epochs;
  long step = 0;

  const Autoencoder<float>* enc = encoder ? &*encoder : nullptr;
  auto case_loss = [&](const MatX<float>& probs, const LabelVolume& labels, double lambda, MatX<float>* dlogits) {
    return segmenter_case_loss(probs, labels, cfg.loss, enc, lambda, dlogits);
  };

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lambda = encoder ? global_weight_schedule(cfg.loss, epoch, epochs) : 0.0;
    const auto order = epoch_order(train.size(), cfg.seed, kSegPhase, epoch);
    Tally tr;
    for (std::size_t b = 0; b < order.size(); b += std::size_t(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), b + std::size_t(cfg.batch_size));
      const float scale = 1.0f / float(end - b);
      auto grads = net.params().zeros_like();
      double pix = 0.0, glob = 0.0;
      for (std::size_t k = b; k < end; ++k) {
        const std::size_t i = order[k];
        const LoadedCase& c = train[i];
        if (hooks.on_sample) hooks.on_sample(c.id, true);
        const auto t = sample_transform(cfg.augment, c.image.geom.shape, epoch, int(i));
        const AugmentedCase aug = apply_transform(c.image, c.labels, t);

        UNet<float>::ForwardTrace trace;
        const MatX<float> probs = net.forward(aug.image.data.matrix(), &trace);
        MatX<float> dlogits;
        const CaseLoss l = case_loss(probs, aug.labels, lambda, &dlogits);
        require_finite(l.pix, "pixel loss", epoch, c.id);
        require_finite(l.glob, "global loss", epoch, c.id);
        net.backward(trace, dlogits * scale, grads);
        pix += l.pix;
        glob += l.glob;
        ProbVolume pv{aug.labels.geom, probs};
        tr.add_dice(per_class_dice(argmax_labels(pv), aug.labels));
      }
      pix /= double(end - b);
      glob /= double(end - b);
      const double l2 = l2_penalty(net.params(), l2_coef);
      net.add_l2_grad(l2_coef, grads);
      opt.step(net.params(), grads);

      const StepLog s{epoch, step++, lambda, pix, glob, l2, combined_loss(pix, glob, lambda) + l2};
      tr.add_loss(s.loss_total, s.loss_pix, s.loss_global);
      record_step(s, steps, hooks);
    }
    record_epoch(tr.log(epoch, "train"), metrics, result, hooks);

    const double l2 = l2_penalty(net.params(), l2_coef);
    Tally va;
    for (const auto& c : val) {
      if (hooks.on_sample) hooks.on_sample(c.id, false);
      const MatX<float> probs = net.forward(c.image.data.matrix());
      const CaseLoss l = case_loss(probs, c.labels, lambda, nullptr);
      va.add_loss(combined_loss(l.pix, l.glob, lambda) + l2, l.pix, l.glob);
      ProbVolume pv{c.labels.geom, probs};
      va.add_dice(per_class_dice(argmax_labels(pv), c.labels));
    }
    const EpochLog vlog = va.log(epoch, "val");
    record_epoch(vlog, metrics, result, hooks);
    const double score = 0.5 * (vlog.dice_tz + vlog.dice_pz);
    if (score > result.best_score) {
      result.best_score = score;
      result.best_epoch = epoch;
      json extra = {{"trained_with_encoder", with_encoder},
                    {"loss", loss_json(cfg.loss)},
                    {"train_ids", split.train},
                    {"val_ids", split.validation}};
      if (cfg.encoder_checkpoint) extra["encoder_checkpoint"] = cfg.encoder_checkpoint->string();
      save_checkpoint(make_checkpoint(net, epoch, extra), result.checkpoint);
    }
    metrics.flush();
    steps.flush();
  }
  return result;
}

// ---------------------------------------------------------------------------
// evaluation

DiceReport evaluate(const Predictor& predict, const std::vector<LoadedCase>& cases, std::string label,
                    std::string split) {
  std::vector<CaseDice> rows;
  rows.reserve(cases.size());
  for (const auto& c : cases) rows.push_back({c.id, per_class_dice(predict(c), c.labels)});
  return aggregate_report(rows, std::move(label), std::move(split));
}

DiceReport evaluate(const fs::path& checkpoint, const std::vector<LoadedCase>& cases, std::string split) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.kind != kUnetKind) throw FormatError(checkpoint.string() + " is not a U-Net checkpoint");
  UNet<float> net(ckpt.config.at("model").get<UnetConfig>());
  assign_params(ckpt.params, net.params());
  require_grid(cases, net.config().input, "segmenter");
  const bool with_encoder = ckpt.config.value("trained_with_encoder", false);
  return evaluate([&net](const LoadedCase& c) { return predict_labels(net, c.image); }, cases,
                  with_encoder ? kEncoderLabel : kBaselineLabel, std::move(split));
}

}  // namespace zoneprior
