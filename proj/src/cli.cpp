#include "zoneprior/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "zoneprior/checkpoint.hpp"
#include "zoneprior/nifti.hpp"
#include "zoneprior/phantom.hpp"
#include "zoneprior/preprocess.hpp"
#include "zoneprior/render.hpp"
#include "zoneprior/trainer.hpp"

namespace zoneprior {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TrainArgs {
  std::string data, config, out, ae, schedule;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  bool no_global_loss = false;
};

void add_train_options(CLI::App* cmd, TrainArgs& a, bool segmenter) {
  cmd->add_option("--data", a.data, "Preprocessed manifest")->required();
  cmd->add_option("--config", a.config, "Run configuration (JSON)");
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--seed", a.seed, "Global seed");
  cmd->add_option("--epochs", a.epochs, "Override the epoch count")->check(CLI::PositiveNumber);
  if (segmenter) {
    cmd->add_option("--ae", a.ae, "Autoencoder checkpoint for the global loss");
    cmd->add_flag("--no-global-loss", a.no_global_loss, "Train the baseline with lambda = 0");
    cmd->add_option("--schedule", a.schedule, "Global-loss weight schedule")
        ->check(CLI::IsMember({"constant", "linear"}));
  }
}

RunConfig make_run_config(const TrainArgs& a, bool segmenter) {
  RunConfig cfg = a.config.empty() ? RunConfig{} : load_run_config(a.config);
  if (a.seed) cfg.apply_global_seed(*a.seed);
  cfg.data = a.data;
  if (!a.out.empty()) cfg.out_dir = a.out;
  if (a.epochs) (segmenter ? cfg.segmenter : cfg.autoencoder).epochs = *a.epochs;
  if (!a.ae.empty()) cfg.encoder_checkpoint = a.ae;
  if (!a.schedule.empty()) cfg.loss.schedule = parse_schedule(a.schedule);
  if (a.no_global_loss) {
    cfg.loss.global_weight = 0.0;
    cfg.encoder_checkpoint.reset();
  }
  cfg.validate();
  return cfg;
}

TrainHooks progress(std::ostream& out) {
  TrainHooks h;
  h.on_epoch = [&out](const EpochLog& e) {
    if (e.split != "val") return;
    out << "epoch " << e.epoch << "  val loss " << std::setprecision(4) << e.loss_total << "  dice tz "
        << e.dice_tz << " pz " << e.dice_pz << "\n"
        << std::flush;
  };
  return h;
}

std::vector<std::string> split_ids(const Checkpoint& ckpt, const Manifest& m, const std::string& split) {
  if (split == "all") {
    std::vector<std::string> ids;
    for (const auto& c : m.cases) ids.push_back(c.id);
    return ids;
  }
  const std::string key = split == "train" ? "train_ids" : "val_ids";
  if (!ckpt.config.contains(key)) throw ValidationError("checkpoint does not record its " + split + " split");
  return ckpt.config.at(key).get<std::vector<std::string>>();
}

void save_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2) + "\n");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Zonal prostate segmentation with a learned shape prior"};
  app.name("zoneprior");
  app.require_subcommand(1);

  // phantom
  int count = 64;
  std::string phantom_out;
  std::uint64_t phantom_seed = 0;
  bool phantom_prep = false;
  auto* phantom = app.add_subcommand("phantom", "Generate synthetic cases");
  phantom->add_option("--count", count, "Number of cases")->check(CLI::PositiveNumber);
  phantom->add_option("--out", phantom_out, "Output directory")->required();
  phantom->add_option("--seed", phantom_seed, "Dataset seed");
  phantom->add_flag("--preprocess", phantom_prep, "Store cases already cropped, resampled and normalised");

  // preprocess
  std::string prep_manifest, prep_out;
  auto* prep = app.add_subcommand("preprocess", "Crop, resample and normalise a dataset");
  prep->add_option("--manifest,--data", prep_manifest, "Input manifest")->required();
  prep->add_option("--out", prep_out, "Output directory")->required();

  TrainArgs ae_args, seg_args;
  auto* train_ae = app.add_subcommand("train-ae", "Train the shape autoencoder");
  add_train_options(train_ae, ae_args, false);
  auto* train_seg = app.add_subcommand("train-seg", "Train the U-Net segmenter");
  add_train_options(train_seg, seg_args, true);

  // predict
  std::string pred_model, pred_image, pred_data, pred_out;
  auto* predict = app.add_subcommand("predict", "Write label volumes predicted by a U-Net");
  predict->add_option("--model", pred_model, "U-Net checkpoint")->required();
  auto* pred_img_opt = predict->add_option("--image", pred_image, "Single preprocessed image");
  predict->add_option("--data", pred_data, "Preprocessed manifest")->excludes(pred_img_opt);
  predict->add_option("--out", pred_out, "Output file (--image) or directory (--data)")->required();

  // evaluate
  std::string eval_model, eval_data, eval_out, eval_split = "val";
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Per-zone DICE of a U-Net checkpoint");
  evaluate_cmd->add_option("--model", eval_model, "U-Net checkpoint")->required();
  evaluate_cmd->add_option("--data", eval_data, "Preprocessed manifest")->required();
  evaluate_cmd->add_option("--split", eval_split, "Cases to score")->check(CLI::IsMember({"val", "train", "all"}));
  evaluate_cmd->add_option("--out", eval_out, "Report JSON")->required();

  // report
  std::vector<std::string> report_evals;
  std::string report_out;
  auto* report = app.add_subcommand("report", "DICE table from evaluation reports");
  report->add_option("--eval", report_evals, "Evaluation report (repeatable)")->required();
  report->add_option("--out", report_out, "Markdown output");

  // render
  std::string r_image, r_labels, r_out;
  std::vector<std::string> r_preds;
  int r_slice = -1, r_zoom = 4;
  auto* render = app.add_subcommand("render", "PNG overlay of an axial slice");
  render->add_option("--image", r_image, "Image volume")->required();
  render->add_option("--labels", r_labels, "Reference labels")->required();
  render->add_option("--pred", r_preds, "Extra label volumes shown as further panels");
  render->add_option("--slice", r_slice, "Axial slice (default: middle)");
  render->add_option("--zoom", r_zoom, "Pixels per voxel")->check(CLI::PositiveNumber);
  render->add_option("--out", r_out, "PNG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    if (!dynamic_cast<const CLI::CallForAllHelp*>(&e)) err << app.help();
    return 2;
  }

  if (const char* t = std::getenv("ZONEPRIOR_THREADS")) {
    const int n = std::atoi(t);
    if (n > 0) Eigen::setNbThreads(n);
  }

  try {
    if (*phantom) {
      PhantomSpec spec;
      spec.seed = phantom_seed;
      CaseTransform transform;
      if (phantom_prep)
        transform = [](PhantomCase c) {
          auto p = preprocess_case(c.image, c.labels, PreprocessSpec{});
          return PhantomCase{std::move(p.image), std::move(p.labels)};
        };
      const fs::path m = generate_dataset(spec, count, phantom_out, transform);
      out << "phantom: wrote " << count << " cases, manifest " << m.string() << "\n";
    } else if (*prep) {
      const fs::path m = preprocess_dataset(prep_manifest, prep_out, PreprocessSpec{});
      out << "preprocess: manifest " << m.string() << "\n";
    } else if (*train_ae) {
      const RunConfig cfg = make_run_config(ae_args, false);
      const TrainResult r = train_autoencoder(cfg, progress(out));
      out << "train-ae: best epoch " << r.best_epoch << " val mean dice " << r.best_score << ", checkpoint "
          << r.checkpoint.string() << "\n";
    } else if (*train_seg) {
      const RunConfig cfg = make_run_config(seg_args, true);
      const TrainResult r = train_segmenter(cfg, progress(out));
      out << "train-seg: best epoch " << r.best_epoch << " val mean dice " << r.best_score << ", checkpoint "
          << r.checkpoint.string() << "\n";
    } else if (*predict) {
      const UNet<float> net = load_unet(pred_model);
      if (!pred_image.empty()) {
        write_volume(predict_labels(net, read_volume(pred_image)), pred_out);
        out << "predict: wrote " << pred_out << "\n";
      } else {
        if (pred_data.empty()) throw ValidationError("predict needs --image or --data");
        const Manifest m = load_manifest(pred_data);
        fs::create_directories(pred_out);
        for (const auto& c : m.cases)
          write_volume(predict_labels(net, read_volume(c.image_path)), fs::path(pred_out) / (c.id + "_pred.nii"));
        out << "predict: wrote " << m.cases.size() << " label volumes to " << pred_out << "\n";
      }
    } else if (*evaluate_cmd) {
      const Checkpoint ckpt = load_checkpoint(eval_model);
      const Manifest m = load_manifest(eval_data);
      const DiceReport r = evaluate(fs::path(eval_model), load_cases(m, split_ids(ckpt, m, eval_split)), eval_split);
      save_json(r.to_json(), eval_out);
      out << "evaluate: " << r.label << " (" << r.per_case.size() << " cases) tz " << std::setprecision(4)
          << r.mean_tz << " pz " << r.mean_pz << "\n";
    } else if (*report) {
      std::vector<DiceReport> reports;
      for (const auto& p : report_evals) {
        std::ifstream in(p);
        if (!in) throw IoError("cannot open " + p);
        reports.push_back(DiceReport::from_json(json::parse(in)));
      }
      const std::string table = format_dice_table(reports);
      if (report_out.empty()) {
        out << table;
      } else {
        if (fs::path(report_out).has_parent_path()) fs::create_directories(fs::path(report_out).parent_path());
        write_file_atomic(report_out, table);
        out << "report: " << reports.size() << " rows written to " << report_out << "\n";
      }
    } else if (*render) {
      const Volume image = read_volume(r_image);
      const Index z = r_slice < 0 ? image.geom.shape.nz / 2 : r_slice;
      if (r_preds.empty()) {
        render_overlay(image, read_labels(r_labels), z, r_out, r_zoom);
      } else {
        std::vector<LabelVolume> panels{read_labels(r_labels)};
        for (const auto& p : r_preds) panels.push_back(read_labels(p));
        render_triptych(image, panels, z, r_out, r_zoom);
      }
      out << "render: slice " << z << " written to " << r_out << "\n";
    }
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace zoneprior
