#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "zoneprior/checkpoint.hpp"
#include "zoneprior/cli.hpp"
#include "zoneprior/render.hpp"
#include "zoneprior/trainer.hpp"

using namespace zptest;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    rows.push_back(f);
  }
  return rows;
}

const Shape3 kTiny{12, 12, 6};

RunConfig tiny_config(const fs::path& data, const fs::path& out) {
  RunConfig c;
  c.apply_global_seed(3);
  c.data = data;
  c.out_dir = out;
  c.ae.input = c.unet.input = kTiny;
  c.ae.filters = {4, 4};
  c.unet.filters = {4, 4, 4};
  c.autoencoder.epochs = 5;
  c.segmenter.epochs = 5;
  c.segmenter.adam.learning_rate = 3e-3;
  return c;
}

double mean_train_loss(const TrainResult& r, int epoch) {
  for (const auto& e : r.history)
    if (e.epoch == epoch && e.split == "train") return e.loss_total;
  return NAN;
}

int cli(std::vector<std::string> args, std::string* out_text = nullptr) {
  args.insert(args.begin(), "zoneprior");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = zoneprior::run_cli(int(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str() + err.str();
  return rc;
}

}  // namespace

TEST_CASE("dataset split") {
  Manifest m;
  for (int i = 0; i < 64; ++i) m.cases.push_back({"c" + std::to_string(i), "i", "l"});
  const DatasetSplit s = split_dataset(m, 0.8, 5);
  CHECK(s.train.size() == 51);
  CHECK(s.validation.size() == 13);
  std::set<std::string> all(s.train.begin(), s.train.end());
  for (const auto& v : s.validation) CHECK(all.insert(v).second);
  CHECK(all.size() == 64);
  CHECK(split_dataset(m, 0.8, 5).train == s.train);
  CHECK(split_dataset(m, 0.8, 6).train != s.train);
  CHECK_THROWS(split_dataset(m, 1.0, 5));
}

TEST_CASE("run config JSON round trip") {
  RunConfig c = tiny_config("data/manifest.json", "out");
  c.loss.schedule = WeightSchedule::kLinearDecay;
  c.encoder_checkpoint = "ae/autoencoder.json";
  const nlohmann::json j = c;
  const RunConfig r = j.get<RunConfig>();
  CHECK(nlohmann::json(r) == j);
  CHECK(r.ae.input == kTiny);
  CHECK(r.loss.schedule == WeightSchedule::kLinearDecay);

  nlohmann::json bad = j;
  bad["batch_size"] = 0;
  CHECK_THROWS_AS(bad.get<RunConfig>(), ValidationError);
}

TEST_CASE("training pipeline on small blob cases") {
  const auto root = scratch_dir("pipeline");
  const auto data = blob_dataset(root / "data", 10, kTiny);

  // Autoencoder: loss falls and runs are reproducible.
  RunConfig ae_cfg = tiny_config(data, root / "ae");
  const TrainResult ae = train_autoencoder(ae_cfg);
  CHECK(mean_train_loss(ae, 4) < mean_train_loss(ae, 0));
  CHECK(fs::exists(ae.checkpoint));
  CHECK(fs::exists(root / "ae" / "autoencoder.bin"));
  ae_cfg.out_dir = root / "ae_again";
  const TrainResult ae2 = train_autoencoder(ae_cfg);
  CHECK(slurp(ae.metrics_csv) == slurp(ae2.metrics_csv));
  CHECK(slurp(ae.steps_csv) == slurp(ae2.steps_csv));

  // Checkpoint round trip.
  const Checkpoint ck = load_checkpoint(ae.checkpoint);
  CHECK(ck.kind == kAutoencoderKind);
  const auto loaded = load_autoencoder(ae.checkpoint);
  CHECK(loaded.config().input == kTiny);

  // Segmenter with the frozen encoder.
  const std::string enc_json = slurp(ae.checkpoint), enc_bin = slurp(root / "ae" / "autoencoder.bin");
  RunConfig seg_cfg = tiny_config(data, root / "seg");
  seg_cfg.encoder_checkpoint = ae.checkpoint;
  const DatasetSplit split = split_dataset(load_manifest(data), seg_cfg.split_ratio, seg_cfg.split_seed);
  const std::set<std::string> train_ids(split.train.begin(), split.train.end());
  const std::set<std::string> val_ids(split.validation.begin(), split.validation.end());
  TrainHooks hooks;
  int leaks = 0, train_samples = 0;
  hooks.on_sample = [&](const std::string& id, bool training) {
    if (training) {
      ++train_samples;
      leaks += int(!train_ids.count(id));
    } else {
      leaks += int(!val_ids.count(id));
    }
  };
  const TrainResult seg = train_segmenter(seg_cfg, hooks);
  CHECK(leaks == 0);
  CHECK(train_samples == 5 * int(split.train.size()));
  CHECK(mean_train_loss(seg, 4) < mean_train_loss(seg, 0));
  CHECK(slurp(ae.checkpoint) == enc_json);
  CHECK(slurp(root / "ae" / "autoencoder.bin") == enc_bin);

  const auto steps = read_csv(seg.steps_csv);
  REQUIRE(!steps.empty());
  bool any_global = false;
  for (const auto& r : steps) {
    const double lambda = std::stod(r[2]), pix = std::stod(r[3]), glob = std::stod(r[4]), l2 = std::stod(r[5]),
                 total = std::stod(r[6]);
    CHECK(std::abs(total - (pix + lambda * glob + l2)) <= 1e-12 * std::abs(total));
    CHECK(lambda == 0.2);
    any_global |= glob > 0.0;
  }
  CHECK(any_global);

  // Baseline: the global term never contributes.
  write_file_atomic(root / "tiny.json", nlohmann::json(tiny_config(data, root / "base")).dump());
  std::string out;
  REQUIRE(cli({"train-seg", "--data", data.string(), "--config", (root / "tiny.json").string(), "--ae",
               ae.checkpoint.string(), "--no-global-loss", "--epochs", "2"},
              &out) == 0);
  for (const auto& r : read_csv(root / "base" / "seg_steps.csv")) CHECK(std::stod(r[2]) == 0.0);

  // Evaluation.
  const Manifest m = load_manifest(data);
  const auto val = load_cases(m, split.validation);
  const DiceReport self = evaluate([](const LoadedCase& c) { return c.labels; }, val, "identity", "val");
  CHECK(self.mean_tz == 1.0);
  CHECK(self.mean_pz == 1.0);
  const DiceReport r1 = evaluate(seg.checkpoint, val, "val"), r2 = evaluate(seg.checkpoint, val, "val");
  CHECK(r1.to_json() == r2.to_json());
  CHECK(r1.per_case.size() == val.size());
  CHECK(r1.label == kEncoderLabel);
  CHECK(evaluate(root / "base" / "unet.json", val, "val").label == kBaselineLabel);

  // CLI evaluate / report / predict / render on the same artifacts.
  CHECK(cli({"evaluate", "--model", seg.checkpoint.string(), "--data", data.string(), "--out",
             (root / "enc_eval.json").string()}) == 0);
  CHECK(cli({"evaluate", "--model", (root / "base" / "unet.json").string(), "--data", data.string(), "--out",
             (root / "base_eval.json").string()}) == 0);
  const auto report = nlohmann::json::parse(slurp(root / "enc_eval.json"));
  CHECK(report.at("per_case").size() == val.size());
  CHECK(cli({"report", "--eval", (root / "base_eval.json").string(), "--eval", (root / "enc_eval.json").string(),
             "--out", (root / "table.md").string()}) == 0);
  const std::string table = slurp(root / "table.md");
  CHECK(table.find("| 3D-UNet |") != std::string::npos);
  CHECK(table.find("| 3D-UNet trained with encoder |") != std::string::npos);

  CHECK(cli({"predict", "--model", seg.checkpoint.string(), "--data", data.string(), "--out",
             (root / "pred").string()}) == 0);
  const fs::path pred = root / "pred" / (m.cases[0].id + "_pred.nii");
  CHECK(read_labels(pred).geom.shape == kTiny);
  CHECK(cli({"render", "--image", m.cases[0].image_path.string(), "--labels", m.cases[0].label_path.string(),
             "--pred", pred.string(), "--pred", pred.string(), "--out", (root / "tri.png").string()}) == 0);
  CHECK(slurp(root / "tri.png").substr(1, 3) == "PNG");

  // Mismatched encoder grid is rejected.
  RunConfig wrong = tiny_config(data, root / "wrong");
  wrong.unet.input = {12, 12, 8};
  wrong.encoder_checkpoint = ae.checkpoint;
  CHECK_THROWS_AS(train_segmenter(wrong), ValidationError);
}

TEST_CASE("CLI exit codes") {
  std::string out;
  CHECK(cli({}, &out) == 2);
  CHECK(cli({"train-seg"}, &out) == 2);
  CHECK(out.find("--data") != std::string::npos);
  CHECK(cli({"frobnicate"}) == 2);
  CHECK(cli({"phantom", "--out", "x", "--bogus"}) == 2);
  CHECK(cli({"train-seg", "--data", "x", "--schedule", "cosine"}) == 2);
  CHECK(cli({"--help"}) == 0);
  CHECK(cli({"train-ae", "--data", "/nonexistent/manifest.json"}, &out) == 1);
  CHECK(out.find("error") != std::string::npos);

  const auto dir = scratch_dir("cli_phantom");
  CHECK(cli({"phantom", "--count", "2", "--out", dir.string(), "--seed", "7", "--preprocess"}, &out) == 0);
  const Manifest m = load_manifest(dir / "manifest.json");
  CHECK(m.cases.size() == 2);
  CHECK(read_volume(m.cases[0].image_path).geom.shape == Shape3{36, 36, 18});
}

TEST_CASE("overlay rendering") {
  const Shape3 s{6, 5, 3};
  Volume img = random_volume(s, 2);
  LabelVolume bg;
  bg.geom = img.geom;
  bg.labels.setZero(s.voxels());

  const RgbImage plain = overlay_slice(img, bg, 1, 1);
  CHECK(plain.width == 6);
  CHECK(plain.height == 5);
  for (int y = 0; y < plain.height; ++y)
    for (int x = 0; x < plain.width; ++x) {
      const auto* p = plain.at(x, y);
      CHECK((p[0] == p[1] && p[1] == p[2]));
    }

  LabelVolume zones = bg;
  zones.at(2, 2, 1) = kTz;
  zones.at(3, 2, 1) = kPz;
  const RgbImage o = overlay_slice(img, zones, 1, 2);
  CHECK(o.width == 12);
  CHECK(o.at(4, 4)[0] > o.at(4, 4)[1]);
  CHECK(o.at(6, 4)[1] > o.at(6, 4)[0]);

  CHECK_THROWS_AS(overlay_slice(img, zones, 3), ValidationError);
  CHECK_THROWS_AS(overlay_slice(img, zones, -1), ValidationError);

  const auto dir = scratch_dir("render");
  render_triptych(img, {zones, bg, zones}, 1, dir / "t.png", 1);
  CHECK(fs::file_size(dir / "t.png") > 0);
  const RgbImage tri = hconcat({o, o, o}, 2);
  CHECK(tri.width == 3 * 12 + 4);
  CHECK(std::equal(o.at(0, 0), o.at(0, 0) + 3 * o.width, tri.at(28, 0)));
}
