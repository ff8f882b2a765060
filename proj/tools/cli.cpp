#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include "roa/errors.hpp"
#include "roa/gradient_suite.hpp"
#include "roa/labels.hpp"
#include "roa/tensor_io.hpp"
#include "roa/trainer.hpp"

namespace roa::cli {

namespace fs = std::filesystem;

namespace {

const std::vector<Index> kKernelSweep{3, 5, 7, 9, 11, 13};

// Desk-scale training model: half the camera resolution and narrow layers.
ModelConfig toy_model() {
  ModelConfig cfg;
  cfg.input_height = 128;
  cfg.input_width = 352;
  cfg.base_channels = 8;
  cfg.fpn_channels = 16;
  cfg.roa_channels = 8;
  return cfg;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Options shared by train and ablate-kernel.
struct TrainFlags {
  std::string scene_file;
  int boxes = 20;
  std::int64_t steps = 200;
  std::uint64_t seed = 7;
  std::string config_file;
  std::string scale_mode = "multi_scale";
  std::string region_type = "overlap";
  double lr = 1e-4;
  std::string schedule = "cosine";
  std::int64_t log_every = 10;

  void add_to(CLI::App* cmd) {
    cmd->add_option("scene", scene_file, "Scene file; a synthetic scene from --seed is used when omitted");
    cmd->add_option("--boxes", boxes, "Boxes in the synthetic scene")->check(CLI::NonNegativeNumber);
    cmd->add_option("--steps", steps, "Optimizer steps")->check(CLI::NonNegativeNumber);
    cmd->add_option("--seed", seed, "Seed of the parameter init and of the synthetic scene");
    cmd->add_option("--config", config_file, "key=value model configuration (defaults to the toy model)");
    cmd->add_option("--scale-mode", scale_mode, "same_scale | fpn_feature | multi_scale");
    cmd->add_option("--region-type", region_type, "overlap | binary");
    cmd->add_option("--lr", lr, "Adam learning rate")->check(CLI::PositiveNumber);
    cmd->add_option("--schedule", schedule, "constant | cosine (decays to 0 over --steps)");
    cmd->add_option("--log-every", log_every, "Progress line every N steps (0 = quiet)");
  }

  std::vector<Scene> scenes() const {
    if (!scene_file.empty()) return parse_scene_file(scene_file);
    return {gen_synthetic(seed, boxes)};
  }

  TrainOptions options(std::optional<Index> kernel_size) const {
    TrainOptions o;
    o.model = config_file.empty() ? toy_model() : ModelConfig::from_text(read_file(config_file));
    o.model.scale_mode = parse_scale_mode(scale_mode);
    o.model.region_type = parse_region_type(region_type);
    o.model.seed = seed;
    if (kernel_size) o.model.kernel_size = *kernel_size;
    o.adam.lr = lr;
    o.schedule = parse_lr_schedule(schedule);
    o.schedule_steps = steps;
    return o;
  }
};

std::vector<StepRecord> run_logged(Trainer& trainer, std::int64_t steps, std::int64_t log_every, std::ostream& err) {
  std::vector<StepRecord> curve;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t i = 0; i < steps; ++i) {
    curve.push_back(trainer.step());
    const auto& r = curve.back();
    if (log_every > 0 && (i % log_every == 0 || i + 1 == steps)) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      err << "step " << r.step << "  l_roa " << std::setprecision(6) << r.l_roa << "  (" << std::fixed
          << std::setprecision(1) << secs << " s)" << std::defaultfloat << "\n";
    }
  }
  return curve;
}

Tensor<float> camera_plane(const Tensor<float>& batch, Index cam) {
  const Index h = batch.shape()[2], w = batch.shape()[3];
  Tensor<float> plane({h, w});
  std::copy(batch.data().begin() + cam * h * w, batch.data().begin() + (cam + 1) * h * w, plane.data().begin());
  return plane;
}

int cmd_gen_scene(const std::string& out_file, std::uint64_t seed, int boxes, int count, std::ostream& out) {
  std::vector<Scene> scenes;
  for (int i = 0; i < count; ++i) scenes.push_back(gen_synthetic(seed + static_cast<std::uint64_t>(i), boxes));
  write_scene_file(out_file, scenes);
  out << "wrote " << scenes.size() << " scene(s) to " << out_file << "\n";
  return kOk;
}

int cmd_gen_labels(const std::string& scene_file, const fs::path& out_dir, int stride, const std::string& region,
                   std::ostream& out) {
  const auto scenes = parse_scene_file(scene_file);
  const LabelConfig cfg{stride, kDefaultNear, parse_region_type(region)};
  fs::create_directories(out_dir);
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto maps = rasterize_scene(scenes[s].boxes, scenes[s].cameras, cfg);
    for (const auto& m : maps) {
      const std::string stem = std::to_string(s) + "_" + scenes[s].cameras[static_cast<std::size_t>(m.camera_index)].name;
      write_tensor(out_dir / (stem + ".roat"), m.values);
      write_pgm(out_dir / (stem + ".pgm"), m.values);
      double total = 0.0;
      for (float v : m.values.data()) total += v;
      out << stem << "  " << m.height() << "x" << m.width() << "  sum " << total << "\n";
    }
  }
  return kOk;
}

int cmd_forward(const std::string& scene_file, const fs::path& checkpoint, const fs::path& out_dir,
                std::size_t scene_index, std::ostream& out) {
  const auto scenes = parse_scene_file(scene_file);
  if (scene_index >= scenes.size()) {
    throw InvalidArgument("scene index " + std::to_string(scene_index) + " out of range (file has " +
                          std::to_string(scenes.size()) + ")");
  }
  ParameterStore<float> store(0);
  const ModelConfig cfg = load_model(checkpoint, store);
  const SceneBatch batch = make_batch(scenes[scene_index], cfg);
  Tape<float> tape;
  Scope<float> scope(tape, store, NormMode::kEval, false);
  const auto r = full_forward(scope, tape.constant(batch.images), tape.constant(batch.labels), cfg);
  const Tensor<float>& pred = r.roa_pred.value();
  fs::create_directories(out_dir);
  for (Index c = 0; c < kNumCameras; ++c) {
    const std::string stem = scenes[scene_index].cameras[static_cast<std::size_t>(c)].name;
    const auto plane = camera_plane(pred, c);
    write_tensor(out_dir / (stem + ".roat"), plane);
    write_pgm(out_dir / (stem + ".pgm"), plane);
  }
  out << "l_roa " << std::setprecision(9) << r.l_roa.value().item() << "\n";
  return kOk;
}

int cmd_gradcheck(Index sample_entries, std::ostream& out) {
  SuiteOptions opts;
  opts.sample_entries = sample_entries;
  bool ok = true;
  run_gradient_suite(opts, [&](const SuiteResult& r) {
    out << std::left << std::setw(18) << r.name << " max_rel " << std::scientific << std::setprecision(3)
        << r.report.max_rel_error << std::defaultfloat << "  checked " << r.report.checked << "  skipped "
        << r.report.skipped_kinks << "  " << (r.passed ? "ok" : "FAILED") << "\n"
        << std::flush;
    ok = ok && r.passed;
  });
  out << (ok ? "all gradients within 1e-4\n" : "gradient check FAILED\n");
  return ok ? kOk : kCheckFailed;
}

int cmd_train(const TrainFlags& flags, std::optional<Index> kernel_size, const fs::path& out_dir,
              const std::string& resume, std::ostream& out, std::ostream& err) {
  auto scenes = flags.scenes();
  TrainOptions opts = flags.options(kernel_size);
  Trainer trainer = resume.empty() ? Trainer(std::move(scenes), opts) : Trainer::resume(resume, std::move(scenes), opts);
  const auto curve = run_logged(trainer, flags.steps, flags.log_every, err);
  trainer.save_checkpoint(out_dir);
  std::ofstream csv(out_dir / "loss.csv");
  write_loss_csv(csv, curve);
  if (!csv) throw IoError("cannot write " + (out_dir / "loss.csv").string());
  out << "trained " << curve.size() << " step(s), " << trainer.store().count() << " parameters";
  if (!curve.empty()) {
    out << ", l_roa " << std::setprecision(6) << curve.front().l_roa << " -> " << curve.back().l_roa;
  }
  out << "\ncheckpoint: " << out_dir.string() << "\n";
  return kOk;
}

int cmd_ablate(const TrainFlags& flags, const std::vector<Index>& kernels, const std::string& out_file,
               std::ostream& out, std::ostream& err) {
  if (flags.steps < 1) throw InvalidArgument("ablate-kernel needs --steps >= 1");
  const auto scenes = flags.scenes();
  std::ostringstream csv;
  csv << "kernel_size,scale_mode,region_type,steps,seed,initial_l_roa,final_l_roa,param_count\n";
  for (Index k : kernels) {
    const TrainOptions opts = flags.options(k);
    err << "kernel " << k << "\n";
    Trainer trainer(scenes, opts);
    const auto curve = run_logged(trainer, flags.steps, flags.log_every, err);
    csv << k << ',' << to_string(opts.model.scale_mode) << ',' << to_string(opts.model.region_type) << ','
        << flags.steps << ',' << flags.seed << ',' << std::setprecision(9) << curve.front().l_roa << ','
        << curve.back().l_roa << ',' << trainer.store().count() << '\n';
  }
  if (out_file.empty() || out_file == "-") {
    out << csv.str();
  } else {
    std::ofstream f(out_file);
    f << csv.str();
    if (!f) throw IoError("cannot write " + out_file);
    out << "wrote " << out_file << "\n";
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Region-oriented attention labels, network and training tools"};
  app.require_subcommand(1);

  std::string scene_out, scene_file, out_dir, region = "overlap", checkpoint, resume, csv_out;
  std::uint64_t seed = 7;
  int boxes = 20, count = 1, stride = 16;
  std::size_t scene_index = 0;
  Index sample_entries = 24;
  std::optional<Index> kernel_size;
  std::vector<Index> kernels = kKernelSweep;
  TrainFlags train_flags, ablate_flags;

  auto* gen_scene = app.add_subcommand("gen-scene", "Write synthetic scenes to a scene file");
  gen_scene->add_option("out", scene_out, "Output scene file")->required();
  gen_scene->add_option("--seed", seed, "Seed of the first scene");
  gen_scene->add_option("--boxes", boxes, "Boxes per scene")->check(CLI::NonNegativeNumber);
  gen_scene->add_option("--count", count, "Number of scenes (seeds seed, seed+1, ...)")->check(CLI::PositiveNumber);

  auto* gen_labels = app.add_subcommand("gen-labels", "Rasterize ROA label maps (ROAT + PGM per camera)");
  gen_labels->add_option("scene", scene_file, "Scene file")->required();
  gen_labels->add_option("--out", out_dir, "Output directory")->required();
  gen_labels->add_option("--stride", stride, "Label stride in pixels");
  gen_labels->add_option("--region-type", region, "overlap | binary");

  auto* forward = app.add_subcommand("forward", "Predict ROA maps for a scene with a trained checkpoint");
  forward->add_option("scene", scene_file, "Scene file")->required();
  forward->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  forward->add_option("--out", out_dir, "Output directory")->required();
  forward->add_option("--scene-index", scene_index, "Which scene of the file");

  auto* gradcheck = app.add_subcommand("gradcheck", "Run the double-precision gradient suite");
  gradcheck->add_option("--sample-entries", sample_entries, "Sampled entries per tensor in composite checks")
      ->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train", "Train the ROA branch; writes a checkpoint and loss.csv");
  train_flags.add_to(train);
  train->add_option("--kernel-size", kernel_size, "Basic-block kernel size (odd)");
  train->add_option("--out", out_dir, "Checkpoint directory")->required();
  train->add_option("--resume", resume, "Continue from this checkpoint");

  auto* ablate = app.add_subcommand("ablate-kernel", "Train once per kernel size and emit a comparison CSV");
  ablate_flags.add_to(ablate);
  ablate->add_option("--kernels", kernels, "Kernel sizes to sweep")->delimiter(',');
  ablate->add_option("--out", csv_out, "CSV file (stdout when omitted)");

  std::vector<char*> argv;
  std::vector<std::string> owned = args;
  for (auto& a : owned) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_scene) return cmd_gen_scene(scene_out, seed, boxes, count, out);
    if (*gen_labels) return cmd_gen_labels(scene_file, out_dir, stride, region, out);
    if (*forward) return cmd_forward(scene_file, checkpoint, out_dir, scene_index, out);
    if (*gradcheck) return cmd_gradcheck(sample_entries, out);
    if (*train) return cmd_train(train_flags, kernel_size, out_dir, resume, out, err);
    if (*ablate) return cmd_ablate(ablate_flags, kernels, csv_out, out, err);
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const Error& e) {
    // Bad input (unreadable files, invalid geometry or configuration) is a
    // usage error; numerical failures while computing are reported as 1.
    err << "error: " << e.what() << "\n";
    return dynamic_cast<const NonFinite*>(&e) ? kCheckFailed : kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kCheckFailed;
  }
  return kUsage;
}

}  // namespace roa::cli
