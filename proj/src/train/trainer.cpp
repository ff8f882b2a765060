#include "roa/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "roa/errors.hpp"
#include "roa/tensor_io.hpp"

namespace roa {

namespace fs = std::filesystem;

SceneBatch make_batch(const Scene& scene, const ModelConfig& cfg) {
  cfg.validate();
  scene.validate();
  const Index H = cfg.input_height, W = cfg.input_width;
  std::vector<Camera> scaled = scene.cameras;
  for (auto& cam : scaled) {
    const Intrinsics intr = cam.intrinsics.scaled(static_cast<double>(W) / cam.intrinsics.width);
    if (intr.width != W || intr.height != H) {
      throw InvalidArgument("camera " + cam.name + " (" + std::to_string(cam.intrinsics.width) + "x" +
                            std::to_string(cam.intrinsics.height) + ") cannot be rescaled to the model input " +
                            std::to_string(W) + "x" + std::to_string(H));
    }
    cam.intrinsics = intr;
  }
  SceneBatch batch{Tensor<float>({kNumCameras, 3, H, W}), Tensor<float>({kNumCameras, 1, H / 16, W / 16})};
  const Index plane = 3 * H * W;
  for (int c = 0; c < kNumCameras; ++c) {
    const auto img = render_camera(scene, c, static_cast<int>(H), static_cast<int>(W));
    std::copy(img.data().begin(), img.data().end(), batch.images.data().begin() + c * plane);
  }
  const auto maps =
      rasterize_scene(scene.boxes, scaled, LabelConfig{static_cast<int>(kOutputStride), kDefaultNear, cfg.region_type});
  const Index cells = (H / 16) * (W / 16);
  for (int c = 0; c < kNumCameras; ++c) {
    const auto& v = maps[static_cast<std::size_t>(c)].values;
    std::copy(v.data().begin(), v.data().end(), batch.labels.data().begin() + c * cells);
  }
  return batch;
}

LrSchedule parse_lr_schedule(std::string_view text) {
  if (text == "constant") return LrSchedule::kConstant;
  if (text == "cosine") return LrSchedule::kCosine;
  throw InvalidArgument("unknown lr schedule '" + std::string(text) + "' (expected constant or cosine)");
}

std::string_view to_string(LrSchedule schedule) {
  return schedule == LrSchedule::kCosine ? "cosine" : "constant";
}

double scheduled_lr(const TrainOptions& options, std::int64_t step) {
  if (options.schedule == LrSchedule::kConstant || options.schedule_steps <= 0) return options.adam.lr;
  const double t = static_cast<double>(std::min(step, options.schedule_steps)) / static_cast<double>(options.schedule_steps);
  return options.adam.lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

Trainer::Trainer(std::vector<Scene> scenes, TrainOptions options)
    : scenes_(std::move(scenes)), options_(std::move(options)), store_(options_.model.seed) {
  if (scenes_.empty()) throw InvalidArgument("training needs at least one scene");
  options_.model.validate();
  options_.weights.validate();
  for (const auto& s : scenes_) batches_.push_back(make_batch(s, options_.model));
  // Create every parameter up front (creation order = forward order, so the
  // weights do not depend on when this happens).
  Tape<float> tape;
  Scope<float> scope(tape, store_, NormMode::kEval, false);
  const Index H = options_.model.input_height, W = options_.model.input_width;
  full_forward(scope, tape.constant(Tensor<float>({1, 3, H, W})), Var<float>{}, options_.model);
}

StepRecord Trainer::step() {
  const SceneBatch& batch = batches_[static_cast<std::size_t>(steps_done_) % batches_.size()];
  Tape<float> tape;
  Scope<float> scope(tape, store_, NormMode::kTrain, true);
  const auto result = full_forward(scope, tape.constant(batch.images), tape.constant(batch.labels), options_.model,
                                   options_.reduction);
  const double l_roa = result.l_roa.value().item();
  const LossReport report = total_loss(options_.l_det, options_.l_depth, l_roa, options_.weights);

  // The external terms are constants here, so d(total) = lambda2 * d(l_roa).
  tape.backward(scale(result.l_roa, static_cast<float>(options_.weights.lambda2)));
  std::map<std::string, Tensor<float>> grads;
  for (const auto& [name, var] : scope.bindings()) {
    const Tensor<float>* g = tape.grad_slot(var);
    if (g == nullptr) continue;
    if (!g->all_finite()) throw NonFinite("gradient of '" + name + "' is not finite");
    grads.emplace(name, *g);
  }
  AdamOptions adam = options_.adam;
  adam.lr = scheduled_lr(options_, steps_done_);
  optimizer_step(store_, grads, adam_, adam);
  return {steps_done_++, l_roa, report.total};
}

std::vector<StepRecord> Trainer::run(std::int64_t steps) {
  std::vector<StepRecord> curve;
  for (std::int64_t i = 0; i < steps; ++i) curve.push_back(step());
  return curve;
}

namespace {

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::map<std::string, std::string> read_kv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", n, path.string());
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct ManifestRow {
  std::string kind, name, file;
};

std::vector<ManifestRow> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.tsv");
  if (!in) throw IoError("checkpoint " + dir.string() + " has no manifest.tsv");
  std::vector<ManifestRow> rows;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    if (++n == 1 || line.empty()) continue;  // header
    std::istringstream s(line);
    ManifestRow r;
    if (!std::getline(s, r.kind, '\t') || !std::getline(s, r.name, '\t') || !std::getline(s, r.file)) {
      throw ParseError("expected kind<TAB>name<TAB>file", n, "manifest.tsv");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void load_entries(const fs::path& dir, const std::vector<ManifestRow>& rows, ParameterStore<float>& store,
                  AdamState<float>* adam) {
  for (const auto& r : rows) {
    Tensor<float> t = read_tensor<float>(dir / r.file);
    if (r.kind == "param" || r.kind == "buffer") {
      const bool trainable = r.kind == "param";
      if (store.contains(r.name)) {
        Tensor<float>& dst = store.at(r.name);
        if (dst.shape() != t.shape()) {
          throw ShapeMismatch("checkpoint tensor '" + r.name + "' has shape " + to_string(t.shape()) +
                              ", model expects " + to_string(dst.shape()));
        }
        dst = std::move(t);
      } else {
        store.get_or_init(r.name, t.shape(), Init::kZero, trainable) = std::move(t);
      }
    } else if (r.kind == "adam_m" || r.kind == "adam_v") {
      if (adam) (r.kind == "adam_m" ? adam->m : adam->v)[r.name] = std::move(t);
    } else {
      throw ParseError("unknown entry kind '" + r.kind + "'", 0, "manifest.tsv");
    }
  }
}

}  // namespace

void Trainer::save_checkpoint(const fs::path& dir) const {
  fs::create_directories(dir);
  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("cannot write to " + dir.string());
  manifest << "kind\tname\tfile\n";
  int counter = 0;
  auto put = [&](const std::string& kind, const std::string& name, const Tensor<float>& t) {
    char file[32];
    std::snprintf(file, sizeof file, "t%05d.roat", counter++);
    write_tensor(dir / file, t);
    manifest << kind << '\t' << name << '\t' << file << '\n';
  };
  for (const auto& [name, e] : store_.entries()) put(e.trainable ? "param" : "buffer", name, e.value);
  for (const auto& [name, t] : adam_.m) put("adam_m", name, t);
  for (const auto& [name, t] : adam_.v) put("adam_v", name, t);
  if (!manifest) throw IoError("failed writing manifest in " + dir.string());

  std::ofstream(dir / "config.txt") << options_.model.to_text();
  std::ofstream state(dir / "state.txt");
  state << "steps_done=" << steps_done_ << "\n"
        << "adam_step=" << adam_.step << "\n"
        << "lr=" << format_double(options_.adam.lr) << "\n"
        << "beta1=" << format_double(options_.adam.beta1) << "\n"
        << "beta2=" << format_double(options_.adam.beta2) << "\n"
        << "eps=" << format_double(options_.adam.eps) << "\n"
        << "schedule=" << to_string(options_.schedule) << "\n"
        << "schedule_steps=" << options_.schedule_steps << "\n";
  if (!state) throw IoError("failed writing state in " + dir.string());
}

Trainer Trainer::resume(const fs::path& dir, std::vector<Scene> scenes, TrainOptions options) {
  options.model = ModelConfig::from_text(read_text(dir / "config.txt"));
  const auto state = read_kv(dir / "state.txt");
  auto number = [&](const char* key) {
    auto it = state.find(key);
    if (it == state.end()) throw ParseError("missing key", 0, std::string("state.txt:") + key);
    return it->second;
  };
  options.adam.lr = std::stod(number("lr"));
  options.adam.beta1 = std::stod(number("beta1"));
  options.adam.beta2 = std::stod(number("beta2"));
  options.adam.eps = std::stod(number("eps"));
  options.schedule = parse_lr_schedule(number("schedule"));
  options.schedule_steps = std::stoll(number("schedule_steps"));
  Trainer t(std::move(scenes), std::move(options));
  load_entries(dir, read_manifest(dir), t.store_, &t.adam_);
  t.steps_done_ = std::stoll(number("steps_done"));
  t.adam_.step = std::stoll(number("adam_step"));
  return t;
}

ModelConfig load_model(const fs::path& dir, ParameterStore<float>& store) {
  const ModelConfig cfg = ModelConfig::from_text(read_text(dir / "config.txt"));
  cfg.validate();
  load_entries(dir, read_manifest(dir), store, nullptr);
  return cfg;
}

std::vector<StepRecord> train_toy(const std::vector<Scene>& scenes, const ModelConfig& cfg, std::int64_t steps) {
  TrainOptions opts;
  opts.model = cfg;
  Trainer trainer(scenes, opts);
  return trainer.run(steps);
}

void write_loss_csv(std::ostream& out, const std::vector<StepRecord>& curve) {
  out << "step,l_roa,total\n";
  for (const auto& r : curve) {
    out << r.step << ',' << std::setprecision(9) << r.l_roa << ',' << r.total << '\n';
  }
}

}  // namespace roa
