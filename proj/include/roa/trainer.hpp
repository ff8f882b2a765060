#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "roa/loss.hpp"
#include "roa/network.hpp"
#include "roa/optim.hpp"
#include "roa/scene.hpp"

namespace roa {

/// The six cameras of one scene folded into the batch dimension: images
/// 6 x 3 x H x W rendered at the model input size and labels 6 x 1 x H/16 x
/// W/16 rasterized with the intrinsics rescaled to that size.
struct SceneBatch {
  Tensor<float> images;
  Tensor<float> labels;
};

SceneBatch make_batch(const Scene& scene, const ModelConfig& cfg);

enum class LrSchedule { kConstant, kCosine };

LrSchedule parse_lr_schedule(std::string_view text);
std::string_view to_string(LrSchedule schedule);

struct TrainOptions {
  ModelConfig model;
  AdamOptions adam;
  // kCosine decays adam.lr to 0 over schedule_steps steps (constant
  // afterwards at 0); kConstant ignores schedule_steps.
  LrSchedule schedule = LrSchedule::kConstant;
  std::int64_t schedule_steps = 0;
  LossWeights weights;
  Reduction reduction = Reduction::kMean;
  // External loss terms; no detector or depth net exists here.
  double l_det = 0.0;
  double l_depth = 0.0;
};

struct StepRecord {
  std::int64_t step = 0;
  double l_roa = 0.0;
  double total = 0.0;
};

/// Full-batch training on a fixed list of scenes (step i uses scene
/// i mod count) with batch norm in train mode and Adam.
class Trainer {
 public:
  Trainer(std::vector<Scene> scenes, TrainOptions options);

  // Forward, backward and one Adam update. The record holds the losses of the
  // forward pass, i.e. before the update.
  StepRecord step();
  std::vector<StepRecord> run(std::int64_t steps);

  /// Directory with config.txt, state.txt, manifest.tsv and one .roat file
  /// per parameter, buffer and Adam moment.
  void save_checkpoint(const std::filesystem::path& dir) const;
  /// Restores weights, buffers, optimizer state and the step counter. The
  /// model configuration stored in the checkpoint replaces options.model.
  static Trainer resume(const std::filesystem::path& dir, std::vector<Scene> scenes, TrainOptions options);

  ParameterStore<float>& store() { return store_; }
  const ParameterStore<float>& store() const { return store_; }
  const AdamState<float>& adam_state() const { return adam_; }
  const TrainOptions& options() const { return options_; }
  std::int64_t steps_done() const { return steps_done_; }

 private:
  std::vector<Scene> scenes_;
  std::vector<SceneBatch> batches_;
  TrainOptions options_;
  ParameterStore<float> store_;
  AdamState<float> adam_;
  std::int64_t steps_done_ = 0;
};

/// Learning rate used for the update that follows `step` completed steps.
double scheduled_lr(const TrainOptions& options, std::int64_t step);

std::vector<StepRecord> train_toy(const std::vector<Scene>& scenes, const ModelConfig& cfg, std::int64_t steps);

void write_loss_csv(std::ostream& out, const std::vector<StepRecord>& curve);

/// Loads the parameters and buffers of a checkpoint directory (optimizer
/// state is ignored) together with its model configuration.
ModelConfig load_model(const std::filesystem::path& dir, ParameterStore<float>& store);

}  // namespace roa
