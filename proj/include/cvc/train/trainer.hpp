#pragma once

#include "cvc/audio/corpus.hpp"
#include "cvc/losses/objective.hpp"
#include "cvc/model/checkpoint.hpp"
#include "cvc/nn/adam.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace cvc::train {

enum class LrSchedule { constant, linear_decay_after_half };

struct TrainConfig {
  int epochs = 1000;
  int batch_size = 1;
  double lr = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  std::uint64_t seed = 0;
  losses::LossWeights weights;
  losses::GanVariant gan_variant = losses::GanVariant::least_squares;
  int checkpoint_every_epochs = 100;
  LrSchedule lr_schedule = LrSchedule::constant;

  /// Throws training_engine.InvalidConfig.
  void validate() const;
  double lr_at_epoch(int epoch) const;
};

struct ModelConfig {
  model::GeneratorConfig generator;
  model::DiscriminatorConfig discriminator;
  model::ProjectionConfig projection;
};

/// Source domain X (one or many speakers) and target domain Y, each with its
/// own normalization statistics.
struct DomainPair {
  audio::CorpusIndex source;
  audio::CorpusIndex target;
  audio::NormStats source_stats;
  audio::NormStats target_stats;

  static DomainPair load(const std::filesystem::path& source_dir, const std::filesystem::path& target_dir);
  /// Throws training_engine.EmptyCorpus / training_engine.OverlappingDomains.
  void validate() const;
};

/// Everything a run needs to continue bit-exactly: networks, optimizer
/// moments, epoch/step counters and the generator state. Not movable: the
/// optimizers point into the networks.
class TrainState {
 public:
  TrainState(const ModelConfig& models, const TrainConfig& cfg);
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  model::Generator<float> generator;
  model::Discriminator<float> discriminator;
  model::ProjectionHeads<float> heads;
  nn::Adam<float> generator_opt;
  nn::Adam<float> discriminator_opt;
  int epoch = 0;  // completed epochs
  long step = 0;  // completed steps
  Rng rng;

  nn::ParamRefs<float> generator_side_params();
  losses::ModelHandles<float> handles() { return {&generator, &discriminator, &heads}; }
};

/// Fresh state: seeds the generator and initializes G, D, then P.
std::unique_ptr<TrainState> initial_state(const ModelConfig& models, const TrainConfig& cfg);

struct CheckpointExtras {
  ModelConfig models;
  TrainConfig train;
  audio::NormStats source_stats;
  audio::NormStats target_stats;
  audio::MelConfig mel;
};

void save_checkpoint(const std::filesystem::path& path, TrainState& state, const CheckpointExtras& extras);
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg,
                                            CheckpointExtras* extras = nullptr);

/// One logged step.
struct StepRecord {
  long step = 0;
  int epoch = 0;
  losses::LossBreakdown generator;
  double d_loss = 0.0;
};

/// JSON line {step, epoch, gan, nce, identity, d_loss, total}; identity is
/// omitted when the identity term is disabled.
std::string to_json_line(const StepRecord& r);

struct TrainOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  audio::MelConfig mel;
  audio::CropSpec crop;
  /// Hash generator/head parameters around the D update and D parameters
  /// around the G update; throws training_engine.IsolationViolation on change.
  bool verify_isolation = false;
  /// Stop after this many epochs of the current invocation (0 = run to cfg.epochs).
  int stop_after_epochs = 0;
  std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path loss_log;
  std::vector<StepRecord> history;
  int epochs_completed = 0;
};

/// Alternating D / G optimization over shuffled X with Y drawn per step.
/// Throws training_engine.EmptyCorpus, training_engine.DivergedLoss.
TrainResult train(const DomainPair& pair, const ModelConfig& models, const TrainConfig& cfg, const TrainOptions& options);

struct AblationResult {
  TrainResult with_identity;
  TrainResult without_identity;
};

/// Two runs with identical seeds, mu as configured and mu = 0, under
/// out_dir/with_identity and out_dir/without_identity.
AblationResult ablate_identity(const DomainPair& pair, const ModelConfig& models, const TrainConfig& cfg,
                               const TrainOptions& options);

/// Fixed-duration training window: crop_or_reject, then the trailing frames
/// beyond the generator's stride multiple are dropped.
int training_frames(const audio::CropSpec& crop, const audio::MelConfig& mel, int stride_product);

/// FNV-1a over the raw bytes of every parameter.
std::uint64_t parameter_hash(const nn::ParamRefs<float>& params);

}  // namespace cvc::train
