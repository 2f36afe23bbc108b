#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mire/classifier.hpp"
#include "mire/losses.hpp"
#include "mire/memory.hpp"
#include "mire/metrics.hpp"
#include "mire/model.hpp"
#include "mire/prototypes.hpp"
#include "mire/rng.hpp"

namespace mire {

enum class Method { finetune, ms_ncm, mire, mire_pp };

const char* to_string(Method method);
Method parse_method(const std::string& name);

/// Which pieces of the learning step are active. Methods are presets; the
/// ablation study toggles the pieces individually.
struct Techniques {
  bool replay = true;
  bool augment = true;
  bool entropy = true;
  bool cc = true;
  MeanMode inference = MeanMode::corrected;

  bool operator==(const Techniques&) const = default;
};

Techniques techniques_for(Method method);

struct TrainConfig {
  Method method = Method::mire_pp;
  /// Replaces the method preset when set.
  std::optional<Techniques> techniques_override;
  std::size_t replay_batch = 32;
  double learning_rate = 0.2;
  MireConfig mire;
  double gamma = 0.99;
  /// Std of the additive Gaussian input noise used as augmentation.
  double noise_std = 0.1;
  /// Entries per memory class used for the correlation reward.
  std::size_t cc_subset = 10;
  std::size_t memory_capacity = 100;
  ExtractorConfig extractor;
  std::uint64_t seed = 0;

  Techniques techniques() const { return techniques_override ? *techniques_override : techniques_for(method); }
  void validate() const;
};

/// Everything that evolves while learning; exactly what a checkpoint stores.
struct TrainerState {
  Extractor extractor;
  EpisodicMemory memory;
  PrototypeTable prototypes;
  std::uint64_t iteration = 0;
  Rng rng;
};

TrainerState initial_state(const TrainConfig& cfg);

/// Raised when the loss turns non-finite; `dump` describes the state.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::string dump)
      : std::runtime_error(what), dump_(std::move(dump)) {}
  const std::string& dump() const { return dump_; }

 private:
  std::string dump_;
};

struct StepStats {
  double loss = 0.0;
  double metric = 0.0;
  double entropy = 0.0;
  double cc = 0.0;
  std::size_t replayed = 0;
};

/// Input augmentation: x + noise_std * N(0, I), one draw per coordinate.
Batch augment(const Batch& batch, double noise_std, Rng& rng);

class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  Trainer(TrainConfig cfg, TrainerState state);

  /// One online iteration on an incoming minibatch: replay, loss, SGD,
  /// memory and prototype updates.
  StepStats step(const Batch& batch);

  /// Class means under the configured inference mode.
  ClassMeans means() const;
  ClassMeans means(MeanMode mode) const;

  const TrainConfig& config() const { return cfg_; }
  const TrainerState& state() const { return state_; }
  TrainerState& state() { return state_; }

 private:
  std::string describe(const StepStats& stats) const;

  TrainConfig cfg_;
  TrainerState state_;
};

struct RunRecord {
  std::string label;
  std::uint64_t seed = 0;
  std::vector<double> loss_trace;
  std::vector<Snapshot> snapshots;
  AccuracyMatrix accuracy;

  double acc() const { return average_accuracy(accuracy); }
  double fgt() const { return average_forgetting(accuracy); }
};

/// Evaluation at a task boundary: accuracy on tasks 0..task, both kinds of
/// estimated means, held-out true means and feature variances.
Snapshot take_snapshot(const Trainer& trainer, const Dataset& eval, const std::vector<std::vector<int>>& task_classes,
                       std::size_t task);

/// Runs the learner over the stream; the evaluator snapshots at every task
/// boundary (the learner never sees them).
RunRecord run(const SplitStream& stream, const Dataset& eval, const TrainConfig& cfg,
              const std::string& label = {});
/// Same, continuing from the given trainer (left in its final state).
RunRecord run(const SplitStream& stream, const Dataset& eval, Trainer& trainer, const std::string& label = {});

/// Trains only on the first task for `epochs` passes; returns the trainer.
Trainer train_first_task(const SplitStream& stream, const TrainConfig& cfg, std::size_t epochs);

}  // namespace mire
