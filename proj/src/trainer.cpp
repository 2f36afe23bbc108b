#include "mire/trainer.hpp"

#include <cmath>
#include <sstream>

namespace mire {

using ndgrad::Tensor;

const char* to_string(Method method) {
  switch (method) {
    case Method::finetune: return "finetune";
    case Method::ms_ncm: return "ms-ncm";
    case Method::mire: return "mire";
    case Method::mire_pp: return "mire++";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::finetune, Method::ms_ncm, Method::mire, Method::mire_pp})
    if (name == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + name + "' (expected finetune, ms-ncm, mire or mire++)");
}

Techniques techniques_for(Method method) {
  switch (method) {
    case Method::finetune: return {false, false, false, false, MeanMode::ncm};
    case Method::ms_ncm: return {true, true, false, false, MeanMode::ncm};
    case Method::mire: return {true, true, true, false, MeanMode::ncm};
    case Method::mire_pp: return {true, true, true, true, MeanMode::corrected};
  }
  throw std::invalid_argument("techniques_for: bad method");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0 && std::isfinite(learning_rate))) throw std::invalid_argument("learning rate must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(noise_std >= 0.0 && std::isfinite(noise_std))) throw std::invalid_argument("noise_std must be non-negative");
  if (memory_capacity == 0) throw std::invalid_argument("memory capacity must be positive");
  if (cc_subset < 2) throw std::invalid_argument("cc_subset must be at least 2");
  mire.validate();
  extractor.validate();
}

TrainerState initial_state(const TrainConfig& cfg) {
  return TrainerState{Extractor::init(cfg.extractor, derive_seed(cfg.seed, 1)), EpisodicMemory(cfg.memory_capacity),
                      PrototypeTable(cfg.gamma), 0, Rng(derive_seed(cfg.seed, 2))};
}

Batch augment(const Batch& batch, double noise_std, Rng& rng) {
  Batch out = batch;
  for (auto& s : out)
    for (double& v : s.x) v += noise_std * rng.normal();
  return out;
}

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), state_(initial_state(cfg_)) { cfg_.validate(); }

Trainer::Trainer(TrainConfig cfg, TrainerState state) : cfg_(std::move(cfg)), state_(std::move(state)) {
  cfg_.validate();
  ExtractorConfig arch = state_.extractor.config();
  arch.seed = cfg_.extractor.seed;
  if (!(arch == cfg_.extractor)) throw std::invalid_argument("Trainer: state extractor architecture does not match config");
}

namespace {

struct LossParts {
  Tensor total;
  double metric = 0.0;
  double entropy = 0.0;
};

// Metric loss minus the (optional) entropy bonus; kept term by term so the
// parts can be reported. Matches mire_loss exactly.
LossParts batch_loss(const Tensor& emb, const std::vector<int>& labels, const MireConfig& cfg, bool entropy) {
  LossParts p;
  Tensor metric = metric_loss(emb, labels, cfg);
  p.metric = metric.item();
  p.total = metric;
  if (entropy && cfg.alpha != 0.0) {
    Tensor h = entropy_estimate(emb, cfg.delta);
    p.entropy = h.item();
    p.total = ndgrad::sub(metric, ndgrad::scale(h, cfg.alpha));
  }
  return p;
}

}  // namespace

StepStats Trainer::step(const Batch& batch) {
  if (batch.empty()) throw std::invalid_argument("Trainer::step: empty batch");
  const Techniques tq = cfg_.techniques();
  auto& st = state_;
  StepStats stats;

  Batch combined = batch;
  if (tq.replay) {
    for (const MemoryEntry* e : st.memory.retrieve(cfg_.replay_batch, st.rng)) combined.push_back(e->sample);
    stats.replayed = combined.size() - batch.size();
  }
  std::vector<int> labels;
  std::vector<Vec> xs;
  for (const auto& s : combined) {
    labels.push_back(s.label);
    xs.push_back(s.x);
  }

  LossParts main = batch_loss(st.extractor.embeddings(stack_rows(xs)), labels, cfg_.mire, tq.entropy);
  Tensor loss = main.total;
  stats.metric = main.metric;
  stats.entropy = main.entropy;
  if (tq.augment) {
    std::vector<Vec> aug;
    for (auto& s : augment(combined, cfg_.noise_std, st.rng)) aug.push_back(std::move(s.x));
    LossParts second = batch_loss(st.extractor.embeddings(stack_rows(aug)), labels, cfg_.mire, tq.entropy);
    loss = ndgrad::add(loss, second.total);
    stats.metric += second.metric;
    stats.entropy += second.entropy;
  }

  // The correlation reward only draws from the rng when it contributes, so
  // beta = 0 reproduces the run without it exactly.
  if (tq.cc && cfg_.mire.beta != 0.0 && !st.memory.empty()) {
    std::vector<CcGroup> groups;
    for (int c : st.memory.stored_classes()) {
      auto subset = st.memory.class_subset(c, cfg_.cc_subset, st.rng);
      if (subset.size() < 2) continue;
      std::vector<Vec> cx, cz;
      for (const MemoryEntry* e : subset) {
        cx.push_back(e->sample.x);
        cz.push_back(e->z_stored);
      }
      groups.push_back({st.extractor.features(stack_rows(cx)), stack_rows(cz)});
    }
    Tensor reward = cc_reward(groups, cfg_.mire);
    if (reward.defined()) {
      stats.cc = reward.item();
      loss = ndgrad::sub(loss, ndgrad::scale(reward, cfg_.mire.beta));
    }
  }

  stats.loss = loss.item();
  if (!std::isfinite(stats.loss))
    throw TrainingDiverged("non-finite loss at iteration " + std::to_string(st.iteration), describe(stats));

  st.extractor.zero_grad();
  ndgrad::backward(loss);
  st.extractor.sgd_step(cfg_.learning_rate);

  std::vector<Vec> incoming;
  for (const auto& s : batch) incoming.push_back(s.x);
  const auto post = st.extractor.features_of(incoming);
  st.memory.update(batch, post, st.iteration, st.rng);
  st.prototypes.update(batch, post);
  ++st.iteration;
  return stats;
}

std::string Trainer::describe(const StepStats& stats) const {
  std::ostringstream os;
  os << "method=" << to_string(cfg_.method) << " iteration=" << state_.iteration << " loss=" << stats.loss
     << " metric=" << stats.metric << " entropy=" << stats.entropy << " cc=" << stats.cc
     << " replayed=" << stats.replayed << " memory=" << state_.memory.size() << "\n";
  std::size_t k = 0;
  for (const auto& p : state_.extractor.parameters()) {
    double sq = 0.0, big = 0.0;
    bool finite = true;
    for (double v : p.data()) {
      finite = finite && std::isfinite(v);
      sq += v * v;
      big = std::max(big, std::abs(v));
    }
    os << "param[" << k++ << "] shape=" << ndgrad::to_string(p.shape()) << " norm=" << std::sqrt(sq)
       << " max_abs=" << big << (finite ? "" : " NON-FINITE") << "\n";
  }
  return os.str();
}

ClassMeans Trainer::means(MeanMode mode) const {
  return build_means(state_.memory, state_.extractor, mode, &state_.prototypes);
}

ClassMeans Trainer::means() const { return means(cfg_.techniques().inference); }

Snapshot take_snapshot(const Trainer& trainer, const Dataset& eval, const std::vector<std::vector<int>>& task_classes,
                       std::size_t task) {
  const auto& extractor = trainer.state().extractor;
  Snapshot snap;
  snap.task = task;
  snap.iteration = trainer.state().iteration;
  snap.ncm_means = trainer.means(MeanMode::ncm);
  snap.corrected_means = trainer.means(MeanMode::corrected);
  const ClassMeans& used = trainer.config().techniques().inference == MeanMode::ncm ? snap.ncm_means : snap.corrected_means;

  std::map<int, std::vector<Vec>> features;
  for (std::size_t i = 0; i <= task; ++i)
    for (int c : task_classes.at(i)) {
      const auto& rows = eval.by_class.at(static_cast<std::size_t>(c));
      if (rows.empty()) throw std::invalid_argument("take_snapshot: no evaluation samples for class " + std::to_string(c));
      features[c] = extractor.features_of(rows);
    }
  const Evaluation ev = evaluate_features(used, features);
  for (std::size_t i = 0; i <= task; ++i) snap.task_accuracy.push_back(ev.accuracy(task_classes[i]));
  for (const auto& [c, f] : features) {
    snap.true_means.classes.push_back(c);
    snap.true_means.means.push_back(normalized(mean_of(f)));
    snap.true_means.provenance.push_back(MeanProvenance::true_holdout);
    snap.feature_variance[c] = mean_feature_variance(f);
  }
  return snap;
}

RunRecord run(const SplitStream& stream, const Dataset& eval, const TrainConfig& cfg, const std::string& label) {
  Trainer trainer(cfg);
  return run(stream, eval, trainer, label);
}

RunRecord run(const SplitStream& stream, const Dataset& eval, Trainer& trainer, const std::string& label) {
  const auto& cfg = trainer.config();
  RunRecord rec{label.empty() ? to_string(cfg.method) : label, cfg.seed, {}, {}, AccuracyMatrix(stream.num_tasks())};
  const auto learner = stream.learner();
  const auto& ends = stream.task_ends();
  std::size_t task = 0;
  for (std::size_t i = 0; i < learner.size(); ++i) {
    rec.loss_trace.push_back(trainer.step(learner[i]).loss);
    while (task < ends.size() && ends[task] == i + 1) {
      Snapshot snap = take_snapshot(trainer, eval, stream.task_classes(), task);
      for (std::size_t k = 0; k < snap.task_accuracy.size(); ++k) rec.accuracy.set(task, k, snap.task_accuracy[k]);
      rec.snapshots.push_back(std::move(snap));
      ++task;
    }
  }
  return rec;
}

Trainer train_first_task(const SplitStream& stream, const TrainConfig& cfg, std::size_t epochs) {
  if (epochs == 0) throw std::invalid_argument("train_first_task: epochs must be positive");
  Trainer trainer(cfg);
  const auto learner = stream.learner();
  const std::size_t end = stream.task_ends().front();
  for (std::size_t e = 0; e < epochs; ++e)
    for (std::size_t i = 0; i < end; ++i) trainer.step(learner[i]);
  return trainer;
}

}  // namespace mire
