#include "mire/loss_check.hpp"

#include <algorithm>
#include <optional>
#include <stdexcept>

#include "mire/gradcheck.hpp"
#include "mire/losses.hpp"
#include "mire/memory.hpp"

namespace mire {

namespace {

// Central differences are meaningless across a relu kink or a mining
// threshold, so configurations with such a point within reach of the step
// are redrawn.
constexpr double kKinkMargin = 1e-4;
constexpr std::size_t kMaxDraws = 100;
// Central differences at h = 1e-5 carry roundoff near eps * |f| / h ~ 1e-11,
// so components below ~1e-7 cannot be resolved to 1e-4 relative; the
// denominator floor is raised accordingly.
constexpr double kDenominatorFloor = 1e-6;

struct Problem {
  Extractor model;
  std::vector<int> labels;
  std::vector<Vec> xs;
  std::vector<std::vector<Vec>> group_x, group_z;
};

std::optional<Problem> draw(const LossCheckConfig& cfg, Rng& rng) {
  ExtractorConfig ec{cfg.input_dim, {cfg.feature_dim}, cfg.feature_dim, cfg.head_hidden, cfg.head_out, 0};
  Problem p{Extractor::init(ec, rng.next_u64()), {}, {}, {}, {}};
  // Stored features come from an older extractor, as after drift.
  const Extractor old = Extractor::init(ec, rng.next_u64());

  p.labels.resize(cfg.batch);
  for (std::size_t i = 0; i < cfg.batch; ++i) p.labels[i] = static_cast<int>(i % cfg.classes);
  rng.shuffle(p.labels);
  p.xs.assign(cfg.batch, Vec(cfg.input_dim));
  for (auto& x : p.xs)
    for (auto& v : x) v = rng.normal();

  Batch stored;
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < cfg.memory_per_class; ++i) {
      Sample s{Vec(cfg.input_dim), static_cast<int>(c)};
      for (auto& v : s.x) v = rng.normal();
      stored.push_back(std::move(s));
    }
  std::vector<Vec> stored_x;
  for (const auto& s : stored) stored_x.push_back(s.x);
  EpisodicMemory memory(2 * cfg.memory_per_class);
  memory.update(stored, old.features_of(stored_x), 0, rng);
  for (int c : memory.stored_classes()) {
    p.group_x.emplace_back();
    p.group_z.emplace_back();
    for (const MemoryEntry* e : memory.class_subset(c, cfg.memory_per_class, rng)) {
      p.group_x.back().push_back(e->sample.x);
      p.group_z.back().push_back(e->z_stored);
    }
  }

  const auto x = stack_rows(p.xs);
  if (p.model.relu_margin(x) < kKinkMargin || p.model.relu_margin(stack_rows(stored_x)) < kKinkMargin) return std::nullopt;
  if (ms_mining_margin(p.model.embeddings(x), p.labels, MsConfig{}) < kKinkMargin) return std::nullopt;
  return p;
}

}  // namespace

double LossCheckReport::worst() const { return std::max({ms, mire, mire_pp}); }

LossCheckReport check_loss_gradients(const LossCheckConfig& cfg) {
  LossCheckReport rep;
  for (std::size_t k = 0; k < cfg.configs; ++k) {
    Rng rng(derive_seed(cfg.seed, k));
    std::optional<Problem> p;
    for (std::size_t attempt = 0; !p; ++attempt) {
      if (attempt == kMaxDraws) throw std::runtime_error("check_loss_gradients: no smooth configuration found");
      p = draw(cfg, rng);
      if (!p) ++rep.redraws;
    }
    const Extractor& model = p->model;
    const auto& labels = p->labels;
    const auto& group_x = p->group_x;
    const auto& group_z = p->group_z;

    MireConfig mc;
    mc.alpha = rng.uniform(0.01, 0.5);
    mc.beta = rng.uniform(0.01, 0.5);
    const ndgrad::Tensor x = stack_rows(p->xs);

    auto ms = [&] { return ms_loss(model.embeddings(x), labels, mc.ms); };
    auto mire = [&] { return mire_loss(model.embeddings(x), labels, mc); };
    auto mire_pp = [&] {
      std::vector<CcGroup> groups;
      for (std::size_t g = 0; g < group_x.size(); ++g)
        groups.push_back({model.features(stack_rows(group_x[g])), stack_rows(group_z[g])});
      return mire_pp_loss(model.embeddings(x), labels, mc, groups);
    };
    const auto params = model.parameters();
    rep.ms = std::max(rep.ms, ndgrad::grad_check(ms, params, cfg.h, kDenominatorFloor));
    rep.mire = std::max(rep.mire, ndgrad::grad_check(mire, params, cfg.h, kDenominatorFloor));
    rep.mire_pp = std::max(rep.mire_pp, ndgrad::grad_check(mire_pp, params, cfg.h, kDenominatorFloor));
    ++rep.configs;
  }
  return rep;
}

}  // namespace mire
