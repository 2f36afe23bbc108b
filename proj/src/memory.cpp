#include "mire/memory.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mire {

std::size_t EpisodicMemory::size() const {
  std::size_t n = 0;
  for (const auto& [_, slot] : slots_) n += slot.entries.size();
  return n;
}

std::size_t EpisodicMemory::quota(int label) const {
  const std::size_t classes = slots_.size();
  if (classes == 0) return capacity_;
  std::size_t rank = 0;
  for (const auto& [c, _] : slots_) {
    if (c == label) break;
    ++rank;
  }
  return capacity_ / classes + (rank < capacity_ % classes ? 1 : 0);
}

std::vector<int> EpisodicMemory::seen_classes() const {
  std::vector<int> out;
  for (const auto& [c, _] : slots_) out.push_back(c);
  return out;
}

std::vector<int> EpisodicMemory::stored_classes() const {
  std::vector<int> out;
  for (const auto& [c, slot] : slots_)
    if (!slot.entries.empty()) out.push_back(c);
  return out;
}

const std::vector<MemoryEntry>& EpisodicMemory::entries(int label) const {
  static const std::vector<MemoryEntry> kEmpty;
  auto it = slots_.find(label);
  return it == slots_.end() ? kEmpty : it->second.entries;
}

void EpisodicMemory::admit_class(int label, Rng& rng) {
  slots_.emplace(label, ClassSlot{});
  for (auto& [c, slot] : slots_) {
    const std::size_t q = quota(c);
    while (slot.entries.size() > q) {
      const std::size_t victim = rng.index(slot.entries.size());
      slot.entries[victim] = std::move(slot.entries.back());
      slot.entries.pop_back();
    }
  }
}

void EpisodicMemory::update(const Batch& batch, const std::vector<Vec>& features, std::uint64_t iteration,
                            Rng& rng) {
  if (features.size() != batch.size())
    throw std::invalid_argument("memory update: " + std::to_string(features.size()) + " features for " +
                                std::to_string(batch.size()) + " samples");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double norm2 = 0.0;
    for (double v : features[i]) norm2 += v * v;
    if (std::abs(std::sqrt(norm2) - 1.0) > 1e-9)
      throw std::invalid_argument("memory update: stored feature " + std::to_string(i) + " is not unit-norm");

    const int label = batch[i].label;
    if (!slots_.contains(label)) admit_class(label, rng);
    auto& slot = slots_.at(label);
    const std::size_t q = quota(label);
    ++slot.seen;
    if (slot.entries.size() < q) {
      slot.entries.push_back({batch[i], features[i], iteration});
    } else if (q > 0) {
      // Accept with probability q / seen into a uniformly chosen slot.
      const std::uint64_t j = rng.index(slot.seen);
      if (j < q) slot.entries[j] = {batch[i], features[i], iteration};
    }
  }
}

std::vector<const MemoryEntry*> EpisodicMemory::retrieve(std::size_t n, Rng& rng) const {
  std::vector<const MemoryEntry*> all;
  for (const auto& [_, slot] : slots_)
    for (const auto& e : slot.entries) all.push_back(&e);
  if (all.empty() || n == 0) return {};
  if (n >= all.size()) return all;
  std::vector<const MemoryEntry*> out;
  for (auto i : rng.sample_without_replacement(all.size(), n)) out.push_back(all[i]);
  return out;
}

std::vector<const MemoryEntry*> EpisodicMemory::class_subset(int label, std::size_t k, Rng& rng) const {
  const auto& es = entries(label);
  std::vector<const MemoryEntry*> out;
  if (es.empty() || k == 0) return out;
  if (k >= es.size()) {
    for (const auto& e : es) out.push_back(&e);
    return out;
  }
  for (auto i : rng.sample_without_replacement(es.size(), k)) out.push_back(&es[i]);
  return out;
}

EpisodicMemory EpisodicMemory::restore(std::size_t capacity, std::map<int, ClassSlot> slots) {
  EpisodicMemory m(capacity);
  m.slots_ = std::move(slots);
  if (m.size() > capacity) throw std::invalid_argument("memory restore: entries exceed capacity");
  return m;
}

}  // namespace mire
