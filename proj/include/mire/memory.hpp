#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "mire/rng.hpp"
#include "mire/stream.hpp"

namespace mire {

struct MemoryEntry {
  Sample sample;
  /// Unit classification feature recorded when the sample was stored.
  Vec z_stored;
  std::uint64_t insert_iteration = 0;
  bool operator==(const MemoryEntry&) const = default;
};

/// Class-balanced episodic memory. Capacity K is split evenly over the seen
/// classes (remainder to the lowest class ids) and each class slice is kept
/// by its own reservoir sampler.
class EpisodicMemory {
 public:
  struct ClassSlot {
    std::vector<MemoryEntry> entries;
    /// Lifetime count of class samples offered to the reservoir.
    std::uint64_t seen = 0;
    bool operator==(const ClassSlot&) const = default;
  };

  explicit EpisodicMemory(std::size_t capacity = 0) : capacity_(capacity) {}

  /// Offers every sample of `batch` (with its row-aligned unit feature) to
  /// its class reservoir. Unseen classes shrink the quotas; overfull classes
  /// are trimmed by uniform random eviction.
  void update(const Batch& batch, const std::vector<Vec>& features, std::uint64_t iteration, Rng& rng);

  /// n entries uniformly without replacement over the whole memory (all if
  /// fewer exist; empty when the memory is empty).
  std::vector<const MemoryEntry*> retrieve(std::size_t n, Rng& rng) const;

  /// min(k, |M_c|) uniform entries of class c; empty for an absent class.
  std::vector<const MemoryEntry*> class_subset(int label, std::size_t k, Rng& rng) const;

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  std::size_t quota(int label) const;

  /// Seen classes in ascending id order.
  std::vector<int> seen_classes() const;
  /// Classes currently holding at least one entry, ascending.
  std::vector<int> stored_classes() const;
  const std::vector<MemoryEntry>& entries(int label) const;

  const std::map<int, ClassSlot>& slots() const { return slots_; }
  static EpisodicMemory restore(std::size_t capacity, std::map<int, ClassSlot> slots);

  bool operator==(const EpisodicMemory&) const = default;

 private:
  void admit_class(int label, Rng& rng);

  std::size_t capacity_;
  std::map<int, ClassSlot> slots_;
};

}  // namespace mire
