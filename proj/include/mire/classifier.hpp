#pragma once

#include <map>
#include <span>

#include "mire/memory.hpp"
#include "mire/model.hpp"
#include "mire/prototypes.hpp"

namespace mire {

enum class MeanMode { ncm, corrected };
enum class MeanProvenance { memory_mean, corrected_prototype, true_holdout };

const char* to_string(MeanMode mode);

/// Unit class means, ordered by class id.
struct ClassMeans {
  std::vector<int> classes;
  std::vector<Vec> means;
  std::vector<MeanProvenance> provenance;

  std::size_t size() const { return classes.size(); }
  const Vec& of(int label) const;
};

/// Class means from memory. ncm: normalized average of current features of
/// M_c. corrected: normalize(p_c - zbar_c + m_c) with zbar_c the normalized
/// average of the stored features (falls back to m_c when that vector
/// vanishes). Every seen class must have at least one memory entry.
ClassMeans build_means(const EpisodicMemory& memory, const Extractor& extractor, MeanMode mode,
                       const PrototypeTable* prototypes = nullptr);

/// Normalized average feature of each class's evaluation samples.
ClassMeans true_means(const Dataset& eval, std::span<const int> classes, const Extractor& extractor);

/// Nearest mean by Euclidean distance; ties go to the lowest class id.
int predict(const ClassMeans& means, std::span<const double> feature);
int predict(const ClassMeans& means, std::span<const double> x, const Extractor& extractor);
/// Highest cosine similarity; agrees with predict() on unit vectors.
int predict_cosine(const ClassMeans& means, std::span<const double> feature);
std::vector<int> predict_batch(const ClassMeans& means, const std::vector<Vec>& features);

struct Evaluation {
  std::map<int, std::size_t> correct;
  std::map<int, std::size_t> total;

  double accuracy() const;
  double accuracy(int label) const;
  /// Pooled accuracy over a group of classes (a task).
  double accuracy(std::span<const int> labels) const;
};

/// Single-head evaluation: every sample is classified against all means.
Evaluation evaluate(const ClassMeans& means, const Extractor& extractor, const Dataset& eval,
                    std::span<const int> classes);
/// Same, with precomputed features per class.
Evaluation evaluate_features(const ClassMeans& means, const std::map<int, std::vector<Vec>>& features);

}  // namespace mire
