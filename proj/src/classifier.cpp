#include "mire/classifier.hpp"

#include <limits>
#include <stdexcept>
#include <string>

#include "mire/kernels.hpp"

namespace mire {

const char* to_string(MeanMode mode) { return mode == MeanMode::ncm ? "ncm" : "corrected"; }

const Vec& ClassMeans::of(int label) const {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == label) return means[i];
  throw std::out_of_range("ClassMeans: no mean for class " + std::to_string(label));
}

ClassMeans build_means(const EpisodicMemory& memory, const Extractor& extractor, MeanMode mode,
                       const PrototypeTable* prototypes) {
  if (mode == MeanMode::corrected && prototypes == nullptr)
    throw std::invalid_argument("build_means: corrected mode needs prototypes");
  ClassMeans out;
  for (int c : memory.seen_classes()) {
    const auto& entries = memory.entries(c);
    if (entries.empty())
      throw std::invalid_argument("build_means: class " + std::to_string(c) + " has no memory entries");
    std::vector<Vec> xs, zs;
    for (const auto& e : entries) {
      xs.push_back(e.sample.x);
      zs.push_back(e.z_stored);
    }
    Vec current = normalized(mean_of(extractor.features_of(xs)));
    Vec mean = current;
    auto provenance = MeanProvenance::memory_mean;
    if (mode == MeanMode::corrected) {
      Vec stored = normalized(mean_of(zs));
      if (auto fixed = corrected_mean(prototypes->at(c), stored, current)) {
        mean = std::move(*fixed);
        provenance = MeanProvenance::corrected_prototype;
      }
    }
    out.classes.push_back(c);
    out.means.push_back(std::move(mean));
    out.provenance.push_back(provenance);
  }
  return out;
}

ClassMeans true_means(const Dataset& eval, std::span<const int> classes, const Extractor& extractor) {
  ClassMeans out;
  for (int c : classes) {
    const auto& rows = eval.by_class.at(static_cast<std::size_t>(c));
    out.classes.push_back(c);
    out.means.push_back(normalized(mean_of(extractor.features_of(rows))));
    out.provenance.push_back(MeanProvenance::true_holdout);
  }
  return out;
}

int predict(const ClassMeans& means, std::span<const double> feature) {
  if (means.size() == 0) throw std::invalid_argument("predict: no class means");
  int best = means.classes[0];
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < means.size(); ++k) {
    double d = 0.0;
    for (std::size_t i = 0; i < feature.size(); ++i) d += (feature[i] - means.means[k][i]) * (feature[i] - means.means[k][i]);
    if (d < best_d || (d == best_d && means.classes[k] < best)) {
      best_d = d;
      best = means.classes[k];
    }
  }
  return best;
}

int predict(const ClassMeans& means, std::span<const double> x, const Extractor& extractor) {
  auto f = extractor.features_of({Vec(x.begin(), x.end())});
  return predict(means, f.front());
}

int predict_cosine(const ClassMeans& means, std::span<const double> feature) {
  if (means.size() == 0) throw std::invalid_argument("predict_cosine: no class means");
  int best = means.classes[0];
  double best_s = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double s = dot(feature, means.means[k]) / (norm(feature) * norm(means.means[k]));
    if (s > best_s || (s == best_s && means.classes[k] < best)) {
      best_s = s;
      best = means.classes[k];
    }
  }
  return best;
}

std::vector<int> predict_batch(const ClassMeans& means, const std::vector<Vec>& features) {
  if (means.size() == 0) throw std::invalid_argument("predict_batch: no class means");
  if (features.empty()) return {};
  const std::size_t e = means.means.front().size();
  std::vector<double> q, m;
  for (const auto& f : features) q.insert(q.end(), f.begin(), f.end());
  for (const auto& mu : means.means) m.insert(m.end(), mu.begin(), mu.end());
  // classes are ascending, so the kernel's lowest-index tie-break is the
  // lowest-class-id rule.
  auto idx = kernels::parallel::nearest_rows(q, m, features.size(), means.size(), e);
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = means.classes[idx[i]];
  return out;
}

double Evaluation::accuracy() const {
  std::size_t c = 0, t = 0;
  for (const auto& [label, n] : total) {
    t += n;
    c += correct.at(label);
  }
  return t == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(t);
}

double Evaluation::accuracy(int label) const {
  const auto n = total.at(label);
  return n == 0 ? 0.0 : static_cast<double>(correct.at(label)) / static_cast<double>(n);
}

double Evaluation::accuracy(std::span<const int> labels) const {
  std::size_t c = 0, t = 0;
  for (int label : labels) {
    t += total.at(label);
    c += correct.at(label);
  }
  return t == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(t);
}

Evaluation evaluate_features(const ClassMeans& means, const std::map<int, std::vector<Vec>>& features) {
  Evaluation ev;
  for (const auto& [label, rows] : features) {
    auto preds = predict_batch(means, rows);
    std::size_t ok = 0;
    for (int p : preds) ok += (p == label) ? 1 : 0;
    ev.correct[label] = ok;
    ev.total[label] = rows.size();
  }
  return ev;
}

Evaluation evaluate(const ClassMeans& means, const Extractor& extractor, const Dataset& eval,
                    std::span<const int> classes) {
  std::map<int, std::vector<Vec>> features;
  for (int c : classes) {
    const auto& rows = eval.by_class.at(static_cast<std::size_t>(c));
    if (rows.empty()) throw std::invalid_argument("evaluate: empty evaluation set for class " + std::to_string(c));
    features[c] = extractor.features_of(rows);
  }
  return evaluate_features(means, features);
}

}  // namespace mire
