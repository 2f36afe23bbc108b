#include "mire/report.hpp"

#include <cstdio>
#include <stdexcept>

namespace mire {

using nlohmann::json;

namespace {

const char* provenance_name(MeanProvenance p) {
  switch (p) {
    case MeanProvenance::memory_mean: return "memory-mean";
    case MeanProvenance::corrected_prototype: return "corrected-prototype";
    case MeanProvenance::true_holdout: return "true-holdout";
  }
  return "?";
}

MeanProvenance parse_provenance(const std::string& s) {
  for (auto p : {MeanProvenance::memory_mean, MeanProvenance::corrected_prototype, MeanProvenance::true_holdout})
    if (s == provenance_name(p)) return p;
  throw std::invalid_argument("unknown mean provenance '" + s + "'");
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json to_json(const ClassMeans& means) {
  json out = json::array();
  for (std::size_t k = 0; k < means.size(); ++k)
    out.push_back({{"class", means.classes[k]}, {"mean", means.means[k]}, {"provenance", provenance_name(means.provenance[k])}});
  return out;
}

ClassMeans class_means_from_json(const json& j) {
  ClassMeans m;
  for (const auto& e : j) {
    m.classes.push_back(e.at("class").get<int>());
    m.means.push_back(e.at("mean").get<Vec>());
    m.provenance.push_back(parse_provenance(e.at("provenance").get<std::string>()));
  }
  return m;
}

json to_json(const Snapshot& snap) {
  json var = json::object();
  for (const auto& [c, v] : snap.feature_variance) var[std::to_string(c)] = v;
  return {{"task", snap.task},
          {"iteration", snap.iteration},
          {"task_accuracy", snap.task_accuracy},
          {"ncm_means", to_json(snap.ncm_means)},
          {"corrected_means", to_json(snap.corrected_means)},
          {"true_means", to_json(snap.true_means)},
          {"feature_variance", var}};
}

Snapshot snapshot_from_json(const json& j) {
  Snapshot s;
  s.task = j.at("task").get<std::size_t>();
  s.iteration = j.at("iteration").get<std::uint64_t>();
  s.task_accuracy = j.at("task_accuracy").get<std::vector<double>>();
  s.ncm_means = class_means_from_json(j.at("ncm_means"));
  s.corrected_means = class_means_from_json(j.at("corrected_means"));
  s.true_means = class_means_from_json(j.at("true_means"));
  for (const auto& [k, v] : j.at("feature_variance").items()) s.feature_variance[std::stoi(k)] = v.get<double>();
  return s;
}

json to_json(const RunRecord& rec) {
  json snaps = json::array();
  for (const auto& s : rec.snapshots) snaps.push_back(to_json(s));
  return {{"label", rec.label},
          {"seed", rec.seed},
          {"loss_trace", rec.loss_trace},
          {"accuracy", rec.accuracy.rows()},
          {"snapshots", snaps}};
}

RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  r.label = j.at("label").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.loss_trace = j.at("loss_trace").get<std::vector<double>>();
  r.accuracy = AccuracyMatrix::from_rows(j.at("accuracy").get<std::vector<std::vector<double>>>());
  for (const auto& s : j.at("snapshots")) r.snapshots.push_back(snapshot_from_json(s));
  return r;
}

}  // namespace mire
