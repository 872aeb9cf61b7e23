#include "gebd/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gebd/errors.hpp"

namespace gebd {

void PeakConfig::validate() const {
  if (k < 1) throw ConfigError("peak neighbor span must be >= 1");
  if (threshold < 0.0 || threshold > 1.0)
    throw ConfigError("peak threshold must lie in [0, 1]");
}

std::vector<int> estimate_peaks(const std::vector<double>& p,
                                const PeakConfig& cfg) {
  cfg.validate();
  const int L = static_cast<int>(p.size());
  std::vector<int> peaks;
  for (int t = 0; t < L; ++t) {
    if (p[static_cast<std::size_t>(t)] < cfg.threshold) continue;
    bool is_peak = true;
    for (int j = 1; j <= cfg.k && is_peak; ++j) {
      if (t - j >= 0 && !(p[static_cast<std::size_t>(t)] > p[static_cast<std::size_t>(t - j)]))
        is_peak = false;
      if (t + j < L && !(p[static_cast<std::size_t>(t)] > p[static_cast<std::size_t>(t + j)]))
        is_peak = false;
    }
    if (is_peak) peaks.push_back(t);
  }
  return peaks;
}

std::vector<double> indices_to_timestamps(const std::vector<int>& indices,
                                          double snippet_rate) {
  if (snippet_rate <= 0.0) throw ConfigError("snippet_rate must be positive");
  std::vector<double> ts;
  ts.reserve(indices.size());
  for (int i : indices) ts.push_back(i / snippet_rate);
  std::sort(ts.begin(), ts.end());
  return ts;
}

PrfTriple f1_at_rel_dis(const std::vector<double>& pred,
                        const std::vector<double>& gt, double duration,
                        double rel) {
  if (duration <= 0.0) throw ConfigError("duration must be positive");
  if (rel <= 0.0) throw ConfigError("rel threshold must be positive");
  if (pred.empty() && gt.empty()) return {1.0, 1.0, 1.0};
  const double tau = rel * duration;
  std::vector<char> used(pred.size(), 0);
  int matches = 0;
  for (double g : gt) {
    int best = -1;
    double best_dist = tau;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (used[i]) continue;
      const double dist = std::abs(pred[i] - g);
      // <= keeps the earlier prediction on exact ties (pred is sorted)
      if (dist < best_dist || (best < 0 && dist <= best_dist)) {
        best = static_cast<int>(i);
        best_dist = dist;
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = 1;
      ++matches;
    }
  }
  PrfTriple out;
  out.precision = pred.empty() ? 0.0 : static_cast<double>(matches) / pred.size();
  out.recall = gt.empty() ? 0.0 : static_cast<double>(matches) / gt.size();
  out.f1 = (out.precision + out.recall) > 0.0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

void write_predictions(const std::string& path,
                       const std::vector<BoundaryPrediction>& preds) {
  ordered_json arr = ordered_json::array();
  for (const BoundaryPrediction& p : preds) {
    ordered_json o;
    o["video_id"] = p.video_id;
    o["class"] = class_name(p.cls);
    o["timestamps"] = p.timestamps;
    arr.push_back(std::move(o));
  }
  write_text_file(path, arr.dump(2) + "\n");
}

std::vector<BoundaryPrediction> read_predictions(const std::string& path) {
  const ordered_json arr = parse_json_file(path);
  if (!arr.is_array()) throw FormatError(path + ": expected a JSON array");
  std::vector<BoundaryPrediction> out;
  out.reserve(arr.size());
  for (const auto& o : arr) {
    BoundaryPrediction p;
    try {
      p.video_id = o.at("video_id").get<std::string>();
      p.cls = class_from_name(o.at("class").get<std::string>());
      p.timestamps = o.at("timestamps").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": bad prediction entry: " + e.what());
    }
    std::sort(p.timestamps.begin(), p.timestamps.end());
    out.push_back(std::move(p));
  }
  return out;
}

EvalReport evaluate_dataset(const std::vector<BoundaryPrediction>& preds,
                            const std::vector<BoundaryAnnotation>& anns,
                            const std::vector<double>& rels,
                            BoundaryClass cls) {
  if (rels.empty()) throw ConfigError("need at least one rel threshold");
  for (double r : rels)
    if (r <= 0.0) throw ConfigError("rel thresholds must be positive");

  EvalReport rep;
  rep.cls = cls;
  rep.rels = rels;
  for (const BoundaryPrediction& p : preds) {
    if (p.cls != cls) continue;
    const BoundaryAnnotation* ann = nullptr;
    for (const BoundaryAnnotation& a : anns)
      if (a.video_id == p.video_id) {
        ann = &a;
        break;
      }
    if (!ann)
      throw InputError("no annotation for video '" + p.video_id + "'");
    const std::vector<double>& gt = ann->boundaries(cls);
    VideoEval ve;
    ve.video_id = p.video_id;
    ve.num_pred = static_cast<int>(p.timestamps.size());
    ve.num_gt = static_cast<int>(gt.size());
    for (double r : rels)
      ve.at_rel.push_back(f1_at_rel_dis(p.timestamps, gt, ann->duration, r));
    rep.total_pred += ve.num_pred;
    rep.total_gt += ve.num_gt;
    rep.videos.push_back(std::move(ve));
  }
  // Canonical order: the report must not depend on prediction file order.
  std::sort(rep.videos.begin(), rep.videos.end(),
            [](const VideoEval& a, const VideoEval& b) {
              return a.video_id < b.video_id;
            });
  for (std::size_t i = 1; i < rep.videos.size(); ++i)
    if (rep.videos[i].video_id == rep.videos[i - 1].video_id)
      throw InputError("duplicate prediction entry for video '" +
                       rep.videos[i].video_id + "'");

  rep.means.assign(rels.size(), PrfTriple{});
  if (!rep.videos.empty()) {
    for (const VideoEval& ve : rep.videos)
      for (std::size_t r = 0; r < rels.size(); ++r) {
        rep.means[r].precision += ve.at_rel[r].precision;
        rep.means[r].recall += ve.at_rel[r].recall;
        rep.means[r].f1 += ve.at_rel[r].f1;
      }
    for (PrfTriple& m : rep.means) {
      m.precision /= rep.videos.size();
      m.recall /= rep.videos.size();
      m.f1 /= rep.videos.size();
    }
  }
  return rep;
}

namespace {

ordered_json prf_json(double rel, const PrfTriple& t) {
  ordered_json o;
  o["rel"] = rel;
  o["precision"] = t.precision;
  o["recall"] = t.recall;
  o["f1"] = t.f1;
  return o;
}

}  // namespace

ordered_json EvalReport::to_json() const {
  ordered_json j;
  j["class"] = class_name(cls);
  j["num_videos"] = videos.size();
  j["total_predictions"] = total_pred;
  j["total_ground_truth"] = total_gt;
  j["mean"] = ordered_json::array();
  for (std::size_t r = 0; r < rels.size(); ++r)
    j["mean"].push_back(prf_json(rels[r], means[r]));
  j["videos"] = ordered_json::array();
  for (const VideoEval& ve : videos) {
    ordered_json o;
    o["video_id"] = ve.video_id;
    o["num_pred"] = ve.num_pred;
    o["num_gt"] = ve.num_gt;
    o["metrics"] = ordered_json::array();
    for (std::size_t r = 0; r < rels.size(); ++r)
      o["metrics"].push_back(prf_json(rels[r], ve.at_rel[r]));
    j["videos"].push_back(std::move(o));
  }
  return j;
}

std::string EvalReport::table() const {
  char line[160];
  std::snprintf(line, sizeof(line), "class=%s videos=%zu pred=%ld gt=%ld\n",
                class_name(cls), videos.size(), total_pred, total_gt);
  std::string out = line;
  for (std::size_t r = 0; r < rels.size(); ++r) {
    std::snprintf(line, sizeof(line),
                  "  rel=%.3f  precision=%.4f  recall=%.4f  f1=%.4f\n", rels[r],
                  means[r].precision, means[r].recall, means[r].f1);
    out += line;
  }
  return out;
}

}  // namespace gebd
