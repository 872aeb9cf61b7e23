#pragma once

#include <string>
#include <vector>

#include "gebd/data.hpp"
#include "gebd/jsonio.hpp"

namespace gebd {

struct PeakConfig {
  int k = 1;              // neighbor span
  double threshold = 0.3; // minimum probability kept

  void validate() const;
};

// Index t is a peak iff p[t] >= threshold and p[t] is strictly greater than
// every existing neighbor p[t +- j], j in 1..k. Missing neighbors at the
// edges impose no constraint; plateaus therefore never produce peaks.
std::vector<int> estimate_peaks(const std::vector<double>& p,
                                const PeakConfig& cfg);

std::vector<double> indices_to_timestamps(const std::vector<int>& indices,
                                          double snippet_rate);

struct PrfTriple {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Boundary matching with tolerance rel * duration: greedy over ground truth
// in time order, each taking the nearest unmatched prediction (ties go to
// the earlier one). Both lists empty scores (1,1,1); 0/0 ratios are 0.
PrfTriple f1_at_rel_dis(const std::vector<double>& pred,
                        const std::vector<double>& gt, double duration,
                        double rel);

struct BoundaryPrediction {
  std::string video_id;
  BoundaryClass cls = BoundaryClass::Whole;
  std::vector<double> timestamps;
};

void write_predictions(const std::string& path,
                       const std::vector<BoundaryPrediction>& preds);
std::vector<BoundaryPrediction> read_predictions(const std::string& path);

struct VideoEval {
  std::string video_id;
  int num_pred = 0;
  int num_gt = 0;
  std::vector<PrfTriple> at_rel;  // aligned with EvalReport::rels
};

struct EvalReport {
  BoundaryClass cls = BoundaryClass::Whole;
  std::vector<double> rels;
  std::vector<VideoEval> videos;
  std::vector<PrfTriple> means;  // unweighted over videos, per rel
  long total_pred = 0;
  long total_gt = 0;

  ordered_json to_json() const;
  std::string table() const;
};

// Scores the predictions of the chosen class against their annotations.
// Every scored prediction must have an annotation (input error otherwise);
// dataset means are unweighted over videos.
EvalReport evaluate_dataset(const std::vector<BoundaryPrediction>& preds,
                            const std::vector<BoundaryAnnotation>& anns,
                            const std::vector<double>& rels,
                            BoundaryClass cls = BoundaryClass::Whole);

}  // namespace gebd
