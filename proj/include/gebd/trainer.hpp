#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "gebd/data.hpp"
#include "gebd/model.hpp"
#include "gebd/postprocess.hpp"

namespace gebd {

struct TrainConfig {
  int epochs = 8;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  uint64_t seed = 0;
  int local_range = 4;  // contrastive mask span
  LossWeights weights;
  int videos_per_step = 1;     // gradient accumulation group size
  int label_smooth_width = 1;  // triangular target ramp radius
  std::vector<double> eval_rels{0.05};
  int patience = 3;  // epochs without val-F1 gain before stopping
  PeakConfig peaks;  // post-processing used for model selection

  void validate() const;
  ordered_json to_json() const;
  static TrainConfig from_json(const ordered_json& j);
};

// One row of the per-epoch bookkeeping. Deliberately free of wall-clock
// fields so checkpoints stay bitwise reproducible.
struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_contra = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
};

struct TensorBlob {
  std::string name;
  std::vector<int> shape;
  std::vector<double> v;
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  int fold_index = 0;
  int best_epoch = -1;
  double best_val_f1 = 0.0;
  std::vector<EpochMetrics> history;
  std::vector<TensorBlob> tensors;
};

// Binary container, magic "GEBC": length-prefixed JSON meta block followed
// by named little-endian f64 parameter blobs. Save/load round-trips the
// file bytes exactly.
void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

// Builds the model described by the checkpoint and installs its weights.
GebdModel model_from_checkpoint(const Checkpoint& ck);

// Feature sequences paired with annotations by video_id.
struct Dataset {
  std::vector<FeatureSequence> features;
  std::vector<BoundaryAnnotation> annotations;

  const FeatureSequence& features_of(const std::string& id) const;
  const BoundaryAnnotation& annotation_of(const std::string& id) const;
  std::vector<std::string> ids() const;
};

Dataset load_dataset(const std::string& dir);
void save_dataset(const std::string& dir, const Dataset& data);

// Trains one fold to convergence and returns the epoch snapshot with the
// best validation F1 (whole class, eval_rels.front(), config peaks).
// metrics_path, when nonempty, receives one JSON line per epoch. log, when
// given, receives human-readable progress.
Checkpoint train_fold(const Dataset& data, const DatasetSplit& split,
                      const ModelConfig& mcfg, const TrainConfig& tcfg,
                      const std::string& metrics_path = "",
                      std::ostream* log = nullptr);

// Forward pass on one sequence; validates the feature dimension.
PassPredictions predict_sequence(const GebdModel& model,
                                 const FeatureSequence& fs);

// Elementwise mean of per-fold probability arrays.
Mat ensemble_average(const std::vector<Mat>& probs);

}  // namespace gebd
