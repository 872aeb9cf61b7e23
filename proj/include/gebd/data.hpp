#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gebd/tensor.hpp"

namespace gebd {

enum class BoundaryClass { Action = 0, Shot = 1, Whole = 2 };

inline constexpr int kNumClasses = 3;

const char* class_name(BoundaryClass c);
BoundaryClass class_from_name(const std::string& name);

// Per-video snippet feature matrix plus metadata. Features are stored as
// f32 to match the on-disk format exactly.
struct FeatureSequence {
  std::string video_id;
  double snippet_rate = 1.0;  // snippets per second
  double duration = 0.0;      // seconds
  int L = 0;
  int D = 0;
  std::vector<float> features;  // L x D, row-major

  Mat as_mat() const;

  // Throws InputError when an invariant is broken.
  void validate() const;
};

// Boundary timestamps (seconds) for the three classes. whole_boundaries is
// always derived from action + shot, never stored on disk.
struct BoundaryAnnotation {
  std::string video_id;
  double duration = 0.0;
  std::vector<double> action_boundaries;
  std::vector<double> shot_boundaries;
  std::vector<double> whole_boundaries;

  const std::vector<double>& boundaries(BoundaryClass c) const;
  void validate() const;
};

// Sorted union of action and shot with near-duplicates (within merge_eps
// seconds) collapsed to their first occurrence.
std::vector<double> derive_whole(const std::vector<double>& action,
                                 const std::vector<double>& shot,
                                 double merge_eps);

// Per-class binary label vectors of length L.
struct LabelSeries {
  std::array<std::vector<uint8_t>, kNumClasses> y;

  const std::vector<uint8_t>& of(BoundaryClass c) const {
    return y[static_cast<int>(c)];
  }
  int length() const { return static_cast<int>(y[0].size()); }
};

// label[c][k] = 1 iff some class-c boundary rounds to snippet k.
LabelSeries snippetize_labels(const BoundaryAnnotation& ann, int L,
                              double snippet_rate);

std::vector<int> label_indices(const LabelSeries& labels, BoundaryClass c);

// Soft targets with a symmetric triangular ramp of the given width around
// each boundary index. width = 0 reproduces the hard labels.
std::vector<double> label_targets(const LabelSeries& labels, BoundaryClass c,
                                  int smooth_width);

struct DatasetSplit {
  int fold_index = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

// Deterministic shuffle, then k nearly equal groups; group g is the
// validation set of fold g.
std::vector<DatasetSplit> make_folds(const std::vector<std::string>& video_ids,
                                     int k, uint64_t seed);

struct SynthConfig {
  int l_min = 40;
  int l_max = 80;
  int dim = 64;
  int segments_min = 2;
  int segments_max = 5;
  int min_gap = 4;            // snippets between consecutive boundaries
  double noise = 0.3;         // additive Gaussian scale (per coordinate)
  double snippet_rate = 1.0;  // snippets per second
  double base_scale = 2.0;    // norm of segment mean vectors
  double action_shift = 1.5;  // mean shift at an action boundary
  double shot_scale = 3.0;    // norm of the re-drawn mean at a shot boundary
  double p_shot = 0.5;

  void validate() const;
};

// Piecewise-stationary sequences with mean shifts at annotated boundaries.
// Deterministic given seed; video i depends only on (seed, i).
std::pair<std::vector<FeatureSequence>, std::vector<BoundaryAnnotation>>
generate_synthetic_dataset(int num_videos, uint64_t seed, const SynthConfig& cfg);

// Binary feature file ("GEBF"): see README for the exact layout.
void write_feature_file(const std::string& path, const FeatureSequence& fs);
FeatureSequence read_feature_file(const std::string& path);

// Annotation JSON: array of {video_id, duration, action_boundaries,
// shot_boundaries}. whole is re-derived on load (merge_eps seconds).
void write_annotations(const std::string& path,
                       const std::vector<BoundaryAnnotation>& anns);
std::vector<BoundaryAnnotation> read_annotations(const std::string& path,
                                                 double merge_eps = 0.0);

}  // namespace gebd
