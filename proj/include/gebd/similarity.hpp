#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gebd/nn.hpp"
#include "gebd/tensor.hpp"

namespace gebd {

inline constexpr int kNumStreams = 12;

enum class MaskCell : uint8_t { Neutral = 0, Positive = 1, Negative = 2 };

// Ternary cell labeling of the L x L pair grid for one boundary class.
// A pair is a sample only when both indices are within local_range of each
// other, neither is a boundary, and they are distinct; it is positive when
// no boundary lies strictly between them and negative otherwise.
struct ContrastiveMask {
  int L = 0;
  int local_range = 0;
  std::vector<MaskCell> cells;  // L x L, row-major

  MaskCell at(int i, int j) const {
    return cells[static_cast<std::size_t>(i) * L + j];
  }
  int count(MaskCell kind) const;
};

ContrastiveMask build_contrastive_mask(const std::vector<int>& boundary_indices,
                                       int L, int w);

// Debug rendering: '+' positive, '-' negative, '0' neutral, '#' on the
// diagonal cell of a boundary index.
std::string render_mask(const ContrastiveMask& mask,
                        const std::vector<int>& boundary_indices);

// Cosine similarity between all row pairs. Zero-norm rows produce zero
// similarities and set *degenerate when provided.
Mat pairwise_similarity(const Mat& stream, bool* degenerate = nullptr);

// The 12-channel TSM consumed by the decoder; channel order ==stream order.
struct SimilarityStack {
  Ten3 tsm;  // 12 x L x L
};

SimilarityStack stack_tsm(const std::vector<Mat>& streams,
                          bool* degenerate = nullptr);

// Accumulates d(loss)/d(stream) for each stream given the gradient with
// respect to the stacked TSM.
void stack_tsm_backward(const std::vector<Mat>& streams,
                        const SimilarityStack& stack, const Ten3& dstack,
                        std::vector<Mat>& dstreams);

// Two pointwise conv layers with a ReLU between them; shape preserving.
struct SimSiamCtx {
  nn::Conv1dCtx c1, c2;
  Mat pre;
};

class SimSiamHead {
 public:
  SimSiamHead() = default;
  SimSiamHead(std::string name, int d, int hidden);
  void init(Rng& rng);
  void collect(nn::ParamList& out);

  Mat forward(const Mat& x, SimSiamCtx& ctx) const;
  Mat backward(const Mat& dy, const SimSiamCtx& ctx);

 private:
  nn::Conv1d c1_, c2_;
};

// Asymmetric similarity matrix for the contrastive term of one stream:
// sim[i][j] = cosine(target_i, projected_j). When stop_gradient is on the
// backward pass leaves the target branch untouched.
struct ContrastiveLossResult {
  double loss = 0.0;
  int active_streams = 0;  // streams with at least one positive and negative
  bool all_skipped = false;
};

// mean(negative sims) - mean(positive sims), averaged over active streams.
ContrastiveLossResult contrastive_loss(
    const std::vector<Mat>& sims, const std::vector<const ContrastiveMask*>& masks);

// d(loss)/d(sim entries); zero on neutral cells and on skipped streams.
std::vector<Mat> contrastive_loss_grad(
    const std::vector<Mat>& sims, const std::vector<const ContrastiveMask*>& masks);

}  // namespace gebd
