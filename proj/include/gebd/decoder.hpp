#pragma once

#include <array>
#include <string>
#include <vector>

#include "gebd/data.hpp"
#include "gebd/nn.hpp"
#include "gebd/tensor.hpp"

namespace gebd {

struct DecoderConfig {
  int c_decoder = 64;
  std::array<int, 4> stage_widths{32, 32, 64, 64};
  int blocks_per_stage = 1;

  void validate() const;  // c_decoder must equal stage_widths.back()
};

struct TsmDecoderCtx {
  nn::Conv2dCtx stem;
  Ten3 stem_pre;
  std::vector<nn::ResBlock2dCtx> blocks;
};

// Residual 2-D stack over the 12-channel TSM. Stride 1 everywhere and no
// pooling, so the L x L extent survives to the diagonal gather.
class TsmDecoder {
 public:
  TsmDecoder() = default;
  TsmDecoder(std::string name, const DecoderConfig& cfg);
  void init(Rng& rng);
  void collect(nn::ParamList& out);

  Ten3 forward(const Ten3& stack, TsmDecoderCtx& ctx) const;  // 12xLxL -> CxLxL
  Ten3 backward(const Ten3& dy, const TsmDecoderCtx& ctx);

  const DecoderConfig& config() const { return cfg_; }

 private:
  DecoderConfig cfg_;
  nn::Conv2d stem_;
  std::vector<nn::ResBlock2d> blocks_;
};

// out.at(k, c) = t[c][k][k]; rows index time, columns index channels so the
// result feeds the 1-D head directly.
Mat gather_diagonal(const Ten3& t);
// Scatters d(out) back onto the diagonal of a zero tensor shaped like t.
Ten3 gather_diagonal_backward(const Mat& dout, const Ten3& like);

struct TsmHeadCtx {
  nn::Conv1dCtx c1, c2;
  Mat pre;
  Mat probs;
};

// Shallow 1-D head: conv(k=3) -> ReLU -> conv(k=1) -> logistic. Output is
// L x 3 probabilities, columns ordered action / shot / whole.
class TsmHead {
 public:
  TsmHead() = default;
  TsmHead(std::string name, int cin, int hidden);
  void init(Rng& rng);
  void collect(nn::ParamList& out);

  Mat forward(const Mat& diag, TsmHeadCtx& ctx) const;
  // dprobs is d(loss)/d(probabilities); returns d(loss)/d(diag).
  Mat backward(const Mat& dprobs, const TsmHeadCtx& ctx);

 private:
  nn::Conv1d c1_, c2_;
};

struct DirectHeadCtx {
  Mat concat;
  nn::TransformerEncoderCtx tf;
  nn::DenseCtx out;
  Mat probs;
};

// Concatenates the 12 streams feature-wise (L x 12*d_enc), runs a small
// transformer encoder at that width, then a logistic layer per class.
class DirectHead {
 public:
  DirectHead() = default;
  DirectHead(std::string name, int d_enc, int tf_layers, int tf_heads);
  void init(Rng& rng);
  void collect(nn::ParamList& out);

  Mat forward(const std::vector<Mat>& streams, DirectHeadCtx& ctx) const;
  // Returns d(loss)/d(stream) for each of the 12 streams.
  std::vector<Mat> backward(const Mat& dprobs, const DirectHeadCtx& ctx);

 private:
  int d_enc_ = 0;
  nn::TransformerEncoder tf_;
  nn::Dense out_;
};

struct PassPredictions {
  Mat p_tsm;     // L x 3, columns action / shot / whole
  Mat p_direct;  // L x 3
  Mat p_final;   // L x 3
  std::array<double, 3> alpha{0.5, 0.5, 0.5};
};

// alpha[c] = logistic(raw_alpha[c]); p_final = alpha*p_tsm + (1-alpha)*p_direct.
PassPredictions combine(const Mat& p_tsm, const Mat& p_direct,
                        const std::array<double, 3>& raw_alpha);

// Accumulates d(loss)/d(p_tsm), d(p_direct) and d(raw_alpha) given
// d(loss)/d(p_final).
void combine_backward(const PassPredictions& preds, const Mat& dfinal,
                      Mat& dtsm, Mat& ddirect,
                      std::array<double, 3>& draw_alpha);

struct LossWeights {
  double action = 1.0;
  double shot = 1.0;
  double whole = 1.0;
  double lambda_contra = 1.0;
};

inline constexpr double kBceEps = 1e-7;

// Per-class mean BCE of p_final against the labels (probabilities clamped
// to [eps, 1-eps]), weighted and summed, plus lambda_contra * l_contra.
double total_loss(const PassPredictions& preds, const LabelSeries& labels,
                  double l_contra, const LossWeights& w);

// d(total_loss)/d(p_final) with class weights applied; the clamp zeroes the
// derivative outside [eps, 1-eps]. The contrastive term is handled by its
// own gradient path.
Mat total_loss_grad(const PassPredictions& preds, const LabelSeries& labels,
                    const LossWeights& w);

// Smoothed-target variant used by the trainer (targets in [0,1] per class).
double total_loss_soft(const PassPredictions& preds,
                       const std::array<std::vector<double>, 3>& targets,
                       double l_contra, const LossWeights& w);
Mat total_loss_soft_grad(const PassPredictions& preds,
                         const std::array<std::vector<double>, 3>& targets,
                         const LossWeights& w);

}  // namespace gebd
